#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "relcot/lora.hpp"

using namespace relcot::nn;

namespace {

LoraLinear make_layer(Rng& rng, std::size_t d, std::size_t k, const LoraConfig& config) {
    LoraLinear layer;
    layer.name = "test_proj";
    layer.weight = Tensor::zeros({d, k});
    rng.fill_uniform(layer.weight, -0.5, 0.5);
    layer.adapter = LoraAdapter::init(d, k, config, rng);
    return layer;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

}  // namespace

TEST_CASE("lora config validation") {
    CHECK_NOTHROW(LoraConfig{}.validate());
    CHECK_THROWS_AS((LoraConfig{0, 32.0, 0.1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((LoraConfig{8, 0.0, 0.1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((LoraConfig{8, 32.0, 1.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((LoraConfig{8, 32.0, -0.1}.validate()), std::invalid_argument);
}

TEST_CASE("shipped adapter defaults") {
    const LoraConfig config;
    CHECK(config.r == 24);
    CHECK(config.alpha == 32.0);
    CHECK(config.dropout_p == 0.1);
}

TEST_CASE("fresh adapters start as exact no-ops") {
    Rng rng(1);
    const LoraConfig config{4, 16.0, 0.0};
    const auto layer = make_layer(rng, 6, 5, config);
    const auto& adapter = *layer.adapter;
    CHECK(adapter.A.shape == std::vector<std::size_t>{4, 5});
    CHECK(adapter.B.shape == std::vector<std::size_t>{6, 4});
    CHECK(adapter.B.data == std::vector<double>(24, 0.0));
    CHECK(adapter.scaling() == 4.0);

    auto x = Tensor::zeros({3, 5});
    rng.fill_uniform(x, -1.0, 1.0);
    LoraLinear bare = layer;
    bare.adapter.reset();
    CHECK(lora_forward(x, layer) == lora_forward(x, bare));
}

TEST_CASE("adapter init rejects rank above min(d, k)") {
    Rng rng(2);
    CHECK_THROWS_AS(LoraAdapter::init(4, 3, LoraConfig{4, 8.0, 0.0}, rng),
                    std::invalid_argument);
    CHECK_NOTHROW(LoraAdapter::init(4, 3, LoraConfig{3, 8.0, 0.0}, rng));
}

TEST_CASE("adapted forward equals base plus scaled low-rank path") {
    Rng rng(3);
    const LoraConfig config{3, 12.0, 0.0};
    auto layer = make_layer(rng, 7, 4, config);
    auto& adapter = *layer.adapter;
    rng.fill_uniform(adapter.B, -0.3, 0.3);  // non-trivial adapter path

    auto x = Tensor::zeros({5, 4});
    rng.fill_uniform(x, -1.0, 1.0);
    const auto y = lora_forward(x, layer);

    auto expected = matmul_nt(x, layer.weight);
    const auto u = matmul_nt(x, adapter.A);
    add_matmul_nt(expected, u, adapter.B, adapter.scaling());
    CHECK(max_abs_diff(y, expected) < 1e-12);
}

TEST_CASE("merged weights reproduce the eval-mode adapted forward") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 2 + rng.bounded(10);
        const std::size_t k = 2 + rng.bounded(10);
        const std::size_t r = 1 + rng.bounded(std::min(d, k));
        const LoraConfig config{r, 1.0 + rng.uniform(0.0, 63.0), 0.0};
        auto layer = make_layer(rng, d, k, config);
        rng.fill_uniform(layer.adapter->B, -0.5, 0.5);

        auto x = Tensor::zeros({3, k});
        rng.fill_uniform(x, -1.0, 1.0);

        LoraLinear merged;
        merged.name = layer.name;
        merged.weight = merge_adapter(layer);
        CHECK(max_abs_diff(lora_forward(x, layer), lora_forward(x, merged)) < 1e-9);
    }
}

TEST_CASE("merge without an adapter copies the base weight") {
    Rng rng(5);
    auto layer = make_layer(rng, 4, 4, LoraConfig{2, 4.0, 0.0});
    layer.adapter.reset();
    CHECK(merge_adapter(layer) == layer.weight);
}

TEST_CASE("dropout runs only in training mode and only on the adapter path") {
    Rng rng(6);
    auto layer = make_layer(rng, 6, 6, LoraConfig{2, 8.0, 0.5});
    rng.fill_uniform(layer.adapter->B, -0.5, 0.5);
    auto x = Tensor::zeros({4, 6});
    rng.fill_uniform(x, -1.0, 1.0);

    SUBCASE("eval mode is deterministic without an rng") {
        const auto y1 = lora_forward(x, layer);
        const auto y2 = lora_forward(x, layer);
        CHECK(y1 == y2);
    }
    SUBCASE("training mode without an rng is an error") {
        layer.training_mode = true;
        CHECK_THROWS_AS(lora_forward(x, layer), std::invalid_argument);
    }
    SUBCASE("training mode masks some adapter contributions") {
        layer.training_mode = true;
        Rng dropout_rng(7);
        LoraCache cache;
        const auto y = lora_forward(x, layer, &dropout_rng, &cache);
        REQUIRE(cache.have_adapter);
        REQUIRE(!cache.dropout_mask.data.empty());
        std::size_t zeros = 0;
        std::size_t scaled = 0;
        for (const double m : cache.dropout_mask.data) {
            if (m == 0.0) ++zeros;
            else if (std::abs(m - 2.0) < 1e-12) ++scaled;  // 1/(1-0.5)
            else FAIL("unexpected mask value");
        }
        CHECK(zeros > 0);
        CHECK(scaled > 0);
        CHECK(y.same_shape(Tensor::zeros({4, 6})));
    }
    SUBCASE("zero dropout in training mode keeps the mask empty") {
        layer.adapter->dropout_p = 0.0;
        layer.training_mode = true;
        LoraCache cache;
        lora_forward(x, layer, nullptr, &cache);
        CHECK(cache.dropout_mask.data.empty());
    }
}

TEST_CASE("backward gradients match finite differences") {
    Rng rng(8);
    const std::size_t d = 5;
    const std::size_t k = 4;
    const std::size_t r = 2;
    auto layer = make_layer(rng, d, k, LoraConfig{r, 6.0, 0.0});
    rng.fill_uniform(layer.adapter->B, -0.4, 0.4);

    auto x = Tensor::zeros({3, k});
    rng.fill_uniform(x, -1.0, 1.0);
    auto dy = Tensor::zeros({3, d});
    rng.fill_uniform(dy, -1.0, 1.0);

    LoraCache cache;
    lora_forward(x, layer, nullptr, &cache);
    LoraGrads grads;
    const auto dx = lora_backward(dy, layer, cache, &grads);

    // loss = sum(dy ⊙ y); its derivative w.r.t. any scalar p is checked
    // against the analytic gradient by central differences.
    const auto loss = [&](const LoraLinear& l, const Tensor& input) {
        const auto y = lora_forward(input, l);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += dy.data[i] * y.data[i];
        return s;
    };
    const double eps = 1e-6;

    for (std::size_t i = 0; i < grads.dA.size(); ++i) {
        auto plus = layer;
        auto minus = layer;
        plus.adapter->A.data[i] += eps;
        minus.adapter->A.data[i] -= eps;
        const double numeric = (loss(plus, x) - loss(minus, x)) / (2 * eps);
        CHECK(grads.dA.data[i] == doctest::Approx(numeric).epsilon(1e-6));
    }
    for (std::size_t i = 0; i < grads.dB.size(); ++i) {
        auto plus = layer;
        auto minus = layer;
        plus.adapter->B.data[i] += eps;
        minus.adapter->B.data[i] -= eps;
        const double numeric = (loss(plus, x) - loss(minus, x)) / (2 * eps);
        CHECK(grads.dB.data[i] == doctest::Approx(numeric).epsilon(1e-6));
    }
    for (std::size_t i = 0; i < dx.size(); ++i) {
        auto plus = x;
        auto minus = x;
        plus.data[i] += eps;
        minus.data[i] -= eps;
        const double numeric = (loss(layer, plus) - loss(layer, minus)) / (2 * eps);
        CHECK(dx.data[i] == doctest::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("backward respects a recorded dropout mask") {
    Rng rng(9);
    auto layer = make_layer(rng, 4, 4, LoraConfig{2, 8.0, 0.5});
    rng.fill_uniform(layer.adapter->B, -0.4, 0.4);
    layer.training_mode = true;

    auto x = Tensor::zeros({2, 4});
    rng.fill_uniform(x, -1.0, 1.0);
    auto dy = Tensor::zeros({2, 4});
    rng.fill_uniform(dy, -1.0, 1.0);

    Rng dropout_rng(10);
    LoraCache cache;
    lora_forward(x, layer, &dropout_rng, &cache);
    LoraGrads grads;
    lora_backward(dy, layer, cache, &grads);

    // columns of A touched only through dropped inputs get zero gradient
    // when the whole input column was masked
    for (std::size_t j = 0; j < 4; ++j) {
        bool all_dropped = true;
        for (std::size_t i = 0; i < 2; ++i) {
            if (cache.dropout_mask.at(i, j) != 0.0) all_dropped = false;
        }
        if (!all_dropped) continue;
        for (std::size_t rr = 0; rr < 2; ++rr) {
            CHECK(grads.dA.at(rr, j) == 0.0);
        }
    }
}
