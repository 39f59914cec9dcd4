#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "relcot/tensor.hpp"

using namespace relcot::nn;

namespace {

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
    auto t = Tensor::zeros({rows, cols});
    rng.fill_uniform(t, -1.0, 1.0);
    return t;
}

// Reference product via the naive triple loop with explicit transposition,
// so the optimized layouts have something independent to agree with.
Tensor slow_matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    const std::size_t m = ta ? a.cols() : a.rows();
    const std::size_t inner = ta ? a.rows() : a.cols();
    const std::size_t n = tb ? b.rows() : b.cols();
    auto c = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < inner; ++k) {
                const double av = ta ? a.at(k, i) : a.at(i, k);
                const double bv = tb ? b.at(j, k) : b.at(k, j);
                sum += av * bv;
            }
            c.at(i, j) = sum;
        }
    }
    return c;
}

bool close(const Tensor& a, const Tensor& b, double tol = 1e-12) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a.data[i] - b.data[i]) > tol) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("tensor constructors shape and fill") {
    const auto z = Tensor::zeros({2, 3});
    CHECK(z.rows() == 2);
    CHECK(z.cols() == 3);
    CHECK(z.size() == 6);
    CHECK(z.data == std::vector<double>(6, 0.0));
    const auto f = Tensor::full({4}, 1.5);
    CHECK(f.size() == 4);
    CHECK(f.data[3] == 1.5);
    CHECK_THROWS_AS(f.rows(), std::invalid_argument);
}

TEST_CASE("matmul variants agree with the naive reference") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 1 + rng.bounded(6);
        const std::size_t k = 1 + rng.bounded(6);
        const std::size_t n = 1 + rng.bounded(6);
        const auto a = random_tensor(rng, m, k);
        const auto b = random_tensor(rng, k, n);
        const auto bt = random_tensor(rng, n, k);
        const auto at = random_tensor(rng, k, m);
        CHECK(close(matmul(a, b), slow_matmul(a, b, false, false)));
        CHECK(close(matmul_nt(a, bt), slow_matmul(a, bt, false, true)));
        CHECK(close(matmul_tn(at, b), slow_matmul(at, b, true, false)));
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    const auto a = Tensor::zeros({2, 3});
    const auto b = Tensor::zeros({4, 5});
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("accumulating matmuls add scaled products in place") {
    Rng rng(4);
    const auto a = random_tensor(rng, 3, 2);
    const auto b = random_tensor(rng, 2, 5);
    auto c = random_tensor(rng, 3, 5);
    auto expected = c;
    const auto product = matmul(a, b);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        expected.data[i] += 0.25 * product.data[i];
    }
    add_matmul(c, a, b, 0.25);
    CHECK(close(c, expected));
}

TEST_CASE("check_finite names its context") {
    auto t = Tensor::zeros({2, 2});
    CHECK_NOTHROW(check_finite(t, "logits"));
    t.data[3] = std::nan("");
    CHECK_THROWS_WITH_AS(check_finite(t, "logits"), doctest::Contains("logits"),
                         std::runtime_error);
}

TEST_CASE("rng is deterministic per seed and spans its range") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.uniform(-2.0, 3.0) == b.uniform(-2.0, 3.0));
    }
    Rng c(42);
    double lo = 1e9;
    double hi = -1e9;
    for (int i = 0; i < 2000; ++i) {
        const double v = c.uniform(-2.0, 3.0);
        CHECK(v >= -2.0);
        CHECK(v < 3.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo < -1.5);
    CHECK(hi > 2.5);
}

TEST_CASE("bounded indices stay in range and hit every bucket") {
    Rng rng(7);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t v = rng.bounded(5);
        REQUIRE(v < 5);
        ++hits[v];
    }
    for (const int h : hits) CHECK(h > 100);
    CHECK_THROWS_AS(rng.bounded(0), std::invalid_argument);
}
