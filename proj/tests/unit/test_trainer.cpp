#include <cmath>
#include <stdexcept>
#include <utility>

#include "doctest.h"
#include "relcot/trainer.hpp"

using namespace relcot;
using namespace relcot::train;

namespace {

struct Fixture {
    Vocab vocab;
    std::vector<EncodedRecord> dataset;
    nn::ToyTransformerConfig model_config;

    explicit Fixture(std::size_t n_records = 8) {
        std::vector<prompt::InstructionRecord> rows;
        for (std::size_t i = 0; i < n_records; ++i) {
            prompt::InstructionRecord row;
            row.source_example_id = "t" + std::to_string(i);
            const bool yes = i % 2 == 0;
            row.instruction = std::string("verdict ") + (yes ? "yes" : "no") + " item " +
                              std::to_string(i % 4);
            row.response = yes ? "1" : "0";
            row.stage = prompt::Stage::RelevanceJudgment;
            rows.push_back(std::move(row));
        }
        std::vector<std::string> texts;
        for (const auto& row : rows) {
            texts.push_back(row.instruction);
            texts.push_back(row.response);
        }
        vocab = Vocab::build(texts);
        model_config.d_model = 16;
        model_config.n_heads = 2;
        model_config.n_layers = 1;
        model_config.d_ff = 24;
        model_config.vocab_size = vocab.size();
        model_config.max_seq_len = 32;
        for (const auto& row : rows) {
            dataset.push_back(encode_record(vocab, row, model_config.max_seq_len));
        }
    }

    nn::ToyTransformer adapted_model(std::uint64_t seed, double dropout = 0.0) const {
        auto model = nn::ToyTransformer::init(model_config, seed);
        nn::Rng rng(seed + 1);
        nn::inject_adapters(model, {"q_proj", "v_proj", "down_proj"},
                            nn::LoraConfig{4, 8.0, dropout}, rng);
        return model;
    }
};

std::vector<const EncodedRecord*> pointers(const std::vector<EncodedRecord>& records,
                                           std::size_t begin, std::size_t end) {
    std::vector<const EncodedRecord*> out;
    for (std::size_t i = begin; i < end; ++i) out.push_back(&records[i]);
    return out;
}

double max_grad_diff(const nn::ModelGrads& a, const nn::ModelGrads& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (const auto& [name, ga] : a) {
        const auto& gb = b.at(name);
        REQUIRE(ga.dA.same_shape(gb.dA));
        for (std::size_t i = 0; i < ga.dA.size(); ++i) {
            worst = std::max(worst, std::abs(ga.dA.data[i] - gb.dA.data[i]));
        }
        for (std::size_t i = 0; i < ga.dB.size(); ++i) {
            worst = std::max(worst, std::abs(ga.dB.data[i] - gb.dB.data[i]));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("loss mask policy names round-trip") {
    CHECK(to_string(LossMaskPolicy::ResponseOnly) == "response_only");
    CHECK(loss_mask_policy_from_string("full_sequence") == LossMaskPolicy::FullSequence);
    CHECK_THROWS_AS(loss_mask_policy_from_string("none"), std::invalid_argument);
}

TEST_CASE("train config defaults and validation") {
    const TrainConfig config;
    CHECK(config.batch_size == 8);
    CHECK(config.grad_accum_steps == 2);
    CHECK(config.learning_rate == 2e-4);
    CHECK(config.epochs == 1);
    CHECK(config.loss_mask_policy == LossMaskPolicy::ResponseOnly);
    CHECK(config.target_projections.size() == 7);
    CHECK_NOTHROW(config.validate());

    auto bad = config;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = config;
    bad.learning_rate = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = config;
    bad.target_projections.clear();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("train config json round-trips and accepts partial documents") {
    TrainConfig config;
    config.batch_size = 4;
    config.seed = 99;
    config.lora.r = 6;
    config.target_projections = {"q_proj"};
    CHECK(TrainConfig::from_json(config.to_json()) == config);

    const auto partial = TrainConfig::from_json(R"({"learning_rate": 0.01, "lora_r": 2})");
    CHECK(partial.learning_rate == 0.01);
    CHECK(partial.lora.r == 2);
    CHECK(partial.batch_size == 8);

    CHECK_THROWS_AS(TrainConfig::from_json(R"({"batchsize": 4})"), std::invalid_argument);
}

TEST_CASE("a fresh model starts near the uniform-guess loss") {
    const Fixture fx;
    auto model = fx.adapted_model(7);
    const double loss =
        sft_batch_loss(model, pointers(fx.dataset, 0, fx.dataset.size()),
                       LossMaskPolicy::ResponseOnly);
    const double uniform = std::log(static_cast<double>(fx.model_config.vocab_size));
    CHECK(loss == doctest::Approx(uniform).epsilon(0.05));
}

TEST_CASE("batch loss is the mean of single-record losses") {
    const Fixture fx;
    auto model = fx.adapted_model(3);
    const auto all = pointers(fx.dataset, 0, 4);
    const double batch = sft_batch_loss(model, all, LossMaskPolicy::ResponseOnly);
    double sum = 0.0;
    for (const auto* record : all) {
        sum += sft_batch_loss(model, {record}, LossMaskPolicy::ResponseOnly);
    }
    CHECK(batch == doctest::Approx(sum / 4).epsilon(1e-12));
}

TEST_CASE("batch gradients match finite differences of the batch loss") {
    const Fixture fx(4);
    auto model = fx.adapted_model(5);
    // give the adapters non-zero state so every path contributes
    for (auto& [name, lin] : model.projections()) {
        if (!lin->adapter) continue;
        nn::Rng fill(11);
        fill.fill_uniform(lin->adapter->B, -0.2, 0.2);
    }
    const auto batch = pointers(fx.dataset, 0, 4);
    nn::ModelGrads grads;
    sft_batch_gradients(model, batch, LossMaskPolicy::ResponseOnly, nullptr, grads);

    const double eps = 1e-6;
    double worst_rel = 0.0;
    for (auto& [name, lin] : model.projections()) {
        if (!lin->adapter) continue;
        const auto& grad = grads.at(name);
        for (auto member : {&nn::LoraAdapter::A, &nn::LoraAdapter::B}) {
            nn::Tensor& param = (*lin->adapter).*member;
            const nn::Tensor& analytic = member == &nn::LoraAdapter::A ? grad.dA : grad.dB;
            for (std::size_t i = 0; i < param.size(); i += 7) {
                const double keep = param.data[i];
                param.data[i] = keep + eps;
                const double up = sft_batch_loss(model, batch, LossMaskPolicy::ResponseOnly);
                param.data[i] = keep - eps;
                const double down = sft_batch_loss(model, batch, LossMaskPolicy::ResponseOnly);
                param.data[i] = keep;
                const double numeric = (up - down) / (2 * eps);
                const double denom = std::max({std::abs(numeric), std::abs(analytic.data[i]),
                                               1e-10});
                worst_rel = std::max(worst_rel, std::abs(numeric - analytic.data[i]) / denom);
            }
        }
    }
    CHECK(worst_rel < 1e-5);
}

TEST_CASE("full-sequence masking covers more positions than response-only") {
    const Fixture fx(4);
    auto model = fx.adapted_model(5);
    const auto batch = pointers(fx.dataset, 0, 4);
    const double response_only = sft_batch_loss(model, batch, LossMaskPolicy::ResponseOnly);
    const double full = sft_batch_loss(model, batch, LossMaskPolicy::FullSequence);
    // both near ln(V) on a fresh model, but they must differ: the masks
    // average over different target sets
    CHECK(response_only != full);
}

TEST_CASE("two accumulated micro-batches equal one doubled batch") {
    const Fixture fx(8);
    auto model = fx.adapted_model(9);
    for (auto& [name, lin] : model.projections()) {
        if (!lin->adapter) continue;
        nn::Rng fill(13);
        fill.fill_uniform(lin->adapter->B, -0.2, 0.2);
    }

    nn::ModelGrads full;
    sft_batch_gradients(model, pointers(fx.dataset, 0, 8), LossMaskPolicy::ResponseOnly, nullptr,
                        full);

    nn::ModelGrads accumulated;
    sft_batch_gradients(model, pointers(fx.dataset, 0, 4), LossMaskPolicy::ResponseOnly, nullptr,
                        accumulated);
    sft_batch_gradients(model, pointers(fx.dataset, 4, 8), LossMaskPolicy::ResponseOnly, nullptr,
                        accumulated);
    for (auto& [name, grad] : accumulated) {
        for (auto& v : grad.dA.data) v /= 2.0;
        for (auto& v : grad.dB.data) v /= 2.0;
    }
    CHECK(max_grad_diff(full, accumulated) <= 1e-9);
}

TEST_CASE("adam steps move parameters at the learning-rate scale") {
    const Fixture fx(4);
    auto model = fx.adapted_model(5);
    // non-zero B, otherwise dA would vanish on a fresh adapter
    for (auto& [name, lin] : model.projections()) {
        if (!lin->adapter) continue;
        nn::Rng fill(17);
        fill.fill_uniform(lin->adapter->B, -0.2, 0.2);
    }
    nn::ModelGrads grads;
    sft_batch_gradients(model, pointers(fx.dataset, 0, 4), LossMaskPolicy::ResponseOnly, nullptr,
                        grads);

    AdamParams params;
    params.learning_rate = 1e-2;
    AdamOptimizer optimizer(params);
    const auto before = model.layers[0].q_proj.adapter->A;
    const auto grad_before = grads.at("layers.0.q_proj").dA;
    optimizer.step(model, grads);
    CHECK(optimizer.steps_taken() == 1);

    const auto& after = model.layers[0].q_proj.adapter->A;
    // with zero moment history the first Adam step is -lr·sign(g) up to eps
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double g = grad_before.data[i];
        if (std::abs(g) < 1e-9) continue;
        const double delta = after.data[i] - before.data[i];
        CHECK(delta == doctest::Approx(-params.learning_rate * (g > 0 ? 1.0 : -1.0))
                           .epsilon(1e-3));
    }
}

TEST_CASE("adam rejects gradients for unknown projections") {
    const Fixture fx(4);
    auto model = fx.adapted_model(5);
    nn::ModelGrads grads;
    grads["layers.0.k_proj"] = {};  // k_proj carries no adapter in this fixture
    AdamOptimizer optimizer({});
    CHECK_THROWS_WITH_AS(optimizer.step(model, grads),
                         doctest::Contains("does not match an adapted projection"),
                         std::invalid_argument);
}

TEST_CASE("training keeps base weights bitwise frozen") {
    const Fixture fx(8);
    auto model = fx.adapted_model(7, 0.1);
    const auto embedding = model.embedding;
    const auto lm_head = model.lm_head;
    std::vector<nn::Tensor> weights;
    for (const auto& [name, lin] : std::as_const(model).projections()) {
        weights.push_back(lin->weight);
    }
    const auto adapters_before = model.layers[0].q_proj.adapter;

    TrainConfig config;
    config.batch_size = 4;
    config.grad_accum_steps = 2;
    config.epochs = 2;
    config.learning_rate = 1e-3;
    config.lora = nn::LoraConfig{4, 8.0, 0.1};
    config.target_projections = {"q_proj", "v_proj", "down_proj"};
    const auto report = train::train(model, fx.dataset, config);

    CHECK(model.embedding == embedding);
    CHECK(model.lm_head == lm_head);
    std::size_t i = 0;
    for (const auto& [name, lin] : std::as_const(model).projections()) {
        CHECK(lin->weight == weights[i++]);
    }
    // and the adapters did move
    CHECK(model.layers[0].q_proj.adapter->B != adapters_before->B);

    // one epoch = ceil(ceil(8/4)/2) = 1 update
    CHECK(report.updates == 2);
    CHECK(report.losses.size() == 2);
    CHECK(report.epochs_completed == 2);
    CHECK(!report.stopped_early);
    CHECK(report.trainable_parameters == nn::count_parameters(model).trainable);
    CHECK(report.final_loss == report.losses.back());
    CHECK(report.wall_seconds >= 0.0);
}

TEST_CASE("training mode is restored after a run") {
    const Fixture fx(4);
    auto model = fx.adapted_model(7, 0.1);
    TrainConfig config;
    config.batch_size = 4;
    config.grad_accum_steps = 1;
    config.target_projections = {"q_proj", "v_proj", "down_proj"};
    config.lora = nn::LoraConfig{4, 8.0, 0.1};
    train::train(model, fx.dataset, config);
    for (const auto& [name, lin] : std::as_const(model).projections()) {
        CHECK(!lin->training_mode);
    }
}

TEST_CASE("identical seeds produce identical training runs") {
    const Fixture fx(8);
    TrainConfig config;
    config.batch_size = 2;
    config.grad_accum_steps = 2;
    config.epochs = 3;
    config.seed = 42;
    config.lora = nn::LoraConfig{4, 8.0, 0.1};
    config.target_projections = {"q_proj", "v_proj", "down_proj"};

    auto run = [&]() {
        auto model = fx.adapted_model(7, 0.1);
        const auto report = train::train(model, fx.dataset, config);
        return std::make_pair(std::move(model), report);
    };
    auto [model_a, report_a] = run();
    auto [model_b, report_b] = run();
    CHECK(report_a.losses == report_b.losses);
    CHECK(model_a.layers[0].q_proj.adapter == model_b.layers[0].q_proj.adapter);
    CHECK(model_a.layers[0].down_proj.adapter == model_b.layers[0].down_proj.adapter);

    config.seed = 43;
    auto model_c = fx.adapted_model(7, 0.1);
    const auto report_c = train::train(model_c, fx.dataset, config);
    CHECK(report_a.losses != report_c.losses);
}

TEST_CASE("the after_update hook can stop a run early") {
    const Fixture fx(8);
    auto model = fx.adapted_model(7);
    TrainConfig config;
    config.batch_size = 2;
    config.grad_accum_steps = 1;
    config.epochs = 10;
    config.lora = nn::LoraConfig{4, 8.0, 0.0};
    config.target_projections = {"q_proj", "v_proj", "down_proj"};

    std::vector<std::size_t> seen;
    TrainHooks hooks;
    hooks.after_update = [&](const UpdateInfo& info) {
        seen.push_back(info.update_index);
        return info.update_index < 5;
    };
    const auto report = train::train(model, fx.dataset, config, hooks);
    CHECK(report.stopped_early);
    CHECK(report.updates == 5);
    CHECK(seen == std::vector<std::size_t>{1, 2, 3, 4, 5});
}

TEST_CASE("train rejects models without adapters and empty datasets") {
    const Fixture fx(4);
    auto bare = nn::ToyTransformer::init(fx.model_config, 1);
    CHECK_THROWS_WITH_AS(train::train(bare, fx.dataset, TrainConfig{}),
                         doctest::Contains("no adapters"), std::invalid_argument);

    auto model = fx.adapted_model(1);
    TrainConfig config;
    config.target_projections = {"q_proj", "v_proj", "down_proj"};
    CHECK_THROWS_AS(train::train(model, {}, config), std::invalid_argument);
}

TEST_CASE("label accuracy reads the digit before eos") {
    const Fixture fx(8);
    auto model = fx.adapted_model(7);
    const double acc = label_accuracy(model, fx.vocab, fx.dataset);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);

    SUBCASE("records not ending in a digit are rejected") {
        auto broken = fx.dataset;
        prompt::InstructionRecord row{"verdict yes", "", "yes", prompt::Stage::RelevanceJudgment,
                                      "b1"};
        broken.push_back(encode_record(fx.vocab, row, 32));
        CHECK_THROWS_WITH_AS(label_accuracy(model, fx.vocab, broken),
                             doctest::Contains("label digit"), std::invalid_argument);
    }
    SUBCASE("training flags are restored") {
        model.set_training(true);
        label_accuracy(model, fx.vocab, fx.dataset);
        CHECK(model.layers[0].q_proj.training_mode);
        model.set_training(false);
    }
}

TEST_CASE("update arithmetic handles short trailing groups") {
    const Fixture fx(8);  // fixture holds 8 records
    auto model = fx.adapted_model(3);
    TrainConfig config;
    config.batch_size = 3;  // micro-batches: 3,3,2
    config.grad_accum_steps = 2;  // groups: {3,3}, {2}
    config.epochs = 1;
    config.lora = nn::LoraConfig{4, 8.0, 0.0};
    config.target_projections = {"q_proj", "v_proj", "down_proj"};
    const auto report = train::train(model, fx.dataset, config);
    CHECK(report.updates == 2);
}
