#include <benchmark/benchmark.h>

#include <map>
#include <string>
#include <vector>

#include "relcot/inference.hpp"
#include "relcot/lora.hpp"
#include "relcot/model.hpp"
#include "relcot/prompt.hpp"
#include "relcot/stage_oracle.hpp"
#include "relcot/types.hpp"

namespace {

using namespace relcot;

RelevanceExample sample_example() {
    RelevanceExample ex;
    ex.query.id = "bench-1";
    ex.query.raw_text = "wireless noise cancelling headphones";
    ex.query.translated_text = "wireless noise cancelling headphones";
    ex.query.language = {"en", "English"};
    ex.category = CategoryPath::parse("Electronics > Audio > Headphones");
    ex.label = Label::Relevant;
    return ex;
}

void bm_fused_prompt(benchmark::State& state) {
    const auto templates = prompt::default_templates(TaskKind::QC);
    const auto example = sample_example();
    for (auto _ : state) {
        benchmark::DoNotOptimize(prompt::render_fused_prompt(templates, example));
    }
}
BENCHMARK(bm_fused_prompt);

void bm_staged_round(benchmark::State& state) {
    const auto templates = prompt::default_templates(TaskKind::QC);
    const auto example = sample_example();
    const prompt::RuleStageOracle oracle;
    for (auto _ : state) {
        const auto render = [&](prompt::Stage stage,
                                const std::map<std::string, std::string>& context) {
            benchmark::DoNotOptimize(
                prompt::render_stage_prompt(prompt::template_for_stage(templates, stage),
                                            context));
        };
        render(prompt::Stage::Translation, prompt::stage_context(example));
        const auto translation = oracle.translation(example);
        render(prompt::Stage::IntentUnderstanding, prompt::stage_context(example, translation));
        const auto intent = oracle.intent(example, translation);
        render(prompt::Stage::CategoryMatching,
               prompt::stage_context(example, translation, intent));
        const auto analysis = oracle.matching_analysis(example, translation, intent);
        render(prompt::Stage::RelevanceJudgment,
               prompt::stage_context(example, translation, intent, analysis));
        benchmark::DoNotOptimize(oracle.judge(example));
    }
}
BENCHMARK(bm_staged_round);

void bm_lora_forward(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    nn::Rng rng(3);
    nn::LoraLinear layer;
    layer.name = "bench";
    layer.weight = nn::Tensor::zeros({d, d});
    rng.fill_uniform(layer.weight, -1.0, 1.0);
    layer.adapter = nn::LoraAdapter::init(d, d, nn::LoraConfig{24, 32.0, 0.0}, rng);
    rng.fill_uniform(layer.adapter->B, -1.0, 1.0);
    auto x = nn::Tensor::zeros({8, d});
    rng.fill_uniform(x, -1.0, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(lora_forward(x, layer));
    }
}
BENCHMARK(bm_lora_forward)->Arg(64)->Arg(256);

void bm_merge_adapter(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    nn::Rng rng(4);
    nn::LoraLinear layer;
    layer.name = "bench";
    layer.weight = nn::Tensor::zeros({d, d});
    rng.fill_uniform(layer.weight, -1.0, 1.0);
    layer.adapter = nn::LoraAdapter::init(d, d, nn::LoraConfig{24, 32.0, 0.0}, rng);
    rng.fill_uniform(layer.adapter->B, -1.0, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(merge_adapter(layer));
    }
}
BENCHMARK(bm_merge_adapter)->Arg(64)->Arg(256);

void bm_transformer_forward(benchmark::State& state) {
    nn::ToyTransformerConfig config;
    config.d_model = 64;
    config.n_heads = 4;
    config.n_layers = 2;
    config.d_ff = 128;
    config.vocab_size = 512;
    config.max_seq_len = 256;
    const auto model = nn::ToyTransformer::init(config, 5);

    const auto seq_len = static_cast<std::size_t>(state.range(0));
    std::vector<std::size_t> tokens(seq_len);
    nn::Rng rng(6);
    for (auto& t : tokens) t = rng.bounded(config.vocab_size);

    for (auto _ : state) {
        benchmark::DoNotOptimize(transformer_forward(tokens, model));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * seq_len));
}
BENCHMARK(bm_transformer_forward)->Arg(16)->Arg(64);

void bm_pipeline_overhead(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    std::vector<RelevanceExample> examples;
    for (std::size_t i = 0; i < 256; ++i) {
        auto ex = sample_example();
        ex.query.id = "bench-" + std::to_string(i);
        examples.push_back(std::move(ex));
    }
    const infer::NullBackend backend;
    const auto templates = prompt::default_templates(TaskKind::QC);
    infer::InferenceOptions options;
    options.batch_size = batch;
    for (auto _ : state) {
        benchmark::DoNotOptimize(infer::run_inference(examples, backend, templates, options));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * examples.size()));
}
BENCHMARK(bm_pipeline_overhead)->Arg(1)->Arg(8)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
