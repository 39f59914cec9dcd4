#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "relcot/model.hpp"
#include "relcot/preprocess.hpp"
#include "relcot/prompt.hpp"
#include "relcot/stage_oracle.hpp"
#include "relcot/tokenizer.hpp"
#include "relcot/types.hpp"

namespace relcot::infer {

struct GenerationLimits {
    std::size_t max_new_tokens = 256;
};

/// Anything that turns a prompt into a completion. Implementations must be
/// deterministic for a given prompt; thread_safe() gates whether a batch may
/// fan its prompts out across threads.
class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;

    virtual std::string generate(const std::string& prompt,
                                 const GenerationLimits& limits) const = 0;
    virtual std::string name() const = 0;
    virtual bool thread_safe() const { return true; }
};

/// Fixed placeholder completion regardless of the prompt; every example
/// comes out Irrelevant. Exists to measure pipeline overhead and to test
/// plumbing without a model.
class NullBackend : public GeneratorBackend {
public:
    std::string generate(const std::string& prompt, const GenerationLimits& limits) const override;
    std::string name() const override { return "null"; }
};

/// Answers prompts by re-running the keyword/attribute rule system. Reads
/// the query, language, and category path back out of the prompt text, so it
/// understands the wording of the default templates only. Useful as a
/// perfect-extraction stand-in for a fine-tuned model in end-to-end runs.
class RuleOracleBackend : public GeneratorBackend {
public:
    RuleOracleBackend(preprocess::LanguageTable table,
                      std::shared_ptr<const preprocess::Translator> translator);

    std::string generate(const std::string& prompt, const GenerationLimits& limits) const override;
    std::string name() const override { return "rule-oracle"; }
    bool thread_safe() const override;

private:
    std::string english_for(const std::string& raw_query,
                            const std::string& language_name) const;

    preprocess::LanguageTable table_;
    std::shared_ptr<const preprocess::Translator> translator_;
    prompt::RuleStageOracle oracle_;
};

/// Greedy decoding over a trained toy checkpoint: encode the prompt, extend
/// one argmax token at a time until <eos>, the token budget, or the model's
/// context limit, then decode the continuation.
class ToyModelBackend : public GeneratorBackend {
public:
    ToyModelBackend(nn::ToyTransformer model, train::Vocab vocab);

    std::string generate(const std::string& prompt, const GenerationLimits& limits) const override;
    std::string name() const override { return "toy-model"; }

private:
    nn::ToyTransformer model_;
    train::Vocab vocab_;
};

/// Where later stages get their {translation} context value in staged mode:
/// the stage-1 completion, or the offline translated_text on the record.
enum class TranslationSource { StageOutput, Offline };

std::string to_string(TranslationSource source);
TranslationSource translation_source_from_string(const std::string& text);

struct InferenceOptions {
    prompt::PromptMode mode = prompt::PromptMode::Fused;
    std::size_t batch_size = 8;
    GenerationLimits limits;
    TranslationSource translation_source = TranslationSource::StageOutput;
};

struct InferenceResult {
    std::string id;
    Label label = Label::Irrelevant;
    CoTTrace trace;

    bool operator==(const InferenceResult&) const = default;
};

struct InferenceFailure {
    std::string id;
    std::string message;
};

struct ThroughputReport {
    std::string backend;
    std::size_t batch_size = 0;
    std::size_t total_samples = 0;
    double wall_seconds = 0.0;
    double samples_per_second = 0.0;

    std::string to_json() const;
    static ThroughputReport from_json(const std::string& text);
};

struct InferenceRun {
    std::vector<InferenceResult> results;    // input order, failures skipped
    std::vector<InferenceFailure> failures;  // input order
    ThroughputReport throughput;
};

/// Runs every example through the backend in batches. Order is preserved and
/// independent of batch_size. A failing example is recorded, not fatal,
/// unless failures exceed a tenth of the input, which aborts the run.
/// Templates may mix task kinds; each example uses its own kind's set.
InferenceRun run_inference(const std::vector<RelevanceExample>& examples,
                           const GeneratorBackend& backend,
                           const std::vector<prompt::PromptTemplate>& templates,
                           const InferenceOptions& options = {});

/// Pipeline overhead measurement: n synthetic examples through NullBackend.
ThroughputReport bench_overhead(std::size_t n_examples, std::size_t batch_size);

struct PredictionRecord {
    std::string id;
    Label label = Label::Irrelevant;
    std::optional<CoTTrace> trace;

    bool operator==(const PredictionRecord&) const = default;
};

std::vector<PredictionRecord> to_predictions(const InferenceRun& run, bool include_traces);

/// JSONL, one object per line: id, label, and the trace when present.
std::string write_predictions(const std::vector<PredictionRecord>& predictions);
std::vector<PredictionRecord> parse_predictions(std::istream& in);
void save_predictions(const std::vector<PredictionRecord>& predictions, const std::string& path);
std::vector<PredictionRecord> load_predictions(const std::string& path);

}  // namespace relcot::infer
