#include "relcot/inference.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace relcot::infer {

using nlohmann::json;

std::string NullBackend::generate(const std::string& prompt,
                                  const GenerationLimits& limits) const {
    (void)prompt;
    (void)limits;
    static const std::string response = prompt::render_fused_response({
        "none",
        "none",
        "none\nOverall match: no",
        "none\nFinal answer: 0",
    });
    return response;
}

RuleOracleBackend::RuleOracleBackend(preprocess::LanguageTable table,
                                     std::shared_ptr<const preprocess::Translator> translator)
    : table_(std::move(table)), translator_(std::move(translator)) {
    if (!translator_) throw std::invalid_argument("rule-oracle backend needs a translator");
}

bool RuleOracleBackend::thread_safe() const { return translator_->thread_safe(); }

namespace {

// Prompt-extraction markers, tied to the wording of the default templates.
constexpr const char* kLanguageStem = "The user query is written in ";
constexpr const char* kTranslateStem = "Translate the following query into English: ";
constexpr const char* kIntentStem = "Consider the English query \"";
constexpr const char* kAnalysisStem = "Matching analysis: ";
constexpr const char* kIntentMarker = "Intent: ";
constexpr const char* kEnglishStem = "asks for ";

[[noreturn]] void extraction_error(const std::string& what) {
    throw std::runtime_error("cannot find " + what +
                             " in the prompt (rule-oracle understands the default templates "
                             "only)");
}

std::string slice_after(const std::string& text, const std::string& marker,
                        const std::string& terminator, const std::string& what) {
    const std::size_t at = text.find(marker);
    if (at == std::string::npos) extraction_error(what);
    const std::size_t begin = at + marker.size();
    const std::size_t end = terminator.empty() ? std::string::npos
                                               : text.find(terminator, begin);
    if (!terminator.empty() && end == std::string::npos) extraction_error(what);
    return text.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

std::string quoted_after(const std::string& text, const std::string& marker,
                         const std::string& what) {
    const std::size_t at = text.find(marker);
    if (at == std::string::npos) extraction_error(what);
    const std::size_t open = text.find('"', at + marker.size());
    if (open == std::string::npos) extraction_error(what);
    const std::size_t close = text.find('"', open + 1);
    if (close == std::string::npos) extraction_error(what);
    return text.substr(open + 1, close - open - 1);
}

std::string line_after(const std::string& text, const std::string& marker,
                       const std::string& what) {
    const std::size_t at = text.find(marker);
    if (at == std::string::npos) extraction_error(what);
    const std::size_t begin = at + marker.size();
    const std::size_t end = text.find('\n', begin);
    return text.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

}  // namespace

std::string RuleOracleBackend::english_for(const std::string& raw_query,
                                           const std::string& language_name) const {
    const std::string code = table_.code_for_name(language_name);
    if (code.empty()) {
        throw std::runtime_error("unknown language name \"" + language_name + "\"");
    }
    if (code == "en") return raw_query;
    return translator_->translate(raw_query, LanguageTag{code, language_name});
}

std::string RuleOracleBackend::generate(const std::string& prompt,
                                        const GenerationLimits& limits) const {
    (void)limits;

    if (prompt.find(prompt::stage_heading(prompt::Stage::Translation)) != std::string::npos) {
        // Fused: the prompt carries everything; answer all four steps.
        const std::string language = slice_after(prompt, kLanguageStem, ".", "the query language");
        const std::string raw = line_after(prompt, kTranslateStem, "the query text");
        const std::string category = quoted_after(prompt, "category path", "the category path");

        RelevanceExample example;
        example.query.raw_text = raw;
        example.query.language = LanguageTag{table_.code_for_name(language), language};
        example.query.translated_text = english_for(raw, language);
        example.category = CategoryPath::parse(category);

        const std::string t0 = oracle_.translation(example);
        const std::string t1 = oracle_.intent(example, t0);
        const std::string t2 = oracle_.matching_analysis(example, t0, t1);
        const Label label = oracle_.judge(example);
        const std::string t3 = oracle_.judgment_response(example, t2, label);
        return prompt::render_fused_response({t0, t1, t2, t3});
    }

    if (prompt.find(kAnalysisStem) != std::string::npos) {
        // Staged judgment: the verdict is already in the forwarded analysis.
        const std::string analysis =
            slice_after(prompt, kAnalysisStem, "\nAnswer with a single line", "the analysis");
        Label label;
        if (analysis.find("Overall match: yes") != std::string::npos) {
            label = Label::Relevant;
        } else if (analysis.find("Overall match: no") != std::string::npos) {
            label = Label::Irrelevant;
        } else {
            extraction_error("an overall-match verdict");
        }
        return oracle_.judgment_response(RelevanceExample{}, analysis, label);
    }

    if (prompt.find(kIntentMarker) != std::string::npos) {
        // Staged matching: recover the English query from the intent prose.
        const std::string intent =
            slice_after(prompt, kIntentMarker, "\nEnd your analysis", "the intent");
        const std::string english =
            slice_after(intent, kEnglishStem, ". Product type:", "the English query");
        const std::string category = quoted_after(prompt, "category path", "the category path");

        RelevanceExample example;
        example.query.raw_text = english;
        example.query.language = LanguageTag{"en", "English"};
        example.category = CategoryPath::parse(category);
        return oracle_.matching_analysis(example, english, intent);
    }

    if (prompt.find(kIntentStem) != std::string::npos) {
        const std::string english =
            slice_after(prompt, kIntentStem, "\".", "the translated query");
        return oracle_.intent(RelevanceExample{}, english);
    }

    if (prompt.find(kTranslateStem) != std::string::npos) {
        const std::string language = slice_after(prompt, kLanguageStem, ".", "the query language");
        const std::string raw = line_after(prompt, kTranslateStem, "the query text");
        return english_for(raw, language);
    }

    extraction_error("any known stage wording");
}

ToyModelBackend::ToyModelBackend(nn::ToyTransformer model, train::Vocab vocab)
    : model_(std::move(model)), vocab_(std::move(vocab)) {
    model_.set_training(false);
}

std::string ToyModelBackend::generate(const std::string& prompt,
                                      const GenerationLimits& limits) const {
    std::vector<std::size_t> tokens =
        train::encode_prompt(vocab_, prompt, model_.config.max_seq_len);
    std::vector<std::size_t> generated;
    for (std::size_t step = 0;
         step < limits.max_new_tokens && tokens.size() < model_.config.max_seq_len; ++step) {
        const nn::Tensor logits = nn::transformer_forward(tokens, model_);
        const std::size_t row = tokens.size() - 1;
        const double* lr = &logits.data[row * logits.cols()];
        std::size_t next = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            if (lr[j] > lr[next]) next = j;
        }
        if (next == train::Vocab::kEos) break;
        tokens.push_back(next);
        generated.push_back(next);
    }
    return train::decode(vocab_, generated);
}

std::string to_string(TranslationSource source) {
    switch (source) {
        case TranslationSource::StageOutput: return "stage_output";
        case TranslationSource::Offline: return "offline";
    }
    throw std::invalid_argument("unknown translation source");
}

TranslationSource translation_source_from_string(const std::string& text) {
    if (text == "stage_output") return TranslationSource::StageOutput;
    if (text == "offline") return TranslationSource::Offline;
    throw std::invalid_argument("unknown translation source \"" + text +
                                "\" (expected stage_output or offline)");
}

namespace {

InferenceResult infer_one(const RelevanceExample& example, const GeneratorBackend& backend,
                          const std::vector<prompt::PromptTemplate>& templates,
                          const InferenceOptions& options) {
    InferenceResult result;
    result.id = example.query.id;

    if (options.mode == prompt::PromptMode::Fused) {
        const std::string fused = prompt::render_fused_prompt(templates, example);
        const std::string response = backend.generate(fused, options.limits);
        result.trace = prompt::parse_trace(response, prompt::PromptMode::Fused);
        result.trace.stage_prompts[0] = fused;
        result.label = result.trace.judgment;
        return result;
    }

    std::array<std::string, 4> prompts;
    std::array<std::string, 4> responses;

    const auto render = [&](prompt::Stage stage,
                            const std::map<std::string, std::string>& ctx) {
        return prompt::render_stage_prompt(prompt::template_for_stage(templates, stage), ctx);
    };

    prompts[0] = render(prompt::Stage::Translation, prompt::stage_context(example));
    responses[0] = backend.generate(prompts[0], options.limits);

    std::string translation = responses[0];
    if (options.translation_source == TranslationSource::Offline) {
        if (!example.query.translated_text.has_value()) {
            throw std::runtime_error("example \"" + example.query.id +
                                     "\": no offline translation available");
        }
        translation = *example.query.translated_text;
    }

    prompts[1] = render(prompt::Stage::IntentUnderstanding,
                        prompt::stage_context(example, translation));
    responses[1] = backend.generate(prompts[1], options.limits);

    prompts[2] = render(prompt::Stage::CategoryMatching,
                        prompt::stage_context(example, translation, responses[1]));
    responses[2] = backend.generate(prompts[2], options.limits);

    prompts[3] = render(prompt::Stage::RelevanceJudgment,
                        prompt::stage_context(example, translation, responses[1], responses[2]));
    responses[3] = backend.generate(prompts[3], options.limits);

    result.trace = prompt::parse_trace(responses);
    result.trace.stage_prompts = prompts;
    result.label = result.trace.judgment;
    return result;
}

json trace_to_json(const CoTTrace& trace) {
    json j;
    j["translation"] = trace.translation;
    j["intent"] = trace.intent;
    j["matching_analysis"] = trace.matching_analysis;
    j["judgment"] = label_to_int(trace.judgment);
    j["stage_prompts"] = trace.stage_prompts;
    j["stage_responses"] = trace.stage_responses;
    return j;
}

CoTTrace trace_from_json(const json& j) {
    CoTTrace trace;
    trace.translation = j.at("translation").get<std::string>();
    trace.intent = j.at("intent").get<std::string>();
    trace.matching_analysis = j.at("matching_analysis").get<std::string>();
    trace.judgment = label_from_int(j.at("judgment").get<int>());
    const auto& prompts = j.at("stage_prompts");
    const auto& responses = j.at("stage_responses");
    if (prompts.size() != 4 || responses.size() != 4) {
        throw std::invalid_argument("trace stage arrays must have four entries");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        trace.stage_prompts[i] = prompts[i].get<std::string>();
        trace.stage_responses[i] = responses[i].get<std::string>();
    }
    return trace;
}

}  // namespace

InferenceRun run_inference(const std::vector<RelevanceExample>& examples,
                           const GeneratorBackend& backend,
                           const std::vector<prompt::PromptTemplate>& templates,
                           const InferenceOptions& options) {
    if (options.batch_size == 0) throw std::invalid_argument("batch_size must be positive");

    std::map<TaskKind, std::vector<prompt::PromptTemplate>> sets;
    for (const auto& t : templates) sets[t.task_kind].push_back(t);
    for (const auto& [kind, set] : sets) {
        try {
            prompt::validate_template_set(set);
        } catch (const std::exception& e) {
            throw std::invalid_argument("templates for task kind " + to_string(kind) + ": " +
                                        e.what());
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    InferenceRun run;

    auto process = [&](const RelevanceExample& example) -> InferenceResult {
        auto it = sets.find(example.task_kind);
        if (it == sets.end()) {
            throw std::runtime_error("no templates for task kind " + to_string(example.task_kind) +
                                     " (example \"" + example.query.id + "\")");
        }
        return infer_one(example, backend, it->second, options);
    };

    const bool parallel = backend.thread_safe() && options.batch_size > 1;
    for (std::size_t start = 0; start < examples.size(); start += options.batch_size) {
        const std::size_t end = std::min(start + options.batch_size, examples.size());
        if (parallel && end - start > 1) {
            std::vector<std::future<InferenceResult>> futures;
            futures.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                futures.push_back(
                    std::async(std::launch::async, process, std::cref(examples[i])));
            }
            for (std::size_t i = start; i < end; ++i) {
                try {
                    run.results.push_back(futures[i - start].get());
                } catch (const std::exception& e) {
                    run.failures.push_back({examples[i].query.id, e.what()});
                }
            }
        } else {
            for (std::size_t i = start; i < end; ++i) {
                try {
                    run.results.push_back(process(examples[i]));
                } catch (const std::exception& e) {
                    run.failures.push_back({examples[i].query.id, e.what()});
                }
            }
        }
        if (run.failures.size() * 10 > examples.size()) {
            const auto& first = run.failures.front();
            throw std::runtime_error("inference aborted: " + std::to_string(run.failures.size()) +
                                     " of " + std::to_string(examples.size()) +
                                     " examples failed (first: example \"" + first.id + "\": " +
                                     first.message + ")");
        }
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.throughput.backend = backend.name();
    run.throughput.batch_size = options.batch_size;
    run.throughput.total_samples = examples.size();
    run.throughput.wall_seconds = wall;
    run.throughput.samples_per_second =
        static_cast<double>(examples.size()) / std::max(wall, 1e-9);
    return run;
}

ThroughputReport bench_overhead(std::size_t n_examples, std::size_t batch_size) {
    std::vector<RelevanceExample> examples;
    examples.reserve(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) {
        RelevanceExample example;
        example.query.id = "bench-" + std::to_string(i);
        example.query.raw_text = "red shoes";
        example.query.language = LanguageTag{"en", "English"};
        example.query.translated_text = "red shoes";
        example.category = CategoryPath::parse("Shoes > Women");
        example.task_kind = TaskKind::QC;
        examples.push_back(std::move(example));
    }
    NullBackend backend;
    InferenceOptions options;
    options.mode = prompt::PromptMode::Fused;
    options.batch_size = batch_size;
    return run_inference(examples, backend, prompt::default_templates(TaskKind::QC), options)
        .throughput;
}

std::string ThroughputReport::to_json() const {
    json j;
    j["backend"] = backend;
    j["batch_size"] = batch_size;
    j["total_samples"] = total_samples;
    j["wall_seconds"] = wall_seconds;
    j["samples_per_second"] = samples_per_second;
    return j.dump();
}

ThroughputReport ThroughputReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad throughput JSON: ") + e.what());
    }
    ThroughputReport r;
    r.backend = j.at("backend").get<std::string>();
    r.batch_size = j.at("batch_size").get<std::size_t>();
    r.total_samples = j.at("total_samples").get<std::size_t>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.samples_per_second = j.at("samples_per_second").get<double>();
    return r;
}

std::vector<PredictionRecord> to_predictions(const InferenceRun& run, bool include_traces) {
    std::vector<PredictionRecord> out;
    out.reserve(run.results.size());
    for (const auto& r : run.results) {
        PredictionRecord p;
        p.id = r.id;
        p.label = r.label;
        if (include_traces) p.trace = r.trace;
        out.push_back(std::move(p));
    }
    return out;
}

std::string write_predictions(const std::vector<PredictionRecord>& predictions) {
    std::string out;
    for (const auto& p : predictions) {
        json j;
        j["id"] = p.id;
        j["label"] = label_to_int(p.label);
        if (p.trace.has_value()) j["trace"] = trace_to_json(*p.trace);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<PredictionRecord> parse_predictions(std::istream& in) {
    std::vector<PredictionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(lineno, std::string("malformed prediction row: ") + e.what());
        }
        try {
            PredictionRecord p;
            p.id = j.at("id").get<std::string>();
            p.label = label_from_int(j.at("label").get<int>());
            if (j.contains("trace")) p.trace = trace_from_json(j.at("trace"));
            out.push_back(std::move(p));
        } catch (const std::exception& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return out;
}

void save_predictions(const std::vector<PredictionRecord>& predictions, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << write_predictions(predictions);
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_predictions(in);
}

}  // namespace relcot::infer
