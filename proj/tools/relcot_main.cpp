// Command-line front end for the relevance pipeline: preprocess queries,
// render instruction datasets, fine-tune the toy model, run batched
// inference, and score predictions. Every command writes its outputs under
// --out-dir with fixed names plus a manifest.json recording what ran.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "relcot/checkpoint.hpp"
#include "relcot/eval.hpp"
#include "relcot/examples_io.hpp"
#include "relcot/inference.hpp"
#include "relcot/manifest.hpp"
#include "relcot/preprocess.hpp"
#include "relcot/prompt.hpp"
#include "relcot/stage_oracle.hpp"
#include "relcot/tokenizer.hpp"
#include "relcot/trainer.hpp"
#include "relcot/version.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string out_path(const std::string& out_dir, const std::string& name) {
    fs::create_directories(out_dir);
    return (fs::path(out_dir) / name).string();
}

// Shared across preprocess/infer: pick the language table.
relcot::preprocess::LanguageTable load_language_table(const std::string& languages_csv) {
    if (languages_csv.empty()) return relcot::preprocess::LanguageTable::builtin();
    return relcot::preprocess::LanguageTable::from_csv_file(languages_csv);
}

// "default", "compact", or a directory of *.tmpl files. Directories may
// carry either or both task kinds; at least one kind must load.
std::vector<relcot::prompt::PromptTemplate> load_templates(const std::string& spec) {
    using relcot::TaskKind;
    namespace prompt = relcot::prompt;
    if (spec == "default") {
        auto out = prompt::default_templates(TaskKind::QC);
        const auto qi = prompt::default_templates(TaskKind::QI);
        out.insert(out.end(), qi.begin(), qi.end());
        return out;
    }
    if (spec == "compact") {
        auto out = prompt::compact_templates(TaskKind::QC);
        const auto qi = prompt::compact_templates(TaskKind::QI);
        out.insert(out.end(), qi.begin(), qi.end());
        return out;
    }
    std::vector<prompt::PromptTemplate> out;
    std::string first_error;
    for (TaskKind kind : {TaskKind::QC, TaskKind::QI}) {
        try {
            const auto set = prompt::load_template_dir(spec, kind);
            out.insert(out.end(), set.begin(), set.end());
        } catch (const std::exception& e) {
            if (first_error.empty()) first_error = e.what();
        }
    }
    if (out.empty()) {
        throw std::runtime_error("no usable templates in \"" + spec + "\": " + first_error);
    }
    return out;
}

// The file a "dict:<path>" translator spec points at, for manifests.
std::string translator_input_path(const std::string& spec) {
    const std::string prefix = "dict:";
    if (spec.rfind(prefix, 0) == 0) return spec.substr(prefix.size());
    return "";
}

struct PreprocessArgs {
    std::string input;
    std::string languages_csv;
    std::string translator_spec = "identity";
    std::string out_dir = ".";
};

int cmd_preprocess(const PreprocessArgs& args) {
    const auto table = load_language_table(args.languages_csv);
    const auto translator = relcot::preprocess::make_translator(args.translator_spec);
    auto examples = relcot::load_examples(args.input);

    for (std::size_t i = 0; i < examples.size(); ++i) {
        auto& example = examples[i];
        try {
            example.query.language = table.complete(example.query.language.code);
            example.query = relcot::preprocess::translate_query(example.query, *translator);
            example.query = relcot::preprocess::normalize(example.query);
        } catch (const std::exception& e) {
            throw std::runtime_error("row " + std::to_string(i + 1) + " (id \"" +
                                     example.query.id + "\"): " + e.what());
        }
    }

    const std::string out = out_path(args.out_dir, "preprocessed.jsonl");
    relcot::save_examples(examples, out, relcot::ExampleFormat::Jsonl);
    std::cout << "wrote " << out << " (" << examples.size() << " examples)\n";

    relcot::Manifest manifest;
    manifest.command = "preprocess";
    manifest.config_json = nlohmann::json{{"languages", args.languages_csv},
                                          {"translator", args.translator_spec}}
                               .dump();
    manifest.inputs[args.input] = relcot::file_digest(args.input);
    if (!args.languages_csv.empty()) {
        manifest.inputs[args.languages_csv] = relcot::file_digest(args.languages_csv);
    }
    const std::string dict = translator_input_path(args.translator_spec);
    if (!dict.empty()) manifest.inputs[dict] = relcot::file_digest(dict);
    relcot::write_manifest(manifest, out_path(args.out_dir, "manifest.json"));
    return 0;
}

struct BuildDatasetArgs {
    std::string input;
    std::string templates = "default";
    std::string mode = "staged";
    std::string out_dir = ".";
};

int cmd_build_dataset(const BuildDatasetArgs& args) {
    const auto mode = relcot::prompt::prompt_mode_from_string(args.mode);
    const auto templates = load_templates(args.templates);
    const auto style = args.templates == "compact"
                           ? relcot::prompt::RuleStageOracle::Style::Compact
                           : relcot::prompt::RuleStageOracle::Style::Full;
    const relcot::prompt::RuleStageOracle oracle(style);

    const auto examples = relcot::load_examples(args.input);
    const auto records = relcot::prompt::build_instruction_dataset(examples, templates, mode,
                                                                   oracle);

    const std::string out = out_path(args.out_dir, "dataset.jsonl");
    relcot::prompt::save_instruction_records(records, out);
    std::cout << "wrote " << out << " (" << records.size() << " records from "
              << examples.size() << " examples)\n";

    relcot::Manifest manifest;
    manifest.command = "build-dataset";
    manifest.config_json =
        nlohmann::json{{"templates", args.templates}, {"mode", args.mode}}.dump();
    manifest.inputs[args.input] = relcot::file_digest(args.input);
    relcot::write_manifest(manifest, out_path(args.out_dir, "manifest.json"));
    return 0;
}

struct TrainArgs {
    std::string dataset;
    std::string config_path;
    std::string model_config_path;
    std::uint64_t model_seed = 7;
    std::string out_dir = ".";

    // CLI overrides (applied on top of --config when the flag was given).
    CLI::App* cmd = nullptr;
    std::size_t batch_size = 0;
    std::size_t grad_accum_steps = 0;
    double learning_rate = 0.0;
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    std::string loss_mask;
    std::size_t lora_r = 0;
    double lora_alpha = 0.0;
    double lora_dropout = 0.0;
    std::vector<std::string> targets;
};

int cmd_train(const TrainArgs& args) {
    relcot::train::TrainConfig config;
    if (!args.config_path.empty()) {
        config = relcot::train::TrainConfig::from_json(read_file(args.config_path));
    }
    const auto given = [&](const std::string& flag) { return args.cmd->count(flag) > 0; };
    if (given("--batch-size")) config.batch_size = args.batch_size;
    if (given("--grad-accum-steps")) config.grad_accum_steps = args.grad_accum_steps;
    if (given("--learning-rate")) config.learning_rate = args.learning_rate;
    if (given("--epochs")) config.epochs = args.epochs;
    if (given("--seed")) config.seed = args.seed;
    if (given("--loss-mask")) {
        config.loss_mask_policy = relcot::train::loss_mask_policy_from_string(args.loss_mask);
    }
    if (given("--lora-r")) config.lora.r = args.lora_r;
    if (given("--lora-alpha")) config.lora.alpha = args.lora_alpha;
    if (given("--lora-dropout")) config.lora.dropout_p = args.lora_dropout;
    if (given("--target")) config.target_projections = args.targets;
    config.validate();

    relcot::nn::ToyTransformerConfig model_config;
    if (!args.model_config_path.empty()) {
        model_config = relcot::nn::ToyTransformerConfig::from_json(
            read_file(args.model_config_path));
    }

    const auto records = relcot::prompt::load_instruction_records(args.dataset);
    const auto vocab = relcot::train::build_vocab(records);
    if (vocab.size() > model_config.vocab_size) {
        throw std::runtime_error("dataset vocabulary has " + std::to_string(vocab.size()) +
                                 " entries but the model holds " +
                                 std::to_string(model_config.vocab_size));
    }
    std::vector<relcot::train::EncodedRecord> encoded;
    encoded.reserve(records.size());
    for (const auto& r : records) {
        encoded.push_back(relcot::train::encode_record(vocab, r, model_config.max_seq_len));
    }

    auto model = relcot::nn::ToyTransformer::init(model_config, args.model_seed);
    relcot::nn::Rng inject_rng(config.seed + 1);
    const std::size_t injected =
        inject_adapters(model, config.target_projections, config.lora, inject_rng);
    std::cout << "injected " << injected << " adapters ("
              << relcot::nn::count_parameters(model).trainable << " trainable parameters)\n";

    const auto report = relcot::train::train(model, encoded, config);
    std::cout << "trained " << report.updates << " updates in " << report.wall_seconds
              << "s, final loss " << report.final_loss << "\n";

    const std::string model_out = out_path(args.out_dir, "model.ckpt");
    const std::string adapter_out = out_path(args.out_dir, "adapter.ckpt");
    const std::string vocab_out = out_path(args.out_dir, "vocab.json");
    const std::string report_out = out_path(args.out_dir, "train_report.json");
    relcot::nn::save_model(model, model_out);
    relcot::nn::save_adapters(model, adapter_out);
    vocab.save(vocab_out);
    write_file(report_out, report.to_json() + "\n");
    std::cout << "wrote " << model_out << ", " << adapter_out << ", " << vocab_out << ", "
              << report_out << "\n";

    relcot::Manifest manifest;
    manifest.command = "train";
    manifest.seed = config.seed;
    nlohmann::json cfg = nlohmann::json::parse(config.to_json());
    cfg["model"] = nlohmann::json::parse(model_config.to_json());
    cfg["model_seed"] = args.model_seed;
    manifest.config_json = cfg.dump();
    manifest.inputs[args.dataset] = relcot::file_digest(args.dataset);
    relcot::write_manifest(manifest, out_path(args.out_dir, "manifest.json"));
    return 0;
}

struct InferArgs {
    std::string input;
    std::string backend = "rule-oracle";
    std::string model_dir;
    std::string templates = "default";
    std::string mode = "fused";
    std::size_t batch_size = 8;
    std::size_t max_new_tokens = 256;
    std::string translator_spec = "identity";
    std::string languages_csv;
    std::string translation_source = "stage_output";
    bool no_traces = false;
    std::string out_dir = ".";
};

int cmd_infer(const InferArgs& args) {
    namespace infer = relcot::infer;

    infer::InferenceOptions options;
    options.mode = relcot::prompt::prompt_mode_from_string(args.mode);
    options.batch_size = args.batch_size;
    options.limits.max_new_tokens = args.max_new_tokens;
    options.translation_source =
        infer::translation_source_from_string(args.translation_source);

    std::unique_ptr<infer::GeneratorBackend> backend;
    if (args.backend == "null") {
        backend = std::make_unique<infer::NullBackend>();
    } else if (args.backend == "rule-oracle") {
        std::shared_ptr<const relcot::preprocess::Translator> translator =
            relcot::preprocess::make_translator(args.translator_spec);
        backend = std::make_unique<infer::RuleOracleBackend>(
            load_language_table(args.languages_csv), std::move(translator));
    } else if (args.backend == "toy-model") {
        if (args.model_dir.empty()) {
            throw std::runtime_error("--model-dir is required for the toy-model backend");
        }
        auto model = relcot::nn::load_model((fs::path(args.model_dir) / "model.ckpt").string());
        auto vocab =
            relcot::train::Vocab::load((fs::path(args.model_dir) / "vocab.json").string());
        backend = std::make_unique<infer::ToyModelBackend>(std::move(model), std::move(vocab));
    } else {
        throw std::runtime_error("unknown backend \"" + args.backend +
                                 "\" (expected null, rule-oracle, or toy-model)");
    }

    const auto examples = relcot::load_examples(args.input);
    const auto templates = load_templates(args.templates);
    const auto run = infer::run_inference(examples, *backend, templates, options);

    for (const auto& failure : run.failures) {
        std::cerr << "warning: example \"" << failure.id << "\" failed: " << failure.message
                  << "\n";
    }

    const std::string pred_out = out_path(args.out_dir, "predictions.jsonl");
    const std::string tp_out = out_path(args.out_dir, "throughput.json");
    infer::save_predictions(infer::to_predictions(run, !args.no_traces), pred_out);
    write_file(tp_out, run.throughput.to_json() + "\n");
    std::cout << "wrote " << pred_out << " (" << run.results.size() << " predictions, "
              << run.failures.size() << " failures)\n";
    std::cout << "throughput: " << run.throughput.samples_per_second << " samples/sec at batch "
              << run.throughput.batch_size << "\n";

    relcot::Manifest manifest;
    manifest.command = "infer";
    manifest.config_json = nlohmann::json{{"backend", args.backend},
                                          {"templates", args.templates},
                                          {"mode", args.mode},
                                          {"batch_size", args.batch_size},
                                          {"max_new_tokens", args.max_new_tokens},
                                          {"translation_source", args.translation_source}}
                               .dump();
    manifest.inputs[args.input] = relcot::file_digest(args.input);
    const std::string dict = translator_input_path(args.translator_spec);
    if (args.backend == "rule-oracle" && !dict.empty()) {
        manifest.inputs[dict] = relcot::file_digest(dict);
    }
    relcot::write_manifest(manifest, out_path(args.out_dir, "manifest.json"));
    return 0;
}

struct EvalArgs {
    std::string predictions;
    std::string gold;
    std::string out_dir = ".";
};

int cmd_eval(const EvalArgs& args) {
    const auto predictions = relcot::infer::load_predictions(args.predictions);
    const auto gold = relcot::load_examples(args.gold);
    const auto report = relcot::infer::evaluate(predictions, gold);

    for (const auto& warning : report.warnings) std::cerr << "warning: " << warning << "\n";
    std::cout << "accuracy " << report.accuracy << ", precision " << report.precision
              << ", recall " << report.recall << ", f1 " << report.f1 << "\n";
    for (const auto& [code, lang] : report.per_language) {
        std::cout << "  " << code << ": " << lang.correct << "/" << lang.count << " correct\n";
    }

    const std::string out = out_path(args.out_dir, "eval_report.json");
    write_file(out, report.to_json() + "\n");
    std::cout << "wrote " << out << "\n";

    relcot::Manifest manifest;
    manifest.command = "eval";
    manifest.config_json = "{}";
    manifest.inputs[args.predictions] = relcot::file_digest(args.predictions);
    manifest.inputs[args.gold] = relcot::file_digest(args.gold);
    relcot::write_manifest(manifest, out_path(args.out_dir, "manifest.json"));
    return 0;
}

struct BenchArgs {
    std::size_t samples = 4096;
    std::size_t batch_size = 64;
    std::string out_dir = ".";
};

int cmd_bench(const BenchArgs& args) {
    const auto report = relcot::infer::bench_overhead(args.samples, args.batch_size);
    std::cout << "pipeline overhead: " << report.samples_per_second << " samples/sec ("
              << report.total_samples << " samples, batch " << report.batch_size << ")\n";

    const std::string out = out_path(args.out_dir, "throughput.json");
    write_file(out, report.to_json() + "\n");
    std::cout << "wrote " << out << "\n";

    relcot::Manifest manifest;
    manifest.command = "bench";
    manifest.config_json = nlohmann::json{{"samples", args.samples},
                                          {"batch_size", args.batch_size}}
                               .dump();
    relcot::write_manifest(manifest, out_path(args.out_dir, "manifest.json"));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multilingual query-category relevance pipeline"};
    app.set_version_flag("--version", relcot::kVersion);
    app.require_subcommand(1);

    PreprocessArgs pre;
    auto* pre_cmd = app.add_subcommand(
        "preprocess", "Complete languages, translate to English, normalize text");
    pre_cmd->add_option("--input", pre.input, "Examples file (.jsonl or .csv)")->required();
    pre_cmd->add_option("--languages", pre.languages_csv,
                        "Language table CSV (code,name); builtin table when omitted");
    pre_cmd->add_option("--translator", pre.translator_spec,
                        "Translator spec: identity or dict:<path>");
    pre_cmd->add_option("--out-dir", pre.out_dir, "Output directory");

    BuildDatasetArgs build;
    auto* build_cmd = app.add_subcommand(
        "build-dataset", "Render preprocessed examples into instruction-tuning rows");
    build_cmd->add_option("--input", build.input, "Preprocessed examples (.jsonl)")->required();
    build_cmd->add_option("--templates", build.templates,
                          "Template set: default, compact, or a directory of .tmpl files");
    build_cmd->add_option("--mode", build.mode, "Prompting mode: staged or fused");
    build_cmd->add_option("--out-dir", build.out_dir, "Output directory");

    TrainArgs train;
    auto* train_cmd =
        app.add_subcommand("train", "Fine-tune adapters on an instruction dataset");
    train.cmd = train_cmd;
    train_cmd->add_option("--dataset", train.dataset, "Instruction dataset (.jsonl)")->required();
    train_cmd->add_option("--config", train.config_path, "Train config JSON file");
    train_cmd->add_option("--model-config", train.model_config_path, "Model config JSON file");
    train_cmd->add_option("--model-seed", train.model_seed, "Base-model init seed");
    train_cmd->add_option("--batch-size", train.batch_size, "Micro-batch size");
    train_cmd->add_option("--grad-accum-steps", train.grad_accum_steps,
                          "Micro-batches per optimizer update");
    train_cmd->add_option("--learning-rate", train.learning_rate, "Adam learning rate");
    train_cmd->add_option("--epochs", train.epochs, "Training epochs");
    train_cmd->add_option("--seed", train.seed, "Shuffle/dropout/adapter-init seed");
    train_cmd->add_option("--loss-mask", train.loss_mask,
                          "Loss mask policy: response_only or full_sequence");
    train_cmd->add_option("--lora-r", train.lora_r, "Adapter rank");
    train_cmd->add_option("--lora-alpha", train.lora_alpha, "Adapter scaling numerator");
    train_cmd->add_option("--lora-dropout", train.lora_dropout, "Adapter dropout probability");
    train_cmd->add_option("--target", train.targets,
                          "Projection to adapt (repeatable; default all seven)");
    train_cmd->add_option("--out-dir", train.out_dir, "Output directory");

    InferArgs infer;
    auto* infer_cmd = app.add_subcommand("infer", "Run batched inference over examples");
    infer_cmd->add_option("--input", infer.input, "Examples file (.jsonl or .csv)")->required();
    infer_cmd->add_option("--backend", infer.backend,
                          "Generator backend: null, rule-oracle, or toy-model");
    infer_cmd->add_option("--model-dir", infer.model_dir,
                          "Directory with model.ckpt and vocab.json (toy-model backend)");
    infer_cmd->add_option("--templates", infer.templates,
                          "Template set: default, compact, or a directory");
    infer_cmd->add_option("--mode", infer.mode, "Prompting mode: staged or fused");
    infer_cmd->add_option("--batch-size", infer.batch_size, "Examples per batch");
    infer_cmd->add_option("--max-new-tokens", infer.max_new_tokens,
                          "Generation budget per prompt");
    infer_cmd->add_option("--translator", infer.translator_spec,
                          "Translator spec for the rule-oracle backend");
    infer_cmd->add_option("--languages", infer.languages_csv,
                          "Language table CSV for the rule-oracle backend");
    infer_cmd->add_option("--translation-source", infer.translation_source,
                          "Staged-mode translation context: stage_output or offline");
    infer_cmd->add_flag("--no-traces", infer.no_traces,
                        "Omit reasoning traces from predictions.jsonl");
    infer_cmd->add_option("--out-dir", infer.out_dir, "Output directory");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold labels");
    eval_cmd->add_option("--predictions", eval.predictions, "predictions.jsonl")->required();
    eval_cmd->add_option("--gold", eval.gold, "Labeled examples file")->required();
    eval_cmd->add_option("--out-dir", eval.out_dir, "Output directory");

    BenchArgs bench;
    auto* bench_cmd =
        app.add_subcommand("bench", "Measure pipeline overhead with the null backend");
    bench_cmd->add_option("--samples", bench.samples, "Synthetic example count");
    bench_cmd->add_option("--batch-size", bench.batch_size, "Examples per batch");
    bench_cmd->add_option("--out-dir", bench.out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (pre_cmd->parsed()) return cmd_preprocess(pre);
        if (build_cmd->parsed()) return cmd_build_dataset(build);
        if (train_cmd->parsed()) return cmd_train(train);
        if (infer_cmd->parsed()) return cmd_infer(infer);
        if (eval_cmd->parsed()) return cmd_eval(eval);
        if (bench_cmd->parsed()) return cmd_bench(bench);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
