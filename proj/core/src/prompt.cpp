#include "relcot/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace relcot::prompt {

using nlohmann::json;

std::string stage_name(Stage stage) {
    switch (stage) {
        case Stage::Translation: return "Translation";
        case Stage::IntentUnderstanding: return "IntentUnderstanding";
        case Stage::CategoryMatching: return "CategoryMatching";
        case Stage::RelevanceJudgment: return "RelevanceJudgment";
    }
    throw std::invalid_argument("invalid stage value");
}

Stage stage_from_name(const std::string& name) {
    for (Stage s : kStageOrder) {
        if (stage_name(s) == name) return s;
    }
    throw std::invalid_argument("unknown stage \"" + name + "\"");
}

std::string stage_heading(Stage stage) {
    switch (stage) {
        case Stage::Translation: return "Step 1: Translation";
        case Stage::IntentUnderstanding: return "Step 2: Intent Understanding";
        case Stage::CategoryMatching: return "Step 3: Category Matching";
        case Stage::RelevanceJudgment: return "Step 4: Relevance Judgment";
    }
    throw std::invalid_argument("invalid stage value");
}

const std::vector<std::string>& stage_placeholders(Stage stage) {
    static const std::vector<std::string> translation = {"query", "language"};
    static const std::vector<std::string> intent = {"query", "language", "translation"};
    static const std::vector<std::string> matching = {"query", "language", "translation",
                                                      "intent", "category_path"};
    static const std::vector<std::string> judgment = {"query",  "language",      "translation",
                                                      "intent", "category_path", "matching_analysis"};
    switch (stage) {
        case Stage::Translation: return translation;
        case Stage::IntentUnderstanding: return intent;
        case Stage::CategoryMatching: return matching;
        case Stage::RelevanceJudgment: return judgment;
    }
    throw std::invalid_argument("invalid stage value");
}

const std::vector<std::string>& all_placeholders() {
    return stage_placeholders(Stage::RelevanceJudgment);
}

std::string to_string(PromptMode mode) {
    return mode == PromptMode::Staged ? "staged" : "fused";
}

PromptMode prompt_mode_from_string(const std::string& text) {
    if (text == "staged") return PromptMode::Staged;
    if (text == "fused") return PromptMode::Fused;
    throw std::invalid_argument("unknown prompt mode \"" + text + "\" (expected staged or fused)");
}

namespace {

bool is_marker_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Scans the body for {word} markers. Calls fn(name, start, end) for every
// marker, where [start, end) spans the braces.
template <typename Fn>
void scan_markers(const std::string& body, Fn&& fn) {
    std::size_t i = 0;
    while (i < body.size()) {
        if (body[i] != '{') {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < body.size() && is_marker_char(body[j])) ++j;
        if (j > i + 1 && j < body.size() && body[j] == '}') {
            fn(body.substr(i + 1, j - i - 1), i, j + 1);
            i = j + 1;
        } else {
            ++i;
        }
    }
}

bool is_known_placeholder(const std::string& name) {
    const auto& all = all_placeholders();
    return std::find(all.begin(), all.end(), name) != all.end();
}

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

constexpr const char* kFusedPreamble = "Work through the four steps below in order.";

constexpr const char* kFusedTrailing =
    "Now write your answer. Repeat each step heading exactly as given, put that step's "
    "output under it, and end with a single line containing only the final label: 1 if "
    "relevant, 0 if irrelevant.";

}  // namespace

std::vector<std::string> body_placeholders(const std::string& body) {
    std::vector<std::string> names;
    scan_markers(body, [&](const std::string& name, std::size_t, std::size_t) {
        if (!is_known_placeholder(name)) return;
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    });
    return names;
}

void validate_template(const PromptTemplate& tmpl) {
    if (tmpl.template_id.empty()) throw std::invalid_argument("template_id is empty");
    if (tmpl.body.empty()) {
        throw std::invalid_argument("template \"" + tmpl.template_id + "\" has an empty body");
    }
    if (tmpl.version.empty()) {
        throw std::invalid_argument("template \"" + tmpl.template_id + "\" has no version");
    }
    const auto& valid = stage_placeholders(tmpl.stage);
    scan_markers(tmpl.body, [&](const std::string& name, std::size_t, std::size_t) {
        if (!is_known_placeholder(name)) {
            throw std::invalid_argument("template \"" + tmpl.template_id +
                                        "\": unknown placeholder: " + name);
        }
        if (std::find(valid.begin(), valid.end(), name) == valid.end()) {
            throw std::invalid_argument("template \"" + tmpl.template_id + "\": placeholder " +
                                        name + " is not valid for stage " +
                                        stage_name(tmpl.stage));
        }
    });
}

std::string render_stage_prompt(const PromptTemplate& tmpl,
                                const std::map<std::string, std::string>& context) {
    validate_template(tmpl);
    std::string out;
    out.reserve(tmpl.body.size() + 64);
    std::size_t copied = 0;
    scan_markers(tmpl.body, [&](const std::string& name, std::size_t start, std::size_t end) {
        auto it = context.find(name);
        if (it == context.end()) {
            throw std::invalid_argument("missing placeholder: " + name);
        }
        if (name == "query" && trim(it->second).empty()) {
            throw std::invalid_argument("empty query substitution in template \"" +
                                        tmpl.template_id + "\"");
        }
        out.append(tmpl.body, copied, start - copied);
        out.append(it->second);
        copied = end;
    });
    out.append(tmpl.body, copied, tmpl.body.size() - copied);
    return out;
}

std::map<std::string, std::string> stage_context(const RelevanceExample& example,
                                                 const std::string& translation,
                                                 const std::string& intent,
                                                 const std::string& matching_analysis) {
    if (example.query.language.name.empty()) {
        throw std::invalid_argument("example \"" + example.query.id +
                                    "\": language was never completed");
    }
    std::map<std::string, std::string> ctx;
    ctx["query"] = example.query.raw_text;
    ctx["language"] = example.query.language.name;
    ctx["category_path"] = example.category.render();
    if (!translation.empty()) ctx["translation"] = translation;
    if (!intent.empty()) ctx["intent"] = intent;
    if (!matching_analysis.empty()) ctx["matching_analysis"] = matching_analysis;
    return ctx;
}

void validate_template_set(const std::vector<PromptTemplate>& templates) {
    if (templates.empty()) throw std::invalid_argument("empty template set");
    const TaskKind kind = templates.front().task_kind;
    for (const auto& t : templates) {
        validate_template(t);
        if (t.task_kind != kind) throw std::invalid_argument("inconsistent task_kind");
    }
    for (Stage s : kStageOrder) {
        template_for_stage(templates, s);
    }
}

const PromptTemplate& template_for_stage(const std::vector<PromptTemplate>& templates,
                                         Stage stage) {
    const PromptTemplate* found = nullptr;
    for (const auto& t : templates) {
        if (t.stage != stage) continue;
        if (found != nullptr) {
            throw std::invalid_argument("duplicate stage: " + stage_name(stage));
        }
        found = &t;
    }
    if (found == nullptr) throw std::invalid_argument("missing stage: " + stage_name(stage));
    return *found;
}

std::string render_fused_prompt(const std::vector<PromptTemplate>& templates,
                                const RelevanceExample& example) {
    if (templates.size() != 4) {
        throw std::invalid_argument("fused prompt needs exactly 4 templates, got " +
                                    std::to_string(templates.size()));
    }
    validate_template_set(templates);
    if (templates.front().task_kind != example.task_kind) {
        throw std::invalid_argument("inconsistent task_kind: templates are " +
                                    relcot::to_string(templates.front().task_kind) +
                                    " but example \"" + example.query.id + "\" is " +
                                    relcot::to_string(example.task_kind));
    }

    // Downstream placeholders point the model at its own earlier steps.
    auto ctx = stage_context(example, "your Step 1 output", "your Step 2 output",
                             "your Step 3 analysis");

    std::string out = kFusedPreamble;
    out += "\n";
    for (Stage s : kStageOrder) {
        out += "\n" + stage_heading(s) + "\n";
        out += render_stage_prompt(template_for_stage(templates, s), ctx);
        out += "\n";
    }
    out += "\n";
    out += kFusedTrailing;
    return out;
}

std::string render_fused_response(const std::array<std::string, 4>& stage_responses) {
    std::string out;
    for (std::size_t i = 0; i < stage_responses.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += stage_heading(kStageOrder[i]) + "\n" + stage_responses[i];
    }
    return out;
}

std::vector<InstructionRecord> build_instruction_dataset(
    const std::vector<RelevanceExample>& examples,
    const std::vector<PromptTemplate>& templates, PromptMode mode, const StageOracle& oracle) {
    // The template argument is a library: it may carry one 4-template set per
    // task kind. Each example picks the set matching its kind.
    std::map<TaskKind, std::vector<PromptTemplate>> sets;
    for (const auto& t : templates) sets[t.task_kind].push_back(t);
    for (auto& [kind, set] : sets) {
        try {
            validate_template_set(set);
        } catch (const std::exception& e) {
            throw std::invalid_argument(std::string("templates for task kind ") +
                                        relcot::to_string(kind) + ": " + e.what());
        }
    }

    std::vector<InstructionRecord> records;
    records.reserve(examples.size() * (mode == PromptMode::Staged ? 4 : 1));
    for (const auto& ex : examples) {
        const std::string& id = ex.query.id;
        if (!ex.label.has_value()) {
            throw std::invalid_argument("example \"" + id + "\" has no label");
        }
        auto set_it = sets.find(ex.task_kind);
        if (set_it == sets.end()) {
            throw std::invalid_argument("no templates for task kind " +
                                        relcot::to_string(ex.task_kind) + " (example \"" + id +
                                        "\")");
        }
        const auto& set = set_it->second;

        std::string tr, in, ma, jr;
        try {
            tr = oracle.translation(ex);
            in = oracle.intent(ex, tr);
            ma = oracle.matching_analysis(ex, tr, in);
            jr = oracle.judgment_response(ex, ma, *ex.label);
        } catch (const std::exception& e) {
            throw std::runtime_error("oracle failed on example \"" + id + "\": " + e.what());
        }

        if (mode == PromptMode::Staged) {
            const std::array<std::string, 4> responses = {tr, in, ma, jr};
            const std::array<std::string, 3> flows = {tr, in, ma};
            for (Stage s : kStageOrder) {
                const auto idx = static_cast<std::size_t>(s);
                auto ctx = stage_context(ex, idx >= 1 ? flows[0] : "", idx >= 2 ? flows[1] : "",
                                         idx >= 3 ? flows[2] : "");
                InstructionRecord rec;
                rec.instruction = render_stage_prompt(template_for_stage(set, s), ctx);
                rec.response = responses[idx];
                rec.stage = s;
                rec.source_example_id = id;
                records.push_back(std::move(rec));
            }
        } else {
            InstructionRecord rec;
            rec.instruction = render_fused_prompt(set, ex);
            rec.response = render_fused_response({tr, in, ma, jr});
            rec.stage = Stage::RelevanceJudgment;
            rec.source_example_id = id;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

Label parse_judgment(const std::string& response) {
    // Locate the last line with visible content.
    std::size_t end = response.size();
    std::string line;
    while (end > 0) {
        std::size_t start = response.rfind('\n', end - 1);
        start = (start == std::string::npos) ? 0 : start + 1;
        line = response.substr(start, end - start);
        if (!trim(line).empty()) break;
        if (start == 0) break;
        end = start - 1;
    }

    int zeros = 0;
    int ones = 0;
    std::istringstream words(line);
    std::string token;
    while (words >> token) {
        // Strip surrounding ASCII punctuation so "1." or "(0)" still count.
        std::size_t a = 0;
        std::size_t b = token.size();
        auto is_punct = [](char c) {
            return std::ispunct(static_cast<unsigned char>(c)) != 0;
        };
        while (a < b && is_punct(token[a])) ++a;
        while (b > a && is_punct(token[b - 1])) --b;
        const std::string core = token.substr(a, b - a);
        if (core == "0") ++zeros;
        if (core == "1") ++ones;
    }
    if (zeros + ones == 0) throw std::runtime_error("no label found");
    if (zeros + ones > 1) throw std::runtime_error("ambiguous label");
    return ones == 1 ? Label::Relevant : Label::Irrelevant;
}

namespace {

// Returns the position of `heading` at the start of a line at or after
// `from`, or npos.
std::size_t find_heading(const std::string& text, const std::string& heading, std::size_t from) {
    std::size_t pos = from;
    while ((pos = text.find(heading, pos)) != std::string::npos) {
        if (pos == 0 || text[pos - 1] == '\n') return pos;
        pos += 1;
    }
    return std::string::npos;
}

}  // namespace

CoTTrace parse_trace(const std::string& response, PromptMode mode) {
    (void)mode;  // both modes carry the same headed-text format
    std::array<std::size_t, 4> head_pos{};
    std::array<std::size_t, 4> content_start{};
    std::size_t from = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::string heading = stage_heading(kStageOrder[i]);
        std::size_t pos = find_heading(response, heading, from);
        if (pos == std::string::npos) {
            throw std::runtime_error("missing stage heading: " + stage_name(kStageOrder[i]));
        }
        head_pos[i] = pos;
        content_start[i] = pos + heading.size();
        from = content_start[i];
    }

    std::array<std::string, 4> sections;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t begin = content_start[i];
        const std::size_t end = (i + 1 < 4) ? head_pos[i + 1] : response.size();
        sections[i] = trim(response.substr(begin, end - begin));
    }
    return parse_trace(sections);
}

CoTTrace parse_trace(const std::array<std::string, 4>& stage_responses) {
    CoTTrace trace;
    trace.translation = trim(stage_responses[0]);
    trace.intent = trim(stage_responses[1]);
    trace.matching_analysis = trim(stage_responses[2]);
    trace.judgment = parse_judgment(stage_responses[3]);
    trace.stage_responses = stage_responses;
    return trace;
}

namespace {

json record_to_json(const InstructionRecord& rec) {
    json j;
    j["instruction"] = rec.instruction;
    j["input"] = rec.input;
    j["response"] = rec.response;
    j["stage"] = stage_name(rec.stage);
    j["source_example_id"] = rec.source_example_id;
    return j;
}

InstructionRecord record_from_json(const json& j, std::size_t lineno) {
    for (const char* key : {"instruction", "input", "response", "stage", "source_example_id"}) {
        if (!j.contains(key)) {
            throw ParseError(lineno, std::string("missing key \"") + key + "\"");
        }
    }
    InstructionRecord rec;
    rec.instruction = j.at("instruction").get<std::string>();
    rec.input = j.at("input").get<std::string>();
    rec.response = j.at("response").get<std::string>();
    rec.stage = stage_from_name(j.at("stage").get<std::string>());
    rec.source_example_id = j.at("source_example_id").get<std::string>();
    if (rec.instruction.empty()) throw ParseError(lineno, "empty instruction");
    if (rec.response.empty()) throw ParseError(lineno, "empty response");
    return rec;
}

}  // namespace

std::string write_instruction_records(const std::vector<InstructionRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        out += record_to_json(rec).dump();
        out += '\n';
    }
    return out;
}

std::vector<InstructionRecord> parse_instruction_records(std::istream& in) {
    std::vector<InstructionRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
        }
        records.push_back(record_from_json(j, lineno));
    }
    return records;
}

void save_instruction_records(const std::vector<InstructionRecord>& records,
                              const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << write_instruction_records(records);
    if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<InstructionRecord> load_instruction_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_instruction_records(in);
}

namespace {

PromptTemplate make_template(std::string id, Stage stage, TaskKind kind, std::string body) {
    PromptTemplate t;
    t.template_id = std::move(id);
    t.stage = stage;
    t.task_kind = kind;
    t.body = std::move(body);
    t.version = "1";
    return t;
}

std::vector<PromptTemplate> default_set(TaskKind kind) {
    const std::string k = kind == TaskKind::QI ? "qi" : "qc";
    std::vector<PromptTemplate> set;
    set.push_back(make_template(
        "default-" + k + "-translation", Stage::Translation, kind,
        "The user query is written in {language}.\n"
        "Translate the following query into English: {query}"));
    set.push_back(make_template(
        "default-" + k + "-intent", Stage::IntentUnderstanding, kind,
        "Consider the English query \"{translation}\".\n"
        "What is the user's shopping intent? State the product type the user wants and the "
        "key attributes they specified."));
    if (kind == TaskKind::QC) {
        set.push_back(make_template(
            "default-qc-matching", Stage::CategoryMatching, kind,
            "A product category path is given: \"{category_path}\".\n"
            "Does the intent match this category? Assess type consistency, alignment with "
            "the category hierarchy, and attribute compatibility.\n"
            "Intent: {intent}\n"
            "End your analysis with the line \"Overall match: yes\" or \"Overall match: "
            "no\"."));
        set.push_back(make_template(
            "default-qc-judgment", Stage::RelevanceJudgment, kind,
            "Decide whether the query is relevant to the category path \"{category_path}\".\n"
            "Matching analysis: {matching_analysis}\n"
            "Answer with a single line \"Final answer: 1\" if relevant or \"Final answer: 0\" "
            "if irrelevant."));
    } else {
        set.push_back(make_template(
            "default-qi-matching", Stage::CategoryMatching, kind,
            "An item is listed under the category path \"{category_path}\".\n"
            "Would the item satisfy the intent? Assess type consistency, alignment with the "
            "category hierarchy, and attribute compatibility.\n"
            "Intent: {intent}\n"
            "End your analysis with the line \"Overall match: yes\" or \"Overall match: "
            "no\"."));
        set.push_back(make_template(
            "default-qi-judgment", Stage::RelevanceJudgment, kind,
            "Decide whether the query is relevant to an item listed under the category path "
            "\"{category_path}\".\n"
            "Matching analysis: {matching_analysis}\n"
            "Answer with a single line \"Final answer: 1\" if relevant or \"Final answer: 0\" "
            "if irrelevant."));
    }
    return set;
}

std::vector<PromptTemplate> compact_set(TaskKind kind) {
    const std::string k = kind == TaskKind::QI ? "qi" : "qc";
    const std::string noun = kind == TaskKind::QI ? "item category" : "category";
    std::vector<PromptTemplate> set;
    set.push_back(make_template("compact-" + k + "-translation", Stage::Translation, kind,
                                "Translate to English ({language}): {query}"));
    set.push_back(make_template("compact-" + k + "-intent", Stage::IntentUnderstanding, kind,
                                "Intent of \"{translation}\"?"));
    set.push_back(make_template("compact-" + k + "-matching", Stage::CategoryMatching, kind,
                                "Match intent to " + noun + " \"{category_path}\". Intent: "
                                "{intent}. Check type, hierarchy, attribute."));
    set.push_back(make_template("compact-" + k + "-judgment", Stage::RelevanceJudgment, kind,
                                "Decide relevance for " + noun + " \"{category_path}\". "
                                "Analysis: {matching_analysis}. Answer 1 or 0."));
    return set;
}

}  // namespace

std::vector<PromptTemplate> default_templates(TaskKind kind) { return default_set(kind); }

std::vector<PromptTemplate> compact_templates(TaskKind kind) { return compact_set(kind); }

PromptTemplate parse_template_file(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    PromptTemplate t;
    bool saw_id = false, saw_stage = false, saw_kind = false, saw_version = false;
    bool saw_divider = false;
    std::size_t lineno = 0;
    std::size_t body_offset = 0;
    while (std::getline(in, line)) {
        ++lineno;
        body_offset += line.size() + 1;
        if (line == "---") {
            saw_divider = true;
            break;
        }
        const std::size_t colon = line.find(": ");
        if (colon == std::string::npos) {
            throw ParseError(lineno, "expected `key: value` front-matter or `---`");
        }
        const std::string key = line.substr(0, colon);
        const std::string value = line.substr(colon + 2);
        if (key == "template_id") {
            t.template_id = value;
            saw_id = true;
        } else if (key == "stage") {
            t.stage = stage_from_name(value);
            saw_stage = true;
        } else if (key == "task_kind") {
            t.task_kind = task_kind_from_string(value);
            saw_kind = true;
        } else if (key == "version") {
            t.version = value;
            saw_version = true;
        } else {
            throw ParseError(lineno, "unknown front-matter key \"" + key + "\"");
        }
    }
    if (!saw_divider) throw std::invalid_argument("template file has no `---` divider");
    if (!saw_id || !saw_stage || !saw_kind || !saw_version) {
        throw std::invalid_argument("template front-matter must set template_id, stage, "
                                    "task_kind, and version");
    }
    t.body = body_offset < text.size() ? text.substr(body_offset) : "";
    if (!t.body.empty() && t.body.back() == '\n') t.body.pop_back();
    validate_template(t);
    return t;
}

std::string write_template_file(const PromptTemplate& tmpl) {
    validate_template(tmpl);
    std::string out;
    out += "template_id: " + tmpl.template_id + "\n";
    out += "stage: " + stage_name(tmpl.stage) + "\n";
    out += "task_kind: " + relcot::to_string(tmpl.task_kind) + "\n";
    out += "version: " + tmpl.version + "\n";
    out += "---\n";
    out += tmpl.body;
    out += "\n";
    return out;
}

PromptTemplate load_template(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_template_file(buf.str());
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void save_template(const PromptTemplate& tmpl, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << write_template_file(tmpl);
    if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<PromptTemplate> load_template_dir(const std::string& dir, TaskKind kind) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("template directory " + dir + " does not exist");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".tmpl") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<PromptTemplate> set;
    for (const auto& path : files) {
        PromptTemplate t = load_template(path.string());
        if (t.task_kind == kind) set.push_back(std::move(t));
    }
    if (set.empty()) {
        throw std::runtime_error("no " + relcot::to_string(kind) + " templates under " + dir);
    }
    validate_template_set(set);
    return set;
}

}  // namespace relcot::prompt
