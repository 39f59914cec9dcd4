#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "relcot/types.hpp"

namespace relcot::prompt {

/// Reasoning stages, in pipeline order.
enum class Stage {
    Translation = 0,
    IntentUnderstanding = 1,
    CategoryMatching = 2,
    RelevanceJudgment = 3,
};

inline constexpr std::array<Stage, 4> kStageOrder = {
    Stage::Translation,
    Stage::IntentUnderstanding,
    Stage::CategoryMatching,
    Stage::RelevanceJudgment,
};

/// Serialization name, e.g. "CategoryMatching".
std::string stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

/// Fixed heading used in fused prompts and responses, e.g.
/// "Step 3: Category Matching". The headings are load-bearing: trace parsing
/// splits on them, so they never change between versions.
std::string stage_heading(Stage stage);

/// Placeholder names a stage's template body may reference. Later stages may
/// use everything earlier ones produced.
const std::vector<std::string>& stage_placeholders(Stage stage);

/// All recognized placeholder names.
const std::vector<std::string>& all_placeholders();

enum class PromptMode {
    Staged,  // four prompt/response rounds per example
    Fused,   // one prompt eliciting all four steps in a single generation
};

std::string to_string(PromptMode mode);
PromptMode prompt_mode_from_string(const std::string& text);

/// A versioned stage template. The body is plain text with placeholders
/// written {query}, {language}, {translation}, {intent}, {category_path},
/// {matching_analysis}; only the subset valid for the stage may appear.
struct PromptTemplate {
    std::string template_id;
    Stage stage = Stage::Translation;
    TaskKind task_kind = TaskKind::QC;
    std::string body;
    std::string version;

    bool operator==(const PromptTemplate&) const = default;
};

/// Recognized placeholder names referenced by a body, in first-appearance
/// order (deduplicated).
std::vector<std::string> body_placeholders(const std::string& body);

/// Throws std::invalid_argument on an empty id/body/version, a body
/// referencing a placeholder invalid for the template's stage, or a brace
/// marker {word} that is not a recognized placeholder at all.
void validate_template(const PromptTemplate& tmpl);

/// Fills every placeholder in the body from the context map. Throws when a
/// referenced placeholder is missing from the context ("missing placeholder:
/// <name>") or when the substituted {query} value is empty.
std::string render_stage_prompt(const PromptTemplate& tmpl,
                                const std::map<std::string, std::string>& context);

/// One prompt concatenating all four stage instructions under fixed step
/// headings, ending with an instruction to answer under the same headings
/// and finish with a single label-digit line. Downstream-stage placeholders
/// ({translation}, {intent}, {matching_analysis}) are filled with references
/// to the earlier steps' outputs since those texts do not exist yet.
/// Requires exactly one template per stage, all with the example's task_kind.
std::string render_fused_prompt(const std::vector<PromptTemplate>& templates,
                                const RelevanceExample& example);

/// Builds the placeholder context for one stage of an example. Earlier-stage
/// outputs are supplied via the optional arguments; pass only what the stage
/// needs.
std::map<std::string, std::string> stage_context(const RelevanceExample& example,
                                                 const std::string& translation = "",
                                                 const std::string& intent = "",
                                                 const std::string& matching_analysis = "");

/// One instruction-tuning row.
struct InstructionRecord {
    std::string instruction;
    std::string input;  // kept for dataset-format compatibility; always empty here
    std::string response;
    Stage stage = Stage::Translation;
    std::string source_example_id;

    bool operator==(const InstructionRecord&) const = default;
};

/// JSONL with keys instruction/input/response/stage/source_example_id.
std::string write_instruction_records(const std::vector<InstructionRecord>& records);
std::vector<InstructionRecord> parse_instruction_records(std::istream& in);
void save_instruction_records(const std::vector<InstructionRecord>& records,
                              const std::string& path);
std::vector<InstructionRecord> load_instruction_records(const std::string& path);

/// Supplies gold stage outputs when building training data. judgment_response
/// must end with a line "Final answer: <digit>" rendering the given label.
class StageOracle {
public:
    virtual ~StageOracle() = default;

    /// English text of the query (stage 1 gold output).
    virtual std::string translation(const RelevanceExample& example) const = 0;

    virtual std::string intent(const RelevanceExample& example,
                               const std::string& translation) const = 0;

    /// Must end with the line "Overall match: yes" or "Overall match: no".
    virtual std::string matching_analysis(const RelevanceExample& example,
                                          const std::string& translation,
                                          const std::string& intent) const = 0;

    virtual std::string judgment_response(const RelevanceExample& example,
                                          const std::string& matching_analysis,
                                          Label label) const = 0;

    /// The label the oracle itself would assign (for unlabeled inputs).
    virtual Label judge(const RelevanceExample& example) const = 0;
};

/// Renders every labeled example into instruction rows. Staged mode emits one
/// row per stage (4 per example); Fused mode emits a single row whose
/// response carries all four headed stage outputs and ends with the label
/// digit. Throws on an unlabeled example; oracle failures are rethrown with
/// the example id attached.
std::vector<InstructionRecord> build_instruction_dataset(
    const std::vector<RelevanceExample>& examples,
    const std::vector<PromptTemplate>& templates, PromptMode mode, const StageOracle& oracle);

/// Assembles the canonical fused response text: the four stage outputs under
/// their headings, in order. stage_responses[3] must already end with the
/// "Final answer: <digit>" line (as StageOracle::judgment_response does).
std::string render_fused_response(const std::array<std::string, 4>& stage_responses);

/// Extracts the final label from a response. Policy: take the last non-empty
/// line, split into whitespace tokens, strip surrounding punctuation; exactly
/// one token equal to "0" or "1" decides. Throws "no label found" on zero
/// matches and "ambiguous label" when both digits appear.
Label parse_judgment(const std::string& response);

/// Splits a response carrying the four stage headings into a CoTTrace.
/// Headings must appear in stage order; a missing heading throws an error
/// naming the stage. Works for fused responses and for staged responses that
/// were assembled under the same headings.
CoTTrace parse_trace(const std::string& response, PromptMode mode);

/// Assembles a trace directly from four per-stage response texts.
CoTTrace parse_trace(const std::array<std::string, 4>& stage_responses);

/// Shipped template sets. The wording is a repo asset, versioned via the
/// template files under templates/; these functions return the same content
/// compiled in, so library users need no data directory.
std::vector<PromptTemplate> default_templates(TaskKind kind);
std::vector<PromptTemplate> compact_templates(TaskKind kind);

/// Template file format: front-matter lines `template_id:`, `stage:`,
/// `task_kind:`, `version:` in any order, then a line `---`, then the body
/// verbatim.
PromptTemplate parse_template_file(const std::string& text);
std::string write_template_file(const PromptTemplate& tmpl);
PromptTemplate load_template(const std::string& path);
void save_template(const PromptTemplate& tmpl, const std::string& path);

/// Loads every *.tmpl file in a directory and returns the templates matching
/// `kind`, validated. Throws if the directory yields no usable set.
std::vector<PromptTemplate> load_template_dir(const std::string& dir, TaskKind kind);

/// Picks the single template for a stage out of a set; throws on duplicates
/// ("duplicate stage: <name>") or absence ("missing stage: <name>"), and on
/// mixed task kinds ("inconsistent task_kind").
const PromptTemplate& template_for_stage(const std::vector<PromptTemplate>& templates,
                                         Stage stage);

/// Validates a 4-template set: one per stage, uniform task_kind, each
/// template valid.
void validate_template_set(const std::vector<PromptTemplate>& templates);

}  // namespace relcot::prompt
