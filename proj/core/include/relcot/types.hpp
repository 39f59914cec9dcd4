#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace relcot {

/// Error raised while reading a record stream; carries the 1-based line
/// number of the offending row.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

enum class TaskKind {
    QI,  // query matched against an item listed under a category path
    QC,  // query matched against the category path itself
};

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& text);

/// A language code plus its full name. `name` stays empty until the code has
/// been completed against a LanguageTable; operations that need the full name
/// (translation, prompt rendering) treat an empty name as "not yet completed".
struct LanguageTag {
    std::string code;  // lowercase ASCII letters/hyphen, e.g. "en"
    std::string name;  // e.g. "English"

    bool operator==(const LanguageTag&) const = default;
};

/// Throws std::invalid_argument unless `code` is non-empty lowercase ASCII
/// letters/hyphen.
void validate_language_code(const std::string& code);

enum class Label : int {
    Irrelevant = 0,
    Relevant = 1,
};

inline int label_to_int(Label label) { return static_cast<int>(label); }

/// Accepts exactly 0 or 1.
Label label_from_int(int value);

/// Ordered category hierarchy, root first. Canonical text form joins the
/// levels with " > "; level text containing the separator is rejected so the
/// rendering stays invertible.
struct CategoryPath {
    std::vector<std::string> levels;

    static constexpr const char* kSeparator = " > ";

    static CategoryPath parse(const std::string& rendered);
    std::string render() const;

    /// Throws std::invalid_argument on an empty path, an empty/whitespace
    /// level, or a level containing the separator.
    void validate() const;

    bool operator==(const CategoryPath&) const = default;
};

struct QueryRecord {
    std::string id;
    std::string raw_text;
    LanguageTag language;
    std::optional<std::string> translated_text;  // English

    bool operator==(const QueryRecord&) const = default;
};

/// One query/category pair flowing through the pipeline. Training rows carry
/// a label; test rows may omit it.
struct RelevanceExample {
    QueryRecord query;
    CategoryPath category;
    std::optional<Label> label;
    TaskKind task_kind = TaskKind::QC;

    bool operator==(const RelevanceExample&) const = default;
};

/// Parsed four-stage reasoning trace. Stage order is fixed:
/// translation -> intent -> matching -> judgment.
struct CoTTrace {
    std::string translation;
    std::string intent;
    std::string matching_analysis;
    Label judgment = Label::Irrelevant;

    // Per-stage prompt/response texts in stage order. A fused run stores the
    // single prompt at index 0 and the split response blocks per stage.
    std::array<std::string, 4> stage_prompts{};
    std::array<std::string, 4> stage_responses{};

    bool operator==(const CoTTrace&) const = default;
};

}  // namespace relcot
