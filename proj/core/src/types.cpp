#include "relcot/types.hpp"

#include <cctype>

namespace relcot {

std::string to_string(TaskKind kind) {
    return kind == TaskKind::QI ? "QI" : "QC";
}

TaskKind task_kind_from_string(const std::string& text) {
    if (text == "QI") return TaskKind::QI;
    if (text == "QC") return TaskKind::QC;
    throw std::invalid_argument("unknown task_kind: \"" + text + "\" (expected QI or QC)");
}

void validate_language_code(const std::string& code) {
    if (code.empty()) {
        throw std::invalid_argument("language code is empty");
    }
    for (char c : code) {
        if (!((c >= 'a' && c <= 'z') || c == '-')) {
            throw std::invalid_argument("language code \"" + code +
                                        "\" must be lowercase ASCII letters or hyphen");
        }
    }
}

Label label_from_int(int value) {
    if (value == 0) return Label::Irrelevant;
    if (value == 1) return Label::Relevant;
    throw std::invalid_argument("invalid label " + std::to_string(value) + " (expected 0 or 1)");
}

namespace {

bool is_blank(const std::string& text) {
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

}  // namespace

CategoryPath CategoryPath::parse(const std::string& rendered) {
    CategoryPath path;
    const std::string sep = kSeparator;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = rendered.find(sep, start);
        if (pos == std::string::npos) {
            path.levels.push_back(rendered.substr(start));
            break;
        }
        path.levels.push_back(rendered.substr(start, pos - start));
        start = pos + sep.size();
    }
    path.validate();
    return path;
}

std::string CategoryPath::render() const {
    validate();
    std::string out;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (i > 0) out += kSeparator;
        out += levels[i];
    }
    return out;
}

void CategoryPath::validate() const {
    if (levels.empty()) {
        throw std::invalid_argument("category path has no levels");
    }
    for (const auto& level : levels) {
        if (level.empty() || is_blank(level)) {
            throw std::invalid_argument("category level is empty");
        }
        if (level.find(kSeparator) != std::string::npos) {
            throw std::invalid_argument("category level \"" + level +
                                        "\" contains the reserved separator \"" +
                                        std::string(kSeparator) + "\"");
        }
    }
}

}  // namespace relcot
