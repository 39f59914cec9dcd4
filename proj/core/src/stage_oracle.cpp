#include "relcot/stage_oracle.hpp"

#include <algorithm>
#include <stdexcept>

namespace relcot::rules {

std::vector<std::string> tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if ((uc >= 'a' && uc <= 'z') || (uc >= '0' && uc <= '9') || uc > 127) {
            current.push_back(c);
        } else if (uc >= 'A' && uc <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

std::vector<std::string> forms(const std::string& token) {
    std::vector<std::string> out = {token};
    const std::size_t n = token.size();
    if (n > 3 && token.back() == 's' && token.compare(n - 2, 2, "ss") != 0) {
        out.push_back(token.substr(0, n - 1));
    }
    if (n > 4 && token.compare(n - 2, 2, "es") == 0) {
        out.push_back(token.substr(0, n - 2));
    }
    return out;
}

bool share_form(const std::string& a, const std::string& b) {
    const auto fa = forms(a);
    const auto fb = forms(b);
    for (const auto& x : fa) {
        if (std::find(fb.begin(), fb.end(), x) != fb.end()) return true;
    }
    return false;
}

MatchFacts analyze(const std::string& english_query, const CategoryPath& category) {
    category.validate();
    MatchFacts facts;
    facts.english_query = english_query;
    facts.query_tokens = tokens(english_query);
    if (facts.query_tokens.empty()) {
        throw std::invalid_argument("query \"" + english_query + "\" yields no tokens");
    }
    facts.product_type = facts.query_tokens.back();
    facts.attributes.assign(facts.query_tokens.begin(), facts.query_tokens.end() - 1);

    for (std::size_t level = 0; level < category.levels.size(); ++level) {
        const auto level_tokens = tokens(category.levels[level]);
        for (const auto& lt : level_tokens) {
            for (const auto& qt : facts.query_tokens) {
                if (!share_form(qt, lt)) continue;
                facts.matched_level = static_cast<int>(level) + 1;
                if (qt == facts.product_type) facts.type_match = true;
                if (qt != facts.product_type) facts.attribute_match = true;
            }
        }
    }
    facts.relevant = facts.matched_level > 0;
    return facts;
}

}  // namespace relcot::rules

namespace relcot::prompt {

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

std::string RuleStageOracle::translation(const RelevanceExample& example) const {
    const QueryRecord& q = example.query;
    if (q.translated_text.has_value()) return *q.translated_text;
    if (q.language.code == "en") return q.raw_text;
    throw std::runtime_error("example \"" + q.id +
                             "\": no English translation available (preprocess first)");
}

std::string RuleStageOracle::intent(const RelevanceExample& example,
                                    const std::string& translation) const {
    (void)example;
    const auto toks = rules::tokens(translation);
    if (toks.empty()) {
        throw std::invalid_argument("translation \"" + translation + "\" yields no tokens");
    }
    const std::string& type = toks.back();
    const std::vector<std::string> attrs(toks.begin(), toks.end() - 1);
    if (style_ == Style::Compact) {
        std::string out = "type " + type + " attrs ";
        out += attrs.empty() ? "none" : join(attrs, " ");
        return out;
    }
    std::string out = "The query asks for " + translation + ". Product type: " + type + ". ";
    out += attrs.empty() ? "Attributes: none." : "Attributes: " + join(attrs, ", ") + ".";
    return out;
}

std::string RuleStageOracle::matching_analysis(const RelevanceExample& example,
                                               const std::string& translation,
                                               const std::string& intent) const {
    (void)intent;
    const auto facts = rules::analyze(translation, example.category);
    const std::string verdict = facts.relevant ? "yes" : "no";
    if (style_ == Style::Compact) {
        std::string out = "match level " + std::to_string(facts.matched_level);
        out += facts.type_match ? " type yes" : " type no";
        out += facts.attribute_match ? " attr yes" : " attr no";
        out += "\nOverall match: " + verdict;
        return out;
    }

    std::string out = "Type consistency: the product type \"" + facts.product_type + "\" ";
    out += facts.type_match ? "matches the category path." : "does not appear in the category path.";
    out += " Hierarchy alignment: ";
    if (facts.matched_level > 0) {
        out += "the deepest matching level is " + std::to_string(facts.matched_level) + " of " +
               std::to_string(example.category.levels.size()) + ".";
    } else {
        out += "no level of the path matches the query.";
    }
    out += " Attribute compatibility: ";
    if (facts.attributes.empty()) {
        out += "no attributes were specified.";
    } else if (facts.attribute_match) {
        out += "the attributes [" + join(facts.attributes, ", ") + "] match the path.";
    } else {
        out += "the attributes [" + join(facts.attributes, ", ") + "] do not match the path.";
    }
    out += "\nOverall match: " + verdict;
    return out;
}

std::string RuleStageOracle::judgment_response(const RelevanceExample& example,
                                               const std::string& matching_analysis,
                                               Label label) const {
    (void)example;
    (void)matching_analysis;
    const bool relevant = label == Label::Relevant;
    if (style_ == Style::Compact) {
        return relevant ? "match yes\nFinal answer: 1" : "match no\nFinal answer: 0";
    }
    if (relevant) {
        return "The analysis found a match, so the query is relevant to this category.\n"
               "Final answer: 1";
    }
    return "The analysis found no match, so the query is not relevant to this category.\n"
           "Final answer: 0";
}

Label RuleStageOracle::judge(const RelevanceExample& example) const {
    const auto facts = rules::analyze(translation(example), example.category);
    return facts.relevant ? Label::Relevant : Label::Irrelevant;
}

}  // namespace relcot::prompt
