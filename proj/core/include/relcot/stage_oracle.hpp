#pragma once

#include <string>
#include <vector>

#include "relcot/prompt.hpp"
#include "relcot/types.hpp"

namespace relcot::rules {

/// Lowercased alphanumeric token runs, in order. Non-ASCII bytes count as
/// token characters and pass through unchanged.
std::vector<std::string> tokens(const std::string& text);

/// The token plus cheap singular variants: drop a trailing "s" (length > 3,
/// not "ss"), drop a trailing "es" (length > 4). "wallets" -> {wallets,
/// wallet}; "dresses" -> {dresses, dresse, dress}.
std::vector<std::string> forms(const std::string& token);

/// True when the two tokens share any form.
bool share_form(const std::string& a, const std::string& b);

/// What the keyword/attribute rule system concluded about one query/category
/// pair. The last query token is taken as the product type, the rest as
/// attributes.
struct MatchFacts {
    std::string english_query;
    std::vector<std::string> query_tokens;
    std::string product_type;
    std::vector<std::string> attributes;
    bool type_match = false;
    bool attribute_match = false;
    int matched_level = 0;  // deepest category level hit, 1-based; 0 = none
    bool relevant = false;  // any query token hits any category token

    bool operator==(const MatchFacts&) const = default;
};

/// Runs the rule system over an English query and a category path. Throws if
/// the query yields no tokens.
MatchFacts analyze(const std::string& english_query, const CategoryPath& category);

}  // namespace relcot::rules

namespace relcot::prompt {

/// Deterministic StageOracle over the keyword/attribute rule system. Needs an
/// English view of the query: translated_text when set, raw_text for English
/// records; anything else is an error. Full style writes sentence-level stage
/// outputs; Compact writes terse token sequences for small-vocabulary
/// fine-tuning fixtures.
class RuleStageOracle : public StageOracle {
public:
    enum class Style { Full, Compact };

    explicit RuleStageOracle(Style style = Style::Full) : style_(style) {}

    std::string translation(const RelevanceExample& example) const override;
    std::string intent(const RelevanceExample& example,
                       const std::string& translation) const override;
    std::string matching_analysis(const RelevanceExample& example, const std::string& translation,
                                  const std::string& intent) const override;
    std::string judgment_response(const RelevanceExample& example,
                                  const std::string& matching_analysis,
                                  Label label) const override;
    Label judge(const RelevanceExample& example) const override;

    Style style() const { return style_; }

private:
    Style style_;
};

}  // namespace relcot::prompt
