#pragma once

#include <map>
#include <string>
#include <vector>

#include "relcot/inference.hpp"
#include "relcot/types.hpp"

namespace relcot::infer {

struct LanguageBreakdown {
    std::size_t count = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;

    bool operator==(const LanguageBreakdown&) const = default;
};

/// Binary classification metrics with Relevant as the positive class.
/// Ratios with a zero denominator come out 0 rather than NaN.
struct EvalReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t true_negatives = 0;
    std::size_t false_negatives = 0;
    std::map<std::string, LanguageBreakdown> per_language;  // keyed by language code
    std::vector<std::string> warnings;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
};

/// Scores predictions against gold examples, joined by id. Duplicate ids on
/// either side keep the first occurrence and add a warning; a prediction/gold
/// id-set mismatch is an error listing what is missing or extra. Every gold
/// example must be labeled.
EvalReport evaluate(const std::vector<PredictionRecord>& predictions,
                    const std::vector<RelevanceExample>& gold);

}  // namespace relcot::infer
