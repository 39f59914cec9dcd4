#include "relcot/eval.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace relcot::infer {

using nlohmann::json;

namespace {

std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 5) {
    std::string out;
    for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
        if (!out.empty()) out += ", ";
        out += "\"" + ids[i] + "\"";
    }
    if (ids.size() > limit) out += ", ... (" + std::to_string(ids.size()) + " total)";
    return out;
}

double ratio(std::size_t num, std::size_t denom) {
    return denom == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(denom);
}

}  // namespace

EvalReport evaluate(const std::vector<PredictionRecord>& predictions,
                    const std::vector<RelevanceExample>& gold) {
    EvalReport report;

    std::map<std::string, const PredictionRecord*> pred_by_id;
    for (const auto& p : predictions) {
        if (!pred_by_id.emplace(p.id, &p).second) {
            report.warnings.push_back("duplicate prediction id \"" + p.id +
                                      "\"; keeping the first");
        }
    }
    std::map<std::string, const RelevanceExample*> gold_by_id;
    for (const auto& g : gold) {
        if (!gold_by_id.emplace(g.query.id, &g).second) {
            report.warnings.push_back("duplicate gold id \"" + g.query.id +
                                      "\"; keeping the first");
        }
    }

    std::vector<std::string> missing;  // gold ids without a prediction
    std::vector<std::string> extra;    // prediction ids without gold
    for (const auto& [id, g] : gold_by_id) {
        if (pred_by_id.find(id) == pred_by_id.end()) missing.push_back(id);
    }
    for (const auto& [id, p] : pred_by_id) {
        if (gold_by_id.find(id) == gold_by_id.end()) extra.push_back(id);
    }
    if (!missing.empty() || !extra.empty()) {
        std::string msg = "prediction and gold ids do not match";
        if (!missing.empty()) msg += "; missing predictions for " + join_ids(missing);
        if (!extra.empty()) msg += "; predictions without gold for " + join_ids(extra);
        throw std::invalid_argument(msg);
    }
    if (gold_by_id.empty()) throw std::invalid_argument("nothing to evaluate");

    for (const auto& [id, g] : gold_by_id) {
        if (!g->label.has_value()) {
            throw std::invalid_argument("gold example \"" + id + "\" has no label");
        }
        const Label truth = *g->label;
        const Label predicted = pred_by_id.at(id)->label;
        const bool correct = predicted == truth;
        if (truth == Label::Relevant) {
            if (predicted == Label::Relevant) ++report.true_positives;
            else ++report.false_negatives;
        } else {
            if (predicted == Label::Relevant) ++report.false_positives;
            else ++report.true_negatives;
        }
        LanguageBreakdown& lang = report.per_language[g->query.language.code];
        ++lang.count;
        if (correct) ++lang.correct;
    }

    const std::size_t total = gold_by_id.size();
    report.accuracy = ratio(report.true_positives + report.true_negatives, total);
    report.precision = ratio(report.true_positives,
                             report.true_positives + report.false_positives);
    report.recall = ratio(report.true_positives,
                          report.true_positives + report.false_negatives);
    const double pr = report.precision + report.recall;
    report.f1 = pr == 0.0 ? 0.0 : 2.0 * report.precision * report.recall / pr;
    for (auto& [code, lang] : report.per_language) {
        lang.accuracy = ratio(lang.correct, lang.count);
    }
    return report;
}

std::string EvalReport::to_json() const {
    json j;
    j["accuracy"] = accuracy;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    j["true_positives"] = true_positives;
    j["false_positives"] = false_positives;
    j["true_negatives"] = true_negatives;
    j["false_negatives"] = false_negatives;
    json per_lang = json::object();
    for (const auto& [code, lang] : per_language) {
        json entry;
        entry["count"] = lang.count;
        entry["correct"] = lang.correct;
        entry["accuracy"] = lang.accuracy;
        per_lang[code] = entry;
    }
    j["per_language"] = per_lang;
    j["warnings"] = warnings;
    return j.dump();
}

EvalReport EvalReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad eval report JSON: ") + e.what());
    }
    EvalReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.true_positives = j.at("true_positives").get<std::size_t>();
    r.false_positives = j.at("false_positives").get<std::size_t>();
    r.true_negatives = j.at("true_negatives").get<std::size_t>();
    r.false_negatives = j.at("false_negatives").get<std::size_t>();
    for (const auto& [code, entry] : j.at("per_language").items()) {
        LanguageBreakdown lang;
        lang.count = entry.at("count").get<std::size_t>();
        lang.correct = entry.at("correct").get<std::size_t>();
        lang.accuracy = entry.at("accuracy").get<double>();
        r.per_language[code] = lang;
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

}  // namespace relcot::infer
