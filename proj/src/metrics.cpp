#include "distil/metrics.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

namespace distil {

PredictionRecord prediction_from_inference(const InferenceRecord& record, Label fallback) {
    PredictionRecord p;
    p.post_id = record.post_id;
    p.model_id = record.model_id;
    if (record.ok()) {
        p.predicted_label = record.response->label();
        p.parse_ok = true;
        p.rationale = record.response->explanations;
    } else {
        p.predicted_label = fallback;
        p.parse_ok = false;
    }
    return p;
}

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

ClassScores class_scores(std::size_t tp, std::size_t fp, std::size_t fn) {
    ClassScores c;
    c.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
    c.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
    c.f1 = safe_div(2.0 * c.precision * c.recall, c.precision + c.recall);
    c.support = tp + fn;
    return c;
}

}  // namespace

MetricsReport evaluate_classification(std::span<const PredictionRecord> predictions, const Subsample& gold,
                                      FailurePolicy policy) {
    const auto index = gold.index();
    std::unordered_set<std::string> seen;
    MetricsReport r;
    r.policy = policy;
    r.n_predictions = predictions.size();
    std::size_t failures = 0;
    for (const auto& p : predictions) {
        auto it = index.find(p.post_id);
        if (it == index.end()) throw ConsistencyError("prediction for unknown post id " + p.post_id);
        if (!seen.insert(p.post_id).second) throw ConsistencyError("duplicate prediction for post id " + p.post_id);
        if (r.model_id.empty()) r.model_id = p.model_id;
        if (!p.parse_ok) {
            ++failures;
            if (policy == FailurePolicy::exclude) continue;
        }
        const Label predicted = p.parse_ok ? p.predicted_label : Label::non_hate;
        const bool gold_hate = is_hate(it->second->gold_label);
        if (is_hate(predicted)) (gold_hate ? r.confusion.tp : r.confusion.fp) += 1;
        else (gold_hate ? r.confusion.fn : r.confusion.tn) += 1;
    }
    if (seen.size() != index.size())
        throw ConsistencyError(fmt::format("{} of {} gold posts have no prediction", index.size() - seen.size(),
                                           index.size()));

    const auto& c = r.confusion;
    r.n_evaluated = c.tp + c.fp + c.fn + c.tn;
    r.parse_failure_rate = safe_div(static_cast<double>(failures), static_cast<double>(predictions.size()));
    r.hate = class_scores(c.tp, c.fp, c.fn);
    r.non_hate = class_scores(c.tn, c.fn, c.fp);
    r.f1_binary = r.hate.f1;
    r.f1_macro = (r.hate.f1 + r.non_hate.f1) / 2.0;
    const double total = static_cast<double>(r.hate.support + r.non_hate.support);
    r.f1_weighted = safe_div(r.hate.f1 * static_cast<double>(r.hate.support) +
                                 r.non_hate.f1 * static_cast<double>(r.non_hate.support),
                             total);
    // Pooled over both classes: every error is one FP for one class and one
    // FN for the other.
    const double pooled_tp = static_cast<double>(c.tp + c.tn);
    const double pooled_err = static_cast<double>(c.fp + c.fn);
    const double micro_p = safe_div(pooled_tp, pooled_tp + pooled_err);
    const double micro_r = safe_div(pooled_tp, pooled_tp + pooled_err);
    r.f1_micro = safe_div(2.0 * micro_p * micro_r, micro_p + micro_r);
    r.accuracy = safe_div(pooled_tp, static_cast<double>(r.n_evaluated));
    return r;
}

Json to_json(const MetricsReport& r) {
    auto cls = [](const ClassScores& c) {
        return Json{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
    };
    return Json{{"model_id", r.model_id},
                {"f1_weighted", r.f1_weighted},
                {"f1_micro", r.f1_micro},
                {"f1_macro", r.f1_macro},
                {"f1_binary", r.f1_binary},
                {"accuracy", r.accuracy},
                {"hate", cls(r.hate)},
                {"non_hate", cls(r.non_hate)},
                {"confusion", Json{{"tp", r.confusion.tp}, {"fp", r.confusion.fp},
                                   {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
                {"n_predictions", r.n_predictions},
                {"n_evaluated", r.n_evaluated},
                {"parse_failure_rate", r.parse_failure_rate},
                {"failure_policy", r.policy == FailurePolicy::exclude ? "exclude" : "as_non_hate"}};
}

std::string render_metrics_table(std::span<const MetricsReport> reports) {
    std::size_t w = 5;
    for (const auto& r : reports) w = std::max(w, r.model_id.size());
    std::string out = fmt::format("{:<{}} {:>11} {:>9} {:>9} {:>10} {:>9}\n", "model", w, "F1_weighted", "F1_micro",
                                  "F1_macro", "F1_binary", "parse_err");
    for (const auto& r : reports)
        out += fmt::format("{:<{}} {:>11.4f} {:>9.4f} {:>9.4f} {:>10.4f} {:>9.4f}\n", r.model_id, w, r.f1_weighted,
                           r.f1_micro, r.f1_macro, r.f1_binary, r.parse_failure_rate);
    return out;
}

Label threshold_to_label(double score, double tau) {
    if (!(score >= 0.0 && score <= 1.0)) throw ArgumentError(fmt::format("score {} outside [0,1]", score));
    return score >= tau ? Label::hate : Label::non_hate;
}

TernaryLabel parse_ternary(std::string_view token) {
    const std::string t = to_lower(trim(token));
    if (t == "hate" || t == "hatespeech" || t == "hate_speech") return TernaryLabel::hate;
    if (t == "offensive") return TernaryLabel::offensive;
    if (t == "normal") return TernaryLabel::normal;
    throw ArgumentError("unknown ternary label '" + std::string(token) + "'");
}

Label map_ternary_to_binary(TernaryLabel label) {
    return label == TernaryLabel::hate ? Label::hate : Label::non_hate;
}

Label map_ternary_to_binary(std::string_view token) { return map_ternary_to_binary(parse_ternary(token)); }

Json to_json(const PredictionRecord& p) {
    Json j{{"post_id", p.post_id},
           {"model_id", p.model_id},
           {"predicted_label", std::string(to_string(p.predicted_label))},
           {"parse_ok", p.parse_ok}};
    if (p.rationale) {
        Json a = Json::array();
        for (const auto& e : *p.rationale) a.push_back(Json{{"fragment", e.fragment}, {"explanation", e.explanation}});
        j["rationale"] = std::move(a);
    } else {
        j["rationale"] = nullptr;
    }
    if (p.score) j["score"] = *p.score;
    return j;
}

PredictionRecord prediction_from_json(const Json& j, double tau) {
    PredictionRecord p;
    p.post_id = j.at("post_id").get<std::string>();
    p.model_id = j.value("model_id", "");
    p.parse_ok = j.value("parse_ok", true);
    if (j.contains("score") && !j["score"].is_null()) p.score = j["score"].get<double>();
    if (j.contains("predicted_label") && !j["predicted_label"].is_null()) {
        const Json& v = j["predicted_label"];
        auto label = parse_label(v.is_string() ? v.get<std::string>() : v.dump());
        if (!label) throw IoError("prediction " + p.post_id + ": bad predicted_label " + v.dump());
        p.predicted_label = *label;
    } else if (p.score) {
        p.predicted_label = threshold_to_label(*p.score, tau);
    } else if (j.contains("label3")) {
        p.predicted_label = map_ternary_to_binary(j["label3"].get<std::string>());
    } else {
        throw IoError("prediction " + p.post_id + ": needs predicted_label, score or label3");
    }
    if (j.contains("rationale") && j["rationale"].is_array()) {
        Rationale r;
        for (const auto& e : j["rationale"]) {
            if (e.is_array()) r.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
            else r.push_back({e.at("fragment").get<std::string>(), e.at("explanation").get<std::string>()});
        }
        p.rationale = std::move(r);
    }
    return p;
}

void save_predictions(std::span<const PredictionRecord> predictions, const std::filesystem::path& path) {
    std::vector<Json> rows;
    for (const auto& p : predictions) rows.push_back(to_json(p));
    write_jsonl(path, rows);
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, double tau) {
    std::vector<PredictionRecord> out;
    for (const auto& j : read_jsonl(path)) out.push_back(prediction_from_json(j, tau));
    return out;
}

}  // namespace distil
