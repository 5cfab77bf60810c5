#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distil/corpus.hpp"
#include "distil/inference.hpp"

namespace distil {

struct PredictionRecord {
    std::string post_id;
    std::string model_id;
    Label predicted_label = Label::non_hate;
    bool parse_ok = true;
    std::optional<Rationale> rationale;
    std::optional<double> score;  // raw [0,1] score for score-based baselines
};

// What happens to unparseable model outputs at evaluation time.
enum class FailurePolicy { as_non_hate, exclude };

// Turns an inference record into a prediction; failed records carry
// `fallback` and parse_ok = false.
PredictionRecord prediction_from_inference(const InferenceRecord& record, Label fallback = Label::non_hate);

struct Confusion {
    std::size_t tp = 0;  // hate predicted hate
    std::size_t fp = 0;  // non_hate predicted hate
    std::size_t fn = 0;  // hate predicted non_hate
    std::size_t tn = 0;
};

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    std::string model_id;
    double f1_weighted = 0.0;
    double f1_micro = 0.0;
    double f1_macro = 0.0;
    double f1_binary = 0.0;  // F1 of the hate class alone
    ClassScores hate;
    ClassScores non_hate;
    Confusion confusion;
    double accuracy = 0.0;
    std::size_t n_predictions = 0;
    std::size_t n_evaluated = 0;
    double parse_failure_rate = 0.0;
    FailurePolicy policy = FailurePolicy::as_non_hate;
};

// Precision/recall/F1 per class from the confusion matrix; macro is the
// unweighted class mean, weighted uses gold supports, micro pools counts.
// Zero denominators give 0. Throws ConsistencyError on unknown, missing or
// duplicate post ids.
MetricsReport evaluate_classification(std::span<const PredictionRecord> predictions, const Subsample& gold,
                                      FailurePolicy policy = FailurePolicy::as_non_hate);

Json to_json(const MetricsReport& r);
std::string render_metrics_table(std::span<const MetricsReport> reports);

// hate iff score >= tau.
Label threshold_to_label(double score, double tau = 0.5);

enum class TernaryLabel { hate, offensive, normal };
TernaryLabel parse_ternary(std::string_view token);
// Offensive content counts as non_hate.
Label map_ternary_to_binary(TernaryLabel label);
Label map_ternary_to_binary(std::string_view token);

Json to_json(const PredictionRecord& p);
// Rows carrying a `score` but no predicted_label go through threshold_to_label;
// rows carrying a `label3` go through map_ternary_to_binary.
PredictionRecord prediction_from_json(const Json& j, double tau = 0.5);
void save_predictions(std::span<const PredictionRecord> predictions, const std::filesystem::path& path);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, double tau = 0.5);

// Client for a toxicity-scoring HTTP service speaking the Perspective
// comments:analyze protocol. Requests are spaced by min_interval_s and
// retried on transport errors, 429 and 5xx.
struct ToxicityClientOptions {
    std::string base_url = "https://commentanalyzer.googleapis.com";
    std::string path = "/v1alpha1/comments:analyze";
    std::string api_key;  // usually from $PERSPECTIVE_API_KEY
    std::string attribute = "TOXICITY";
    double min_interval_s = 1.0;
    int retries = 3;
    double backoff_initial_s = 1.0;
    double timeout_s = 30.0;
};

class ToxicityClient {
public:
    explicit ToxicityClient(ToxicityClientOptions options,
                            std::function<void(double)> sleep = {},
                            std::function<double()> clock = {});

    // Reads the API key from `env_var` when options.api_key is empty.
    static ToxicityClient from_env(ToxicityClientOptions options,
                                   const char* env_var = "PERSPECTIVE_API_KEY");

    double score(std::string_view text);
    std::size_t requests_sent() const { return requests_; }

private:
    ToxicityClientOptions options_;
    std::function<void(double)> sleep_;
    std::function<double()> clock_;
    std::optional<double> last_request_;
    std::size_t requests_ = 0;
};

}  // namespace distil
