#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "distil/corpus.hpp"
#include "distil/metrics.hpp"

namespace distil {

// One blind annotation item. hidden_model_id never leaves through
// annotator-facing serialization.
struct AnnotationTask {
    std::string task_id;
    std::string post_id;
    std::string post_text;
    Label predicted_label = Label::non_hate;
    Rationale explanations;
    std::string hidden_model_id;
    std::size_t display_order = 0;

    friend bool operator==(const AnnotationTask&, const AnnotationTask&) = default;
};

// One annotator's judgments on one task: post-level completeness and one
// correctness flag per fragment, by position.
struct AnnotationRecord {
    std::string task_id;
    std::string annotator_id;
    bool complete = false;
    std::vector<bool> correct;

    friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

// n_per_model tasks per model drawn from its parsed predictions, shuffled
// together by seed. With `aligned`, every model is sampled on the same posts.
std::vector<AnnotationTask> build_annotation_batch(
    const std::map<std::string, std::vector<PredictionRecord>>& predictions_by_model, const Subsample& posts,
    std::size_t n_per_model, std::uint64_t seed, bool aligned = false);

struct AgreementPair {
    double complete_pct = 0.0;
    double correct_pct = 0.0;
};

// Percentage of posts whose `complete` flag is identical across all k
// annotators, and of fragments whose `correct` flag is.
AgreementPair compute_unanimous_agreement(std::span<const AnnotationRecord> records, std::size_t k = 3);

// Majority (> k/2) decisions: share of posts judged complete, and share of
// posts whose every fragment is majority-correct. k must be odd.
AgreementPair compute_majority_metrics(std::span<const AnnotationRecord> records, std::size_t k = 3);

struct AgreementReport {
    double iaa_complete_pct = 0.0;
    double iaa_correct_pct = 0.0;
    double majority_complete_pct = 0.0;
    double majority_correct_pct = 0.0;
    std::size_t n_posts = 0;
    std::size_t n_fragments = 0;
    std::size_t n_skipped_tasks = 0;  // tasks without exactly k records
};

// Both statistics over the tasks that have exactly k records.
AgreementReport agreement_report(std::span<const AnnotationRecord> records, std::size_t k = 3);

// agreement_report per model, using the task_id -> model_id key.
std::map<std::string, AgreementReport> agreement_by_model(std::span<const AnnotationRecord> records,
                                                          const std::map<std::string, std::string>& key,
                                                          std::size_t k = 3);

Json to_json(const AgreementReport& r);

// Annotator-facing view (no model identity) and the unblinding key.
Json annotator_view(const AnnotationTask& t);
void save_annotation_batch(std::span<const AnnotationTask> tasks, const std::filesystem::path& batch_path,
                           const std::filesystem::path& key_path);
std::vector<AnnotationTask> load_annotation_batch(const std::filesystem::path& batch_path,
                                                  const std::filesystem::path& key_path);
std::map<std::string, std::string> load_annotation_key(const std::filesystem::path& key_path);

Json to_json(const AnnotationRecord& r);
AnnotationRecord annotation_record_from_json(const Json& j);
void save_annotation_records(std::span<const AnnotationRecord> records, const std::filesystem::path& path);
// Accepts one record per line or a single JSON array.
std::vector<AnnotationRecord> load_annotation_records(const std::filesystem::path& path);

}  // namespace distil
