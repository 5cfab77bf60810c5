#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "distil/corpus.hpp"
#include "distil/inference.hpp"
#include "distil/prompting.hpp"

namespace distil {

// A teacher answer whose label agrees with the gold label, packaged as a
// student training target.
struct DistilSample {
    Post post;
    Label teacher_label = Label::non_hate;
    Rationale rationale;
    std::string target_text;
};

// Throws ConsistencyError unless teacher_label == gold label and target_text
// parses back to (teacher_label, rationale).
void check_distil_sample(const DistilSample& s);

struct FilterReport {
    std::size_t kept = 0;
    std::size_t dropped_mismatch = 0;
    std::size_t dropped_parse_failure = 0;

    std::size_t total() const { return kept + dropped_mismatch + dropped_parse_failure; }
};

struct FilterResult {
    std::vector<DistilSample> samples;
    FilterReport report;
};

// Keeps the records with a parsed response whose hate_speech equals the gold
// label, in input order.
FilterResult filter_label_match(std::span<const InferenceRecord> records, const Subsample& subsample);

Json to_json(const DistilSample& s);
DistilSample distil_sample_from_json(const Json& j);
void save_distil_samples(std::span<const DistilSample> samples, const std::filesystem::path& path);
std::vector<DistilSample> load_distil_samples(const std::filesystem::path& path);

struct TrainingExample {
    std::string instruction;
    std::string target;
};

struct TrainingManifest {
    std::filesystem::path path;
    std::size_t count = 0;
    std::string sha256;
};

// One {"instruction","target"} line per sample; the instruction is the
// instruction-only prompt for the post text.
TrainingManifest export_training_file(std::span<const DistilSample> samples,
                                      const std::filesystem::path& path,
                                      const HateSpeechDefinition& definition = HateSpeechDefinition::standard());

std::vector<TrainingExample> load_training_file(const std::filesystem::path& path);

// Re-reads an exported file: every target must parse, every instruction must
// be exactly the instruction prompt of its message. Throws ConsistencyError.
TrainingManifest verify_training_file(const std::filesystem::path& path,
                                      const HateSpeechDefinition& definition = HateSpeechDefinition::standard());

struct LossWeights {
    double alpha = 1.0;  // label term
    double beta = 1.0;   // rationale term
};

// Per-batch loss terms. rationale_lengths[i] is T_i, the number of rationale
// tokens of sample i; rationale_token_losses holds them back to back.
struct TokenLossBreakdown {
    double label_loss = 0.0;  // already averaged over the N samples
    std::vector<double> rationale_token_losses;
    std::vector<std::size_t> rationale_lengths;
    std::size_t sample_count = 0;

    void validate() const;
};

// alpha * L_label + beta * (1/N) * sum_i sum_t l_it
double multitask_loss(const TokenLossBreakdown& breakdown, LossWeights weights);

struct TrainConfig {
    int lora_rank = 16;
    int lora_alpha = 32;
    int quantization_bits = 4;
    int steps = 1000;
    double learning_rate = 2.5e-5;
    int max_sequence_tokens = 4096;
    LossWeights loss_weights;

    void validate() const;
    Json to_json() const;
    static TrainConfig from_json(const Json& j);

    friend bool operator==(const TrainConfig& a, const TrainConfig& b) {
        return a.lora_rank == b.lora_rank && a.lora_alpha == b.lora_alpha &&
               a.quantization_bits == b.quantization_bits && a.steps == b.steps &&
               a.learning_rate == b.learning_rate && a.max_sequence_tokens == b.max_sequence_tokens &&
               a.loss_weights.alpha == b.loss_weights.alpha && a.loss_weights.beta == b.loss_weights.beta;
    }
};

struct TrainerCapabilities {
    std::set<int> quantization_bits{4, 8, 16};
    int max_steps = 1'000'000;
    int max_lora_rank = 256;
    int max_sequence_tokens = 131072;
};

class CapabilityError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class TrainerError : public Error {
public:
    TrainerError(const std::string& what, std::string log_tail)
        : Error(what + (log_tail.empty() ? "" : "\n--- trainer log tail ---\n" + log_tail)),
          log_tail_(std::move(log_tail)) {}
    const std::string& log_tail() const { return log_tail_; }

private:
    std::string log_tail_;
};

struct TrainLogEntry {
    int step = 0;
    double loss = 0.0;
};

struct TrainResult {
    std::string artifact_ref;
    std::vector<TrainLogEntry> log;
};

// Fine-tuning backend contract.
class Trainer {
public:
    virtual ~Trainer() = default;
    virtual std::string name() const = 0;
    virtual TrainerCapabilities capabilities() const { return {}; }
    virtual TrainResult train(const std::filesystem::path& training_file, const TrainConfig& config,
                              const std::filesystem::path& artifact_dir) = 0;
};

void check_capabilities(const TrainConfig& config, const TrainerCapabilities& caps);

// Validates config against the trainer, self-checks the training file, takes
// the artifact directory lock and runs the trainer.
TrainResult run_finetune(Trainer& trainer, const std::filesystem::path& training_file,
                         const TrainConfig& config, const std::filesystem::path& artifact_dir,
                         const HateSpeechDefinition& definition = HateSpeechDefinition::standard());

// Character-bigram language model trained by full-batch gradient descent on
// the target text only (instruction characters are context, never targets).
// Label characters (the hate_speech field) and rationale characters are
// weighted by loss_weights alpha and beta.
struct ToyTrainerOptions {
    double learning_rate = 0.0;  // 0: use TrainConfig::learning_rate
    int max_steps = 100000;
};

class ToyTrainer : public Trainer {
public:
    explicit ToyTrainer(ToyTrainerOptions options = {}) : options_(options) {}
    std::string name() const override { return "toy-bigram"; }
    TrainerCapabilities capabilities() const override;
    TrainResult train(const std::filesystem::path& training_file, const TrainConfig& config,
                      const std::filesystem::path& artifact_dir) override;

private:
    ToyTrainerOptions options_;
};

// Hands the job to an external parameter-efficient fine-tuning script. The
// command receives `--config <artifact_dir>/trainer_config.json` and must
// write `<artifact_dir>/train_log.jsonl` with {"step","loss"} lines.
struct CommandTrainerOptions {
    std::string command;
    Json device_hints = Json::object();
    std::string base_model;
};

class CommandTrainer : public Trainer {
public:
    explicit CommandTrainer(CommandTrainerOptions options) : options_(std::move(options)) {}
    std::string name() const override { return "command"; }
    TrainResult train(const std::filesystem::path& training_file, const TrainConfig& config,
                      const std::filesystem::path& artifact_dir) override;

private:
    CommandTrainerOptions options_;
};

}  // namespace distil
