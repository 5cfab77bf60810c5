#include "distil/distillation.hpp"

#include <cmath>
#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <sstream>

namespace distil {

void check_distil_sample(const DistilSample& s) {
    if (s.teacher_label != s.post.gold_label)
        throw ConsistencyError("distil sample " + s.post.id + ": teacher label differs from gold");
    RationaleResponse parsed;
    try {
        parsed = parse_model_response(s.target_text);
    } catch (const ResponseParseError& e) {
        throw ConsistencyError("distil sample " + s.post.id + ": target does not parse: " + e.what());
    }
    if (parsed.label() != s.teacher_label || parsed.explanations != s.rationale)
        throw ConsistencyError("distil sample " + s.post.id + ": target disagrees with label/rationale");
}

FilterResult filter_label_match(std::span<const InferenceRecord> records, const Subsample& subsample) {
    const auto index = subsample.index();
    FilterResult out;
    for (const auto& rec : records) {
        auto it = index.find(rec.post_id);
        if (it == index.end())
            throw ConsistencyError("inference record for unknown post id " + rec.post_id);
        if (!rec.ok()) {
            ++out.report.dropped_parse_failure;
            continue;
        }
        const Post& post = *it->second;
        if (rec.response->label() != post.gold_label) {
            ++out.report.dropped_mismatch;
            continue;
        }
        DistilSample s;
        s.post = post;
        s.teacher_label = rec.response->label();
        s.rationale = rec.response->explanations;
        s.target_text = serialize_response(s.teacher_label == Label::hate, s.rationale);
        out.samples.push_back(std::move(s));
        ++out.report.kept;
    }
    return out;
}

namespace {

Json rationale_to_json(const Rationale& r) {
    Json a = Json::array();
    for (const auto& e : r) a.push_back(Json{{"fragment", e.fragment}, {"explanation", e.explanation}});
    return a;
}

Rationale rationale_from_json(const Json& a) {
    Rationale r;
    for (const auto& e : a) r.push_back({e.at("fragment").get<std::string>(), e.at("explanation").get<std::string>()});
    return r;
}

}  // namespace

Json to_json(const DistilSample& s) {
    return Json{{"post_id", s.post.id},
                {"text", s.post.text},
                {"gold_label", std::string(to_string(s.post.gold_label))},
                {"source", s.post.source_id},
                {"teacher_label", std::string(to_string(s.teacher_label))},
                {"rationale", rationale_to_json(s.rationale)},
                {"target_text", s.target_text}};
}

DistilSample distil_sample_from_json(const Json& j) {
    DistilSample s;
    s.post.id = j.at("post_id").get<std::string>();
    s.post.text = j.at("text").get<std::string>();
    auto gold = parse_label(j.at("gold_label").get<std::string>());
    auto teacher = parse_label(j.at("teacher_label").get<std::string>());
    if (!gold || !teacher) throw IoError("distil sample " + s.post.id + ": bad label");
    s.post.gold_label = *gold;
    s.post.source_id = j.at("source").get<std::string>();
    s.teacher_label = *teacher;
    s.rationale = rationale_from_json(j.at("rationale"));
    s.target_text = j.at("target_text").get<std::string>();
    return s;
}

void save_distil_samples(std::span<const DistilSample> samples, const std::filesystem::path& path) {
    std::vector<Json> rows;
    for (const auto& s : samples) rows.push_back(to_json(s));
    write_jsonl(path, rows);
}

std::vector<DistilSample> load_distil_samples(const std::filesystem::path& path) {
    std::vector<DistilSample> out;
    for (const auto& j : read_jsonl(path)) out.push_back(distil_sample_from_json(j));
    return out;
}

TrainingManifest export_training_file(std::span<const DistilSample> samples,
                                      const std::filesystem::path& path,
                                      const HateSpeechDefinition& definition) {
    if (samples.empty()) throw ArgumentError("no samples to export");
    std::vector<Json> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) {
        check_distil_sample(s);
        rows.push_back(Json{{"instruction", build_instruction_prompt(definition, s.post.text).rendered},
                            {"target", s.target_text}});
    }
    write_jsonl(path, rows);
    return TrainingManifest{path, rows.size(), sha256_file(path)};
}

std::vector<TrainingExample> load_training_file(const std::filesystem::path& path) {
    std::vector<TrainingExample> out;
    for (const auto& j : read_jsonl(path))
        out.push_back({j.at("instruction").get<std::string>(), j.at("target").get<std::string>()});
    return out;
}

TrainingManifest verify_training_file(const std::filesystem::path& path,
                                      const HateSpeechDefinition& definition) {
    const auto examples = load_training_file(path);
    if (examples.empty()) throw ConsistencyError(path.string() + ": empty training file");
    const std::string frame = build_instruction_prompt(definition, "\x01").rendered;
    const std::string frame_head = frame.substr(0, frame.find('\x01'));
    const std::string frame_tail = frame.substr(frame.find('\x01') + 1);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        const std::string where = path.string() + ": line " + std::to_string(i + 1);
        try {
            parse_model_response(ex.target);
        } catch (const ResponseParseError& e) {
            throw ConsistencyError(where + ": target does not parse: " + e.what());
        }
        const std::string_view instr = ex.instruction;
        const bool framed = instr.size() >= frame_head.size() + frame_tail.size() &&
                            instr.starts_with(frame_head) && instr.ends_with(frame_tail);
        const std::string message(framed ? instr.substr(frame_head.size(),
                                                        instr.size() - frame_head.size() - frame_tail.size())
                                         : std::string_view{});
        if (!framed || trim(message).empty() || message.find(kMessageOpen) != std::string::npos ||
            message.find(kMessageClose) != std::string::npos)
            throw ConsistencyError(where + ": instruction is not the instruction-only prompt");
    }
    return TrainingManifest{path, examples.size(), sha256_file(path)};
}

void TokenLossBreakdown::validate() const {
    if (sample_count == 0) throw ArgumentError("loss breakdown over zero samples");
    if (!(label_loss >= 0.0)) throw ArgumentError("negative label loss");
    for (double l : rationale_token_losses)
        if (!(l >= 0.0)) throw ArgumentError("negative rationale token loss");
    if (!rationale_lengths.empty()) {
        if (rationale_lengths.size() != sample_count)
            throw ArgumentError("rationale_lengths must have one entry per sample");
        std::size_t total = 0;
        for (auto t : rationale_lengths) total += t;
        if (total != rationale_token_losses.size())
            throw ArgumentError("rationale token count does not match sum of T_i");
    }
}

double multitask_loss(const TokenLossBreakdown& b, LossWeights w) {
    b.validate();
    if (w.alpha < 0.0 || w.beta < 0.0) throw ArgumentError("negative loss weight");

    // Sum per sample first, then over samples.
    double rationale_sum = 0.0;
    if (b.rationale_lengths.empty()) {
        for (double l : b.rationale_token_losses) rationale_sum += l;
    } else {
        std::size_t offset = 0;
        for (std::size_t t_i : b.rationale_lengths) {
            double per_sample = 0.0;
            for (std::size_t t = 0; t < t_i; ++t) per_sample += b.rationale_token_losses[offset + t];
            rationale_sum += per_sample;
            offset += t_i;
        }
    }
    const double l_rationale = rationale_sum / static_cast<double>(b.sample_count);
    return w.alpha * b.label_loss + w.beta * l_rationale;
}

void TrainConfig::validate() const {
    if (lora_rank <= 0 || lora_alpha <= 0 || quantization_bits <= 0 || steps <= 0 ||
        !(learning_rate > 0.0) || max_sequence_tokens <= 0)
        throw ConfigError("train config values must all be positive");
    if (loss_weights.alpha < 0.0 || loss_weights.beta < 0.0 ||
        !(loss_weights.alpha + loss_weights.beta > 0.0))
        throw ConfigError("loss weights must be non-negative with a positive sum");
}

Json TrainConfig::to_json() const {
    return Json{{"lora_rank", lora_rank},
                {"lora_alpha", lora_alpha},
                {"quantization_bits", quantization_bits},
                {"steps", steps},
                {"learning_rate", learning_rate},
                {"max_sequence_tokens", max_sequence_tokens},
                {"loss_weights", Json{{"alpha", loss_weights.alpha}, {"beta", loss_weights.beta}}}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
    TrainConfig c;
    c.lora_rank = j.value("lora_rank", c.lora_rank);
    c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
    c.quantization_bits = j.value("quantization_bits", c.quantization_bits);
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_sequence_tokens = j.value("max_sequence_tokens", c.max_sequence_tokens);
    if (j.contains("loss_weights")) {
        c.loss_weights.alpha = j["loss_weights"].value("alpha", 1.0);
        c.loss_weights.beta = j["loss_weights"].value("beta", 1.0);
    }
    return c;
}

void check_capabilities(const TrainConfig& config, const TrainerCapabilities& caps) {
    if (config.steps <= 0) throw CapabilityError("steps must be positive (got " + std::to_string(config.steps) + ")");
    if (config.steps > caps.max_steps)
        throw CapabilityError("trainer supports at most " + std::to_string(caps.max_steps) + " steps");
    if (!caps.quantization_bits.count(config.quantization_bits))
        throw CapabilityError("trainer does not support " + std::to_string(config.quantization_bits) +
                              "-bit quantization");
    if (config.lora_rank > caps.max_lora_rank) throw CapabilityError("adapter rank too large for trainer");
    if (config.max_sequence_tokens > caps.max_sequence_tokens)
        throw CapabilityError("max sequence length too large for trainer");
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw CapabilityError(e.what());
    }
}

namespace {

class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".finetune.lock") {
        std::filesystem::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) throw Error("artifact directory is locked by another fine-tune run: " + path_.string());
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    ~DirectoryLock() {
        ::close(fd_);
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

std::string tail_lines(const std::filesystem::path& path, std::size_t n) {
    std::ifstream in(path);
    std::deque<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        lines.push_back(line);
        if (lines.size() > n) lines.pop_front();
    }
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
}

}  // namespace

TrainResult run_finetune(Trainer& trainer, const std::filesystem::path& training_file,
                         const TrainConfig& config, const std::filesystem::path& artifact_dir,
                         const HateSpeechDefinition& definition) {
    check_capabilities(config, trainer.capabilities());
    verify_training_file(training_file, definition);
    DirectoryLock lock(artifact_dir);
    try {
        return trainer.train(training_file, config, artifact_dir);
    } catch (const TrainerError&) {
        throw;
    } catch (const std::exception& e) {
        throw TrainerError(trainer.name() + " failed: " + e.what(), "");
    }
}

TrainerCapabilities ToyTrainer::capabilities() const {
    TrainerCapabilities caps;
    caps.max_steps = options_.max_steps;
    return caps;
}

TrainResult ToyTrainer::train(const std::filesystem::path& training_file, const TrainConfig& config,
                              const std::filesystem::path& artifact_dir) {
    constexpr std::size_t V = 256;
    const auto examples = load_training_file(training_file);
    const double n = static_cast<double>(examples.size());
    const double alpha = config.loss_weights.alpha, beta = config.loss_weights.beta;

    // Weighted bigram counts over target positions only.
    std::vector<double> counts(V * V, 0.0);
    std::vector<double> row_total(V, 0.0);
    for (const auto& ex : examples) {
        const std::string seq = ex.instruction + "\n" + ex.target;
        const std::size_t start = ex.instruction.size() + 1;
        auto label_end = ex.target.find("\"explanations\"");
        if (label_end == std::string::npos) label_end = ex.target.size();
        for (std::size_t i = start; i < seq.size(); ++i) {
            const auto prev = static_cast<unsigned char>(seq[i - 1]);
            const auto next = static_cast<unsigned char>(seq[i]);
            const double w = (i - start) < label_end ? alpha : beta;
            counts[prev * V + next] += w;
            row_total[prev] += w;
        }
    }

    std::vector<double> logits(V * V, 0.0);
    std::vector<double> prob(V);
    const double lr = options_.learning_rate > 0.0 ? options_.learning_rate : config.learning_rate;

    auto step = [&](bool update) {
        double loss = 0.0;
        for (std::size_t r = 0; r < V; ++r) {
            if (row_total[r] == 0.0) continue;
            double* z = &logits[r * V];
            double mx = z[0];
            for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, z[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < V; ++j) sum += (prob[j] = std::exp(z[j] - mx));
            const double log_sum = std::log(sum) + mx;
            for (std::size_t j = 0; j < V; ++j) {
                const double c = counts[r * V + j];
                if (c != 0.0) loss += c * (log_sum - z[j]);
            }
            if (update)
                for (std::size_t j = 0; j < V; ++j)
                    z[j] -= lr * (row_total[r] * prob[j] / sum - counts[r * V + j]) / n;
        }
        return loss / n;
    };

    TrainResult result;
    for (int s = 0; s < config.steps; ++s) result.log.push_back({s, step(true)});
    result.log.push_back({config.steps, step(false)});

    Json rows = Json::array();
    for (std::size_t r = 0; r < V; ++r) {
        if (row_total[r] == 0.0) continue;
        rows.push_back(Json{{"prev", r}, {"logits", std::vector<double>(&logits[r * V], &logits[r * V] + V)}});
    }
    Json log = Json::array();
    for (const auto& e : result.log) log.push_back(Json{{"step", e.step}, {"loss", e.loss}});
    Json artifact{{"model", "toy-bigram"}, {"config", config.to_json()}, {"rows", rows}};
    const auto model_path = artifact_dir / "toy_bigram.json";
    write_file(model_path, artifact.dump());
    write_file(artifact_dir / "train_log.json", log.dump());
    result.artifact_ref = "toy-bigram@" + sha256_file(model_path).substr(0, 16);
    return result;
}

TrainResult CommandTrainer::train(const std::filesystem::path& training_file, const TrainConfig& config,
                                  const std::filesystem::path& artifact_dir) {
    if (options_.command.empty()) throw CapabilityError("command trainer: no command configured");
    const auto abs_dir = std::filesystem::absolute(artifact_dir);
    const auto config_path = abs_dir / "trainer_config.json";
    const auto log_path = abs_dir / "trainer.log";
    const auto loss_path = abs_dir / "train_log.jsonl";
    std::filesystem::remove(loss_path);

    Json cfg{{"training_file", std::filesystem::absolute(training_file).string()},
             {"output_dir", abs_dir.string()},
             {"base_model", options_.base_model},
             {"lora", Json{{"r", config.lora_rank}, {"alpha", config.lora_alpha}}},
             {"quantization_bits", config.quantization_bits},
             {"max_steps", config.steps},
             {"learning_rate", config.learning_rate},
             {"max_seq_length", config.max_sequence_tokens},
             {"loss_weights", Json{{"alpha", config.loss_weights.alpha}, {"beta", config.loss_weights.beta}}},
             {"completion_only_loss", true},
             {"device", options_.device_hints}};
    write_file(config_path, cfg.dump(2));

    const std::string cmd = options_.command + " --config '" + config_path.string() + "' > '" +
                            log_path.string() + "' 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0)
        throw TrainerError("trainer command exited with status " + std::to_string(rc), tail_lines(log_path, 20));
    if (!std::filesystem::exists(loss_path))
        throw TrainerError("trainer wrote no train_log.jsonl", tail_lines(log_path, 20));

    TrainResult result;
    for (const auto& j : read_jsonl(loss_path)) result.log.push_back({j.at("step").get<int>(), j.at("loss").get<double>()});
    const auto ref_path = abs_dir / "artifact.json";
    result.artifact_ref = std::filesystem::exists(ref_path)
                              ? Json::parse(read_file(ref_path)).value("artifact_ref", abs_dir.string())
                              : abs_dir.string();
    return result;
}

}  // namespace distil
