#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distil/errors.hpp"
#include "distil/prompting.hpp"
#include "distil/response.hpp"
#include "distil/util.hpp"

namespace distil {

struct GenerationConfig {
    int max_sequence_tokens = 4096;
    int max_new_tokens = 2048;
    double temperature = 0.0;
    int retries = 3;
    int parallelism = 4;
    double backoff_initial_s = 0.5;

    // Throws ConfigError on violated invariants.
    void validate() const;
};

struct Completion {
    std::string text;
    std::size_t generated_tokens = 0;
    // Generation time as measured by the backend itself, when it knows.
    std::optional<double> elapsed_s;
};

// Network or server failure; retried with backoff.
class TransportError : public Error {
public:
    using Error::Error;
};

// Prompt plus generation budget exceeds the model context; never retried.
class ContextOverflowError : public Error {
public:
    using Error::Error;
};

// Chat-completion contract. Implementations reporting thread_safe() may be
// called concurrently by the batch driver.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string model_id() const = 0;
    virtual bool supports_roles() const { return true; }
    virtual bool thread_safe() const { return true; }
    virtual Completion complete(std::string_view system, std::span<const ChatTurn> turns,
                                const GenerationConfig& config) = 0;
};

// Sends a bundle in the rendering the backend understands.
Completion complete_bundle(ChatBackend& backend, const PromptBundle& bundle,
                           const GenerationConfig& config);

enum class RecordStatus { ok, parse_failure, schema_failure, transport_failure, overflow };
std::string_view to_string(RecordStatus s);
RecordStatus record_status_from_string(std::string_view s);

struct InferenceRecord {
    std::string post_id;
    std::string model_id;
    RecordStatus status = RecordStatus::ok;
    std::optional<RationaleResponse> response;  // present iff status == ok
    std::string raw;
    int attempts = 0;
    double latency_s = 0.0;
    std::size_t generated_tokens = 0;
    std::string error;

    bool ok() const { return status == RecordStatus::ok; }
};

struct PromptRequest {
    std::string post_id;
    PromptBundle bundle;
};

struct BatchHooks {
    std::function<void(double seconds)> sleep;  // defaults to a real sleep
    std::function<double()> clock;              // seconds; defaults to steady_clock
};

struct BatchResult {
    std::vector<InferenceRecord> records;
    std::size_t parse_failures = 0;
    double parse_failure_rate = 0.0;
};

// One record per request, in request order. Parse failures are retried with
// the identical prompt; transport errors are retried with exponential
// backoff; every request ends as either a parsed record or a failure marker.
BatchResult extract_rationales_batch(ChatBackend& backend, std::span<const PromptRequest> requests,
                                     const GenerationConfig& config, const BatchHooks& hooks = {});

Json to_json(const InferenceRecord& r);
InferenceRecord inference_record_from_json(const Json& j);
void save_inference_records(std::span<const InferenceRecord> records,
                            const std::filesystem::path& path);
std::vector<InferenceRecord> load_inference_records(const std::filesystem::path& path);

}  // namespace distil
