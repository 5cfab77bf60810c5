#include "distil/inference.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace distil {

void GenerationConfig::validate() const {
    if (max_sequence_tokens <= 0) throw ConfigError("max_sequence_tokens must be positive");
    if (max_new_tokens <= 0) throw ConfigError("max_new_tokens must be positive");
    if (max_new_tokens > max_sequence_tokens)
        throw ConfigError("max_new_tokens exceeds max_sequence_tokens");
    if (temperature < 0.0) throw ConfigError("temperature must be non-negative");
    if (retries < 0) throw ConfigError("retries must be non-negative");
    if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
    if (backoff_initial_s < 0.0) throw ConfigError("backoff must be non-negative");
}

Completion complete_bundle(ChatBackend& backend, const PromptBundle& bundle,
                           const GenerationConfig& config) {
    if (backend.supports_roles()) return backend.complete(bundle.system_instruction, bundle.turns, config);
    const ChatTurn flat{Role::user, bundle.rendered};
    return backend.complete("", std::span<const ChatTurn>(&flat, 1), config);
}

std::string_view to_string(RecordStatus s) {
    switch (s) {
        case RecordStatus::ok: return "ok";
        case RecordStatus::parse_failure: return "parse_failure";
        case RecordStatus::schema_failure: return "schema_failure";
        case RecordStatus::transport_failure: return "transport_failure";
        case RecordStatus::overflow: return "overflow";
    }
    return "ok";
}

RecordStatus record_status_from_string(std::string_view s) {
    for (auto st : {RecordStatus::ok, RecordStatus::parse_failure, RecordStatus::schema_failure,
                    RecordStatus::transport_failure, RecordStatus::overflow})
        if (to_string(st) == s) return st;
    throw IoError("unknown record status '" + std::string(s) + "'");
}

namespace {

InferenceRecord run_one(ChatBackend& backend, const PromptRequest& req, const GenerationConfig& config,
                        const BatchHooks& hooks) {
    InferenceRecord rec;
    rec.post_id = req.post_id;
    rec.model_id = backend.model_id();

    int transport_failures = 0;
    const int max_attempts = config.retries + 1;
    while (rec.attempts < max_attempts) {
        ++rec.attempts;
        const double t0 = hooks.clock();
        Completion c;
        try {
            c = complete_bundle(backend, req.bundle, config);
        } catch (const ContextOverflowError& e) {
            rec.status = RecordStatus::overflow;
            rec.error = e.what();
            return rec;
        } catch (const TransportError& e) {
            rec.status = RecordStatus::transport_failure;
            rec.error = e.what();
            if (rec.attempts < max_attempts)
                hooks.sleep(config.backoff_initial_s * std::ldexp(1.0, transport_failures));
            ++transport_failures;
            continue;
        }
        rec.latency_s = c.elapsed_s ? *c.elapsed_s : hooks.clock() - t0;
        rec.generated_tokens = c.generated_tokens;
        rec.raw = std::move(c.text);
        try {
            rec.response = parse_model_response(rec.raw);
            rec.status = RecordStatus::ok;
            rec.error.clear();
            return rec;
        } catch (const ResponseParseError& e) {
            rec.status = e.kind() == ParseFailureKind::schema ? RecordStatus::schema_failure
                                                               : RecordStatus::parse_failure;
            rec.error = e.what();
        }
    }
    return rec;
}

}  // namespace

BatchResult extract_rationales_batch(ChatBackend& backend, std::span<const PromptRequest> requests,
                                     const GenerationConfig& config, const BatchHooks& hooks_in) {
    config.validate();
    if (requests.empty()) throw ArgumentError("no prompts to run");

    BatchHooks hooks = hooks_in;
    if (!hooks.sleep)
        hooks.sleep = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
    if (!hooks.clock)
        hooks.clock = [] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
        };

    BatchResult result;
    result.records.resize(requests.size());
    const std::size_t width = backend.thread_safe()
                                  ? std::min<std::size_t>(static_cast<std::size_t>(config.parallelism),
                                                          requests.size())
                                  : 1;

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) {
            try {
                result.records[i] = run_one(backend, requests[i], config, hooks);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (width == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < width; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    for (const auto& r : result.records)
        if (r.status == RecordStatus::parse_failure || r.status == RecordStatus::schema_failure)
            ++result.parse_failures;
    result.parse_failure_rate =
        static_cast<double>(result.parse_failures) / static_cast<double>(result.records.size());
    return result;
}

Json to_json(const InferenceRecord& r) {
    Json j;
    j["post_id"] = r.post_id;
    j["model_id"] = r.model_id;
    j["status"] = std::string(to_string(r.status));
    if (r.response) {
        Json expl = Json::array();
        for (const auto& e : r.response->explanations) expl.push_back(Json::array({e.fragment, e.explanation}));
        j["response"] = Json{{"hate_speech", r.response->hate_speech}, {"explanations", expl}};
    } else {
        j["response"] = nullptr;
    }
    j["raw"] = r.raw;
    j["attempts"] = r.attempts;
    j["latency_s"] = r.latency_s;
    j["generated_tokens"] = r.generated_tokens;
    j["error"] = r.error;
    return j;
}

InferenceRecord inference_record_from_json(const Json& j) {
    InferenceRecord r;
    r.post_id = j.at("post_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.status = record_status_from_string(j.at("status").get<std::string>());
    if (const auto& resp = j.at("response"); !resp.is_null()) {
        RationaleResponse rr;
        rr.hate_speech = resp.at("hate_speech").get<bool>();
        for (const auto& p : resp.at("explanations"))
            rr.explanations.push_back({p.at(0).get<std::string>(), p.at(1).get<std::string>()});
        rr.raw = j.value("raw", "");
        r.response = std::move(rr);
    }
    r.raw = j.value("raw", "");
    r.attempts = j.value("attempts", 0);
    r.latency_s = j.value("latency_s", 0.0);
    r.generated_tokens = j.value("generated_tokens", std::size_t{0});
    r.error = j.value("error", "");
    if (r.response.has_value() != r.ok())
        throw ConsistencyError("record for " + r.post_id + ": status and response disagree");
    return r;
}

void save_inference_records(std::span<const InferenceRecord> records, const std::filesystem::path& path) {
    std::vector<Json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(to_json(r));
    write_jsonl(path, rows);
}

std::vector<InferenceRecord> load_inference_records(const std::filesystem::path& path) {
    std::vector<InferenceRecord> out;
    for (const auto& j : read_jsonl(path)) out.push_back(inference_record_from_json(j));
    return out;
}

}  // namespace distil
