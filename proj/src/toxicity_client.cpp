#include "distil/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace distil {

ToxicityClient::ToxicityClient(ToxicityClientOptions options, std::function<void(double)> sleep,
                               std::function<double()> clock)
    : options_(std::move(options)), sleep_(std::move(sleep)), clock_(std::move(clock)) {
    if (!sleep_) sleep_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
    if (!clock_)
        clock_ = [] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
        };
}

ToxicityClient ToxicityClient::from_env(ToxicityClientOptions options, const char* env_var) {
    if (options.api_key.empty()) {
        const char* key = std::getenv(env_var);
        if (!key || !*key) throw ConfigError(std::string("toxicity client: $") + env_var + " is not set");
        options.api_key = key;
    }
    return ToxicityClient(std::move(options));
}

double ToxicityClient::score(std::string_view text) {
    Json body{{"comment", Json{{"text", text}}},
              {"requestedAttributes", Json{{options_.attribute, Json::object()}}},
              {"doNotStore", true}};
    const std::string payload = body.dump(-1, ' ', false, Json::error_handler_t::replace);
    std::string target = options_.path;
    if (!options_.api_key.empty()) target += "?key=" + httplib::detail::encode_query_param(options_.api_key);

    std::string last_error;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        if (attempt > 0) sleep_(options_.backoff_initial_s * std::ldexp(1.0, attempt - 1));
        if (last_request_) {
            const double wait = options_.min_interval_s - (clock_() - *last_request_);
            if (wait > 0) sleep_(wait);
        }
        last_request_ = clock_();
        ++requests_;

        httplib::Client cli(options_.base_url);
        cli.set_read_timeout(std::chrono::seconds(static_cast<long>(std::ceil(options_.timeout_s))));
        auto res = cli.Post(target, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw Error("toxicity service: status " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
        Json reply = Json::parse(res->body, nullptr, false);
        try {
            const double v = reply.at("attributeScores").at(options_.attribute).at("summaryScore").at("value").get<double>();
            if (!(v >= 0.0 && v <= 1.0)) throw Error("toxicity score outside [0,1]");
            return v;
        } catch (const nlohmann::json::exception&) {
            throw Error("toxicity service: unexpected reply " + res->body.substr(0, 300));
        }
    }
    throw TransportError("toxicity service unreachable after retries: " + last_error);
}

}  // namespace distil
