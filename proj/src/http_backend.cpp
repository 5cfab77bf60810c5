#include "distil/backends.hpp"

#include <httplib.h>

namespace distil {

OpenAiChatBackend::OpenAiChatBackend(HttpBackendOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw ConfigError("http backend: base_url is empty");
    if (options_.model.empty()) throw ConfigError("http backend: model is empty");
}

Completion OpenAiChatBackend::complete(std::string_view system, std::span<const ChatTurn> turns,
                                       const GenerationConfig& config) {
    Json messages = Json::array();
    if (!system.empty()) messages.push_back(Json{{"role", "system"}, {"content", system}});
    for (const auto& t : turns)
        messages.push_back(Json{{"role", std::string(to_string(t.role))}, {"content", t.text}});
    Json body{{"model", options_.model},
              {"messages", messages},
              {"max_tokens", config.max_new_tokens},
              {"temperature", config.temperature}};

    httplib::Client cli(options_.base_url);
    const auto timeout = std::chrono::duration<double>(options_.timeout_s);
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    cli.set_connection_timeout(std::chrono::seconds(10));
    if (!options_.api_key.empty()) cli.set_bearer_token_auth(options_.api_key);

    const auto t0 = std::chrono::steady_clock::now();
    auto res = cli.Post(options_.path, body.dump(-1, ' ', false, Json::error_handler_t::replace),
                        "application/json");
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!res) throw TransportError("http backend: " + httplib::to_string(res.error()));

    if (res->status == 400 && (res->body.find("context_length") != std::string::npos ||
                               res->body.find("maximum context") != std::string::npos))
        throw ContextOverflowError("context length exceeded: " + res->body.substr(0, 300));
    if (res->status == 429 || res->status >= 500)
        throw TransportError("http backend: status " + std::to_string(res->status));
    if (res->status != 200)
        throw Error("http backend: status " + std::to_string(res->status) + ": " +
                    res->body.substr(0, 300));

    Json reply = Json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
        throw TransportError("http backend: malformed reply body");
    const Json& choice = reply["choices"][0];
    if (choice.value("finish_reason", "") == "length" && !choice.contains("message"))
        throw ContextOverflowError("generation truncated by context length");

    Completion c;
    c.text = choice.at("message").value("content", "");
    if (reply.contains("usage") && reply["usage"].contains("completion_tokens"))
        c.generated_tokens = reply["usage"]["completion_tokens"].get<std::size_t>();
    else
        c.generated_tokens = count_whitespace_tokens(c.text);
    c.elapsed_s = elapsed;
    return c;
}

}  // namespace distil
