#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "distil/inference.hpp"

namespace distil {

std::vector<std::string> default_hate_lexicon();

struct MockBackendOptions {
    std::string model_id = "mock";
    unsigned error_permille = 0;   // share of messages whose label is flipped
    unsigned prose_permille = 300; // share wrapped in prose / code fences
    unsigned garble_permille = 0;  // share answered with unparseable text
    double tokens_per_second = 25.0;
    std::vector<std::string> lexicon = default_hate_lexicon();
};

// Deterministic stand-in for a chat model: calls a message hateful when it
// contains a lexicon term, then perturbs the answer by hashing
// (model_id, message). Identical prompts always get identical answers.
class MockBackend : public ChatBackend {
public:
    explicit MockBackend(MockBackendOptions options);

    std::string model_id() const override { return options_.model_id; }
    Completion complete(std::string_view system, std::span<const ChatTurn> turns,
                        const GenerationConfig& config) override;

    // The answer object the mock would give for `message`, before wrapping.
    RationaleResponse answer(std::string_view message) const;

private:
    MockBackendOptions options_;
};

std::uint64_t fnv1a64(std::string_view data);
std::size_t count_whitespace_tokens(std::string_view text);

// OpenAI-compatible /v1/chat/completions endpoint (vLLM, llama.cpp server,
// hosted APIs).
struct HttpBackendOptions {
    std::string base_url;  // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;   // sent as a bearer token when non-empty
    double timeout_s = 300.0;
    bool supports_roles = true;
};

class OpenAiChatBackend : public ChatBackend {
public:
    explicit OpenAiChatBackend(HttpBackendOptions options);

    std::string model_id() const override { return options_.model; }
    bool supports_roles() const override { return options_.supports_roles; }
    Completion complete(std::string_view system, std::span<const ChatTurn> turns,
                        const GenerationConfig& config) override;

private:
    HttpBackendOptions options_;
};

}  // namespace distil
