#include "distil/backends.hpp"

#include <algorithm>
#include <sstream>

namespace distil {

std::vector<std::string> default_hate_lexicon() {
    // Terms planted in the synthetic fixture corpus; the groups it targets
    // are invented.
    return {"vermin", "subhuman", "parasites", "should be driven out",
            "do not deserve rights", "are a disease", "wipe them out", "go back where"};
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::size_t count_whitespace_tokens(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::size_t n = 0;
    for (std::string w; in >> w;) ++n;
    return n;
}

MockBackend::MockBackend(MockBackendOptions options) : options_(std::move(options)) {}

RationaleResponse MockBackend::answer(std::string_view message) const {
    const std::string lower = to_lower(message);
    RationaleResponse r;
    for (const auto& term : options_.lexicon) {
        const auto pos = lower.find(term);
        if (pos == std::string::npos) continue;
        r.explanations.push_back(
            {std::string(message.substr(pos, term.size())),
             "This phrase dehumanises or threatens a group based on who they are."});
    }
    r.hate_speech = !r.explanations.empty();
    if (r.explanations.empty()) {
        std::istringstream in{std::string(message)};
        std::string fragment, w;
        for (int i = 0; i < 6 && (in >> w); ++i) fragment += (fragment.empty() ? "" : " ") + w;
        if (fragment.empty()) fragment = std::string(trim(message));
        r.explanations.push_back(
            {fragment, "This phrase expresses an opinion without attacking any group."});
    }
    const std::uint64_t h = fnv1a64(options_.model_id + '\x1f' + std::string(message));
    if (h % 1000 < options_.error_permille) r.hate_speech = !r.hate_speech;
    return r;
}

Completion MockBackend::complete(std::string_view, std::span<const ChatTurn> turns,
                                 const GenerationConfig& config) {
    if (turns.empty()) throw ArgumentError("mock backend: no turns");
    auto message = extract_target_message(turns.back().text);
    if (!message) throw ArgumentError("mock backend: prompt carries no <Message> block");

    const std::uint64_t h = fnv1a64(options_.model_id + '\x1f' + *message);
    const RationaleResponse r = answer(*message);
    const std::uint64_t style = (h / 1000) % 1000;
    const std::uint64_t garble = (h / 1000000) % 1000;

    std::string text;
    if (garble < options_.garble_permille) {
        text = "I cannot provide a structured answer for this message: {\"hate_speech\": ";
    } else if (style < options_.prose_permille / 2) {
        text = "Sure! Here is the JSON:\n```json\n" + serialize_response(r) + "\n```";
    } else if (style < options_.prose_permille) {
        Json expl = Json::array();
        for (const auto& e : r.explanations)
            expl.push_back(Json{{"phrase", e.fragment}, {"explanation", e.explanation}});
        Json obj{{"explanations", expl}, {"hate_speech", r.hate_speech ? "True" : "False"}};
        text = obj.dump(2) + "\nLet me know if you need anything else.";
    } else {
        text = serialize_response(r);
    }

    Completion c;
    c.generated_tokens = std::min<std::size_t>(count_whitespace_tokens(text),
                                               static_cast<std::size_t>(config.max_new_tokens));
    c.text = std::move(text);
    if (options_.tokens_per_second > 0)
        c.elapsed_s = static_cast<double>(c.generated_tokens) / options_.tokens_per_second;
    return c;
}

}  // namespace distil
