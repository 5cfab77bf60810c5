#include "distil/prompting.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "distil/prompt_assets.hpp"
#include "distil/response.hpp"
#include "distil/util.hpp"

namespace distil {

namespace {

constexpr std::string_view kDefinitionSlot = "{definition}";
constexpr std::string_view kMessageSlot = "{message}";

std::string replace_once(std::string_view tmpl, std::string_view slot, std::string_view value) {
    const auto pos = tmpl.find(slot);
    if (pos == std::string_view::npos) throw Error("prompt template lacks " + std::string(slot));
    std::string out(tmpl.substr(0, pos));
    out += value;
    out += tmpl.substr(pos + slot.size());
    return out;
}

// The template's last paragraph is the message line; everything before it
// is the instruction proper.
std::pair<std::string_view, std::string_view> split_template() {
    const std::string_view t = assets::kTaskInstruction;
    const auto cut = t.rfind("\n\n");
    return {t.substr(0, cut), t.substr(cut + 2)};
}

void check_message(std::string_view message) {
    if (trim(message).empty()) throw PromptError("empty message");
    if (message.find(kMessageOpen) != std::string_view::npos ||
        message.find(kMessageClose) != std::string_view::npos)
        throw PromptError("delimiter collision: message contains <Message> or </Message>");
}

std::string flatten(const std::string& system, const std::vector<ChatTurn>& turns) {
    std::string out = system;
    for (const auto& t : turns) {
        out += "\n\n";
        out += t.text;
    }
    return out;
}

}  // namespace

HateSpeechDefinition HateSpeechDefinition::standard() {
    return HateSpeechDefinition{std::string(assets::kDefaultDefinition)};
}

std::string_view to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::string nfc_normalize(std::string_view utf8) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
    icu::UnicodeString in = icu::UnicodeString::fromUTF8(
        icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
    icu::UnicodeString out = nfc->normalize(in, status);
    if (U_FAILURE(status)) throw Error("NFC normalization failed");
    std::string result;
    out.toUTF8String(result);
    return result;
}

std::string task_instruction(const HateSpeechDefinition& definition) {
    if (trim(definition.text).empty()) throw PromptError("empty hate speech definition");
    return replace_once(split_template().first, kDefinitionSlot, definition.text);
}

std::string message_query(std::string_view message) {
    return replace_once(split_template().second, kMessageSlot, message);
}

void validate_shot(const FewShotExample& shot) {
    if (shot.rationale.empty()) throw PromptError("shot has an empty rationale");
    const std::string text = nfc_normalize(shot.text);
    for (const auto& e : shot.rationale) {
        if (trim(e.fragment).empty()) throw PromptError("shot has an empty fragment");
        if (text.find(nfc_normalize(e.fragment)) == std::string::npos)
            throw PromptError("fragment not in text: \"" + e.fragment + "\"");
    }
}

PromptBundle build_fewshot_cot_prompt(const HateSpeechDefinition& definition,
                                      std::span<const FewShotExample> shots,
                                      std::string_view message) {
    if (shots.empty()) throw PromptError("few-shot prompt needs at least one shot");
    check_message(message);
    for (const auto& shot : shots) {
        validate_shot(shot);
        check_message(shot.text);
    }

    PromptBundle b;
    b.system_instruction = task_instruction(definition);
    b.shots.assign(shots.begin(), shots.end());
    b.target_message = std::string(message);
    for (const auto& shot : shots) {
        b.turns.push_back({Role::user, message_query(shot.text)});
        b.turns.push_back({Role::assistant, serialize_response(is_hate(shot.label), shot.rationale)});
    }
    b.turns.push_back({Role::user, message_query(message)});
    b.rendered = flatten(b.system_instruction, b.turns);
    return b;
}

PromptBundle build_instruction_prompt(const HateSpeechDefinition& definition,
                                      std::string_view message) {
    check_message(message);
    PromptBundle b;
    b.system_instruction = task_instruction(definition);
    b.target_message = std::string(message);
    b.turns.push_back({Role::user, message_query(message)});
    b.rendered = flatten(b.system_instruction, b.turns);
    return b;
}

std::vector<FewShotExample> load_shots(const std::filesystem::path& path) {
    std::vector<FewShotExample> shots;
    std::size_t n = 0;
    for (const Json& row : read_jsonl(path)) {
        ++n;
        const std::string where = path.string() + ": shot " + std::to_string(n);
        FewShotExample s;
        s.text = row.at("text").get<std::string>();
        const Json& lab = row.at("label");
        auto label = parse_label(lab.is_string() ? lab.get<std::string>() : lab.dump());
        if (!label) throw ConfigError(where + ": bad label " + lab.dump());
        s.label = *label;
        for (const Json& e : row.at("rationale"))
            s.rationale.push_back({e.at("fragment").get<std::string>(),
                                   e.at("explanation").get<std::string>()});
        try {
            validate_shot(s);
        } catch (const PromptError& err) {
            throw ConfigError(where + ": " + err.what());
        }
        shots.push_back(std::move(s));
    }
    return shots;
}

std::optional<std::string> extract_target_message(std::string_view prompt) {
    const auto open = prompt.rfind(kMessageOpen);
    if (open == std::string_view::npos) return std::nullopt;
    const auto body = open + kMessageOpen.size();
    const auto close = prompt.find(kMessageClose, body);
    if (close == std::string_view::npos) return std::nullopt;
    return std::string(trim(prompt.substr(body, close - body)));
}

}  // namespace distil
