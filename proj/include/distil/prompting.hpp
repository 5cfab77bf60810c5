#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distil/errors.hpp"
#include "distil/label.hpp"

namespace distil {

// The hate speech definition H inlined into every prompt.
struct HateSpeechDefinition {
    std::string text;

    static HateSpeechDefinition standard();
};

// A human-authored worked example (x_p, r_p, y_p). Every fragment must occur
// in the text.
struct FewShotExample {
    std::string text;
    Label label = Label::non_hate;
    Rationale rationale;
};

enum class Role { system, user, assistant };
std::string_view to_string(Role r);

struct ChatTurn {
    Role role = Role::user;
    std::string text;

    friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

// A prompt in both renderings: chat turns after a system instruction, and
// the same content flattened into one string (`rendered`).
struct PromptBundle {
    std::string system_instruction;
    std::vector<FewShotExample> shots;
    std::string target_message;
    std::vector<ChatTurn> turns;
    std::string rendered;
};

class PromptError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

inline constexpr std::string_view kMessageOpen = "<Message>";
inline constexpr std::string_view kMessageClose = "</Message>";

// Instruction paragraphs with the definition substituted (no message line).
std::string task_instruction(const HateSpeechDefinition& definition);

// "Generate step-by-step explanation for: <Message> {message} </Message>"
std::string message_query(std::string_view message);

PromptBundle build_fewshot_cot_prompt(const HateSpeechDefinition& definition,
                                      std::span<const FewShotExample> shots,
                                      std::string_view message);

PromptBundle build_instruction_prompt(const HateSpeechDefinition& definition,
                                      std::string_view message);

// Throws PromptError when a fragment is not a substring of the text (after
// NFC normalization of both) or the rationale is empty.
void validate_shot(const FewShotExample& shot);

// Record-per-line file with keys text, label, rationale[{fragment, explanation}].
std::vector<FewShotExample> load_shots(const std::filesystem::path& path);

// The message inside the last <Message> ... </Message> pair of a prompt.
std::optional<std::string> extract_target_message(std::string_view prompt);

std::string nfc_normalize(std::string_view utf8);

}  // namespace distil
