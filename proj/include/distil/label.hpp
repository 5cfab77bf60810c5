#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace distil {

enum class Label { non_hate = 0, hate = 1 };

inline constexpr std::string_view to_string(Label l) {
    return l == Label::hate ? "hate" : "non_hate";
}

inline constexpr bool is_hate(Label l) { return l == Label::hate; }
inline constexpr Label label_from_bool(bool hate) { return hate ? Label::hate : Label::non_hate; }

// Accepts {0,1}, {hate,non_hate}, {true,false}, case-insensitively.
std::optional<Label> parse_label(std::string_view token);

// One (fragment, explanation) pair of a rationale.
struct Explanation {
    std::string fragment;
    std::string explanation;

    friend bool operator==(const Explanation&, const Explanation&) = default;
};

using Rationale = std::vector<Explanation>;

}  // namespace distil
