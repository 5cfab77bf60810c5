#pragma once

#include <string>
#include <string_view>

#include "distil/errors.hpp"
#include "distil/label.hpp"

namespace distil {

// A parsed model answer: the hate decision plus (fragment, explanation) pairs.
struct RationaleResponse {
    bool hate_speech = false;
    Rationale explanations;
    std::string raw;  // unmodified model text; not part of equality

    Label label() const { return label_from_bool(hate_speech); }

    friend bool operator==(const RationaleResponse& a, const RationaleResponse& b) {
        return a.hate_speech == b.hate_speech && a.explanations == b.explanations;
    }
};

enum class ParseFailureKind { no_object, schema };

class ResponseParseError : public Error {
public:
    ResponseParseError(ParseFailureKind kind, std::string what)
        : Error(std::move(what)), kind_(kind) {}
    ParseFailureKind kind() const { return kind_; }

private:
    ParseFailureKind kind_;
};

// Extracts the first JSON object carrying the response fields from model
// text (prose and code fences around it are ignored). hate_speech may be a
// boolean or one of the strings "True"/"False"; explanations may be a list
// of pairs, a list of objects or a map.
RationaleResponse parse_model_response(std::string_view raw);

// Canonical compact form, e.g.
//   {"hate_speech":"True","explanations":[["fragment","why"]]}
std::string serialize_response(bool hate_speech, const Rationale& explanations);
inline std::string serialize_response(const RationaleResponse& r) {
    return serialize_response(r.hate_speech, r.explanations);
}

}  // namespace distil
