#include "distil/response.hpp"

#include <cctype>
#include <optional>

#include "distil/util.hpp"

namespace distil {

namespace {

// End offset (exclusive) of the balanced {...} starting at `open`, honouring
// JSON string literals. npos when the braces never close.
std::size_t match_object(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i + 1;
    }
    return std::string_view::npos;
}

// Python-style True/False outside string literals become JSON booleans.
std::string coerce_bare_booleans(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            out.push_back(c);
            if (c == '\\' && i + 1 < s.size()) out.push_back(s[++i]);
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        const bool boundary = i == 0 || !is_word(s[i - 1]);
        if (boundary && s.substr(i, 4) == "True" && (i + 4 == s.size() || !is_word(s[i + 4]))) {
            out += "true";
            i += 3;
        } else if (boundary && s.substr(i, 5) == "False" &&
                   (i + 5 == s.size() || !is_word(s[i + 5]))) {
            out += "false";
            i += 4;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::optional<Json> try_parse_object(std::string_view candidate) {
    for (const std::string& text : {std::string(candidate), coerce_bare_booleans(candidate)}) {
        Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
        if (!j.is_discarded() && j.is_object()) return j;
    }
    return std::nullopt;
}

[[noreturn]] void schema_error(const std::string& what) {
    throw ResponseParseError(ParseFailureKind::schema, "schema failure: " + what);
}

bool coerce_bool(const Json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
        const std::string s = to_lower(trim(v.get<std::string>()));
        if (s == "true") return true;
        if (s == "false") return false;
    }
    schema_error("hate_speech is not a boolean: " + v.dump());
}

const Json* first_key(const Json& obj, std::initializer_list<const char*> keys) {
    for (const char* k : keys)
        if (auto it = obj.find(k); it != obj.end()) return &*it;
    return nullptr;
}

Explanation make_explanation(const Json& fragment, const Json& explanation) {
    if (!fragment.is_string() || !explanation.is_string())
        schema_error("explanation entries must be strings");
    Explanation e{fragment.get<std::string>(), explanation.get<std::string>()};
    if (trim(e.fragment).empty()) schema_error("empty fragment");
    return e;
}

Rationale coerce_explanations(const Json& v) {
    Rationale out;
    if (v.is_object()) {
        for (const auto& [k, val] : v.items()) out.push_back(make_explanation(Json(k), val));
    } else if (v.is_array()) {
        for (const Json& item : v) {
            if (item.is_array()) {
                if (item.size() != 2) schema_error("explanation pair must have two elements");
                out.push_back(make_explanation(item[0], item[1]));
            } else if (item.is_object()) {
                const Json* frag = first_key(item, {"fragment", "phrase", "text", "sentence"});
                const Json* expl = first_key(item, {"explanation", "reason", "rationale"});
                if (frag && expl) {
                    out.push_back(make_explanation(*frag, *expl));
                } else if (item.size() == 1) {
                    out.push_back(make_explanation(Json(item.begin().key()), item.begin().value()));
                } else {
                    schema_error("explanation object lacks fragment/explanation keys");
                }
            } else {
                schema_error("unsupported explanation entry " + item.dump());
            }
        }
    } else {
        schema_error("explanations must be a list or a map");
    }
    if (out.empty()) schema_error("empty explanations");
    return out;
}

}  // namespace

RationaleResponse parse_model_response(std::string_view raw) {
    if (trim(raw).empty()) throw ResponseParseError(ParseFailureKind::no_object, "empty response");

    std::optional<Json> first_object;
    std::optional<Json> chosen;
    for (std::size_t pos = raw.find('{'); pos != std::string_view::npos; pos = raw.find('{', pos + 1)) {
        const std::size_t end = match_object(raw, pos);
        if (end == std::string_view::npos) continue;
        auto obj = try_parse_object(raw.substr(pos, end - pos));
        if (!obj) continue;
        if (obj->contains("hate_speech") || obj->contains("explanations")) {
            chosen = std::move(obj);
            break;
        }
        if (!first_object) first_object = std::move(obj);
    }
    if (!chosen) {
        if (first_object) schema_error("object lacks hate_speech and explanations");
        throw ResponseParseError(ParseFailureKind::no_object, "no parsable JSON object in response");
    }

    const Json& obj = *chosen;
    if (!obj.contains("hate_speech")) schema_error("missing field hate_speech");
    if (!obj.contains("explanations")) schema_error("missing field explanations");

    RationaleResponse r;
    r.hate_speech = coerce_bool(obj["hate_speech"]);
    r.explanations = coerce_explanations(obj["explanations"]);
    r.raw = std::string(raw);
    return r;
}

std::string serialize_response(bool hate_speech, const Rationale& explanations) {
    Json pairs = Json::array();
    for (const auto& e : explanations) pairs.push_back(Json::array({e.fragment, e.explanation}));
    Json obj;
    obj["hate_speech"] = hate_speech ? "True" : "False";
    obj["explanations"] = std::move(pairs);
    return obj.dump(-1, ' ', false, Json::error_handler_t::replace);
}

}  // namespace distil
