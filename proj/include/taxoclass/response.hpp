#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "taxoclass/errors.hpp"
#include "taxoclass/json_lines.hpp"
#include "taxoclass/prompts.hpp"
#include "taxoclass/text.hpp"

namespace taxoclass {

struct BestLabels {
    std::vector<std::string> ids;
};

struct ScoredId {
    std::string id;
    double score = 0.0;
};

struct Scores {
    std::vector<ScoredId> pairs;
};

struct LeafVerdict {
    std::string main_focus;
    bool label_fit = false;
};

struct ParentVerdict {
    std::string main_focus;
    bool label_fit = false;
    double relevancy_score = 0.0;
};

struct TopLabels {
    std::vector<std::string> ids;
};

struct Description {
    std::string text;
};

using ParsedResponse = std::variant<BestLabels, Scores, LeafVerdict, ParentVerdict, TopLabels, Description>;

inline constexpr double kScoreFloor = 0.01;
inline constexpr double kScoreCeil = 1.00;
inline constexpr double kClampSlack = 0.005;

/// First balanced `{...}` span in `raw` that parses as a JSON object. Prose,
/// code fences and unparseable brace runs before it are skipped.
inline std::optional<json> find_json_object(std::string_view raw) {
    for (std::size_t start = raw.find('{'); start != std::string_view::npos; start = raw.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < raw.size(); ++i) {
            char c = raw[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                auto parsed = json::parse(raw.substr(start, i - start + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                break;
            }
        }
    }
    return std::nullopt;
}

namespace detail {

[[noreturn]] inline void mismatch(const std::string& what) {
    throw ResponseError(ResponseError::Kind::schema_mismatch, what);
}

inline const json& require_key(const json& obj, std::initializer_list<const char*> keys) {
    for (const char* k : keys)
        if (auto it = obj.find(k); it != obj.end()) return *it;
    mismatch(std::string("missing key '") + *keys.begin() + "'");
}

inline std::string id_value(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    mismatch("label ids must be strings");
}

inline std::vector<std::string> id_list(const json& v) {
    if (!v.is_array()) mismatch("expected a list of label ids");
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& item : v) {
        auto id = id_value(item);
        if (!seen.insert(id).second) throw ResponseError(ResponseError::Kind::duplicate_id, "duplicate id '" + id + "'");
        ids.push_back(std::move(id));
    }
    return ids;
}

/// Range check with a small clamp zone just outside each bound.
inline double bounded(const json& v, double lo, double hi, const char* what) {
    if (!v.is_number()) mismatch(std::string(what) + " must be a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) throw ResponseError(ResponseError::Kind::out_of_range, std::string(what) + " is not finite");
    if (x < lo) {
        if (x < lo - kClampSlack - 1e-12)
            throw ResponseError(ResponseError::Kind::out_of_range, std::string(what) + " " + std::to_string(x) + " below " + text::fixed(lo, 2));
        x = lo;
    } else if (x > hi) {
        if (x > hi + kClampSlack + 1e-12)
            throw ResponseError(ResponseError::Kind::out_of_range, std::string(what) + " " + std::to_string(x) + " above " + text::fixed(hi, 2));
        x = hi;
    }
    return x;
}

inline bool boolean(const json& v, const char* key) {
    if (!v.is_boolean()) mismatch(std::string("'") + key + "' must be a boolean");
    return v.get<bool>();
}

inline std::string string_field(const json& v, const char* key) {
    if (!v.is_string()) mismatch(std::string("'") + key + "' must be a string");
    return v.get<std::string>();
}

inline Scores parse_scores(const json& obj) {
    const auto& s = require_key(obj, {"scores"});
    Scores out;
    std::set<std::string> seen;
    auto add = [&](std::string id, const json& score) {
        if (!seen.insert(id).second) throw ResponseError(ResponseError::Kind::duplicate_id, "duplicate id '" + id + "'");
        out.pairs.push_back({std::move(id), text::round2(bounded(score, kScoreFloor, kScoreCeil, "score"))});
    };
    if (s.is_object()) {
        for (auto it = s.begin(); it != s.end(); ++it) add(it.key(), *it);
    } else if (s.is_array()) {
        for (const auto& item : s) {
            if (item.is_array() && item.size() == 2) {
                add(id_value(item[0]), item[1]);
            } else if (item.is_object()) {
                add(id_value(require_key(item, {"id", "label_id", "label"})),
                    require_key(item, {"score", "relevancy_score"}));
            } else {
                mismatch("each score entry must be an [id, score] pair");
            }
        }
    } else {
        mismatch("'scores' must be a list");
    }
    return out;
}

inline std::string strip_fences(std::string_view raw) {
    auto t = text::trim(raw);
    if (t.starts_with("```")) {
        auto nl = t.find('\n');
        t = nl == std::string_view::npos ? std::string_view{} : t.substr(nl + 1);
        if (auto end = t.rfind("```"); end != std::string_view::npos) t = t.substr(0, end);
    }
    return std::string(text::trim(t));
}

} // namespace detail

/// Locates the first JSON object in a provider reply and validates it against
/// `expected`. Throws ResponseError (no_json, schema_mismatch, out_of_range,
/// duplicate_id).
inline ParsedResponse extract_response(std::string_view raw, Schema expected) {
    auto obj = find_json_object(raw);
    if (expected == Schema::description) {
        if (obj) {
            if (auto it = obj->find("description"); it != obj->end())
                return Description{std::string(text::trim(detail::string_field(*it, "description")))};
        }
        return Description{detail::strip_fences(raw)};
    }
    if (!obj) throw ResponseError(ResponseError::Kind::no_json, "no JSON object in reply");

    switch (expected) {
        case Schema::best_labels: return BestLabels{detail::id_list(detail::require_key(*obj, {"best_labels"}))};
        case Schema::top_labels:
            return TopLabels{detail::id_list(detail::require_key(*obj, {"top_labels", "best_labels", "labels", "ids"}))};
        case Schema::scores: return detail::parse_scores(*obj);
        case Schema::leaf_verdict: {
            LeafVerdict v;
            v.main_focus = detail::string_field(detail::require_key(*obj, {"main_focus"}), "main_focus");
            v.label_fit = detail::boolean(detail::require_key(*obj, {"label_fit"}), "label_fit");
            return v;
        }
        case Schema::parent_verdict: {
            ParentVerdict v;
            v.main_focus = detail::string_field(detail::require_key(*obj, {"main_focus"}), "main_focus");
            v.label_fit = detail::boolean(detail::require_key(*obj, {"label_fit"}), "label_fit");
            v.relevancy_score = detail::bounded(detail::require_key(*obj, {"relevancy_score"}), 0.0, 1.0, "relevancy_score");
            return v;
        }
        case Schema::description: break;
    }
    detail::mismatch("unsupported schema");
}

} // namespace taxoclass
