#pragma once

#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <string>

#include "json.hpp"

#include "taxoclass/errors.hpp"
#include "taxoclass/text.hpp"

namespace taxoclass {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Calls `fn(object, line_number)` for every non-blank line of a
/// newline-delimited JSON stream. Lines must hold a JSON object.
template <typename Fn>
void for_each_json_line(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
        fn(obj, line_no);
    }
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    return out;
}

inline json read_json_file(const std::string& path) {
    auto in = open_input(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// Field accessors with line context for record parsing.
inline std::string required_string(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'", line);
    if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string", line);
    return it->get<std::string>();
}

inline std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string", line);
    return it->get<std::string>();
}

} // namespace taxoclass
