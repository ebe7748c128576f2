#pragma once

#include <istream>
#include <string>
#include <vector>

#include "taxoclass/errors.hpp"
#include "taxoclass/json_lines.hpp"
#include "taxoclass/text.hpp"

namespace taxoclass {

/// Classification unit: title, keywords and abstract. Full text is never used.
struct Document {
    std::string doc_id;
    std::string title;
    std::vector<std::string> keywords;
    std::string abstract;

    bool operator==(const Document&) const = default;
};

/// Title, comma-joined keywords, abstract; one per line, empty segments dropped.
inline std::string document_text(const Document& doc) {
    if (text::trim(doc.title).empty()) throw ContentError("document '" + doc.doc_id + "' has an empty title");
    std::string out(doc.title);
    if (!doc.keywords.empty()) {
        auto kw = text::join(doc.keywords, ", ");
        if (!text::trim(kw).empty()) out += "\n" + kw;
    }
    if (!text::trim(doc.abstract).empty()) out += "\n" + doc.abstract;
    return out;
}

// Typical word-length ranges of the reference corpus. Outside them is allowed
// but reported.
struct LengthBounds {
    std::size_t min;
    std::size_t max;
};
inline constexpr LengthBounds kTitleWords{3, 28};
inline constexpr LengthBounds kKeywordWords{0, 41};
inline constexpr LengthBounds kAbstractWords{20, 400};

inline std::vector<std::string> length_warnings(const Document& doc) {
    std::vector<std::string> out;
    auto check = [&](const char* field, std::size_t words, LengthBounds b) {
        if (words < b.min || words > b.max) out.push_back(std::string("length_warning:") + field);
    };
    check("title", text::word_count(doc.title), kTitleWords);
    std::size_t kw = 0;
    for (const auto& k : doc.keywords) kw += text::word_count(k);
    check("keywords", kw, kKeywordWords);
    check("abstract", text::word_count(doc.abstract), kAbstractWords);
    return out;
}

inline ordered_json document_to_json(const Document& doc) {
    ordered_json j;
    j["doc_id"] = doc.doc_id;
    j["title"] = doc.title;
    j["keywords"] = doc.keywords;
    j["abstract"] = doc.abstract;
    return j;
}

inline Document document_from_json(const json& obj, std::size_t line = 0) {
    Document d;
    d.doc_id = required_string(obj, "doc_id", line);
    d.title = required_string(obj, "title", line);
    if (auto it = obj.find("keywords"); it != obj.end() && !it->is_null()) {
        if (!it->is_array()) throw ParseError("field 'keywords' must be an array", line);
        for (const auto& k : *it) {
            if (!k.is_string()) throw ParseError("keywords must be strings", line);
            d.keywords.push_back(k.get<std::string>());
        }
    }
    d.abstract = optional_string(obj, "abstract", line).value_or("");
    return d;
}

/// Newline-delimited {doc_id, title, keywords: [..], abstract}.
inline std::vector<Document> load_documents(std::istream& in) {
    std::vector<Document> docs;
    for_each_json_line(in, [&](const json& obj, std::size_t line) { docs.push_back(document_from_json(obj, line)); });
    return docs;
}

inline std::vector<Document> load_documents_file(const std::string& path) {
    auto in = open_input(path);
    return load_documents(in);
}

} // namespace taxoclass
