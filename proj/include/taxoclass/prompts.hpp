#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "taxoclass/document.hpp"
#include "taxoclass/errors.hpp"
#include "taxoclass/json_lines.hpp"
#include "taxoclass/taxonomy.hpp"
#include "taxoclass/text.hpp"

namespace taxoclass {

enum class TemplateId { desc_gen, trav_select, select_one_pass, rerank, selectp_leaf, selectp_parent, decrease_labels };

inline constexpr std::array kAllTemplates{TemplateId::desc_gen,     TemplateId::trav_select,
                                          TemplateId::select_one_pass, TemplateId::rerank,
                                          TemplateId::selectp_leaf, TemplateId::selectp_parent,
                                          TemplateId::decrease_labels};

/// Shape of the JSON reply each template asks for.
enum class Schema { description, best_labels, scores, leaf_verdict, parent_verdict, top_labels };

inline std::string_view to_string(TemplateId id) {
    switch (id) {
        case TemplateId::desc_gen: return "desc_gen";
        case TemplateId::trav_select: return "trav_select";
        case TemplateId::select_one_pass: return "select_one_pass";
        case TemplateId::rerank: return "rerank";
        case TemplateId::selectp_leaf: return "selectp_leaf";
        case TemplateId::selectp_parent: return "selectp_parent";
        case TemplateId::decrease_labels: return "decrease_labels";
    }
    return "unknown";
}

inline std::string_view to_string(Schema s) {
    switch (s) {
        case Schema::description: return "description";
        case Schema::best_labels: return "best_labels";
        case Schema::scores: return "scores";
        case Schema::leaf_verdict: return "leaf_verdict";
        case Schema::parent_verdict: return "parent_verdict";
        case Schema::top_labels: return "top_labels";
    }
    return "unknown";
}

inline Schema schema_for(TemplateId id) {
    switch (id) {
        case TemplateId::desc_gen: return Schema::description;
        case TemplateId::trav_select:
        case TemplateId::select_one_pass: return Schema::best_labels;
        case TemplateId::rerank: return Schema::scores;
        case TemplateId::selectp_leaf: return Schema::leaf_verdict;
        case TemplateId::selectp_parent: return Schema::parent_verdict;
        case TemplateId::decrease_labels: return Schema::top_labels;
    }
    throw ConfigError("unknown template id");
}

namespace prompt_text {

// Kept byte-identical to assets/prompts/<template_id>.txt.
inline constexpr std::string_view desc_gen =
    R"prompt(You are an AI assistant designed to generate descriptions for labels used in classifying SSRN preprint articles. To do this, you should use the information in the name of the label, and also using the information about the parent of the label in the taxonomy.)prompt";

inline constexpr std::string_view trav_select =
    R"prompt(You are an AI trained to evaluate the relevance of multiple labels for a given SSRN pre-print document. For this task, you will receive the document's title, keywords, abstract, and a list of labels. Each label in the list has an ID, a name, and description. Your task is to determine which labels are the best fit for the document. A label fits well if the document's main focus aligns with the area the label describes. Your output should be a concise JSON object containing a list, 'best_labels', which only includes the ID of labels that best fit the document.)prompt";

inline constexpr std::string_view select_one_pass =
    R"prompt(You are an AI assistant trained to evaluate the relevance of multiple labels for a given SSRN pre-print document. You will receive the document's title, keywords, abstract, and a taxonomy of labels. Each label in the taxonomy has an ID, a name, and description. Your task is to select the best-fitting leaf labels (having no children) for the document.
A label is considered a good fit if:
- It directly relates to the core subject of the article.
- All its parents are relevant to the document.
Your output should be a concise JSON object containing a list, 'best_labels', which only includes the IDs of the labels that best fit the document.)prompt";

// "{}" placeholders are filled with the number of labels.
inline constexpr std::string_view rerank =
    "You are an AI assistant helping me to find the conceptual similarity scores between an SSRN article and a "
    "list of {} labels.  \n"
    "Please ensure the following:\n"
    "- Return a score for each label.\n"
    "- Ensure there are {} scores in total.\n"
    "- Ensure the scores are varied and accurately represent the level of similarity, rather than scoring a large "
    "percentage of labels the same.\n"
    "- Consider the main theme of the article and the specific context in which keywords are used.\n"
    "- Do not assign high similarity scores to labels that are only tangentially related or share a few keywords "
    "with the article. The focus should be on the overall subject matter of the article.\n"
    "- Scores should have two decimal points for greater precision.\n"
    "The output should be a JSON object named \"scores\" that contains a list of {} tuples. Each tuple should "
    "contain a label ID and a relevancy score between 0.01 and 1.00, indicating the level of relevancy between the "
    "label and the given document.";

inline constexpr std::string_view selectp_leaf =
    R"prompt(You are an AI trained to evaluate the relevance of a label for a given SSRN pre-print document. You will receive the document's title, keywords, abstract, and the label's ID, name, and description. Your task is to determine if the label is a good fit for the document. A label fits well if the document's main focus aligns with the area the label describes. Your output should be a concise JSON object. The JSON object should contain three keys: "main_focus", a very short representation of the document's main focus, "label_fit", representing the fit as a boolean value. It's crucial to utilize the entire scoring range to reflect varying degrees of relevancy. Please do not provide any further information or explanation in addition to the JSON object. Do not use the slash or backslash characters in your output.)prompt";

inline constexpr std::string_view selectp_parent =
    R"prompt(You are an AI, trained to assess the potential relevance of a label for a given SSRN pre-print document. You'll be provided with the document's title, keywords, abstract, and the label's name and description. Your mission is to gauge if the label could be a reasonable match for the document. A label can be considered a reasonable match even if it only partially aligns with the document's main theme. Your response should be a JSON object. This JSON object should include three keys: "main_focus", a brief summary of the document's main theme, "label_fit", indicating the fit as a boolean value, and "relevancy_score", showing the relevance as a score from 0 to 1. It's important to use the full scoring range to indicate varying levels of relevance. Do not use the slash or backslash characters in your output.)prompt";

inline constexpr std::string_view decrease_labels =
    R"prompt(You are an AI trained to evaluate the relevance of multiple labels for a given SSRN pre-print document and select the top 5 labels that best fit the document. For this task, you will receive the document's title, keywords, abstract, and a list of labels. Each label in the list has an ID, name, and description. Your task is to determine which labels are the best fit for the document. A label fits well if the document's main focus aligns with the area the label describes. Please return the IDs of the top 5 labels that best fit the given document.)prompt";

inline std::string_view builtin(TemplateId id) {
    switch (id) {
        case TemplateId::desc_gen: return desc_gen;
        case TemplateId::trav_select: return trav_select;
        case TemplateId::select_one_pass: return select_one_pass;
        case TemplateId::rerank: return rerank;
        case TemplateId::selectp_leaf: return selectp_leaf;
        case TemplateId::selectp_parent: return selectp_parent;
        case TemplateId::decrease_labels: return decrease_labels;
    }
    throw ConfigError("unknown template id");
}

} // namespace prompt_text

/// System prompts keyed by template id. Defaults are compiled in; a directory
/// of `<template_id>.txt` files overrides them.
class PromptLibrary {
public:
    static PromptLibrary builtin() {
        PromptLibrary lib;
        for (auto id : kAllTemplates) lib.texts_[static_cast<std::size_t>(id)] = std::string(prompt_text::builtin(id));
        return lib;
    }

    static PromptLibrary from_directory(const std::filesystem::path& dir) {
        auto lib = builtin();
        for (auto id : kAllTemplates) {
            auto path = dir / (std::string(to_string(id)) + ".txt");
            if (!std::filesystem::exists(path)) continue;
            std::ifstream in(path, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            if (text::trim(ss.str()).empty()) throw ConfigError("prompt file " + path.string() + " is empty");
            lib.texts_[static_cast<std::size_t>(id)] = ss.str();
        }
        return lib;
    }

    const std::string& system_text(TemplateId id) const { return texts_[static_cast<std::size_t>(id)]; }

private:
    std::array<std::string, kAllTemplates.size()> texts_;
};

/// One provider request. `payload` carries the structured content; the
/// rendered user message is derived from it by `user_text()`.
struct PromptSpec {
    TemplateId template_id = TemplateId::trav_select;
    Schema expected_schema = Schema::best_labels;
    std::string system_text;
    ordered_json payload = ordered_json::object();
    std::string retry_note;

    void validate() const {
        if (text::trim(system_text).empty()) throw ConfigError("prompt system text is empty");
        if (expected_schema != schema_for(template_id)) throw ConfigError("prompt schema does not match template");
    }

    std::string user_text() const;
};

struct PromptOptions {
    bool include_descriptions = true;
    std::size_t description_word_limit = 0; // 0 keeps descriptions whole
};

inline ordered_json document_payload(const Document& doc) {
    ordered_json j;
    j["title"] = doc.title;
    j["keywords"] = doc.keywords;
    j["abstract"] = doc.abstract;
    return j;
}

inline ordered_json label_payload(const TaxonomyNode& node, const PromptOptions& opts) {
    ordered_json j;
    j["id"] = node.id;
    j["name"] = node.name;
    if (opts.include_descriptions && node.has_description()) {
        j["description"] = opts.description_word_limit ? text::truncate_words(*node.description, opts.description_word_limit)
                                                       : *node.description;
    }
    return j;
}

namespace detail {

inline std::string replace_placeholders(std::string_view tmpl, const std::string& value) {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl.compare(i, 2, "{}") == 0) {
            out += value;
            i += 2;
        } else {
            out.push_back(tmpl[i++]);
        }
    }
    return out;
}

inline std::string str(const ordered_json& j, const char* key) {
    auto it = j.find(key);
    return it != j.end() && it->is_string() ? it->get<std::string>() : std::string();
}

inline std::string label_line(const ordered_json& label) {
    std::string line = str(label, "id") + " | " + str(label, "name");
    if (label.contains("description")) line += " | " + str(label, "description");
    return line;
}

inline std::string format_hint(Schema s, std::size_t count) {
    switch (s) {
        case Schema::description: return R"(Respond with JSON only: {"description": "<text>"})";
        case Schema::best_labels: return R"(Respond with JSON only: {"best_labels": ["<label id>", ...]})";
        case Schema::scores: return R"(Respond with JSON only: {"scores": [["<label id>", <score>], ...]})";
        case Schema::leaf_verdict: return R"(Respond with JSON only: {"main_focus": "<text>", "label_fit": <true or false>})";
        case Schema::parent_verdict:
            return R"(Respond with JSON only: {"main_focus": "<text>", "label_fit": <true or false>, "relevancy_score": <0 to 1>})";
        case Schema::top_labels:
            return "Respond with JSON only: {\"top_labels\": [...]} listing exactly " + std::to_string(count) +
                   " label IDs.";
    }
    return {};
}

} // namespace detail

inline std::string PromptSpec::user_text() const {
    std::ostringstream out;
    if (payload.contains("document")) {
        const auto& d = payload["document"];
        std::vector<std::string> kws;
        for (const auto& k : d["keywords"]) kws.push_back(k.get<std::string>());
        out << "Title: " << detail::str(d, "title") << "\n";
        out << "Keywords: " << text::join(kws, ", ") << "\n";
        out << "Abstract: " << detail::str(d, "abstract") << "\n";
    }
    std::size_t count = 0;
    switch (template_id) {
        case TemplateId::desc_gen: {
            const auto& label = payload["label"];
            out << "Label Name: " << detail::str(label, "name") << "\n";
            if (payload.contains("parent")) {
                const auto& p = payload["parent"];
                out << "Parent Name: " << detail::str(p, "name") << "\n";
                if (p.contains("description")) out << "Parent Description: " << detail::str(p, "description") << "\n";
            }
            if (payload.contains("exemplar")) {
                const auto& e = payload["exemplar"];
                out << "\nExample\nLabel Name: " << detail::str(e, "name") << "\n";
                if (e.contains("parent_name")) out << "Parent Name: " << detail::str(e, "parent_name") << "\n";
                out << "Description: " << detail::str(e, "description") << "\n";
            }
            break;
        }
        case TemplateId::trav_select:
        case TemplateId::rerank:
            out << "\nLabels:\n";
            for (const auto& l : payload["labels"]) out << detail::label_line(l) << "\n";
            break;
        case TemplateId::decrease_labels:
            count = payload.value("select_count", std::size_t{5});
            out << "\nLabels:\n";
            for (const auto& l : payload["labels"]) {
                out << detail::label_line(l);
                if (l.contains("parent")) out << " | parent: " << detail::str(l["parent"], "name");
                out << "\n";
            }
            break;
        case TemplateId::select_one_pass:
            out << "\nTaxonomy:\n";
            for (const auto& l : payload["labels"]) {
                auto depth = l.value("depth", std::size_t{1});
                out << std::string(2 * (depth - 1), ' ') << detail::label_line(l) << "\n";
            }
            break;
        case TemplateId::selectp_leaf: {
            const auto& l = payload["label"];
            out << "\nLabel ID: " << detail::str(l, "id") << "\nLabel Name: " << detail::str(l, "name") << "\n";
            if (l.contains("description")) out << "Label Description: " << detail::str(l, "description") << "\n";
            break;
        }
        case TemplateId::selectp_parent: {
            const auto& l = payload["label"];
            out << "\nLabel Name: " << detail::str(l, "name") << "\n";
            if (l.contains("description")) out << "Label Description: " << detail::str(l, "description") << "\n";
            break;
        }
    }
    out << "\n" << detail::format_hint(expected_schema, count);
    if (!retry_note.empty()) out << "\n\n" << retry_note;
    return out.str();
}

// ---------------------------------------------------------------------------
// Builders, one per template.

inline PromptSpec make_spec(const PromptLibrary& lib, TemplateId id, ordered_json payload) {
    PromptSpec spec;
    spec.template_id = id;
    spec.expected_schema = schema_for(id);
    spec.system_text = lib.system_text(id);
    spec.payload = std::move(payload);
    return spec;
}

inline PromptSpec make_trav_select_prompt(const PromptLibrary& lib, const Document& doc, ordered_json labels) {
    ordered_json p;
    p["document"] = document_payload(doc);
    p["labels"] = std::move(labels);
    return make_spec(lib, TemplateId::trav_select, std::move(p));
}

/// `labels` entries carry "depth" and "leaf" for tree rendering.
inline PromptSpec make_select_one_pass_prompt(const PromptLibrary& lib, const Document& doc, ordered_json labels) {
    ordered_json p;
    p["document"] = document_payload(doc);
    p["labels"] = std::move(labels);
    return make_spec(lib, TemplateId::select_one_pass, std::move(p));
}

inline PromptSpec make_rerank_prompt(const PromptLibrary& lib, const Document& doc, ordered_json labels) {
    auto count = std::to_string(labels.size());
    ordered_json p;
    p["document"] = document_payload(doc);
    p["labels"] = std::move(labels);
    auto spec = make_spec(lib, TemplateId::rerank, std::move(p));
    spec.system_text = detail::replace_placeholders(spec.system_text, count);
    return spec;
}

inline PromptSpec make_leaf_prompt(const PromptLibrary& lib, const Document& doc, ordered_json label) {
    ordered_json p;
    p["document"] = document_payload(doc);
    p["label"] = std::move(label);
    return make_spec(lib, TemplateId::selectp_leaf, std::move(p));
}

inline PromptSpec make_parent_prompt(const PromptLibrary& lib, const Document& doc, ordered_json label) {
    label.erase("id"); // the parent prompt shows name and description only
    ordered_json p;
    p["document"] = document_payload(doc);
    p["label"] = std::move(label);
    return make_spec(lib, TemplateId::selectp_parent, std::move(p));
}

/// `labels` entries may carry a "parent" object with the parent's name/description.
inline PromptSpec make_decrease_prompt(const PromptLibrary& lib, const Document& doc, ordered_json labels,
                                       std::size_t select_count) {
    ordered_json p;
    p["document"] = document_payload(doc);
    p["labels"] = std::move(labels);
    p["select_count"] = select_count;
    return make_spec(lib, TemplateId::decrease_labels, std::move(p));
}

inline PromptSpec make_description_prompt(const PromptLibrary& lib, ordered_json label, ordered_json parent,
                                          ordered_json exemplar) {
    ordered_json p;
    p["label"] = std::move(label);
    if (!parent.is_null()) p["parent"] = std::move(parent);
    if (!exemplar.is_null()) p["exemplar"] = std::move(exemplar);
    return make_spec(lib, TemplateId::desc_gen, std::move(p));
}

} // namespace taxoclass
