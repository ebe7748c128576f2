#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "taxoclass/json_lines.hpp"
#include "taxoclass/prompts.hpp"
#include "taxoclass/response.hpp"
#include "taxoclass/text.hpp"

namespace taxoclass {

inline constexpr double kDefaultMockThreshold = 0.30;

namespace mock_detail {

inline std::set<std::string> document_tokens(const ordered_json& payload) {
    std::string all;
    if (payload.contains("document")) {
        const auto& d = payload["document"];
        all += d.value("title", std::string()) + "\n";
        for (const auto& k : d["keywords"]) all += k.get<std::string>() + "\n";
        all += d.value("abstract", std::string());
    }
    return text::token_set(all);
}

inline std::set<std::string> label_tokens(const ordered_json& label) {
    std::string t = label.value("name", std::string());
    if (label.contains("description")) t += ": " + label["description"].get<std::string>();
    return text::token_set(t);
}

inline double clamped_score(double overlap) { return std::clamp(text::round2(overlap), kScoreFloor, kScoreCeil); }

} // namespace mock_detail

/// Token-level Jaccard overlap between the payload's document and one label.
inline double mock_overlap(const ordered_json& payload, const ordered_json& label) {
    return text::jaccard(mock_detail::document_tokens(payload), mock_detail::label_tokens(label));
}

/// Deterministic stand-in for a chat model. Every decision is a function of
/// the Jaccard overlap between document tokens and label tokens:
/// fit iff overlap >= threshold; scores are the overlap rounded to two
/// decimals and clamped to [0.01, 1.00].
inline std::string mock_complete(const PromptSpec& spec, double threshold = kDefaultMockThreshold) {
    const auto& p = spec.payload;
    auto doc = mock_detail::document_tokens(p);
    auto overlap = [&](const ordered_json& label) { return text::jaccard(doc, mock_detail::label_tokens(label)); };
    ordered_json out;

    switch (spec.template_id) {
        case TemplateId::desc_gen: {
            const auto& label = p["label"];
            std::string d = "Research on " + label.value("name", std::string());
            if (p.contains("parent")) d += " within " + p["parent"].value("name", std::string());
            out["description"] = d + ".";
            break;
        }
        case TemplateId::trav_select:
        case TemplateId::select_one_pass: {
            auto ids = ordered_json::array();
            for (const auto& l : p["labels"])
                if (overlap(l) >= threshold) ids.push_back(l["id"]);
            out["best_labels"] = ids;
            break;
        }
        case TemplateId::rerank: {
            auto scores = ordered_json::array();
            for (const auto& l : p["labels"]) scores.push_back({l["id"], mock_detail::clamped_score(overlap(l))});
            out["scores"] = scores;
            break;
        }
        case TemplateId::selectp_leaf: {
            out["main_focus"] = p["document"].value("title", std::string());
            out["label_fit"] = overlap(p["label"]) >= threshold;
            break;
        }
        case TemplateId::selectp_parent: {
            double o = overlap(p["label"]);
            out["main_focus"] = p["document"].value("title", std::string());
            out["label_fit"] = o >= threshold;
            out["relevancy_score"] = mock_detail::clamped_score(o);
            break;
        }
        case TemplateId::decrease_labels: {
            std::vector<std::pair<double, std::string>> ranked;
            for (const auto& l : p["labels"]) ranked.emplace_back(overlap(l), l["id"].get<std::string>());
            std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            auto n = std::min<std::size_t>(p.value("select_count", std::size_t{5}), ranked.size());
            auto ids = ordered_json::array();
            for (std::size_t i = 0; i < n; ++i) ids.push_back(ranked[i].second);
            out["top_labels"] = ids;
            break;
        }
    }
    return out.dump();
}

} // namespace taxoclass
