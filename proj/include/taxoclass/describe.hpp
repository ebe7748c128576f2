#pragma once

#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>

#include "taxoclass/gateway.hpp"
#include "taxoclass/prompts.hpp"
#include "taxoclass/taxonomy.hpp"

namespace taxoclass {

/// Builds the description-generation request for `node`: its name, the
/// parent's name and description when present, and an exemplar node with a
/// description as a one-shot sample.
inline PromptSpec make_description_request(const Taxonomy& taxonomy, std::string_view node_id,
                                           const PromptLibrary& prompts,
                                           std::optional<std::string_view> exemplar_id = std::nullopt) {
    auto idx = taxonomy.index_of(node_id);
    const auto& node = taxonomy.node(idx);
    ordered_json label;
    label["name"] = node.name;

    ordered_json parent;
    if (auto p = taxonomy.parent(idx); p != Taxonomy::npos) {
        parent["name"] = taxonomy.node(p).name;
        if (taxonomy.node(p).has_description()) parent["description"] = *taxonomy.node(p).description;
    }

    ordered_json exemplar;
    if (exemplar_id) {
        auto e = taxonomy.index_of(*exemplar_id);
        const auto& ex = taxonomy.node(e);
        if (!ex.has_description()) throw ValidationError("exemplar '" + ex.id + "' has no description");
        exemplar["name"] = ex.name;
        if (auto p = taxonomy.parent(e); p != Taxonomy::npos) exemplar["parent_name"] = taxonomy.node(p).name;
        exemplar["description"] = *ex.description;
    }
    return make_description_prompt(prompts, std::move(label), std::move(parent), std::move(exemplar));
}

/// Generates a description for a node that lacks one. Does not modify the
/// taxonomy; the caller decides whether to apply the text.
inline std::string generate_description(const Taxonomy& taxonomy, std::string_view node_id, const Gateway& gateway,
                                        std::optional<std::string_view> exemplar_id = std::nullopt) {
    if (taxonomy.at(node_id).has_description())
        throw ValidationError("node '" + std::string(node_id) + "' already has a description");
    auto spec = make_description_request(taxonomy, node_id, gateway.prompts(), exemplar_id);
    auto text = gateway.call_as<Description>(spec, node_id).text;
    if (text::trim(text).empty()) throw GenerationError("empty description for node '" + std::string(node_id) + "'");
    return text;
}

/// Described node whose depth is closest to `node_id`'s, ties by id. Used as
/// the one-shot exemplar.
inline std::optional<std::string> pick_exemplar(const Taxonomy& taxonomy, std::string_view node_id) {
    auto depth = taxonomy.depth(taxonomy.index_of(node_id));
    std::optional<std::string> best;
    std::size_t best_gap = 0;
    for (Taxonomy::Index i = 0; i < taxonomy.size(); ++i) {
        const auto& n = taxonomy.node(i);
        if (!n.has_description() || n.id == node_id) continue;
        auto d = taxonomy.depth(i);
        auto gap = d > depth ? d - depth : depth - d;
        if (!best || gap < best_gap || (gap == best_gap && n.id < *best)) {
            best = n.id;
            best_gap = gap;
        }
    }
    return best;
}

} // namespace taxoclass
