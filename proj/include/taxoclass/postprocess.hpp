#pragma once

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "taxoclass/document.hpp"
#include "taxoclass/errors.hpp"
#include "taxoclass/gateway.hpp"
#include "taxoclass/retrieval.hpp"
#include "taxoclass/strategies.hpp"
#include "taxoclass/taxonomy.hpp"

namespace taxoclass {

struct PostProcessConfig {
    std::size_t max_labels = 5;
    std::size_t sibling_cap = 3;
    std::map<Method, bool> apply_decrease{{Method::trav_select, true},
                                          {Method::select_one_pass, true},
                                          {Method::rerank, false},
                                          {Method::select_pointwise, true}};
    bool apply_sibling = true;
    bool random_decrease = false; // ablation: seeded random pick instead of the model call
    std::uint64_t seed = 0;

    void validate() const {
        if (max_labels < 1) throw ConfigError("max_labels must be >= 1");
        if (sibling_cap < 1) throw ConfigError("sibling_cap must be >= 1");
    }

    bool decrease_enabled(Method m) const {
        auto it = apply_decrease.find(m);
        return m != Method::rerank && it != apply_decrease.end() && it->second;
    }

    /// Keys: max_labels, sibling_cap, sibling (bool), decrease ({method: bool}).
    static PostProcessConfig from_json(const json& j) { return from_json(j, PostProcessConfig()); }
    static PostProcessConfig from_json(const json& j, PostProcessConfig base) {
        if (!j.is_object()) throw ConfigError("postprocess config must be a JSON object");
        try {
            for (auto it = j.begin(); it != j.end(); ++it) {
                const auto& k = it.key();
                if (k == "max_labels") base.max_labels = it->get<std::size_t>();
                else if (k == "sibling_cap") base.sibling_cap = it->get<std::size_t>();
                else if (k == "sibling") base.apply_sibling = it->get<bool>();
                else if (k == "decrease") {
                    if (!it->is_object()) throw ConfigError("'decrease' must map method names to booleans");
                    for (auto m = it->begin(); m != it->end(); ++m) base.apply_decrease[parse_method(m.key())] = m->get<bool>();
                } else {
                    throw ConfigError("unknown postprocess key '" + k + "'");
                }
            }
        } catch (const json::type_error&) {
            throw ConfigError("postprocess config has a value of the wrong type");
        }
        return base;
    }
};

/// Cuts an over-long label set down to `max_labels` with one model call over
/// the selected labels and their parents. Returned ids outside the input are
/// ignored; a short or failed reply is completed from the input order.
inline LabelSet decrease_labels(const Document& doc, LabelSet labels, const Taxonomy& taxonomy, const Gateway& gw,
                                std::size_t max_labels = 5) {
    if (labels.leaf_ids.size() <= max_labels || labels.method == Method::rerank) return labels;

    auto entries = ordered_json::array();
    PromptOptions opts{true, 60};
    for (const auto& id : labels.leaf_ids) {
        auto i = taxonomy.index_of(id);
        auto e = label_payload(taxonomy.node(i), opts);
        if (auto p = taxonomy.parent(i); p != Taxonomy::npos) {
            auto parent = label_payload(taxonomy.node(p), opts);
            parent.erase("id");
            e["parent"] = std::move(parent);
        }
        entries.push_back(std::move(e));
    }

    std::set<std::string> input(labels.leaf_ids.begin(), labels.leaf_ids.end());
    std::vector<std::string> kept;
    std::set<std::string> kept_set;
    ordered_json record;
    record["mode"] = "model";
    try {
        auto reply = gw.call_as<TopLabels>(make_decrease_prompt(gw.prompts(), doc, std::move(entries), max_labels),
                                           doc.doc_id);
        record["returned"] = detail::id_array(reply.ids);
        for (const auto& id : reply.ids) {
            if (!input.count(id)) {
                labels.add_flag(flags::unknown_ids_dropped);
                continue;
            }
            if (kept.size() < max_labels && kept_set.insert(id).second) kept.push_back(id);
        }
    } catch (const Error& e) {
        record["error"] = e.what();
        labels.add_flag(flags::decrease_fallback);
    }

    std::vector<std::string> filled;
    for (const auto& id : labels.leaf_ids) {
        if (kept.size() >= max_labels) break;
        if (kept_set.insert(id).second) {
            kept.push_back(id);
            filled.push_back(id);
        }
    }
    if (!filled.empty()) record["filled"] = detail::id_array(filled);
    labels.provenance["decrease"] = std::move(record);
    labels.leaf_ids = std::move(kept);
    return labels;
}

/// Ablation: uniform random choice of `max_labels` from the input, seeded per
/// document so runs are reproducible. Relative order is preserved.
inline LabelSet random_decrease(LabelSet labels, std::size_t max_labels, std::uint64_t seed) {
    if (labels.leaf_ids.size() <= max_labels) return labels;
    std::mt19937_64 rng(seed ^ text::fnv1a64(labels.doc_id));
    std::vector<std::string> picked;
    std::sample(labels.leaf_ids.begin(), labels.leaf_ids.end(), std::back_inserter(picked), max_labels, rng);
    ordered_json record;
    record["mode"] = "random";
    record["seed"] = seed;
    labels.provenance["decrease"] = std::move(record);
    labels.leaf_ids = std::move(picked);
    return labels;
}

/// Caps the number of selected leaves sharing a direct parent. Excess leaves
/// (the latest in preference order) are swapped for the best-ranked
/// candidates under other parents, or dropped when none are available.
inline LabelSet enforce_sibling_diversity(LabelSet labels, const Taxonomy& taxonomy,
                                          std::span<const std::string> candidates, std::size_t cap) {
    if (cap < 1) throw ConfigError("sibling_cap must be >= 1");
    std::map<Taxonomy::Index, std::size_t> count;
    std::set<Taxonomy::Index> over;
    std::vector<std::string> kept;
    std::vector<std::string> removed;
    for (const auto& id : labels.leaf_ids) {
        auto p = taxonomy.parent(taxonomy.index_of(id));
        if (p != Taxonomy::npos && count[p] >= cap) {
            over.insert(p);
            removed.push_back(id);
            continue;
        }
        if (p != Taxonomy::npos) ++count[p];
        kept.push_back(id);
    }
    if (removed.empty()) return labels;

    std::set<std::string> selected(labels.leaf_ids.begin(), labels.leaf_ids.end());
    std::vector<std::string> added;
    for (const auto& c : candidates) {
        if (added.size() == removed.size()) break;
        if (selected.count(c)) continue;
        auto ci = taxonomy.index_of(c);
        if (!taxonomy.is_leaf(ci)) continue;
        auto p = taxonomy.parent(ci);
        if (p != Taxonomy::npos && (over.count(p) || count[p] >= cap)) continue;
        if (p != Taxonomy::npos) ++count[p];
        selected.insert(c);
        added.push_back(c);
    }
    ordered_json record;
    record["removed"] = detail::id_array(removed);
    record["added"] = detail::id_array(added);
    labels.provenance["sibling_diversity"] = std::move(record);
    kept.insert(kept.end(), added.begin(), added.end());
    labels.leaf_ids = std::move(kept);
    return labels;
}

inline LabelSet enforce_sibling_diversity(LabelSet labels, const Taxonomy& taxonomy, const PrunedTaxonomy& pt,
                                          std::size_t cap) {
    return enforce_sibling_diversity(std::move(labels), taxonomy, pt.leaf_ids, cap);
}

/// Full chain: decrease to max_labels (model, random ablation, or plain
/// truncation for methods that skip it), then sibling diversity. Empty input
/// is flagged for review.
inline LabelSet postprocess(const Document& doc, LabelSet labels, const Taxonomy& taxonomy,
                            std::span<const std::string> candidates, const Gateway& gw,
                            const PostProcessConfig& config) {
    config.validate();
    if (labels.leaf_ids.empty()) {
        labels.add_flag(flags::empty_result);
        labels.add_flag(flags::needs_review);
        return labels;
    }
    if (labels.leaf_ids.size() > config.max_labels) {
        if (!config.decrease_enabled(labels.method)) {
            labels.leaf_ids.resize(config.max_labels);
            labels.provenance["decrease"] = ordered_json{{"mode", "truncate"}};
        } else if (config.random_decrease) {
            labels = random_decrease(std::move(labels), config.max_labels, config.seed);
        } else {
            labels = decrease_labels(doc, std::move(labels), taxonomy, gw, config.max_labels);
        }
    }
    if (config.apply_sibling) labels = enforce_sibling_diversity(std::move(labels), taxonomy, candidates, config.sibling_cap);
    return labels;
}

} // namespace taxoclass
