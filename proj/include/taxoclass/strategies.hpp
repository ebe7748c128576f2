#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taxoclass/document.hpp"
#include "taxoclass/errors.hpp"
#include "taxoclass/gateway.hpp"
#include "taxoclass/parallel.hpp"
#include "taxoclass/prompts.hpp"
#include "taxoclass/retrieval.hpp"
#include "taxoclass/taxonomy.hpp"

namespace taxoclass {

enum class Method { trav_select, select_one_pass, rerank, select_pointwise };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::trav_select: return "trav_select";
        case Method::select_one_pass: return "select_one_pass";
        case Method::rerank: return "rerank";
        case Method::select_pointwise: return "select_pointwise";
    }
    return "unknown";
}

inline Method parse_method(std::string_view s) {
    if (s == "trav_select" || s == "trav-select" || s == "travselect") return Method::trav_select;
    if (s == "select_one_pass" || s == "select-one-pass" || s == "one-pass" || s == "selecto")
        return Method::select_one_pass;
    if (s == "rerank") return Method::rerank;
    if (s == "select_pointwise" || s == "select-pointwise" || s == "pointwise" || s == "selectp")
        return Method::select_pointwise;
    throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

namespace flags {
inline constexpr const char* empty_result = "empty_result";
inline constexpr const char* needs_review = "needs_review";
inline constexpr const char* unknown_ids_dropped = "unknown_ids_dropped";
inline constexpr const char* label_shortfall = "label_shortfall";
inline constexpr const char* decrease_fallback = "decrease_fallback";
} // namespace flags

/// Final or intermediate labels for one document. `leaf_ids` is in
/// preference order; post-processing relies on that order.
struct LabelSet {
    std::string doc_id;
    Method method = Method::select_pointwise;
    std::vector<std::string> leaf_ids;
    ordered_json provenance = ordered_json::object();
    std::vector<std::string> flags;

    void add_flag(std::string_view f) {
        if (std::find(flags.begin(), flags.end(), f) == flags.end()) flags.emplace_back(f);
    }
    bool has_flag(std::string_view f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

struct LabelRange {
    std::size_t min = 1;
    std::size_t max = 5;

    void validate() const {
        if (min < 1 || max < min) throw ConfigError("label range needs 1 <= min <= max");
    }
};

namespace detail {

inline ordered_json id_array(std::span<const std::string> ids) {
    auto a = ordered_json::array();
    for (const auto& id : ids) a.push_back(id);
    return a;
}

/// PT nodes in depth-first order, children in taxonomy order.
inline std::vector<Taxonomy::Index> pruned_preorder(const Taxonomy& taxonomy, const PrunedTaxonomy& pt) {
    std::vector<Taxonomy::Index> out;
    std::vector<Taxonomy::Index> stack;
    auto push_children = [&](std::span<const Taxonomy::Index> kids) {
        for (auto it = kids.rbegin(); it != kids.rend(); ++it)
            if (pt.contains(taxonomy.node(*it).id)) stack.push_back(*it);
    };
    push_children(taxonomy.top_level());
    while (!stack.empty()) {
        auto i = stack.back();
        stack.pop_back();
        out.push_back(i);
        push_children(taxonomy.children(i));
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Traverse-and-select: breadth-first descent driven by the model.

struct TravSelectOptions {
    PromptOptions prompt{true, 60};
    std::size_t per_round_cap = 0; // 0 = no cap
    std::size_t chunk_size = 0;    // 0 = whole frontier in one call
};

inline LabelSet classify_trav_select(const Document& doc, const Taxonomy& taxonomy, const Gateway& gw,
                                     const TravSelectOptions& opts = {}) {
    LabelSet out{doc.doc_id, Method::trav_select, {}, ordered_json::object(), {}};
    auto rounds = ordered_json::array();
    std::vector<std::string> dropped;
    std::vector<Taxonomy::Index> frontier(taxonomy.top_level().begin(), taxonomy.top_level().end());

    for (std::size_t round = 1; !frontier.empty(); ++round) {
        std::map<std::string, Taxonomy::Index> offered;
        for (auto i : frontier) offered.emplace(taxonomy.node(i).id, i);

        std::vector<Taxonomy::Index> chosen;
        std::set<Taxonomy::Index> chosen_set;
        std::size_t chunk = opts.chunk_size ? opts.chunk_size : frontier.size();
        for (std::size_t start = 0; start < frontier.size(); start += chunk) {
            auto labels = ordered_json::array();
            for (auto j = start; j < std::min(frontier.size(), start + chunk); ++j)
                labels.push_back(label_payload(taxonomy.node(frontier[j]), opts.prompt));
            auto reply = gw.call_as<BestLabels>(make_trav_select_prompt(gw.prompts(), doc, std::move(labels)), doc.doc_id);
            for (const auto& id : reply.ids) {
                auto it = offered.find(id);
                if (it == offered.end()) {
                    dropped.push_back(id);
                    continue;
                }
                if (chosen_set.insert(it->second).second) chosen.push_back(it->second);
            }
        }
        if (opts.per_round_cap && chosen.size() > opts.per_round_cap) chosen.resize(opts.per_round_cap);

        std::vector<Taxonomy::Index> next;
        std::vector<std::string> picked;
        for (auto i : chosen) {
            picked.push_back(taxonomy.node(i).id);
            if (taxonomy.is_leaf(i)) {
                out.leaf_ids.push_back(taxonomy.node(i).id);
            } else {
                auto kids = taxonomy.children(i);
                next.insert(next.end(), kids.begin(), kids.end());
            }
        }
        std::vector<std::string> presented;
        for (auto i : frontier) presented.push_back(taxonomy.node(i).id);
        ordered_json r;
        r["round"] = round;
        r["presented"] = presented.size();
        r["selected"] = detail::id_array(picked);
        rounds.push_back(std::move(r));
        frontier = std::move(next);
    }

    out.provenance["rounds"] = std::move(rounds);
    if (!dropped.empty()) {
        out.provenance["dropped_ids"] = detail::id_array(dropped);
        out.add_flag(flags::unknown_ids_dropped);
    }
    if (out.leaf_ids.empty()) out.add_flag(flags::empty_result);
    return out;
}

// ---------------------------------------------------------------------------
// One-pass selection over the rendered pruned taxonomy.

struct SelectOnePassOptions {
    PromptOptions prompt{true, 60};
};

inline ordered_json render_pruned_labels(const Taxonomy& taxonomy, const PrunedTaxonomy& pt, const PromptOptions& opts) {
    auto labels = ordered_json::array();
    for (auto i : detail::pruned_preorder(taxonomy, pt)) {
        auto l = label_payload(taxonomy.node(i), opts);
        l["depth"] = taxonomy.depth(i);
        l["leaf"] = taxonomy.is_leaf(i);
        labels.push_back(std::move(l));
    }
    return labels;
}

inline LabelSet classify_select_one_pass(const Document& doc, const Taxonomy& taxonomy, const PrunedTaxonomy& pt,
                                         const Gateway& gw, const SelectOnePassOptions& opts = {}) {
    LabelSet out{doc.doc_id, Method::select_one_pass, {}, ordered_json::object(), {}};
    auto spec = make_select_one_pass_prompt(gw.prompts(), doc, render_pruned_labels(taxonomy, pt, opts.prompt));
    auto reply = gw.call_as<BestLabels>(spec, doc.doc_id);
    std::vector<std::string> dropped;
    for (const auto& id : reply.ids) {
        if (pt.has_leaf(id)) out.leaf_ids.push_back(id);
        else dropped.push_back(id);
    }
    out.provenance["raw_ids"] = detail::id_array(reply.ids);
    if (!dropped.empty()) {
        out.provenance["dropped_ids"] = detail::id_array(dropped);
        out.add_flag(flags::unknown_ids_dropped);
    }
    if (out.leaf_ids.empty()) out.add_flag(flags::empty_result);
    return out;
}

// ---------------------------------------------------------------------------
// Rerank: model-assigned relevancy scores combined along the hierarchy.

enum class AggregationFunction { leaf_only, avg_direct_parent, avg_all_ancestors, harmonic_all_ancestors };

inline std::string_view to_string(AggregationFunction fn) {
    switch (fn) {
        case AggregationFunction::leaf_only: return "leaf_only";
        case AggregationFunction::avg_direct_parent: return "avg_direct_parent";
        case AggregationFunction::avg_all_ancestors: return "avg_all_ancestors";
        case AggregationFunction::harmonic_all_ancestors: return "harmonic_all_ancestors";
    }
    return "unknown";
}

inline AggregationFunction parse_aggregation(std::string_view s) {
    if (s == "leaf_only" || s == "leaf-only") return AggregationFunction::leaf_only;
    if (s == "avg_direct_parent" || s == "avg-parent" || s == "avg-direct-parent")
        return AggregationFunction::avg_direct_parent;
    if (s == "avg_all_ancestors" || s == "avg-ancestors" || s == "avg-all-ancestors")
        return AggregationFunction::avg_all_ancestors;
    if (s == "harmonic_all_ancestors" || s == "harmonic" || s == "harmonic-all-ancestors")
        return AggregationFunction::harmonic_all_ancestors;
    throw ConfigError("unknown aggregation function '" + std::string(s) + "'");
}

inline bool needs_deep_ancestors(AggregationFunction fn) {
    return fn == AggregationFunction::avg_all_ancestors || fn == AggregationFunction::harmonic_all_ancestors;
}

/// Combines a leaf's score with its ancestors' (ordered from the direct
/// parent upward).
inline double aggregate_score(double leaf_score, std::span<const double> ancestor_scores, AggregationFunction fn) {
    switch (fn) {
        case AggregationFunction::leaf_only: return leaf_score;
        case AggregationFunction::avg_direct_parent:
            return ancestor_scores.empty() ? leaf_score : (leaf_score + ancestor_scores.front()) / 2.0;
        case AggregationFunction::avg_all_ancestors: {
            double sum = leaf_score;
            for (double s : ancestor_scores) sum += s;
            return sum / static_cast<double>(ancestor_scores.size() + 1);
        }
        case AggregationFunction::harmonic_all_ancestors: {
            if (!(leaf_score > 0.0)) throw DomainError("harmonic mean needs positive scores");
            double inv = 1.0 / leaf_score;
            for (double s : ancestor_scores) {
                if (!(s > 0.0)) throw DomainError("harmonic mean needs positive scores");
                inv += 1.0 / s;
            }
            return static_cast<double>(ancestor_scores.size() + 1) / inv;
        }
    }
    throw DomainError("unknown aggregation function");
}

struct RerankOptions {
    AggregationFunction fn = AggregationFunction::leaf_only;
    std::size_t top_n = 5;
    PromptOptions prompt{true, 0};
};

namespace detail {

/// Scores `nodes` with rerank calls, reissuing while fewer than half came back.
inline std::map<std::string, double> score_nodes(const Document& doc, const Taxonomy& taxonomy,
                                                 std::span<const Taxonomy::Index> nodes, const Gateway& gw,
                                                 const PromptOptions& prompt, std::vector<std::string>& dropped) {
    std::map<std::string, double> scores;
    if (nodes.empty()) return scores;
    std::set<std::string> wanted;
    auto labels = ordered_json::array();
    for (auto i : nodes) {
        wanted.insert(taxonomy.node(i).id);
        labels.push_back(label_payload(taxonomy.node(i), prompt));
    }
    auto spec = make_rerank_prompt(gw.prompts(), doc, labels);
    const int attempts = gw.config().max_retries + 1;
    for (int a = 0; a < attempts && scores.size() * 2 < wanted.size(); ++a) {
        auto reply = gw.call_as<Scores>(spec, doc.doc_id);
        for (const auto& [id, score] : reply.pairs) {
            if (wanted.count(id)) scores.emplace(id, score);
            else dropped.push_back(id);
        }
    }
    if (scores.size() * 2 < wanted.size())
        throw ScoringIncompleteError("only " + std::to_string(scores.size()) + " of " +
                                     std::to_string(wanted.size()) + " labels were scored");
    return scores;
}

} // namespace detail

inline LabelSet classify_rerank(const Document& doc, const Taxonomy& taxonomy, const PrunedTaxonomy& pt,
                                const Gateway& gw, const RerankOptions& opts = {}) {
    if (opts.top_n < 1) throw ConfigError("top_n must be at least 1");
    LabelSet out{doc.doc_id, Method::rerank, {}, ordered_json::object(), {}};
    std::vector<std::string> dropped;

    // Leaves and their direct parents go in the first batch.
    std::vector<Taxonomy::Index> first;
    std::set<Taxonomy::Index> queued;
    for (const auto& id : pt.leaf_ids) {
        auto i = taxonomy.index_of(id);
        if (queued.insert(i).second) first.push_back(i);
        if (auto p = taxonomy.parent(i); p != Taxonomy::npos && queued.insert(p).second) first.push_back(p);
    }
    auto scores = detail::score_nodes(doc, taxonomy, first, gw, opts.prompt, dropped);

    // Deeper ancestors are scored in a follow-up batch, only when needed.
    if (needs_deep_ancestors(opts.fn)) {
        std::vector<Taxonomy::Index> deeper;
        for (const auto& id : pt.leaf_ids)
            for (auto a : taxonomy.ancestors(taxonomy.index_of(id)))
                if (queued.insert(a).second) deeper.push_back(a);
        auto more = detail::score_nodes(doc, taxonomy, deeper, gw, opts.prompt, dropped);
        scores.insert(more.begin(), more.end());
        out.provenance["follow_up_scored"] = deeper.size();
    }

    auto score_of = [&](Taxonomy::Index i) {
        auto it = scores.find(taxonomy.node(i).id);
        return it == scores.end() ? kScoreFloor : it->second;
    };

    std::vector<RankedLeaf> ranked;
    for (const auto& id : pt.leaf_ids) {
        auto i = taxonomy.index_of(id);
        std::vector<double> anc;
        for (auto a : taxonomy.ancestors(i)) anc.push_back(score_of(a));
        ranked.push_back({id, aggregate_score(score_of(i), anc, opts.fn)});
    }
    sort_ranking(ranked);

    ordered_json score_json = ordered_json::object();
    for (const auto& [id, s] : scores) score_json[id] = s;
    auto order = ordered_json::array();
    for (const auto& r : ranked) order.push_back({r.leaf_id, r.similarity});
    out.provenance["aggregation"] = to_string(opts.fn);
    out.provenance["scores"] = std::move(score_json);
    out.provenance["ranking"] = std::move(order);

    for (std::size_t k = 0; k < ranked.size() && k < opts.top_n; ++k) out.leaf_ids.push_back(ranked[k].leaf_id);
    if (!dropped.empty()) {
        out.provenance["dropped_ids"] = detail::id_array(dropped);
        out.add_flag(flags::unknown_ids_dropped);
    }
    if (out.leaf_ids.empty()) out.add_flag(flags::empty_result);
    return out;
}

// ---------------------------------------------------------------------------
// Pointwise selection: a yes/no call per leaf, gated on the parent's verdict.

struct LeafAssessment {
    std::string node_id;
    bool label_fit = false;
    std::string main_focus;
};

struct ParentAssessment {
    std::string node_id;
    bool label_fit = false;
    double relevancy_score = 0.0;
    std::string main_focus;
};

inline LeafAssessment assess_leaf(const Document& doc, const TaxonomyNode& node, const Gateway& gw,
                                  const PromptOptions& prompt = {}) {
    auto v = gw.call_as<LeafVerdict>(make_leaf_prompt(gw.prompts(), doc, label_payload(node, prompt)), doc.doc_id);
    return {node.id, v.label_fit, std::move(v.main_focus)};
}

inline ParentAssessment assess_parent(const Document& doc, const TaxonomyNode& node, const Gateway& gw,
                                      const PromptOptions& prompt = {}) {
    auto v = gw.call_as<ParentVerdict>(make_parent_prompt(gw.prompts(), doc, label_payload(node, prompt)), doc.doc_id);
    return {node.id, v.label_fit, v.relevancy_score, std::move(v.main_focus)};
}

/// Verdicts for one candidate leaf. `parent` is absent when the leaf was
/// rejected, has no parent, or contextualization is off.
struct PointwiseTrace {
    std::string leaf_id;
    std::size_t rank = 0; // position in the pruned taxonomy's leaf ranking
    LeafAssessment leaf;
    std::optional<ParentAssessment> parent;

    bool survives() const { return leaf.label_fit && (!parent || parent->label_fit); }
    bool rejected_at_parent() const { return leaf.label_fit && parent && !parent->label_fit; }
};

struct AdjustResult {
    std::vector<std::string> leaf_ids;
    std::vector<std::string> backfilled;
    bool shortfall = false;
    bool over_max = false; // left for the decrease step
};

/// Brings the surviving leaves into `range`. Too few: backfill first from
/// leaves rejected only by their parent (parent relevancy descending), then
/// from the remaining leaves in ranking order. Too many: returned as is and
/// flagged for the decrease step.
inline AdjustResult adjust_label_count(std::span<const PointwiseTrace> traces, LabelRange range) {
    range.validate();
    std::vector<const PointwiseTrace*> ordered;
    for (const auto& t : traces) ordered.push_back(&t);
    std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->rank < b->rank; });

    AdjustResult out;
    std::set<std::string> taken;
    for (auto* t : ordered) {
        if (t->survives() && taken.insert(t->leaf_id).second) out.leaf_ids.push_back(t->leaf_id);
    }
    if (out.leaf_ids.size() > range.max) out.over_max = true;
    if (out.leaf_ids.size() >= range.min) return out;

    std::vector<const PointwiseTrace*> parent_rejected;
    for (auto* t : ordered)
        if (t->rejected_at_parent()) parent_rejected.push_back(t);
    std::stable_sort(parent_rejected.begin(), parent_rejected.end(), [](auto* a, auto* b) {
        return a->parent->relevancy_score > b->parent->relevancy_score;
    });
    auto take = [&](const PointwiseTrace* t) {
        if (out.leaf_ids.size() >= range.min || !taken.insert(t->leaf_id).second) return;
        out.leaf_ids.push_back(t->leaf_id);
        out.backfilled.push_back(t->leaf_id);
    };
    for (auto* t : parent_rejected) take(t);
    for (auto* t : ordered) take(t);
    out.shortfall = out.leaf_ids.size() < range.min;
    return out;
}

struct PointwiseOptions {
    LabelRange range{};
    bool contextualize = true;
    PromptOptions prompt{true, 0};
    std::size_t concurrency = 1;
};

inline LabelSet classify_select_pointwise(const Document& doc, const Taxonomy& taxonomy, const PrunedTaxonomy& pt,
                                          const Gateway& gw, const PointwiseOptions& opts = {}) {
    opts.range.validate();
    LabelSet out{doc.doc_id, Method::select_pointwise, {}, ordered_json::object(), {}};

    std::vector<PointwiseTrace> traces(pt.leaf_ids.size());
    parallel_for(traces.size(), opts.concurrency, [&](std::size_t k) {
        traces[k].leaf_id = pt.leaf_ids[k];
        traces[k].rank = k;
        traces[k].leaf = assess_leaf(doc, taxonomy.at(pt.leaf_ids[k]), gw, opts.prompt);
    });

    if (opts.contextualize) {
        // Each distinct parent of a fitting leaf is assessed once.
        std::vector<Taxonomy::Index> parents;
        std::set<Taxonomy::Index> seen;
        for (const auto& t : traces) {
            if (!t.leaf.label_fit) continue;
            auto p = taxonomy.parent(taxonomy.index_of(t.leaf_id));
            if (p != Taxonomy::npos && seen.insert(p).second) parents.push_back(p);
        }
        std::vector<ParentAssessment> verdicts(parents.size());
        parallel_for(parents.size(), opts.concurrency, [&](std::size_t k) {
            verdicts[k] = assess_parent(doc, taxonomy.node(parents[k]), gw, opts.prompt);
        });
        std::map<Taxonomy::Index, const ParentAssessment*> by_parent;
        for (std::size_t k = 0; k < parents.size(); ++k) by_parent[parents[k]] = &verdicts[k];
        for (auto& t : traces) {
            if (!t.leaf.label_fit) continue;
            auto p = taxonomy.parent(taxonomy.index_of(t.leaf_id));
            if (p != Taxonomy::npos) t.parent = *by_parent.at(p);
        }
    }

    auto adjusted = adjust_label_count(traces, opts.range);
    out.leaf_ids = adjusted.leaf_ids;

    auto verdicts = ordered_json::array();
    for (const auto& t : traces) {
        ordered_json v;
        v["id"] = t.leaf_id;
        v["label_fit"] = t.leaf.label_fit;
        v["main_focus"] = t.leaf.main_focus;
        if (t.parent) {
            ordered_json p;
            p["id"] = t.parent->node_id;
            p["label_fit"] = t.parent->label_fit;
            p["relevancy_score"] = t.parent->relevancy_score;
            v["parent"] = std::move(p);
        }
        verdicts.push_back(std::move(v));
    }
    out.provenance["verdicts"] = std::move(verdicts);
    out.provenance["contextualized"] = opts.contextualize;
    if (!adjusted.backfilled.empty()) out.provenance["backfilled"] = detail::id_array(adjusted.backfilled);
    if (adjusted.shortfall) out.add_flag(flags::label_shortfall);
    if (out.leaf_ids.empty()) out.add_flag(flags::empty_result);
    return out;
}

} // namespace taxoclass
