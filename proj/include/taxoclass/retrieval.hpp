#pragma once

#include <algorithm>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "taxoclass/document.hpp"
#include "taxoclass/embedding.hpp"
#include "taxoclass/errors.hpp"
#include "taxoclass/taxonomy.hpp"

namespace taxoclass {

/// "name: description", or just the name when there is no description.
inline std::string node_text(const TaxonomyNode& node, bool include_description = true) {
    if (include_description && node.has_description()) return node.name + ": " + *node.description;
    return node.name;
}

/// Embeds every leaf that the store does not already hold for this taxonomy
/// version and embedder. Returns the number of newly embedded nodes.
inline std::size_t index_leaves(EmbeddingStore& store, const Taxonomy& taxonomy, const Embedder& embedder,
                                std::size_t batch_size = 64) {
    std::vector<std::string> ids;
    for (auto i : taxonomy.leaves()) ids.push_back(taxonomy.node(i).id);
    auto found = store.get_all(taxonomy.version_tag(), embedder.model_tag(), ids);
    std::vector<Taxonomy::Index> todo;
    for (std::size_t j = 0; j < ids.size(); ++j)
        if (!found[j]) todo.push_back(taxonomy.leaves()[j]);
    for (std::size_t start = 0; start < todo.size(); start += batch_size) {
        auto end = std::min(todo.size(), start + batch_size);
        std::vector<std::string> texts;
        for (auto j = start; j < end; ++j) texts.push_back(node_text(taxonomy.node(todo[j])));
        auto vecs = embedder.embed(texts);
        if (vecs.size() != texts.size()) throw ContentError("embedder returned the wrong number of vectors");
        std::vector<std::pair<std::string, EmbeddingVector>> batch;
        for (auto j = start; j < end; ++j) batch.emplace_back(taxonomy.node(todo[j]).id, std::move(vecs[j - start]));
        store.put_batch(taxonomy.version_tag(), std::move(batch));
    }
    return todo.size();
}

struct RankedLeaf {
    std::string leaf_id;
    double similarity = 0.0;

    bool operator==(const RankedLeaf&) const = default;
};

/// All leaves ordered by similarity descending, ties by ascending id.
struct LeafRanking {
    std::string doc_id;
    std::vector<RankedLeaf> entries;
};

inline void sort_ranking(std::vector<RankedLeaf>& entries) {
    std::sort(entries.begin(), entries.end(), [](const RankedLeaf& a, const RankedLeaf& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.leaf_id < b.leaf_id;
    });
}

inline LeafRanking rank_leaves(const std::string& doc_id, const EmbeddingVector& doc_vector, const Taxonomy& taxonomy,
                               const EmbeddingStore& store) {
    auto unit = unit_normalized(doc_vector);
    std::vector<std::string> ids;
    ids.reserve(taxonomy.leaves().size());
    for (auto i : taxonomy.leaves()) ids.push_back(taxonomy.node(i).id);
    auto vecs = store.get_all(taxonomy.version_tag(), unit.model_tag, ids);

    std::vector<std::string> missing;
    for (std::size_t j = 0; j < ids.size(); ++j)
        if (!vecs[j]) missing.push_back(ids[j]);
    if (!missing.empty()) throw IndexIncompleteError(std::move(missing));

    LeafRanking ranking{doc_id, {}};
    ranking.entries.reserve(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j) {
        if (vecs[j]->size() != unit.values.size())
            throw DomainError("dimension mismatch for leaf '" + ids[j] + "'");
        double sim = std::clamp(dot(unit.values, *vecs[j]), -1.0, 1.0);
        ranking.entries.push_back({std::move(ids[j]), sim});
    }
    sort_ranking(ranking.entries);
    return ranking;
}

inline LeafRanking rank_leaves(const Document& doc, const Taxonomy& taxonomy, const EmbeddingStore& store,
                               const Embedder& embedder) {
    return rank_leaves(doc.doc_id, embedder.embed_one(document_text(doc)), taxonomy, store);
}

/// Ancestor-closed subtree induced by the top-k ranked leaves.
struct PrunedTaxonomy {
    std::string doc_id;
    std::set<std::string> node_ids;
    std::vector<std::string> leaf_ids; // ranking order
    std::size_t k = 0;

    bool contains(const std::string& id) const { return node_ids.count(id) != 0; }
    bool has_leaf(const std::string& id) const {
        return std::find(leaf_ids.begin(), leaf_ids.end(), id) != leaf_ids.end();
    }
};

inline PrunedTaxonomy build_pruned_taxonomy(const Taxonomy& taxonomy, const LeafRanking& ranking, std::size_t k) {
    if (k < 1) throw ValidationError("top-k must be at least 1");
    PrunedTaxonomy pt;
    pt.doc_id = ranking.doc_id;
    pt.k = k;
    std::set<std::string> seen;
    for (const auto& entry : ranking.entries) {
        if (pt.leaf_ids.size() == k) break;
        auto idx = taxonomy.index_of(entry.leaf_id);
        if (!taxonomy.is_leaf(idx)) throw ValidationError("ranking entry '" + entry.leaf_id + "' is not a leaf");
        if (!seen.insert(entry.leaf_id).second)
            throw ValidationError("ranking lists '" + entry.leaf_id + "' twice");
        pt.leaf_ids.push_back(entry.leaf_id);
        for (auto a : taxonomy.path_to_root(idx)) {
            if (!pt.node_ids.insert(taxonomy.node(a).id).second) break; // rest of the chain is already present
        }
    }
    return pt;
}

// ---------------------------------------------------------------------------

using GoldLabels = std::map<std::string, std::set<std::string>>;

/// One JSON object per document: {doc_id, gold: [leaf ids]}.
inline GoldLabels load_gold(std::istream& in) {
    GoldLabels gold;
    for_each_json_line(in, [&](const json& obj, std::size_t line) {
        auto doc_id = required_string(obj, "doc_id", line);
        auto it = obj.find("gold");
        if (it == obj.end() || !it->is_array()) throw ParseError("field 'gold' must be an array", line);
        std::set<std::string> labels;
        for (const auto& g : *it) {
            if (!g.is_string()) throw ParseError("gold labels must be strings", line);
            labels.insert(g.get<std::string>());
        }
        if (labels.empty()) throw ParseError("document '" + doc_id + "' has no gold labels", line);
        if (!gold.emplace(doc_id, std::move(labels)).second)
            throw ParseError("duplicate gold entry for '" + doc_id + "'", line);
    });
    return gold;
}

struct RecallRow {
    std::size_t depth = 0;
    double all_gold_rate = 0.0; // every gold label within the top `depth`
    double any_gold_rate = 0.0; // at least one gold label within the top `depth`
    std::size_t documents = 0;
};

inline std::vector<RecallRow> recall_at_k(std::span<const LeafRanking> rankings, const GoldLabels& gold,
                                          std::span<const std::size_t> depths) {
    std::vector<std::string> missing;
    for (const auto& r : rankings)
        if (!gold.count(r.doc_id)) missing.push_back(r.doc_id);
    if (!missing.empty()) throw ValidationError("no gold labels for: " + text::join(missing, ", "));

    constexpr auto absent = std::numeric_limits<std::size_t>::max();
    // Best and worst 1-based rank of each document's gold labels.
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& r : rankings) {
        const auto& g = gold.at(r.doc_id);
        std::size_t first = absent, last = 0, found = 0;
        for (std::size_t pos = 0; pos < r.entries.size(); ++pos) {
            if (g.count(r.entries[pos].leaf_id)) {
                first = std::min(first, pos + 1);
                last = pos + 1;
                ++found;
            }
        }
        spans.emplace_back(first, found == g.size() ? last : absent);
    }

    std::vector<RecallRow> rows;
    for (auto d : depths) {
        RecallRow row{d, 0.0, 0.0, rankings.size()};
        if (!rankings.empty()) {
            std::size_t all = 0, any = 0;
            for (auto [first, last] : spans) {
                any += first <= d;
                all += last <= d;
            }
            row.all_gold_rate = static_cast<double>(all) / static_cast<double>(rankings.size());
            row.any_gold_rate = static_cast<double>(any) / static_cast<double>(rankings.size());
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace taxoclass
