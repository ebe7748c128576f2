#pragma once

// Shared generators and reference implementations for the test suites.
// The oracles here deliberately avoid the library's own helpers (tokenizer,
// Jaccard, sorting, traversal) so that agreement means something.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "taxoclass/taxoclass.hpp"

namespace fixtures {

using namespace taxoclass;
using Rng = std::mt19937_64;

inline std::size_t pick(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }
inline double unit(Rng& rng) { return static_cast<double>(rng() >> 11) / 9007199254740992.0; }

// ---------------------------------------------------------------------------
// Oracles (ASCII inputs only)

inline std::set<std::string> oracle_tokens(const std::string& s) {
    static const std::regex word("[a-z0-9]+");
    std::string lower(s.size(), ' ');
    std::transform(s.begin(), s.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    std::set<std::string> out;
    for (std::sregex_iterator it(lower.begin(), lower.end(), word), end; it != end; ++it) out.insert(it->str());
    return out;
}

inline double oracle_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::vector<std::string> inter, uni;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
    return uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline std::string oracle_doc_text(const Document& d) {
    std::string s = d.title;
    for (const auto& k : d.keywords) s += " " + k;
    return s + " " + d.abstract;
}

inline std::string oracle_label_text(const TaxonomyNode& n, bool with_description = true) {
    return with_description && n.description ? n.name + " " + *n.description : n.name;
}

inline double oracle_overlap(const Document& d, const TaxonomyNode& n, bool with_description = true) {
    return oracle_jaccard(oracle_tokens(oracle_doc_text(d)), oracle_tokens(oracle_label_text(n, with_description)));
}

inline double oracle_score(double overlap) {
    double r = std::floor(overlap * 100.0 + 0.5) / 100.0;
    return std::min(1.0, std::max(0.01, r));
}

// Parent lookup built straight from the node records.
struct OracleTree {
    std::map<std::string, TaxonomyNode> nodes;
    std::map<std::string, std::vector<std::string>> kids; // in record order
    std::vector<std::string> roots;

    explicit OracleTree(const std::vector<TaxonomyNode>& records) {
        for (const auto& n : records) nodes[n.id] = n;
        for (const auto& n : records) {
            if (n.parent_id) kids[*n.parent_id].push_back(n.id);
            else roots.push_back(n.id);
        }
    }
    bool leaf(const std::string& id) const { return !kids.count(id); }
    std::optional<std::string> parent(const std::string& id) const { return nodes.at(id).parent_id; }
    std::vector<std::string> ancestors(const std::string& id) const {
        std::vector<std::string> out;
        for (auto p = parent(id); p; p = parent(*p)) out.push_back(*p);
        return out;
    }
    std::size_t depth(const std::string& id) const { return ancestors(id).size() + 1; }
};

// ---------------------------------------------------------------------------
// Generators

inline std::string term(std::size_t i) { return "term" + std::to_string(i); }

/// Complete tree: `branching` children per node, `levels` levels. Each node
/// gets a two-word name of fresh terms and a description mixing two more
/// fresh terms with its parent's name.
inline std::vector<TaxonomyNode> balanced_records(std::size_t levels, std::size_t branching) {
    std::vector<TaxonomyNode> out;
    std::size_t next_term = 0;
    auto make = [&](const std::string& id, const TaxonomyNode* parent) {
        TaxonomyNode n;
        n.id = id;
        n.name = term(next_term) + " " + term(next_term + 1);
        std::string desc = term(next_term + 2) + " " + term(next_term + 3);
        if (parent) desc += " in " + parent->name;
        n.description = desc;
        next_term += 4;
        if (parent) n.parent_id = parent->id;
        return n;
    };
    for (std::size_t r = 0; r < branching; ++r) out.push_back(make("L1-" + std::to_string(r), nullptr));
    std::size_t begin = 0;
    for (std::size_t level = 2; level <= levels; ++level) {
        std::size_t end = out.size();
        for (std::size_t p = begin; p < end; ++p) {
            for (std::size_t c = 0; c < branching; ++c) {
                auto parent = out[p];
                out.push_back(make("L" + std::to_string(level) + "-" + std::to_string(out.size()), &parent));
            }
        }
        begin = end;
    }
    return out;
}

/// Document whose text borrows terms from one leaf's path plus noise terms,
/// so that mock overlaps with labels are spread around typical thresholds.
inline Document themed_document(const std::vector<TaxonomyNode>& records, const std::string& doc_id, Rng& rng,
                                std::size_t noise_terms = 4) {
    OracleTree tree(records);
    std::vector<std::string> leaves;
    for (const auto& n : records)
        if (tree.leaf(n.id)) leaves.push_back(n.id);
    auto target = leaves[pick(rng, leaves.size())];
    auto t_tokens = oracle_tokens(oracle_label_text(tree.nodes.at(target)));
    std::vector<std::string> pool(t_tokens.begin(), t_tokens.end());
    for (const auto& a : tree.ancestors(target)) {
        auto more = oracle_tokens(tree.nodes.at(a).name);
        pool.insert(pool.end(), more.begin(), more.end());
    }
    Document d;
    d.doc_id = doc_id;
    std::vector<std::string> title, abstract;
    for (const auto& w : pool)
        if (unit(rng) < 0.6) (unit(rng) < 0.5 ? title : abstract).push_back(w);
    if (title.empty()) title.push_back(pool[pick(rng, pool.size())]);
    for (std::size_t k = 0; k < noise_terms; ++k) abstract.push_back("noise" + std::to_string(pick(rng, 50)));
    if (unit(rng) < 0.5) d.keywords.push_back(pool[pick(rng, pool.size())]);
    d.title = text::join(title, " ");
    d.abstract = text::join(abstract, " ");
    return d;
}

/// Random forest with at most `max_nodes` nodes and depth at most `max_depth`.
inline std::vector<TaxonomyNode> random_forest(Rng& rng, std::size_t max_nodes, std::size_t max_depth) {
    std::size_t n = 1 + pick(rng, max_nodes);
    std::vector<TaxonomyNode> out;
    std::vector<std::size_t> depth;
    std::vector<std::size_t> can_parent; // nodes below max depth
    for (std::size_t i = 0; i < n; ++i) {
        TaxonomyNode node;
        node.id = "f" + std::to_string(i);
        node.name = "node " + std::to_string(i);
        std::size_t d = 1;
        if (!can_parent.empty() && unit(rng) < 0.9) {
            auto p = can_parent[pick(rng, can_parent.size())];
            node.parent_id = out[p].id;
            d = depth[p] + 1;
        }
        out.push_back(node);
        depth.push_back(d);
        if (d < max_depth) can_parent.push_back(i);
    }
    return out;
}

/// Random ranking over every leaf (scores drawn with deliberate ties).
inline LeafRanking random_ranking(const Taxonomy& t, Rng& rng, const std::string& doc_id = "doc") {
    LeafRanking r{doc_id, {}};
    for (auto i : t.leaves()) r.entries.push_back({t.node(i).id, static_cast<double>(pick(rng, 20)) / 20.0});
    sort_ranking(r.entries);
    return r;
}

/// Forest matching the published reference shape as closely as a forest
/// allows: 2778 leaves, 477 parents, one parent with 159 children, a depth-9
/// leaf and leaf depths summing to 12195 (mean 4.39). A chain P1..P8 carries
/// the deep leaf; 158, 158 and 153 extra parents hang under P2, P3 and P4.
inline std::vector<TaxonomyNode> reference_shaped_records() {
    std::vector<TaxonomyNode> out;
    auto add = [&](const std::string& id, std::optional<std::string> parent) {
        TaxonomyNode n;
        n.id = id;
        n.name = "Node " + id;
        n.parent_id = std::move(parent);
        out.push_back(std::move(n));
    };
    for (int i = 1; i <= 8; ++i) add("P" + std::to_string(i), i == 1 ? std::nullopt : std::optional("P" + std::to_string(i - 1)));
    add("deep-leaf", "P8");

    std::vector<std::string> at3, at4, at5;
    for (int i = 0; i < 158; ++i) at3.push_back("X3-" + std::to_string(i));
    for (int i = 0; i < 158; ++i) at4.push_back("X4-" + std::to_string(i));
    for (int i = 0; i < 153; ++i) at5.push_back("X5-" + std::to_string(i));
    for (const auto& id : at3) add(id, "P2");
    for (const auto& id : at4) add(id, "P3");
    for (const auto& id : at5) add(id, "P4");

    std::size_t leaf = 0;
    auto add_leaf = [&](const std::string& parent) { add("leaf-" + std::to_string(leaf++), parent); };
    for (const auto& id : at3) add_leaf(id);
    for (const auto& id : at4) add_leaf(id);
    for (const auto& id : at5) add_leaf(id);
    for (std::size_t i = 0; i < 1694; ++i) add_leaf(at3[i % at3.size()]);
    for (std::size_t i = 0; i < 614; ++i) add_leaf(at4[i % at4.size()]);
    return out;
}

// ---------------------------------------------------------------------------
// Reference mock rule chains

/// Leaves chosen by breadth-first descent where each presented node is taken
/// iff its overlap reaches the threshold. Descriptions are compared in full,
/// so keep generated descriptions under the prompt word limit.
inline std::vector<std::string> oracle_trav_select(const std::vector<TaxonomyNode>& records, const Document& d,
                                                   double threshold) {
    OracleTree tree(records);
    std::vector<std::string> out;
    std::vector<std::string> frontier = tree.roots;
    while (!frontier.empty()) {
        std::vector<std::string> next;
        for (const auto& id : frontier) {
            if (oracle_overlap(d, tree.nodes.at(id)) < threshold) continue;
            if (tree.leaf(id)) out.push_back(id);
            else for (const auto& k : tree.kids.at(id)) next.push_back(k);
        }
        frontier = next;
    }
    return out;
}

inline std::set<std::string> oracle_select_one_pass(const std::vector<TaxonomyNode>& records,
                                                    const std::vector<std::string>& pt_leaves, const Document& d,
                                                    double threshold) {
    OracleTree tree(records);
    std::set<std::string> out;
    for (const auto& id : pt_leaves)
        if (oracle_overlap(d, tree.nodes.at(id)) >= threshold) out.insert(id);
    return out;
}

/// Leaf fit, parent gate for leaves with a parent, then top-up to `min`
/// from parent-rejected leaves (best parent score first, ties by rank) and
/// then from the rest by rank.
inline std::vector<std::string> oracle_select_pointwise(const std::vector<TaxonomyNode>& records,
                                                        const std::vector<std::string>& pt_leaves, const Document& d,
                                                        double threshold, std::size_t min_labels,
                                                        bool contextualize = true) {
    OracleTree tree(records);
    std::vector<std::string> chosen;
    std::vector<std::tuple<double, std::size_t, std::string>> parent_rejected;
    for (std::size_t r = 0; r < pt_leaves.size(); ++r) {
        const auto& id = pt_leaves[r];
        if (oracle_overlap(d, tree.nodes.at(id)) < threshold) continue;
        auto p = tree.parent(id);
        if (!contextualize || !p) {
            chosen.push_back(id);
            continue;
        }
        double o = oracle_overlap(d, tree.nodes.at(*p));
        if (o >= threshold) chosen.push_back(id);
        else parent_rejected.emplace_back(-oracle_score(o), r, id);
    }
    std::sort(parent_rejected.begin(), parent_rejected.end());
    for (const auto& [neg, r, id] : parent_rejected)
        if (chosen.size() < min_labels) chosen.push_back(id);
    for (const auto& id : pt_leaves) {
        if (chosen.size() >= min_labels) break;
        if (std::find(chosen.begin(), chosen.end(), id) == chosen.end()) chosen.push_back(id);
    }
    return chosen;
}

// ---------------------------------------------------------------------------
// Misc

inline Gateway mock_gateway(double threshold = kDefaultMockThreshold, ProviderConfig config = {}) {
    return Gateway(std::make_shared<MockProvider>(threshold), config);
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("taxoclass-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string taxonomy_ndjson(const std::vector<TaxonomyNode>& records) {
    std::string out;
    for (const auto& n : records) out += node_to_json(n).dump() + "\n";
    return out;
}

inline std::string documents_ndjson(const std::vector<Document>& docs) {
    std::string out;
    for (const auto& d : docs) out += document_to_json(d).dump() + "\n";
    return out;
}

} // namespace fixtures
