#pragma once

#include <algorithm>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "taxoclass/errors.hpp"
#include "taxoclass/json_lines.hpp"
#include "taxoclass/text.hpp"

namespace taxoclass {

struct TaxonomyNode {
    std::string id;
    std::string name;
    std::optional<std::string> description;
    std::optional<std::string> parent_id;
    bool acronym_expanded = false;

    bool has_description() const { return description && !text::trim(*description).empty(); }
    bool operator==(const TaxonomyNode&) const = default;
};

struct IntegrityFinding {
    std::string kind; // empty_id, empty_name, duplicate_id, dangling_parent, cycle
    std::vector<std::string> ids;
    std::string message;
};

/// All structural problems in a node list; empty when the list forms a valid forest.
inline std::vector<IntegrityFinding> check_integrity(std::span<const TaxonomyNode> nodes) {
    std::vector<IntegrityFinding> findings;
    std::unordered_map<std::string_view, std::size_t> index;
    index.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (n.id.empty()) {
            findings.push_back({"empty_id", {}, "node #" + std::to_string(i + 1) + " has an empty id"});
            continue;
        }
        if (text::trim(n.name).empty())
            findings.push_back({"empty_name", {n.id}, "node '" + n.id + "' has an empty name"});
        if (!index.emplace(n.id, i).second)
            findings.push_back({"duplicate_id", {n.id}, "duplicate node id '" + n.id + "'"});
    }
    for (const auto& n : nodes) {
        if (n.parent_id && !index.count(*n.parent_id))
            findings.push_back({"dangling_parent",
                                {n.id, *n.parent_id},
                                "node '" + n.id + "' references missing parent '" + *n.parent_id + "'"});
    }

    // Walk parent chains; a chain that re-enters the in-progress set is a cycle.
    enum : unsigned char { unseen, active, done };
    std::vector<unsigned char> state(nodes.size(), unseen);
    auto parent_of = [&](std::size_t i) -> std::optional<std::size_t> {
        if (!nodes[i].parent_id) return std::nullopt;
        auto it = index.find(*nodes[i].parent_id);
        if (it == index.end()) return std::nullopt;
        return it->second;
    };
    std::vector<std::size_t> chain;
    for (std::size_t start = 0; start < nodes.size(); ++start) {
        if (state[start] != unseen || nodes[start].id.empty()) continue;
        chain.clear();
        std::optional<std::size_t> cur = start;
        while (cur && state[*cur] == unseen) {
            state[*cur] = active;
            chain.push_back(*cur);
            cur = parent_of(*cur);
        }
        if (cur && state[*cur] == active) {
            auto pos = std::find(chain.begin(), chain.end(), *cur);
            std::vector<std::string> ids;
            for (auto it = pos; it != chain.end(); ++it) ids.push_back(nodes[*it].id);
            findings.push_back({"cycle", ids, "cycle through " + text::join(ids, " -> ")});
        }
        for (auto i : chain) state[i] = done;
    }
    return findings;
}

inline ordered_json node_to_json(const TaxonomyNode& n) {
    ordered_json j;
    j["id"] = n.id;
    j["name"] = n.name;
    if (n.description) j["description"] = *n.description;
    if (n.parent_id) j["parent_id"] = *n.parent_id;
    if (n.acronym_expanded) j["acronym_expanded"] = true;
    return j;
}

/// Immutable label forest. Top-level nodes hang off an implicit virtual root
/// that is never stored; `top_level()` lists its children. Depth of a
/// top-level node is 1.
class Taxonomy {
public:
    using Index = std::size_t;
    static constexpr Index npos = std::numeric_limits<Index>::max();

    Taxonomy() = default;

    /// Validates and indexes `nodes`. An empty `version_tag` is replaced by a
    /// content hash. Throws IntegrityError listing every finding.
    static Taxonomy build(std::vector<TaxonomyNode> nodes, std::string version_tag = {}) {
        auto findings = check_integrity(nodes);
        if (!findings.empty()) {
            std::string msg = "taxonomy integrity check failed:";
            std::vector<std::string> ids;
            for (const auto& f : findings) {
                msg += "\n  " + f.kind + ": " + f.message;
                ids.insert(ids.end(), f.ids.begin(), f.ids.end());
            }
            throw IntegrityError(msg, std::move(ids));
        }
        Taxonomy t;
        t.nodes_ = std::move(nodes);
        t.index_structure();
        t.version_tag_ = version_tag.empty() ? t.content_hash() : std::move(version_tag);
        return t;
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    bool empty() const noexcept { return nodes_.empty(); }
    const std::vector<TaxonomyNode>& nodes() const noexcept { return nodes_; }
    const TaxonomyNode& node(Index i) const { return nodes_.at(i); }
    const std::string& version_tag() const noexcept { return version_tag_; }

    std::optional<Index> find(std::string_view id) const {
        auto it = by_id_.find(std::string(id));
        if (it == by_id_.end()) return std::nullopt;
        return it->second;
    }
    bool contains(std::string_view id) const { return find(id).has_value(); }
    Index index_of(std::string_view id) const {
        auto i = find(id);
        if (!i) throw ValidationError("unknown node id '" + std::string(id) + "'");
        return *i;
    }
    const TaxonomyNode& at(std::string_view id) const { return nodes_[index_of(id)]; }

    Index parent(Index i) const { return parent_.at(i); }
    std::span<const Index> children(Index i) const { return children_.at(i); }
    std::span<const Index> top_level() const noexcept { return top_level_; }
    std::span<const Index> leaves() const noexcept { return leaves_; }
    bool is_leaf(Index i) const { return children_.at(i).empty(); }
    bool is_leaf(std::string_view id) const { return is_leaf(index_of(id)); }
    std::size_t depth(Index i) const { return depth_.at(i); }
    std::size_t max_depth() const noexcept { return max_depth_; }

    /// Node, its parent, ..., up to a top-level node.
    std::vector<Index> path_to_root(Index i) const {
        std::vector<Index> path;
        path.reserve(depth_.at(i));
        for (Index cur = i; cur != npos; cur = parent_[cur]) path.push_back(cur);
        return path;
    }
    std::vector<Index> path_to_root(std::string_view id) const { return path_to_root(index_of(id)); }

    /// Ancestors ordered from direct parent upward.
    std::vector<Index> ancestors(Index i) const {
        auto p = path_to_root(i);
        p.erase(p.begin());
        return p;
    }

    bool operator==(const Taxonomy& o) const { return nodes_ == o.nodes_ && version_tag_ == o.version_tag_; }

private:
    void index_structure() {
        const auto n = nodes_.size();
        by_id_.reserve(n);
        for (Index i = 0; i < n; ++i) by_id_.emplace(nodes_[i].id, i);
        parent_.assign(n, npos);
        children_.assign(n, {});
        for (Index i = 0; i < n; ++i) {
            if (nodes_[i].parent_id) {
                parent_[i] = by_id_.at(*nodes_[i].parent_id);
                children_[parent_[i]].push_back(i);
            } else {
                top_level_.push_back(i);
            }
        }
        depth_.assign(n, 0);
        std::vector<Index> stack;
        for (Index i = 0; i < n; ++i) {
            Index cur = i;
            while (cur != npos && depth_[cur] == 0) {
                stack.push_back(cur);
                cur = parent_[cur];
            }
            std::size_t d = cur == npos ? 0 : depth_[cur];
            while (!stack.empty()) {
                depth_[stack.back()] = ++d;
                stack.pop_back();
            }
        }
        max_depth_ = 0;
        for (Index i = 0; i < n; ++i) {
            if (children_[i].empty()) leaves_.push_back(i);
            max_depth_ = std::max(max_depth_, depth_[i]);
        }
    }

    std::string content_hash() const {
        std::uint64_t h = text::fnv1a64("");
        for (const auto& n : nodes_) h = text::fnv1a64(node_to_json(n).dump() + "\n", h);
        return "fnv1a:" + text::hex64(h);
    }

    std::vector<TaxonomyNode> nodes_;
    std::unordered_map<std::string, Index> by_id_;
    std::vector<Index> parent_;
    std::vector<std::vector<Index>> children_;
    std::vector<Index> top_level_;
    std::vector<Index> leaves_;
    std::vector<std::size_t> depth_;
    std::size_t max_depth_ = 0;
    std::string version_tag_;
};

// ---------------------------------------------------------------------------
// File format: one JSON object per line with id, name, description?, parent_id?.

inline TaxonomyNode node_from_json(const json& obj, std::size_t line) {
    TaxonomyNode n;
    n.id = required_string(obj, "id", line);
    n.name = required_string(obj, "name", line);
    n.description = optional_string(obj, "description", line);
    n.parent_id = optional_string(obj, "parent_id", line);
    if (auto it = obj.find("acronym_expanded"); it != obj.end() && !it->is_null()) {
        if (!it->is_boolean()) throw ParseError("field 'acronym_expanded' must be a boolean", line);
        n.acronym_expanded = it->get<bool>();
    }
    return n;
}

/// Parses records without structural validation (see check_integrity).
inline std::vector<TaxonomyNode> read_taxonomy_records(std::istream& in) {
    std::vector<TaxonomyNode> nodes;
    for_each_json_line(in, [&](const json& obj, std::size_t line) { nodes.push_back(node_from_json(obj, line)); });
    return nodes;
}

inline Taxonomy load_taxonomy(std::istream& in, std::string version_tag = {}) {
    return Taxonomy::build(read_taxonomy_records(in), std::move(version_tag));
}

inline Taxonomy load_taxonomy_file(const std::string& path, std::string version_tag = {}) {
    auto in = open_input(path);
    return load_taxonomy(in, std::move(version_tag));
}

inline void write_taxonomy(std::ostream& out, const Taxonomy& taxonomy) {
    for (const auto& n : taxonomy.nodes()) out << node_to_json(n).dump() << '\n';
}

inline void write_taxonomy_file(const std::string& path, const Taxonomy& taxonomy) {
    auto out = open_output(path);
    write_taxonomy(out, taxonomy);
}

// ---------------------------------------------------------------------------

struct HierarchyStats {
    std::size_t node_count = 0;
    std::size_t leaf_count = 0;
    std::size_t parent_count = 0;
    std::size_t max_children = 0;
    std::size_t min_children = 0;
    double avg_children = 0.0; // over parents only
    std::size_t max_leaf_depth = 0;
    std::size_t min_leaf_depth = 0;
    double avg_leaf_depth = 0.0;
};

inline HierarchyStats hierarchy_stats(const Taxonomy& t) {
    HierarchyStats s;
    s.node_count = t.size();
    std::size_t child_total = 0;
    std::size_t depth_total = 0;
    s.min_children = std::numeric_limits<std::size_t>::max();
    s.min_leaf_depth = std::numeric_limits<std::size_t>::max();
    for (Taxonomy::Index i = 0; i < t.size(); ++i) {
        auto kids = t.children(i).size();
        if (kids == 0) {
            ++s.leaf_count;
            depth_total += t.depth(i);
            s.max_leaf_depth = std::max(s.max_leaf_depth, t.depth(i));
            s.min_leaf_depth = std::min(s.min_leaf_depth, t.depth(i));
        } else {
            ++s.parent_count;
            child_total += kids;
            s.max_children = std::max(s.max_children, kids);
            s.min_children = std::min(s.min_children, kids);
        }
    }
    if (s.parent_count == 0) s.min_children = 0;
    if (s.leaf_count == 0) s.min_leaf_depth = 0;
    if (s.parent_count) s.avg_children = static_cast<double>(child_total) / static_cast<double>(s.parent_count);
    if (s.leaf_count) s.avg_leaf_depth = static_cast<double>(depth_total) / static_cast<double>(s.leaf_count);
    return s;
}

// ---------------------------------------------------------------------------
// Acronym expansion

struct AcronymMap {
    std::map<std::string, std::string> entries;
};

/// Reads a JSON object of {acronym: expansion}.
inline AcronymMap load_acronym_map(std::istream& in) {
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("acronym map: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("acronym map must be a JSON object");
    AcronymMap map;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (text::trim(it.key()).empty()) throw ValidationError("acronym map has an empty key");
        if (!it->is_string() || text::trim(it->get<std::string>()).empty())
            throw ValidationError("acronym '" + it.key() + "' needs a non-empty string expansion");
        map.entries.emplace(it.key(), it->get<std::string>());
    }
    return map;
}

inline AcronymMap load_acronym_map_file(const std::string& path) {
    auto in = open_input(path);
    return load_acronym_map(in);
}

namespace detail {

// Replaces whole-token occurrences of map keys; longest key wins at a position.
inline std::string expand_tokens(std::string_view name, const AcronymMap& map) {
    std::string out;
    std::size_t i = 0;
    while (i < name.size()) {
        bool at_boundary = i == 0 || !text::is_token_char(name[i - 1]);
        const std::pair<const std::string, std::string>* best = nullptr;
        if (at_boundary) {
            for (const auto& entry : map.entries) {
                const auto& key = entry.first;
                if (name.substr(i, key.size()) != key) continue;
                auto end = i + key.size();
                if (end < name.size() && text::is_token_char(name[end])) continue;
                if (!best || key.size() > best->first.size()) best = &entry;
            }
        }
        if (best) {
            out += best->second;
            i += best->first.size();
        } else {
            out.push_back(name[i++]);
        }
    }
    return out;
}

} // namespace detail

/// New taxonomy with acronyms in node names expanded. Nodes already flagged
/// as expanded are left alone, which makes the operation idempotent.
inline Taxonomy expand_acronyms(const Taxonomy& t, const AcronymMap& map) {
    if (map.entries.empty()) return t;
    auto nodes = t.nodes();
    bool changed = false;
    for (auto& n : nodes) {
        if (n.acronym_expanded) continue;
        auto expanded = detail::expand_tokens(n.name, map);
        if (expanded != n.name) {
            n.name = std::move(expanded);
            n.acronym_expanded = true;
            changed = true;
        }
    }
    if (!changed) return t;
    return Taxonomy::build(std::move(nodes));
}

struct AcronymSuggestion {
    std::string node_id;
    std::string token;
    std::string ancestor_id;
    std::string expansion;
};

namespace detail {

inline std::string initialism(std::string_view name) {
    std::string out;
    for (auto w : text::split_words(name)) {
        char c = w.front();
        if (c >= 'A' && c <= 'Z') out.push_back(c);
    }
    return out;
}

inline bool anchored_subsequence(std::string_view token, std::string_view name) {
    if (token.empty() || name.empty()) return false;
    if (text::ascii_lower(token.front()) != text::ascii_lower(name.front())) return false;
    std::size_t j = 0;
    for (char c : name) {
        if (j < token.size() && text::ascii_lower(c) == text::ascii_lower(token[j])) ++j;
    }
    return j == token.size();
}

inline bool looks_like_acronym(std::string_view token) {
    std::size_t upper = 0;
    for (char c : token) upper += (c >= 'A' && c <= 'Z');
    return token.size() >= 2 && upper >= 2;
}

} // namespace detail

/// Flags capitalized tokens in node names that match an ancestor's name,
/// either as its initialism (FoodSciRN ~ Food Science Research Network) or as
/// a prefix-anchored abbreviation (OPER ~ Operations Research Network).
/// Suggestions are advisory; only a user-supplied map is ever applied.
inline std::vector<AcronymSuggestion> suggest_acronyms(const Taxonomy& t) {
    std::vector<AcronymSuggestion> out;
    for (Taxonomy::Index i = 0; i < t.size(); ++i) {
        const auto& n = t.node(i);
        std::string_view name = n.name;
        std::size_t pos = 0;
        while (pos < name.size()) {
            while (pos < name.size() && !text::is_token_char(name[pos])) ++pos;
            std::size_t start = pos;
            while (pos < name.size() && text::is_token_char(name[pos])) ++pos;
            auto token = name.substr(start, pos - start);
            if (!detail::looks_like_acronym(token)) continue;
            std::string upper;
            for (char c : token)
                if (c >= 'A' && c <= 'Z') upper.push_back(c);
            for (auto a : t.ancestors(i)) {
                std::string_view anc = text::trim(t.node(a).name);
                bool match = upper == detail::initialism(anc) ||
                             (token.size() >= 3 && detail::anchored_subsequence(token, anc));
                if (match) {
                    out.push_back({n.id, std::string(token), t.node(a).id, std::string(anc)});
                    break;
                }
            }
        }
    }
    return out;
}

} // namespace taxoclass
