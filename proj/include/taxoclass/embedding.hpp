#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "taxoclass/errors.hpp"
#include "taxoclass/json_lines.hpp"
#include "taxoclass/text.hpp"

namespace taxoclass {

struct EmbeddingVector {
    std::vector<double> values;
    std::string model_tag;

    std::size_t dimension() const noexcept { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.model_tag != b.model_tag)
        throw DomainError("cannot compare embeddings from '" + a.model_tag + "' and '" + b.model_tag + "'");
    if (a.dimension() != b.dimension())
        throw DomainError("dimension mismatch: " + std::to_string(a.dimension()) + " vs " +
                          std::to_string(b.dimension()));
    double na = norm(a.values);
    double nb = norm(b.values);
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity of a zero-norm vector");
    return std::clamp(dot(a.values, b.values) / (na * nb), -1.0, 1.0);
}

/// Unit-length copy. Rejects non-finite entries and zero vectors.
inline EmbeddingVector unit_normalized(EmbeddingVector v) {
    for (double x : v.values)
        if (!std::isfinite(x)) throw ContentError("embedding contains a non-finite value");
    double n = norm(v.values);
    if (n == 0.0) throw ContentError("text produced a zero embedding");
    for (double& x : v.values) x /= n;
    return v;
}

/// Embedding backend. Implementations must be safe to call concurrently.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string model_tag() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const = 0;

    EmbeddingVector embed_one(const std::string& text) const {
        auto out = embed(std::span<const std::string>(&text, 1));
        return std::move(out.at(0));
    }
};

/// Deterministic offline embedder: signed feature hashing of word tokens into
/// a fixed number of buckets, unit-normalized.
class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(std::size_t dimension = 256) : dim_(dimension) {
        if (dim_ == 0) throw ConfigError("hash embedder dimension must be positive");
    }

    std::string model_tag() const override { return "hash-bow-" + std::to_string(dim_); }
    std::size_t dimension() const override { return dim_; }

    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) {
            EmbeddingVector v{std::vector<double>(dim_, 0.0), model_tag()};
            for (const auto& tok : text::tokenize(t)) {
                auto h = text::fnv1a64(tok);
                v.values[h % dim_] += (h >> 63) ? -1.0 : 1.0;
            }
            out.push_back(unit_normalized(std::move(v)));
        }
        return out;
    }

private:
    std::size_t dim_;
};

/// Unit-normalized node embeddings keyed by (taxonomy version, model tag, node id).
/// Concurrent reads; writes are exclusive batches.
class EmbeddingStore {
public:
    using Key = std::tuple<std::string, std::string, std::string>; // version, model, id
    using Values = std::shared_ptr<const std::vector<double>>;

    Values get(const std::string& version, const std::string& model, const std::string& id) const {
        std::shared_lock lock(mu_);
        auto it = entries_.find(Key{version, model, id});
        return it == entries_.end() ? nullptr : it->second;
    }

    /// Looks up every id; missing ones come back as nullptr.
    std::vector<Values> get_all(const std::string& version, const std::string& model,
                                std::span<const std::string> ids) const {
        std::shared_lock lock(mu_);
        std::vector<Values> out;
        out.reserve(ids.size());
        Key key{version, model, {}};
        for (const auto& id : ids) {
            std::get<2>(key) = id;
            auto it = entries_.find(key);
            out.push_back(it == entries_.end() ? nullptr : it->second);
        }
        return out;
    }

    void put_batch(const std::string& version, std::vector<std::pair<std::string, EmbeddingVector>> batch) {
        std::vector<std::pair<Key, Values>> prepared;
        prepared.reserve(batch.size());
        for (auto& [id, vec] : batch) {
            auto model = vec.model_tag;
            auto unit = unit_normalized(std::move(vec));
            prepared.emplace_back(Key{version, model, id},
                                  std::make_shared<const std::vector<double>>(std::move(unit.values)));
        }
        std::unique_lock lock(mu_);
        for (auto& [k, v] : prepared) entries_[k] = std::move(v);
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return entries_.size();
    }

    /// Cache file: one JSON object per line
    /// {"id", "model_tag", "version_tag", "vector": [...]}, sorted by key.
    void save(std::ostream& out) const {
        std::shared_lock lock(mu_);
        for (const auto& [key, values] : entries_) {
            ordered_json j;
            j["id"] = std::get<2>(key);
            j["model_tag"] = std::get<1>(key);
            j["version_tag"] = std::get<0>(key);
            j["vector"] = *values;
            out << j.dump() << '\n';
        }
    }

    void load(std::istream& in) {
        std::map<std::string, std::vector<std::pair<std::string, EmbeddingVector>>> by_version;
        for_each_json_line(in, [&](const json& obj, std::size_t line) {
            auto id = required_string(obj, "id", line);
            EmbeddingVector v;
            v.model_tag = required_string(obj, "model_tag", line);
            auto version = optional_string(obj, "version_tag", line).value_or("");
            auto it = obj.find("vector");
            if (it == obj.end() || !it->is_array() || it->empty())
                throw ParseError("field 'vector' must be a non-empty array", line);
            for (const auto& x : *it) {
                if (!x.is_number()) throw ParseError("vector entries must be numbers", line);
                v.values.push_back(x.get<double>());
            }
            by_version[version].emplace_back(std::move(id), std::move(v));
        });
        for (auto& [version, batch] : by_version) put_batch(version, std::move(batch));
    }

private:
    mutable std::shared_mutex mu_;
    std::map<Key, Values> entries_;
};

} // namespace taxoclass
