#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "taxoclass/document.hpp"
#include "taxoclass/embedding.hpp"
#include "taxoclass/gateway.hpp"
#include "taxoclass/postprocess.hpp"
#include "taxoclass/retrieval.hpp"
#include "taxoclass/strategies.hpp"
#include "taxoclass/taxonomy.hpp"

namespace taxoclass {

inline constexpr std::size_t kDefaultTopK = 40;
inline constexpr std::size_t kMinTopK = 10;
inline constexpr std::size_t kMaxTopK = 100;

struct ClassifierConfig {
    Method method = Method::select_pointwise;
    std::size_t top_k = kDefaultTopK;
    AggregationFunction aggregation = AggregationFunction::leaf_only;
    std::size_t top_n = 0; // rerank cut-off; 0 means post.max_labels
    LabelRange range{};
    PostProcessConfig post{};
    bool no_description = false; // ablation: prompts carry label names only
    bool no_context = false;     // ablation: skip parent assessment
    std::size_t description_word_limit = 60;
    std::size_t per_round_cap = 0;
    std::size_t inner_concurrency = 1;

    void validate() const {
        if (top_k < 1) throw ConfigError("top_k must be >= 1");
        range.validate();
        post.validate();
    }
};

/// Runs one strategy plus post-processing per document.
class Classifier {
public:
    Classifier(const Taxonomy& taxonomy, const Gateway& gateway, ClassifierConfig config,
               const EmbeddingStore* store = nullptr, const Embedder* embedder = nullptr)
        : taxonomy_(taxonomy), gateway_(gateway), config_(std::move(config)), store_(store), embedder_(embedder) {
        config_.validate();
        if (config_.method != Method::trav_select && (!store_ || !embedder_))
            throw ConfigError(std::string(to_string(config_.method)) + " needs an embedding store and embedder");
    }

    const ClassifierConfig& config() const noexcept { return config_; }

    LabelSet classify(const Document& doc) const {
        PromptOptions full{!config_.no_description, 0};
        PromptOptions truncated{!config_.no_description, config_.description_word_limit};

        LabelSet labels;
        std::vector<std::string> candidates;
        if (config_.method == Method::trav_select) {
            labels = classify_trav_select(doc, taxonomy_, gateway_, {truncated, config_.per_round_cap, 0});
        } else {
            auto ranking = rank_leaves(doc, taxonomy_, *store_, *embedder_);
            auto pt = build_pruned_taxonomy(taxonomy_, ranking, config_.top_k);
            candidates = pt.leaf_ids;
            switch (config_.method) {
                case Method::select_one_pass:
                    labels = classify_select_one_pass(doc, taxonomy_, pt, gateway_, {truncated});
                    break;
                case Method::rerank: {
                    auto top_n = config_.top_n ? config_.top_n : config_.post.max_labels;
                    labels = classify_rerank(doc, taxonomy_, pt, gateway_, {config_.aggregation, top_n, full});
                    candidates.clear();
                    for (const auto& r : labels.provenance["ranking"]) candidates.push_back(r[0].get<std::string>());
                    break;
                }
                default:
                    labels = classify_select_pointwise(
                        doc, taxonomy_, pt, gateway_,
                        {config_.range, !config_.no_context, full, config_.inner_concurrency});
                    break;
            }
            labels.provenance["top_k"] = config_.top_k;
        }
        for (const auto& w : length_warnings(doc)) labels.add_flag(w);
        labels = postprocess(doc, std::move(labels), taxonomy_, candidates, gateway_, config_.post);
        if (labels.leaf_ids.empty()) labels.add_flag(flags::needs_review);
        return labels;
    }

private:
    const Taxonomy& taxonomy_;
    const Gateway& gateway_;
    ClassifierConfig config_;
    const EmbeddingStore* store_;
    const Embedder* embedder_;
};

/// Output record with a fixed field order: doc_id, method, labels, provenance, flags.
inline ordered_json to_output_record(const LabelSet& labels) {
    ordered_json j;
    j["doc_id"] = labels.doc_id;
    j["method"] = to_string(labels.method);
    j["labels"] = labels.leaf_ids;
    j["provenance"] = labels.provenance;
    j["flags"] = labels.flags;
    return j;
}

inline ordered_json failure_record(const std::string& doc_id, Method method, const std::string& error) {
    ordered_json j;
    j["doc_id"] = doc_id;
    j["method"] = to_string(method);
    j["labels"] = ordered_json::array();
    j["provenance"] = ordered_json{{"error", error}};
    j["flags"] = ordered_json::array({"failed", flags::needs_review});
    return j;
}

struct BatchSummary {
    std::size_t total = 0;
    std::size_t failed = 0;
    std::size_t needs_review = 0;
};

/// Classifies documents on `parallelism` workers and writes one record per
/// document, in input order, as soon as each prefix is complete. A failing
/// document yields a failure record and does not stop the batch.
inline BatchSummary run_batch(std::span<const Document> docs, const std::function<LabelSet(const Document&)>& classify,
                              Method method, std::size_t parallelism, std::ostream& out) {
    if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
    BatchSummary summary;
    summary.total = docs.size();
    std::vector<std::optional<std::string>> slots(docs.size());
    std::vector<char> failed(docs.size(), 0), review(docs.size(), 0);
    std::mutex mu;
    std::condition_variable ready;
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (;;) {
            auto i = next.fetch_add(1);
            if (i >= docs.size()) return;
            std::string line;
            bool bad = false, flagged = false;
            try {
                auto labels = classify(docs[i]);
                flagged = labels.has_flag(flags::needs_review);
                line = to_output_record(labels).dump();
            } catch (const std::exception& e) {
                bad = true;
                flagged = true;
                line = failure_record(docs[i].doc_id, method, e.what()).dump();
            }
            {
                std::lock_guard lock(mu);
                slots[i] = std::move(line);
                failed[i] = bad;
                review[i] = flagged;
            }
            ready.notify_one();
        }
    };

    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(parallelism, docs.size()); ++w) pool.emplace_back(work);

    for (std::size_t i = 0; i < docs.size(); ++i) {
        std::string line;
        {
            std::unique_lock lock(mu);
            ready.wait(lock, [&] { return slots[i].has_value(); });
            line = std::move(*slots[i]);
            slots[i].reset();
            summary.failed += failed[i];
            summary.needs_review += review[i];
        }
        out << line << '\n';
    }
    out.flush();
    return summary;
}

} // namespace taxoclass
