#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "taxoclass/http.hpp"
#include "taxoclass/taxoclass.hpp"

namespace taxoclass::cli {
namespace {

namespace fs = std::filesystem;

std::string fixed2(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

bool same_file(const std::string& a, const std::string& b) {
    std::error_code ec;
    if (fs::exists(a, ec) && fs::exists(b, ec)) return fs::equivalent(a, b, ec);
    return fs::weakly_canonical(a, ec) == fs::weakly_canonical(b, ec);
}

void require_new_output(const std::string& input, const std::string& output) {
    if (same_file(input, output)) throw ConfigError("refusing to overwrite the input file " + input);
}

// Settings shared by commands that talk to a model or an embedder.
struct ServiceOptions {
    std::string config_path;
    std::string provider;
    bool mock = false;
    double mock_threshold = kDefaultMockThreshold;
    std::string audit_log;
    std::string embedder = "hash";
    std::size_t embed_dim = 256;
    std::string embed_cache;

    void attach(CLI::App& app, bool with_model, bool with_embedder) {
        app.add_option("--config", config_path, "JSON config with 'provider', 'postprocess' and 'embedder' sections")
            ->check(CLI::ExistingFile);
        if (with_model) {
            app.add_option("--provider", provider, "chat-completions endpoint URL, or mock:");
            app.add_flag("--mock", mock, "use the deterministic mock provider");
            app.add_option("--mock-threshold", mock_threshold, "mock fit threshold on token Jaccard")
                ->check(CLI::Range(0.0, 1.0));
            app.add_option("--audit-log", audit_log, "append provider attempts as NDJSON to this file");
        }
        if (with_embedder) {
            app.add_option("--embedder", embedder, "hash or http")->check(CLI::IsMember({"hash", "http"}));
            app.add_option("--embed-dim", embed_dim, "dimension of the hash embedder")->check(CLI::PositiveNumber);
            app.add_option("--embed-cache", embed_cache, "embedding cache file, read and updated");
        }
    }
};

struct Config {
    json file = json::object();

    static Config load(const std::string& path) {
        Config c;
        if (path.empty()) return c;
        c.file = read_json_file(path);
        if (!c.file.is_object()) throw ConfigError(path + ": config must be a JSON object");
        for (auto it = c.file.begin(); it != c.file.end(); ++it) {
            if (it.key() != "provider" && it.key() != "postprocess" && it.key() != "embedder")
                throw ConfigError(path + ": unknown section '" + it.key() + "'");
        }
        return c;
    }

    const json* section(const char* name) const {
        auto it = file.find(name);
        return it == file.end() ? nullptr : &*it;
    }
};

// Default < config file < environment < command line.
ProviderConfig provider_config(const ServiceOptions& opts, const Config& cfg) {
    ProviderConfig pc;
    if (auto* s = cfg.section("provider")) pc = ProviderConfig::from_json(*s, pc);
    pc.apply_environment();
    if (!opts.provider.empty()) pc.endpoint = opts.provider;
    if (opts.mock) pc.endpoint = "mock:";
    pc.validate();
    return pc;
}

struct Services {
    std::unique_ptr<std::ofstream> audit_file;
    std::shared_ptr<AuditLog> audit;
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<Embedder> embedder;
    EmbeddingStore store;
};

void open_gateway(Services& s, const ServiceOptions& opts, const Config& cfg) {
    auto pc = provider_config(opts, cfg);
    if (!opts.audit_log.empty()) {
        s.audit_file = std::make_unique<std::ofstream>(opts.audit_log, std::ios::binary | std::ios::app);
        if (!*s.audit_file) throw ConfigError("cannot write " + opts.audit_log);
        s.audit = std::make_shared<AuditLog>(*s.audit_file);
    }
    s.gateway = std::make_unique<Gateway>(make_provider(pc, opts.mock_threshold), pc, PromptLibrary::builtin(), s.audit);
}

void open_embedder(Services& s, const ServiceOptions& opts, const Config& cfg, const Taxonomy& taxonomy) {
    if (opts.embedder == "http") {
        EmbedderConfig ec;
        if (auto* e = cfg.section("embedder")) {
            try {
                for (auto it = e->begin(); it != e->end(); ++it) {
                    const auto& k = it.key();
                    if (k == "endpoint") ec.endpoint = it->get<std::string>();
                    else if (k == "model_name") ec.model_name = it->get<std::string>();
                    else if (k == "credentials_env") ec.credentials_env = it->get<std::string>();
                    else if (k == "timeout_ms") ec.timeout = std::chrono::milliseconds(it->get<long long>());
                    else if (k == "dimension") ec.dimension = it->get<std::size_t>();
                    else throw ConfigError("unknown embedder key '" + k + "'");
                }
            } catch (const json::type_error&) {
                throw ConfigError("embedder config has a value of the wrong type");
            }
        }
        if (ec.endpoint.empty()) throw ConfigError("--embedder http needs embedder.endpoint in the config file");
        s.embedder = std::make_unique<HttpEmbedder>(ec);
    } else {
        s.embedder = std::make_unique<HashEmbedder>(opts.embed_dim);
    }
    if (!opts.embed_cache.empty() && fs::exists(opts.embed_cache)) {
        auto in = open_input(opts.embed_cache);
        s.store.load(in);
    }
    auto added = index_leaves(s.store, taxonomy, *s.embedder);
    if (added && !opts.embed_cache.empty()) {
        auto tmp = opts.embed_cache + ".tmp";
        {
            auto out = open_output(tmp);
            s.store.save(out);
        }
        fs::rename(tmp, opts.embed_cache);
    }
}

// ---------------------------------------------------------------------------
// taxonomy

int cmd_validate(const std::string& path, std::ostream& out) {
    auto in = open_input(path);
    auto nodes = read_taxonomy_records(in);
    auto findings = check_integrity(nodes);
    for (const auto& f : findings) out << f.kind << ": " << text::join(f.ids, ", ") << " (" << f.message << ")\n";
    if (!findings.empty()) {
        out << findings.size() << " integrity finding(s)\n";
        return 1;
    }
    out << "ok: " << nodes.size() << " nodes\n";
    return 0;
}

void print_stats(const HierarchyStats& s, std::ostream& out) {
    out << "nodes: " << s.node_count << '\n'
        << "leaves: " << s.leaf_count << '\n'
        << "parents: " << s.parent_count << '\n'
        << "avg children: " << fixed2(s.avg_children) << '\n'
        << "max children: " << s.max_children << '\n'
        << "min children: " << s.min_children << '\n'
        << "avg leaf depth: " << fixed2(s.avg_leaf_depth) << '\n'
        << "max leaf depth: " << s.max_leaf_depth << '\n'
        << "min leaf depth: " << s.min_leaf_depth << '\n';
}

int cmd_expand(const std::string& path, const std::string& map_path, const std::string& out_path, bool suggest,
               std::ostream& out) {
    auto taxonomy = load_taxonomy_file(path);
    if (suggest) {
        for (const auto& s : suggest_acronyms(taxonomy))
            out << "suggest: " << s.node_id << ": " << s.token << " -> " << s.expansion << " (from " << s.ancestor_id
                << ")\n";
    }
    if (map_path.empty()) return 0;
    if (out_path.empty()) throw ConfigError("--out is required with --acronyms");
    require_new_output(path, out_path);
    auto expanded = expand_acronyms(taxonomy, load_acronym_map_file(map_path));
    std::size_t changed = 0;
    for (std::size_t i = 0; i < taxonomy.size(); ++i) changed += taxonomy.node(i).name != expanded.node(i).name;
    write_taxonomy_file(out_path, expanded);
    out << "expanded " << changed << " node name(s); wrote " << out_path << '\n';
    return 0;
}

int cmd_describe(const std::string& path, const std::string& out_path, const ServiceOptions& opts, std::ostream& out) {
    require_new_output(path, out_path);
    auto cfg = Config::load(opts.config_path);
    auto taxonomy = load_taxonomy_file(path);
    Services services;
    open_gateway(services, opts, cfg);

    // Top-down, so children see freshly written parent descriptions.
    std::size_t generated = 0;
    for (std::size_t depth = 1; depth <= taxonomy.max_depth(); ++depth) {
        auto nodes = taxonomy.nodes();
        bool changed = false;
        for (Taxonomy::Index i = 0; i < taxonomy.size(); ++i) {
            if (taxonomy.depth(i) != depth || taxonomy.node(i).has_description()) continue;
            const auto& id = taxonomy.node(i).id;
            auto exemplar = pick_exemplar(taxonomy, id);
            std::optional<std::string_view> ex;
            if (exemplar) ex = *exemplar;
            nodes[i].description = generate_description(taxonomy, id, *services.gateway, ex);
            ++generated;
            changed = true;
        }
        if (changed) taxonomy = Taxonomy::build(std::move(nodes));
    }
    write_taxonomy_file(out_path, taxonomy);
    out << "described " << generated << " node(s); wrote " << out_path << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyOptions {
    std::string taxonomy;
    std::string documents;
    std::string out;
    std::string strategy = "pointwise";
    std::size_t top_k = kDefaultTopK;
    std::string agg = "leaf-only";
    std::optional<std::size_t> max_labels;
    std::size_t min_labels = 1;
    std::optional<std::size_t> sibling_cap;
    std::vector<std::string> ablations;
    std::uint64_t seed = 0;
    std::size_t parallelism = 1;
    ServiceOptions services;
};

int cmd_classify(const ClassifyOptions& o, std::ostream& out, std::ostream& err) {
    require_new_output(o.documents, o.out);
    require_new_output(o.taxonomy, o.out);
    auto cfg = Config::load(o.services.config_path);

    ClassifierConfig cc;
    cc.method = parse_method(o.strategy);
    cc.top_k = o.top_k;
    cc.aggregation = parse_aggregation(o.agg);
    if (auto* p = cfg.section("postprocess")) cc.post = PostProcessConfig::from_json(*p, cc.post);
    if (o.max_labels) cc.post.max_labels = *o.max_labels;
    if (o.sibling_cap) cc.post.sibling_cap = *o.sibling_cap;
    cc.post.seed = o.seed;
    cc.range = {o.min_labels, cc.post.max_labels};
    for (const auto& a : o.ablations) {
        if (a == "no-decrease") cc.post.random_decrease = true;
        else if (a == "no-description") cc.no_description = true;
        else if (a == "no-context") cc.no_context = true;
    }
    cc.validate();

    auto taxonomy = load_taxonomy_file(o.taxonomy);
    auto docs = load_documents_file(o.documents);
    Services services;
    open_gateway(services, o.services, cfg);
    if (cc.method != Method::trav_select) open_embedder(services, o.services, cfg, taxonomy);

    Classifier classifier(taxonomy, *services.gateway, cc, &services.store, services.embedder.get());
    auto tmp = o.out + ".partial";
    BatchSummary summary;
    {
        auto file = open_output(tmp);
        summary = run_batch(
            docs, [&](const Document& d) { return classifier.classify(d); }, cc.method, o.parallelism, file);
    }
    fs::rename(tmp, o.out);
    err << "classified " << summary.total << " document(s): " << summary.failed << " failed, "
        << summary.needs_review << " flagged for review; " << services.gateway->calls() << " model call(s)\n";
    out << "wrote " << o.out << '\n';
    return summary.failed ? 1 : 0;
}

// ---------------------------------------------------------------------------
// evaluate / rank

int cmd_evaluate(const std::string& path, const std::vector<std::string>& baselines, const std::string& json_out,
                 std::ostream& out) {
    auto judgments = load_judgments_file(path);
    if (judgments.empty()) throw ValidationError(path + ": no judgments");
    auto reports = compute_metrics(judgments);
    for (const auto& b : baselines) {
        auto more = load_reports_file(b);
        reports.insert(reports.end(), more.begin(), more.end());
    }
    auto rows = compare_methods(std::move(reports));
    out << render_table(rows);
    if (!json_out.empty()) {
        auto f = open_output(json_out);
        f << comparison_to_json(rows).dump(2) << '\n';
    }
    return 0;
}

struct RankOptions {
    std::string documents;
    std::string taxonomy;
    std::string gold;
    std::vector<std::size_t> depths{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    std::string json_out;
    ServiceOptions services;
};

int cmd_rank(const RankOptions& o, std::ostream& out) {
    auto cfg = Config::load(o.services.config_path);
    auto taxonomy = load_taxonomy_file(o.taxonomy);
    auto docs = load_documents_file(o.documents);
    auto gold_in = open_input(o.gold);
    auto gold = load_gold(gold_in);
    Services services;
    open_embedder(services, o.services, cfg, taxonomy);

    std::vector<LeafRanking> rankings;
    for (const auto& d : docs) rankings.push_back(rank_leaves(d, taxonomy, services.store, *services.embedder));
    auto rows = recall_at_k(rankings, gold, o.depths);

    char buf[96];
    out << "depth  all_gold  any_gold  documents\n";
    auto arr = ordered_json::array();
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%5zu  %8.4f  %8.4f  %9zu\n", r.depth, r.all_gold_rate, r.any_gold_rate,
                      r.documents);
        out << buf;
        ordered_json j;
        j["depth"] = r.depth;
        j["all_gold_rate"] = r.all_gold_rate;
        j["any_gold_rate"] = r.any_gold_rate;
        j["documents"] = r.documents;
        arr.push_back(std::move(j));
    }
    if (!o.json_out.empty()) {
        auto f = open_output(o.json_out);
        f << ordered_json{{"rows", arr}}.dump(2) << '\n';
    }
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Zero-shot hierarchical multi-label classification of scientific documents", "taxoclass"};
    app.require_subcommand(1);

    // taxonomy
    auto* tax = app.add_subcommand("taxonomy", "inspect and enrich a taxonomy file");
    tax->require_subcommand(1);
    std::string tax_path, tax_out, acronyms;
    bool suggest = false;
    ServiceOptions describe_opts;

    auto* validate = tax->add_subcommand("validate", "report integrity findings");
    validate->add_option("taxonomy", tax_path)->required()->check(CLI::ExistingFile);
    auto* stats = tax->add_subcommand("stats", "print hierarchy statistics");
    stats->add_option("taxonomy", tax_path)->required()->check(CLI::ExistingFile);
    auto* expand = tax->add_subcommand("expand", "expand acronyms in node names into a new file");
    expand->add_option("taxonomy", tax_path)->required()->check(CLI::ExistingFile);
    expand->add_option("--acronyms", acronyms, "JSON object {acronym: expansion}")->check(CLI::ExistingFile);
    expand->add_option("--out", tax_out, "output taxonomy file");
    expand->add_flag("--suggest", suggest, "list candidate expansions found in ancestor names");
    auto* describe = tax->add_subcommand("describe", "generate missing descriptions into a new file");
    describe->add_option("taxonomy", tax_path)->required()->check(CLI::ExistingFile);
    describe->add_option("--out", tax_out, "output taxonomy file")->required();
    describe_opts.attach(*describe, true, false);

    // classify
    ClassifyOptions co;
    auto* classify = app.add_subcommand("classify", "assign leaf labels to documents");
    classify->add_option("--taxonomy", co.taxonomy)->required()->check(CLI::ExistingFile);
    classify->add_option("--documents", co.documents)->required()->check(CLI::ExistingFile);
    classify->add_option("--out", co.out, "output NDJSON, one record per document")->required();
    classify->add_option("--strategy", co.strategy, "pointwise, rerank, one-pass or trav-select")
        ->check([](const std::string& s) {
            try {
                parse_method(s);
                return std::string();
            } catch (const ConfigError& e) {
                return std::string(e.what());
            }
        });
    classify->add_option("--top-k", co.top_k, "leaves kept by retrieval")->check(CLI::Range(kMinTopK, kMaxTopK));
    classify->add_option("--agg", co.agg, "rerank aggregation: leaf-only, avg-parent, avg-ancestors, harmonic")
        ->check([](const std::string& s) {
            try {
                parse_aggregation(s);
                return std::string();
            } catch (const ConfigError& e) {
                return std::string(e.what());
            }
        });
    classify->add_option("--max-labels", co.max_labels)->check(CLI::PositiveNumber);
    classify->add_option("--min-labels", co.min_labels)->check(CLI::PositiveNumber);
    classify->add_option("--sibling-cap", co.sibling_cap)->check(CLI::PositiveNumber);
    classify->add_option("--ablation", co.ablations, "no-decrease, no-description or no-context")
        ->check(CLI::IsMember({"no-decrease", "no-description", "no-context"}));
    classify->add_option("--seed", co.seed, "seed for the random-decrease ablation");
    classify->add_option("--parallelism", co.parallelism, "documents in flight")->check(CLI::PositiveNumber);
    co.services.attach(*classify, true, true);

    // evaluate
    std::string judgments, json_out;
    std::vector<std::string> baselines;
    auto* evaluate = app.add_subcommand("evaluate", "accuracy and score distribution from SME judgments");
    evaluate->add_option("judgments", judgments)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--baseline", baselines, "report JSON to include as extra rows")->check(CLI::ExistingFile);
    evaluate->add_option("--json-out", json_out, "write the comparison as JSON");

    // rank
    RankOptions ro;
    auto* rank = app.add_subcommand("rank", "retrieval hit rates at several depths");
    rank->add_option("--documents", ro.documents)->required()->check(CLI::ExistingFile);
    rank->add_option("--taxonomy", ro.taxonomy)->required()->check(CLI::ExistingFile);
    rank->add_option("--gold", ro.gold, "NDJSON {doc_id, gold: [leaf ids]}")->required()->check(CLI::ExistingFile);
    rank->add_option("--depths", ro.depths)->delimiter(',')->check(CLI::PositiveNumber);
    rank->add_option("--json-out", ro.json_out);
    ro.services.attach(*rank, false, true);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        if (!reversed.empty()) reversed.pop_back();
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        if (*validate) return cmd_validate(tax_path, out);
        if (*stats) {
            print_stats(hierarchy_stats(load_taxonomy_file(tax_path)), out);
            return 0;
        }
        if (*expand) return cmd_expand(tax_path, acronyms, tax_out, suggest, out);
        if (*describe) return cmd_describe(tax_path, tax_out, describe_opts, out);
        if (*classify) return cmd_classify(co, out, err);
        if (*evaluate) return cmd_evaluate(judgments, baselines, json_out, out);
        if (*rank) return cmd_rank(ro, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace taxoclass::cli
