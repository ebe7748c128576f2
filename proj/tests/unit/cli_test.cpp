#include <gtest/gtest.h>

#include <sstream>

#include "../../tools/cli.hpp"
#include "support/fixtures.hpp"

using namespace taxoclass;
using fixtures::Rng;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "taxoclass");
    std::ostringstream out, err;
    int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<json> read_records(const std::string& path) {
    std::istringstream in(fixtures::read_file(path));
    std::vector<json> out;
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) out.push_back(json::parse(l));
    return out;
}

std::vector<Document> themed_docs(const std::vector<TaxonomyNode>& records, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Document> docs;
    for (std::size_t i = 0; i < n; ++i) docs.push_back(fixtures::themed_document(records, "doc-" + std::to_string(i), rng));
    return docs;
}

// Writes a balanced taxonomy and themed documents; returns {taxonomy, documents} paths.
std::pair<std::string, std::string> corpus(const fixtures::TempDir& dir, const std::vector<TaxonomyNode>& records,
                                           std::size_t docs, std::uint64_t seed = 1) {
    auto t = dir.file("taxonomy.ndjson"), d = dir.file("docs.ndjson");
    fixtures::write_file(t, fixtures::taxonomy_ndjson(records));
    fixtures::write_file(d, fixtures::documents_ndjson(themed_docs(records, docs, seed)));
    return {t, d};
}

} // namespace

TEST(CliTaxonomy, StatsOnReferenceShape) {
    fixtures::TempDir dir;
    auto path = dir.file("t.ndjson");
    fixtures::write_file(path, fixtures::taxonomy_ndjson(fixtures::reference_shaped_records()));
    auto r = run({"taxonomy", "stats", path});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("leaves: 2778\n"), std::string::npos);
    EXPECT_NE(r.out.find("parents: 477\n"), std::string::npos);
    EXPECT_NE(r.out.find("max children: 159\n"), std::string::npos);
    EXPECT_NE(r.out.find("max leaf depth: 9\n"), std::string::npos);
}

TEST(CliTaxonomy, ValidateReportsCycle) {
    fixtures::TempDir dir;
    auto good = dir.file("good.ndjson"), bad = dir.file("bad.ndjson");
    fixtures::write_file(good, fixtures::taxonomy_ndjson(fixtures::balanced_records(2, 2)));
    fixtures::write_file(bad, "{\"id\":\"a\",\"name\":\"A\",\"parent_id\":\"b\"}\n{\"id\":\"b\",\"name\":\"B\",\"parent_id\":\"a\"}\n");
    auto ok = run({"taxonomy", "validate", good});
    EXPECT_EQ(ok.code, 0);
    EXPECT_EQ(ok.out, "ok: 6 nodes\n");
    auto r = run({"taxonomy", "validate", bad});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.out.find("cycle"), std::string::npos);
}

TEST(CliTaxonomy, DescribeFillsEveryDescription) {
    fixtures::TempDir dir;
    auto records = fixtures::balanced_records(3, 2);
    for (auto& n : records) n.description.reset();
    auto in = dir.file("t.ndjson"), out = dir.file("described.ndjson");
    fixtures::write_file(in, fixtures::taxonomy_ndjson(records));
    auto r = run({"taxonomy", "describe", in, "--out", out, "--mock"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto t = load_taxonomy_file(out);
    ASSERT_EQ(t.size(), records.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        ASSERT_TRUE(t.node(i).has_description()) << t.node(i).id;
        EXPECT_EQ(t.node(i).description->rfind("Research on " + t.node(i).name, 0), 0u);
    }
    EXPECT_EQ(fixtures::read_file(in), fixtures::taxonomy_ndjson(records));
    EXPECT_EQ(run({"taxonomy", "describe", in, "--out", in, "--mock"}).code, 2);
}

TEST(CliTaxonomy, ExpandAcronyms) {
    fixtures::TempDir dir;
    auto in = dir.file("t.ndjson"), map = dir.file("map.json"), out = dir.file("x.ndjson");
    fixtures::write_file(in, "{\"id\":\"r\",\"name\":\"Operations Research\"}\n{\"id\":\"c\",\"name\":\"OPER Journal\",\"parent_id\":\"r\"}\n");
    fixtures::write_file(map, R"({"OPER": "Operations Research"})");
    auto r = run({"taxonomy", "expand", in, "--acronyms", map, "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_taxonomy_file(out).at("c").name, "Operations Research Journal");
}

TEST(CliClassify, PointwiseRecordsHaveOneToFiveLabels) {
    fixtures::TempDir dir;
    auto records = fixtures::balanced_records(3, 4);
    auto [t, d] = corpus(dir, records, 10);
    auto out = dir.file("out.ndjson");
    auto r = run({"classify", "--taxonomy", t, "--documents", d, "--out", out, "--strategy", "pointwise", "--top-k",
                  "40", "--mock"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto recs = read_records(out);
    ASSERT_EQ(recs.size(), 10u);
    fixtures::OracleTree tree(records);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(recs[i]["doc_id"], "doc-" + std::to_string(i));
        EXPECT_EQ(recs[i]["method"], "select_pointwise");
        auto n = recs[i]["labels"].size();
        EXPECT_GE(n, 1u);
        EXPECT_LE(n, 5u);
        for (const auto& id : recs[i]["labels"]) EXPECT_TRUE(tree.leaf(id.get<std::string>()));
        EXPECT_EQ(recs[i]["provenance"]["top_k"], 40);
    }
    EXPECT_FALSE(std::filesystem::exists(out + ".partial"));
    EXPECT_NE(r.err.find("classified 10 document(s): 0 failed"), std::string::npos);
}

TEST(CliClassify, RerankLeafOnlyMatchesScoreOrder) {
    fixtures::TempDir dir;
    auto records = fixtures::balanced_records(3, 3);
    auto [t, d] = corpus(dir, records, 12, 5);
    auto out = dir.file("out.ndjson");
    auto r = run({"classify", "--taxonomy", t, "--documents", d, "--out", out, "--strategy", "rerank", "--agg",
                  "leaf-only", "--top-k", "40", "--mock"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto docs = themed_docs(records, 12, 5);
    fixtures::OracleTree tree(records);
    auto recs = read_records(out);
    ASSERT_EQ(recs.size(), docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        // 27 leaves, so the pruned taxonomy holds all of them.
        std::vector<std::pair<double, std::string>> order;
        for (const auto& [id, n] : tree.nodes)
            if (tree.leaf(id)) order.emplace_back(-fixtures::oracle_score(fixtures::oracle_overlap(docs[i], n)), id);
        std::sort(order.begin(), order.end());
        std::vector<std::string> top;
        std::map<std::string, int> per_parent;
        std::set<std::string> over;
        std::size_t removed = 0;
        for (std::size_t k = 0; k < 5; ++k) {
            auto p = *tree.parent(order[k].second);
            if (per_parent[p] == 3) {
                over.insert(p);
                ++removed;
                continue;
            }
            ++per_parent[p];
            top.push_back(order[k].second);
        }
        for (std::size_t k = 5; k < order.size() && removed > 0; ++k) {
            auto p = *tree.parent(order[k].second);
            if (over.count(p) || per_parent[p] >= 3) continue;
            ++per_parent[p];
            top.push_back(order[k].second);
            --removed;
        }
        std::vector<std::string> got;
        for (const auto& id : recs[i]["labels"]) got.push_back(id);
        EXPECT_EQ(got, top) << docs[i].title;
    }
}

TEST(CliClassify, RandomDecreaseAblationIsReproducible) {
    fixtures::TempDir dir;
    auto records = fixtures::balanced_records(3, 4);
    auto [t, d] = corpus(dir, records, 15, 9);
    auto a = dir.file("a.ndjson"), b = dir.file("b.ndjson");
    std::vector<std::string> base{"classify", "--taxonomy", t, "--documents", d, "--strategy", "pointwise",
                                  "--ablation", "no-decrease", "--seed", "7", "--mock", "--mock-threshold", "0.05"};
    auto ra = base, rb = base;
    ra.insert(ra.end(), {"--out", a});
    rb.insert(rb.end(), {"--out", b, "--parallelism", "4"});
    ASSERT_EQ(run(ra).code, 0);
    ASSERT_EQ(run(rb).code, 0);
    EXPECT_EQ(fixtures::read_file(a), fixtures::read_file(b));
    bool random_used = false;
    for (const auto& rec : read_records(a))
        random_used |= rec["provenance"].contains("decrease") && rec["provenance"]["decrease"]["mode"] == "random";
    EXPECT_TRUE(random_used);
}

TEST(CliClassify, EmptyResultsNeedReview) {
    fixtures::TempDir dir;
    auto records = fixtures::balanced_records(2, 3);
    auto t = dir.file("t.ndjson"), d = dir.file("d.ndjson"), out = dir.file("o.ndjson");
    fixtures::write_file(t, fixtures::taxonomy_ndjson(records));
    std::vector<Document> docs{{"match", records[0].name + " " + records[3].name, {}, "x"}, {"none", "zzz unrelated", {}, "qqq"}};
    fixtures::write_file(d, fixtures::documents_ndjson(docs));
    auto r = run({"classify", "--taxonomy", t, "--documents", d, "--out", out, "--strategy", "trav-select", "--mock",
                  "--mock-threshold", "0.2"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const auto& rec : read_records(out)) {
        bool review = std::find(rec["flags"].begin(), rec["flags"].end(), "needs_review") != rec["flags"].end();
        EXPECT_EQ(rec["labels"].empty(), review) << rec.dump();
    }
    EXPECT_EQ(read_records(out)[1]["labels"].size(), 0u);
}

TEST(CliClassify, TopKSaturatesOnSmallTaxonomy) {
    fixtures::TempDir dir;
    auto records = fixtures::balanced_records(2, 3);
    auto [t, d] = corpus(dir, records, 3);
    auto out = dir.file("o.ndjson");
    auto r = run({"classify", "--taxonomy", t, "--documents", d, "--out", out, "--strategy", "one-pass", "--top-k",
                  "10", "--mock"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_records(out).size(), 3u);
    EXPECT_EQ(run({"classify", "--taxonomy", t, "--documents", d, "--out", out + "2", "--top-k", "5", "--mock"}).code, 2);
    EXPECT_EQ(run({"classify", "--taxonomy", t, "--documents", d, "--out", d, "--mock"}).code, 2);
    EXPECT_EQ(run({"classify", "--taxonomy", t, "--documents", d, "--out", out + "3", "--strategy", "magic", "--mock"}).code,
              2);
}

TEST(CliEvaluate, PrintsRowAndSorts) {
    fixtures::TempDir dir;
    std::string text;
    std::array<int, 5> counts{1, 3, 16, 27, 23};
    int i = 0;
    for (int s = 1; s <= 5; ++s)
        for (int k = 0; k < counts[s - 1]; ++k, ++i)
            text += json{{"doc_id", "d" + std::to_string(i)}, {"method", "select_pointwise"}, {"correct", i >= 4}, {"score", s}}
                        .dump() + "\n";
    for (int k = 0; k < 10; ++k)
        text += json{{"doc_id", "d" + std::to_string(k)}, {"method", "trav_select"}, {"correct", k < 5}, {"score", 3}}.dump() +
                "\n";
    auto path = dir.file("j.ndjson"), js = dir.file("cmp.json");
    fixtures::write_file(path, text);
    auto r = run({"evaluate", path, "--json-out", js});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[1].rfind("select_pointwise", 0), 0u);
    EXPECT_NE(lines[1].find("94.3"), std::string::npos);
    EXPECT_NE(lines[1].find("32.9"), std::string::npos);
    EXPECT_EQ(lines[2].rfind("trav_select", 0), 0u);
    auto back = load_reports_file(js);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].accuracy_tenths, 943);

    auto with_base = run({"evaluate", path, "--baseline", js});
    EXPECT_EQ(with_base.code, 0);

    auto empty = dir.file("empty.ndjson");
    fixtures::write_file(empty, "");
    EXPECT_NE(run({"evaluate", empty}).code, 0);
    auto bad = dir.file("bad.ndjson");
    fixtures::write_file(bad, R"({"doc_id": "d", "method": "m", "correct": true, "score": 6})" "\n");
    EXPECT_NE(run({"evaluate", bad}).code, 0);
}

TEST(CliRank, DepthsMatchCounting) {
    fixtures::TempDir dir;
    auto records = fixtures::balanced_records(3, 5);
    auto docs = themed_docs(records, 20, 13);
    auto t = dir.file("t.ndjson"), d = dir.file("d.ndjson"), g = dir.file("g.ndjson"), js = dir.file("r.json");
    fixtures::write_file(t, fixtures::taxonomy_ndjson(records));
    fixtures::write_file(d, fixtures::documents_ndjson(docs));
    auto taxonomy = Taxonomy::build(records);
    Rng rng(17);
    std::string gold_text;
    std::vector<std::set<std::string>> gold;
    for (const auto& doc : docs) {
        std::set<std::string> gs;
        for (std::size_t k = 1 + fixtures::pick(rng, 2); k > 0; --k)
            gs.insert(taxonomy.node(taxonomy.leaves()[fixtures::pick(rng, taxonomy.leaves().size())]).id);
        gold.push_back(gs);
        gold_text += json{{"doc_id", doc.doc_id}, {"gold", gs}}.dump() + "\n";
    }
    fixtures::write_file(g, gold_text);
    auto r = run({"rank", "--documents", d, "--taxonomy", t, "--gold", g, "--embed-dim", "64", "--json-out", js});
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = json::parse(fixtures::read_file(js))["rows"];
    ASSERT_EQ(rows.size(), 10u);

    HashEmbedder e(64);
    EmbeddingStore store;
    index_leaves(store, taxonomy, e);
    for (std::size_t j = 0; j < rows.size(); ++j) {
        std::size_t depth = 10 * (j + 1), all = 0, any = 0;
        EXPECT_EQ(rows[j]["depth"], depth);
        for (std::size_t i = 0; i < docs.size(); ++i) {
            auto ranking = rank_leaves(docs[i], taxonomy, store, e);
            std::size_t hit = 0;
            for (std::size_t k = 0; k < depth && k < ranking.entries.size(); ++k) hit += gold[i].count(ranking.entries[k].leaf_id);
            all += hit == gold[i].size();
            any += hit > 0;
        }
        EXPECT_DOUBLE_EQ(rows[j]["all_gold_rate"].get<double>(), all / 20.0);
        EXPECT_DOUBLE_EQ(rows[j]["any_gold_rate"].get<double>(), any / 20.0);
    }
    auto single = run({"rank", "--documents", d, "--taxonomy", t, "--gold", g, "--depths", "40", "--embed-dim", "64"});
    ASSERT_EQ(single.code, 0);
    EXPECT_EQ(std::count(single.out.begin(), single.out.end(), '\n'), 2);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"bogus"}).code, 2);
    EXPECT_EQ(run({"taxonomy", "stats", "/nonexistent/file"}).code, 2);
}
