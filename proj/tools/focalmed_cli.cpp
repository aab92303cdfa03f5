// focalmed: ingest, tag, index, query, evaluate, bench and serve.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "focalmed/corpus_tagger.hpp"
#include "focalmed/engine.hpp"
#include "focalmed/errors.hpp"
#include "focalmed/eval_harness.hpp"
#include "focalmed/index_retrieval.hpp"
#include "focalmed/kg_store.hpp"
#include "focalmed/service_api.hpp"

using namespace focalmed;
using json = nlohmann::json;

namespace {

enum class Format { Human, Lines };

struct Globals {
    std::string data_dir = "data";
    std::string config;
    std::string format = "human";

    DataLayout layout() const { return DataLayout{data_dir}; }
    Format fmt() const { return format == "lines" ? Format::Lines : Format::Human; }
};

void require_file(const std::filesystem::path& p, const std::string& what) {
    if (!std::filesystem::is_regular_file(p)) throw Error(ErrorCode::Io, what + " not found: " + p.string());
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::filesystem::create_directories(p.parent_path().empty() ? "." : p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out || !(out << content)) throw Error(ErrorCode::Io, "cannot write " + p.string());
}

std::shared_ptr<const KnowledgeGraph> graph_from(const DataLayout& layout) {
    require_file(layout.kg(), "knowledge graph (run ingest-kg first)");
    return std::make_shared<const KnowledgeGraph>(load_kg(layout.kg()));
}

Engine engine_from(const Globals& g) {
    const auto layout = g.layout();
    auto graph = graph_from(layout);
    require_file(layout.index(), "index snapshot (run build-index first)");
    auto indexes = std::make_shared<const IndexSet>(load_snapshot(layout.index()));
    return Engine(std::move(graph), load_tables(layout), load_settings(layout, g.config), std::move(indexes));
}

// ingest-kg

int cmd_ingest(const Globals& g, const std::string& kg_path) {
    require_file(kg_path, "knowledge graph file");
    const auto graph = load_kg(kg_path);
    std::map<std::string, std::size_t> by_type;
    for (const auto& c : graph.concepts()) ++by_type[std::string(to_string(c.semantic_type))];
    std::map<std::string, std::size_t> by_pred;
    for (const auto& r : graph.relations()) ++by_pred[std::string(to_string(r.predicate))];

    std::filesystem::create_directories(g.data_dir);
    std::filesystem::copy_file(kg_path, g.layout().kg(), std::filesystem::copy_options::overwrite_existing);

    if (g.fmt() == Format::Lines) {
        std::cout << json{{"concepts", graph.concepts().size()}, {"relations", graph.relations().size()}}.dump() << "\n";
        for (const auto& [t, n] : by_type) std::cout << json{{"semantic_type", t}, {"count", n}}.dump() << "\n";
        for (const auto& [p, n] : by_pred) std::cout << json{{"predicate", p}, {"count", n}}.dump() << "\n";
    } else {
        std::cout << "ingested " << graph.concepts().size() << " concepts, " << graph.relations().size()
                  << " relations into " << g.layout().kg().string() << "\n";
        for (const auto& [t, n] : by_type) std::cout << "  " << t << ": " << n << "\n";
        for (const auto& [p, n] : by_pred) std::cout << "  " << p << ": " << n << "\n";
    }
    return 0;
}

// tag-corpus

int cmd_tag(const Globals& g, const std::string& corpus_path, unsigned threads) {
    require_file(corpus_path, "corpus file");
    const auto layout = g.layout();
    const auto graph = graph_from(layout);
    const auto tables = load_tables(layout);
    const auto corpus = load_corpus(corpus_path);
    const auto lexicon = build_lexicon(*graph);
    const RuleBasedTagger tagger(*graph, lexicon, tables.intents);
    const auto result = tag_corpus(corpus, tagger, threads);
    write_file(layout.tagged(), to_jsonl(result.tagged));

    if (g.fmt() == Format::Lines) {
        json counts;
        for (auto f : kAllFields) counts[std::string(to_string(f))] = result.concept_tag_counts.count(f) ? result.concept_tag_counts.at(f) : 0;
        std::cout << json{{"snippets", result.tagged.size()},
                          {"concept_tags", counts},
                          {"relation_tags", result.relation_tag_count}}
                         .dump()
                  << "\n";
    } else {
        std::cout << "tagged " << result.tagged.size() << " snippets into " << layout.tagged().string() << "\n";
        for (auto f : kAllFields) {
            const auto n = result.concept_tag_counts.count(f) ? result.concept_tag_counts.at(f) : 0;
            std::cout << "  concept tags " << to_string(f) << ": " << n << "\n";
        }
        std::cout << "  relation tags: " << result.relation_tag_count << "\n";
    }
    return 0;
}

// build-index

int cmd_build(const Globals& g) {
    const auto layout = g.layout();
    require_file(layout.tagged(), "tagged corpus (run tag-corpus first)");
    const auto tagged = load_tagged(layout.tagged());
    const auto tables = load_tables(layout);
    const auto ix = build_indexes(tagged, tables.intents);
    save_snapshot(ix, layout.index());

    if (g.fmt() == Format::Lines) {
        std::cout << json{{"snippets", ix.size()},
                          {"relation_keys", ix.relation_index().size()},
                          {"structural_keys", ix.structural_index().size()},
                          {"concepts", ix.concept_index().size()},
                          {"terms", ix.text_index().size()}}
                         .dump()
                  << "\n";
    } else {
        std::cout << "indexed " << ix.size() << " snippets into " << layout.index().string() << "\n"
                  << "  relation keys: " << ix.relation_index().size() << "\n"
                  << "  structural keys: " << ix.structural_index().size() << "\n"
                  << "  concepts: " << ix.concept_index().size() << "\n"
                  << "  terms: " << ix.text_index().size() << "\n";
    }
    return 0;
}

// search

int cmd_search(const Globals& g, const std::string& query, std::size_t limit, const std::string& mode_name) {
    const auto mode = parse_engine_mode(mode_name);
    if (!mode) throw CLI::ValidationError("--mode", "must be full or text");
    const auto engine = engine_from(g);
    const auto outcome = engine.search(query, *mode, limit);
    const auto& ix = *engine.indexes();

    std::size_t rank = 0;
    for (const auto& r : outcome.results) {
        ++rank;
        const auto& t = ix.snippet(*ix.find(r.snippet_id));
        const auto sentence = top_sentence(t, outcome.query);
        if (g.fmt() == Format::Lines) {
            std::cout << json{{"rank", rank},
                              {"snippet_id", r.snippet_id},
                              {"doc_title", t.snippet.doc_title},
                              {"section_path", t.snippet.section_path},
                              {"sentence", sentence},
                              {"score", std::stod(fixed(r.score, 6))},
                              {"relation", std::stod(fixed(r.components.relation, 6))},
                              {"concept", std::stod(fixed(r.components.concept_score, 6))},
                              {"text", std::stod(fixed(r.components.text, 6))}}
                             .dump()
                      << "\n";
        } else {
            std::cout << rank << ". " << r.snippet_id << "  " << fixed(r.score) << "  " << t.snippet.doc_title;
            if (!t.snippet.section_path.empty()) std::cout << " > " << join(t.snippet.section_path, " > ");
            std::cout << "\n";
            if (!sentence.empty()) std::cout << "   \"" << sentence << "\"\n";
            std::istringstream lines(explain(r));
            for (std::string line; std::getline(lines, line);) std::cout << "   " << line << "\n";
        }
    }
    if (g.fmt() == Format::Lines) {
        std::cout << json{{"parsed", json::parse(render_query_json(outcome.query, engine.graph()))}}.dump() << "\n";
    } else {
        if (outcome.results.empty()) std::cout << "no results\n";
        std::cout << "parsed: " << render_query_json(outcome.query, engine.graph()) << "\n";
    }
    return 0;
}

// eval

int cmd_eval(const Globals& g, const std::string& gold_path, const std::string& report_path) {
    require_file(gold_path, "gold file");
    const auto gold = load_gold(gold_path);
    const auto engine = engine_from(g);
    const auto full = evaluate(EngineMode::Full, gold, engine);
    const auto text = evaluate(EngineMode::TextOnly, gold, engine);
    if (!report_path.empty()) write_file(report_path, to_jsonl(full) + to_jsonl(text));

    if (g.fmt() == Format::Lines) {
        for (std::size_t i = 0; i < full.per_query.size(); ++i)
            std::cout << json{{"query", full.per_query[i].first},
                              {"full", std::stod(fixed(full.per_query[i].second, 6))},
                              {"text", std::stod(fixed(text.per_query[i].second, 6))}}
                             .dump()
                      << "\n";
        std::cout << json{{"mean_full", std::stod(fixed(full.mean_ndcg, 6))},
                          {"mean_text", std::stod(fixed(text.mean_ndcg, 6))},
                          {"queries", gold.size()}}
                         .dump()
                  << "\n";
    } else {
        std::cout << "mean nDCG@10  full=" << fixed(full.mean_ndcg) << "  text=" << fixed(text.mean_ndcg)
                  << "  (" << gold.size() << " queries)\n";
        for (std::size_t i = 0; i < full.per_query.size(); ++i)
            std::cout << "  " << fixed(full.per_query[i].second) << "  " << fixed(text.per_query[i].second) << "  "
                      << full.per_query[i].first << "\n";
    }
    return 0;
}

// coverage

int cmd_coverage(const Globals& g, const std::string& manual_path) {
    require_file(manual_path, "manual tag file");
    const auto layout = g.layout();
    require_file(layout.tagged(), "tagged corpus (run tag-corpus first)");
    const auto report = coverage(load_tagged(layout.tagged()), load_manual_tags(manual_path));
    if (g.fmt() == Format::Lines) {
        for (const auto& [doc, v] : report.per_doc) std::cout << json{{"doc_id", doc}, {"coverage", std::stod(fixed(v, 6))}}.dump() << "\n";
        std::cout << json{{"median", std::stod(fixed(report.median, 6))}, {"precision", std::stod(fixed(report.precision, 6))}}.dump() << "\n";
    } else {
        for (const auto& [doc, v] : report.per_doc) std::cout << "  " << doc << "  " << fixed(v) << "\n";
        std::cout << "median coverage " << fixed(report.median) << "  (precision " << fixed(report.precision) << ")\n";
    }
    return 0;
}

// bench

std::vector<std::string> query_pool(const Globals& g, const std::string& queries_path, const std::string& gold_path) {
    std::vector<std::string> pool;
    if (!queries_path.empty()) {
        require_file(queries_path, "query file");
        std::ifstream in(queries_path);
        for (std::string line; std::getline(in, line);)
            if (line.find_first_not_of(" \t\r") != std::string::npos) pool.push_back(line);
    } else if (!gold_path.empty()) {
        require_file(gold_path, "gold file");
        pool = load_gold(gold_path).queries();
    } else {
        // every preferred label, alone and with each intent phrase
        const auto graph = graph_from(g.layout());
        const auto tables = load_tables(g.layout());
        for (const auto& c : graph->concepts()) {
            pool.push_back(c.preferred_label);
            for (const auto& [phrase, rel] : tables.intents.entries()) pool.push_back(c.preferred_label + " " + phrase);
        }
    }
    if (pool.empty()) throw Error(ErrorCode::InvalidArgument, "query pool is empty");
    return pool;
}

int cmd_bench(const Globals& g, int rpm, int duration, const std::string& url, const std::string& queries_path,
              const std::string& gold_path, const std::string& raw_log, unsigned workers) {
    LoadTestOptions opts;
    opts.rpm = rpm;
    opts.duration_s = duration;
    opts.query_pool = query_pool(g, queries_path, gold_path);
    opts.workers = workers;
    opts.raw_log = raw_log;

    RequestFn request;
    std::optional<Engine> engine;
    if (url.empty()) {
        engine.emplace(engine_from(g));
        request = [&engine](const std::string& q) { engine->search(q, EngineMode::Full); };
    } else {
        request = http_search_client(url);
    }
    const auto run = load_test(request, opts);
    const auto& r = run.report;
    if (g.fmt() == Format::Lines) {
        std::cout << json{{"target_rpm", r.target_rpm},
                          {"achieved_rpm", std::stod(fixed(r.achieved_rpm, 3))},
                          {"p50_ms", std::stod(fixed(r.p50, 3))},
                          {"p95_ms", std::stod(fixed(r.p95, 3))},
                          {"p99_ms", std::stod(fixed(r.p99, 3))},
                          {"errors", r.error_count},
                          {"samples", r.sample_count}}
                         .dump()
                  << "\n";
    } else {
        std::cout << "target " << r.target_rpm << " rpm, achieved " << fixed(r.achieved_rpm, 1) << " rpm over "
                  << r.sample_count << " requests\n"
                  << "  p50 " << fixed(r.p50, 2) << " ms\n"
                  << "  p95 " << fixed(r.p95, 2) << " ms\n"
                  << "  p99 " << fixed(r.p99, 2) << " ms\n"
                  << "  errors " << r.error_count << "\n";
    }
    return r.error_count == 0 ? 0 : 3;
}

// serve

int cmd_serve(const Globals& g, const std::string& addr) {
    ServiceConfig base;
    base.data = g.layout();
    base.settings = g.config;
    auto config = service_config_from_env(base);
    if (!addr.empty()) {
        const auto colon = addr.rfind(':');
        if (colon == std::string::npos) throw CLI::ValidationError("--addr", "expected host:port");
        if (colon > 0) config.host = addr.substr(0, colon);
        config.port = std::stoi(addr.substr(colon + 1));
    }
    ServiceState state;
    run_service(config, state);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-graph focused clinical search"};
    app.require_subcommand(1);
    Globals g;
    if (const char* dir = std::getenv("FOCALMED_DATA_DIR"); dir && *dir) g.data_dir = dir;
    app.add_option("--data-dir", g.data_dir, "Data directory (FOCALMED_DATA_DIR)");
    app.add_option("--config", g.config, "Retrieval/parser settings file")->check(CLI::ExistingFile);
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"human", "lines"}));

    std::string kg_path, corpus_path, gold_path, manual_path, report_path, query, mode = "full", url, queries_path,
        raw_log, addr;
    unsigned threads = 1, workers = 8;
    std::size_t limit = 10;
    int rpm = 300, duration = 60;

    auto* ingest = app.add_subcommand("ingest-kg", "Validate a knowledge graph and store it in the data directory");
    ingest->add_option("--kg", kg_path, "Knowledge graph JSONL")->required();
    auto* tag = app.add_subcommand("tag-corpus", "Tag a snippet corpus with concepts and relations");
    tag->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
    tag->add_option("--threads", threads, "Tagging threads")->check(CLI::Range(1u, 256u));
    auto* build = app.add_subcommand("build-index", "Build the index snapshot from the tagged corpus");
    auto* search = app.add_subcommand("search", "Run a query");
    search->add_option("query", query, "Query text")->required();
    search->add_option("--limit", limit, "Maximum results")->check(CLI::Range(1, 100));
    search->add_option("--mode", mode, "full or text")->check(CLI::IsMember({"full", "text"}));
    auto* eval = app.add_subcommand("eval", "nDCG@10 of full and text-only retrieval on a gold set");
    eval->add_option("--gold", gold_path, "Gold judgments JSONL")->required();
    eval->add_option("--report", report_path, "Write a line-delimited evaluation report");
    auto* cov = app.add_subcommand("coverage", "Relation tag coverage against manual tags");
    cov->add_option("--manual", manual_path, "Manual tags JSONL")->required();
    auto* bench = app.add_subcommand("bench", "Open-loop latency benchmark");
    bench->add_option("--rpm", rpm, "Requests per minute")->required()->check(CLI::PositiveNumber);
    bench->add_option("--duration", duration, "Seconds")->required()->check(CLI::PositiveNumber);
    bench->add_option("--url", url, "Benchmark a running service instead of an in-process engine");
    bench->add_option("--queries", queries_path, "Query pool, one per line");
    bench->add_option("--gold", gold_path, "Use the gold set queries as the pool");
    bench->add_option("--raw-log", raw_log, "Write per-request samples");
    bench->add_option("--workers", workers, "Concurrent requests in flight")->check(CLI::Range(1u, 256u));
    auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
    serve->add_option("--addr", addr, "host:port (FOCALMED_ADDR)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*ingest) return cmd_ingest(g, kg_path);
        if (*tag) return cmd_tag(g, corpus_path, threads);
        if (*build) return cmd_build(g);
        if (*search) return cmd_search(g, query, limit, mode);
        if (*eval) return cmd_eval(g, gold_path, report_path);
        if (*cov) return cmd_coverage(g, manual_path);
        if (*bench) return cmd_bench(g, rpm, duration, url, queries_path, gold_path, raw_log, workers);
        if (*serve) return cmd_serve(g, addr);
    } catch (const CLI::ParseError& e) {
        std::cerr << "focalmed: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "focalmed: " << to_string(e.code()) << ": " << e.what() << "\n";
        if (e.code() == ErrorCode::EmptyQuery || e.code() == ErrorCode::InvalidArgument) return 1;
        return is_data_error(e.code()) ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "focalmed: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
