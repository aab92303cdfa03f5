#include "focalmed/service_api.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "focalmed/errors.hpp"
#include "focalmed/text.hpp"

namespace focalmed {

using json = nlohmann::json;

namespace {

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
    return {status, json{{"code", code}, {"message", message}}.dump()};
}

const std::string* param(const QueryParams& params, const std::string& key) {
    auto it = params.find(key);
    return it == params.end() ? nullptr : &it->second;
}

std::string label_of(const KnowledgeGraph& graph, const ConceptId& id) {
    const auto* c = graph.find(id);
    return c ? c->preferred_label : std::string();
}

json query_json(const StructuredQuery& sq, const KnowledgeGraph& graph) {
    json concepts = json::array();
    for (const auto& c : sq.concepts) {
        json item{{"id", c.concept_id.value},
                  {"label", label_of(graph, c.concept_id)},
                  {"origin", to_string(c.origin)},
                  {"weight", c.weight}};
        if (c.origin == ConstraintOrigin::Expanded) {
            item["hop"] = c.hop;
            item["source"] = c.source.value;
        } else {
            item["matched_text"] = c.matched_text;
            item["surface"] = c.surface;
        }
        concepts.push_back(std::move(item));
    }
    json intents = json::array();
    for (auto r : sq.relation_intents) intents.push_back(to_string(r));
    json cohorts = json::array();
    for (const auto& c : sq.cohorts) {
        json item{{"value", c.value}, {"is_concept", c.is_concept}};
        if (c.is_concept) item["label"] = label_of(graph, ConceptId(c.value));
        cohorts.push_back(std::move(item));
    }
    return json{{"original", sq.original},
                {"concepts", std::move(concepts)},
                {"intents", std::move(intents)},
                {"cohorts", std::move(cohorts)},
                {"residual_terms", sq.residual_terms},
                {"relaxation_log", sq.relaxation_log}};
}

std::string best_sentence(const TaggedSnippet& t, const StructuredQuery& sq) {
    const auto& sentences = t.snippet.sentences;
    if (sentences.empty()) return {};
    std::set<ConceptId> wanted;
    for (const auto& c : sq.concepts) wanted.insert(c.concept_id);
    std::vector<int> hits(sentences.size(), 0);
    for (const auto& tag : t.concept_tags)
        if (tag.field == Field::Sentence && tag.position < hits.size() && wanted.count(tag.concept_id)) ++hits[tag.position];
    const std::set<std::string> terms(sq.residual_terms.begin(), sq.residual_terms.end());
    for (std::size_t i = 0; i < sentences.size(); ++i)
        for (const auto& tok : normalize(sentences[i]))
            if (terms.count(tok.normalized)) ++hits[i];
    std::size_t best = 0;
    for (std::size_t i = 1; i < hits.size(); ++i)
        if (hits[i] > hits[best]) best = i;
    return sentences[best];
}

std::optional<std::size_t> parse_limit(const std::string& s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 1 || v > 100) return std::nullopt;
    return v;
}

} // namespace

std::string render_query_json(const StructuredQuery& sq, const KnowledgeGraph& graph) {
    return query_json(sq, graph).dump();
}

std::string top_sentence(const TaggedSnippet& snippet, const StructuredQuery& sq) { return best_sentence(snippet, sq); }

void ServiceState::publish(std::shared_ptr<const Engine> engine) {
    std::lock_guard lock(mu_);
    engine_ = std::move(engine);
}

std::shared_ptr<const Engine> ServiceState::engine() const {
    std::lock_guard lock(mu_);
    return engine_;
}

ApiResponse handle_search(const Engine* engine, const QueryParams& params) {
    const auto* q = param(params, "q");
    if (!q || normalize(*q).empty()) return error_response(400, "EMPTY_QUERY", "query has no searchable terms");
    std::size_t limit = 10;
    if (const auto* l = param(params, "limit")) {
        auto v = parse_limit(*l);
        if (!v) return error_response(400, "BAD_LIMIT", "limit must be an integer in 1..100");
        limit = *v;
    }
    auto mode = EngineMode::Full;
    if (const auto* m = param(params, "mode")) {
        auto v = parse_engine_mode(*m);
        if (!v) return error_response(400, "BAD_MODE", "mode must be 'full' or 'text'");
        mode = *v;
    }
    if (!engine || !engine->index_loaded()) return error_response(503, "NOT_READY", "indexes are still loading");

    try {
        const auto start = std::chrono::steady_clock::now();
        const auto outcome = engine->search(*q, mode, limit);
        json results = json::array();
        for (const auto& r : outcome.results) {
            const auto& t = engine->indexes()->snippet(*engine->indexes()->find(r.snippet_id));
            results.push_back({{"snippet_id", r.snippet_id},
                               {"doc_id", t.snippet.doc_id},
                               {"doc_title", t.snippet.doc_title},
                               {"section_path", t.snippet.section_path},
                               {"sentence", best_sentence(t, outcome.query)},
                               {"score", r.score},
                               {"components",
                                {{"relation", r.components.relation},
                                 {"concept", r.components.concept_score},
                                 {"text", r.components.text}}},
                               {"explanation", explain(r)}});
        }
        const auto took = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
        return {200, json{{"parsed", query_json(outcome.query, engine->graph())},
                          {"mode", to_string(mode)},
                          {"results", std::move(results)},
                          {"took_ms", took.count()}}
                         .dump()};
    } catch (const Error& e) {
        if (e.code() == ErrorCode::EmptyQuery) return error_response(400, "EMPTY_QUERY", e.what());
        return error_response(500, "INTERNAL", e.what());
    }
}

ApiResponse handle_parse(const Engine* engine, const QueryParams& params) {
    const auto* q = param(params, "q");
    if (!q || normalize(*q).empty()) return error_response(400, "EMPTY_QUERY", "query has no searchable terms");
    if (!engine) return error_response(503, "NOT_READY", "knowledge graph is still loading");
    try {
        return {200, query_json(engine->parse(*q), engine->graph()).dump()};
    } catch (const Error& e) {
        if (e.code() == ErrorCode::EmptyQuery) return error_response(400, "EMPTY_QUERY", e.what());
        return error_response(500, "INTERNAL", e.what());
    }
}

ApiResponse handle_concept(const Engine* engine, std::string_view id) {
    if (!engine) return error_response(503, "NOT_READY", "knowledge graph is still loading");
    const ConceptId cid{std::string(id)};
    const auto* c = engine->graph().find(cid);
    if (!c) return error_response(404, "UNKNOWN_CONCEPT", "no concept with id " + std::string(id));
    json relations = json::array();
    for (const auto& r : engine->graph().outgoing(cid))
        relations.push_back({{"predicate", to_string(r.predicate)},
                             {"object", r.object.value},
                             {"object_label", label_of(engine->graph(), r.object)}});
    return {200, json{{"id", c->id.value},
                      {"preferred_label", c->preferred_label},
                      {"synonyms", c->synonyms},
                      {"semantic_type", to_string(c->semantic_type)},
                      {"relations", std::move(relations)}}
                     .dump()};
}

ApiResponse handle_health(const Engine* engine) {
    const bool index_loaded = engine && engine->index_loaded();
    return {200, json{{"status", index_loaded ? "ok" : "loading"},
                      {"graph_loaded", engine != nullptr},
                      {"index_loaded", index_loaded},
                      {"corpus_size", index_loaded ? engine->indexes()->size() : 0}}
                     .dump()};
}

ServiceConfig service_config_from_env(ServiceConfig base) {
    if (const char* addr = std::getenv("FOCALMED_ADDR"); addr && *addr) {
        std::string_view a(addr);
        const auto colon = a.rfind(':');
        if (colon == std::string_view::npos) throw Error(ErrorCode::BadConfig, "FOCALMED_ADDR must be host:port");
        int port = 0;
        auto port_text = a.substr(colon + 1);
        auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
        if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port < 0 || port > 65535)
            throw Error(ErrorCode::BadConfig, "bad port in FOCALMED_ADDR");
        if (colon > 0) base.host = std::string(a.substr(0, colon));
        base.port = port;
    }
    if (const char* dir = std::getenv("FOCALMED_DATA_DIR"); dir && *dir) base.data.dir = dir;
    return base;
}

} // namespace focalmed
