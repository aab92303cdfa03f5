#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "focalmed/engine.hpp"
#include "focalmed/eval_harness.hpp"

namespace focalmed {

/// Status plus a JSON body. Error bodies are {"code": ..., "message": ...}
/// with code one of EMPTY_QUERY, BAD_LIMIT, BAD_MODE, NOT_READY,
/// UNKNOWN_CONCEPT, NOT_FOUND, INTERNAL.
struct ApiResponse {
    int status = 200;
    std::string body;
};

using QueryParams = std::multimap<std::string, std::string>;

/// {"original","concepts":[{id,label,origin,weight,...}],"intents","cohorts","residual_terms","relaxation_log"}
std::string render_query_json(const StructuredQuery& sq, const KnowledgeGraph& graph);

/// The sentence with the most query concepts tagged in it plus residual-term
/// hits; the earliest sentence wins ties. Empty when the snippet has none.
std::string top_sentence(const TaggedSnippet& snippet, const StructuredQuery& sq);

/// The engine currently being served. Readers take a shared_ptr copy and keep
/// using it while a newer engine is published.
class ServiceState {
public:
    void publish(std::shared_ptr<const Engine> engine);
    std::shared_ptr<const Engine> engine() const;

private:
    mutable std::mutex mu_;
    std::shared_ptr<const Engine> engine_;
};

/// GET /v1/search?q=&limit=&mode=  (engine may be null: 503)
ApiResponse handle_search(const Engine* engine, const QueryParams& params);
/// GET /v1/parse?q=
ApiResponse handle_parse(const Engine* engine, const QueryParams& params);
/// GET /v1/concepts/{id}
ApiResponse handle_concept(const Engine* engine, std::string_view id);
/// GET /v1/health
ApiResponse handle_health(const Engine* engine);

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    DataLayout data;
    std::filesystem::path settings;  ///< optional override of data/focalmed.conf
};

/// Reads FOCALMED_ADDR ("host:port") and FOCALMED_DATA_DIR over `base`.
ServiceConfig service_config_from_env(ServiceConfig base);

/// HTTP front end over a ServiceState (CORS open, JSON bodies).
class HttpService {
public:
    explicit HttpService(ServiceState& state);
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    /// Port 0 picks a free port. Returns the bound port; throws Io on failure.
    int bind(const std::string& host, int port);
    /// Serves until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Loads graph, then indexes, publishing an engine after each step. Errors
/// are reported on stderr and leave the last published engine in place.
void load_into(const ServiceConfig& config, ServiceState& state);

/// Binds, loads data in the background and serves until the process exits.
void run_service(const ServiceConfig& config, ServiceState& state);

/// RequestFn that issues GET /v1/search against `base_url` ("http://host:port").
/// Throws EngineUnavailable if /v1/health does not answer with index_loaded.
RequestFn http_search_client(const std::string& base_url);

} // namespace focalmed
