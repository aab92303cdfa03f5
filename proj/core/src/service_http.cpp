#include <iostream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "focalmed/errors.hpp"
#include "focalmed/service_api.hpp"

namespace focalmed {

struct HttpService::Impl {
    explicit Impl(ServiceState& s) : state(s) {}

    ServiceState& state;
    httplib::Server server;
};

namespace {

void reply(httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body, "application/json; charset=utf-8");
}

} // namespace

HttpService::HttpService(ServiceState& state) : impl_(std::make_unique<Impl>(state)) {
    auto& srv = impl_->server;
    auto& st = impl_->state;
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    srv.Get("/v1/search", [&st](const httplib::Request& req, httplib::Response& res) {
        const auto engine = st.engine();
        reply(res, handle_search(engine.get(), req.params));
    });
    srv.Get("/v1/parse", [&st](const httplib::Request& req, httplib::Response& res) {
        const auto engine = st.engine();
        reply(res, handle_parse(engine.get(), req.params));
    });
    srv.Get(R"(/v1/concepts/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
        const auto engine = st.engine();
        reply(res, handle_concept(engine.get(), req.matches[1].str()));
    });
    srv.Get("/v1/health", [&st](const httplib::Request&, httplib::Response& res) {
        const auto engine = st.engine();
        reply(res, handle_health(engine.get()));
    });
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        const char* code = res.status == 404 ? "NOT_FOUND" : "INTERNAL";
        res.set_content(nlohmann::json{{"code", code}, {"message", httplib::status_message(res.status)}}.dump(),
                        "application/json; charset=utf-8");
    });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "unexpected error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            message = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(nlohmann::json{{"code", "INTERNAL"}, {"message", message}}.dump(),
                        "application/json; charset=utf-8");
    });
}

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
    auto& srv = impl_->server;
    if (port == 0) {
        const int bound = srv.bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host);
        return bound;
    }
    if (!srv.bind_to_port(host, port)) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpService::listen() { impl_->server.listen_after_bind(); }

void HttpService::stop() { impl_->server.stop(); }

void load_into(const ServiceConfig& config, ServiceState& state) {
    try {
        auto graph = std::make_shared<const KnowledgeGraph>(load_kg(config.data.kg()));
        auto tables = load_tables(config.data);
        auto settings = load_settings(config.data, config.settings);
        state.publish(std::make_shared<const Engine>(graph, tables, settings));
        auto indexes = std::make_shared<const IndexSet>(load_snapshot(config.data.index()));
        state.publish(std::make_shared<const Engine>(graph, std::move(tables), std::move(settings), std::move(indexes)));
    } catch (const std::exception& e) {
        std::cerr << "focalmed: load failed: " << e.what() << "\n";
    }
}

void run_service(const ServiceConfig& config, ServiceState& state) {
    HttpService service(state);
    const int port = service.bind(config.host, config.port);
    std::cerr << "focalmed: listening on " << config.host << ":" << port << "\n";
    std::jthread loader([&] { load_into(config, state); });
    service.listen();
}

RequestFn http_search_client(const std::string& base_url) {
    {
        httplib::Client probe(base_url);
        probe.set_connection_timeout(2);
        auto res = probe.Get("/v1/health");
        if (!res) throw Error(ErrorCode::EngineUnavailable, "no service answering at " + base_url);
        const auto body = nlohmann::json::parse(res->body, nullptr, false);
        if (res->status != 200 || body.is_discarded() || !body.value("index_loaded", false))
            throw Error(ErrorCode::EngineUnavailable, "service at " + base_url + " has no index loaded");
    }
    return [base_url](const std::string& query) {
        thread_local std::map<std::string, std::unique_ptr<httplib::Client>> clients;
        auto& client = clients[base_url];
        if (!client) {
            client = std::make_unique<httplib::Client>(base_url);
            client->set_keep_alive(true);
        }
        auto res = client->Get("/v1/search", httplib::Params{{"q", query}}, httplib::Headers{});
        if (!res || res->status != 200) {
            client.reset();
            throw Error(ErrorCode::EngineUnavailable, "search request failed");
        }
    };
}

} // namespace focalmed
