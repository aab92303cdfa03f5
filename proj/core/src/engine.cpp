#include "focalmed/engine.hpp"

#include <fstream>
#include <sstream>

#include "focalmed/errors.hpp"

namespace focalmed {

std::string_view to_string(EngineMode mode) noexcept { return mode == EngineMode::Full ? "full" : "text"; }

std::optional<EngineMode> parse_engine_mode(std::string_view s) noexcept {
    if (s == "full") return EngineMode::Full;
    if (s == "text") return EngineMode::TextOnly;
    return std::nullopt;
}

EngineSettings load_engine_settings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return EngineSettings{parse_retrieval_config(buf.str()), parse_parser_options(buf.str())};
}

EngineSettings load_settings(const DataLayout& layout, const std::filesystem::path& override_path) {
    if (!override_path.empty()) return load_engine_settings(override_path);
    if (std::filesystem::exists(layout.settings())) return load_engine_settings(layout.settings());
    return {};
}

QueryTables load_tables(const DataLayout& layout) {
    if (std::filesystem::exists(layout.tables())) return load_query_tables(layout.tables());
    return QueryTables{};
}

Engine::Engine(std::shared_ptr<const KnowledgeGraph> graph, QueryTables tables, EngineSettings settings,
               std::shared_ptr<const IndexSet> indexes)
    : graph_(std::move(graph)),
      lexicon_(build_lexicon(*graph_)),
      tables_(std::move(tables)),
      settings_(std::move(settings)),
      indexes_(std::move(indexes)) {}

StructuredQuery Engine::parse(std::string_view query) const {
    return focalmed::parse(query, *graph_, lexicon_, tables_, settings_.parser);
}

SearchOutcome Engine::search(std::string_view query, EngineMode mode, std::optional<std::size_t> limit) const {
    if (!index_loaded()) throw Error(ErrorCode::IndexNotBuilt, "indexes are not loaded");
    auto cfg = settings_.retrieval;
    if (limit) cfg.limit = *limit;

    SearchOutcome out;
    out.query = parse(query);
    if (mode == EngineMode::TextOnly) {
        out.results = execute_text(query, *indexes_, cfg);
        return out;
    }
    auto expanded = expand(out.query, *graph_, settings_.parser.expansion_depth, settings_.parser);
    auto retrieved = execute(expanded, *indexes_, cfg);
    out.query = std::move(retrieved.query);
    out.results = std::move(retrieved.results);
    return out;
}

} // namespace focalmed
