#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "focalmed/index_retrieval.hpp"
#include "focalmed/kg_store.hpp"
#include "focalmed/lexicon.hpp"
#include "focalmed/query_parser.hpp"

namespace focalmed {

enum class EngineMode { Full, TextOnly };

/// "full" / "text"
std::string_view to_string(EngineMode mode) noexcept;
std::optional<EngineMode> parse_engine_mode(std::string_view s) noexcept;

struct EngineSettings {
    RetrievalConfig retrieval;
    ParserOptions parser;
};

/// Reads retrieval and "parser." keys from one key=value file.
EngineSettings load_engine_settings(const std::filesystem::path& path);

/// Files the pipeline reads and writes under one data directory.
struct DataLayout {
    std::filesystem::path dir;

    std::filesystem::path kg() const { return dir / "kg.jsonl"; }
    std::filesystem::path tagged() const { return dir / "tagged.jsonl"; }
    std::filesystem::path index() const { return dir / "index.fmix"; }
    /// Optional; defaults apply when absent.
    std::filesystem::path settings() const { return dir / "focalmed.conf"; }
    std::filesystem::path tables() const { return dir / "tables.conf"; }
};

/// Settings and tables from the layout, defaults for missing files. An explicit
/// settings path overrides the layout's and must exist.
EngineSettings load_settings(const DataLayout& layout, const std::filesystem::path& override_path = {});
QueryTables load_tables(const DataLayout& layout);

struct SearchOutcome {
    /// Parsed query after expansion and any relaxation (Full mode); plain parse in TextOnly mode.
    StructuredQuery query;
    std::vector<ScoredResult> results;
};

/// Graph + lexicon + tables + (optionally) indexes. Immutable; all methods
/// are const and safe to call from many threads.
class Engine {
public:
    Engine(std::shared_ptr<const KnowledgeGraph> graph, QueryTables tables, EngineSettings settings,
           std::shared_ptr<const IndexSet> indexes = nullptr);

    const KnowledgeGraph& graph() const noexcept { return *graph_; }
    const Lexicon& lexicon() const noexcept { return lexicon_; }
    const QueryTables& tables() const noexcept { return tables_; }
    const EngineSettings& settings() const noexcept { return settings_; }
    const IndexSet* indexes() const noexcept { return indexes_.get(); }
    bool index_loaded() const noexcept { return indexes_ && indexes_->built(); }

    StructuredQuery parse(std::string_view query) const;

    /// Full: parse, expand, execute with relaxation. TextOnly: BM25 over the
    /// query tokens. `limit` overrides the configured result limit.
    /// Throws EmptyQuery, IndexNotBuilt.
    SearchOutcome search(std::string_view query, EngineMode mode = EngineMode::Full,
                         std::optional<std::size_t> limit = std::nullopt) const;

private:
    std::shared_ptr<const KnowledgeGraph> graph_;
    Lexicon lexicon_;
    QueryTables tables_;
    EngineSettings settings_;
    std::shared_ptr<const IndexSet> indexes_;
};

} // namespace focalmed
