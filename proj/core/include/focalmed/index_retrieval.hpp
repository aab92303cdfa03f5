#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "focalmed/corpus_tagger.hpp"
#include "focalmed/kg_store.hpp"
#include "focalmed/query_parser.hpp"

namespace focalmed {

/// Dense snippet number; equals the snippet's rank in snippet_id order, so
/// postings sorted by DocNum are sorted by snippet_id.
using DocNum = std::uint32_t;

struct ConceptPosting {
    DocNum doc = 0;
    Field field = Field::DocTitle;
    std::uint32_t frequency = 0;

    friend bool operator==(const ConceptPosting&, const ConceptPosting&) = default;
};

struct TextPosting {
    DocNum doc = 0;
    std::uint32_t tf = 0;

    friend bool operator==(const TextPosting&, const TextPosting&) = default;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct RetrievalConfig {
    double w_relation = 3.0;
    double w_concept = 1.0;
    double w_text = 1.0;
    /// Indexed by Field: DOC_TITLE, SECTION_TITLE, BREADCRUMB, SENTENCE.
    std::array<double, 4> field_weights = {4.0, 3.0, 2.0, 1.0};
    Bm25Params bm25;
    std::size_t min_results = 3;
    std::size_t max_relax_steps = 5;
    std::size_t limit = 10;
    /// Run the three sub-queries of one execute() on separate threads.
    bool parallel_subqueries = false;

    double field_weight(Field f) const noexcept { return field_weights[static_cast<std::size_t>(f)]; }
    double max_field_weight() const noexcept;
};

/// key=value lines (w_r, w_c, w_t, field.DOC_TITLE, ..., bm25.k1, bm25.b,
/// min_results, max_relax_steps, limit, parallel_subqueries). Keys under
/// "parser." belong to ParserOptions and are skipped. Throws BadConfig.
RetrievalConfig parse_retrieval_config(std::string_view content);
RetrievalConfig load_retrieval_config(const std::filesystem::path& path);

/// Reads the "parser." keys of the same file format.
ParserOptions parse_parser_options(std::string_view content);

/// Relation, concept and full-text indexes over one tagged corpus.
/// Immutable after build; share as std::shared_ptr<const IndexSet>.
class IndexSet {
public:
    using RelationKey = std::pair<ConceptId, RelationType>;

    IndexSet() = default;

    /// False for a default-constructed set.
    bool built() const noexcept { return built_; }

    std::size_t size() const noexcept { return snippets_.size(); }
    /// Tagged snippets ordered by snippet_id; position == DocNum.
    const std::vector<TaggedSnippet>& snippets() const noexcept { return snippets_; }
    const TaggedSnippet& snippet(DocNum doc) const { return snippets_.at(doc); }
    std::optional<DocNum> find(std::string_view snippet_id) const;

    const std::map<RelationKey, std::vector<DocNum>>& relation_index() const noexcept { return relation_; }
    /// Snippets whose section path (any element) carries an intent phrase of the relation.
    const std::map<RelationType, std::vector<DocNum>>& structural_index() const noexcept { return structural_; }
    /// One posting per (snippet, field), sorted by (doc, field).
    const std::map<ConceptId, std::vector<ConceptPosting>>& concept_index() const noexcept { return concept_; }
    const std::map<std::string, std::vector<TextPosting>, std::less<>>& text_index() const noexcept { return text_; }

    std::span<const DocNum> relation_postings(const ConceptId& id, RelationType rel) const;
    std::span<const DocNum> structural_postings(RelationType rel) const;
    std::span<const ConceptPosting> concept_postings(const ConceptId& id) const;
    std::span<const TextPosting> text_postings(std::string_view term) const;

    std::uint32_t doc_length(DocNum doc) const { return doc_len_.at(doc); }
    double avg_doc_length() const noexcept { return avg_len_; }
    std::size_t doc_frequency(std::string_view term) const { return text_postings(term).size(); }
    /// ln(1 + (N - df + 0.5) / (df + 0.5))
    double idf(std::string_view term) const;

    friend IndexSet build_indexes(std::span<const TaggedSnippet> corpus, const IntentPhraseTable& intents);
    friend void save_snapshot(const IndexSet& ix, std::ostream& out);
    friend IndexSet load_snapshot(std::istream& in);

private:
    void finalize();

    bool built_ = false;
    std::vector<TaggedSnippet> snippets_;
    std::map<std::string, DocNum, std::less<>> by_id_;
    std::map<RelationKey, std::vector<DocNum>> relation_;
    std::map<RelationType, std::vector<DocNum>> structural_;
    std::map<ConceptId, std::vector<ConceptPosting>> concept_;
    std::map<std::string, std::vector<TextPosting>, std::less<>> text_;
    std::vector<std::uint32_t> doc_len_;
    double avg_len_ = 0.0;
};

/// Text indexed for a snippet: doc title, every section_path element and every sentence.
std::vector<std::string> snippet_terms(const Snippet& s);

/// Throws DuplicateSnippetId.
IndexSet build_indexes(std::span<const TaggedSnippet> corpus, const IntentPhraseTable& intents);

/// Okapi BM25 of one snippet for the distinct `query_terms`; absent terms add 0.
double bm25(const IndexSet& ix, std::span<const std::string> query_terms, DocNum doc, const Bm25Params& params);

struct ScoreComponents {
    double relation = 0.0;
    double concept_score = 0.0;
    double text = 0.0;

    friend bool operator==(const ScoreComponents&, const ScoreComponents&) = default;
};

enum class MatchKind { Relation, Structural, Concept, Term };

/// One piece of evidence; `contribution` is its share of the (unweighted) component.
struct MatchedElement {
    MatchKind kind = MatchKind::Concept;
    ConceptId concept_id;
    RelationType relation = RelationType::IsA;
    Field field = Field::DocTitle;
    std::string term;
    double contribution = 0.0;

    friend bool operator==(const MatchedElement&, const MatchedElement&) = default;
};

struct ScoredResult {
    std::string snippet_id;
    double score = 0.0;
    ScoreComponents components;
    ScoreComponents weights;  ///< fusion weights used (w_r, w_c, w_t)
    std::vector<MatchedElement> matched;

    friend bool operator==(const ScoredResult&, const ScoredResult&) = default;
};

struct RetrievalResult {
    std::vector<ScoredResult> results;
    /// The query after any relaxation steps (its relaxation_log lists what was dropped).
    StructuredQuery query;
    std::size_t relax_steps = 0;
};

/// Scores every snippet for `sq` without relaxation or truncation.
///
/// Candidates must be tagged, for every Exact/Corrected constraint, with that
/// concept or one expanded from it. Per candidate: relation = sum over
/// (constraint, intent) of weight for a relation-index hit, else 0.5 * weight
/// when the intent phrase sits in the section path and the concept is tagged
/// anywhere in the snippet; concept =
/// sum of weight * field_weight * min(freq, 3), divided by
/// sum(weights) * max_field_weight * 3; text = BM25 of residual terms and
/// cohort keywords divided by the best candidate's BM25. Zero scores are
/// dropped; order is score descending, then snippet_id.
std::vector<ScoredResult> score_query(const StructuredQuery& sq, const IndexSet& ix, const RetrievalConfig& cfg);

/// Federated execution: score_query, truncate to cfg.limit, and while fewer
/// than min(min_results, limit) results come back, relax the query (up to
/// max_relax_steps times) and merge the new hits. Merging keeps every result
/// already returned and the higher score of duplicates.
/// Throws IndexNotBuilt.
RetrievalResult execute(const StructuredQuery& sq, const IndexSet& ix, const RetrievalConfig& cfg);

/// Text-only baseline: BM25 over all distinct normalized query tokens.
std::vector<ScoredResult> execute_text(std::string_view query, const IndexSet& ix, const RetrievalConfig& cfg);

/// Multi-line breakdown of a result: each sub-index, its matched elements and
/// the weighted components that add up to the fused score.
std::string explain(const ScoredResult& result);

/// w_r * sum(relation contributions) + w_c * ... recomputed from `matched`.
double explained_total(const ScoredResult& result);

/// Binary snapshot: "FMIX", u32 format version, then tagged sections.
inline constexpr std::uint32_t kSnapshotVersion = 1;
void save_snapshot(const IndexSet& ix, std::ostream& out);
IndexSet load_snapshot(std::istream& in);
void save_snapshot(const IndexSet& ix, const std::filesystem::path& path);
IndexSet load_snapshot(const std::filesystem::path& path);

} // namespace focalmed
