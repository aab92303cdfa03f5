#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "focalmed/kg_store.hpp"
#include "focalmed/lexicon.hpp"
#include "focalmed/text.hpp"

namespace focalmed {

/// Normalized phrase -> relation type ("drug of choice" -> HAS_TREATMENT).
class IntentPhraseTable {
public:
    static IntentPhraseTable defaults();

    /// Throws BadConfig when `phrase` already maps to a different relation type
    /// or normalizes to nothing.
    void add(std::string_view phrase, RelationType relation);

    std::optional<RelationType> lookup(std::string_view normalized_phrase) const;
    std::size_t max_phrase_len() const noexcept { return max_phrase_len_; }
    const std::map<std::string, RelationType, std::less<>>& entries() const noexcept { return entries_; }

private:
    std::map<std::string, RelationType, std::less<>> entries_;
    std::size_t max_phrase_len_ = 0;
};

/// Patient-population keywords ("pregnancy", "pediatric", ...).
class CohortTable {
public:
    static CohortTable defaults();

    void add(std::string_view phrase);
    bool contains(std::string_view normalized_phrase) const;
    std::size_t max_phrase_len() const noexcept { return max_phrase_len_; }
    const std::vector<std::string>& phrases() const noexcept { return phrases_; }

private:
    std::vector<std::string> phrases_;  // sorted, unique
    std::size_t max_phrase_len_ = 0;
};

struct QueryTables {
    IntentPhraseTable intents = IntentPhraseTable::defaults();
    CohortTable cohorts = CohortTable::defaults();
};

/// Reads a tables config:
///
///     [intents]
///     drug of choice=HAS_TREATMENT
///     [cohorts]
///     pregnancy
///
/// A section present in the file replaces the compiled-in defaults for that
/// table; absent sections keep them. '#' starts a comment.
QueryTables parse_query_tables(std::string_view content);
QueryTables load_query_tables(const std::filesystem::path& path);

struct PhraseMatch {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string phrase;
    RelationType relation = RelationType::IsA;  // meaningful for intent matches only
};

/// Greedy longest-match of intent phrases over the available tokens.
std::vector<PhraseMatch> match_intents(std::span<const Token> tokens, const IntentPhraseTable& table,
                                       const std::vector<bool>& available);
std::vector<PhraseMatch> match_intents(std::span<const Token> tokens, const IntentPhraseTable& table);

enum class ConstraintOrigin { Exact, Corrected, Expanded };

std::string_view to_string(ConstraintOrigin o) noexcept;

struct ConceptConstraint {
    ConceptId concept_id;
    double weight = 1.0;
    ConstraintOrigin origin = ConstraintOrigin::Exact;
    int hop = 0;                 ///< Expanded only
    ConceptId source;            ///< Expanded only: the constraint it was expanded from
    std::string matched_text;    ///< lexicon phrase that matched (Exact/Corrected)
    std::string surface;         ///< normalized query text it came from (differs when corrected)

    friend bool operator==(const ConceptConstraint&, const ConceptConstraint&) = default;
};

/// Patient-population qualifier: a cohort keyword or a concept of semantic type COHORT.
struct Cohort {
    std::string value;  ///< normalized keyword, or concept id when is_concept
    bool is_concept = false;

    friend auto operator<=>(const Cohort&, const Cohort&) = default;
    friend bool operator==(const Cohort&, const Cohort&) = default;
};

struct StructuredQuery {
    std::string original;
    std::vector<ConceptConstraint> concepts;
    std::vector<RelationType> relation_intents;
    std::vector<Cohort> cohorts;
    std::vector<std::string> residual_terms;
    std::vector<std::string> relaxation_log;

    friend bool operator==(const StructuredQuery&, const StructuredQuery&) = default;
};

struct ParserOptions {
    double corrected_weight = 0.8;
    double expansion_discount = 0.5;
    int expansion_depth = 1;
};

/// normalize -> intent phrases -> exact concepts -> cohort keywords ->
/// spelling correction of leftovers -> residual terms.
/// Throws EmptyQuery when the query has no tokens.
StructuredQuery parse(std::string_view query, const KnowledgeGraph& graph, const Lexicon& lexicon,
                      const QueryTables& tables, const ParserOptions& options = {});

/// Adds IS_A descendants (up to `depth` hops) of every Exact/Corrected
/// constraint with weight parent_weight * discount^hop. Existing constraints
/// are only ever raised to a higher weight, never removed.
StructuredQuery expand(const StructuredQuery& sq, const KnowledgeGraph& graph, int depth,
                       const ParserOptions& options = {});

/// Inverse document frequency of a normalized term; used to pick which residual to drop.
using IdfFn = std::function<double(std::string_view)>;

/// Drops one element, lowest information first: residual term (lowest idf,
/// then lexicographic), expanded constraint (lowest weight, then id), cohort,
/// corrected constraint, relation intent, exact constraint. The last
/// Exact/Corrected constraint is never dropped. nullopt when nothing can go.
std::optional<StructuredQuery> relax(const StructuredQuery& sq, const IdfFn& idf = {});

/// constraints + cohorts + intents + residual terms
std::size_t element_count(const StructuredQuery& sq) noexcept;

/// Weight an origin must carry: 1.0, corrected_weight, or source_weight * discount^hop.
double origin_weight(ConstraintOrigin origin, int hop, double source_weight, const ParserOptions& options = {});

/// Exact or Corrected; the constraints retrieval requires every candidate to match.
inline bool is_anchor(const ConceptConstraint& c) noexcept { return c.origin != ConstraintOrigin::Expanded; }

} // namespace focalmed
