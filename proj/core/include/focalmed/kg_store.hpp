#pragma once

#include <compare>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace focalmed {

/// Opaque concept identifier, e.g. "C001".
struct ConceptId {
    std::string value;

    ConceptId() = default;
    explicit ConceptId(std::string v) : value(std::move(v)) {}

    bool empty() const noexcept { return value.empty(); }
    const std::string& str() const noexcept { return value; }

    friend auto operator<=>(const ConceptId&, const ConceptId&) = default;
    friend bool operator==(const ConceptId&, const ConceptId&) = default;
};

enum class SemanticType { Disease, Drug, Finding, Procedure, Cohort, Other };

enum class RelationType {
    IsA,
    HasDifferentialDiagnosis,
    HasTreatment,
    HasAdverseReaction,
    HasDosage,
    HasCause,
    HasDiagnosticTest,
};

inline constexpr RelationType kAllRelationTypes[] = {
    RelationType::IsA,        RelationType::HasDifferentialDiagnosis, RelationType::HasTreatment,
    RelationType::HasAdverseReaction, RelationType::HasDosage,         RelationType::HasCause,
    RelationType::HasDiagnosticTest,
};

std::string_view to_string(SemanticType t) noexcept;
std::string_view to_string(RelationType t) noexcept;
std::optional<SemanticType> parse_semantic_type(std::string_view s) noexcept;
std::optional<RelationType> parse_relation_type(std::string_view s) noexcept;

struct Concept {
    ConceptId id;
    std::string preferred_label;
    std::vector<std::string> synonyms;
    SemanticType semantic_type = SemanticType::Other;
};

struct Relation {
    ConceptId subject;
    RelationType predicate = RelationType::IsA;
    ConceptId object;

    friend auto operator<=>(const Relation&, const Relation&) = default;
    friend bool operator==(const Relation&, const Relation&) = default;
};

struct Descendant {
    ConceptId id;
    int hops = 0;

    friend bool operator==(const Descendant&, const Descendant&) = default;
};

/// Validated, immutable healthcare knowledge graph.
///
/// Invariants: concept ids are unique, every relation endpoint resolves, IS_A
/// edges carry no self-loops and form a DAG, and no triple appears twice.
/// Share across threads as `std::shared_ptr<const KnowledgeGraph>`.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    /// Validates and indexes the records. Throws focalmed::Error on any
    /// invariant violation (DuplicateConcept, DanglingRelation,
    /// HierarchyCycle, MalformedRecord for duplicate triples).
    static KnowledgeGraph build(std::vector<Concept> concepts, std::vector<Relation> relations);

    std::size_t concept_count() const noexcept { return concepts_.size(); }
    std::size_t relation_count() const noexcept { return relations_.size(); }

    /// Concepts ordered by id.
    const std::vector<Concept>& concepts() const noexcept { return concepts_; }
    /// Relations ordered by (subject, predicate, object).
    const std::vector<Relation>& relations() const noexcept { return relations_; }

    const Concept* find(const ConceptId& id) const noexcept;
    bool contains(const ConceptId& id) const noexcept { return find(id) != nullptr; }

    /// Outgoing relations of `id`, ordered by (predicate, object).
    std::span<const Relation> outgoing(const ConceptId& id) const;

    /// Direct IS_A children (concepts whose IS_A object is `id`), ordered by id.
    std::span<const ConceptId> children(const ConceptId& id) const;

private:
    std::vector<Concept> concepts_;
    std::vector<Relation> relations_;
    std::map<ConceptId, std::size_t> concept_index_;
    std::map<ConceptId, std::pair<std::size_t, std::size_t>> outgoing_ranges_;
    std::map<ConceptId, std::vector<ConceptId>> children_;
};

/// Reads the line-delimited concept/relation file at `path`.
/// Unknown predicates and semantic types are MalformedRecord errors.
KnowledgeGraph load_kg(const std::filesystem::path& path);

/// Same as load_kg, reading from an in-memory string.
KnowledgeGraph parse_kg(std::string_view content);

/// Concepts reachable through reversed IS_A edges within `max_depth` hops,
/// each with its minimal hop distance. Excludes `id`. Ordered by id.
std::vector<Descendant> descendants(const KnowledgeGraph& graph, const ConceptId& id, int max_depth);

/// Objects o of every (id, predicate, o) triple, ordered by id.
std::vector<ConceptId> related(const KnowledgeGraph& graph, const ConceptId& id, RelationType predicate);

} // namespace focalmed

template <>
struct std::hash<focalmed::ConceptId> {
    std::size_t operator()(const focalmed::ConceptId& id) const noexcept {
        return std::hash<std::string>{}(id.value);
    }
};
