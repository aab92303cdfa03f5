#include "focalmed/kg_store.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "focalmed/errors.hpp"
#include "focalmed/text.hpp"

namespace focalmed {

namespace {

constexpr std::pair<SemanticType, std::string_view> kSemanticNames[] = {
    {SemanticType::Disease, "DISEASE"},     {SemanticType::Drug, "DRUG"},
    {SemanticType::Finding, "FINDING"},     {SemanticType::Procedure, "PROCEDURE"},
    {SemanticType::Cohort, "COHORT"},       {SemanticType::Other, "OTHER"},
};

constexpr std::pair<RelationType, std::string_view> kRelationNames[] = {
    {RelationType::IsA, "IS_A"},
    {RelationType::HasDifferentialDiagnosis, "HAS_DIFFERENTIAL_DIAGNOSIS"},
    {RelationType::HasTreatment, "HAS_TREATMENT"},
    {RelationType::HasAdverseReaction, "HAS_ADVERSE_REACTION"},
    {RelationType::HasDosage, "HAS_DOSAGE"},
    {RelationType::HasCause, "HAS_CAUSE"},
    {RelationType::HasDiagnosticTest, "HAS_DIAGNOSTIC_TEST"},
};

// Drops synonyms that normalize to the preferred label or to an earlier synonym.
void dedupe_synonyms(Concept& c) {
    std::set<std::string> seen{normalize_phrase(c.preferred_label)};
    std::vector<std::string> kept;
    for (auto& syn : c.synonyms) {
        auto key = normalize_phrase(syn);
        if (key.empty() || !seen.insert(std::move(key)).second) continue;
        kept.push_back(std::move(syn));
    }
    c.synonyms = std::move(kept);
}

// DFS over IS_A edges (child -> parent). Returns a cycle path if one exists.
std::optional<std::vector<ConceptId>> find_cycle(const std::map<ConceptId, std::vector<ConceptId>>& parents) {
    enum class Color { White, Grey, Black };
    std::map<ConceptId, Color> color;
    std::vector<ConceptId> stack;

    std::function<std::optional<std::vector<ConceptId>>(const ConceptId&)> visit =
        [&](const ConceptId& node) -> std::optional<std::vector<ConceptId>> {
        color[node] = Color::Grey;
        stack.push_back(node);
        if (auto it = parents.find(node); it != parents.end()) {
            for (const auto& next : it->second) {
                const auto c = color.count(next) ? color[next] : Color::White;
                if (c == Color::Grey) {
                    auto start = std::find(stack.begin(), stack.end(), next);
                    std::vector<ConceptId> cycle(start, stack.end());
                    cycle.push_back(next);
                    return cycle;
                }
                if (c == Color::White) {
                    if (auto found = visit(next)) return found;
                }
            }
        }
        stack.pop_back();
        color[node] = Color::Black;
        return std::nullopt;
    };

    for (const auto& [node, _] : parents) {
        if (color.count(node) && color[node] != Color::White) continue;
        if (auto found = visit(node)) return found;
    }
    return std::nullopt;
}

std::string format_path(const std::vector<ConceptId>& path) {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += " -> ";
        out += path[i].value;
    }
    return out;
}

std::string require_string(const nlohmann::json& rec, const char* key, std::size_t line) {
    auto it = rec.find(key);
    if (it == rec.end() || !it->is_string()) {
        throw RecordError(ErrorCode::MalformedRecord, line, std::string("missing or non-string field '") + key + "'");
    }
    return it->get<std::string>();
}

} // namespace

std::string_view to_string(SemanticType t) noexcept {
    for (const auto& [value, name] : kSemanticNames)
        if (value == t) return name;
    return "OTHER";
}

std::string_view to_string(RelationType t) noexcept {
    for (const auto& [value, name] : kRelationNames)
        if (value == t) return name;
    return "IS_A";
}

std::optional<SemanticType> parse_semantic_type(std::string_view s) noexcept {
    for (const auto& [value, name] : kSemanticNames)
        if (name == s) return value;
    return std::nullopt;
}

std::optional<RelationType> parse_relation_type(std::string_view s) noexcept {
    for (const auto& [value, name] : kRelationNames)
        if (name == s) return value;
    return std::nullopt;
}

KnowledgeGraph KnowledgeGraph::build(std::vector<Concept> concepts, std::vector<Relation> relations) {
    KnowledgeGraph g;
    std::sort(concepts.begin(), concepts.end(), [](const Concept& a, const Concept& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        auto& c = concepts[i];
        if (c.id.empty()) throw Error(ErrorCode::MalformedRecord, "concept with empty id");
        if (normalize_phrase(c.preferred_label).empty())
            throw Error(ErrorCode::MalformedRecord, "concept " + c.id.value + " has an empty preferred_label");
        if (i > 0 && concepts[i - 1].id == c.id)
            throw Error(ErrorCode::DuplicateConcept, "duplicate concept id " + c.id.value);
        dedupe_synonyms(c);
        g.concept_index_.emplace(c.id, i);
    }
    g.concepts_ = std::move(concepts);

    std::sort(relations.begin(), relations.end());
    std::map<ConceptId, std::vector<ConceptId>> parents;
    for (std::size_t i = 0; i < relations.size(); ++i) {
        const auto& r = relations[i];
        if (!g.contains(r.subject))
            throw Error(ErrorCode::DanglingRelation, "relation subject " + r.subject.value + " does not resolve");
        if (!g.contains(r.object))
            throw Error(ErrorCode::DanglingRelation, "relation object " + r.object.value + " does not resolve");
        if (i > 0 && relations[i - 1] == r)
            throw Error(ErrorCode::MalformedRecord, "duplicate relation (" + r.subject.value + ", " +
                                                       std::string(to_string(r.predicate)) + ", " + r.object.value + ")");
        if (r.predicate == RelationType::IsA) {
            if (r.subject == r.object)
                throw Error(ErrorCode::HierarchyCycle, "IS_A cycle: " + r.subject.value + " -> " + r.object.value);
            parents[r.subject].push_back(r.object);
            g.children_[r.object].push_back(r.subject);
        }
    }
    if (auto cycle = find_cycle(parents)) {
        throw Error(ErrorCode::HierarchyCycle, "IS_A cycle: " + format_path(*cycle));
    }
    for (auto& [_, kids] : g.children_) std::sort(kids.begin(), kids.end());

    g.relations_ = std::move(relations);
    for (std::size_t i = 0; i < g.relations_.size();) {
        std::size_t j = i;
        while (j < g.relations_.size() && g.relations_[j].subject == g.relations_[i].subject) ++j;
        g.outgoing_ranges_.emplace(g.relations_[i].subject, std::make_pair(i, j));
        i = j;
    }
    return g;
}

const Concept* KnowledgeGraph::find(const ConceptId& id) const noexcept {
    auto it = concept_index_.find(id);
    return it == concept_index_.end() ? nullptr : &concepts_[it->second];
}

std::span<const Relation> KnowledgeGraph::outgoing(const ConceptId& id) const {
    auto it = outgoing_ranges_.find(id);
    if (it == outgoing_ranges_.end()) return {};
    return std::span<const Relation>(relations_).subspan(it->second.first, it->second.second - it->second.first);
}

std::span<const ConceptId> KnowledgeGraph::children(const ConceptId& id) const {
    auto it = children_.find(id);
    if (it == children_.end()) return {};
    return it->second;
}

KnowledgeGraph parse_kg(std::string_view content) {
    std::vector<Concept> concepts;
    std::vector<Relation> relations;
    std::map<ConceptId, std::size_t> concept_lines;

    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw RecordError(ErrorCode::MalformedRecord, lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!rec.is_object()) throw RecordError(ErrorCode::MalformedRecord, lineno, "record is not an object");

        const auto kind = require_string(rec, "kind", lineno);
        if (kind == "concept") {
            Concept c;
            c.id = ConceptId(require_string(rec, "id", lineno));
            if (c.id.empty()) throw RecordError(ErrorCode::MalformedRecord, lineno, "empty concept id");
            c.preferred_label = require_string(rec, "preferred_label", lineno);
            if (normalize_phrase(c.preferred_label).empty())
                throw RecordError(ErrorCode::MalformedRecord, lineno, "empty preferred_label");
            if (auto it = rec.find("synonyms"); it != rec.end()) {
                if (!it->is_array()) throw RecordError(ErrorCode::MalformedRecord, lineno, "synonyms must be an array");
                for (const auto& s : *it) {
                    if (!s.is_string()) throw RecordError(ErrorCode::MalformedRecord, lineno, "synonym must be a string");
                    c.synonyms.push_back(s.get<std::string>());
                }
            }
            const auto type_name = require_string(rec, "semantic_type", lineno);
            auto type = parse_semantic_type(type_name);
            if (!type) throw RecordError(ErrorCode::MalformedRecord, lineno, "unknown semantic_type '" + type_name + "'");
            c.semantic_type = *type;
            if (auto [it, inserted] = concept_lines.emplace(c.id, lineno); !inserted) {
                throw RecordError(ErrorCode::DuplicateConcept, lineno,
                                  "duplicate concept id " + c.id.value + " (first seen on line " +
                                      std::to_string(it->second) + ")");
            }
            concepts.push_back(std::move(c));
        } else if (kind == "relation") {
            Relation r;
            r.subject = ConceptId(require_string(rec, "subject", lineno));
            r.object = ConceptId(require_string(rec, "object", lineno));
            const auto pred = require_string(rec, "predicate", lineno);
            auto type = parse_relation_type(pred);
            if (!type) throw RecordError(ErrorCode::MalformedRecord, lineno, "unknown predicate '" + pred + "'");
            r.predicate = *type;
            relations.push_back(std::move(r));
        } else {
            throw RecordError(ErrorCode::MalformedRecord, lineno, "unknown record kind '" + kind + "'");
        }
    }
    return KnowledgeGraph::build(std::move(concepts), std::move(relations));
}

KnowledgeGraph load_kg(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read knowledge graph file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_kg(buf.str());
}

std::vector<Descendant> descendants(const KnowledgeGraph& graph, const ConceptId& id, int max_depth) {
    if (!graph.contains(id)) throw Error(ErrorCode::UnknownConcept, "unknown concept " + id.value);
    if (max_depth < 0) throw Error(ErrorCode::InvalidArgument, "max_depth must be non-negative");

    std::map<ConceptId, int> dist{{id, 0}};
    std::deque<ConceptId> frontier{id};
    while (!frontier.empty()) {
        auto node = std::move(frontier.front());
        frontier.pop_front();
        const int d = dist[node];
        if (d == max_depth) continue;
        for (const auto& child : graph.children(node)) {
            if (dist.emplace(child, d + 1).second) frontier.push_back(child);
        }
    }
    std::vector<Descendant> out;
    out.reserve(dist.size() - 1);
    for (auto& [cid, hops] : dist) {
        if (cid != id) out.push_back({cid, hops});
    }
    return out;
}

std::vector<ConceptId> related(const KnowledgeGraph& graph, const ConceptId& id, RelationType predicate) {
    if (!graph.contains(id)) throw Error(ErrorCode::UnknownConcept, "unknown concept " + id.value);
    std::vector<ConceptId> out;
    for (const auto& r : graph.outgoing(id)) {
        if (r.predicate == predicate) out.push_back(r.object);
    }
    return out;
}

} // namespace focalmed
