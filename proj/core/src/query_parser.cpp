#include "focalmed/query_parser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "focalmed/errors.hpp"

namespace focalmed {

namespace {

std::size_t phrase_tokens(std::string_view phrase) {
    return static_cast<std::size_t>(std::count(phrase.begin(), phrase.end(), ' ')) + 1;
}

// Greedy left-to-right longest match over available tokens; `accept` decides
// whether a joined phrase is in the table.
template <typename Accept>
std::vector<PhraseMatch> greedy_scan(std::span<const Token> tokens, const std::vector<bool>& available,
                                     std::size_t max_len, Accept&& accept) {
    std::vector<PhraseMatch> out;
    std::size_t i = 0;
    while (i < tokens.size()) {
        if (!available[i]) {
            ++i;
            continue;
        }
        std::size_t run = 0;
        while (i + run < tokens.size() && available[i + run] && run < max_len) ++run;
        bool matched = false;
        for (std::size_t len = run; len >= 1; --len) {
            std::string phrase;
            for (std::size_t k = i; k < i + len; ++k) {
                if (k > i) phrase.push_back(' ');
                phrase += tokens[k].normalized;
            }
            PhraseMatch m{i, i + len, phrase, RelationType::IsA};
            if (accept(m)) {
                out.push_back(std::move(m));
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return out;
}

void add_constraint(std::vector<ConceptConstraint>& list, ConceptConstraint c) {
    auto it = std::find_if(list.begin(), list.end(),
                           [&](const ConceptConstraint& e) { return e.concept_id == c.concept_id; });
    if (it == list.end()) {
        list.push_back(std::move(c));
    } else if (c.weight > it->weight) {
        *it = std::move(c);
    }
}

template <typename T>
void push_unique(std::vector<T>& list, T value) {
    if (std::find(list.begin(), list.end(), value) == list.end()) list.push_back(std::move(value));
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

IntentPhraseTable IntentPhraseTable::defaults() {
    IntentPhraseTable t;
    t.add("differential diagnosis", RelationType::HasDifferentialDiagnosis);
    for (auto p : {"treatment", "therapy", "drug of choice", "management"}) t.add(p, RelationType::HasTreatment);
    for (auto p : {"adverse reactions", "side effects", "adverse effects"}) t.add(p, RelationType::HasAdverseReaction);
    for (auto p : {"dosage", "dose", "dosing"}) t.add(p, RelationType::HasDosage);
    for (auto p : {"cause", "causes", "etiology"}) t.add(p, RelationType::HasCause);
    for (auto p : {"diagnosis", "workup", "test indicated", "diagnostic test"}) t.add(p, RelationType::HasDiagnosticTest);
    return t;
}

void IntentPhraseTable::add(std::string_view phrase, RelationType relation) {
    auto key = normalize_phrase(phrase);
    if (key.empty()) throw Error(ErrorCode::BadConfig, "empty intent phrase");
    if (relation == RelationType::IsA) throw Error(ErrorCode::BadConfig, "intent phrase '" + key + "' cannot map to IS_A");
    auto [it, inserted] = entries_.emplace(key, relation);
    if (!inserted && it->second != relation) {
        throw Error(ErrorCode::BadConfig, "intent phrase '" + key + "' maps to both " +
                                              std::string(to_string(it->second)) + " and " +
                                              std::string(to_string(relation)));
    }
    max_phrase_len_ = std::max(max_phrase_len_, phrase_tokens(key));
}

std::optional<RelationType> IntentPhraseTable::lookup(std::string_view normalized_phrase) const {
    auto it = entries_.find(normalized_phrase);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

CohortTable CohortTable::defaults() {
    CohortTable t;
    for (auto p : {"pregnancy", "pregnant", "pediatric", "geriatric"}) t.add(p);
    return t;
}

void CohortTable::add(std::string_view phrase) {
    auto key = normalize_phrase(phrase);
    if (key.empty()) throw Error(ErrorCode::BadConfig, "empty cohort phrase");
    auto pos = std::lower_bound(phrases_.begin(), phrases_.end(), key);
    if (pos != phrases_.end() && *pos == key) return;
    max_phrase_len_ = std::max(max_phrase_len_, phrase_tokens(key));
    phrases_.insert(pos, std::move(key));
}

bool CohortTable::contains(std::string_view normalized_phrase) const {
    return std::binary_search(phrases_.begin(), phrases_.end(), normalized_phrase);
}

QueryTables parse_query_tables(std::string_view content) {
    QueryTables tables;
    std::optional<IntentPhraseTable> intents;
    std::optional<CohortTable> cohorts;
    enum class Section { None, Intents, Cohorts } section = Section::None;

    std::istringstream in{std::string(content)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        auto line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        if (line == "[intents]") {
            section = Section::Intents;
            if (!intents) intents.emplace();
            continue;
        }
        if (line == "[cohorts]") {
            section = Section::Cohorts;
            if (!cohorts) cohorts.emplace();
            continue;
        }
        if (line.front() == '[') continue;  // sections owned by other components
        try {
            if (section == Section::Intents) {
                const auto eq = line.find('=');
                if (eq == std::string::npos) throw Error(ErrorCode::BadConfig, "expected phrase=RELATION_TYPE");
                const auto name = trim(std::string_view(line).substr(eq + 1));
                auto rel = parse_relation_type(name);
                if (!rel) throw Error(ErrorCode::BadConfig, "unknown relation type '" + name + "'");
                intents->add(std::string_view(line).substr(0, eq), *rel);
            } else if (section == Section::Cohorts) {
                cohorts->add(line);
            }
        } catch (const Error& e) {
            throw RecordError(ErrorCode::BadConfig, lineno, e.what());
        }
    }
    if (intents) tables.intents = std::move(*intents);
    if (cohorts) tables.cohorts = std::move(*cohorts);
    return tables;
}

QueryTables load_query_tables(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_query_tables(buf.str());
}

std::vector<PhraseMatch> match_intents(std::span<const Token> tokens, const IntentPhraseTable& table,
                                       const std::vector<bool>& available) {
    return greedy_scan(tokens, available, table.max_phrase_len(), [&](PhraseMatch& m) {
        auto rel = table.lookup(m.phrase);
        if (rel) m.relation = *rel;
        return rel.has_value();
    });
}

std::vector<PhraseMatch> match_intents(std::span<const Token> tokens, const IntentPhraseTable& table) {
    return match_intents(tokens, table, std::vector<bool>(tokens.size(), true));
}

std::string_view to_string(ConstraintOrigin o) noexcept {
    switch (o) {
        case ConstraintOrigin::Exact: return "EXACT";
        case ConstraintOrigin::Corrected: return "CORRECTED";
        case ConstraintOrigin::Expanded: return "EXPANDED";
    }
    return "EXACT";
}

double origin_weight(ConstraintOrigin origin, int hop, double source_weight, const ParserOptions& options) {
    switch (origin) {
        case ConstraintOrigin::Exact: return 1.0;
        case ConstraintOrigin::Corrected: return options.corrected_weight;
        case ConstraintOrigin::Expanded: return source_weight * std::pow(options.expansion_discount, hop);
    }
    return 1.0;
}

StructuredQuery parse(std::string_view query, const KnowledgeGraph& graph, const Lexicon& lexicon,
                      const QueryTables& tables, const ParserOptions& options) {
    StructuredQuery sq;
    sq.original = std::string(query);

    auto tokens = normalize(query);
    if (tokens.empty()) throw Error(ErrorCode::EmptyQuery, "query is empty after normalization");
    std::vector<bool> available(tokens.size(), true);
    auto consume = [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) available[k] = false;
    };

    for (const auto& m : match_intents(tokens, tables.intents, available)) {
        push_unique(sq.relation_intents, m.relation);
        consume(m.begin, m.end);
    }

    auto take_mention = [&](const Mention& m, ConstraintOrigin origin, const std::string& surface) {
        const auto* c = graph.find(m.concept_id);
        if (c && c->semantic_type == SemanticType::Cohort) {
            push_unique(sq.cohorts, Cohort{m.concept_id.value, true});
            return;
        }
        ConceptConstraint cc;
        cc.concept_id = m.concept_id;
        cc.origin = origin;
        cc.weight = origin_weight(origin, 0, 1.0, options);
        cc.matched_text = m.matched_text;
        cc.surface = surface;
        add_constraint(sq.concepts, std::move(cc));
    };

    const auto exact = recognize(tokens, lexicon, available);
    for (const auto& m : exact) take_mention(m, ConstraintOrigin::Exact, m.matched_text);
    for (const auto& m : exact) consume(m.begin, m.end);

    for (const auto& m : greedy_scan(tokens, available, tables.cohorts.max_phrase_len(),
                                     [&](const PhraseMatch& pm) { return tables.cohorts.contains(pm.phrase); })) {
        push_unique(sq.cohorts, Cohort{m.phrase, false});
        consume(m.begin, m.end);
    }

    // Spelling correction: substitute corrected forms for leftover tokens and
    // rescan; only mentions that use a corrected token are new.
    std::vector<Token> substituted = tokens;
    std::vector<bool> was_corrected(tokens.size(), false);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!available[i]) continue;
        if (auto fix = correct(tokens[i], lexicon); fix && fix->phrase != tokens[i].normalized) {
            substituted[i].normalized = fix->phrase;
            was_corrected[i] = true;
        }
    }
    if (std::find(was_corrected.begin(), was_corrected.end(), true) != was_corrected.end()) {
        const auto fixed = recognize(substituted, lexicon, available);
        std::vector<const Mention*> accepted;
        for (const auto& m : fixed) {
            const bool uses_fix = std::any_of(was_corrected.begin() + static_cast<std::ptrdiff_t>(m.begin),
                                              was_corrected.begin() + static_cast<std::ptrdiff_t>(m.end),
                                              [](bool b) { return b; });
            if (!uses_fix) continue;
            take_mention(m, ConstraintOrigin::Corrected, join_tokens(tokens, m.begin, m.end));
            accepted.push_back(&m);
        }
        for (const auto* m : accepted) consume(m->begin, m->end);
    }

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (available[i]) push_unique(sq.residual_terms, tokens[i].normalized);
    }
    return sq;
}

StructuredQuery expand(const StructuredQuery& sq, const KnowledgeGraph& graph, int depth, const ParserOptions& options) {
    StructuredQuery out = sq;
    if (depth <= 0) return out;
    for (const auto& parent : sq.concepts) {
        if (!is_anchor(parent) || !graph.contains(parent.concept_id)) continue;
        for (const auto& d : descendants(graph, parent.concept_id, depth)) {
            ConceptConstraint cc;
            cc.concept_id = d.id;
            cc.origin = ConstraintOrigin::Expanded;
            cc.hop = d.hops;
            cc.source = parent.concept_id;
            cc.weight = origin_weight(ConstraintOrigin::Expanded, d.hops, parent.weight, options);
            add_constraint(out.concepts, std::move(cc));
        }
    }
    return out;
}

std::size_t element_count(const StructuredQuery& sq) noexcept {
    return sq.concepts.size() + sq.cohorts.size() + sq.relation_intents.size() + sq.residual_terms.size();
}

std::optional<StructuredQuery> relax(const StructuredQuery& sq, const IdfFn& idf) {
    StructuredQuery out = sq;
    const auto anchors = static_cast<std::size_t>(std::count_if(sq.concepts.begin(), sq.concepts.end(), is_anchor));

    if (!out.residual_terms.empty()) {
        auto key = [&](const std::string& t) { return idf ? idf(t) : 0.0; };
        auto victim = std::min_element(out.residual_terms.begin(), out.residual_terms.end(),
                                       [&](const std::string& a, const std::string& b) {
                                           const double ka = key(a), kb = key(b);
                                           return ka != kb ? ka < kb : a < b;
                                       });
        out.relaxation_log.push_back("residual:" + *victim);
        out.residual_terms.erase(victim);
        return out;
    }

    // lowest weight first, then concept id
    auto drop_constraint = [&](auto pred, std::string_view label) -> bool {
        auto victim = out.concepts.end();
        for (auto it = out.concepts.begin(); it != out.concepts.end(); ++it) {
            if (!pred(*it)) continue;
            if (victim == out.concepts.end() || it->weight < victim->weight ||
                (it->weight == victim->weight && it->concept_id < victim->concept_id)) {
                victim = it;
            }
        }
        if (victim == out.concepts.end()) return false;
        out.relaxation_log.push_back(std::string(label) + ":" + victim->concept_id.value);
        out.concepts.erase(victim);
        return true;
    };

    if (drop_constraint([](const ConceptConstraint& c) { return c.origin == ConstraintOrigin::Expanded; }, "expanded"))
        return out;

    if (!out.cohorts.empty()) {
        auto victim = std::min_element(out.cohorts.begin(), out.cohorts.end());
        out.relaxation_log.push_back("cohort:" + victim->value);
        out.cohorts.erase(victim);
        return out;
    }

    if (anchors > 1 &&
        drop_constraint([](const ConceptConstraint& c) { return c.origin == ConstraintOrigin::Corrected; }, "corrected"))
        return out;

    if (!out.relation_intents.empty()) {
        out.relaxation_log.push_back("intent:" + std::string(to_string(out.relation_intents.back())));
        out.relation_intents.pop_back();
        return out;
    }

    if (anchors > 1) {
        // the most recently parsed exact concept goes first
        for (auto it = out.concepts.rbegin(); it != out.concepts.rend(); ++it) {
            if (it->origin != ConstraintOrigin::Exact) continue;
            out.relaxation_log.push_back("exact:" + it->concept_id.value);
            out.concepts.erase(std::next(it).base());
            return out;
        }
    }
    return std::nullopt;
}

} // namespace focalmed
