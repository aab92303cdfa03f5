#include "focalmed/index_retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <sstream>

#include "focalmed/errors.hpp"
#include "focalmed/text.hpp"

namespace focalmed {

namespace {

constexpr double kStructuralFactor = 0.5;
constexpr std::uint32_t kFrequencyCap = 3;

template <typename Map, typename Key>
auto postings_of(const Map& map, const Key& key) -> std::span<const typename Map::mapped_type::value_type> {
    auto it = map.find(key);
    if (it == map.end()) return {};
    return it->second;
}

struct Evidence {
    double value = 0.0;
    std::vector<MatchedElement> matched;
};

using EvidenceMap = std::map<DocNum, Evidence>;

bool doc_has_concept(const IndexSet& ix, const ConceptId& id, DocNum doc) {
    const auto postings = ix.concept_postings(id);
    auto it = std::lower_bound(postings.begin(), postings.end(), doc,
                               [](const ConceptPosting& p, DocNum d) { return p.doc < d; });
    return it != postings.end() && it->doc == doc;
}

std::vector<std::string> text_terms(const StructuredQuery& sq) {
    std::set<std::string> seen;
    std::vector<std::string> terms;
    auto add = [&](const std::string& t) {
        if (seen.insert(t).second) terms.push_back(t);
    };
    for (const auto& t : sq.residual_terms) add(t);
    for (const auto& c : sq.cohorts) {
        if (c.is_concept) continue;
        for (const auto& tok : normalize(c.value)) add(tok.normalized);
    }
    return terms;
}

// Candidates must carry every anchor concept, or a concept expanded from it;
// nullopt means "no restriction".
std::optional<std::vector<DocNum>> anchor_candidates(const StructuredQuery& sq, const IndexSet& ix) {
    std::optional<std::vector<DocNum>> allowed;
    for (const auto& anchor : sq.concepts) {
        if (!is_anchor(anchor)) continue;
        std::set<DocNum> docs;
        for (const auto& c : sq.concepts) {
            if (c.concept_id != anchor.concept_id && !(c.origin == ConstraintOrigin::Expanded && c.source == anchor.concept_id))
                continue;
            for (const auto& p : ix.concept_postings(c.concept_id)) docs.insert(p.doc);
        }
        if (!allowed) {
            allowed.emplace(docs.begin(), docs.end());
        } else {
            std::vector<DocNum> both;
            std::set_intersection(allowed->begin(), allowed->end(), docs.begin(), docs.end(), std::back_inserter(both));
            allowed = std::move(both);
        }
    }
    return allowed;
}

EvidenceMap relation_evidence(const StructuredQuery& sq, const IndexSet& ix) {
    EvidenceMap out;
    for (const auto& c : sq.concepts) {
        for (const auto rel : sq.relation_intents) {
            const auto hits = ix.relation_postings(c.concept_id, rel);
            for (const auto doc : hits) {
                auto& ev = out[doc];
                ev.value += c.weight;
                ev.matched.push_back({MatchKind::Relation, c.concept_id, rel, Field::DocTitle, {}, c.weight});
            }
            for (const auto doc : ix.structural_postings(rel)) {
                if (std::binary_search(hits.begin(), hits.end(), doc)) continue;
                if (!doc_has_concept(ix, c.concept_id, doc)) continue;
                const double share = kStructuralFactor * c.weight;
                auto& ev = out[doc];
                ev.value += share;
                ev.matched.push_back({MatchKind::Structural, c.concept_id, rel, Field::SectionTitle, {}, share});
            }
        }
    }
    return out;
}

EvidenceMap concept_evidence(const StructuredQuery& sq, const IndexSet& ix, const RetrievalConfig& cfg) {
    EvidenceMap out;
    double total_weight = 0.0;
    for (const auto& c : sq.concepts) total_weight += c.weight;
    const double norm = total_weight * cfg.max_field_weight() * kFrequencyCap;
    if (norm <= 0.0) return out;
    for (const auto& c : sq.concepts) {
        for (const auto& p : ix.concept_postings(c.concept_id)) {
            const double share =
                c.weight * cfg.field_weight(p.field) * static_cast<double>(std::min(p.frequency, kFrequencyCap)) / norm;
            if (share <= 0.0) continue;
            auto& ev = out[p.doc];
            ev.value += share;
            ev.matched.push_back({MatchKind::Concept, c.concept_id, RelationType::IsA, p.field, {}, share});
        }
    }
    return out;
}

// Raw BM25 per doc, one matched element per term (contribution still unnormalized).
EvidenceMap text_evidence(std::span<const std::string> terms, const IndexSet& ix, const Bm25Params& params) {
    EvidenceMap out;
    const double avg = ix.avg_doc_length();
    for (const auto& term : terms) {
        const auto postings = ix.text_postings(term);
        if (postings.empty()) continue;
        const double idf = ix.idf(term);
        for (const auto& p : postings) {
            const double tf = p.tf;
            const double len = ix.doc_length(p.doc);
            const double part = idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * len / avg));
            auto& ev = out[p.doc];
            ev.value += part;
            ev.matched.push_back({MatchKind::Term, {}, RelationType::IsA, Field::Sentence, term, part});
        }
    }
    return out;
}

// Rescales text evidence so the best doc among `docs` scores 1.
void normalize_text(EvidenceMap& text, const std::vector<DocNum>& docs) {
    double best = 0.0;
    for (const auto doc : docs) {
        if (auto it = text.find(doc); it != text.end()) best = std::max(best, it->second.value);
    }
    for (auto& [doc, ev] : text) {
        if (best <= 0.0) {
            ev = {};
            continue;
        }
        ev.value /= best;
        for (auto& m : ev.matched) m.contribution /= best;
    }
}

bool ranks_before(const ScoredResult& a, const ScoredResult& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.snippet_id < b.snippet_id;
}

} // namespace

double RetrievalConfig::max_field_weight() const noexcept {
    return *std::max_element(field_weights.begin(), field_weights.end());
}

std::optional<DocNum> IndexSet::find(std::string_view snippet_id) const {
    auto it = by_id_.find(snippet_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::span<const DocNum> IndexSet::relation_postings(const ConceptId& id, RelationType rel) const {
    return postings_of(relation_, RelationKey{id, rel});
}

std::span<const DocNum> IndexSet::structural_postings(RelationType rel) const { return postings_of(structural_, rel); }

std::span<const ConceptPosting> IndexSet::concept_postings(const ConceptId& id) const { return postings_of(concept_, id); }

std::span<const TextPosting> IndexSet::text_postings(std::string_view term) const {
    auto it = text_.find(term);
    if (it == text_.end()) return {};
    return it->second;
}

double IndexSet::idf(std::string_view term) const {
    const double n = static_cast<double>(size());
    const double df = static_cast<double>(doc_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

void IndexSet::finalize() {
    by_id_.clear();
    for (DocNum d = 0; d < snippets_.size(); ++d) by_id_.emplace(snippets_[d].snippet.snippet_id, d);
    double total = 0.0;
    for (auto len : doc_len_) total += len;
    avg_len_ = snippets_.empty() ? 0.0 : total / static_cast<double>(snippets_.size());
    built_ = true;
}

std::vector<std::string> snippet_terms(const Snippet& s) {
    std::vector<std::string> terms;
    auto add = [&](std::string_view text) {
        for (auto& tok : normalize(text)) terms.push_back(std::move(tok.normalized));
    };
    add(s.doc_title);
    for (const auto& p : s.section_path) add(p);
    for (const auto& sentence : s.sentences) add(sentence);
    return terms;
}

IndexSet build_indexes(std::span<const TaggedSnippet> corpus, const IntentPhraseTable& intents) {
    IndexSet ix;
    ix.snippets_.assign(corpus.begin(), corpus.end());
    std::sort(ix.snippets_.begin(), ix.snippets_.end(),
              [](const TaggedSnippet& a, const TaggedSnippet& b) { return a.snippet.snippet_id < b.snippet.snippet_id; });
    for (std::size_t i = 1; i < ix.snippets_.size(); ++i) {
        if (ix.snippets_[i].snippet.snippet_id == ix.snippets_[i - 1].snippet.snippet_id)
            throw Error(ErrorCode::DuplicateSnippetId, "duplicate snippet_id " + ix.snippets_[i].snippet.snippet_id);
    }

    for (DocNum doc = 0; doc < ix.snippets_.size(); ++doc) {
        const auto& t = ix.snippets_[doc];

        for (const auto& rt : t.relation_tags) ix.relation_[{rt.concept_id, rt.relation_type}].push_back(doc);

        std::map<std::pair<ConceptId, Field>, std::uint32_t> freq;
        for (const auto& ct : t.concept_tags) ++freq[{ct.concept_id, ct.field}];
        for (const auto& [key, f] : freq) ix.concept_[key.first].push_back({doc, key.second, f});

        std::set<RelationType> structural;
        for (const auto& element : t.snippet.section_path) {
            for (const auto& m : match_intents(normalize(element), intents)) structural.insert(m.relation);
        }
        for (auto rel : structural) ix.structural_[rel].push_back(doc);

        const auto terms = snippet_terms(t.snippet);
        std::map<std::string, std::uint32_t> tf;
        for (const auto& term : terms) ++tf[term];
        for (const auto& [term, count] : tf) ix.text_[term].push_back({doc, count});
        ix.doc_len_.push_back(static_cast<std::uint32_t>(terms.size()));
    }
    for (auto& [_, postings] : ix.relation_) {
        postings.erase(std::unique(postings.begin(), postings.end()), postings.end());
    }
    ix.finalize();
    return ix;
}

double bm25(const IndexSet& ix, std::span<const std::string> query_terms, DocNum doc, const Bm25Params& params) {
    std::set<std::string_view> distinct(query_terms.begin(), query_terms.end());
    const double len = ix.doc_length(doc);
    const double avg = ix.avg_doc_length();
    double score = 0.0;
    for (const auto term : distinct) {
        const auto postings = ix.text_postings(term);
        auto it = std::lower_bound(postings.begin(), postings.end(), doc,
                                   [](const TextPosting& p, DocNum d) { return p.doc < d; });
        if (it == postings.end() || it->doc != doc) continue;
        const double tf = it->tf;
        score += ix.idf(term) * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * len / avg));
    }
    return score;
}

std::vector<ScoredResult> score_query(const StructuredQuery& sq, const IndexSet& ix, const RetrievalConfig& cfg) {
    if (!ix.built()) throw Error(ErrorCode::IndexNotBuilt, "indexes are not built");

    const auto terms = text_terms(sq);
    EvidenceMap rel, con, txt;
    if (cfg.parallel_subqueries) {
        auto rel_f = std::async(std::launch::async, [&] { return relation_evidence(sq, ix); });
        auto con_f = std::async(std::launch::async, [&] { return concept_evidence(sq, ix, cfg); });
        auto txt_f = std::async(std::launch::async, [&] { return text_evidence(terms, ix, cfg.bm25); });
        rel = rel_f.get();
        con = con_f.get();
        txt = txt_f.get();
    } else {
        rel = relation_evidence(sq, ix);
        con = concept_evidence(sq, ix, cfg);
        txt = text_evidence(terms, ix, cfg.bm25);
    }

    std::vector<DocNum> candidates;
    if (auto allowed = anchor_candidates(sq, ix)) {
        candidates = std::move(*allowed);
    } else {
        std::set<DocNum> any;
        for (const auto* m : {&rel, &con, &txt})
            for (const auto& [doc, _] : *m) any.insert(doc);
        candidates.assign(any.begin(), any.end());
    }
    normalize_text(txt, candidates);

    std::vector<ScoredResult> out;
    for (const auto doc : candidates) {
        ScoredResult r;
        r.snippet_id = ix.snippet(doc).snippet.snippet_id;
        r.weights = {cfg.w_relation, cfg.w_concept, cfg.w_text};
        for (auto [map, slot] : {std::pair{&rel, &r.components.relation}, std::pair{&con, &r.components.concept_score},
                                 std::pair{&txt, &r.components.text}}) {
            auto it = map->find(doc);
            if (it == map->end()) continue;
            *slot = it->second.value;
            r.matched.insert(r.matched.end(), it->second.matched.begin(), it->second.matched.end());
        }
        r.score = cfg.w_relation * r.components.relation + cfg.w_concept * r.components.concept_score +
                  cfg.w_text * r.components.text;
        if (r.score > 0.0) out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
}

RetrievalResult execute(const StructuredQuery& sq, const IndexSet& ix, const RetrievalConfig& cfg) {
    if (!ix.built()) throw Error(ErrorCode::IndexNotBuilt, "indexes are not built");
    if (cfg.limit == 0) throw Error(ErrorCode::InvalidArgument, "limit must be at least 1");

    RetrievalResult result;
    result.query = sq;
    result.results = score_query(sq, ix, cfg);
    if (result.results.size() > cfg.limit) result.results.resize(cfg.limit);

    const std::size_t wanted = std::min(cfg.min_results, cfg.limit);
    const IdfFn idf = [&ix](std::string_view term) { return ix.idf(term); };
    while (result.results.size() < wanted && result.relax_steps < cfg.max_relax_steps) {
        auto relaxed = relax(result.query, idf);
        if (!relaxed) break;
        result.query = std::move(*relaxed);
        ++result.relax_steps;

        std::vector<ScoredResult> fresh;
        for (auto& r : score_query(result.query, ix, cfg)) {
            auto it = std::find_if(result.results.begin(), result.results.end(),
                                   [&](const ScoredResult& kept) { return kept.snippet_id == r.snippet_id; });
            if (it == result.results.end()) {
                fresh.push_back(std::move(r));
            } else if (r.score > it->score) {
                *it = std::move(r);
            }
        }
        // fresh is already ranked; fill the remaining slots only
        const std::size_t room = cfg.limit - result.results.size();
        if (fresh.size() > room) fresh.resize(room);
        std::move(fresh.begin(), fresh.end(), std::back_inserter(result.results));
        std::sort(result.results.begin(), result.results.end(), ranks_before);
    }
    return result;
}

std::vector<ScoredResult> execute_text(std::string_view query, const IndexSet& ix, const RetrievalConfig& cfg) {
    if (!ix.built()) throw Error(ErrorCode::IndexNotBuilt, "indexes are not built");
    std::vector<std::string> terms;
    for (auto& tok : normalize(query)) {
        if (std::find(terms.begin(), terms.end(), tok.normalized) == terms.end()) terms.push_back(std::move(tok.normalized));
    }
    auto txt = text_evidence(terms, ix, cfg.bm25);
    std::vector<DocNum> docs;
    for (const auto& [doc, _] : txt) docs.push_back(doc);
    normalize_text(txt, docs);

    std::vector<ScoredResult> out;
    for (auto& [doc, ev] : txt) {
        ScoredResult r;
        r.snippet_id = ix.snippet(doc).snippet.snippet_id;
        r.weights = {cfg.w_relation, cfg.w_concept, cfg.w_text};
        r.components.text = ev.value;
        r.matched = std::move(ev.matched);
        r.score = cfg.w_text * ev.value;
        if (r.score > 0.0) out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), ranks_before);
    if (out.size() > cfg.limit) out.resize(cfg.limit);
    return out;
}

double explained_total(const ScoredResult& result) {
    ScoreComponents sum;
    for (const auto& m : result.matched) {
        switch (m.kind) {
            case MatchKind::Relation:
            case MatchKind::Structural: sum.relation += m.contribution; break;
            case MatchKind::Concept: sum.concept_score += m.contribution; break;
            case MatchKind::Term: sum.text += m.contribution; break;
        }
    }
    return result.weights.relation * sum.relation + result.weights.concept_score * sum.concept_score +
           result.weights.text * sum.text;
}

std::string explain(const ScoredResult& result) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << result.snippet_id << " score=" << result.score << "\n";

    auto section = [&](const char* name, double component, double weight, auto&& accept, auto&& describe) {
        bool any = false;
        for (const auto& m : result.matched) {
            if (!accept(m)) continue;
            if (!any) {
                out << "  " << name << ": " << weight << " x " << component << " = " << weight * component << "\n";
                any = true;
            }
            out << "    " << describe(m) << " +" << m.contribution << "\n";
        }
    };
    section(
        "relation index", result.components.relation, result.weights.relation,
        [](const MatchedElement& m) { return m.kind == MatchKind::Relation || m.kind == MatchKind::Structural; },
        [](const MatchedElement& m) {
            return std::string(m.kind == MatchKind::Relation ? "tagged " : "section heading ") + "(" + m.concept_id.value +
                   ", " + std::string(to_string(m.relation)) + ")";
        });
    section(
        "concept index", result.components.concept_score, result.weights.concept_score,
        [](const MatchedElement& m) { return m.kind == MatchKind::Concept; },
        [](const MatchedElement& m) { return m.concept_id.value + " in " + std::string(to_string(m.field)); });
    section(
        "text index", result.components.text, result.weights.text,
        [](const MatchedElement& m) { return m.kind == MatchKind::Term; },
        [](const MatchedElement& m) { return "term '" + m.term + "'"; });
    return out.str();
}

} // namespace focalmed
