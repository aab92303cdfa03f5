#include <random>

#include <gtest/gtest.h>

#include "focalmed/corpus_tagger.hpp"
#include "focalmed/errors.hpp"
#include "oracles.hpp"

using namespace focalmed;

namespace {

struct Fixture {
    KnowledgeGraph graph = load_kg(oracle::testdata("kg.jsonl"));
    Lexicon lexicon = build_lexicon(graph);
    IntentPhraseTable intents = IntentPhraseTable::defaults();

    TaggedSnippet tag(const Snippet& s) const { return tag_snippet(s, graph, lexicon, intents); }
};

const Fixture& fx() {
    static const Fixture f;
    return f;
}

Snippet snippet(std::string id, std::string doc, std::string title, std::vector<std::string> path,
                std::vector<std::string> sentences = {}) {
    return {std::move(id), std::move(doc), std::move(title), std::move(path), std::move(sentences)};
}

// Leftmost-longest occurrences of any table phrase, checked phrase by phrase.
template <typename Phrases>
std::vector<std::pair<std::size_t, std::string>> occurrences(const std::vector<std::string>& toks,
                                                              const Phrases& phrases) {
    std::vector<std::pair<std::size_t, std::string>> out;
    std::size_t i = 0;
    while (i < toks.size()) {
        std::string best;
        std::size_t best_len = 0;
        for (const auto& [phrase, _] : phrases) {
            std::vector<std::string> parts;
            for (const auto& t : normalize(phrase)) parts.push_back(t.normalized);
            if (parts.size() <= best_len || i + parts.size() > toks.size()) continue;
            if (std::equal(parts.begin(), parts.end(), toks.begin() + static_cast<std::ptrdiff_t>(i))) {
                best = phrase;
                best_len = parts.size();
            }
        }
        if (best_len == 0) {
            ++i;
        } else {
            out.emplace_back(i, best);
            i += best_len;
        }
    }
    return out;
}

TaggedSnippet oracle_tag(const Snippet& s) {
    TaggedSnippet out;
    out.snippet = s;
    auto toks = [](const std::string& text) {
        std::vector<std::string> v;
        for (const auto& t : normalize(text)) v.push_back(t.normalized);
        return v;
    };
    auto concepts_in = [&](const std::string& text, Field field, std::size_t pos) {
        for (const auto& [at, phrase] : occurrences(toks(text), fx().lexicon.entries()))
            for (const auto& e : fx().lexicon.entries().at(phrase)) out.concept_tags.push_back({e.concept_id, field, pos});
    };
    concepts_in(s.doc_title, Field::DocTitle, 0);
    for (std::size_t i = 0; i < s.section_path.size(); ++i)
        concepts_in(s.section_path[i], i + 1 == s.section_path.size() ? Field::SectionTitle : Field::Breadcrumb, i);
    for (std::size_t i = 0; i < s.sentences.size(); ++i) concepts_in(s.sentences[i], Field::Sentence, i);
    std::sort(out.concept_tags.begin(), out.concept_tags.end());
    out.concept_tags.erase(std::unique(out.concept_tags.begin(), out.concept_tags.end()), out.concept_tags.end());

    std::set<RelationTag> rel;
    for (const auto& heading : s.section_path)
        for (const auto& [at, phrase] : occurrences(toks(heading), fx().intents.entries()))
            for (const auto& ct : out.concept_tags)
                if (ct.field == Field::DocTitle || ct.field == Field::Breadcrumb)
                    rel.insert({ct.concept_id, *fx().intents.lookup(phrase)});
    out.relation_tags.assign(rel.begin(), rel.end());
    return out;
}

Snippet random_snippet(std::mt19937_64& rng, int id) {
    static const std::vector<std::string> parts = {
        "asthma", "Bronchial Asthma", "COVID", "covid-19", "Remdesivir", "temozolomide", "status asthmaticus",
        "COPD", "chronic obstructive pulmonary disease", "Differential Diagnosis", "diagnosis", "Dosage", "dosing",
        "Side Effects", "adverse reactions", "treatment", "drug of choice", "causes", "overview", "in adults", "of",
        "coronavirus disease 2019", "status", "chronic"};
    auto text = [&] {
        std::string t;
        for (int k = std::uniform_int_distribution<int>(1, 3)(rng); k > 0; --k)
            t += parts[std::uniform_int_distribution<std::size_t>(0, parts.size() - 1)(rng)] + " ";
        return t;
    };
    Snippet s;
    s.snippet_id = "r" + std::to_string(id);
    s.doc_id = "d" + std::to_string(id % 7);
    s.doc_title = text();
    const int path = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int i = 0; i < path; ++i) s.section_path.push_back(text());
    for (int i = std::uniform_int_distribution<int>(0, 4 - path)(rng); i > 0; --i) s.sentences.push_back(text());
    return s;
}

std::vector<ManualTag> manual_of(std::initializer_list<std::tuple<const char*, const char*, RelationType>> tags) {
    std::vector<ManualTag> out;
    for (const auto& [doc, id, rel] : tags) out.push_back({doc, ConceptId(id), rel});
    return out;
}

TaggedSnippet with_relations(std::string id, std::string doc, std::vector<RelationTag> rels) {
    TaggedSnippet t;
    t.snippet = snippet(std::move(id), std::move(doc), "t", {});
    t.relation_tags = std::move(rels);
    return t;
}

} // namespace

TEST(TagSnippet, AsthmaDifferentialDiagnosis) {
    const auto t = fx().tag(snippet("s", "d", "Asthma", {"Differential Diagnosis"}));
    EXPECT_EQ(t.concept_tags, (std::vector<ConceptTag>{{ConceptId("C001"), Field::DocTitle, 0}}));
    EXPECT_EQ(t.relation_tags, (std::vector<RelationTag>{{ConceptId("C001"), RelationType::HasDifferentialDiagnosis}}));
}

TEST(TagSnippet, RemdesivirDosage) {
    const auto t = fx().tag(snippet("s", "d", "Remdesivir", {"Dosage"}, {"covid dosing guidance"}));
    EXPECT_EQ(t.relation_tags, (std::vector<RelationTag>{{ConceptId("C004"), RelationType::HasDosage}}));
    EXPECT_NE(std::find(t.concept_tags.begin(), t.concept_tags.end(), ConceptTag{ConceptId("C003"), Field::Sentence, 0}),
              t.concept_tags.end());
}

TEST(TagSnippet, NothingToTag) {
    const auto t = fx().tag(snippet("s", "d", "Hospital Parking", {"Visitor Hours"}, {"Gates open at nine."}));
    EXPECT_TRUE(t.concept_tags.empty());
    EXPECT_TRUE(t.relation_tags.empty());
}

TEST(TagSnippet, SentenceConceptsNeverCarryRelations) {
    const auto t = fx().tag(snippet("s", "d", "Guidelines", {"Treatment"}, {"asthma responds to steroids"}));
    EXPECT_EQ(t.concept_tags.size(), 1u);
    EXPECT_TRUE(t.relation_tags.empty());
}

TEST(TagSnippet, MatchesExhaustiveOracle) {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto s = random_snippet(rng, trial);
        ASSERT_EQ(fx().tag(s), oracle_tag(s)) << s.doc_title;
    }
}

TEST(TagSnippet, RelationConceptsComeFromTitleOrBreadcrumb) {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto t = fx().tag(random_snippet(rng, trial));
        for (const auto& r : t.relation_tags) {
            EXPECT_TRUE(std::any_of(t.concept_tags.begin(), t.concept_tags.end(), [&](const ConceptTag& c) {
                return c.concept_id == r.concept_id && (c.field == Field::DocTitle || c.field == Field::Breadcrumb);
            }));
        }
    }
}

TEST(TagCorpus, FixtureCountsAreSumsOfSnippets) {
    const auto corpus = load_corpus(oracle::testdata("corpus.jsonl"));
    RuleBasedTagger tagger(fx().graph, fx().lexicon, fx().intents);
    const auto r = tag_corpus(corpus, tagger);
    ASSERT_EQ(r.tagged.size(), corpus.size());
    std::map<Field, std::size_t> counts;
    std::size_t rels = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto one = fx().tag(corpus[i]);
        EXPECT_EQ(r.tagged[i], one);
        for (const auto& c : one.concept_tags) ++counts[c.field];
        rels += one.relation_tags.size();
    }
    for (auto f : kAllFields) EXPECT_EQ(r.concept_tag_counts.at(f), counts[f]);
    EXPECT_EQ(r.relation_tag_count, rels);
}

TEST(TagCorpus, EmptyAndDuplicate) {
    RuleBasedTagger tagger(fx().graph, fx().lexicon, fx().intents);
    EXPECT_TRUE(tag_corpus({}, tagger).tagged.empty());
    const std::vector<Snippet> dup = {snippet("a", "d", "x", {}), snippet("a", "d", "y", {})};
    try {
        tag_corpus(dup, tagger);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DuplicateSnippetId);
    }
}

TEST(TagCorpus, ShuffleOnlyPermutes) {
    std::mt19937_64 rng(59);
    std::vector<Snippet> corpus;
    for (int i = 0; i < 200; ++i) corpus.push_back(random_snippet(rng, i));
    RuleBasedTagger tagger(fx().graph, fx().lexicon, fx().intents);
    const auto base = tag_corpus(corpus, tagger);
    std::map<std::string, TaggedSnippet> by_id;
    for (const auto& t : base.tagged) by_id[t.snippet.snippet_id] = t;

    std::shuffle(corpus.begin(), corpus.end(), rng);
    const auto shuffled = tag_corpus(corpus, tagger, 4);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        EXPECT_EQ(shuffled.tagged[i].snippet.snippet_id, corpus[i].snippet_id);
        EXPECT_EQ(shuffled.tagged[i], by_id.at(corpus[i].snippet_id));
    }
    EXPECT_EQ(shuffled.concept_tag_counts, base.concept_tag_counts);
}

TEST(TagCorpus, ThreadCountDoesNotMatter) {
    const auto corpus = load_corpus(oracle::testdata("corpus.jsonl"));
    RuleBasedTagger tagger(fx().graph, fx().lexicon, fx().intents);
    const auto one = tag_corpus(corpus, tagger, 1);
    for (unsigned threads : {2u, 3u, 8u, 64u}) EXPECT_EQ(tag_corpus(corpus, tagger, threads).tagged, one.tagged);
}

TEST(TaggedJsonl, RoundTrips) {
    const auto corpus = load_corpus(oracle::testdata("corpus.jsonl"));
    RuleBasedTagger tagger(fx().graph, fx().lexicon, fx().intents);
    const auto tagged = tag_corpus(corpus, tagger).tagged;
    EXPECT_EQ(parse_tagged(to_jsonl(tagged)), tagged);
}

TEST(CorpusFile, Errors) {
    auto code = [](std::string_view text) {
        try {
            parse_corpus(text);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    EXPECT_EQ(code(R"({"snippet_id":"a","doc_id":"d"})"), ErrorCode::MalformedRecord);
    EXPECT_EQ(code(R"({"snippet_id":"a","doc_id":"d","doc_title":"t","sentences":"x"})"), ErrorCode::MalformedRecord);
    EXPECT_EQ(code("[1,2]"), ErrorCode::MalformedRecord);
    EXPECT_EQ(parse_corpus("\n\n").size(), 0u);
}

TEST(Coverage, HalfOfTwoManualTags) {
    const std::vector<TaggedSnippet> autos = {
        with_relations("s1", "d1", {{ConceptId("C001"), RelationType::HasDifferentialDiagnosis}})};
    const auto manual = manual_of({{"d1", "C001", RelationType::HasDifferentialDiagnosis},
                                   {"d1", "C001", RelationType::HasTreatment}});
    const auto r = coverage(autos, manual);
    EXPECT_EQ(r.per_doc.at("d1"), 0.5);
    EXPECT_EQ(r.median, 0.5);
    EXPECT_EQ(r.precision, 1.0);
}

TEST(Coverage, IdentityIsOne) {
    const std::vector<TaggedSnippet> autos = {
        with_relations("s1", "d1", {{ConceptId("C001"), RelationType::HasTreatment}}),
        with_relations("s2", "d1", {{ConceptId("C005"), RelationType::HasTreatment}})};
    const auto manual = manual_of({{"d1", "C001", RelationType::HasTreatment}, {"d1", "C005", RelationType::HasTreatment}});
    const auto r = coverage(autos, manual);
    EXPECT_EQ(r.per_doc.at("d1"), 1.0);
    EXPECT_EQ(r.median, 1.0);
}

TEST(Coverage, EvenMedianAveragesMiddlePair) {
    const std::vector<TaggedSnippet> autos = {
        with_relations("a", "d1", {{ConceptId("X"), RelationType::HasCause}}),
        with_relations("b", "d2", {}),
        with_relations("c", "d3", {{ConceptId("X"), RelationType::HasCause}, {ConceptId("Y"), RelationType::HasCause}}),
        with_relations("d", "d4", {{ConceptId("Y"), RelationType::HasDosage}}),
        with_relations("e", "d5", {})};
    const auto manual = manual_of({{"d1", "X", RelationType::HasCause},                                       // 1
                                   {"d2", "X", RelationType::HasCause},                                       // 0
                                   {"d3", "X", RelationType::HasCause}, {"d3", "Z", RelationType::HasCause},  // 1/2
                                   {"d3", "Y", RelationType::HasCause}, {"d3", "W", RelationType::HasCause},
                                   {"d4", "Y", RelationType::HasDosage}, {"d4", "Y", RelationType::HasCause},
                                   {"d4", "Q", RelationType::HasCause}});                                     // 1/3
    const auto r = coverage(autos, manual);
    EXPECT_EQ(r.per_doc.size(), 4u);  // d5 has no manual tags
    EXPECT_EQ(r.per_doc.at("d1"), 1.0);
    EXPECT_EQ(r.per_doc.at("d2"), 0.0);
    EXPECT_EQ(r.per_doc.at("d3"), 0.5);
    EXPECT_EQ(r.per_doc.at("d4"), 1.0 / 3.0);
    EXPECT_EQ(r.median, (1.0 / 3.0 + 0.5) / 2.0);
    EXPECT_EQ(r.precision, 4.0 / 4.0);
}

TEST(Coverage, Errors) {
    const std::vector<TaggedSnippet> autos = {with_relations("s1", "d1", {})};
    try {
        coverage(autos, manual_of({{"d9", "C001", RelationType::HasTreatment}}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownDocId);
    }
    try {
        coverage(autos, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoJudgedDocs);
    }
}

TEST(Coverage, ValuesInUnitIntervalAndSelfCoverageIsOne) {
    std::mt19937_64 rng(61);
    const auto corpus = [&] {
        std::vector<Snippet> c;
        for (int i = 0; i < 120; ++i) c.push_back(random_snippet(rng, i));
        return c;
    }();
    RuleBasedTagger tagger(fx().graph, fx().lexicon, fx().intents);
    const auto tagged = tag_corpus(corpus, tagger).tagged;
    std::vector<ManualTag> self;
    for (const auto& t : tagged)
        for (const auto& r : t.relation_tags) self.push_back({t.snippet.doc_id, r.concept_id, r.relation_type});
    ASSERT_FALSE(self.empty());
    const auto r = coverage(tagged, self);
    for (const auto& [doc, v] : r.per_doc) EXPECT_EQ(v, 1.0) << doc;
    EXPECT_EQ(r.median, 1.0);

    std::vector<ManualTag> noisy = self;
    for (int i = 0; i < 50; ++i)
        noisy.push_back({"d" + std::to_string(i % 7), ConceptId("C00" + std::to_string(i % 6 + 1)), RelationType::HasCause});
    for (const auto& [doc, v] : coverage(tagged, noisy).per_doc) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Coverage, FixtureMatchesHandCount) {
    const auto corpus = load_corpus(oracle::testdata("corpus.jsonl"));
    RuleBasedTagger tagger(fx().graph, fx().lexicon, fx().intents);
    const auto r = coverage(tag_corpus(corpus, tagger).tagged, load_manual_tags(oracle::testdata("manual_tags.jsonl")));
    EXPECT_EQ(r.per_doc.at("d01"), 1.0);
    EXPECT_EQ(r.per_doc.at("d03"), 0.0);
    EXPECT_EQ(r.per_doc.at("d04"), 1.0);
    EXPECT_EQ(r.per_doc.at("d05"), 2.0 / 3.0);
    EXPECT_EQ(r.per_doc.at("d06"), 0.5);
    EXPECT_EQ(r.median, 2.0 / 3.0);
}
