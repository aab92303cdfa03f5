#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "focalmed/kg_store.hpp"
#include "focalmed/lexicon.hpp"
#include "focalmed/text.hpp"
#include "oracles.hpp"

using namespace focalmed;

namespace {

std::vector<std::string> words(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& t : normalize(text)) out.push_back(t.normalized);
    return out;
}

const KnowledgeGraph& fixture_graph() {
    static const auto g = load_kg(oracle::testdata("kg.jsonl"));
    return g;
}

// Full Damerau-Levenshtein table with last-row bookkeeping (Lowrance-Wagner).
int dl_dp(const std::u32string& a, const std::u32string& b) {
    const std::size_t inf = a.size() + b.size();
    std::vector<std::vector<std::size_t>> d(a.size() + 2, std::vector<std::size_t>(b.size() + 2, 0));
    d[0][0] = inf;
    for (std::size_t i = 0; i <= a.size(); ++i) {
        d[i + 1][0] = inf;
        d[i + 1][1] = i;
    }
    for (std::size_t j = 0; j <= b.size(); ++j) {
        d[0][j + 1] = inf;
        d[1][j + 1] = j;
    }
    std::map<char32_t, std::size_t> last_row;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t last_match_col = 0;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t i1 = last_row.count(b[j - 1]) ? last_row[b[j - 1]] : 0;
            const std::size_t j1 = last_match_col;
            std::size_t cost = 1;
            if (a[i - 1] == b[j - 1]) {
                cost = 0;
                last_match_col = j;
            }
            d[i + 1][j + 1] = std::min({d[i][j] + cost, d[i + 1][j] + 1, d[i][j + 1] + 1,
                                        d[i1][j1] + (i - i1 - 1) + 1 + (j - j1 - 1)});
        }
        last_row[a[i - 1]] = i;
    }
    return static_cast<int>(d[a.size() + 1][b.size() + 1]);
}

Token token(const std::string& s) { return normalize(s).at(0); }

} // namespace

TEST(Normalize, Examples) {
    EXPECT_EQ(words("Asthma, differential Diagnosis"), (std::vector<std::string>{"asthma", "differential", "diagnosis"}));
    EXPECT_EQ(words("COVID-19 remdesivir"), (std::vector<std::string>{"covid-19", "remdesivir"}));
    EXPECT_TRUE(normalize("").empty());
    EXPECT_TRUE(normalize("  ,,  ").empty());
    EXPECT_EQ(words("-leading trailing- a--b x-"), (std::vector<std::string>{"leading", "trailing", "a", "b", "x"}));
}

TEST(Normalize, OffsetsPointAtSurface) {
    const std::string text = "  Bronchial, ASTHMA!";
    for (const auto& t : normalize(text)) EXPECT_EQ(text.substr(t.begin, t.end - t.begin), t.surface);
}

TEST(Normalize, KeepsUtf8WordsWhole) {
    EXPECT_EQ(words("Sjögren syndrome"), (std::vector<std::string>{"sjögren", "syndrome"}));
    EXPECT_EQ(utf8_length("sjögren"), 7u);
}

TEST(Normalize, IdempotentOnRandomText) {
    std::mt19937_64 rng(3);
    const std::string alphabet = "aZ09 -,.;-_/()\tQx\xc3\xa9";
    for (int trial = 0; trial < 2000; ++trial) {
        std::string text;
        for (int i = std::uniform_int_distribution<int>(0, 30)(rng); i > 0; --i)
            text.push_back(alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)]);
        const auto once = normalize(text);
        std::string joined;
        for (const auto& t : once) joined += t.normalized + " ";
        const auto twice = normalize(joined);
        ASSERT_EQ(once.size(), twice.size()) << text;
        for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].normalized, twice[i].normalized);
    }
}

TEST(BuildLexicon, FixtureEntryCountMatchesEnumeration) {
    // Enumerate labels and synonyms straight from the file.
    std::ifstream in(oracle::testdata("kg.jsonl"));
    std::set<std::string> phrases;
    for (std::string line; std::getline(in, line);) {
        const auto rec = nlohmann::json::parse(line);
        if (rec["kind"] != "concept") continue;
        phrases.insert(normalize_phrase(rec["preferred_label"].get<std::string>()));
        for (const auto& s : rec["synonyms"]) phrases.insert(normalize_phrase(s.get<std::string>()));
    }
    const auto lex = build_lexicon(fixture_graph());
    EXPECT_EQ(lex.size(), phrases.size());
    EXPECT_EQ(lex.size(), 10u);
    for (const auto& p : phrases) EXPECT_NE(lex.lookup(p), nullptr) << p;
    EXPECT_EQ(lex.max_phrase_len(), 4u);
}

TEST(BuildLexicon, EmptyGraph) { EXPECT_TRUE(build_lexicon(KnowledgeGraph{}).empty()); }

TEST(BuildLexicon, SharedSynonymListsBothInIdOrder) {
    const auto g = KnowledgeGraph::build({{ConceptId("C9"), "sars", {"covid"}, SemanticType::Disease},
                                          {ConceptId("C3"), "covid-19", {"covid"}, SemanticType::Disease}},
                                         {});
    const auto lex = build_lexicon(g);
    const auto* e = lex.lookup("covid");
    ASSERT_NE(e, nullptr);
    ASSERT_EQ(e->size(), 2u);
    EXPECT_EQ((*e)[0].concept_id, ConceptId("C3"));
    EXPECT_EQ((*e)[1].concept_id, ConceptId("C9"));
}

TEST(Recognize, Examples) {
    const auto lex = build_lexicon(fixture_graph());
    const auto m = recognize(normalize("bronchial asthma treatment"), lex);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0], (Mention{ConceptId("C001"), 0, 2, "bronchial asthma", false}));

    const auto m2 = recognize(normalize("covid remdesivir dosage"), lex);
    ASSERT_EQ(m2.size(), 2u);
    EXPECT_EQ(m2[0].concept_id, ConceptId("C003"));
    EXPECT_EQ(m2[0].begin, 0u);
    EXPECT_EQ(m2[0].end, 1u);
    EXPECT_EQ(m2[1].concept_id, ConceptId("C004"));
    EXPECT_EQ(m2[1].begin, 1u);
    EXPECT_EQ(m2[1].end, 2u);

    EXPECT_TRUE(recognize(normalize("fever of unknown origin"), lex).empty());
}

TEST(Recognize, BronchialAsthmaIsTheUniqueMaximalSpan) {
    // Every span [i, j) whose text is a lexicon phrase.
    const auto lex = build_lexicon(fixture_graph());
    const auto toks = words("bronchial asthma treatment");
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t i = 0; i < toks.size(); ++i)
        for (std::size_t j = i + 1; j <= toks.size(); ++j) {
            std::string phrase;
            for (std::size_t k = i; k < j; ++k) phrase += (k > i ? " " : "") + toks[k];
            if (lex.lookup(phrase)) spans.emplace_back(i, j);
        }
    ASSERT_EQ(spans.size(), 2u);  // "bronchial asthma" and "asthma"
    const auto longest = *std::max_element(spans.begin(), spans.end(),
                                           [](auto a, auto b) { return a.second - a.first < b.second - b.first; });
    EXPECT_EQ(longest, std::make_pair(std::size_t{0}, std::size_t{2}));
}

TEST(Recognize, SpansDisjointAndSortedOnRandomTokens) {
    const auto lex = build_lexicon(fixture_graph());
    const std::vector<std::string> vocab = {"asthma", "bronchial", "covid", "coronavirus", "disease", "2019",
                                            "copd",   "chronic",   "obstructive", "pulmonary", "status", "asthmaticus",
                                            "of",     "treatment", "remdesivir"};
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 2000; ++trial) {
        std::string text;
        for (int i = std::uniform_int_distribution<int>(0, 12)(rng); i > 0; --i)
            text += vocab[std::uniform_int_distribution<std::size_t>(0, vocab.size() - 1)(rng)] + " ";
        const auto toks = normalize(text);
        const auto m = recognize(toks, lex);
        for (std::size_t i = 0; i < m.size(); ++i) {
            EXPECT_LT(m[i].begin, m[i].end);
            EXPECT_LE(m[i].end, toks.size());
            if (i == 0) continue;
            const bool same_span = m[i].begin == m[i - 1].begin && m[i].end == m[i - 1].end;
            EXPECT_TRUE(same_span || m[i].begin >= m[i - 1].end) << text;
        }
        EXPECT_EQ(m, recognize(toks, lex));
    }
}

TEST(Recognize, LongestMatchDominatesPrefixes) {
    std::mt19937_64 rng(9);
    const std::vector<std::string> vocab = {"a", "b", "c", "d"};
    for (int trial = 0; trial < 500; ++trial) {
        const int len = std::uniform_int_distribution<int>(2, 5)(rng);
        std::vector<std::string> phrase;
        for (int i = 0; i < len; ++i) phrase.push_back(vocab[std::uniform_int_distribution<std::size_t>(0, 3)(rng)]);
        const int prefix = std::uniform_int_distribution<int>(1, len - 1)(rng);
        auto join = [](const std::vector<std::string>& w, std::size_t n) {
            std::string s;
            for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + w[i];
            return s;
        };
        Lexicon lex;
        lex.add(join(phrase, static_cast<std::size_t>(len)), ConceptId("LONG"), true);
        lex.add(join(phrase, static_cast<std::size_t>(prefix)), ConceptId("PREFIX"), true);
        const auto m = recognize(normalize("x " + join(phrase, static_cast<std::size_t>(len)) + " y"), lex);
        ASSERT_FALSE(m.empty());
        EXPECT_EQ(m[0].concept_id, ConceptId("LONG"));
        EXPECT_EQ(m[0].begin, 1u);
        EXPECT_EQ(m[0].end, static_cast<std::size_t>(len) + 1);
    }
}

TEST(Recognize, AvailabilityMaskBlocksSpans) {
    const auto lex = build_lexicon(fixture_graph());
    const auto toks = normalize("bronchial asthma");
    const auto m = recognize(toks, lex, {false, true});
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].begin, 1u);
    EXPECT_EQ(m[0].matched_text, "asthma");
}

TEST(Correct, Budget) {
    EXPECT_EQ(correction_budget(4), 0);
    EXPECT_EQ(correction_budget(5), 1);
    EXPECT_EQ(correction_budget(8), 1);
    EXPECT_EQ(correction_budget(9), 2);
}

TEST(Correct, Examples) {
    const auto lex = build_lexicon(fixture_graph());
    EXPECT_EQ(correct(token("astma"), lex), (Correction{"asthma", 1}));
    EXPECT_EQ(correct(token("remdesivor"), lex), (Correction{"remdesivir", 1}));
    EXPECT_EQ(correct(token("xyz"), lex), std::nullopt);
    EXPECT_EQ(correct(token("copd"), lex), std::nullopt);  // length 4: no budget
}

TEST(Correct, TiesGoToTheLexicographicallySmallerPhrase) {
    Lexicon lex;
    lex.add("bcdef", ConceptId("B"), true);
    lex.add("acdef", ConceptId("A"), true);
    EXPECT_EQ(correct(token("xcdef"), lex), (Correction{"acdef", 1}));
}

TEST(DamerauLevenshtein, MatchesBfsOracleOnSmallStrings) {
    std::mt19937_64 rng(17);
    const std::u32string alphabet = U"abc";
    for (int trial = 0; trial < 400; ++trial) {
        auto gen = [&] {
            std::u32string s;
            for (int i = std::uniform_int_distribution<int>(0, 5)(rng); i > 0; --i)
                s.push_back(alphabet[std::uniform_int_distribution<std::size_t>(0, 2)(rng)]);
            return s;
        };
        const auto a = gen();
        const auto b = gen();
        ASSERT_EQ(damerau_levenshtein(a, b), oracle::edit_distance_bfs(a, b));
    }
    EXPECT_EQ(damerau_levenshtein(std::string_view("ca"), std::string_view("abc")), 2);
}

TEST(DamerauLevenshtein, AgreesWithTableOracle) {
    std::mt19937_64 rng(19);
    const std::u32string alphabet = U"abcdeé";
    for (int trial = 0; trial < 3000; ++trial) {
        auto gen = [&] {
            std::u32string s;
            for (int i = std::uniform_int_distribution<int>(0, 10)(rng); i > 0; --i)
                s.push_back(alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)]);
            return s;
        };
        const auto a = gen();
        const auto b = gen();
        ASSERT_EQ(damerau_levenshtein(a, b), dl_dp(a, b));
    }
}

TEST(Correct, EquivalentToBruteForceOverFixtureEntries) {
    const auto lex = build_lexicon(fixture_graph());
    std::mt19937_64 rng(23);
    const std::string letters = "abcdefghijklmnopqrstuvwxyz";
    for (int trial = 0; trial < 3000; ++trial) {
        const auto& base = lex.single_token_phrases()[std::uniform_int_distribution<std::size_t>(
            0, lex.single_token_phrases().size() - 1)(rng)];
        std::string s = base;
        for (int e = std::uniform_int_distribution<int>(1, 3)(rng); e > 0 && !s.empty(); --e) {
            const auto pos = std::uniform_int_distribution<std::size_t>(0, s.size() - 1)(rng);
            const char c = letters[std::uniform_int_distribution<std::size_t>(0, 25)(rng)];
            switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
                case 0: s.insert(pos, 1, c); break;
                case 1: s.erase(pos, 1); break;
                case 2: s[pos] = c; break;
                default:
                    if (pos + 1 < s.size()) std::swap(s[pos], s[pos + 1]);
            }
        }
        if (s.empty() || lex.lookup(s)) continue;
        const auto toks = normalize(s);
        if (toks.size() != 1) continue;

        std::optional<Correction> expected;
        const int budget = correction_budget(utf8_length(toks[0].normalized));
        for (const auto& cand : lex.single_token_phrases()) {
            const int d = dl_dp(utf8_decode(toks[0].normalized), utf8_decode(cand));
            if (budget == 0 || d > budget) continue;
            if (!expected || d < expected->distance || (d == expected->distance && cand < expected->phrase))
                expected = Correction{cand, d};
        }
        const auto got = correct(toks[0], lex);
        ASSERT_EQ(got, expected) << s;
        if (got) EXPECT_LE(got->distance, budget);
    }
}
