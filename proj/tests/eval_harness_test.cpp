#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

#include "focalmed/errors.hpp"
#include "focalmed/eval_harness.hpp"
#include "oracles.hpp"

using namespace focalmed;

namespace {

std::vector<Judgment> judged(const std::vector<int>& grades) {
    std::vector<Judgment> out;
    for (std::size_t i = 0; i < grades.size(); ++i) out.push_back({"q", "s" + std::to_string(i), grades[i]});
    return out;
}

std::vector<std::string> ranking_of(const std::vector<std::size_t>& order) {
    std::vector<std::string> out;
    for (auto i : order) out.push_back("s" + std::to_string(i));
    return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::Io;
}

// Nearest rank computed by counting: the smallest value with at least p% of samples at or below it.
double nearest_rank_by_count(const std::vector<double>& values, double p) {
    for (double candidate : [&] { auto v = values; std::sort(v.begin(), v.end()); return v; }()) {
        const auto at_or_below = std::count_if(values.begin(), values.end(), [&](double x) { return x <= candidate; });
        if (static_cast<double>(at_or_below) * 100.0 >= p * static_cast<double>(values.size())) return candidate;
    }
    return *std::max_element(values.begin(), values.end());
}

} // namespace

TEST(Ndcg, Examples) {
    const auto j = judged({1, 0, 1});
    const auto r = ranking_of({0, 1, 2});
    EXPECT_NEAR(ndcg_at_k(r, j), (1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0)), 1e-12);
    EXPECT_NEAR(ndcg_at_k(r, j), 0.9197, 1e-4);
    EXPECT_EQ(ndcg_at_k(ranking_of({0, 2, 1}), j), 1.0);
    EXPECT_EQ(ndcg_at_k(std::vector<std::string>{"nobody"}, j), 0.0);
    EXPECT_EQ(ndcg_at_k({}, j), 0.0);
}

TEST(Ndcg, Errors) {
    EXPECT_EQ(code_of([] { ndcg_at_k(ranking_of({0}), judged({0, 0})); }), ErrorCode::NoRelevantJudgments);
    EXPECT_EQ(code_of([] { ndcg_at_k(ranking_of({0}), judged({1}), 0); }), ErrorCode::InvalidArgument);
}

TEST(Ndcg, CutoffIgnoresLaterRanks) {
    const auto j = judged({0, 0, 3});
    EXPECT_EQ(ndcg_at_k(ranking_of({0, 1, 2}), j, 2), 0.0);
    EXPECT_GT(ndcg_at_k(ranking_of({0, 1, 2}), j, 3), 0.0);
}

TEST(Ndcg, EveryPermutationMatchesFormula) {
    std::mt19937_64 rng(107);
    for (std::size_t n = 1; n <= 6; ++n) {
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<int> grades(n);
            for (auto& g : grades) g = std::uniform_int_distribution<int>(0, 3)(rng);
            grades[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = std::uniform_int_distribution<int>(1, 3)(rng);
            const auto j = judged(grades);
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            do {
                std::vector<int> ranked;
                for (auto i : order) ranked.push_back(grades[i]);
                for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{10}})
                    ASSERT_NEAR(ndcg_at_k(ranking_of(order), j, k), oracle::ndcg(ranked, grades, k), 1e-9);
            } while (std::next_permutation(order.begin(), order.end()));
        }
    }
}

TEST(Ndcg, IdealOrderIsExactlyOne) {
    std::mt19937_64 rng(109);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 15)(rng);
        std::vector<int> grades(n);
        for (auto& g : grades) g = std::uniform_int_distribution<int>(0, 3)(rng);
        grades[0] = 3;
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return grades[a] > grades[b]; });
        EXPECT_EQ(ndcg_at_k(ranking_of(order), judged(grades)), 1.0);
    }
}

TEST(Ndcg, PromotingTheBetterResultNeverHurts) {
    std::mt19937_64 rng(113);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
        std::vector<int> grades(n);
        for (auto& g : grades) g = std::uniform_int_distribution<int>(0, 3)(rng);
        grades[0] = std::max(grades[0], 1);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        auto i = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
        auto k = std::uniform_int_distribution<std::size_t>(i + 1, n - 1)(rng);
        const bool promotes = grades[order[k]] > grades[order[i]];
        const auto before = ndcg_at_k(ranking_of(order), judged(grades));
        std::swap(order[i], order[k]);
        const auto after = ndcg_at_k(ranking_of(order), judged(grades));
        if (promotes)
            EXPECT_GE(after, before - 1e-12);
        else
            EXPECT_LE(after, before + 1e-12);
    }
}

TEST(GoldSet, Validation) {
    EXPECT_EQ(code_of([] { GoldSet::from_judgments({{"q", "a", 4}}); }), ErrorCode::MalformedRecord);
    EXPECT_EQ(code_of([] { GoldSet::from_judgments({{"q", "a", -1}}); }), ErrorCode::MalformedRecord);
    EXPECT_EQ(code_of([] { GoldSet::from_judgments({{"q", "a", 1}, {"q", "a", 2}}); }), ErrorCode::MalformedRecord);
    EXPECT_EQ(code_of([] { GoldSet::from_judgments({{"q", "a", 1}, {"r", "a", 0}}); }), ErrorCode::NoRelevantJudgments);
    const auto g = GoldSet::from_judgments({{"z", "a", 1}, {"b", "a", 2}, {"z", "c", 0}});
    EXPECT_EQ(g.queries(), (std::vector<std::string>{"z", "b"}));
    EXPECT_EQ(g.judgments("z").size(), 2u);
    EXPECT_TRUE(g.judgments("missing").empty());
}

TEST(GoldSet, FileErrorsCarryLineNumbers) {
    try {
        parse_gold("{\"query\":\"q\",\"snippet_id\":\"a\",\"grade\":1}\n{\"query\":\"q\",\"grade\":1}\n");
        FAIL();
    } catch (const RecordError& e) {
        EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
        EXPECT_EQ(e.line(), 2u);
    }
    const auto g = load_gold(oracle::testdata("gold.jsonl"));
    EXPECT_GE(g.size(), 10u);
}

TEST(Evaluate, FixtureFullModeBeatsTextBaseline) {
    const auto engine = oracle::fixture_engine();
    const auto gold = load_gold(oracle::testdata("gold.jsonl"));
    const auto full = evaluate(EngineMode::Full, gold, *engine);
    const auto text = evaluate(EngineMode::TextOnly, gold, *engine);
    ASSERT_EQ(full.per_query.size(), gold.size());
    double sum = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        EXPECT_EQ(full.per_query[i].first, gold.queries()[i]);
        EXPECT_GE(full.per_query[i].second, 0.0);
        EXPECT_LE(full.per_query[i].second, 1.0);
        sum += full.per_query[i].second;
    }
    EXPECT_NEAR(full.mean_ndcg, sum / static_cast<double>(gold.size()), 1e-12);
    EXPECT_GE(full.mean_ndcg - text.mean_ndcg, 0.10) << full.mean_ndcg << " vs " << text.mean_ndcg;
}

TEST(Evaluate, PerQueryValuesMatchRecomputation) {
    const auto engine = oracle::fixture_engine();
    const auto gold = load_gold(oracle::testdata("gold.jsonl"));
    const auto report = evaluate(EngineMode::Full, gold, *engine);
    for (const auto& [q, value] : report.per_query) {
        std::vector<int> ranked;
        for (const auto& r : engine->search(q, EngineMode::Full, 10).results) {
            int grade = 0;
            for (const auto& j : gold.judgments(q))
                if (j.snippet_id == r.snippet_id) grade = j.grade;
            ranked.push_back(grade);
        }
        std::vector<int> all;
        for (const auto& j : gold.judgments(q)) all.push_back(j.grade);
        EXPECT_NEAR(value, oracle::ndcg(ranked, all, 10), 1e-9) << q;
    }
}

TEST(Evaluate, TextBaselineIgnoresTheGraph) {
    // Same corpus and index, graph swapped for an empty one.
    const auto engine = oracle::fixture_engine();
    const Engine blind(std::make_shared<const KnowledgeGraph>(), engine->tables(), engine->settings(),
                       std::shared_ptr<const IndexSet>(engine, engine->indexes()));
    const auto gold = load_gold(oracle::testdata("gold.jsonl"));
    const auto a = evaluate(EngineMode::TextOnly, gold, *engine);
    const auto b = evaluate(EngineMode::TextOnly, gold, blind);
    EXPECT_EQ(a.per_query, b.per_query);
}

TEST(Evaluate, Errors) {
    const auto engine = oracle::fixture_engine();
    EXPECT_EQ(code_of([&] { evaluate(EngineMode::Full, GoldSet::from_judgments({}), *engine); }), ErrorCode::InvalidArgument);
    const auto unbuilt = oracle::fixture_engine(false);
    const auto gold = GoldSet::from_judgments({{"asthma", "s01", 1}});
    try {
        evaluate(EngineMode::Full, gold, *unbuilt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IndexNotBuilt);
        EXPECT_NE(std::string(e.what()).find("asthma"), std::string::npos);
    }
}

TEST(Evaluate, JsonlReport) {
    EvalReport r{EngineMode::TextOnly, 0.5, {{"a", 0.25}, {"b", 0.75}}};
    std::istringstream in(to_jsonl(r));
    std::vector<nlohmann::json> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0]["query"], "a");
    EXPECT_EQ(lines[1]["ndcg"], 0.75);
    EXPECT_EQ(lines[2]["summary"], true);
    EXPECT_EQ(lines[2]["mode"], "text");
    EXPECT_EQ(lines[2]["mean_ndcg"], 0.5);
    EXPECT_EQ(lines[2]["queries"], 2);
}

TEST(Percentile, NearestRank) {
    const std::vector<double> v = {35, 20, 15, 50, 40};
    EXPECT_EQ(percentile_nearest_rank(v, 5), 15);
    EXPECT_EQ(percentile_nearest_rank(v, 30), 20);
    EXPECT_EQ(percentile_nearest_rank(v, 40), 20);
    EXPECT_EQ(percentile_nearest_rank(v, 50), 35);
    EXPECT_EQ(percentile_nearest_rank(v, 100), 50);
    std::mt19937_64 rng(127);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> xs(std::uniform_int_distribution<std::size_t>(1, 300)(rng));
        for (auto& x : xs) x = std::uniform_real_distribution<double>(0, 100)(rng);
        for (double p : {50.0, 95.0, 99.0, 99.9}) EXPECT_EQ(percentile_nearest_rank(xs, p), nearest_rank_by_count(xs, p));
    }
}

TEST(LoadTest, ArgumentErrors) {
    const RequestFn ok = [](const std::string&) {};
    LoadTestOptions o;
    o.query_pool = {"asthma"};
    o.duration_s = 0;
    EXPECT_EQ(code_of([&] { load_test(ok, o); }), ErrorCode::InvalidArgument);
    o.duration_s = 1;
    o.rpm = 0;
    EXPECT_EQ(code_of([&] { load_test(ok, o); }), ErrorCode::InvalidArgument);
    o.rpm = 60;
    o.query_pool.clear();
    EXPECT_EQ(code_of([&] { load_test(ok, o); }), ErrorCode::InvalidArgument);
    o.query_pool = {"asthma"};
    EXPECT_EQ(code_of([&] { load_test(RequestFn{}, o); }), ErrorCode::EngineUnavailable);
}

TEST(LoadTest, RawLogReproducesTheReport) {
    const auto log = std::filesystem::temp_directory_path() / ("focalmed_raw_" + std::to_string(std::random_device{}()) + ".tsv");
    LoadTestOptions o;
    o.rpm = 1200;
    o.duration_s = 1;
    o.query_pool = {"asthma treatment", "fail", "covid dosage"};
    o.workers = 3;
    o.raw_log = log;
    std::atomic<int> calls = 0;
    const auto run = load_test(
        [&](const std::string& q) {
            ++calls;
            std::this_thread::sleep_for(std::chrono::milliseconds(q.size() % 4));
            if (q == "fail") throw std::runtime_error("boom");
        },
        o);
    EXPECT_EQ(calls.load(), 20);
    EXPECT_EQ(run.report.sample_count, 20u);
    EXPECT_EQ(run.report.target_rpm, 1200);
    EXPECT_GT(run.report.achieved_rpm, 0.0);

    std::ifstream in(log);
    std::vector<double> millis;
    std::size_t errors = 0;
    std::map<std::string, int> per_query;
    for (std::string line; std::getline(in, line);) {
        std::istringstream fields(line);
        std::string query, start, ms, status;
        std::getline(fields, query, '\t');
        std::getline(fields, start, '\t');
        std::getline(fields, ms, '\t');
        std::getline(fields, status, '\t');
        millis.push_back(std::stod(ms));
        errors += status == "error";
        ++per_query[query];
        EXPECT_TRUE(status == "ok" || status == "error");
    }
    std::filesystem::remove(log);
    ASSERT_EQ(millis.size(), 20u);
    EXPECT_EQ(errors, run.report.error_count);
    EXPECT_EQ(run.report.error_count, static_cast<std::size_t>(per_query["fail"]));
    // the log keeps three decimals
    EXPECT_NEAR(run.report.p50, nearest_rank_by_count(millis, 50), 1e-3);
    EXPECT_NEAR(run.report.p95, nearest_rank_by_count(millis, 95), 1e-3);
    EXPECT_NEAR(run.report.p99, nearest_rank_by_count(millis, 99), 1e-3);
    for (std::size_t i = 1; i < run.samples.size(); ++i) EXPECT_GE(run.samples[i].start_ms, run.samples[i - 1].start_ms);
    EXPECT_NEAR(run.samples.back().start_ms, 19 * 50.0, 1e-6);
}

TEST(LoadTest, SummarizeCountsErrorsAndRate) {
    std::vector<LatencySample> s = {{"a", 0, 10, true}, {"b", 100, 30, false}, {"c", 200, 20, true}};
    const auto r = summarize(s, 600, 300.0);
    EXPECT_EQ(r.sample_count, 3u);
    EXPECT_EQ(r.error_count, 1u);
    EXPECT_EQ(r.p50, 20);
    EXPECT_EQ(r.p99, 30);
    EXPECT_NEAR(r.achieved_rpm, 3 / (300.0 / 60000.0), 1e-9);
    EXPECT_EQ(raw_log_lines(s), "a\t0.000\t10.000\tok\nb\t100.000\t30.000\terror\nc\t200.000\t20.000\tok\n");
}
