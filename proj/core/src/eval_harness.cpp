#include "focalmed/eval_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "focalmed/errors.hpp"

namespace focalmed {

using json = nlohmann::json;

GoldSet GoldSet::from_judgments(std::vector<Judgment> judgments) {
    GoldSet gold;
    std::set<std::pair<std::string, std::string>> seen;
    for (auto& j : judgments) {
        if (j.grade < 0 || j.grade > 3)
            throw Error(ErrorCode::MalformedRecord, "grade out of range 0..3 for query '" + j.query + "'");
        if (!seen.emplace(j.query, j.snippet_id).second)
            throw Error(ErrorCode::MalformedRecord,
                        "duplicate judgment for ('" + j.query + "', " + j.snippet_id + ")");
        auto [it, inserted] = gold.by_query_.try_emplace(j.query);
        if (inserted) gold.queries_.push_back(j.query);
        it->second.push_back(std::move(j));
    }
    for (const auto& q : gold.queries_) {
        const auto& js = gold.by_query_.at(q);
        if (std::none_of(js.begin(), js.end(), [](const Judgment& j) { return j.grade > 0; }))
            throw Error(ErrorCode::NoRelevantJudgments, "query '" + q + "' has no relevant judgment");
    }
    return gold;
}

std::span<const Judgment> GoldSet::judgments(const std::string& query) const {
    auto it = by_query_.find(query);
    if (it == by_query_.end()) return {};
    return it->second;
}

GoldSet parse_gold(std::string_view content) {
    std::vector<Judgment> out;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            Judgment g;
            g.query = j.at("query").get<std::string>();
            g.snippet_id = j.at("snippet_id").get<std::string>();
            g.grade = j.at("grade").get<int>();
            if (g.query.empty() || g.snippet_id.empty()) throw RecordError(ErrorCode::MalformedRecord, lineno, "empty query or snippet_id");
            if (g.grade < 0 || g.grade > 3) throw RecordError(ErrorCode::MalformedRecord, lineno, "grade out of range 0..3");
            out.push_back(std::move(g));
        } catch (const json::exception& e) {
            throw RecordError(ErrorCode::MalformedRecord, lineno, e.what());
        }
    }
    return GoldSet::from_judgments(std::move(out));
}

GoldSet load_gold(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read gold file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_gold(buf.str());
}

double ndcg_at_k(std::span<const std::string> ranking, std::span<const Judgment> judgments, std::size_t k) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    std::vector<int> ideal;
    std::map<std::string_view, int> grade_of;
    for (const auto& j : judgments) {
        grade_of[j.snippet_id] = j.grade;
        ideal.push_back(j.grade);
    }
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    auto gain = [](int g) { return std::exp2(static_cast<double>(g)) - 1.0; };
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
    if (idcg <= 0.0) throw Error(ErrorCode::NoRelevantJudgments, "no relevant judgments");

    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
        auto it = grade_of.find(ranking[i]);
        if (it != grade_of.end()) dcg += gain(it->second) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

EvalReport evaluate(EngineMode mode, const GoldSet& gold, const Engine& engine, std::size_t k) {
    if (gold.empty()) throw Error(ErrorCode::InvalidArgument, "gold set is empty");
    EvalReport report;
    report.mode = mode;
    double sum = 0.0;
    for (const auto& q : gold.queries()) {
        std::vector<std::string> ranking;
        try {
            for (auto& r : engine.search(q, mode, k).results) ranking.push_back(std::move(r.snippet_id));
        } catch (const Error& e) {
            throw Error(e.code(), "query '" + q + "': " + e.what());
        }
        const double v = ndcg_at_k(ranking, gold.judgments(q), k);
        report.per_query.emplace_back(q, v);
        sum += v;
    }
    report.mean_ndcg = sum / static_cast<double>(report.per_query.size());
    return report;
}

std::string to_jsonl(const EvalReport& report) {
    std::string out;
    for (const auto& [q, v] : report.per_query) out += json{{"query", q}, {"ndcg", v}}.dump() + "\n";
    out += json{{"summary", true},
                {"mode", to_string(report.mode)},
                {"mean_ndcg", report.mean_ndcg},
                {"queries", report.per_query.size()}}
               .dump() +
           "\n";
    return out;
}

double percentile_nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "percentile of an empty sample");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return values[rank - 1];
}

LatencyReport summarize(std::span<const LatencySample> samples, int target_rpm, double elapsed_ms) {
    LatencyReport r;
    r.target_rpm = target_rpm;
    r.sample_count = samples.size();
    if (samples.empty()) return r;
    std::vector<double> millis;
    millis.reserve(samples.size());
    for (const auto& s : samples) {
        millis.push_back(s.millis);
        if (!s.ok) ++r.error_count;
    }
    r.p50 = percentile_nearest_rank(millis, 50);
    r.p95 = percentile_nearest_rank(millis, 95);
    r.p99 = percentile_nearest_rank(millis, 99);
    if (elapsed_ms > 0) r.achieved_rpm = static_cast<double>(samples.size()) / (elapsed_ms / 60000.0);
    return r;
}

std::string raw_log_lines(std::span<const LatencySample> samples) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(3);
    for (const auto& s : samples) out << s.query << '\t' << s.start_ms << '\t' << s.millis << '\t' << (s.ok ? "ok" : "error") << '\n';
    return out.str();
}

LoadTestRun load_test(const RequestFn& request, const LoadTestOptions& options) {
    if (options.rpm < 1) throw Error(ErrorCode::InvalidArgument, "rpm must be >= 1");
    if (options.duration_s < 1) throw Error(ErrorCode::InvalidArgument, "duration must be >= 1 second");
    if (options.query_pool.empty()) throw Error(ErrorCode::InvalidArgument, "query pool is empty");
    if (!request) throw Error(ErrorCode::EngineUnavailable, "no engine to send requests to");

    using clock = std::chrono::steady_clock;
    const auto total = static_cast<std::size_t>(
        std::llround(static_cast<double>(options.rpm) * options.duration_s / 60.0));
    const auto interval = std::chrono::duration<double>(60.0 / options.rpm);

    std::vector<LatencySample> samples(total);
    std::deque<std::size_t> queue;
    std::mutex mu;
    std::condition_variable cv;
    bool closed = false;

    const auto t0 = clock::now() + std::chrono::milliseconds(5);
    auto due = [&](std::size_t i) {
        return t0 + std::chrono::duration_cast<clock::duration>(interval * static_cast<double>(i));
    };
    auto ms_since = [&](clock::time_point from, clock::time_point to) {
        return std::chrono::duration<double, std::milli>(to - from).count();
    };
    clock::time_point last_done = t0;

    {
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < std::max(1u, options.workers); ++w) {
            workers.emplace_back([&] {
                for (;;) {
                    std::size_t i;
                    {
                        std::unique_lock lock(mu);
                        cv.wait(lock, [&] { return closed || !queue.empty(); });
                        if (queue.empty()) return;
                        i = queue.front();
                        queue.pop_front();
                    }
                    auto& s = samples[i];
                    s.query = options.query_pool[i % options.query_pool.size()];
                    s.start_ms = ms_since(t0, due(i));
                    try {
                        request(s.query);
                    } catch (...) {
                        s.ok = false;
                    }
                    const auto end = clock::now();
                    s.millis = ms_since(due(i), end);
                    std::lock_guard lock(mu);
                    last_done = std::max(last_done, end);
                }
            });
        }
        for (std::size_t i = 0; i < total; ++i) {
            std::this_thread::sleep_until(due(i));
            {
                std::lock_guard lock(mu);
                queue.push_back(i);
            }
            cv.notify_one();
        }
        {
            std::lock_guard lock(mu);
            closed = true;
        }
        cv.notify_all();
    }

    if (!options.raw_log.empty()) {
        std::ofstream out(options.raw_log, std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write raw latency log " + options.raw_log.string());
        out << raw_log_lines(samples);
    }

    LoadTestRun run;
    run.report = summarize(samples, options.rpm, ms_since(t0, last_done));
    run.samples = std::move(samples);
    return run;
}

} // namespace focalmed
