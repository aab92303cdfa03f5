#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "focalmed/engine.hpp"

namespace focalmed {

struct Judgment {
    std::string query;
    std::string snippet_id;
    int grade = 0;  ///< 0..3

    friend bool operator==(const Judgment&, const Judgment&) = default;
};

/// Graded relevance judgments grouped by query (queries keep file order).
class GoldSet {
public:
    /// Validates grades (0..3), (query, snippet_id) uniqueness, and that every
    /// query has a positive judgment. Throws MalformedRecord / NoRelevantJudgments.
    static GoldSet from_judgments(std::vector<Judgment> judgments);

    bool empty() const noexcept { return queries_.empty(); }
    std::size_t size() const noexcept { return queries_.size(); }
    const std::vector<std::string>& queries() const noexcept { return queries_; }
    std::span<const Judgment> judgments(const std::string& query) const;

private:
    std::vector<std::string> queries_;
    std::map<std::string, std::vector<Judgment>> by_query_;
};

GoldSet parse_gold(std::string_view content);
GoldSet load_gold(const std::filesystem::path& path);

/// DCG@k / IDCG@k with gain 2^grade - 1 and discount log2(rank + 1).
/// Unjudged snippets count as grade 0. Throws NoRelevantJudgments when no
/// judgment has a positive grade, InvalidArgument when k == 0.
double ndcg_at_k(std::span<const std::string> ranking, std::span<const Judgment> judgments, std::size_t k = 10);

struct EvalReport {
    EngineMode mode = EngineMode::Full;
    double mean_ndcg = 0.0;
    std::vector<std::pair<std::string, double>> per_query;  ///< gold-set order
};

/// nDCG@10 of every gold query run through `engine` in `mode`, and their mean.
/// Engine failures are rethrown with the query named. Throws InvalidArgument on an empty gold set.
EvalReport evaluate(EngineMode mode, const GoldSet& gold, const Engine& engine, std::size_t k = 10);

/// One {"query","ndcg"} line per query then {"summary":true,"mode","mean_ndcg","queries"}.
std::string to_jsonl(const EvalReport& report);

struct LatencySample {
    std::string query;
    double start_ms = 0.0;  ///< scheduled send time, relative to run start
    double millis = 0.0;    ///< scheduled send -> completion
    bool ok = true;
};

struct LatencyReport {
    int target_rpm = 0;
    double achieved_rpm = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
    double p99 = 0.0;
    std::size_t error_count = 0;
    std::size_t sample_count = 0;
};

/// Issues one request; throwing marks the sample as an error.
using RequestFn = std::function<void(const std::string& query)>;

struct LoadTestOptions {
    int rpm = 300;
    int duration_s = 60;
    std::vector<std::string> query_pool;
    unsigned workers = 8;
    /// When set, raw samples are written here before aggregation.
    std::filesystem::path raw_log;
};

struct LoadTestRun {
    LatencyReport report;
    std::vector<LatencySample> samples;
};

/// Open-loop load generator: request i is due at i * 60/rpm seconds and goes
/// to the pool round-robin; latency is measured from the due time, so a slow
/// engine cannot lower the offered rate. Throws InvalidArgument for rpm < 1,
/// duration < 1 or an empty pool, EngineUnavailable for an empty RequestFn.
LoadTestRun load_test(const RequestFn& request, const LoadTestOptions& options);

/// Nearest-rank percentile: sorted[ceil(p/100 * n) - 1]. `values` must be non-empty.
double percentile_nearest_rank(std::vector<double> values, double p);

/// Aggregates samples into a report (percentiles over all samples).
LatencyReport summarize(std::span<const LatencySample> samples, int target_rpm, double elapsed_ms);

/// "query\tstart_ms\tmillis\tstatus" per line.
std::string raw_log_lines(std::span<const LatencySample> samples);

} // namespace focalmed
