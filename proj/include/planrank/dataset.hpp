// Training/evaluation data: candidate sets with measured latencies and
// ground-truth ranks, a synthetic workload generator with an analytic
// latency oracle, query-level splitting, and JSONL persistence.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "planrank/plan_ir.hpp"

namespace planrank {

struct EmptyRunsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteLatencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LengthMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TooFewQueriesError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TooFewPlansError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Hard cap on candidates per query; the ranker's position-query table is
/// sized against it.
inline constexpr int kMaxPlansPerQuery = 32;

/// One query's alternative plans with measured latencies. true_ranks is a
/// permutation of 1..n assigned by ascending mean latency, exact ties broken
/// by plan index. cbo_index is the plan a cost-based optimizer would pick.
struct CandidateSet {
    std::string query_id;
    std::vector<PlanTree> plans;
    std::vector<std::vector<double>> latency_runs_ms;
    std::vector<double> mean_latency_ms;
    std::vector<int> true_ranks;
    int cbo_index = 0;

    std::size_t size() const { return plans.size(); }
    /// Plan index holding true rank r (1-based).
    int plan_at_rank(int r) const;
};

struct WorkloadConfig {
    int num_queries = 200;
    int plans_per_query_min = 2;
    int plans_per_query_max = 16;
    /// Half-width of the log-uniform multiplicative cardinality perturbation:
    /// estimates are true rows times exp(U(-r, r)).
    double perturbation_log_range = 0.7;
    /// Coefficient of variation of multiplicative lognormal measurement noise
    /// (mean-one). Must be < 1.
    double noise_cv = 0.1;
    int runs_per_plan = 3;
    std::uint64_t seed = 42;
};

void validate_config(const WorkloadConfig& cfg);  // throws InvalidConfigError

/// Analytic per-operator latency (ms) used as the workload's ground truth:
/// quadratic in child rows for NestedLoop, near-linear for HashJoin,
/// n*log(n) terms for MergeJoin and Sort. Inputs are the operator's output
/// rows and its children's output rows (0 when absent).
double operator_latency_ms(OperatorKind kind, double out_rows, double left_rows,
                           double right_rows);

/// Oracle latency of a whole plan: sum of operator_latency_ms over nodes,
/// evaluated on the given per-node row counts (callers pass true rows for
/// ground truth or the tree's own estimates for the simulated CBO).
double plan_latency_ms(const PlanNode& node);

std::pair<std::vector<double>, std::vector<int>> organize_ranking(
    const std::vector<std::vector<double>>& latency_runs_ms);

std::vector<CandidateSet> generate_synthetic_workload(const WorkloadConfig& cfg);

CandidateSet ingest_measurements(std::vector<PlanTree> plans,
                                 std::vector<std::vector<double>> latency_runs_ms,
                                 int cbo_index);

struct SplitResult {
    std::vector<CandidateSet> train;
    std::vector<CandidateSet> test;
};

/// Query-level split: ceil(ratio*N) train queries, deterministic shuffle
/// under the seed.
SplitResult split_dataset(const std::vector<CandidateSet>& data, double ratio,
                          std::uint64_t seed);

/// One JSON object per line: {query_id, cbo_index, plans, latency_runs_ms}.
/// Means and ranks are recomputed on load, never trusted from disk.
void write_dataset_jsonl(std::ostream& out, const std::vector<CandidateSet>& sets);
void write_dataset_jsonl(const std::string& path, const std::vector<CandidateSet>& sets);
std::vector<CandidateSet> load_dataset_jsonl(std::istream& in);
std::vector<CandidateSet> load_dataset_jsonl(const std::string& path);

nlohmann::ordered_json candidate_set_to_json(const CandidateSet& cs);
CandidateSet candidate_set_from_json(const nlohmann::json& doc);

}  // namespace planrank
