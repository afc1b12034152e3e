// Evaluation metrics (top-k hit rates, cumulative latency) and the
// four-policy comparison report: model-top-1, hybrid with fallback,
// simulated cost-based optimizer, and the oracle best plan.
#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "planrank/decision.hpp"

namespace planrank {

struct MissingQueryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// decisions: query_id -> chosen plan index. Every truth query must be
/// present. Returns the percentage of queries whose chosen plan has
/// tie-broken true rank <= k.
double top_k_accuracy(const std::map<std::string, int>& decisions,
                      const std::vector<CandidateSet>& truth, int k);

/// Sum of the chosen plans' mean measured latencies (ms).
double cumulative_time(const std::map<std::string, int>& decisions,
                       const std::vector<CandidateSet>& truth);

struct PolicyResult {
    std::string name;
    double top_1 = 0.0;  // percent
    double top_2 = 0.0;
    double top_3 = 0.0;
    double cumulative_ms = 0.0;
    int fallback_count = 0;  // hybrid only
};

struct EvalReport {
    std::vector<PolicyResult> policies;

    struct PolicyPick {
        int chosen_index = -1;
        std::string chosen_plan_id;
        double latency_ms = 0.0;
        double regret_ms = 0.0;
        int true_rank = 0;
    };
    struct Row {
        std::string query_id;
        double best_latency_ms = 0.0;
        std::map<std::string, PolicyPick> picks;
    };
    std::vector<Row> rows;
    std::vector<std::string> footnotes;
};

inline constexpr const char* kPolicyModelTop1 = "model_top1";
inline constexpr const char* kPolicyHybrid = "hybrid";
inline constexpr const char* kPolicyCboSim = "cbo_sim";
inline constexpr const char* kPolicyOracleBest = "oracle_best";

EvalReport compare_policies(const std::vector<CandidateSet>& test_set,
                            const ModelCheckpoint& ckpt, const OodDetector& det,
                            const Thresholds& th, int k, bool force_degraded = false);

std::string render_report_table(const EvalReport& report);
nlohmann::ordered_json report_to_json(const EvalReport& report);

}  // namespace planrank
