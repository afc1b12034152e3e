#include "planrank/decision.hpp"

#include <cmath>

namespace planrank {

DecisionOutcome hybrid_select_core(const RankedList& ranked,
                                   const std::vector<std::string>& plan_ids,
                                   const std::vector<double>& g_by_plan, int cbo_index,
                                   const Thresholds& th, int k, bool force_degraded) {
    std::size_t n = ranked.size();
    if (plan_ids.size() != n || g_by_plan.size() != n)
        throw DimensionMismatchError("ranking, plan ids and confidences must agree in length");
    if (k < 1 || k > static_cast<int>(n))
        throw KOutOfRangeError("k must be in [1, " + std::to_string(n) + "], got " +
                               std::to_string(k));
    if (cbo_index < 0 || cbo_index >= static_cast<int>(n))
        throw KOutOfRangeError("cbo_index out of range");
    if (th.degraded && !force_degraded)
        throw DegradedDetectorError(
            "detector thresholds are degraded (calibration overlap); pass the override to "
            "proceed");

    DecisionOutcome outcome;
    for (int pos = 0; pos < k; ++pos) {
        int plan = ranked.by_position[pos];
        double g = g_by_plan[plan];
        bool passed = g >= th.tau_in;
        outcome.trace.push_back({plan_ids[plan], plan, pos + 1, g, passed});
        if (passed) {
            outcome.chosen_plan_id = plan_ids[plan];
            outcome.chosen_index = plan;
            outcome.source = DecisionOutcome::Source::ModelRank;
            outcome.model_rank = pos + 1;
            return outcome;
        }
    }
    outcome.chosen_plan_id = plan_ids[cbo_index];
    outcome.chosen_index = cbo_index;
    outcome.source = DecisionOutcome::Source::CboFallback;
    return outcome;
}

DecisionOutcome hybrid_select(const RankedList& ranked, const CandidateSet& cs,
                              const ModelCheckpoint& ckpt, const OodDetector& det,
                              const Thresholds& th, int k, bool force_degraded) {
    std::vector<std::string> ids;
    std::vector<double> g;
    ids.reserve(cs.size());
    g.reserve(cs.size());
    for (const auto& plan : cs.plans) {
        ids.push_back(plan.plan_id);
        g.push_back(det.confidence(detector_features(ckpt, plan)));
    }
    return hybrid_select_core(ranked, ids, g, cs.cbo_index, th, k, force_degraded);
}

std::vector<int> resolve_ties(const RankedList& ranked, const ScoreMatrix& scores,
                              double epsilon) {
    if (epsilon < 0.0) throw std::invalid_argument("tie epsilon must be >= 0");
    std::size_t n = ranked.size();
    if (scores.size() != n) throw DimensionMismatchError("ranking and score matrix disagree");

    int top_plan = ranked.by_position[0];
    double top_score = scores.at(top_plan, 0);
    std::vector<int> group;
    for (std::size_t pos = 0; pos < n; ++pos) {
        int plan = ranked.by_position[pos];
        double own = scores.at(plan, static_cast<std::size_t>(ranked.permutation[plan] - 1));
        if (std::abs(own - top_score) <= epsilon) group.push_back(plan);
    }
    return group;
}

double default_tie_epsilon(const ScoreMatrix& scores) {
    double scale = 1.0;
    for (std::size_t i = 0; i < scores.values.size(); ++i)
        scale = std::max(scale, std::abs(scores.values[i]));
    return 1e-6 * scale;
}

DecisionOutcome decide(const CandidateSet& cs, const ModelCheckpoint& ckpt,
                       const OodDetector& det, const Thresholds& th, int k, double tie_epsilon,
                       bool force_degraded) {
    ScoreMatrix scores = score_candidates(ckpt, cs);
    RankedList ranked = decode_permutation(scores);
    DecisionOutcome outcome = hybrid_select(ranked, cs, ckpt, det, th, k, force_degraded);
    outcome.tie_group = resolve_ties(ranked, scores, tie_epsilon);
    return outcome;
}

nlohmann::ordered_json decision_to_json(const DecisionOutcome& outcome) {
    nlohmann::ordered_json j;
    j["chosen_plan_id"] = outcome.chosen_plan_id;
    j["chosen_index"] = outcome.chosen_index;
    j["source"] = outcome.source == DecisionOutcome::Source::ModelRank ? "model_rank"
                                                                       : "cbo_fallback";
    if (outcome.source == DecisionOutcome::Source::ModelRank)
        j["model_rank"] = outcome.model_rank;
    auto trace = nlohmann::ordered_json::array();
    for (const auto& t : outcome.trace)
        trace.push_back({{"plan_id", t.plan_id},
                         {"plan_index", t.plan_index},
                         {"position", t.position},
                         {"g", t.g},
                         {"passed", t.passed}});
    j["trace"] = std::move(trace);
    j["tie_group"] = outcome.tie_group;
    return j;
}

}  // namespace planrank
