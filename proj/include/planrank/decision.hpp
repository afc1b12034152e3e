// Hybrid plan selection: walk the model's ranking best-first, accept the
// first plan the detector calls in-distribution (g >= tau_in), fall back to
// the cost-based optimizer's plan when all top-k candidates fail the gate.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "planrank/dataset.hpp"
#include "planrank/model.hpp"
#include "planrank/ood.hpp"
#include "planrank/ranker.hpp"

namespace planrank {

struct DegradedDetectorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct KOutOfRangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DecisionOutcome {
    enum class Source { ModelRank, CboFallback };

    std::string chosen_plan_id;
    int chosen_index = -1;
    Source source = Source::CboFallback;
    int model_rank = 0;  // 1-based rank position when source == ModelRank

    struct TraceEntry {
        std::string plan_id;
        int plan_index;
        int position;  // 1-based rank position checked
        double g;
        bool passed;
    };
    /// One entry per confidence evaluation, in the order the loop ran.
    std::vector<TraceEntry> trace;
    /// Plan indices of the top tie group (decoder order); empty when tie
    /// resolution was not requested.
    std::vector<int> tie_group;
};

/// The selection loop over precomputed per-plan confidences; pure in its
/// inputs. Throws KOutOfRangeError unless 1 <= k <= n and
/// DegradedDetectorError when th.degraded and force_degraded is unset.
DecisionOutcome hybrid_select_core(const RankedList& ranked,
                                   const std::vector<std::string>& plan_ids,
                                   const std::vector<double>& g_by_plan, int cbo_index,
                                   const Thresholds& th, int k, bool force_degraded = false);

/// Extracts detector features for the ranked plans through the checkpoint's
/// embedder, then runs the selection loop.
DecisionOutcome hybrid_select(const RankedList& ranked, const CandidateSet& cs,
                              const ModelCheckpoint& ckpt, const OodDetector& det,
                              const Thresholds& th, int k, bool force_degraded = false);

/// Plans whose assignment scores s[i, pi(i)] lie within epsilon of the top
/// plan's, in decoder (position) order.
std::vector<int> resolve_ties(const RankedList& ranked, const ScoreMatrix& scores,
                              double epsilon);

/// 1e-6 of the score scale, the default tie width.
double default_tie_epsilon(const ScoreMatrix& scores);

/// Score once, decode, resolve ties, and select; the outcome carries the
/// full trace and tie group.
DecisionOutcome decide(const CandidateSet& cs, const ModelCheckpoint& ckpt,
                       const OodDetector& det, const Thresholds& th, int k,
                       double tie_epsilon, bool force_degraded = false);

nlohmann::ordered_json decision_to_json(const DecisionOutcome& outcome);

}  // namespace planrank
