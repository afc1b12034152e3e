// Listwise ranking head: a transformer encoder contextualizes the plan
// embeddings as a set (no positional encoding), a learned position-query
// table scores every plan against every rank position, and an optimal
// assignment over the score matrix decodes the predicted permutation.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "planrank/embedder.hpp"
#include "planrank/numerics.hpp"
#include "planrank/rng.hpp"

namespace planrank {

struct ListTooLongError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteScoresError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RankerConfig {
    int d_model = 32;
    int num_layers = 1;
    int num_heads = 4;
    int d_ff = 4 * 32;
    int n_max = kMaxPlansPerQuery;

    void validate() const;  // throws InvalidConfigError via std::invalid_argument
};

/// scores.at(i, j): logit for assigning plan i to rank position j (0-based
/// here; rank positions are reported 1-based elsewhere). Always n x n, the
/// visible slice of an [n, n_max] masked computation.
struct ScoreMatrix {
    NumArray values;

    std::size_t size() const { return values.shape().empty() ? 0 : values.rows(); }
    double at(std::size_t plan, std::size_t position) const { return values.at(plan, position); }
};

struct RankedList {
    /// permutation[i]: rank position (1-based) of plan i; a bijection on 1..n.
    std::vector<int> permutation;
    /// by_position[p]: plan index at position p (0-based, best first);
    /// inverse of permutation.
    std::vector<int> by_position;

    std::size_t size() const { return permutation.size(); }
};

void init_ranker_params(ParamStore& store, const RankerConfig& cfg, Rng& rng);

/// Post-norm transformer encoder over the [n, d_model] embedding stack:
/// per-head scaled dot-product attention, concat + linear mix, residual +
/// layer norm, then a tanh feed-forward block with its own residual + norm.
/// When attention_out is given it collects one [n, n] attention node per
/// (layer, head) for inspection.
Graph::Node encode_context(Graph& g, ParamStore& params, Graph::Node embeddings,
                           const RankerConfig& cfg,
                           std::vector<Graph::Node>* attention_out = nullptr);

/// s = proj(z) . q_j over the first n learned position queries; positions
/// beyond n are never materialized, which is the masking contract.
Graph::Node score_positions(Graph& g, ParamStore& params, Graph::Node contextual,
                            const RankerConfig& cfg);

/// Returns the permutation maximizing sum_i s[i, pi(i)] via an O(n^3)
/// assignment solve; exact ties between optimal assignments resolve to the
/// lexicographically smallest permutation vector.
RankedList decode_permutation(const ScoreMatrix& scores);

}  // namespace planrank
