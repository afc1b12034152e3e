// Per-plan position cross-entropy over the score matrix and the end-to-end
// training loop (adaptive-moment updates, deterministic under the seed).
#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "planrank/model.hpp"

namespace planrank {

struct InvalidRanksError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DivergedLossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// L = -sum_i log( exp(s[i, y_i]) / sum_j exp(s[i, j]) ), y 1-based
/// ground-truth positions, softmax per plan over positions, max-subtraction
/// stabilized. L >= 0.
Graph::Node listwise_loss_node(Graph& g, Graph::Node scores, const std::vector<int>& y);

/// Value-only convenience over a concrete score matrix.
double listwise_loss(const ScoreMatrix& scores, const std::vector<int>& y);

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Shuffled single-list steps over the training queries; bit-deterministic
/// for a fixed (data, cfg). Throws DivergedLossError if the loss leaves the
/// finite range.
ModelCheckpoint train(const std::vector<CandidateSet>& train_set, const TrainConfig& cfg,
                      const EpochCallback& on_epoch = nullptr);

/// First-order adaptive-moment updater (beta1 0.9, beta2 0.999, eps 1e-8),
/// one moment pair per parameter tensor.
class AdamOptimizer {
  public:
    explicit AdamOptimizer(double learning_rate) : lr_(learning_rate) {}
    void step(ParamStore& params, double grad_scale = 1.0);

  private:
    double lr_;
    long long t_ = 0;
    std::map<std::string, std::pair<NumArray, NumArray>> moments_;
};

}  // namespace planrank
