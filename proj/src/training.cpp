#include "planrank/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace planrank {

namespace {

void check_permutation(const std::vector<int>& y, std::size_t n) {
    if (y.size() != n) throw InvalidRanksError("rank vector length does not match plan count");
    std::vector<char> seen(n, 0);
    for (int r : y) {
        if (r < 1 || r > static_cast<int>(n) || seen[r - 1])
            throw InvalidRanksError("ground-truth positions are not a permutation of 1..n");
        seen[r - 1] = 1;
    }
}

}  // namespace

Graph::Node listwise_loss_node(Graph& g, Graph::Node scores, const std::vector<int>& y) {
    const NumArray& s = g.value(scores);
    if (s.rank() != 2 || s.rows() != s.cols())
        throw ShapeMismatchError("score matrix must be square");
    std::size_t n = s.rows();
    check_permutation(y, n);

    std::vector<std::size_t> cols(n);
    for (std::size_t i = 0; i < n; ++i) cols[i] = static_cast<std::size_t>(y[i] - 1);
    Graph::Node lse = g.logsumexp_rows(scores);
    Graph::Node picked = g.gather_cols(scores, cols);
    return g.sum_all(g.sub(lse, picked));
}

double listwise_loss(const ScoreMatrix& scores, const std::vector<int>& y) {
    Graph g;
    return g.value(listwise_loss_node(g, g.constant(scores.values), y))[0];
}

void AdamOptimizer::step(ParamStore& params, double grad_scale) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (auto& [name, entry] : params) {
        auto it = moments_.find(name);
        if (it == moments_.end())
            it = moments_.emplace(name, std::make_pair(NumArray(entry.value.shape()),
                                                       NumArray(entry.value.shape()))).first;
        NumArray& m = it->second.first;
        NumArray& v = it->second.second;
        for (std::size_t i = 0; i < entry.value.size(); ++i) {
            double gi = entry.grad[i] * grad_scale;
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            entry.value[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
}

ModelCheckpoint train(const std::vector<CandidateSet>& train_set, const TrainConfig& cfg,
                      const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.empty()) throw InvalidConfigError("training set is empty");
    for (const auto& cs : train_set)
        if (cs.size() > static_cast<std::size_t>(cfg.ranker.n_max))
            throw ListTooLongError("candidate set " + cs.query_id + " exceeds n_max");

    ModelCheckpoint ckpt;
    ckpt.config = cfg;
    ckpt.scaling = ScalingRecord::from_corpus(train_set);
    ckpt.params = init_model_params(cfg);

    AdamOptimizer adam(cfg.learning_rate);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::substream(cfg.seed, 0xE90Cull + static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        epoch_loss = 0.0;
        std::size_t in_batch = 0;
        ckpt.params.zero_grads();
        for (std::size_t step = 0; step < order.size(); ++step) {
            const CandidateSet& cs = train_set[order[step]];
            Graph g;
            Graph::Node scores = model_scores(g, ckpt.params, cs.plans, cfg, ckpt.scaling);
            Graph::Node loss = listwise_loss_node(g, scores, cs.true_ranks);
            double value = g.value(loss)[0];
            if (!std::isfinite(value))
                throw DivergedLossError("non-finite loss at epoch " + std::to_string(epoch) +
                                        ", query " + cs.query_id);
            epoch_loss += value;
            g.backward(loss);
            ++in_batch;
            if (in_batch == static_cast<std::size_t>(cfg.batch) || step + 1 == order.size()) {
                adam.step(ckpt.params, 1.0 / static_cast<double>(in_batch));
                ckpt.params.zero_grads();
                in_batch = 0;
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }

    ckpt.meta.epochs_run = cfg.epochs;
    ckpt.meta.final_loss = epoch_loss;
    return ckpt;
}

}  // namespace planrank
