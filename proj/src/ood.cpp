#include "planrank/ood.hpp"

#include <algorithm>
#include <cmath>

#include "planrank/blobfile.hpp"
#include "planrank/training.hpp"

namespace planrank {

namespace {

void count_ops(const PlanNode& n, std::vector<double>& hist, double& card_sum, double& cost_sum,
               std::size_t& nodes, const ScalingRecord& scaling) {
    hist[static_cast<int>(n.operator_kind)] += 1.0;
    card_sum += std::min(std::log1p(n.est_cardinality) / scaling.max_log_card, 1.0);
    cost_sum += std::min(std::log1p(n.est_cost) / scaling.max_log_cost, 1.0);
    ++nodes;
    for (const auto& c : n.children) count_ops(c, hist, card_sum, cost_sum, nodes, scaling);
}

}  // namespace

std::vector<double> detector_features(const ModelCheckpoint& ckpt, const PlanTree& plan) {
    NumArray emb = plan_embedding(ckpt, plan);
    std::vector<double> out(emb.values());

    std::vector<double> hist(kOperatorKindCount, 0.0);
    double card_sum = 0.0, cost_sum = 0.0;
    std::size_t nodes = 0;
    count_ops(plan.root, hist, card_sum, cost_sum, nodes, ckpt.scaling);

    double inv = 1.0 / static_cast<double>(nodes);
    out.push_back(card_sum * inv);
    out.push_back(cost_sum * inv);
    out.push_back(static_cast<double>(nodes) / 32.0);
    for (double h : hist) out.push_back(h * inv);
    return out;
}

void OodTrainConfig::validate() const {
    if (hidden_dim < 1) throw InvalidConfigError("hidden_dim must be positive");
    if (epochs < 1) throw InvalidConfigError("epochs must be positive");
    if (!(learning_rate > 0.0 && learning_rate < 1.0))
        throw InvalidConfigError("learning_rate must be in (0, 1)");
    if (noise_sigmas <= 0.0) throw InvalidConfigError("noise_sigmas must be positive");
    if (negatives_per_example < 1)
        throw InvalidConfigError("negatives_per_example must be positive");
}

OodDetector::OodDetector(int feature_dim, int hidden_dim, ParamStore params,
                         NumArray feature_mean, NumArray feature_scale)
    : feature_dim_(feature_dim),
      hidden_dim_(hidden_dim),
      params_(std::move(params)),
      feature_mean_(std::move(feature_mean)),
      feature_scale_(std::move(feature_scale)) {}

double OodDetector::classify(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != feature_dim_)
        throw DimensionMismatchError("feature vector has dimension " + std::to_string(x.size()) +
                                     ", detector expects " + std::to_string(feature_dim_));
    const NumArray& w1 = params_.at("ood.w1").value;
    const NumArray& b1 = params_.at("ood.b1").value;
    const NumArray& w2 = params_.at("ood.w2").value;
    const NumArray& b2 = params_.at("ood.b2").value;

    std::vector<double> hidden(static_cast<std::size_t>(hidden_dim_), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double xs = (x[i] - feature_mean_[i]) / feature_scale_[i];
        for (std::size_t j = 0; j < hidden.size(); ++j) hidden[j] += xs * w1.at(i, j);
    }
    double z = b2[0];
    for (std::size_t j = 0; j < hidden.size(); ++j)
        z += std::tanh(hidden[j] + b1[j]) * w2.at(j, 0);
    return 1.0 / (1.0 + std::exp(-z));
}

double OodDetector::confidence(const std::vector<double>& x) const {
    double f = classify(x);
    return std::max(f, 1.0 - f);
}

std::vector<std::vector<double>> synthesize_negatives(
    const std::vector<std::vector<double>>& in_dist, double noise_sigmas, std::uint64_t seed) {
    if (in_dist.empty()) throw EmptySetError("no in-distribution examples");
    std::size_t dim = in_dist[0].size();

    // per-coordinate empirical spread
    std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
    for (const auto& x : in_dist)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += x[j];
    for (double& m : mean) m /= static_cast<double>(in_dist.size());
    for (const auto& x : in_dist)
        for (std::size_t j = 0; j < dim; ++j) sd[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
    for (double& s : sd) s = std::sqrt(s / static_cast<double>(in_dist.size()));

    Rng rng = Rng::substream(seed, 0x0DDull);
    std::vector<std::vector<double>> negatives;
    negatives.reserve(in_dist.size());
    for (std::size_t i = 0; i < in_dist.size(); ++i) {
        std::vector<double> x = in_dist[i];
        if (i % 2 == 0) {
            for (std::size_t j = 0; j < dim; ++j)
                x[j] += noise_sigmas * std::max(sd[j], 1e-3) * rng.normal();
        } else {
            rng.shuffle(x);
        }
        negatives.push_back(std::move(x));
    }
    return negatives;
}

OodDetector train_detector(const std::vector<std::vector<double>>& in_dist,
                           const OodTrainConfig& cfg) {
    cfg.validate();
    if (in_dist.size() < 50)
        throw TooFewExamplesError("need at least 50 in-distribution examples, have " +
                                  std::to_string(in_dist.size()));
    std::size_t dim = in_dist[0].size();
    for (const auto& x : in_dist)
        if (x.size() != dim) throw DimensionMismatchError("inconsistent feature dimensions");

    std::vector<std::vector<double>> negatives;
    for (int round = 0; round < cfg.negatives_per_example; ++round) {
        auto batch = synthesize_negatives(in_dist, cfg.noise_sigmas,
                                          cfg.seed + static_cast<std::uint64_t>(round));
        for (auto& x : batch) negatives.push_back(std::move(x));
    }

    // standardization statistics from the in-distribution corpus
    NumArray mu({dim}), scale({dim});
    for (const auto& x : in_dist)
        for (std::size_t j = 0; j < dim; ++j) mu[j] += x[j];
    for (std::size_t j = 0; j < dim; ++j) mu[j] /= static_cast<double>(in_dist.size());
    for (const auto& x : in_dist)
        for (std::size_t j = 0; j < dim; ++j)
            scale[j] += (x[j] - mu[j]) * (x[j] - mu[j]);
    for (std::size_t j = 0; j < dim; ++j)
        scale[j] = std::max(std::sqrt(scale[j] / static_cast<double>(in_dist.size())), 1e-3);

    // Full-batch matrix of standardized examples, classes balanced by
    // repeating the in-distribution block once per negative round.
    // Negatives carry a 0.5 target rather than 0: the gate consumes
    // g = max(f, 1-f), and a hard-zero target would make the net confidently
    // NEGATIVE off-cluster, pushing g back toward 1 exactly where the gate
    // must read low confidence. Anchoring negatives at the symmetry point
    // keeps g ~ 0.5 everywhere the training cluster doesn't cover.
    std::size_t pos_total = in_dist.size() * static_cast<std::size_t>(cfg.negatives_per_example);
    std::size_t total = pos_total + negatives.size();
    NumArray x_all({total, dim});
    std::vector<double> labels(total);
    for (std::size_t i = 0; i < pos_total; ++i) {
        const auto& x = in_dist[i % in_dist.size()];
        for (std::size_t j = 0; j < dim; ++j) x_all.at(i, j) = (x[j] - mu[j]) / scale[j];
        labels[i] = 1.0;
    }
    for (std::size_t i = 0; i < negatives.size(); ++i) {
        for (std::size_t j = 0; j < dim; ++j)
            x_all.at(pos_total + i, j) = (negatives[i][j] - mu[j]) / scale[j];
        labels[pos_total + i] = 0.5;
    }

    std::size_t h = static_cast<std::size_t>(cfg.hidden_dim);
    ParamStore params;
    Rng rng = Rng::substream(cfg.seed, 0xB1A5ull);
    double bound1 = 1.0 / std::sqrt(static_cast<double>(dim));
    NumArray& w1 = params.create("ood.w1", {dim, h});
    for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = rng.uniform(-bound1, bound1);
    params.create("ood.b1", {h});
    double bound2 = 1.0 / std::sqrt(static_cast<double>(h));
    NumArray& w2 = params.create("ood.w2", {h, 1});
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = rng.uniform(-bound2, bound2);
    params.create("ood.b2", {1});

    AdamOptimizer adam(cfg.learning_rate);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Graph g;
        Graph::Node x = g.constant(x_all);
        Graph::Node hidden = g.tanh_op(g.add(g.matmul(x, g.param(params, "ood.w1")),
                                             g.param(params, "ood.b1")));
        Graph::Node logits2d = g.add(g.matmul(hidden, g.param(params, "ood.w2")),
                                     g.param(params, "ood.b2"));
        Graph::Node logits = g.gather_cols(logits2d, std::vector<std::size_t>(total, 0));
        Graph::Node loss = g.bce_with_logits(logits, labels);
        params.zero_grads();
        g.backward(loss);
        adam.step(params);
    }
    return OodDetector(static_cast<int>(dim), cfg.hidden_dim, std::move(params), std::move(mu),
                       std::move(scale));
}

namespace {

// nearest-rank percentile over a copy, p in [0, 100]
double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw EmptySetError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
    std::size_t idx = rank <= 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
    return values[std::min(idx, values.size() - 1)];
}

}  // namespace

Thresholds calibrate_thresholds(const OodDetector& det,
                                const std::vector<std::vector<double>>& in_dist_holdout,
                                const std::vector<std::vector<double>>& negatives) {
    if (in_dist_holdout.empty() || negatives.empty())
        throw EmptySetError("calibration needs nonempty holdout and negative sets");

    std::vector<double> g_in, g_out;
    g_in.reserve(in_dist_holdout.size());
    g_out.reserve(negatives.size());
    for (const auto& x : in_dist_holdout) g_in.push_back(det.confidence(x));
    for (const auto& x : negatives) g_out.push_back(det.confidence(x));

    Thresholds th;
    th.tau_in = percentile(g_in, 5.0);
    th.tau_out = percentile(g_out, 95.0);
    if (th.tau_out >= th.tau_in) {
        th.degraded = true;
        double m_in = percentile(g_in, 50.0);
        double m_out = percentile(g_out, 50.0);
        double midpoint = 0.5 * (m_in + m_out);
        double half_gap = 0.5 * std::abs(m_in - m_out);
        th.tau_in = midpoint + half_gap;
    }
    return th;
}

void save_detector(const OodDetector& det, const Thresholds& th, const std::string& path) {
    nlohmann::ordered_json meta;
    meta["kind"] = "ood_detector";
    meta["feature_dim"] = det.feature_dim();
    meta["hidden_dim"] = det.hidden_dim();
    meta["thresholds"] = {{"tau_in", th.tau_in}, {"tau_out", th.tau_out},
                          {"degraded", th.degraded}};
    std::vector<std::pair<std::string, NumArray>> blobs;
    blobs.emplace_back("feature_mean", det.feature_mean());
    blobs.emplace_back("feature_scale", det.feature_scale());
    for (const auto& [name, entry] : det.params()) blobs.emplace_back(name, entry.value);
    write_blob_file(path, kDetectorMagic, kDetectorFormatVersion, meta, blobs);
}

std::pair<OodDetector, Thresholds> load_detector(const std::string& path) {
    BlobFile file = read_blob_file(path, kDetectorMagic, kDetectorFormatVersion);
    ParamStore params;
    NumArray mu, scale;
    for (auto& [name, arr] : file.blobs) {
        if (name == "feature_mean") {
            mu = std::move(arr);
        } else if (name == "feature_scale") {
            scale = std::move(arr);
        } else {
            NumArray& dst = params.create(name, arr.shape());
            dst = std::move(arr);
        }
    }
    OodDetector det(file.meta.at("feature_dim").get<int>(), file.meta.at("hidden_dim").get<int>(),
                    std::move(params), std::move(mu), std::move(scale));
    Thresholds th;
    th.tau_in = file.meta.at("thresholds").at("tau_in").get<double>();
    th.tau_out = file.meta.at("thresholds").at("tau_out").get<double>();
    th.degraded = file.meta.at("thresholds").at("degraded").get<bool>();
    return {std::move(det), th};
}

}  // namespace planrank
