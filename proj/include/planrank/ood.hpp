// Binary in-distribution classifier over per-plan features, the derived
// confidence function g(x) = max(f(x), 1-f(x)), percentile threshold
// calibration, and detector persistence.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "planrank/model.hpp"

namespace planrank {

struct TooFewExamplesError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptySetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Detector input: the plan's embedding under the ranking model concatenated
/// with raw aggregates (mean scaled log-cardinality, mean scaled log-cost,
/// node count / 32, operator-kind histogram fractions).
inline constexpr int kAggregateFeatures = 3 + kOperatorKindCount;

std::vector<double> detector_features(const ModelCheckpoint& ckpt, const PlanTree& plan);

struct OodTrainConfig {
    int hidden_dim = 32;
    int epochs = 600;
    double learning_rate = 1e-2;
    /// Per-coordinate Gaussian noise scale for synthesized negatives, in
    /// units of the feature's empirical standard deviation.
    double noise_sigmas = 3.0;
    /// Synthesized negatives per in-distribution example; a denser negative
    /// cloud keeps the classifier anchored near f = 0.5 across the whole
    /// off-distribution region instead of extrapolating past it.
    int negatives_per_example = 3;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Two-layer sigmoid-head classifier f: feature vector -> (0, 1),
/// probability of "in-distribution". Inputs are standardized by the
/// training-corpus mean/scale stored with the detector.
class OodDetector {
  public:
    OodDetector() = default;
    OodDetector(int feature_dim, int hidden_dim, ParamStore params, NumArray feature_mean,
                NumArray feature_scale);

    int feature_dim() const { return feature_dim_; }
    int hidden_dim() const { return hidden_dim_; }
    const ParamStore& params() const { return params_; }
    ParamStore& params() { return params_; }
    const NumArray& feature_mean() const { return feature_mean_; }
    const NumArray& feature_scale() const { return feature_scale_; }

    double classify(const std::vector<double>& x) const;   // f(x)
    double confidence(const std::vector<double>& x) const; // g(x) = max(f, 1-f)

  private:
    int feature_dim_ = 0;
    int hidden_dim_ = 0;
    ParamStore params_;
    NumArray feature_mean_;
    NumArray feature_scale_;
};

struct Thresholds {
    double tau_in = 0.95;
    double tau_out = 0.5;
    /// Set when calibration found overlapping confidence distributions;
    /// consumers must refuse to gate on a degraded detector unless forced.
    bool degraded = false;
};

/// Half noise-perturbed, half coordinate-shuffled copies of the inputs.
std::vector<std::vector<double>> synthesize_negatives(
    const std::vector<std::vector<double>>& in_dist, double noise_sigmas, std::uint64_t seed);

/// Binary cross-entropy on in-distribution examples (label 1) against
/// synthesized negatives (label 0); deterministic under cfg.seed.
OodDetector train_detector(const std::vector<std::vector<double>>& in_dist,
                           const OodTrainConfig& cfg);

/// tau_in: 5th percentile of g over the in-distribution holdout;
/// tau_out: 95th percentile of g over negatives (nearest-rank percentiles).
/// Overlap (tau_out >= tau_in) flags degraded mode and rebuilds tau_in from
/// the two distributions' medians.
Thresholds calibrate_thresholds(const OodDetector& det,
                                const std::vector<std::vector<double>>& in_dist_holdout,
                                const std::vector<std::vector<double>>& negatives);

inline constexpr std::uint32_t kDetectorFormatVersion = 1;
inline constexpr char kDetectorMagic[] = "PLNRDTCT";

void save_detector(const OodDetector& det, const Thresholds& th, const std::string& path);
std::pair<OodDetector, Thresholds> load_detector(const std::string& path);

}  // namespace planrank
