// Node featurization and tree encoders mapping whole plans to fixed-size
// vectors. Both encoders emit d_model-wide embeddings and are
// interchangeable behind the checkpoint's embedder field.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "planrank/dataset.hpp"
#include "planrank/numerics.hpp"
#include "planrank/plan_ir.hpp"
#include "planrank/rng.hpp"

namespace planrank {

struct DimensionMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kTableBuckets = 16;
/// operator one-hot + scaled log-cardinality + scaled log-cost + table bits
inline constexpr int kFeatureWidth = kOperatorKindCount + 2 + kTableBuckets;

/// Corpus-level normalizers recorded at training time and stored in the
/// checkpoint; featurization clips at 1 beyond the recorded maxima.
struct ScalingRecord {
    double max_log_card = 1.0;  // max over corpus of log1p(est_cardinality)
    double max_log_cost = 1.0;

    static ScalingRecord from_corpus(const std::vector<CandidateSet>& sets);
};

struct FeatureNode {
    std::array<double, kFeatureWidth> values{};
    std::vector<FeatureNode> children;

    double log_card() const { return values[kOperatorKindCount]; }
    double log_cost() const { return values[kOperatorKindCount + 1]; }
};

/// Structure-preserving featurization of a plan tree.
FeatureNode featurize(const PlanTree& plan, const ScalingRecord& scaling);
FeatureNode featurize_node(const PlanNode& node, const ScalingRecord& scaling);

std::uint64_t table_bucket(const std::string& table_id);  // FNV-1a mod 16

enum class EmbedderKind { TreeLstm, TreeCnn };

const char* embedder_kind_name(EmbedderKind k);
EmbedderKind embedder_kind_from_name(const std::string& name);  // throws on unknown

/// Creates the encoder's parameters (scaled-uniform init, 1/sqrt(fan_in))
/// under names prefixed "emb.".
void init_embedder_params(ParamStore& store, EmbedderKind kind, int d_model, Rng& rng);

/// Child-sum TreeLSTM: gates combine a node's features with the sum of its
/// children's hidden states, one forget gate per child; root hidden state is
/// linearly projected to d_model. Returns a [d_model] node.
Graph::Node embed_tree_lstm(Graph& g, ParamStore& params, const FeatureNode& tree, int d_model);

/// Per-node input projection, two rounds of (node, left child, right child)
/// triangle convolution with a learned stand-in vector for absent children,
/// dimension-wise max pooling over all nodes, then a final linear layer.
Graph::Node embed_tree_cnn(Graph& g, ParamStore& params, const FeatureNode& tree, int d_model);

Graph::Node embed_plan(Graph& g, ParamStore& params, EmbedderKind kind, const FeatureNode& tree,
                       int d_model);

}  // namespace planrank
