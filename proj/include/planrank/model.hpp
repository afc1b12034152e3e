// The trained artifact: configuration, scaling record and parameters, the
// end-to-end forward pass (featurize -> embed -> contextualize -> score),
// ranking inference, and checkpoint persistence.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planrank/dataset.hpp"
#include "planrank/embedder.hpp"
#include "planrank/ranker.hpp"

namespace planrank {

struct TrainConfig {
    double learning_rate = 5e-5;
    int epochs = 200;
    int batch = 1;  // candidate sets per optimizer step
    std::uint64_t seed = 42;
    EmbedderKind embedder = EmbedderKind::TreeLstm;
    RankerConfig ranker;

    void validate() const;
};

struct TrainMeta {
    int epochs_run = 0;
    double final_loss = 0.0;
};

struct ModelCheckpoint {
    TrainConfig config;
    ScalingRecord scaling;
    ParamStore params;
    TrainMeta meta;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[] = "PLNRMODL";

/// Fresh parameters for the configured embedder + ranker, deterministic
/// under cfg.seed.
ParamStore init_model_params(const TrainConfig& cfg);

/// Score matrix node [n, n] for one candidate list. Shared by training and
/// inference so the two can never diverge.
Graph::Node model_scores(Graph& g, ParamStore& params, const std::vector<PlanTree>& plans,
                         const TrainConfig& cfg, const ScalingRecord& scaling,
                         std::vector<Graph::Node>* attention_out = nullptr);

ScoreMatrix score_candidates(const ModelCheckpoint& ckpt, const CandidateSet& cs);

/// Full inference: featurize, embed, contextualize, score, decode.
RankedList rank_plans(const CandidateSet& cs, const ModelCheckpoint& ckpt);

/// Embedding vector for one plan under the checkpoint's encoder (detector
/// feature input).
NumArray plan_embedding(const ModelCheckpoint& ckpt, const PlanTree& plan);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc);

}  // namespace planrank
