#include "planrank/model.hpp"

#include <cmath>

#include "planrank/blobfile.hpp"

namespace planrank {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0 && learning_rate < 1.0))
        throw InvalidConfigError("learning_rate must be in (0, 1)");
    if (epochs < 1) throw InvalidConfigError("epochs must be positive");
    if (batch < 1) throw InvalidConfigError("batch must be positive");
    ranker.validate();
}

ParamStore init_model_params(const TrainConfig& cfg) {
    cfg.validate();
    ParamStore store;
    Rng rng(cfg.seed);
    init_embedder_params(store, cfg.embedder, cfg.ranker.d_model, rng);
    init_ranker_params(store, cfg.ranker, rng);
    return store;
}

Graph::Node model_scores(Graph& g, ParamStore& params, const std::vector<PlanTree>& plans,
                         const TrainConfig& cfg, const ScalingRecord& scaling,
                         std::vector<Graph::Node>* attention_out) {
    if (plans.size() < 2) throw std::invalid_argument("need at least 2 plans to score");
    std::vector<Graph::Node> embeddings;
    embeddings.reserve(plans.size());
    for (const auto& plan : plans) {
        FeatureNode feats = featurize(plan, scaling);
        embeddings.push_back(embed_plan(g, params, cfg.embedder, feats, cfg.ranker.d_model));
    }
    Graph::Node stacked = g.stack_rows(embeddings);
    Graph::Node contextual = encode_context(g, params, stacked, cfg.ranker, attention_out);
    return score_positions(g, params, contextual, cfg.ranker);
}

ScoreMatrix score_candidates(const ModelCheckpoint& ckpt, const CandidateSet& cs) {
    Graph g;
    // inference never writes gradients, but params are stored non-const;
    // the checkpoint is logically read-only here
    ParamStore& params = const_cast<ParamStore&>(ckpt.params);
    Graph::Node node = model_scores(g, params, cs.plans, ckpt.config, ckpt.scaling);
    return ScoreMatrix{g.value(node)};
}

RankedList rank_plans(const CandidateSet& cs, const ModelCheckpoint& ckpt) {
    return decode_permutation(score_candidates(ckpt, cs));
}

NumArray plan_embedding(const ModelCheckpoint& ckpt, const PlanTree& plan) {
    Graph g;
    ParamStore& params = const_cast<ParamStore&>(ckpt.params);
    FeatureNode feats = featurize(plan, ckpt.scaling);
    Graph::Node emb = embed_plan(g, params, ckpt.config.embedder, feats, ckpt.config.ranker.d_model);
    return g.value(emb);
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["learning_rate"] = cfg.learning_rate;
    j["epochs"] = cfg.epochs;
    j["batch"] = cfg.batch;
    j["seed"] = cfg.seed;
    j["embedder"] = embedder_kind_name(cfg.embedder);
    j["ranker"] = {{"d_model", cfg.ranker.d_model},
                   {"num_layers", cfg.ranker.num_layers},
                   {"num_heads", cfg.ranker.num_heads},
                   {"d_ff", cfg.ranker.d_ff},
                   {"n_max", cfg.ranker.n_max}};
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
    TrainConfig cfg;
    cfg.learning_rate = doc.at("learning_rate").get<double>();
    cfg.epochs = doc.at("epochs").get<int>();
    cfg.batch = doc.at("batch").get<int>();
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    cfg.embedder = embedder_kind_from_name(doc.at("embedder").get<std::string>());
    const auto& r = doc.at("ranker");
    cfg.ranker.d_model = r.at("d_model").get<int>();
    cfg.ranker.num_layers = r.at("num_layers").get<int>();
    cfg.ranker.num_heads = r.at("num_heads").get<int>();
    cfg.ranker.d_ff = r.at("d_ff").get<int>();
    cfg.ranker.n_max = r.at("n_max").get<int>();
    return cfg;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
    nlohmann::ordered_json meta;
    meta["kind"] = "model";
    meta["config"] = train_config_to_json(ckpt.config);
    meta["scaling"] = {{"max_log_card", ckpt.scaling.max_log_card},
                       {"max_log_cost", ckpt.scaling.max_log_cost}};
    meta["training"] = {{"epochs_run", ckpt.meta.epochs_run},
                        {"final_loss", ckpt.meta.final_loss}};

    std::vector<std::pair<std::string, NumArray>> blobs;
    for (const auto& [name, entry] : ckpt.params) blobs.emplace_back(name, entry.value);
    write_blob_file(path, kCheckpointMagic, kCheckpointFormatVersion, meta, blobs);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    BlobFile file = read_blob_file(path, kCheckpointMagic, kCheckpointFormatVersion);
    ModelCheckpoint ckpt;
    ckpt.config = train_config_from_json(file.meta.at("config"));
    ckpt.scaling.max_log_card = file.meta.at("scaling").at("max_log_card").get<double>();
    ckpt.scaling.max_log_cost = file.meta.at("scaling").at("max_log_cost").get<double>();
    ckpt.meta.epochs_run = file.meta.at("training").at("epochs_run").get<int>();
    ckpt.meta.final_loss = file.meta.at("training").at("final_loss").get<double>();
    for (auto& [name, arr] : file.blobs) {
        NumArray& dst = ckpt.params.create(name, arr.shape());
        dst = std::move(arr);
    }
    return ckpt;
}

}  // namespace planrank
