// planrank command line: reproducible pipelines over the plan-ranking
// library. Every run is a pure function of (config file, input files,
// seed); all randomness derives from the single config seed.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error,
// 3 model or artifact format error.

#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "planrank/blobfile.hpp"
#include "planrank/decision.hpp"
#include "planrank/evalkit.hpp"
#include "planrank/ood.hpp"
#include "planrank/training.hpp"

namespace {

using nlohmann::json;
using namespace planrank;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
    if (!obj.is_object()) throw UsageError(context + " must be a JSON object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw UsageError("unknown key '" + key + "' in " + context);
}

struct RunConfig {
    std::uint64_t seed = 42;
    WorkloadConfig workload;
    double split_ratio = 0.8;
    TrainConfig train;
    OodTrainConfig ood;
    double ood_holdout_fraction = 0.2;
    int decision_k = 3;
    double tie_epsilon = -1.0;  // < 0: derive from the score scale
    bool force_degraded = false;
    std::map<std::string, std::string> paths;
};

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot open config file: " + path);
    json doc = json::parse(f, nullptr, false);
    if (doc.is_discarded()) throw UsageError("config file is not valid JSON: " + path);

    check_keys(doc, {"format_version", "seed", "workload", "split_ratio", "train", "ranker",
                     "ood", "decision", "paths"},
               "config");

    RunConfig cfg;
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();

    if (doc.contains("workload")) {
        const json& w = doc.at("workload");
        check_keys(w, {"num_queries", "plans_per_query", "perturbation_log_range", "noise_cv",
                       "runs_per_plan"},
                   "config.workload");
        if (w.contains("num_queries")) cfg.workload.num_queries = w.at("num_queries").get<int>();
        if (w.contains("plans_per_query")) {
            auto range = w.at("plans_per_query").get<std::vector<int>>();
            if (range.size() != 2) throw UsageError("plans_per_query must be [min, max]");
            cfg.workload.plans_per_query_min = range[0];
            cfg.workload.plans_per_query_max = range[1];
        }
        if (w.contains("perturbation_log_range"))
            cfg.workload.perturbation_log_range = w.at("perturbation_log_range").get<double>();
        if (w.contains("noise_cv")) cfg.workload.noise_cv = w.at("noise_cv").get<double>();
        if (w.contains("runs_per_plan"))
            cfg.workload.runs_per_plan = w.at("runs_per_plan").get<int>();
    }

    if (doc.contains("split_ratio")) cfg.split_ratio = doc.at("split_ratio").get<double>();

    if (doc.contains("train")) {
        const json& t = doc.at("train");
        check_keys(t, {"learning_rate", "epochs", "batch", "embedder"}, "config.train");
        if (t.contains("learning_rate"))
            cfg.train.learning_rate = t.at("learning_rate").get<double>();
        if (t.contains("epochs")) cfg.train.epochs = t.at("epochs").get<int>();
        if (t.contains("batch")) cfg.train.batch = t.at("batch").get<int>();
        if (t.contains("embedder"))
            cfg.train.embedder = embedder_kind_from_name(t.at("embedder").get<std::string>());
    }

    if (doc.contains("ranker")) {
        const json& r = doc.at("ranker");
        check_keys(r, {"d_model", "num_layers", "num_heads", "d_ff", "n_max"}, "config.ranker");
        if (r.contains("d_model")) cfg.train.ranker.d_model = r.at("d_model").get<int>();
        if (r.contains("num_layers")) cfg.train.ranker.num_layers = r.at("num_layers").get<int>();
        if (r.contains("num_heads")) cfg.train.ranker.num_heads = r.at("num_heads").get<int>();
        if (r.contains("d_ff")) cfg.train.ranker.d_ff = r.at("d_ff").get<int>();
        if (r.contains("n_max")) cfg.train.ranker.n_max = r.at("n_max").get<int>();
    }

    if (doc.contains("ood")) {
        const json& o = doc.at("ood");
        check_keys(o, {"hidden_dim", "epochs", "learning_rate", "noise_sigmas",
                       "negatives_per_example", "holdout_fraction"},
                   "config.ood");
        if (o.contains("hidden_dim")) cfg.ood.hidden_dim = o.at("hidden_dim").get<int>();
        if (o.contains("epochs")) cfg.ood.epochs = o.at("epochs").get<int>();
        if (o.contains("learning_rate"))
            cfg.ood.learning_rate = o.at("learning_rate").get<double>();
        if (o.contains("noise_sigmas")) cfg.ood.noise_sigmas = o.at("noise_sigmas").get<double>();
        if (o.contains("negatives_per_example"))
            cfg.ood.negatives_per_example = o.at("negatives_per_example").get<int>();
        if (o.contains("holdout_fraction"))
            cfg.ood_holdout_fraction = o.at("holdout_fraction").get<double>();
    }

    if (doc.contains("decision")) {
        const json& d = doc.at("decision");
        check_keys(d, {"k", "tie_epsilon", "force_degraded"}, "config.decision");
        if (d.contains("k")) cfg.decision_k = d.at("k").get<int>();
        if (d.contains("tie_epsilon")) cfg.tie_epsilon = d.at("tie_epsilon").get<double>();
        if (d.contains("force_degraded"))
            cfg.force_degraded = d.at("force_degraded").get<bool>();
    }

    if (doc.contains("paths")) {
        check_keys(doc.at("paths"),
                   {"dataset", "split", "checkpoint", "detector", "report", "candidate_set",
                    "ranking", "decision"},
                   "config.paths");
        for (const auto& [key, value] : doc.at("paths").items())
            cfg.paths[key] = value.get<std::string>();
    }
    return cfg;
}

std::string need_path(const RunConfig& cfg, const std::string& key, const std::string& override_path) {
    if (!override_path.empty()) return override_path;
    auto it = cfg.paths.find(key);
    if (it == cfg.paths.end())
        throw UsageError("config.paths." + key + " is required for this command");
    return it->second;
}

struct SplitManifest {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

void write_split_manifest(const std::string& path, const SplitResult& split, double ratio,
                          std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["ratio"] = ratio;
    j["seed"] = seed;
    auto ids = [](const std::vector<CandidateSet>& sets) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& cs : sets) arr.push_back(cs.query_id);
        return arr;
    };
    j["train_query_ids"] = ids(split.train);
    j["test_query_ids"] = ids(split.test);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << j.dump(2) << '\n';
}

SplitManifest load_split_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open split manifest: " + path);
    json doc = json::parse(f, nullptr, false);
    if (doc.is_discarded()) throw MalformedDocumentError("split manifest is not valid JSON");
    SplitManifest m;
    m.train_ids = doc.at("train_query_ids").get<std::vector<std::string>>();
    m.test_ids = doc.at("test_query_ids").get<std::vector<std::string>>();
    return m;
}

std::vector<CandidateSet> select_queries(const std::vector<CandidateSet>& all,
                                         const std::vector<std::string>& ids) {
    std::map<std::string, const CandidateSet*> by_id;
    for (const auto& cs : all) by_id[cs.query_id] = &cs;
    std::vector<CandidateSet> out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw MalformedDocumentError("split manifest names unknown query " + id);
        out.push_back(*it->second);
    }
    return out;
}

CandidateSet load_candidate_set_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open candidate set: " + path);
    std::string line;
    while (std::getline(f, line))
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) break;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded())
        throw MalformedDocumentError("candidate set file is not valid JSON: " + path);
    return candidate_set_from_json(doc);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << text;
}

// --- commands ---------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const std::string& out_override) {
    WorkloadConfig w = cfg.workload;
    w.seed = cfg.seed;
    auto sets = generate_synthetic_workload(w);
    std::string dataset_path = need_path(cfg, "dataset", out_override);
    write_dataset_jsonl(dataset_path, sets);
    auto split = split_dataset(sets, cfg.split_ratio, cfg.seed);
    std::string split_path = need_path(cfg, "split", "");
    write_split_manifest(split_path, split, cfg.split_ratio, cfg.seed);
    std::cerr << "wrote " << sets.size() << " queries to " << dataset_path << " ("
              << split.train.size() << " train / " << split.test.size() << " test in "
              << split_path << ")\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& out_override) {
    auto all = load_dataset_jsonl(need_path(cfg, "dataset", ""));
    auto manifest = load_split_manifest(need_path(cfg, "split", ""));
    auto train_set = select_queries(all, manifest.train_ids);

    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    auto ckpt = train(train_set, tc, [](int epoch, double loss) {
        std::cout << "epoch " << epoch << " mean_loss " << loss << '\n';
    });
    std::string path = need_path(cfg, "checkpoint", out_override);
    save_checkpoint(ckpt, path);
    std::cerr << "wrote checkpoint to " << path << " (final loss " << ckpt.meta.final_loss
              << ")\n";
    return 0;
}

int cmd_train_ood(const RunConfig& cfg, const std::string& out_override) {
    auto ckpt = load_checkpoint(need_path(cfg, "checkpoint", ""));
    auto all = load_dataset_jsonl(need_path(cfg, "dataset", ""));
    auto manifest = load_split_manifest(need_path(cfg, "split", ""));
    auto train_set = select_queries(all, manifest.train_ids);

    std::vector<std::vector<double>> features;
    for (const auto& cs : train_set)
        for (const auto& plan : cs.plans) features.push_back(detector_features(ckpt, plan));

    // deterministic detector-train / calibration-holdout split
    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::substream(cfg.seed, 0x00Dull);
    rng.shuffle(order);
    std::size_t holdout_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg.ood_holdout_fraction *
                                    static_cast<double>(features.size())));
    std::vector<std::vector<double>> holdout, det_train;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < holdout_count ? holdout : det_train).push_back(features[order[i]]);

    OodTrainConfig oc = cfg.ood;
    oc.seed = cfg.seed;
    OodDetector det = train_detector(det_train, oc);
    auto negatives = synthesize_negatives(holdout, oc.noise_sigmas, cfg.seed ^ 0xCA11ull);
    Thresholds th = calibrate_thresholds(det, holdout, negatives);

    std::string path = need_path(cfg, "detector", out_override);
    save_detector(det, th, path);
    std::cerr << "wrote detector to " << path << " (tau_in " << th.tau_in << ", tau_out "
              << th.tau_out << (th.degraded ? ", DEGRADED" : "") << ")\n";
    return 0;
}

int cmd_rank(const RunConfig& cfg, const std::string& out_override) {
    auto ckpt = load_checkpoint(need_path(cfg, "checkpoint", ""));
    CandidateSet cs = load_candidate_set_file(need_path(cfg, "candidate_set", ""));
    ScoreMatrix scores = score_candidates(ckpt, cs);
    RankedList ranked = decode_permutation(scores);

    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["query_id"] = cs.query_id;
    j["permutation"] = ranked.permutation;
    j["by_position"] = ranked.by_position;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        auto row = nlohmann::ordered_json::array();
        for (std::size_t p = 0; p < scores.size(); ++p) row.push_back(scores.at(i, p));
        rows.push_back(std::move(row));
    }
    j["scores"] = std::move(rows);

    std::string text = j.dump(2) + "\n";
    write_text(need_path(cfg, "ranking", out_override), text);
    std::cout << text;
    return 0;
}

int cmd_decide(const RunConfig& cfg, const std::string& out_override, int k_override) {
    auto ckpt = load_checkpoint(need_path(cfg, "checkpoint", ""));
    auto [det, th] = load_detector(need_path(cfg, "detector", ""));
    CandidateSet cs = load_candidate_set_file(need_path(cfg, "candidate_set", ""));

    int k = k_override > 0 ? k_override : cfg.decision_k;
    ScoreMatrix scores = score_candidates(ckpt, cs);
    double epsilon = cfg.tie_epsilon >= 0.0 ? cfg.tie_epsilon : default_tie_epsilon(scores);
    DecisionOutcome outcome = decide(cs, ckpt, det, th, k, epsilon, cfg.force_degraded);

    nlohmann::ordered_json j = decision_to_json(outcome);
    j["format_version"] = 1;
    std::string text = j.dump(2) + "\n";
    write_text(need_path(cfg, "decision", out_override), text);
    std::cout << text;
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& out_override, int k_override) {
    auto ckpt = load_checkpoint(need_path(cfg, "checkpoint", ""));
    auto [det, th] = load_detector(need_path(cfg, "detector", ""));
    auto all = load_dataset_jsonl(need_path(cfg, "dataset", ""));
    auto manifest = load_split_manifest(need_path(cfg, "split", ""));
    auto test_set = select_queries(all, manifest.test_ids);

    int k = k_override > 0 ? k_override : cfg.decision_k;
    EvalReport report = compare_policies(test_set, ckpt, det, th, k, cfg.force_degraded);

    std::cout << render_report_table(report);
    write_text(need_path(cfg, "report", out_override), report_to_json(report).dump(2) + "\n");
    return 0;
}

int cmd_inspect(const RunConfig& cfg, const std::string& file_arg) {
    std::vector<std::string> targets;
    if (!file_arg.empty()) {
        targets.push_back(file_arg);
    } else {
        for (const char* key : {"checkpoint", "detector"}) {
            auto it = cfg.paths.find(key);
            if (it != cfg.paths.end()) targets.push_back(it->second);
        }
        if (targets.empty())
            throw UsageError("inspect needs a FILE argument or checkpoint/detector paths");
    }
    for (const auto& path : targets) {
        nlohmann::ordered_json meta = read_blob_meta(path);
        nlohmann::ordered_json out;
        out["file"] = path;
        out["format_version"] = meta["format_version"];
        out["meta"] = meta["meta"];
        out["blob_count"] = meta["blobs"].size();
        std::size_t coords = 0;
        for (const auto& b : meta["blobs"]) {
            std::size_t n = 1;
            for (const auto& d : b["shape"]) n *= d.get<std::size_t>();
            coords += n;
        }
        out["parameter_count"] = coords;
        std::cout << out.dump(2) << '\n';
    }
    return 0;
}

int classify_exit_code(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const InvalidConfigError*>(&e) ||
        dynamic_cast<const KOutOfRangeError*>(&e) ||
        dynamic_cast<const std::invalid_argument*>(&e))
        return 1;
    if (dynamic_cast<const VersionMismatchError*>(&e) ||
        dynamic_cast<const CorruptFileError*>(&e) ||
        dynamic_cast<const DimensionMismatchError*>(&e) ||
        dynamic_cast<const ListTooLongError*>(&e) ||
        dynamic_cast<const NonFiniteScoresError*>(&e) ||
        dynamic_cast<const DivergedLossError*>(&e) ||
        dynamic_cast<const InvalidRanksError*>(&e) ||
        dynamic_cast<const DegradedDetectorError*>(&e) ||
        dynamic_cast<const ShapeMismatchError*>(&e))
        return 3;
    return 2;  // data errors and IO
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"learned query-plan ranking pipelines"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string inspect_file;
    int k_override = -1;
    std::int64_t seed_override = -1;
    std::string embedder_override;

    app.add_option("--config", config_path, "run configuration (JSON)")->required();
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--out", out_override, "override the command's primary output path");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset and split");
    auto* train_cmd = app.add_subcommand("train", "train the ranking model");
    train_cmd->add_option("--embedder", embedder_override, "tree_lstm | tree_cnn");
    auto* train_ood = app.add_subcommand("train-ood", "train and calibrate the detector");
    auto* rank = app.add_subcommand("rank", "rank one candidate set");
    auto* decide_cmd = app.add_subcommand("decide", "hybrid-select one candidate set");
    decide_cmd->add_option("--k", k_override, "top-k gate width");
    auto* eval = app.add_subcommand("eval", "evaluate policies on the test split");
    eval->add_option("--k", k_override, "top-k gate width");
    auto* inspect = app.add_subcommand("inspect", "dump artifact headers");
    inspect->add_option("file", inspect_file, "checkpoint or detector file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        RunConfig cfg = load_run_config(config_path);
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        if (!embedder_override.empty())
            cfg.train.embedder = embedder_kind_from_name(embedder_override);

        if (*gen) return cmd_gen_data(cfg, out_override);
        if (*train_cmd) return cmd_train(cfg, out_override);
        if (*train_ood) return cmd_train_ood(cfg, out_override);
        if (*rank) return cmd_rank(cfg, out_override);
        if (*decide_cmd) return cmd_decide(cfg, out_override, k_override);
        if (*eval) return cmd_eval(cfg, out_override, k_override);
        if (*inspect) return cmd_inspect(cfg, inspect_file);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return classify_exit_code(e);
    }
}
