#include "planrank/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "planrank/rng.hpp"

namespace planrank {

int CandidateSet::plan_at_rank(int r) const {
    for (std::size_t i = 0; i < true_ranks.size(); ++i)
        if (true_ranks[i] == r) return static_cast<int>(i);
    throw std::out_of_range("rank " + std::to_string(r) + " not present");
}

void validate_config(const WorkloadConfig& cfg) {
    if (cfg.num_queries < 1) throw InvalidConfigError("num_queries must be positive");
    if (cfg.plans_per_query_min < 2) throw InvalidConfigError("plans_per_query_min must be >= 2");
    if (cfg.plans_per_query_max < cfg.plans_per_query_min)
        throw InvalidConfigError("plans_per_query range is empty");
    if (cfg.plans_per_query_max > kMaxPlansPerQuery)
        throw InvalidConfigError("plans_per_query_max exceeds " +
                                 std::to_string(kMaxPlansPerQuery));
    if (cfg.perturbation_log_range < 0.0 || !std::isfinite(cfg.perturbation_log_range))
        throw InvalidConfigError("perturbation_log_range must be >= 0");
    if (cfg.noise_cv < 0.0 || cfg.noise_cv >= 1.0)
        throw InvalidConfigError("noise_cv must be in [0, 1)");
    if (cfg.runs_per_plan < 1) throw InvalidConfigError("runs_per_plan must be >= 1");
}

double operator_latency_ms(OperatorKind kind, double out_rows, double left_rows,
                           double right_rows) {
    switch (kind) {
        case OperatorKind::SeqScan:
            return 0.010 * out_rows + 1.0;
        case OperatorKind::IndexScan:
            return 0.003 * out_rows + 2.0;
        case OperatorKind::HashJoin:
            return 0.012 * (left_rows + right_rows) + 0.004 * out_rows + 2.0;
        case OperatorKind::MergeJoin:
            return 0.002 * (left_rows * std::log2(1.0 + left_rows) +
                            right_rows * std::log2(1.0 + right_rows)) +
                   0.004 * out_rows + 2.0;
        case OperatorKind::NestedLoop:
            return 5e-4 * left_rows * right_rows + 0.004 * out_rows + 1.0;
        case OperatorKind::Sort:
            return 0.002 * left_rows * std::log2(1.0 + left_rows) + 1.0;
        case OperatorKind::Aggregate:
            return 0.008 * left_rows + 1.0;
        case OperatorKind::Materialize:
            return 0.005 * left_rows + 1.0;
        case OperatorKind::Other:
            return 0.010 * out_rows + 1.0;
    }
    return 0.0;
}

double plan_latency_ms(const PlanNode& node) {
    double left = node.children.size() > 0 ? node.children[0].est_cardinality : 0.0;
    double right = node.children.size() > 1 ? node.children[1].est_cardinality : 0.0;
    double total = operator_latency_ms(node.operator_kind, node.est_cardinality, left, right);
    for (const auto& c : node.children) total += plan_latency_ms(c);
    return total;
}

std::pair<std::vector<double>, std::vector<int>> organize_ranking(
    const std::vector<std::vector<double>>& latency_runs_ms) {
    std::vector<double> means;
    means.reserve(latency_runs_ms.size());
    for (std::size_t i = 0; i < latency_runs_ms.size(); ++i) {
        const auto& runs = latency_runs_ms[i];
        if (runs.empty())
            throw EmptyRunsError("plan " + std::to_string(i) + " has no latency runs");
        double sum = 0.0;
        for (double v : runs) {
            if (!std::isfinite(v) || v < 0.0)
                throw NonFiniteLatencyError("plan " + std::to_string(i) +
                                            " has a non-finite or negative latency");
            sum += v;
        }
        means.push_back(sum / static_cast<double>(runs.size()));
    }

    std::vector<std::size_t> order(means.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
    std::vector<int> ranks(means.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        ranks[order[pos]] = static_cast<int>(pos) + 1;
    return {std::move(means), std::move(ranks)};
}

namespace {

// Plan skeleton carrying the generator's ground-truth row counts. The
// PlanTrees handed to consumers only ever see perturbed estimates.
struct BaseNode {
    OperatorKind kind = OperatorKind::Other;
    double true_rows = 0.0;
    std::string table;
    std::vector<BaseNode> children;
};

constexpr OperatorKind kJoinKinds[] = {OperatorKind::HashJoin, OperatorKind::MergeJoin,
                                       OperatorKind::NestedLoop};
constexpr OperatorKind kUnaryKinds[] = {OperatorKind::Sort, OperatorKind::Aggregate,
                                        OperatorKind::Materialize};

BaseNode gen_base(Rng& rng, int level, int depth) {
    BaseNode n;
    if (level == depth) {
        n.kind = rng.bernoulli(0.6) ? OperatorKind::SeqScan : OperatorKind::IndexScan;
        n.true_rows = std::pow(10.0, rng.uniform(2.0, 5.0));
        n.table = "t" + std::to_string(rng.uniform_int(12));
        return n;
    }
    if (rng.bernoulli(0.15)) {
        n.kind = kUnaryKinds[rng.uniform_int(3)];
        n.children.push_back(gen_base(rng, level + 1, depth));
        double child_rows = n.children[0].true_rows;
        n.true_rows = n.kind == OperatorKind::Aggregate
                          ? std::max(1.0, child_rows * rng.uniform(0.05, 0.5))
                          : child_rows;
        return n;
    }
    n.kind = kJoinKinds[rng.uniform_int(3)];
    n.children.push_back(gen_base(rng, level + 1, depth));
    n.children.push_back(gen_base(rng, level + 1, depth));
    double sel = std::pow(10.0, rng.uniform(-5.0, -0.5));
    n.true_rows = std::clamp(n.children[0].true_rows * n.children[1].true_rows * sel, 1.0, 1e7);
    return n;
}

double base_latency_ms(const BaseNode& n) {
    double left = n.children.size() > 0 ? n.children[0].true_rows : 0.0;
    double right = n.children.size() > 1 ? n.children[1].true_rows : 0.0;
    double total = operator_latency_ms(n.kind, n.true_rows, left, right);
    for (const auto& c : n.children) total += base_latency_ms(c);
    return total;
}

void collect_join_kinds(const BaseNode& n, std::vector<OperatorKind>& out) {
    if (is_join(n.kind)) out.push_back(n.kind);
    for (const auto& c : n.children) collect_join_kinds(c, out);
}

// Preorder rewrite of join kinds from a flat combo vector.
void apply_join_kinds(BaseNode& n, const std::vector<OperatorKind>& combo, std::size_t& next) {
    if (is_join(n.kind)) n.kind = combo[next++];
    for (auto& c : n.children) apply_join_kinds(c, combo, next);
}

// Estimates are drawn postorder so children are perturbed before the parent
// cost (which consumes their estimated rows) is computed.
PlanNode build_estimated(const BaseNode& n, Rng& rng, double log_range) {
    PlanNode p;
    p.operator_kind = n.kind;
    if (!n.table.empty()) p.table_ids.push_back(n.table);
    for (const auto& c : n.children) p.children.push_back(build_estimated(c, rng, log_range));
    double factor = log_range > 0.0 ? std::exp(rng.uniform(-log_range, log_range)) : 1.0;
    p.est_cardinality = n.true_rows * factor;
    double left = p.children.size() > 0 ? p.children[0].est_cardinality : 0.0;
    double right = p.children.size() > 1 ? p.children[1].est_cardinality : 0.0;
    p.est_cost = operator_latency_ms(p.operator_kind, p.est_cardinality, left, right);
    for (const auto& c : p.children) p.est_cost += c.est_cost;
    return p;
}

double total_est_cost(const PlanNode& n) { return n.est_cost; }  // costs accumulate bottom-up

std::string padded(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace

std::vector<CandidateSet> generate_synthetic_workload(const WorkloadConfig& cfg) {
    validate_config(cfg);
    std::vector<CandidateSet> out;
    out.reserve(cfg.num_queries);

    for (int q = 0; q < cfg.num_queries; ++q) {
        Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(q));

        int depth;
        {
            double u = rng.uniform();
            depth = u < 0.15 ? 2 : u < 0.45 ? 3 : u < 0.75 ? 4 : 5;
        }
        BaseNode base = gen_base(rng, 1, depth);
        std::vector<OperatorKind> base_combo;
        collect_join_kinds(base, base_combo);

        int n = cfg.plans_per_query_min +
                static_cast<int>(rng.uniform_int(
                    static_cast<std::uint64_t>(cfg.plans_per_query_max - cfg.plans_per_query_min) +
                    1));

        CandidateSet cs;
        cs.query_id = "q" + padded(q, 4);

        std::set<std::vector<OperatorKind>> seen;
        std::vector<double> true_latency;
        for (int c = 0; c < n; ++c) {
            std::vector<OperatorKind> combo = base_combo;
            if (c > 0) {
                // prefer structurally distinct variants; accept a repeat when
                // the combo space is smaller than the candidate count
                for (int attempt = 0; attempt < 8; ++attempt) {
                    combo = base_combo;
                    for (auto& k : combo)
                        if (rng.bernoulli(0.6)) k = kJoinKinds[rng.uniform_int(3)];
                    if (!seen.count(combo)) break;
                }
            }
            seen.insert(combo);

            BaseNode variant = base;
            std::size_t cursor = 0;
            apply_join_kinds(variant, combo, cursor);
            true_latency.push_back(base_latency_ms(variant));

            PlanTree tree;
            tree.plan_id = cs.query_id + "_p" + padded(c, 2);
            tree.root = build_estimated(variant, rng, cfg.perturbation_log_range);
            tree.node_count = count_nodes(tree.root);
            cs.plans.push_back(std::move(tree));
        }

        // mean-one lognormal measurement noise
        double sigma = cfg.noise_cv > 0.0 ? std::sqrt(std::log1p(cfg.noise_cv * cfg.noise_cv))
                                          : 0.0;
        double mu = -0.5 * sigma * sigma;
        for (int c = 0; c < n; ++c) {
            std::vector<double> runs;
            runs.reserve(cfg.runs_per_plan);
            for (int r = 0; r < cfg.runs_per_plan; ++r) {
                double factor = sigma > 0.0 ? std::exp(mu + sigma * rng.normal()) : 1.0;
                runs.push_back(true_latency[c] * factor);
            }
            cs.latency_runs_ms.push_back(std::move(runs));
        }

        auto [means, ranks] = organize_ranking(cs.latency_runs_ms);
        cs.mean_latency_ms = std::move(means);
        cs.true_ranks = std::move(ranks);

        int cbo = 0;
        for (int c = 1; c < n; ++c)
            if (total_est_cost(cs.plans[c].root) < total_est_cost(cs.plans[cbo].root)) cbo = c;
        cs.cbo_index = cbo;

        out.push_back(std::move(cs));
    }
    return out;
}

CandidateSet ingest_measurements(std::vector<PlanTree> plans,
                                 std::vector<std::vector<double>> latency_runs_ms,
                                 int cbo_index) {
    if (plans.size() != latency_runs_ms.size())
        throw LengthMismatchError("plans and latency_runs_ms lengths differ");
    if (plans.size() < 2) throw TooFewPlansError("a candidate set needs at least 2 plans");
    if (cbo_index < 0 || cbo_index >= static_cast<int>(plans.size()))
        throw InvalidConfigError("cbo_index out of range");
    CandidateSet cs;
    cs.plans = std::move(plans);
    cs.latency_runs_ms = std::move(latency_runs_ms);
    auto [means, ranks] = organize_ranking(cs.latency_runs_ms);
    cs.mean_latency_ms = std::move(means);
    cs.true_ranks = std::move(ranks);
    cs.cbo_index = cbo_index;
    return cs;
}

SplitResult split_dataset(const std::vector<CandidateSet>& data, double ratio,
                          std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidConfigError("split ratio must be in (0,1)");
    if (data.size() < 2) throw TooFewQueriesError("need at least 2 queries to split");

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::substream(seed, 0x5117ull);  // fixed split stream tag
    rng.shuffle(order);

    std::size_t train_count =
        static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(data.size())));
    train_count = std::min(train_count, data.size() - 1);

    SplitResult result;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < train_count ? result.train : result.test).push_back(data[order[i]]);
    return result;
}

nlohmann::ordered_json candidate_set_to_json(const CandidateSet& cs) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["query_id"] = cs.query_id;
    j["cbo_index"] = cs.cbo_index;
    auto plans = nlohmann::ordered_json::array();
    for (const auto& p : cs.plans) plans.push_back(plan_to_json(p));
    j["plans"] = std::move(plans);
    j["latency_runs_ms"] = cs.latency_runs_ms;
    return j;
}

CandidateSet candidate_set_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw MalformedDocumentError("candidate set must be a JSON object");
    for (const char* key : {"query_id", "plans", "latency_runs_ms", "cbo_index"})
        if (!doc.contains(key))
            throw MalformedDocumentError(std::string("candidate set missing '") + key + "'");

    std::vector<PlanTree> plans;
    for (const auto& p : doc.at("plans")) plans.push_back(plan_from_json(p));
    std::vector<std::vector<double>> runs =
        doc.at("latency_runs_ms").get<std::vector<std::vector<double>>>();
    CandidateSet cs = ingest_measurements(std::move(plans), std::move(runs),
                                          doc.at("cbo_index").get<int>());
    cs.query_id = doc.at("query_id").get<std::string>();
    return cs;
}

void write_dataset_jsonl(std::ostream& out, const std::vector<CandidateSet>& sets) {
    for (const auto& cs : sets) out << candidate_set_to_json(cs).dump() << '\n';
}

void write_dataset_jsonl(const std::string& path, const std::vector<CandidateSet>& sets) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_dataset_jsonl(f, sets);
}

std::vector<CandidateSet> load_dataset_jsonl(std::istream& in) {
    std::vector<CandidateSet> sets;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded())
            throw MalformedDocumentError("dataset line " + std::to_string(lineno) +
                                         " is not valid JSON");
        sets.push_back(candidate_set_from_json(doc));
    }
    return sets;
}

std::vector<CandidateSet> load_dataset_jsonl(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset: " + path);
    return load_dataset_jsonl(f);
}

}  // namespace planrank
