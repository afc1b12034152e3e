#include "planrank/embedder.hpp"

#include <algorithm>
#include <cmath>

namespace planrank {

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void scan_maxima(const PlanNode& n, double& max_card, double& max_cost) {
    max_card = std::max(max_card, std::log1p(n.est_cardinality));
    max_cost = std::max(max_cost, std::log1p(n.est_cost));
    for (const auto& c : n.children) scan_maxima(c, max_card, max_cost);
}

NumArray uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    NumArray a(std::move(shape));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-bound, bound);
    return a;
}

void create_matrix(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                   Rng& rng) {
    store.create(name, {in, out}) = uniform_init({in, out}, in, rng);
}

void create_vector(ParamStore& store, const std::string& name, std::size_t d, Rng& rng,
                   bool zero = true) {
    NumArray& v = store.create(name, {d});
    if (!zero) v = uniform_init({d}, d, rng);
}

void check_shape(const ParamStore& params, const std::string& name,
                 const std::vector<std::size_t>& shape) {
    if (!params.has(name))
        throw DimensionMismatchError("missing parameter: " + name);
    if (params.at(name).value.shape() != shape)
        throw DimensionMismatchError("parameter " + name + " has the wrong shape");
}

}  // namespace

ScalingRecord ScalingRecord::from_corpus(const std::vector<CandidateSet>& sets) {
    double max_card = 0.0, max_cost = 0.0;
    for (const auto& cs : sets)
        for (const auto& plan : cs.plans) scan_maxima(plan.root, max_card, max_cost);
    ScalingRecord rec;
    rec.max_log_card = std::max(max_card, 1e-9);
    rec.max_log_cost = std::max(max_cost, 1e-9);
    return rec;
}

std::uint64_t table_bucket(const std::string& table_id) {
    return fnv1a64(table_id) % kTableBuckets;
}

FeatureNode featurize_node(const PlanNode& node, const ScalingRecord& scaling) {
    if (scaling.max_log_card <= 0.0 || scaling.max_log_cost <= 0.0)
        throw std::invalid_argument("scaling maxima must be positive");
    FeatureNode f;
    f.values[static_cast<int>(node.operator_kind)] = 1.0;
    f.values[kOperatorKindCount] =
        std::min(std::log1p(node.est_cardinality) / scaling.max_log_card, 1.0);
    f.values[kOperatorKindCount + 1] =
        std::min(std::log1p(node.est_cost) / scaling.max_log_cost, 1.0);
    for (const auto& t : node.table_ids)
        f.values[kOperatorKindCount + 2 + table_bucket(t)] = 1.0;
    f.children.reserve(node.children.size());
    for (const auto& c : node.children) f.children.push_back(featurize_node(c, scaling));
    return f;
}

FeatureNode featurize(const PlanTree& plan, const ScalingRecord& scaling) {
    return featurize_node(plan.root, scaling);
}

const char* embedder_kind_name(EmbedderKind k) {
    return k == EmbedderKind::TreeLstm ? "tree_lstm" : "tree_cnn";
}

EmbedderKind embedder_kind_from_name(const std::string& name) {
    if (name == "tree_lstm") return EmbedderKind::TreeLstm;
    if (name == "tree_cnn") return EmbedderKind::TreeCnn;
    throw std::invalid_argument("unknown embedder: " + name);
}

void init_embedder_params(ParamStore& store, EmbedderKind kind, int d_model, Rng& rng) {
    std::size_t d = static_cast<std::size_t>(d_model);
    std::size_t w = kFeatureWidth;
    if (kind == EmbedderKind::TreeLstm) {
        for (const char* gate : {"i", "f", "o", "u"}) {
            create_matrix(store, std::string("emb.lstm.w") + gate, w, d, rng);
            create_matrix(store, std::string("emb.lstm.u") + gate, d, d, rng);
            create_vector(store, std::string("emb.lstm.b") + gate, d, rng);
        }
        create_matrix(store, "emb.lstm.proj_w", d, d, rng);
        create_vector(store, "emb.lstm.proj_b", d, rng);
    } else {
        create_matrix(store, "emb.cnn.in_w", w, d, rng);
        create_vector(store, "emb.cnn.in_b", d, rng);
        for (int r = 0; r < 2; ++r) {
            std::string p = "emb.cnn.r" + std::to_string(r) + ".";
            create_matrix(store, p + "self_w", d, d, rng);
            create_matrix(store, p + "left_w", d, d, rng);
            create_matrix(store, p + "right_w", d, d, rng);
            create_vector(store, p + "b", d, rng);
            create_vector(store, p + "zero_child", d, rng, /*zero=*/false);
        }
        create_matrix(store, "emb.cnn.out_w", d, d, rng);
        create_vector(store, "emb.cnn.out_b", d, rng);
    }
}

namespace {

struct LstmParams {
    Graph::Node wi, wf, wo, wu, ui, uf, uo, uu, bi, bf, bo, bu;
};

struct LstmState {
    Graph::Node h, c;
};

LstmState lstm_recurse(Graph& g, const LstmParams& p, const FeatureNode& node,
                       Graph::Node zero_vec) {
    std::vector<LstmState> kids;
    kids.reserve(node.children.size());
    for (const auto& child : node.children) kids.push_back(lstm_recurse(g, p, child, zero_vec));

    Graph::Node x = g.constant(NumArray({kFeatureWidth},
                                        {node.values.begin(), node.values.end()}));
    Graph::Node h_sum = zero_vec;
    for (const auto& k : kids) h_sum = g.add(h_sum, k.h);

    auto gate = [&](Graph::Node w, Graph::Node u, Graph::Node b, Graph::Node h_in) {
        return g.add(g.add(g.matmul(x, w), g.matmul(h_in, u)), b);
    };
    Graph::Node i = g.sigmoid(gate(p.wi, p.ui, p.bi, h_sum));
    Graph::Node o = g.sigmoid(gate(p.wo, p.uo, p.bo, h_sum));
    Graph::Node u = g.tanh_op(gate(p.wu, p.uu, p.bu, h_sum));

    Graph::Node c = g.mul(i, u);
    for (const auto& k : kids) {
        Graph::Node f = g.sigmoid(gate(p.wf, p.uf, p.bf, k.h));
        c = g.add(c, g.mul(f, k.c));
    }
    return {g.mul(o, g.tanh_op(c)), c};
}

struct CnnRound {
    Graph::Node self_w, left_w, right_w, b, zero_child;
};

void cnn_project(Graph& g, Graph::Node in_w, Graph::Node in_b, const FeatureNode& node,
                 std::vector<Graph::Node>& out, std::vector<int>& left_of,
                 std::vector<int>& right_of) {
    Graph::Node x = g.constant(NumArray({kFeatureWidth},
                                        {node.values.begin(), node.values.end()}));
    int self = static_cast<int>(out.size());
    out.push_back(g.add(g.matmul(x, in_w), in_b));
    left_of.push_back(-1);
    right_of.push_back(-1);
    if (!node.children.empty()) {
        left_of[self] = static_cast<int>(out.size());
        cnn_project(g, in_w, in_b, node.children[0], out, left_of, right_of);
    }
    if (node.children.size() > 1) {
        right_of[self] = static_cast<int>(out.size());
        cnn_project(g, in_w, in_b, node.children[1], out, left_of, right_of);
    }
}

}  // namespace

Graph::Node embed_tree_lstm(Graph& g, ParamStore& params, const FeatureNode& tree, int d_model) {
    std::size_t d = static_cast<std::size_t>(d_model);
    for (const char* gate : {"i", "f", "o", "u"}) {
        check_shape(params, std::string("emb.lstm.w") + gate, {kFeatureWidth, d});
        check_shape(params, std::string("emb.lstm.u") + gate, {d, d});
        check_shape(params, std::string("emb.lstm.b") + gate, {d});
    }
    check_shape(params, "emb.lstm.proj_w", {d, d});
    check_shape(params, "emb.lstm.proj_b", {d});

    LstmParams p{
        g.param(params, "emb.lstm.wi"), g.param(params, "emb.lstm.wf"),
        g.param(params, "emb.lstm.wo"), g.param(params, "emb.lstm.wu"),
        g.param(params, "emb.lstm.ui"), g.param(params, "emb.lstm.uf"),
        g.param(params, "emb.lstm.uo"), g.param(params, "emb.lstm.uu"),
        g.param(params, "emb.lstm.bi"), g.param(params, "emb.lstm.bf"),
        g.param(params, "emb.lstm.bo"), g.param(params, "emb.lstm.bu"),
    };
    Graph::Node zero_vec = g.constant(NumArray({d}));
    LstmState root = lstm_recurse(g, p, tree, zero_vec);
    return g.add(g.matmul(root.h, g.param(params, "emb.lstm.proj_w")),
                 g.param(params, "emb.lstm.proj_b"));
}

Graph::Node embed_tree_cnn(Graph& g, ParamStore& params, const FeatureNode& tree, int d_model) {
    std::size_t d = static_cast<std::size_t>(d_model);
    check_shape(params, "emb.cnn.in_w", {kFeatureWidth, d});
    check_shape(params, "emb.cnn.in_b", {d});
    check_shape(params, "emb.cnn.out_w", {d, d});
    check_shape(params, "emb.cnn.out_b", {d});

    std::vector<Graph::Node> current;
    std::vector<int> left_of, right_of;
    cnn_project(g, g.param(params, "emb.cnn.in_w"), g.param(params, "emb.cnn.in_b"), tree,
                current, left_of, right_of);

    for (int r = 0; r < 2; ++r) {
        std::string prefix = "emb.cnn.r" + std::to_string(r) + ".";
        for (const char* suffix : {"self_w", "left_w", "right_w"})
            check_shape(params, prefix + suffix, {d, d});
        check_shape(params, prefix + "b", {d});
        check_shape(params, prefix + "zero_child", {d});
        CnnRound round{
            g.param(params, prefix + "self_w"), g.param(params, prefix + "left_w"),
            g.param(params, prefix + "right_w"), g.param(params, prefix + "b"),
            g.param(params, prefix + "zero_child"),
        };
        std::vector<Graph::Node> next(current.size());
        for (std::size_t v = 0; v < current.size(); ++v) {
            Graph::Node left = left_of[v] >= 0 ? current[left_of[v]] : round.zero_child;
            Graph::Node right = right_of[v] >= 0 ? current[right_of[v]] : round.zero_child;
            Graph::Node pre = g.add(g.add(g.matmul(current[v], round.self_w),
                                          g.matmul(left, round.left_w)),
                                    g.add(g.matmul(right, round.right_w), round.b));
            next[v] = g.tanh_op(pre);
        }
        current = std::move(next);
    }

    Graph::Node pooled = g.max_over_rows(g.stack_rows(current));
    return g.add(g.matmul(pooled, g.param(params, "emb.cnn.out_w")),
                 g.param(params, "emb.cnn.out_b"));
}

Graph::Node embed_plan(Graph& g, ParamStore& params, EmbedderKind kind, const FeatureNode& tree,
                       int d_model) {
    return kind == EmbedderKind::TreeLstm ? embed_tree_lstm(g, params, tree, d_model)
                                          : embed_tree_cnn(g, params, tree, d_model);
}

}  // namespace planrank
