#include "planrank/ranker.hpp"

#include <algorithm>
#include <cmath>

#include "planrank/assignment.hpp"

namespace planrank {

void RankerConfig::validate() const {
    if (d_model < 1) throw std::invalid_argument("d_model must be positive");
    if (num_layers < 1) throw std::invalid_argument("num_layers must be positive");
    if (num_heads < 1) throw std::invalid_argument("num_heads must be positive");
    if (d_model % num_heads != 0)
        throw std::invalid_argument("d_model must be divisible by num_heads");
    if (d_ff < 1) throw std::invalid_argument("d_ff must be positive");
    if (n_max < 2) throw std::invalid_argument("n_max must be at least 2");
}

namespace {

NumArray uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    NumArray a(std::move(shape));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-bound, bound);
    return a;
}

std::string layer_prefix(int layer) { return "rnk.l" + std::to_string(layer) + "."; }

void check_shape(const ParamStore& params, const std::string& name,
                 const std::vector<std::size_t>& shape) {
    if (!params.has(name)) throw DimensionMismatchError("missing parameter: " + name);
    if (params.at(name).value.shape() != shape)
        throw DimensionMismatchError("parameter " + name + " has the wrong shape");
}

}  // namespace

void init_ranker_params(ParamStore& store, const RankerConfig& cfg, Rng& rng) {
    cfg.validate();
    std::size_t d = static_cast<std::size_t>(cfg.d_model);
    std::size_t dk = d / static_cast<std::size_t>(cfg.num_heads);
    std::size_t dff = static_cast<std::size_t>(cfg.d_ff);

    for (int l = 0; l < cfg.num_layers; ++l) {
        std::string p = layer_prefix(l);
        for (int h = 0; h < cfg.num_heads; ++h) {
            std::string hp = p + "h" + std::to_string(h) + ".";
            store.create(hp + "wq", {d, dk}) = uniform_init({d, dk}, d, rng);
            store.create(hp + "wk", {d, dk}) = uniform_init({d, dk}, d, rng);
            store.create(hp + "wv", {d, dk}) = uniform_init({d, dk}, d, rng);
        }
        store.create(p + "attn_mix", {d, d}) = uniform_init({d, d}, d, rng);
        store.create(p + "ln1.gain", {d}).fill(1.0);
        store.create(p + "ln1.bias", {d});
        store.create(p + "ff.w1", {d, dff}) = uniform_init({d, dff}, d, rng);
        store.create(p + "ff.b1", {dff});
        store.create(p + "ff.w2", {dff, d}) = uniform_init({dff, d}, dff, rng);
        store.create(p + "ff.b2", {d});
        store.create(p + "ln2.gain", {d}).fill(1.0);
        store.create(p + "ln2.bias", {d});
    }
    std::size_t n_max = static_cast<std::size_t>(cfg.n_max);
    store.create("rnk.score.proj_w", {d, d}) = uniform_init({d, d}, d, rng);
    store.create("rnk.score.proj_b", {d});
    store.create("rnk.score.pos_q", {n_max, d}) = uniform_init({n_max, d}, d, rng);
}

Graph::Node encode_context(Graph& g, ParamStore& params, Graph::Node embeddings,
                           const RankerConfig& cfg, std::vector<Graph::Node>* attention_out) {
    cfg.validate();
    const NumArray& in = g.value(embeddings);
    if (in.rank() != 2 || in.cols() != static_cast<std::size_t>(cfg.d_model))
        throw DimensionMismatchError("embedding stack must be [n, d_model]");
    std::size_t n = in.rows();
    if (n < 2) throw std::invalid_argument("need at least 2 plans to rank");
    if (n > static_cast<std::size_t>(cfg.n_max))
        throw ListTooLongError("candidate list of " + std::to_string(n) + " exceeds n_max " +
                               std::to_string(cfg.n_max));

    std::size_t d = static_cast<std::size_t>(cfg.d_model);
    std::size_t dk = d / static_cast<std::size_t>(cfg.num_heads);
    std::size_t dff = static_cast<std::size_t>(cfg.d_ff);
    double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    Graph::Node x = embeddings;
    for (int l = 0; l < cfg.num_layers; ++l) {
        std::string p = layer_prefix(l);
        std::vector<Graph::Node> heads;
        heads.reserve(cfg.num_heads);
        for (int h = 0; h < cfg.num_heads; ++h) {
            std::string hp = p + "h" + std::to_string(h) + ".";
            check_shape(params, hp + "wq", {d, dk});
            check_shape(params, hp + "wk", {d, dk});
            check_shape(params, hp + "wv", {d, dk});
            Graph::Node q = g.matmul(x, g.param(params, hp + "wq"));
            Graph::Node k = g.matmul(x, g.param(params, hp + "wk"));
            Graph::Node v = g.matmul(x, g.param(params, hp + "wv"));
            Graph::Node logits = g.scale(g.matmul(q, g.transpose(k)), inv_sqrt_dk);
            Graph::Node attn = g.softmax_rows(logits);
            if (attention_out) attention_out->push_back(attn);
            heads.push_back(g.matmul(attn, v));
        }
        check_shape(params, p + "attn_mix", {d, d});
        Graph::Node mixed = g.matmul(g.concat_cols(heads), g.param(params, p + "attn_mix"));
        x = g.layer_norm_rows(g.add(x, mixed), g.param(params, p + "ln1.gain"),
                              g.param(params, p + "ln1.bias"));

        check_shape(params, p + "ff.w1", {d, dff});
        check_shape(params, p + "ff.w2", {dff, d});
        Graph::Node h1 = g.tanh_op(g.add(g.matmul(x, g.param(params, p + "ff.w1")),
                                         g.param(params, p + "ff.b1")));
        Graph::Node h2 = g.add(g.matmul(h1, g.param(params, p + "ff.w2")),
                               g.param(params, p + "ff.b2"));
        x = g.layer_norm_rows(g.add(x, h2), g.param(params, p + "ln2.gain"),
                              g.param(params, p + "ln2.bias"));
    }
    return x;
}

Graph::Node score_positions(Graph& g, ParamStore& params, Graph::Node contextual,
                            const RankerConfig& cfg) {
    const NumArray& z = g.value(contextual);
    if (z.rank() != 2 || z.cols() != static_cast<std::size_t>(cfg.d_model))
        throw DimensionMismatchError("contextual stack must be [n, d_model]");
    std::size_t n = z.rows();
    if (n > static_cast<std::size_t>(cfg.n_max))
        throw ListTooLongError("candidate list exceeds n_max");

    std::size_t d = static_cast<std::size_t>(cfg.d_model);
    check_shape(params, "rnk.score.proj_w", {d, d});
    check_shape(params, "rnk.score.proj_b", {d});
    check_shape(params, "rnk.score.pos_q", {static_cast<std::size_t>(cfg.n_max), d});

    Graph::Node proj = g.add(g.matmul(contextual, g.param(params, "rnk.score.proj_w")),
                             g.param(params, "rnk.score.proj_b"));
    Graph::Node queries = g.slice_rows(g.param(params, "rnk.score.pos_q"), 0, n);
    return g.matmul(proj, g.transpose(queries));
}

namespace {

// Row-order sum of the assigned entries; every candidate permutation is
// totalled the same way so exact ties stay exact.
double assignment_total(const NumArray& s, const std::vector<int>& row_to_col) {
    double total = 0.0;
    for (std::size_t i = 0; i < row_to_col.size(); ++i)
        total += s.at(i, static_cast<std::size_t>(row_to_col[i]));
    return total;
}

// Optimal completion for rows [row, n) over the unused columns; returns the
// full permutation with the prefix kept as-is.
std::vector<int> complete_assignment(const NumArray& s, std::vector<int> prefix,
                                     std::size_t row) {
    std::size_t n = s.rows();
    std::vector<int> free_cols;
    {
        std::vector<char> used(n, 0);
        for (std::size_t i = 0; i < row; ++i) used[prefix[i]] = 1;
        for (std::size_t j = 0; j < n; ++j)
            if (!used[j]) free_cols.push_back(static_cast<int>(j));
    }
    std::size_t m = n - row;
    if (m == 0) return prefix;
    std::vector<std::vector<double>> cost(m, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            cost[i][j] = -s.at(row + i, static_cast<std::size_t>(free_cols[j]));
    std::vector<int> sub;
    solve_assignment_min(cost, sub);
    prefix.resize(n);
    for (std::size_t i = 0; i < m; ++i) prefix[row + i] = free_cols[sub[i]];
    return prefix;
}

}  // namespace

RankedList decode_permutation(const ScoreMatrix& scores) {
    const NumArray& s = scores.values;
    if (s.rank() != 2 || s.rows() != s.cols())
        throw std::invalid_argument("score matrix must be square");
    std::size_t n = s.rows();
    if (n < 2) throw std::invalid_argument("score matrix needs n >= 2");
    if (!s.all_finite()) throw NonFiniteScoresError("score matrix has non-finite entries");

    std::vector<int> best = complete_assignment(s, {}, 0);
    double best_total = assignment_total(s, best);

    // Lexicographic tie refinement: at each row, probe smaller columns and
    // keep one whose optimal completion still attains the best total.
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<char> used(n, 0);
        for (std::size_t r = 0; r < i; ++r) used[best[r]] = 1;
        for (int j = 0; j < best[i]; ++j) {
            if (used[j]) continue;
            std::vector<int> prefix(best.begin(), best.begin() + i);
            prefix.push_back(j);
            std::vector<int> candidate = complete_assignment(s, std::move(prefix), i + 1);
            double total = assignment_total(s, candidate);
            if (total >= best_total) {
                best = std::move(candidate);
                best_total = total;
                break;
            }
        }
    }

    RankedList out;
    out.permutation.resize(n);
    out.by_position.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        out.permutation[i] = best[i] + 1;
        out.by_position[best[i]] = static_cast<int>(i);
    }
    return out;
}

}  // namespace planrank
