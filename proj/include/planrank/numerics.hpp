// Dense float64 arrays plus a small define-by-run reverse-mode tape.
// Single-threaded per graph; fixed left-to-right reduction order so that
// repeated runs on identical inputs are bit-identical.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace planrank {

struct ShapeMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonDeterministicFunctionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Row-major float64 buffer with an explicit shape (rank 1 or 2 in practice).
class NumArray {
  public:
    NumArray() = default;
    explicit NumArray(std::vector<std::size_t> shape);
    NumArray(std::vector<std::size_t> shape, std::vector<double> values);

    static NumArray scalar(double v) { return NumArray({1}, {v}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }

    bool same_shape(const NumArray& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    void fill(double v);

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

/// Named parameter tensors with gradient accumulators of identical shape.
/// std::map keeps iteration order deterministic (checkpoint layout, optimizer
/// update order and finite-difference sweeps all rely on it).
class ParamStore {
  public:
    struct Entry {
        NumArray value;
        NumArray grad;
    };

    NumArray& create(const std::string& name, std::vector<std::size_t> shape);
    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    Entry& at(const std::string& name);
    const Entry& at(const std::string& name) const;
    void zero_grads();
    std::size_t total_coords() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    std::size_t count() const { return entries_.size(); }

  private:
    std::map<std::string, Entry> entries_;
};

/// Reverse-mode tape. Operations evaluate eagerly and record a backward rule;
/// backward() walks the tape in reverse and accumulates parameter gradients
/// into the bound ParamStore.
class Graph {
  public:
    using Node = int;

    Node constant(NumArray v);
    Node param(ParamStore& store, const std::string& name);

    Node matmul(Node a, Node b);   // [m,k]x[k,n], [k]x[k,n] or [m,k]x[k]
    Node transpose(Node a);        // 2-d only
    Node add(Node a, Node b);      // same shape, or [n,d]+[d] row broadcast
    Node sub(Node a, Node b);
    Node mul(Node a, Node b);      // elementwise, same shape
    Node scale(Node a, double c);
    Node tanh_op(Node a);
    Node sigmoid(Node a);
    Node relu(Node a);
    Node softmax_rows(Node a);     // softmax over the last axis
    Node logsumexp_rows(Node a);   // [n,m] -> [n], max-subtraction stabilized
    Node gather_cols(Node a, std::vector<std::size_t> col_per_row);  // [n,m] -> [n]
    Node layer_norm_rows(Node a, Node gain, Node bias, double eps = 1e-5);
    Node stack_rows(const std::vector<Node>& rows);   // n x [d] -> [n,d]
    Node concat(const std::vector<Node>& parts);      // 1-d concat
    Node slice_rows(Node a, std::size_t begin, std::size_t count);
    Node concat_cols(const std::vector<Node>& parts); // [n,d_i] -> [n, sum d_i]
    Node max_over_rows(Node a);    // [n,d] -> [d], first argmax wins
    Node sum_all(Node a);          // -> scalar [1]
    Node mean_all(Node a);         // -> scalar [1]
    Node bce_with_logits(Node logits, std::vector<double> targets);  // [n] -> [1]

    const NumArray& value(Node n) const { return nodes_[n].value; }
    const NumArray& grad(Node n) const { return nodes_[n].grad; }

    /// Seeds d(root)/d(root)=1, runs the tape backwards and adds parameter
    /// gradients into their stores. Root must be a scalar.
    void backward(Node root);

    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Rec {
        NumArray value;
        NumArray grad;
        std::function<void(Graph&)> back;
        ParamStore* store = nullptr;
        std::string pname;
    };

    Node push(NumArray value, std::function<void(Graph&)> back = nullptr);
    NumArray& grad_ref(Node n) { return nodes_[n].grad; }

    std::vector<Rec> nodes_;
};

struct GradCheckOptions {
    double eps = 1e-5;
    /// Cap on finite-difference coordinates per parameter tensor. Full sweeps
    /// are quadratic-ish in model size; large composites sample instead.
    std::size_t max_coords_per_param = SIZE_MAX;
    std::uint64_t sample_seed = 0;
};

/// Compares analytic gradients of a scalar composite against central finite
/// differences. Returns the max relative error over checked coordinates,
/// denominator max(|analytic|, |numeric|, 1e-8). The function is evaluated
/// twice up front; disagreement raises NonDeterministicFunctionError.
///
/// Coordinates where analytic and numeric are both smaller than the
/// finite-difference noise resolution (|f|*machine_eps/eps scaled by the
/// tolerance headroom) are skipped: the probe cannot distinguish correct
/// from wrong there, and both sides already agree to measurement precision.
double grad_check(const std::function<Graph::Node(Graph&, ParamStore&)>& fn,
                  ParamStore& params, const GradCheckOptions& opt = {});

}  // namespace planrank
