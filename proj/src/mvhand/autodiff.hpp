#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mvhand/tensor.hpp"

namespace mvhand {

/// Raised by graph construction when operand shapes are incompatible.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(const std::string& op, const std::string& detail)
      : std::runtime_error("shape error in op '" + op + "': " + detail) {}
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One node of a reverse-mode computation graph. Values are computed eagerly
/// at construction; backward replays the recorded closures in reverse
/// topological order. A graph is single-writer: build, then backward, on one
/// thread. Distinct graphs are independent.
struct Node {
  Tensor value;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  /// Adds d(root)/d(parent) contributions into parents' grad buffers, given
  /// this node's accumulated grad. Null for leaves.
  std::function<void(const Node& self)> backprop;
  std::vector<double> grad;
  bool requires_grad = false;
  bool trainable = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
  void add_grad(const double* g, std::size_t n) {
    ensure_grad();
    for (std::size_t i = 0; i < n; ++i) grad[i] += g[i];
  }
};

/// Value-semantics handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  /// Leaf that never receives a gradient.
  static Var constant(Tensor value);
  /// Trainable leaf; backward fills its grad with d(root)/d(leaf).
  static Var param(Tensor value);
  /// Non-trainable leaf that still accumulates a gradient (used by tests to
  /// probe d(root)/d(input)).
  static Var input(Tensor value);

  const Tensor& value() const { return node_->value; }
  const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
  NodePtr node() const { return node_; }
  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient buffer after backward (same layout as value).
  const std::vector<double>& grad() const { return node_->grad; }

 private:
  NodePtr node_;
};

// ---- operation catalog -----------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scalar_mul(const Var& a, double s);
Var concat(const std::vector<Var>& xs, std::size_t axis);
Var reshape(const Var& a, std::vector<std::size_t> shape);
Var transpose(const Var& a);                                  // rank-2
Var transpose3(const Var& a, std::vector<std::size_t> perm);  // rank-3
Var slice_cols(const Var& a, std::size_t start, std::size_t len);
Var gather_rows(const Var& a, std::vector<std::size_t> rows);
/// Tiles the whole tensor `times` times along axis 0.
Var broadcast_repeat(const Var& a, std::size_t times);
Var leaky_relu(const Var& a, double slope);
Var softplus(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var softmax(const Var& a, std::size_t axis);        // rank-2
Var reduce_sum(const Var& a, std::size_t axis);     // rank-2 -> rank-1
Var reduce_mean(const Var& a, std::size_t axis);    // rank-2 -> rank-1
Var reduce_sum_all(const Var& a);                   // -> scalar
Var reduce_mean_all(const Var& a);                  // -> scalar
/// Max along one axis of a rank-2 tensor; gradient is routed to the argmax,
/// ties broken toward the lowest index.
Var max_over_axis(const Var& a, std::size_t axis);
/// map: {h,w,c} feature grid, coords: {m,2} as (x,y) pixels -> {m,c}.
/// Out-of-range coordinates are clamped to the border; the coordinate
/// gradient is zero where clamping was active.
Var bilinear_sample(const Var& map, const Var& coords);
Var abs_diff(const Var& a, const Var& b);  // elementwise |a-b|, subgradient 0 at 0
Var l1_distance(const Var& a, const Var& b);  // -> scalar
Var l2_squared(const Var& a, const Var& b);   // -> scalar
/// Axis-angle (3 elements) -> {3,3} rotation matrix, Rodrigues form with a
/// series fallback below ||r|| = 1e-8.
Var rodrigues(const Var& r);

/// Detached copy: same value, fresh constant leaf (stop-gradient).
Var detach(const Var& a);

// ---- composite helpers (not catalog ops) -----------------------------------

/// x @ W + b with the bias tiled explicitly (no implicit broadcasting).
Var affine(const Var& x, const Var& w, const Var& b);

// ---- graph execution --------------------------------------------------------

/// Returns the root value (values are cached at construction time).
Tensor forward(const Var& root);

/// Reverse-mode sweep from a scalar root; each reachable node is visited
/// exactly once. Gradients accumulate into leaf nodes marked trainable or
/// input.
void backward(const Var& root);

/// Topologically ordered adjacency list (node id, op tag, shape, parents)
/// as a JSON string; ids are the topological positions.
std::string graph_to_json(const Var& root);

}  // namespace mvhand
