// Reverse-mode automatic differentiation over dense double matrices.
//
// Every operation allocates a node holding its value and a closure that
// propagates the incoming gradient to its parents. Leaves created through
// `parameter()` persist across steps; everything else is rebuilt on each
// forward pass and released when the last Var referencing it goes away.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace tabgsl::ag {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  /// Adds `g` into this node's gradient, allocating it on first use.
  void accumulate(const Matrix& g);
  bool has_grad() const { return grad.size() != 0; }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->has_grad(); }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that never receives gradient.
Var constant(Matrix value);
/// Leaf that accumulates gradient; the node persists across forward passes.
Var parameter(Matrix value);

/// Builds an interior node. `backward` receives the node after its grad has
/// been populated and must push gradient into `node.parents`.
Var make_op(Matrix value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

/// Runs reverse accumulation from a 1x1 output.
void backward(const Var& loss);

// Structural ops.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var gather_rows(const Var& a, std::span<const Eigen::Index> rows);
Var diag(const Var& a);

// Elementwise and broadcasting ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_const(const Var& a, const Matrix& c);
Var mul_const(const Var& a, const Matrix& c);
Var add_row(const Var& a, const Var& row);
Var scale_rows(const Var& a, const Var& col);
Var scale_cols(const Var& a, const Var& col);
Var maximum(const Var& a, const Var& b);
Var relu(const Var& a);
Var prelu(const Var& a, const Var& slope);
Var pow_scalar(const Var& a, double p);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);
Var pick(const Var& a, std::span<const Eigen::Index> rows,
         std::span<const Eigen::Index> cols);

// Normalization and softmax families.
Var normalize_rows(const Var& a);
Var layer_norm(const Var& a, const Var& gamma, const Var& beta,
               double eps = 1e-5);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
/// Row-wise log-sum-exp of `scale * a` over off-diagonal entries of a square
/// matrix. Output is n x 1.
Var offdiag_logsumexp_rows(const Var& a, double scale);

/// Multi-head self-attention applied independently within consecutive
/// blocks of `block` rows. q, k, v are (blocks * block) x d.
Var block_attention(const Var& q, const Var& k, const Var& v,
                    Eigen::Index block, int heads);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace tabgsl::ag
