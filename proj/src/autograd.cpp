#include "tabgsl/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace tabgsl::ag {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

bool wants(const Node& n, std::size_t i) {
  return n.parents[i]->requires_grad;
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var parameter(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var make_op(Matrix value, std::vector<Var> parents,
            std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.node());
  }
  if (n->requires_grad) {
    n->backward_fn = std::move(backward);
  } else {
    n->parents.clear();
  }
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be 1x1");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* child = node->parents[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims");
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [](Node& n) {
    const auto& A = n.parents[0]->value;
    const auto& B = n.parents[1]->value;
    if (wants(n, 0)) n.parents[0]->accumulate(n.grad * B.transpose());
    if (wants(n, 1)) n.parents[1]->accumulate(A.transpose() * n.grad);
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a}, [](Node& n) {
    n.parents[0]->accumulate(n.grad.transpose());
  });
}

Var gather_rows(const Var& a, std::span<const Eigen::Index> rows) {
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= a.rows()) {
      throw std::out_of_range("gather_rows: index out of range");
    }
    out.row(static_cast<Eigen::Index>(r)) = a.value().row(idx[r]);
  }
  return make_op(std::move(out), {a}, [idx = std::move(idx)](Node& n) {
    auto& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      g.row(idx[r]) += n.grad.row(static_cast<Eigen::Index>(r));
    }
    p.accumulate(g);
  });
}

Var diag(const Var& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("diag: not square");
  Matrix out = a.value().diagonal();
  return make_op(std::move(out), {a}, [](Node& n) {
    auto& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.diagonal() = n.grad.col(0);
    p.accumulate(g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
    if (wants(n, 0)) n.parents[0]->accumulate(n.grad);
    if (wants(n, 1)) n.parents[1]->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
    if (wants(n, 0)) n.parents[0]->accumulate(n.grad);
    if (wants(n, 1)) n.parents[1]->accumulate(-n.grad);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    const auto& A = n.parents[0]->value;
    const auto& B = n.parents[1]->value;
    if (wants(n, 0)) n.parents[0]->accumulate(n.grad.cwiseProduct(B));
    if (wants(n, 1)) n.parents[1]->accumulate(n.grad.cwiseProduct(A));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& n) {
    n.parents[0]->accumulate(n.grad * s);
  });
}

Var add_const(const Var& a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) {
    throw std::invalid_argument("add_const: shape mismatch");
  }
  return make_op(a.value() + c, {a}, [](Node& n) {
    n.parents[0]->accumulate(n.grad);
  });
}

Var mul_const(const Var& a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) {
    throw std::invalid_argument("mul_const: shape mismatch");
  }
  return make_op(a.value().cwiseProduct(c), {a}, [c](Node& n) {
    n.parents[0]->accumulate(n.grad.cwiseProduct(c));
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: bias shape mismatch");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& n) {
    if (wants(n, 0)) n.parents[0]->accumulate(n.grad);
    if (wants(n, 1)) n.parents[1]->accumulate(n.grad.colwise().sum());
  });
}

Var scale_rows(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw std::invalid_argument("scale_rows: shape mismatch");
  }
  Matrix out = col.value().col(0).asDiagonal() * a.value();
  return make_op(std::move(out), {a, col}, [](Node& n) {
    const auto& A = n.parents[0]->value;
    const auto& c = n.parents[1]->value;
    if (wants(n, 0)) {
      n.parents[0]->accumulate(c.col(0).asDiagonal() * n.grad);
    }
    if (wants(n, 1)) {
      n.parents[1]->accumulate(n.grad.cwiseProduct(A).rowwise().sum());
    }
  });
}

Var scale_cols(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.cols()) {
    throw std::invalid_argument("scale_cols: shape mismatch");
  }
  Matrix out = a.value() * col.value().col(0).asDiagonal();
  return make_op(std::move(out), {a, col}, [](Node& n) {
    const auto& A = n.parents[0]->value;
    const auto& c = n.parents[1]->value;
    if (wants(n, 0)) {
      n.parents[0]->accumulate(n.grad * c.col(0).asDiagonal());
    }
    if (wants(n, 1)) {
      n.parents[1]->accumulate(
          n.grad.cwiseProduct(A).colwise().sum().transpose());
    }
  });
}

Var maximum(const Var& a, const Var& b) {
  require_same_shape(a, b, "maximum");
  Matrix out = a.value().cwiseMax(b.value());
  return make_op(std::move(out), {a, b}, [](Node& n) {
    const auto& A = n.parents[0]->value;
    const auto& B = n.parents[1]->value;
    // Ties route to the first argument.
    Matrix take_a = (A.array() >= B.array()).cast<double>().matrix();
    if (wants(n, 0)) n.parents[0]->accumulate(n.grad.cwiseProduct(take_a));
    if (wants(n, 1)) {
      n.parents[1]->accumulate(
          n.grad.cwiseProduct((1.0 - take_a.array()).matrix()));
    }
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_op(std::move(out), {a}, [](Node& n) {
    const auto& A = n.parents[0]->value;
    n.parents[0]->accumulate(
        n.grad.cwiseProduct((A.array() > 0.0).cast<double>().matrix()));
  });
}

Var prelu(const Var& a, const Var& slope) {
  if (slope.rows() != 1 || slope.cols() != a.cols()) {
    throw std::invalid_argument("prelu: slope shape mismatch");
  }
  const auto& A = a.value();
  Matrix out = A;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      if (A(i, j) <= 0.0) out(i, j) = slope.value()(0, j) * A(i, j);
    }
  }
  return make_op(std::move(out), {a, slope}, [](Node& n) {
    const auto& A = n.parents[0]->value;
    const auto& s = n.parents[1]->value;
    Matrix ga(A.rows(), A.cols());
    Matrix gs = Matrix::Zero(1, A.cols());
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      for (Eigen::Index i = 0; i < A.rows(); ++i) {
        if (A(i, j) > 0.0) {
          ga(i, j) = n.grad(i, j);
        } else {
          ga(i, j) = n.grad(i, j) * s(0, j);
          gs(0, j) += n.grad(i, j) * A(i, j);
        }
      }
    }
    if (wants(n, 0)) n.parents[0]->accumulate(ga);
    if (wants(n, 1)) n.parents[1]->accumulate(gs);
  });
}

Var pow_scalar(const Var& a, double p) {
  Matrix out = a.value().array().pow(p).matrix();
  return make_op(std::move(out), {a}, [p](Node& n) {
    const auto& A = n.parents[0]->value;
    n.parents[0]->accumulate(
        n.grad.cwiseProduct((p * A.array().pow(p - 1.0)).matrix()));
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, [](Node& n) {
    const auto& A = n.parents[0]->value;
    n.parents[0]->accumulate(Matrix::Constant(A.rows(), A.cols(), n.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var row_sum(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  return make_op(std::move(out), {a}, [](Node& n) {
    const auto& A = n.parents[0]->value;
    n.parents[0]->accumulate(n.grad.col(0).replicate(1, A.cols()));
  });
}

Var pick(const Var& a, std::span<const Eigen::Index> rows,
         std::span<const Eigen::Index> cols) {
  if (rows.size() != cols.size()) {
    throw std::invalid_argument("pick: index length mismatch");
  }
  std::vector<Eigen::Index> r(rows.begin(), rows.end());
  std::vector<Eigen::Index> c(cols.begin(), cols.end());
  Matrix out(static_cast<Eigen::Index>(r.size()), 1);
  for (std::size_t k = 0; k < r.size(); ++k) {
    out(static_cast<Eigen::Index>(k), 0) = a.value()(r[k], c[k]);
  }
  return make_op(std::move(out), {a},
                 [r = std::move(r), c = std::move(c)](Node& n) {
                   auto& p = *n.parents[0];
                   Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
                   for (std::size_t k = 0; k < r.size(); ++k) {
                     g(r[k], c[k]) += n.grad(static_cast<Eigen::Index>(k), 0);
                   }
                   p.accumulate(g);
                 });
}

Var normalize_rows(const Var& a) {
  const auto& A = a.value();
  Vector norms = A.rowwise().norm();
  Matrix out = Matrix::Zero(A.rows(), A.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    if (norms(i) > 0.0) out.row(i) = A.row(i) / norms(i);
  }
  Matrix unit = out;
  return make_op(std::move(out), {a},
                 [norms = std::move(norms), unit = std::move(unit)](Node& n) {
                   Matrix g = Matrix::Zero(unit.rows(), unit.cols());
                   for (Eigen::Index i = 0; i < unit.rows(); ++i) {
                     if (norms(i) <= 0.0) continue;
                     const double proj = unit.row(i).dot(n.grad.row(i));
                     g.row(i) = (n.grad.row(i) - proj * unit.row(i)) / norms(i);
                   }
                   n.parents[0]->accumulate(g);
                 });
}

Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const auto& X = a.value();
  const Eigen::Index d = X.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 ||
      beta.cols() != d) {
    throw std::invalid_argument("layer_norm: affine shape mismatch");
  }
  Vector mu = X.rowwise().mean();
  Matrix centered = X.colwise() - mu;
  Vector inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(d)) +
       eps)
          .rsqrt()
          .matrix();
  Matrix xhat = inv_std.asDiagonal() * centered;
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  return make_op(
      out.matrix(), {a, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), d](Node& n) {
        const auto& G = n.grad;
        if (wants(n, 1)) {
          n.parents[1]->accumulate(G.cwiseProduct(xhat).colwise().sum());
        }
        if (wants(n, 2)) n.parents[2]->accumulate(G.colwise().sum());
        if (wants(n, 0)) {
          const auto& g = n.parents[1]->value;
          Matrix dxhat = (G.array().rowwise() * g.row(0).array()).matrix();
          Vector m1 = dxhat.rowwise().mean();
          Vector m2 =
              dxhat.cwiseProduct(xhat).rowwise().sum() / static_cast<double>(d);
          Matrix dx = dxhat.colwise() - m1;
          dx -= m2.asDiagonal() * xhat;
          n.parents[0]->accumulate(inv_std.asDiagonal() * dx);
        }
      });
}

namespace {

Matrix softmax_value(const Matrix& A) {
  Matrix out = A.colwise() - A.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  Vector s = out.rowwise().sum();
  return s.cwiseInverse().asDiagonal() * out;
}

}  // namespace

Var softmax_rows(const Var& a) {
  Matrix out = softmax_value(a.value());
  return make_op(out, {a}, [s = out](Node& n) {
    Vector dot = n.grad.cwiseProduct(s).rowwise().sum();
    Matrix g = s.cwiseProduct(n.grad.colwise() - dot);
    n.parents[0]->accumulate(g);
  });
}

Var log_softmax_rows(const Var& a) {
  const auto& A = a.value();
  Vector mx = A.rowwise().maxCoeff();
  Matrix shifted = A.colwise() - mx;
  Vector lse = shifted.array().exp().rowwise().sum().log().matrix();
  Matrix out = shifted.colwise() - lse;
  Matrix sm = out.array().exp().matrix();
  return make_op(std::move(out), {a}, [sm = std::move(sm)](Node& n) {
    Vector gs = n.grad.rowwise().sum();
    n.parents[0]->accumulate(n.grad - gs.asDiagonal() * sm);
  });
}

Var offdiag_logsumexp_rows(const Var& a, double scale) {
  const auto& A = a.value();
  const Eigen::Index n = A.rows();
  if (A.cols() != n || n < 2) {
    throw std::invalid_argument("offdiag_logsumexp_rows: need square n >= 2");
  }
  Matrix weights = Matrix::Zero(n, n);
  Matrix out(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) mx = std::max(mx, scale * A(i, j));
    }
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      weights(i, j) = std::exp(scale * A(i, j) - mx);
      acc += weights(i, j);
    }
    weights.row(i) /= acc;
    out(i, 0) = mx + std::log(acc);
  }
  return make_op(std::move(out), {a},
                 [weights = std::move(weights), scale](Node& nd) {
                   nd.parents[0]->accumulate(
                       (nd.grad.col(0).asDiagonal() * weights) * scale);
                 });
}

Var block_attention(const Var& q, const Var& k, const Var& v,
                    Eigen::Index block, int heads) {
  require_same_shape(q, k, "block_attention");
  require_same_shape(q, v, "block_attention");
  const Eigen::Index rows = q.rows();
  const Eigen::Index d = q.cols();
  if (block <= 0 || rows % block != 0) {
    throw std::invalid_argument("block_attention: rows not a multiple of block");
  }
  if (heads <= 0 || d % heads != 0) {
    throw std::invalid_argument("block_attention: heads must divide width");
  }
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index blocks = rows / block;

  Matrix out(rows, d);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto Q = q.value().block(b * block, h * dh, block, dh);
      const auto K = k.value().block(b * block, h * dh, block, dh);
      const auto V = v.value().block(b * block, h * dh, block, dh);
      Matrix P = softmax_value((Q * K.transpose()) * inv_sqrt);
      out.block(b * block, h * dh, block, dh) = P * V;
    }
  }
  return make_op(std::move(out), {q, k, v},
                 [block, heads, dh, inv_sqrt, blocks](Node& n) {
                   const auto& Qa = n.parents[0]->value;
                   const auto& Ka = n.parents[1]->value;
                   const auto& Va = n.parents[2]->value;
                   Matrix gq = Matrix::Zero(Qa.rows(), Qa.cols());
                   Matrix gk = Matrix::Zero(Qa.rows(), Qa.cols());
                   Matrix gv = Matrix::Zero(Qa.rows(), Qa.cols());
                   for (Eigen::Index b = 0; b < blocks; ++b) {
                     for (int h = 0; h < heads; ++h) {
                       const auto Q = Qa.block(b * block, h * dh, block, dh);
                       const auto K = Ka.block(b * block, h * dh, block, dh);
                       const auto V = Va.block(b * block, h * dh, block, dh);
                       const auto dO = n.grad.block(b * block, h * dh, block, dh);
                       Matrix P = softmax_value((Q * K.transpose()) * inv_sqrt);
                       Matrix dP = dO * V.transpose();
                       Vector dot = dP.cwiseProduct(P).rowwise().sum();
                       Matrix dS = P.cwiseProduct(dP.colwise() - dot) * inv_sqrt;
                       gq.block(b * block, h * dh, block, dh) = dS * K;
                       gk.block(b * block, h * dh, block, dh) = dS.transpose() * Q;
                       gv.block(b * block, h * dh, block, dh) = P.transpose() * dO;
                     }
                   }
                   if (wants(n, 0)) n.parents[0]->accumulate(gq);
                   if (wants(n, 1)) n.parents[1]->accumulate(gk);
                   if (wants(n, 2)) n.parents[2]->accumulate(gv);
                 });
}

}  // namespace tabgsl::ag
