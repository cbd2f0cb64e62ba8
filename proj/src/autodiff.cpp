// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/autodiff.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace qclip::ad {

namespace {

thread_local bool g_grad_enabled = true;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

Var leaf(Matrix value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var make_op(Matrix value, std::vector<Var> parents,
            std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.handle());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("backward: root must be 1x1");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; interior nodes only.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->parents.empty() && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0 || !n->backward) continue;
    n->backward(*n);
    // Interior gradients are not needed after propagation.
    n->grad.resize(0, 0);
  }
}

#define QCLIP_PARENT(i) (*self.parents[i])

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    if (QCLIP_PARENT(0).requires_grad) QCLIP_PARENT(0).accumulate(self.grad);
    if (QCLIP_PARENT(1).requires_grad) QCLIP_PARENT(1).accumulate(-self.grad);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: bias shape mismatch");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    if (QCLIP_PARENT(0).requires_grad) QCLIP_PARENT(0).accumulate(self.grad);
    if (QCLIP_PARENT(1).requires_grad) {
      QCLIP_PARENT(1).accumulate(self.grad.colwise().sum());
    }
  });
}

Var scale(const Var& a, double c) {
  return make_op(a.value() * c, {a}, [c](Node& self) {
    QCLIP_PARENT(0).accumulate(self.grad * c);
  });
}

Var mul_scalar(const Var& s, const Var& a) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw std::invalid_argument("mul_scalar: scalar must be 1x1");
  }
  return make_op(a.value() * s.scalar(), {s, a}, [](Node& self) {
    Node& s = QCLIP_PARENT(0);
    Node& a = QCLIP_PARENT(1);
    if (s.requires_grad) {
      s.accumulate(Matrix::Constant(1, 1, self.grad.cwiseProduct(a.value).sum()));
    }
    if (a.requires_grad) a.accumulate(self.grad * s.value(0, 0));
  });
}

Var hadamard(const Var& a, const Var& b) {
  check_same_shape(a, b, "hadamard");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& a = QCLIP_PARENT(0);
    Node& b = QCLIP_PARENT(1);
    if (a.requires_grad) a.accumulate(self.grad.cwiseProduct(b.value));
    if (b.requires_grad) b.accumulate(self.grad.cwiseProduct(a.value));
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims");
  return make_op(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& a = QCLIP_PARENT(0);
    Node& b = QCLIP_PARENT(1);
    if (a.requires_grad) a.accumulate(self.grad * b.value.transpose());
    if (b.requires_grad) b.accumulate(a.value.transpose() * self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dims");
  return make_op(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
    Node& a = QCLIP_PARENT(0);
    Node& b = QCLIP_PARENT(1);
    if (a.requires_grad) a.accumulate(self.grad * b.value);
    if (b.requires_grad) b.accumulate(self.grad.transpose() * a.value);
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a}, [](Node& self) {
    QCLIP_PARENT(0).accumulate(self.grad.transpose());
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul_nt(x, weight), bias);
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
}  // namespace

Var gelu(const Var& a) {
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  });
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& a = QCLIP_PARENT(0);
    Matrix d = a.value.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = std::exp(-0.5 * v * v) * 0.5 * std::numbers::inv_sqrtpi *
                         std::numbers::sqrt2;
      return cdf + v * pdf;
    });
    a.accumulate(self.grad.cwiseProduct(d));
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw std::invalid_argument("layer_norm: affine shape mismatch");
  }
  const Matrix& in = x.value();
  Matrix xhat(in.rows(), n);
  Eigen::VectorXd inv_std(in.rows());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return make_op(std::move(out), {x, gamma, beta},
                 [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   Node& x = QCLIP_PARENT(0);
                   Node& gamma = QCLIP_PARENT(1);
                   Node& beta = QCLIP_PARENT(2);
                   const Matrix& g = self.grad;
                   if (gamma.requires_grad) {
                     gamma.accumulate(g.cwiseProduct(xhat).colwise().sum());
                   }
                   if (beta.requires_grad) beta.accumulate(g.colwise().sum());
                   if (x.requires_grad) {
                     Matrix dxhat = (g.array().rowwise() * gamma.value.row(0).array()).matrix();
                     Matrix dx(g.rows(), g.cols());
                     for (Eigen::Index r = 0; r < g.rows(); ++r) {
                       const double m1 = dxhat.row(r).mean();
                       const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                       dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) *
                                   inv_std(r);
                     }
                     x.accumulate(dx);
                   }
                 });
}

Var softmax_rows(const Var& a, bool causal) {
  const Matrix& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::Index width = causal ? std::min<Eigen::Index>(r + 1, x.cols()) : x.cols();
    const double mx = x.row(r).head(width).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < width; ++c) {
      y(r, c) = std::exp(x(r, c) - mx);
      total += y(r, c);
    }
    y.row(r).head(width) /= total;
  }
  Matrix y_copy = y;
  return make_op(std::move(y), {a}, [y = std::move(y_copy)](Node& self) {
    const Matrix& g = self.grad;
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(g.colwise() - dot);
    QCLIP_PARENT(0).accumulate(dx);
  });
}

Var normalize_rows(const Var& a) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0)) throw std::domain_error("normalize_rows: zero-norm row");
  }
  Matrix y = norms.cwiseInverse().asDiagonal() * x;
  Matrix y_copy = y;
  return make_op(std::move(y), {a},
                 [y = std::move(y_copy), norms = std::move(norms)](Node& self) {
                   const Matrix& g = self.grad;
                   Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
                   Matrix dx = g - dot.asDiagonal() * y;
                   dx = norms.cwiseInverse().asDiagonal() * dx;
                   QCLIP_PARENT(0).accumulate(dx);
                 });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range");
  }
  return make_op(a.value().middleRows(start, count), {a}, [start, count](Node& self) {
    Node& a = QCLIP_PARENT(0);
    Matrix g = Matrix::Zero(a.value.rows(), a.value.cols());
    g.middleRows(start, count) = self.grad;
    a.accumulate(g);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range");
  }
  return make_op(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    Node& a = QCLIP_PARENT(0);
    Matrix g = Matrix::Zero(a.value.rows(), a.value.cols());
    g.middleCols(start, count) = self.grad;
    a.accumulate(g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: width mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op(std::move(out), {parts.begin(), parts.end()}, [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index r = p->value.rows();
      if (p->requires_grad) p->accumulate(self.grad.middleRows(at, r));
      at += r;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: height mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op(std::move(out), {parts.begin(), parts.end()}, [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index c = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(at, c));
      at += c;
    }
  });
}

Var mean_rows(const Var& a) {
  const auto rows = static_cast<double>(a.rows());
  return make_op(a.value().colwise().mean(), {a}, [rows](Node& self) {
    Node& a = QCLIP_PARENT(0);
    a.accumulate(self.grad.replicate(a.value.rows(), 1) / rows);
  });
}

Var mean_of(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("mean_of: empty");
  Matrix out = parts.front().value();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    check_same_shape(parts.front(), parts[i], "mean_of");
    out += parts[i].value();
  }
  const auto n = static_cast<double>(parts.size());
  out /= n;
  return make_op(std::move(out), {parts.begin(), parts.end()}, [n](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad / n);
    }
  });
}

Var sum_all(const Var& a) {
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    Node& a = QCLIP_PARENT(0);
    a.accumulate(Matrix::Constant(a.value.rows(), a.value.cols(), self.grad(0, 0)));
  });
}

#undef QCLIP_PARENT

}  // namespace qclip::ad
