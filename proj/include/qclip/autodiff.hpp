// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// Every value is a row-major "tokens x width" matrix. Leaves created with
// requires_grad=true accumulate gradients across backward() calls until they
// are cleared; intermediate nodes hold their parents only when a gradient can
// flow through them, so graphs built over frozen weights alone cost nothing
// extra.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace qclip::ad {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  // Gradient accumulated so far; a zero matrix of value's shape when nothing
  // has flowed in yet.
  Matrix grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  bool valid() const { return node_ != nullptr; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& handle() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// A leaf whose value is owned by the caller (parameters keep theirs alive
// across forward passes and update it in place).
Var leaf(Matrix value, bool requires_grad);
inline Var constant(Matrix value) { return leaf(std::move(value), false); }

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds a node from an already-computed value. `backward` receives the new
// node (whose grad is populated) and pushes gradients into `parents`.
Var make_op(Matrix value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

// Runs reverse accumulation from a 1x1 root.
void backward(const Var& root);

// --- elementary ops -------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// a (m x n) + row (1 x n), broadcast down the rows.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double c);
// s (1 x 1) * a.
Var mul_scalar(const Var& s, const Var& a);
Var hadamard(const Var& a, const Var& b);

Var matmul(const Var& a, const Var& b);
// a * b^T, with b stored as (out x in) like a linear layer's weight.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

// x * W^T + b with W (out x in) and b (1 x out).
Var linear(const Var& x, const Var& weight, const Var& bias);

Var gelu(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var softmax_rows(const Var& a, bool causal = false);
// Each row divided by its Euclidean norm. Rows must be nonzero.
Var normalize_rows(const Var& a);

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);

Var mean_rows(const Var& a);  // -> 1 x n
Var mean_of(std::span<const Var> parts);  // elementwise mean, equal shapes
Var sum_all(const Var& a);  // -> 1 x 1

}  // namespace qclip::ad
