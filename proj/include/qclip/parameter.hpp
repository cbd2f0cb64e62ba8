// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <utility>

#include "qclip/autodiff.hpp"

namespace qclip {

// A named tensor whose storage persists across forward passes. Trainability
// is the requires_grad flag of the underlying leaf.
class Parameter {
 public:
  Parameter(std::string name, ad::Matrix init, bool trainable, bool decay = false)
      : name_(std::move(name)), var_(ad::leaf(std::move(init), trainable)), decay_(decay) {}

  const std::string& name() const { return name_; }
  const ad::Var& var() const { return var_; }

  bool trainable() const { return var_.requires_grad(); }
  void set_trainable(bool on) { var_.node()->requires_grad = on; }
  // Decoupled weight decay applies only to parameters flagged here.
  bool decay() const { return decay_; }

  ad::Matrix& data() { return var_.node()->value; }
  const ad::Matrix& data() const { return var_.node()->value; }
  ad::Matrix grad() const { return var_.grad(); }
  void zero_grad() { var_.node()->grad.resize(0, 0); }

  Eigen::Index size() const { return data().size(); }

 private:
  std::string name_;
  ad::Var var_;
  bool decay_;
};

using ParameterPtr = std::shared_ptr<Parameter>;

}  // namespace qclip
