// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Correlation metrics and the repeated train/test split protocol.
//
// SROCC uses average ranks for ties; KROCC is tau-b. Undefined correlations
// (constant inputs) throw kNumericContract.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace qclip {

double plcc(std::span<const double> x, std::span<const double> y);
double srocc(std::span<const double> x, std::span<const double> y);
double krocc(std::span<const double> x, std::span<const double> y);
double rmse(std::span<const double> x, std::span<const double> y);

// 1-based ranks, ties receive the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> x);

// Four-parameter logistic f(x) = b2 + (b1 - b2) / (1 + exp(-(x - b3) / |b4|)).
struct LogisticMap {
  double b1 = 0, b2 = 0, b3 = 0, b4 = 1;
  double operator()(double x) const;
};
// Least-squares fit of predictions x onto labels y.
LogisticMap fit_logistic(std::span<const double> x, std::span<const double> y);

struct Metrics {
  double srocc = 0, plcc = 0, krocc = 0, rmse = 0;
};

struct SplitRecord {
  std::uint64_t seed = 0;
  Metrics metrics;
  int n = 0;
};

struct EvalReport {
  std::vector<SplitRecord> splits;
  Metrics mean;
  Metrics stddev;  // population standard deviation over completed splits
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

struct EvalOptions {
  // Fit a logistic map from predictions to labels before PLCC and RMSE.
  bool logistic_mapping = false;
};

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> labels,
                        const EvalOptions& options = {});

// Recomputes mean / stddev from splits.
void aggregate(EvalReport& report);

struct Partition {
  std::vector<int> train;
  std::vector<int> test;
};

// Shuffles [0, n) with `seed`; the first round(n * train_fraction) indices
// train, the rest test. Both sides sorted.
Partition make_partition(int n, double train_fraction, std::uint64_t seed);

struct SplitProtocolOptions {
  int num_splits = 10;
  double train_fraction = 0.8;
  // Explicit per-split seeds; when empty, seeds 0..num_splits-1 are used.
  std::vector<std::uint64_t> seeds;
  EvalOptions eval;
};

// Trains on partition.train and returns predictions for partition.test, in
// partition.test order.
using SplitRunner = std::function<std::vector<double>(const Partition& partition, std::uint64_t seed)>;

// Splits that throw are recorded as warnings; the aggregate covers the
// completed ones.
EvalReport run_split_protocol(std::span<const double> labels, const SplitRunner& runner,
                              const SplitProtocolOptions& options = {});

}  // namespace qclip
