// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "qclip/error.hpp"
#include "qclip/random.hpp"

namespace qclip {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_len,
                const char* what) {
  require(x.size() == y.size(), ErrorCategory::kInputContract,
          std::string(what) + ": inputs differ in length");
  require(x.size() >= min_len, ErrorCategory::kInputContract,
          std::string(what) + ": need at least " + std::to_string(min_len) + " samples");
}

// Number of pairs i < j with v[i] > v[j], sorting v ascending in the process.
std::int64_t count_inversions(std::vector<double>& v) {
  std::vector<double> buf(v.size());
  std::int64_t inv = 0;
  for (std::size_t width = 1; width < v.size(); width *= 2) {
    for (std::size_t lo = 0; lo < v.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, v.size());
      const std::size_t hi = std::min(lo + 2 * width, v.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          inv += static_cast<std::int64_t>(mid - i);
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    v.swap(buf);
  }
  return inv;
}

// Sum over runs of equal keys of t(t-1)/2.
template <typename Eq>
std::int64_t tied_pairs(std::size_t n, Eq equal) {
  std::int64_t total = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      total += static_cast<std::int64_t>(run) * static_cast<std::int64_t>(run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

struct LogisticFunctor {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  std::span<const double> x, y;
  int inputs() const { return 4; }
  int values() const { return static_cast<int>(x.size()); }
  int operator()(const InputType& b, ValueType& residual) const {
    const LogisticMap f{b(0), b(1), b(2), b(3)};
    for (std::size_t i = 0; i < x.size(); ++i) residual(static_cast<Eigen::Index>(i)) = f(x[i]) - y[i];
    return 0;
  }
};

}  // namespace

double plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2, "plcc");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorCategory::kNumericContract,
          "correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2, "srocc");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return plcc(rx, ry);
}

double krocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2, "krocc");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  const std::int64_t x_ties =
      tied_pairs(n, [&](std::size_t i, std::size_t j) { return x[order[i]] == x[order[j]]; });
  const std::int64_t joint_ties = tied_pairs(n, [&](std::size_t i, std::size_t j) {
    return x[order[i]] == x[order[j]] && y[order[i]] == y[order[j]];
  });
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::int64_t discordant = count_inversions(ys);
  const std::int64_t y_ties =
      tied_pairs(n, [&](std::size_t i, std::size_t j) { return ys[i] == ys[j]; });

  const std::int64_t total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const double denom =
      std::sqrt(static_cast<double>(total - x_ties) * static_cast<double>(total - y_ties));
  require(denom > 0.0, ErrorCategory::kNumericContract, "krocc undefined for all-tied input");
  const double numer =
      static_cast<double>(total - x_ties - y_ties + joint_ties - 2 * discordant);
  return std::clamp(numer / denom, -1.0, 1.0);
}

double rmse(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 1, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double LogisticMap::operator()(double x) const {
  return b2 + (b1 - b2) / (1.0 + std::exp(-(x - b3) / std::max(std::abs(b4), 1e-12)));
}

LogisticMap fit_logistic(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 4, "fit_logistic");
  const double mean_x = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double var_x = 0.0;
  for (double v : x) var_x += (v - mean_x) * (v - mean_x);
  var_x /= static_cast<double>(x.size());
  Eigen::VectorXd b(4);
  b << *std::max_element(y.begin(), y.end()), *std::min_element(y.begin(), y.end()), mean_x,
      std::max(std::sqrt(var_x), 1e-6);
  LogisticFunctor functor{x, y};
  Eigen::NumericalDiff<LogisticFunctor> numeric(functor);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<LogisticFunctor>> lm(numeric);
  lm.minimize(b);
  return {b(0), b(1), b(2), b(3)};
}

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> labels,
                        const EvalOptions& options) {
  Metrics m;
  m.srocc = srocc(predictions, labels);
  m.krocc = krocc(predictions, labels);
  if (options.logistic_mapping) {
    const LogisticMap f = fit_logistic(predictions, labels);
    std::vector<double> mapped(predictions.size());
    std::transform(predictions.begin(), predictions.end(), mapped.begin(), f);
    m.plcc = plcc(mapped, labels);
    m.rmse = rmse(mapped, labels);
  } else {
    m.plcc = plcc(predictions, labels);
    m.rmse = rmse(predictions, labels);
  }
  return m;
}

void aggregate(EvalReport& report) {
  report.mean = {};
  report.stddev = {};
  if (report.splits.empty()) return;
  const double n = static_cast<double>(report.splits.size());
  auto field = [](Metrics& m, int i) -> double& {
    switch (i) {
      case 0: return m.srocc;
      case 1: return m.plcc;
      case 2: return m.krocc;
      default: return m.rmse;
    }
  };
  for (int i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (auto& s : report.splits) sum += field(s.metrics, i);
    const double mean = sum / n;
    double sq = 0.0;
    for (auto& s : report.splits) sq += (field(s.metrics, i) - mean) * (field(s.metrics, i) - mean);
    field(report.mean, i) = mean;
    field(report.stddev, i) = std::sqrt(sq / n);
  }
}

nlohmann::json EvalReport::to_json() const {
  auto metrics_json = [](const Metrics& m) {
    return nlohmann::json{{"srocc", m.srocc}, {"plcc", m.plcc}, {"krocc", m.krocc}, {"rmse", m.rmse}};
  };
  nlohmann::json j;
  j["splits"] = nlohmann::json::array();
  for (const auto& s : splits) {
    auto e = metrics_json(s.metrics);
    e["seed"] = s.seed;
    e["n"] = s.n;
    j["splits"].push_back(e);
  }
  j["mean"] = metrics_json(mean);
  j["std"] = metrics_json(stddev);
  j["warnings"] = warnings;
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  auto row = [&](const std::string& label, const std::string& seed, const std::string& n, const Metrics& m) {
    out << std::left << std::setw(6) << label << std::right << std::setw(20) << seed << std::setw(6) << n
        << std::fixed << std::setprecision(4);
    for (double v : {m.srocc, m.plcc, m.krocc, m.rmse}) out << std::setw(9) << v;
    out << "\n";
  };
  out << std::left << std::setw(6) << "split" << std::right << std::setw(20) << "seed" << std::setw(6) << "n";
  for (const char* h : {"SROCC", "PLCC", "KROCC", "RMSE"}) out << std::setw(9) << h;
  out << "\n";
  for (std::size_t i = 0; i < splits.size(); ++i) {
    row(std::to_string(i), std::to_string(splits[i].seed), std::to_string(splits[i].n), splits[i].metrics);
  }
  row("mean", "", "", mean);
  row("std", "", "", stddev);
  for (const auto& w : warnings) out << "warning: " << w << "\n";
  return out.str();
}

Partition make_partition(int n, double train_fraction, std::uint64_t seed) {
  require(n >= 2, ErrorCategory::kInputContract, "split protocol needs at least two items");
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCategory::kConfig,
          "train_fraction must lie in (0, 1)");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {fnv1a("partition")}));
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(idx[i], idx[pick(rng)]);
  }
  const int n_train = std::clamp(static_cast<int>(std::lround(n * train_fraction)), 1, n - 1);
  Partition p;
  p.train.assign(idx.begin(), idx.begin() + n_train);
  p.test.assign(idx.begin() + n_train, idx.end());
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.test.begin(), p.test.end());
  return p;
}

EvalReport run_split_protocol(std::span<const double> labels, const SplitRunner& runner,
                              const SplitProtocolOptions& options) {
  require(!labels.empty(), ErrorCategory::kInputContract, "split protocol: empty dataset");
  std::vector<std::uint64_t> seeds = options.seeds;
  if (seeds.empty()) {
    for (int i = 0; i < options.num_splits; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  }
  EvalReport report;
  for (std::uint64_t seed : seeds) {
    try {
      const Partition part = make_partition(static_cast<int>(labels.size()), options.train_fraction, seed);
      const std::vector<double> preds = runner(part, seed);
      require(preds.size() == part.test.size(), ErrorCategory::kInputContract,
              "split runner returned " + std::to_string(preds.size()) + " predictions for " +
                  std::to_string(part.test.size()) + " test items");
      std::vector<double> truth;
      for (int i : part.test) truth.push_back(labels[i]);
      report.splits.push_back({seed, compute_metrics(preds, truth, options.eval),
                               static_cast<int>(truth.size())});
    } catch (const std::exception& e) {
      report.warnings.push_back("split seed " + std::to_string(seed) + " failed: " + e.what());
    }
  }
  aggregate(report);
  return report;
}

}  // namespace qclip
