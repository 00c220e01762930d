// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Online pipeline selection for a new dataset. Each round designs a set of
// pipelines to observe under a time target, estimates the dataset's
// embedding from the observed errors, ranks all pipelines by predicted
// error, observes the best predicted ones and forms an ensemble. The time
// target doubles every round and the rank grows while validation improves.
//
// All time is simulated: an observation costs the runtime the oracle
// reports. A pipeline is launched only if its predicted runtime fits in the
// remaining budget, and a launched pipeline that overruns is killed when the
// budget runs out, so the total charge never exceeds the budget.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pipesel/design.hpp"
#include "pipesel/error.hpp"
#include "pipesel/runtime_model.hpp"

namespace pipesel {

struct Observation {
  double error = 0.0;
  double seconds = 0.0;
};

class ObservationOracle {
 public:
  virtual ~ObservationOracle() = default;
  virtual std::size_t size() const = 0;
  virtual Observation observe(std::size_t pipeline) const = 0;
};

// Oracle backed by recorded errors and runtimes (one entry per pipeline).
class TableOracle final : public ObservationOracle {
 public:
  TableOracle(std::vector<double> errors, std::vector<double> seconds)
      : errors_(std::move(errors)), seconds_(std::move(seconds)) {
    detail::require(errors_.size() == seconds_.size(),
                    "oracle error and runtime tables differ in length");
  }

  std::size_t size() const override { return errors_.size(); }

  Observation observe(std::size_t pipeline) const override {
    if (pipeline >= errors_.size()) {
      throw RunError("oracle has no pipeline " + std::to_string(pipeline));
    }
    const Observation o{errors_[pipeline], seconds_[pipeline]};
    if (!std::isfinite(o.error) || !std::isfinite(o.seconds) ||
        o.seconds < 0.0) {
      throw RunError("oracle returned an invalid record for pipeline " +
                     std::to_string(pipeline));
    }
    return o;
  }

 private:
  std::vector<double> errors_;
  std::vector<double> seconds_;
};

struct SelectionConfig {
  double total_budget = 100.0;
  double initial_time_target = 1.0;
  std::size_t initial_rank = 1;
  std::size_t top_n = 10;
  std::size_t ensemble_size = 5;
  double energy_fraction = 0.97;
  // Simulated seconds charged for each round's design computation. With
  // charge_wall_clock the measured wall time is charged instead.
  double design_overhead = 0.0;
  bool charge_wall_clock = false;
  // After the doubling rounds, spend what is left of the budget on unobserved
  // pipelines in order of the final predicted error.
  bool spend_remaining = true;

  void validate() const {
    detail::require(std::isfinite(total_budget) && total_budget > 0.0,
                    "total_budget must be positive");
    detail::require(initial_time_target > 0.0 &&
                        initial_time_target <= total_budget / 2.0,
                    "initial_time_target must lie in (0, total_budget / 2]");
    detail::require(initial_rank >= 1 && top_n >= 1 && ensemble_size >= 1,
                    "initial_rank, top_n and ensemble_size must be >= 1");
    detail::require(energy_fraction > 0.0 && energy_fraction <= 1.0,
                    "energy_fraction must lie in (0, 1]");
    detail::require(std::isfinite(design_overhead) && design_overhead >= 0.0,
                    "design_overhead must be nonnegative");
  }
};

struct SelectionContext {
  Eigen::MatrixXd y;  // k_max x n pipeline embeddings, rows by energy
  std::vector<RuntimePredictor> runtime_models;  // one per pipeline
  double n_points = 1.0;
  double n_features = 1.0;
  const ObservationOracle* oracle = nullptr;
  // Ranking used when a round observes nothing (e.g. mean training error).
  std::optional<Eigen::VectorXd> prior_errors;

  std::size_t pipelines() const { return static_cast<std::size_t>(y.cols()); }
};

struct ObservationEvent {
  std::size_t pipeline = 0;
  double error = 0.0;
  double seconds = 0.0;     // charged
  double clock_after = 0.0;
  bool completed = true;    // false: killed at the budget
};

// Simulated clock plus the cache of completed observations.
class SelectionSession {
 public:
  SelectionSession(const SelectionContext& ctx, double budget)
      : ctx_(ctx), budget_(budget) {}

  double spent() const { return spent_; }
  double remaining() const { return std::max(0.0, budget_ - spent_); }
  const std::vector<ObservationEvent>& events() const { return events_; }

  std::optional<double> cached(std::size_t j) const {
    auto it = cache_.find(j);
    if (it == cache_.end()) return std::nullopt;
    return it->second;
  }

  void charge(double seconds) { spent_ += std::min(seconds, remaining()); }

  // Observed error for pipeline j, or nothing if it cannot be afforded or was
  // killed. Cached results are free.
  std::optional<double> observe(std::size_t j, double predicted_seconds) {
    if (auto c = cached(j)) return c;
    if (predicted_seconds > remaining() || remaining() <= 0.0) {
      return std::nullopt;
    }
    const Observation o = ctx_.oracle->observe(j);
    // A run that ends exactly at the budget (up to summation roundoff)
    // completes; the clock is clamped so the budget is still never exceeded.
    if (o.seconds > remaining() &&
        o.seconds <= remaining() + 1e-9 * budget_) {
      spent_ = budget_;
      events_.push_back({j, o.error, o.seconds, spent_, true});
      cache_[j] = o.error;
      return o.error;
    }
    if (o.seconds > remaining()) {
      const double cut = remaining();
      spent_ = budget_;
      events_.push_back({j, 0.0, cut, spent_, false});
      return std::nullopt;
    }
    spent_ += o.seconds;
    events_.push_back({j, o.error, o.seconds, spent_, true});
    cache_[j] = o.error;
    return o.error;
  }

 private:
  const SelectionContext& ctx_;
  double budget_;
  double spent_ = 0.0;
  std::map<std::size_t, double> cache_;
  std::vector<ObservationEvent> events_;
};

// Minimum-norm least squares for x in e_S = Y_{:,S}^T x.
inline Eigen::VectorXd estimate_embedding(const Eigen::MatrixXd& y,
                                          std::span<const std::size_t> s,
                                          std::span<const double> e_s) {
  detail::require(!s.empty(), "no observed pipelines to estimate from");
  detail::require(s.size() == e_s.size(),
                  "observed indices and errors differ in length");
  Eigen::MatrixXd a(static_cast<Eigen::Index>(s.size()), y.rows());
  Eigen::VectorXd b(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    detail::require(s[i] < static_cast<std::size_t>(y.cols()),
                    "observed index out of range");
    a.row(static_cast<Eigen::Index>(i)) =
        y.col(static_cast<Eigen::Index>(s[i])).transpose();
    b(static_cast<Eigen::Index>(i)) = e_s[i];
  }
  return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(a).solve(b);
}

inline Eigen::VectorXd predict_errors(const Eigen::MatrixXd& y,
                                      const Eigen::VectorXd& x) {
  detail::require(x.size() == y.rows(), "embedding dimension mismatch");
  return y.transpose() * x;
}

inline Eigen::VectorXd clamp_unit(const Eigen::VectorXd& e) {
  return e.cwiseMax(0.0).cwiseMin(1.0);
}

// Indices sorted by value, ties to the lowest index.
inline std::vector<std::size_t> rank_ascending(const Eigen::VectorXd& v) {
  std::vector<std::size_t> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v(static_cast<Eigen::Index>(a)) < v(static_cast<Eigen::Index>(b));
  });
  return order;
}

// Per-example modal label across members; ties go to the smallest label.
inline std::vector<int> majority_vote(
    const std::vector<std::vector<int>>& labels) {
  detail::require(!labels.empty(), "majority vote needs at least one member");
  const std::size_t m = labels.front().size();
  for (const auto& row : labels) {
    detail::require(row.size() == m, "members label different example counts");
  }
  std::vector<int> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::map<int, int> counts;
    for (const auto& row : labels) ++counts[row[i]];
    int best = counts.begin()->first, best_count = 0;
    for (const auto& [label, c] : counts) {
      if (c > best_count) {
        best = label;
        best_count = c;
      }
    }
    out[i] = best;
  }
  return out;
}

struct RoundLog {
  std::size_t round = 0;
  double time_target = 0.0;
  std::size_t rank_used = 0;
  std::vector<std::size_t> designed_set;
  std::vector<std::size_t> observed_set;  // designed pipelines actually seen
  std::vector<double> observed_errors;
  Eigen::VectorXd estimated_embedding;
  Eigen::VectorXd predicted_errors;  // raw; clamp_unit() for reporting
  std::vector<std::size_t> top_candidates;
  std::vector<std::size_t> ensemble_members;
  std::vector<double> ensemble_errors;
  double validation_error = std::numeric_limits<double>::infinity();
  bool fallback = false;
  double clock_after = 0.0;
};

struct SelectionReport {
  std::vector<RoundLog> rounds;
  std::vector<std::size_t> final_ranking;
  std::vector<std::size_t> final_ensemble;
  std::vector<std::size_t> sweep_observed;  // seen after the last round
  double budget_spent = 0.0;
  double total_budget = 0.0;
  std::vector<ObservationEvent> events;
};

namespace detail {

inline void validate_context(const SelectionContext& ctx) {
  require(ctx.oracle != nullptr, "selection needs an observation oracle");
  require(ctx.y.rows() >= 1 && ctx.y.cols() >= 1, "empty embedding matrix");
  require(ctx.y.allFinite(), "embeddings must be finite");
  require(ctx.runtime_models.size() == ctx.pipelines(),
          "need one runtime model per pipeline");
  require(ctx.oracle->size() == ctx.pipelines(),
          "oracle size does not match the number of pipelines");
  if (ctx.prior_errors) {
    require(ctx.prior_errors->size() == ctx.y.cols(),
            "prior error vector has the wrong length");
  }
}

inline Eigen::VectorXd predicted_runtimes(const SelectionContext& ctx) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(ctx.pipelines()));
  for (std::size_t j = 0; j < ctx.pipelines(); ++j) {
    t(static_cast<Eigen::Index>(j)) =
        predict_runtime(ctx.runtime_models[j], ctx.n_points, ctx.n_features);
  }
  return t;
}

}  // namespace detail

inline RoundLog fit_one_round(const SelectionContext& ctx,
                              SelectionSession& session, double time_target,
                              std::size_t rank, const SelectionConfig& config) {
  detail::validate_context(ctx);
  detail::require(rank >= 1 && rank <= static_cast<std::size_t>(ctx.y.rows()),
                  "rank exceeds the embedding dimension");
  const Eigen::Index k = static_cast<Eigen::Index>(rank);
  RoundLog log;
  log.time_target = time_target;
  log.rank_used = rank;

  const Eigen::VectorXd t_hat = detail::predicted_runtimes(ctx);
  const Eigen::MatrixXd yk = ctx.y.topRows(k);
  const auto started = std::chrono::steady_clock::now();
  const DesignResult design =
      time_constrained_design(DesignPool{yk, t_hat, std::nullopt}, time_target, k);
  const double wall = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  session.charge(config.charge_wall_clock ? wall : config.design_overhead);
  log.designed_set = design.selected;
  log.fallback = design.fallback;

  // Designed observations stop once the round has really used its time
  // target; predictions can be far too optimistic.
  const double round_start = session.spent();
  for (std::size_t j : design.selected) {
    if (session.spent() - round_start >= time_target) break;
    if (auto e = session.observe(j, t_hat(static_cast<Eigen::Index>(j)))) {
      log.observed_set.push_back(j);
      log.observed_errors.push_back(*e);
    }
  }

  if (log.observed_set.empty()) {
    log.fallback = true;
    log.estimated_embedding = Eigen::VectorXd::Zero(k);
    log.predicted_errors = ctx.prior_errors
                               ? *ctx.prior_errors
                               : Eigen::VectorXd::Zero(ctx.y.cols());
  } else {
    log.estimated_embedding =
        estimate_embedding(yk, log.observed_set, log.observed_errors);
    log.predicted_errors = predict_errors(yk, log.estimated_embedding);
  }

  const std::vector<std::size_t> order = rank_ascending(log.predicted_errors);
  const std::size_t top = std::min(config.top_n, order.size());
  log.top_candidates.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top));

  // Observe the top candidates, then keep the best observed ones.
  std::vector<std::pair<double, std::size_t>> seen;
  for (std::size_t j : log.top_candidates) {
    if (auto e = session.observe(j, t_hat(static_cast<Eigen::Index>(j)))) {
      seen.emplace_back(*e, j);
    }
  }
  std::stable_sort(seen.begin(), seen.end(), [](const auto& a, const auto& b) {
    return a.first < b.first;
  });
  for (std::size_t i = 0; i < std::min(config.ensemble_size, seen.size()); ++i) {
    log.ensemble_members.push_back(seen[i].second);
    log.ensemble_errors.push_back(seen[i].first);
  }
  if (!log.ensemble_errors.empty()) {
    log.validation_error =
        std::accumulate(log.ensemble_errors.begin(), log.ensemble_errors.end(),
                        0.0) /
        static_cast<double>(log.ensemble_errors.size());
  }
  log.clock_after = session.spent();
  return log;
}

inline SelectionReport run_online(const SelectionContext& ctx,
                                  const SelectionConfig& config) {
  config.validate();
  detail::validate_context(ctx);
  const std::size_t k_max = static_cast<std::size_t>(ctx.y.rows());
  SelectionSession session(ctx, config.total_budget);
  SelectionReport report;
  report.total_budget = config.total_budget;
  std::size_t rank = std::min(config.initial_rank, k_max);
  double previous = std::numeric_limits<double>::infinity();
  double target = config.initial_time_target;
  for (std::size_t round = 0; target <= config.total_budget / 2.0; ++round) {
    RoundLog log = fit_one_round(ctx, session, target, rank, config);
    log.round = round;
    const bool improved = round > 0 && log.validation_error < previous;
    previous = log.validation_error;
    report.rounds.push_back(std::move(log));
    if (improved) rank = std::min(rank + 1, k_max);
    target *= 2.0;
  }
  if (!report.rounds.empty()) {
    const RoundLog& last = report.rounds.back();
    report.final_ranking = rank_ascending(last.predicted_errors);
    report.final_ensemble = last.ensemble_members;
  }
  if (config.spend_remaining && !report.final_ranking.empty()) {
    // First pass trusts the runtime predictions; the second ignores them,
    // since an overrun is killed at the budget anyway.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j : report.final_ranking) {
        if (session.remaining() <= 0.0) break;
        if (session.cached(j)) continue;
        const double t = pass == 0 ? predict_runtime(ctx.runtime_models[j],
                                                     ctx.n_points, ctx.n_features)
                                   : 0.0;
        if (session.observe(j, t)) report.sweep_observed.push_back(j);
      }
    }
    // Re-pick the ensemble from everything seen.
    std::vector<std::pair<double, std::size_t>> seen;
    for (const ObservationEvent& ev : session.events()) {
      if (ev.completed) seen.emplace_back(ev.error, ev.pipeline);
    }
    std::stable_sort(seen.begin(), seen.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    if (!seen.empty()) {
      report.final_ensemble.clear();
      for (std::size_t i = 0; i < std::min(config.ensemble_size, seen.size()); ++i)
        report.final_ensemble.push_back(seen[i].second);
    }
  }
  report.budget_spent = session.spent();
  report.events = session.events();
  return report;
}

// Best true error among a round's ensemble minus the global best.
inline double round_regret(const RoundLog& log, std::span<const double> truth) {
  const double best = *std::min_element(truth.begin(), truth.end());
  double chosen = std::numeric_limits<double>::infinity();
  for (std::size_t j : log.ensemble_members) chosen = std::min(chosen, truth[j]);
  if (!std::isfinite(chosen)) chosen = *std::max_element(truth.begin(), truth.end());
  return chosen - best;
}

}  // namespace pipesel
