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

// Greedy D-optimal experiment design over pipeline embeddings.
//
// Column j of Y is the embedding y_j of pipeline j. Choosing a set S gives
// the Fisher information X = sum_{j in S} y_j y_j^T; the design maximizes
// log det X. Adding y multiplies det X by (1 + y^T X^{-1} y), which is the
// greedy payoff, and X^{-1} is maintained by rank-one updates.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pipesel/error.hpp"

namespace pipesel {

struct DesignPool {
  Eigen::MatrixXd y;                       // k x n
  Eigen::VectorXd runtimes;                // predicted seconds, length n
  std::optional<Eigen::VectorXd> weights;  // sigma_j, length n

  Eigen::Index size() const { return y.cols(); }
  Eigen::Index dim() const { return y.rows(); }

  void validate() const {
    detail::require(y.rows() >= 1 && y.cols() >= 1, "empty design pool");
    detail::require(y.allFinite(), "design vectors must be finite");
    detail::require(runtimes.size() == y.cols(),
                    "runtime count does not match the number of designs");
    for (Eigen::Index j = 0; j < runtimes.size(); ++j) {
      detail::require(std::isfinite(runtimes(j)) && runtimes(j) > 0.0,
                      "predicted runtimes must be positive and finite");
    }
    if (weights) {
      detail::require(weights->size() == y.cols(),
                      "weight count does not match the number of designs");
      for (Eigen::Index j = 0; j < weights->size(); ++j) {
        detail::require(std::isfinite((*weights)(j)) && (*weights)(j) > 0.0,
                        "weights must be positive and finite");
      }
    }
  }

  // Zero design vectors carry no information and are never selected.
  bool selectable(Eigen::Index j) const { return y.col(j).squaredNorm() > 0.0; }
};

struct DesignState {
  std::vector<std::size_t> selected;
  Eigen::MatrixXd fisher;  // ridge I + sum of y y^T over selected
  Eigen::MatrixXd x_inv;
  double logdet = 0.0;
  double elapsed = 0.0;  // predicted seconds of selected designs
};

inline double det_lemma_payoff(const DesignState& state,
                               const Eigen::VectorXd& y) {
  detail::require(y.size() == state.x_inv.rows(),
                  "design vector dimension does not match the state");
  return y.dot(state.x_inv * y);
}

inline void sherman_morrison_update_inplace(DesignState& state,
                                            const Eigen::VectorXd& y) {
  const double payoff = det_lemma_payoff(state, y);
  const double denom = 1.0 + payoff;
  if (!(denom > 1e-12)) {
    throw NumericalError("rank-one update denominator is not positive");
  }
  const Eigen::VectorXd v = state.x_inv * y;
  state.x_inv -= (v * v.transpose()) / denom;
  state.x_inv = 0.5 * (state.x_inv + state.x_inv.transpose());
  state.fisher += y * y.transpose();
  state.logdet += std::log1p(payoff);
}

inline DesignState sherman_morrison_update(const DesignState& state,
                                           const Eigen::VectorXd& y) {
  DesignState next = state;
  sherman_morrison_update_inplace(next, y);
  return next;
}

namespace detail {

inline void validate_index_set(const DesignPool& pool,
                               const std::vector<std::size_t>& s) {
  std::vector<bool> seen(static_cast<std::size_t>(pool.size()), false);
  for (std::size_t j : s) {
    require(j < seen.size(), "design index " + std::to_string(j) +
                                 " out of range");
    require(!seen[j], "design index " + std::to_string(j) + " repeated");
    seen[j] = true;
  }
}

}  // namespace detail

// State for an initial set. With ridge = 0 the initial Fisher matrix must be
// nonsingular; a positive ridge starts from ridge * I instead.
inline DesignState make_design_state(const DesignPool& pool,
                                     const std::vector<std::size_t>& init,
                                     double ridge = 0.0) {
  pool.validate();
  detail::validate_index_set(pool, init);
  detail::require(std::isfinite(ridge) && ridge >= 0.0,
                  "ridge must be nonnegative");
  const Eigen::Index k = pool.dim();
  DesignState s;
  s.selected = init;
  s.fisher = ridge * Eigen::MatrixXd::Identity(k, k);
  for (std::size_t j : init) {
    const auto y = pool.y.col(static_cast<Eigen::Index>(j));
    s.fisher += y * y.transpose();
    s.elapsed += pool.runtimes(static_cast<Eigen::Index>(j));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.fisher);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-10 * std::max(top, 1e-300))) {
    throw NumericalError(
        "initial design set gives a singular information matrix; "
        "initialize with qr_init or use a positive ridge");
  }
  s.x_inv = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
            eig.eigenvectors().transpose();
  s.logdet = eig.eigenvalues().array().log().sum();
  return s;
}

// log det(eps I + sum_{j in S} y_j y_j^T) - k log eps: zero on the empty set,
// monotone and submodular.
inline double normalized_logdet(const Eigen::MatrixXd& y,
                                const std::vector<std::size_t>& s,
                                double eps = 1e-6) {
  const Eigen::Index k = y.rows();
  Eigen::MatrixXd m = eps * Eigen::MatrixXd::Identity(k, k);
  for (std::size_t j : s) {
    m += y.col(static_cast<Eigen::Index>(j)) *
         y.col(static_cast<Eigen::Index>(j)).transpose();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  const double ld =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return ld - static_cast<double>(k) * std::log(eps);
}

namespace detail {

// One greedy run. Candidates whose predicted runtime would overflow the
// budget are skipped; the loop ends when the size limit is reached or no
// candidate fits. Ties go to the lowest index.
inline DesignState run_greedy(const DesignPool& pool, DesignState state,
                              std::size_t max_count, double budget,
                              bool cost_weighted) {
  const std::size_t n = static_cast<std::size_t>(pool.size());
  std::vector<bool> taken(n, false);
  for (std::size_t j : state.selected) taken[j] = true;
  while (state.selected.size() < max_count) {
    std::optional<std::size_t> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const Eigen::Index jj = static_cast<Eigen::Index>(j);
      if (taken[j] || !pool.selectable(jj)) continue;
      if (state.elapsed + pool.runtimes(jj) > budget) continue;
      double score = det_lemma_payoff(state, pool.y.col(jj));
      if (cost_weighted) score /= pool.runtimes(jj);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (!best) break;
    const Eigen::Index b = static_cast<Eigen::Index>(*best);
    sherman_morrison_update_inplace(state, pool.y.col(b));
    state.selected.push_back(*best);
    state.elapsed += pool.runtimes(b);
    taken[*best] = true;
  }
  return state;
}

}  // namespace detail

inline DesignState greedy_size_constrained_state(
    const DesignPool& pool, std::size_t max_count,
    const std::vector<std::size_t>& init, double ridge = 0.0) {
  detail::require(max_count >= init.size(),
                  "size limit is smaller than the initial set");
  DesignState s = make_design_state(pool, init, ridge);
  return detail::run_greedy(pool, std::move(s), max_count,
                            std::numeric_limits<double>::infinity(), false);
}

inline std::vector<std::size_t> greedy_size_constrained(
    const DesignPool& pool, std::size_t max_count,
    const std::vector<std::size_t>& init, double ridge = 0.0) {
  return greedy_size_constrained_state(pool, max_count, init, ridge).selected;
}

inline DesignState greedy_time_constrained_state(
    const DesignPool& pool, double tau, const std::vector<std::size_t>& init,
    double ridge = 0.0) {
  detail::require(std::isfinite(tau) && tau > 0.0,
                  "time budget must be positive and finite");
  DesignState s = make_design_state(pool, init, ridge);
  detail::require(s.elapsed <= tau,
                  "initial set alone exceeds the time budget");
  return detail::run_greedy(pool, std::move(s),
                            static_cast<std::size_t>(pool.size()), tau, true);
}

inline std::vector<std::size_t> greedy_time_constrained(
    const DesignPool& pool, double tau, const std::vector<std::size_t>& init,
    double ridge = 0.0) {
  return greedy_time_constrained_state(pool, tau, init, ridge).selected;
}

struct QrInit {
  std::vector<std::size_t> indices;
  bool fallback = false;
};

// Initial set from column-pivoted QR on the fast pipelines
// (predicted runtime <= tau / (2k)). With fewer than k fast pipelines the
// fastest ones are taken in order while their total stays within tau, and
// `fallback` is set.
inline QrInit qr_init(const DesignPool& pool, double tau, Eigen::Index k) {
  pool.validate();
  detail::require(std::isfinite(tau) && tau > 0.0,
                  "time budget must be positive and finite");
  detail::require(k >= 1 && k <= pool.dim(),
                  "embedding dimension k must lie in [1, rows of Y]");
  const double cutoff = tau / (2.0 * static_cast<double>(k));
  std::vector<Eigen::Index> valid;
  for (Eigen::Index j = 0; j < pool.size(); ++j) {
    if (pool.runtimes(j) <= cutoff && pool.selectable(j)) valid.push_back(j);
  }
  QrInit out;
  if (static_cast<Eigen::Index>(valid.size()) >= k) {
    Eigen::MatrixXd sub(k, static_cast<Eigen::Index>(valid.size()));
    for (std::size_t c = 0; c < valid.size(); ++c) {
      sub.col(static_cast<Eigen::Index>(c)) = pool.y.col(valid[c]).head(k);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = 0; i < k; ++i) {
      out.indices.push_back(static_cast<std::size_t>(valid[
          static_cast<std::size_t>(perm(i))]));
    }
    return out;
  }
  out.fallback = true;
  std::vector<std::size_t> order(static_cast<std::size_t>(pool.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pool.runtimes(static_cast<Eigen::Index>(a)) <
           pool.runtimes(static_cast<Eigen::Index>(b));
  });
  double spent = 0.0;
  for (std::size_t j : order) {
    const double t = pool.runtimes(static_cast<Eigen::Index>(j));
    if (spent + t > tau) break;
    spent += t;
    out.indices.push_back(j);
  }
  return out;
}

struct DesignResult {
  std::vector<std::size_t> selected;
  bool fallback = false;
};

// QR initialization followed by time-constrained greedy. On the fallback
// path the fast prefix is returned without further design steps.
inline DesignResult time_constrained_design(const DesignPool& pool, double tau,
                                            Eigen::Index k) {
  const QrInit init = qr_init(pool, tau, k);
  if (init.fallback) return {init.indices, true};
  DesignPool sub{pool.y.topRows(k), pool.runtimes, std::nullopt};
  return {greedy_time_constrained(sub, tau, init.indices), false};
}

// Sample variance (denominator m - 1) of each residual column E - X^T Y,
// floored at 1e-12.
inline Eigen::VectorXd estimate_pipeline_variances(const Eigen::MatrixXd& e,
                                                   const Eigen::MatrixXd& x,
                                                   const Eigen::MatrixXd& y) {
  detail::require(x.rows() == y.rows() && x.cols() == e.rows() &&
                      y.cols() == e.cols(),
                  "factor shapes do not match the error matrix");
  detail::require(e.rows() >= 2, "need at least two datasets for a variance");
  const Eigen::MatrixXd r = e - x.transpose() * y;
  const Eigen::RowVectorXd mean = r.colwise().mean();
  const Eigen::VectorXd var =
      ((r.rowwise() - mean).colwise().squaredNorm() /
       static_cast<double>(e.rows() - 1))
          .transpose();
  return var.cwiseMax(1e-12);
}

// Weighted least-squares variant: designs are rescaled to y_j / sigma_j and
// the unweighted procedure (QR initialization included) runs on the result.
inline DesignResult greedy_weighted_time_constrained(const DesignPool& pool,
                                                     double tau,
                                                     Eigen::Index k) {
  pool.validate();
  detail::require(pool.weights.has_value(), "weighted design needs weights");
  DesignPool scaled{pool.y, pool.runtimes, std::nullopt};
  for (Eigen::Index j = 0; j < pool.size(); ++j) {
    scaled.y.col(j) /= (*pool.weights)(j);
  }
  return time_constrained_design(scaled, tau, k);
}

}  // namespace pipesel
