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

// Kernelized factorization matrix completion (KFMC) with a Gaussian RBF
// kernel k(x, y) = exp(-||x - y||^2 / (2 sigma^2)).
//
// Columns of the m x n matrix X are points in R^m (one per pipeline). The
// model approximates the feature-mapped columns by a dictionary,
// phi(X) ~= phi(D) Z with D in R^{m x r}, Z in R^{r x n}, minimizing
//
//   L(X, D, Z) = 1/2 ||phi(X) - phi(D) Z||_F^2 + beta/2 ||Z||_F^2
//              = 1/2 (n - 2 <K_DX, Z> + tr(Z^T K_DD Z)) + beta/2 ||Z||_F^2
//
// over the missing entries of X and over D, Z. The regularizer on phi(D) is
// constant for this kernel and is omitted. For fixed (X, D) the optimal Z is
// (K_DD + beta I)^{-1} K_DX, and at that Z the partial gradients below equal
// the gradients of the profiled objective.
//
// With W = Z .* K_DX (r x n) and Q = (Z Z^T) .* K_DD (r x r):
//
//   dL/dX = (X diag(1^T W) - D W) / sigma^2
//   dL/dD = (D diag(W 1) - X W^T - D diag(Q 1) + D Q) / sigma^2

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pipesel/error.hpp"
#include "pipesel/tensor.hpp"

namespace pipesel {

struct KfmcModel {
  Eigen::MatrixXd d;  // m x r dictionary
  Eigen::MatrixXd z;  // r x n coefficients
  double sigma = 1.0;
  double alpha = 1e-3;  // ridge for out-of-sample row prediction
  double beta = 1e-3;
  Eigen::Index r = 1;
};

struct KfmcOptions {
  Eigen::Index r = 32;
  std::optional<double> sigma;  // unset: median pairwise column distance
  double alpha = 1e-3;
  double beta = 1e-3;
  double eta = 0.5;    // momentum in [0, 1)
  int n_batch = 1;
  int n_iter = 20;
  int n_pass = 100;
  double update_tol = 1e-6;
  std::uint64_t seed = 0;
};

struct KfmcFit {
  KfmcModel model;
  Eigen::MatrixXd completed;
  std::vector<double> objective_history;  // profiled objective after each pass
};

inline Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a,
                                  const Eigen::MatrixXd& b, double sigma) {
  const Eigen::VectorXd an = a.colwise().squaredNorm().transpose();
  const Eigen::VectorXd bn = b.colwise().squaredNorm().transpose();
  Eigen::MatrixXd sq = -2.0 * a.transpose() * b;
  sq.colwise() += an;
  sq.rowwise() += bn.transpose();
  const double scale = -1.0 / (2.0 * sigma * sigma);
  return (sq.cwiseMax(0.0) * scale).array().exp().matrix();
}

inline Eigen::MatrixXd kfmc_optimal_z(const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& d, double sigma,
                                      double beta) {
  Eigen::MatrixXd kdd = rbf_kernel(d, d, sigma);
  kdd.diagonal().array() += beta;
  return kdd.ldlt().solve(rbf_kernel(d, x, sigma));
}

inline double kfmc_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& d,
                             const Eigen::MatrixXd& z, double sigma,
                             double beta) {
  const Eigen::MatrixXd kdx = rbf_kernel(d, x, sigma);
  const Eigen::MatrixXd kdd = rbf_kernel(d, d, sigma);
  const double n = static_cast<double>(x.cols());
  const double fit =
      n - 2.0 * kdx.cwiseProduct(z).sum() + (z.transpose() * kdd * z).trace();
  return 0.5 * fit + 0.5 * beta * z.squaredNorm();
}

inline double kfmc_profile_objective(const Eigen::MatrixXd& x,
                                     const Eigen::MatrixXd& d, double sigma,
                                     double beta) {
  return kfmc_objective(x, d, kfmc_optimal_z(x, d, sigma, beta), sigma, beta);
}

inline Eigen::MatrixXd kfmc_gradient_x(const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& d,
                                       const Eigen::MatrixXd& z, double sigma) {
  const Eigen::MatrixXd w = z.cwiseProduct(rbf_kernel(d, x, sigma));
  const Eigen::RowVectorXd colsum = w.colwise().sum();
  return (x * colsum.asDiagonal() - d * w) / (sigma * sigma);
}

inline Eigen::MatrixXd kfmc_gradient_d(const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& d,
                                       const Eigen::MatrixXd& z, double sigma) {
  const Eigen::MatrixXd w = z.cwiseProduct(rbf_kernel(d, x, sigma));
  const Eigen::MatrixXd q =
      (z * z.transpose()).cwiseProduct(rbf_kernel(d, d, sigma));
  const Eigen::VectorXd wsum = w.rowwise().sum();
  const Eigen::VectorXd qsum = q.rowwise().sum();
  return (d * wsum.asDiagonal() - x * w.transpose() - d * qsum.asDiagonal() +
          d * q) /
         (sigma * sigma);
}

// Median of pairwise Euclidean distances between columns (at most the first
// 500 columns are used).
inline double median_column_distance(const Eigen::MatrixXd& x) {
  const Eigen::Index n = std::min<Eigen::Index>(x.cols(), 500);
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist.push_back((x.col(i) - x.col(j)).norm());
    }
  }
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid > 0.0 ? *mid : 1.0;
}

namespace detail {

inline void validate_kfmc_options(const KfmcOptions& o) {
  require(o.r >= 1, "KFMC rank r must be >= 1");
  require(!o.sigma || (std::isfinite(*o.sigma) && *o.sigma > 0.0),
          "KFMC sigma must be positive and finite");
  require(o.beta >= 0.0 && o.alpha >= 0.0,
          "KFMC regularizers must be nonnegative");
  require(o.eta >= 0.0 && o.eta < 1.0, "KFMC momentum eta must lie in [0, 1)");
  require(o.n_batch >= 1 && o.n_iter >= 1 && o.n_pass >= 1,
          "KFMC n_batch, n_iter and n_pass must be >= 1");
}

// Step size for gradient steps on X: inverse of the largest per-column
// curvature scale |1^T W| / sigma^2.
inline double x_step(const Eigen::MatrixXd& w, double sigma) {
  const double scale = w.colwise().sum().cwiseAbs().maxCoeff();
  return sigma * sigma / std::max(scale, 1e-12);
}

inline double d_step(const Eigen::MatrixXd& w, const Eigen::MatrixXd& q,
                     double sigma) {
  const double scale =
      (w.rowwise().sum().cwiseAbs() + 2.0 * q.cwiseAbs().rowwise().sum())
          .maxCoeff();
  return sigma * sigma / std::max(scale, 1e-12);
}

}  // namespace detail

// Mini-batch KFMC. `observed` is an order-2 tensor (rows x columns); every
// column needs at least one observed entry. Observed entries are returned
// unchanged.
inline KfmcFit kfmc_fit(const ObservedTensor& observed,
                        const KfmcOptions& options = {}) {
  detail::validate_kfmc_options(options);
  detail::require(observed.shape().order() == 2, "KFMC expects a matrix");
  const Eigen::MatrixXd values = matricize(observed.data(), 0);
  const Eigen::MatrixXd mask = matricize(observed.mask(), 0);
  const Eigen::Index m = values.rows();
  const Eigen::Index n = values.cols();
  detail::require(options.n_batch <= n, "more batches than columns");
  for (Eigen::Index j = 0; j < n; ++j) {
    detail::require(mask.col(j).sum() > 0.0,
                    "column " + std::to_string(j) + " has no observed entries");
  }

  // Fill missing entries with the observed row mean (global mean for empty
  // rows).
  double gsum = 0.0, gcount = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (mask(i, j) == 1.0) {
        gsum += values(i, j);
        gcount += 1.0;
      }
  const double gmean = gsum / gcount;
  double gvar = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (mask(i, j) == 1.0) gvar += std::pow(values(i, j) - gmean, 2);
  const double gstd = gcount > 1.0 ? std::sqrt(gvar / (gcount - 1.0)) : 1.0;

  Eigen::MatrixXd x = values;
  for (Eigen::Index i = 0; i < m; ++i) {
    double s = 0.0, c = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (mask(i, j) == 1.0) {
        s += values(i, j);
        c += 1.0;
      }
    const double fill = c > 0.0 ? s / c : gmean;
    for (Eigen::Index j = 0; j < n; ++j)
      if (mask(i, j) == 0.0) x(i, j) = fill;
  }

  KfmcFit out;
  KfmcModel& model = out.model;
  model.r = options.r;
  model.alpha = options.alpha;
  model.beta = options.beta;
  model.sigma = options.sigma ? *options.sigma : median_column_distance(x);
  const double sigma = model.sigma;
  const double beta = model.beta;

  // Standard normal dictionary, expressed in the data's units.
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  model.d.resize(m, options.r);
  for (Eigen::Index a = 0; a < options.r; ++a)
    for (Eigen::Index i = 0; i < m; ++i)
      model.d(i, a) = gmean + (gstd > 0.0 ? gstd : 1.0) * normal(rng);
  Eigen::MatrixXd& d = model.d;

  const Eigen::MatrixXd missing = (1.0 - mask.array()).matrix();
  std::vector<Eigen::Index> starts;
  for (int b = 0; b <= options.n_batch; ++b) {
    starts.push_back(n * b / options.n_batch);
  }

  Eigen::MatrixXd d_velocity = Eigen::MatrixXd::Zero(m, options.r);
  double previous = std::numeric_limits<double>::infinity();
  for (int pass = 0; pass < options.n_pass; ++pass) {
    for (int b = 0; b < options.n_batch; ++b) {
      const Eigen::Index c0 = starts[static_cast<std::size_t>(b)];
      const Eigen::Index width = starts[static_cast<std::size_t>(b) + 1] - c0;
      if (width == 0) continue;
      auto xb = x.middleCols(c0, width);
      const auto hole = missing.middleCols(c0, width);
      Eigen::MatrixXd kdd = rbf_kernel(d, d, sigma);
      kdd.diagonal().array() += beta;
      const Eigen::LDLT<Eigen::MatrixXd> c(kdd);

      if (hole.sum() > 0.0) {
        Eigen::MatrixXd x_velocity = Eigen::MatrixXd::Zero(m, width);
        for (int l = 0; l < options.n_iter; ++l) {
          const Eigen::MatrixXd xcur = xb;
          const Eigen::MatrixXd kdx = rbf_kernel(d, xcur, sigma);
          const Eigen::MatrixXd z = c.solve(kdx);
          const Eigen::MatrixXd w = z.cwiseProduct(kdx);
          const Eigen::MatrixXd grad =
              (xcur * w.colwise().sum().asDiagonal() - d * w) / (sigma * sigma);
          x_velocity = options.eta * x_velocity +
                       detail::x_step(w, sigma) * grad.cwiseProduct(hole);
          xb -= x_velocity;
          if (x_velocity.norm() < options.update_tol) break;
        }
      }

      const Eigen::MatrixXd xcur = xb;
      const Eigen::MatrixXd kdx = rbf_kernel(d, xcur, sigma);
      const Eigen::MatrixXd z = c.solve(kdx);
      const Eigen::MatrixXd w = z.cwiseProduct(kdx);
      const Eigen::MatrixXd q =
          (z * z.transpose()).cwiseProduct(rbf_kernel(d, d, sigma));
      const Eigen::MatrixXd grad_d =
          (d * w.rowwise().sum().asDiagonal() - xcur * w.transpose() -
           d * q.rowwise().sum().asDiagonal() + d * q) /
          (sigma * sigma);
      d_velocity = options.eta * d_velocity + detail::d_step(w, q, sigma) * grad_d;
      d -= d_velocity;
    }
    const double obj = kfmc_profile_objective(x, d, sigma, beta);
    out.objective_history.push_back(obj);
    // Restart momentum whenever a pass fails to decrease the objective.
    if (obj > previous) d_velocity.setZero();
    previous = obj;
  }

  model.z = kfmc_optimal_z(x, d, sigma, beta);
  // Observed entries are restored exactly.
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (mask(i, j) == 1.0) x(i, j) = values(i, j);
  out.completed = std::move(x);
  return out;
}

// Closed-form prediction of a new row (a new dataset) from entries observed
// at column indices `omega`:
//   d_new = e_omega Z_omega^T (Z_omega Z_omega^T + alpha I)^{-1}
//   e_rest = d_new Z_rest
// Known entries are echoed back unchanged.
inline Eigen::VectorXd kfmc_predict_new_row(const KfmcModel& model,
                                            std::span<const double> known,
                                            std::span<const std::size_t> omega,
                                            double alpha) {
  detail::require(!omega.empty(), "need at least one known entry");
  detail::require(known.size() == omega.size(),
                  "known values and indices differ in length");
  detail::require(alpha >= 0.0, "alpha must be nonnegative");
  const Eigen::Index r = model.z.rows();
  const Eigen::Index n = model.z.cols();
  Eigen::MatrixXd z_omega(r, static_cast<Eigen::Index>(omega.size()));
  Eigen::RowVectorXd e_omega(static_cast<Eigen::Index>(omega.size()));
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (std::size_t i = 0; i < omega.size(); ++i) {
    detail::require(omega[i] < static_cast<std::size_t>(n),
                    "known index out of range");
    detail::require(!seen[omega[i]], "duplicate known index");
    seen[omega[i]] = true;
    z_omega.col(static_cast<Eigen::Index>(i)) =
        model.z.col(static_cast<Eigen::Index>(omega[i]));
    e_omega(static_cast<Eigen::Index>(i)) = known[i];
  }
  Eigen::MatrixXd gram = z_omega * z_omega.transpose();
  gram.diagonal().array() += alpha;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1e-300))) {
    throw NumericalError(
        "singular system in row prediction; use a nonzero alpha");
  }
  const Eigen::RowVectorXd d_new =
      gram.ldlt().solve((e_omega * z_omega.transpose()).transpose()).transpose();
  Eigen::VectorXd row = (d_new * model.z).transpose();
  for (std::size_t i = 0; i < omega.size(); ++i) {
    row(static_cast<Eigen::Index>(omega[i])) = known[i];
  }
  return row;
}

struct ColumnPrediction {
  Eigen::VectorXd column;
  std::vector<double> objective_history;
};

// Out-of-sample extension for a new column (a new pipeline): gradient steps on
// the missing entries with D fixed and Z profiled out, with backtracking so
// the objective never increases.
inline ColumnPrediction kfmc_predict_new_column(
    const KfmcModel& model, std::span<const double> values,
    std::span<const double> mask, int n_iter = 200, double tol = 1e-6) {
  const Eigen::Index m = model.d.rows();
  detail::require(values.size() == static_cast<std::size_t>(m) &&
                      mask.size() == static_cast<std::size_t>(m),
                  "column length does not match the dictionary");
  detail::require(model.sigma > 0.0, "sigma must be positive");
  detail::require(n_iter >= 1, "n_iter must be >= 1");
  Eigen::VectorXd x(m);
  Eigen::VectorXd hole(m);
  const Eigen::VectorXd atom_mean = model.d.rowwise().mean();
  bool any_observed = false;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double mi = mask[static_cast<std::size_t>(i)];
    detail::require(mi == 0.0 || mi == 1.0, "mask must be binary");
    any_observed = any_observed || mi == 1.0;
    hole(i) = 1.0 - mi;
    x(i) = mi == 1.0 ? values[static_cast<std::size_t>(i)] : atom_mean(i);
  }
  detail::require(any_observed, "column has no observed entries");

  ColumnPrediction out;
  auto objective = [&](const Eigen::VectorXd& col) {
    return kfmc_profile_objective(col, model.d, model.sigma, model.beta);
  };
  double current = objective(x);
  out.objective_history.push_back(current);
  if (hole.sum() == 0.0) {
    out.column = x;
    return out;
  }
  Eigen::MatrixXd kdd = rbf_kernel(model.d, model.d, model.sigma);
  kdd.diagonal().array() += model.beta;
  const Eigen::LDLT<Eigen::MatrixXd> c(kdd);
  for (int l = 0; l < n_iter; ++l) {
    const Eigen::MatrixXd kdx = rbf_kernel(model.d, x, model.sigma);
    const Eigen::MatrixXd z = c.solve(kdx);
    const Eigen::MatrixXd w = z.cwiseProduct(kdx);
    const Eigen::VectorXd grad =
        ((x * w.colwise().sum() - model.d * w) / (model.sigma * model.sigma))
            .col(0)
            .cwiseProduct(hole);
    double step = detail::x_step(w, model.sigma);
    bool moved = false;
    for (int tries = 0; tries < 30; ++tries) {
      const Eigen::VectorXd candidate = x - step * grad;
      const double value = objective(candidate);
      if (value <= current) {
        moved = (candidate - x).norm() >= tol;
        x = candidate;
        current = value;
        break;
      }
      step *= 0.5;
    }
    out.objective_history.push_back(current);
    if (!moved) break;
  }
  out.column = x;
  return out;
}

}  // namespace pipesel
