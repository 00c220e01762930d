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

// Expectation-maximization completion of partially observed error tensors.
//
// Both variants alternate a low-rank fit of the current filled-in tensor with
// re-imputation of the missing entries from that fit:
//
//   E <- mask * E_obs + (1 - mask) * E_pred
//
// em_tucker fits a Tucker model; em_matrix fits truncated PCA to one
// unfolding. The Tucker fit is warm-started from the previous iteration's
// factors so the observed-entry residual never increases.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "pipesel/error.hpp"
#include "pipesel/factorization.hpp"
#include "pipesel/tensor.hpp"

namespace pipesel {

struct CompletionResult {
  DenseTensor completed;
  int iterations = 0;
  // Relative error on observed entries after each iteration.
  std::vector<double> relative_error_history;
  bool converged = false;
};

struct EmOptions {
  int max_iter = 1000;
  double tol = 1e-4;      // stop once the relative-error decrease is below this
  int inner_sweeps = 1;   // HOOI sweeps per EM iteration
};

// ||mask * (truth - pred)||^2 / ||mask * truth||^2
inline double relative_error(const DenseTensor& truth, const DenseTensor& pred,
                             const DenseTensor& mask) {
  detail::require(truth.shape() == pred.shape() && truth.shape() == mask.shape(),
                  "relative_error: shapes differ");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double m = mask[i];
    detail::require(m == 0.0 || m == 1.0, "relative_error: mask must be binary");
    if (m == 0.0) continue;
    const double d = truth[i] - pred[i];
    num += d * d;
    den += truth[i] * truth[i];
  }
  if (den == 0.0) {
    throw NumericalError(
        "relative_error: masked truth has zero energy (denominator is 0)");
  }
  return num / den;
}

namespace detail {

inline void validate_observed(const ObservedTensor& t) {
  const Shape& s = t.shape();
  require(t.observed_count() > 0, "completion needs at least one observed entry");
  for (std::size_t flat = 0; flat < t.data().size(); ++flat) {
    if (t.observed(flat)) {
      require(std::isfinite(t.data()[flat]), "observed values must be finite");
    }
  }
  for (std::size_t mode = 0; mode < s.order(); ++mode) {
    const Eigen::MatrixXd m = matricize(t.mask(), mode);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      require(m.row(i).sum() > 0.0,
              "slice " + std::to_string(i) + " of mode " +
                  std::to_string(mode) + " has no observed entries");
    }
  }
}

inline DenseTensor mean_filled(const ObservedTensor& t) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < t.data().size(); ++i) {
    if (t.observed(i)) {
      sum += t.data()[i];
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  DenseTensor filled = t.data();
  for (std::size_t i = 0; i < filled.size(); ++i) {
    if (!t.observed(i)) filled[i] = mean;
  }
  return filled;
}

inline double observed_relative_error(const ObservedTensor& t,
                                      const DenseTensor& pred) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!t.observed(i)) continue;
    const double d = t.data()[i] - pred[i];
    num += d * d;
    den += t.data()[i] * t.data()[i];
  }
  return den == 0.0 ? num : num / den;
}

inline void impute(const ObservedTensor& t, const DenseTensor& pred,
                   DenseTensor& current) {
  for (std::size_t i = 0; i < current.size(); ++i) {
    current[i] = t.observed(i) ? t.data()[i] : pred[i];
  }
}

// Shared EM driver. `fit` maps the current filled tensor to a prediction.
template <typename Fit>
CompletionResult run_em(const ObservedTensor& t, const EmOptions& options,
                        Fit&& fit) {
  require(options.max_iter >= 1, "max_iter must be >= 1");
  require(options.tol >= 0.0, "tol must be >= 0");
  CompletionResult result;
  result.completed = mean_filled(t);
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const DenseTensor pred = fit(result.completed, iter);
    const double err = observed_relative_error(t, pred);
    impute(t, pred, result.completed);
    result.relative_error_history.push_back(err);
    result.iterations = iter + 1;
    if (err == 0.0 || (std::isfinite(previous) &&
                       previous - err < options.tol * previous)) {
      result.converged = true;
      break;
    }
    previous = err;
  }
  return result;
}

}  // namespace detail

inline CompletionResult em_tucker(const ObservedTensor& t,
                                  const TuckerRanks& ranks,
                                  const EmOptions& options = {}) {
  detail::validate_observed(t);
  ranks.validate_for(t.shape());
  detail::require(options.inner_sweeps >= 1, "inner_sweeps must be >= 1");
  TuckerFactors factors;
  return detail::run_em(t, options, [&](const DenseTensor& current, int iter) {
    TuckerOptions inner{options.inner_sweeps, 0.0};
    TuckerFit fit = tucker_fit(current, ranks, inner,
                               iter == 0 ? nullptr : &factors);
    factors = std::move(fit.factors);
    return factors.reconstruct();
  });
}

inline CompletionResult em_tucker(const ObservedTensor& t,
                                  const TuckerRanks& ranks, int max_iter,
                                  double tol) {
  EmOptions options;
  options.max_iter = max_iter;
  options.tol = tol;
  return em_tucker(t, ranks, options);
}

// EM with truncated PCA of the mode-`mode` unfolding as the fit step.
inline CompletionResult em_matrix(const ObservedTensor& t, std::size_t mode,
                                  Eigen::Index rank,
                                  const EmOptions& options = {}) {
  detail::validate_observed(t);
  detail::require_mode(t.shape(), mode);
  const Shape& shape = t.shape();
  return detail::run_em(t, options, [&](const DenseTensor& current, int) {
    const Eigen::MatrixXd m = matricize(current, mode);
    const PcaFactors f = pca_factorize(m, rank);
    return fold(f.x.transpose() * f.y, mode, shape);
  });
}

inline CompletionResult em_matrix(const ObservedTensor& t, std::size_t mode,
                                  Eigen::Index rank, int max_iter, double tol) {
  EmOptions options;
  options.max_iter = max_iter;
  options.tol = tol;
  return em_matrix(t, mode, rank, options);
}

}  // namespace pipesel
