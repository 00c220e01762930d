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

// Low-rank surrogates of error matrices and tensors: truncated PCA and
// Tucker decomposition (HOSVD initialization refined by HOOI sweeps).

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pipesel/error.hpp"
#include "pipesel/tensor.hpp"

namespace pipesel {

namespace detail {

// Flips each column so that its entry of largest magnitude is nonnegative.
// Returns the applied signs (+1 / -1 per column).
inline Eigen::VectorXd canonicalize_signs(Eigen::MatrixXd& u) {
  Eigen::VectorXd signs = Eigen::VectorXd::Ones(u.cols());
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      if (std::abs(u(r, c)) > best) {
        best = std::abs(u(r, c));
        arg = r;
      }
    }
    if (u(arg, c) < 0.0) {
      u.col(c) *= -1.0;
      signs(c) = -1.0;
    }
  }
  return signs;
}

// Leading `r` left singular vectors of `m`. Falls back to the full U when the
// matrix has fewer columns than `r`; the extra columns then complete an
// orthonormal basis.
inline Eigen::MatrixXd leading_left_singular_vectors(const Eigen::MatrixXd& m,
                                                     Eigen::Index r) {
  const bool need_full = m.cols() < r;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(
      m, need_full ? Eigen::ComputeFullU : Eigen::ComputeThinU);
  return svd.matrixU().leftCols(r);
}

}  // namespace detail

// Factors of the best rank-k approximation E ~= X^T Y.
struct PcaFactors {
  Eigen::MatrixXd x;                // k x m, dataset embeddings
  Eigen::MatrixXd y;                // k x n, model embeddings
  Eigen::VectorXd singular_values;  // all min(m, n) of them, nonincreasing
};

// X holds the leading left singular vectors (transposed) and Y the matching
// singular values times right singular vectors, so the rank-k factors are the
// leading k rows of the full-rank ones.
inline PcaFactors pca_factorize(const Eigen::MatrixXd& e, Eigen::Index k) {
  const Eigen::Index full = std::min(e.rows(), e.cols());
  detail::require(k >= 1 && k <= full,
                  "pca rank " + std::to_string(k) + " outside [1, " +
                      std::to_string(full) + "]");
  detail::require(e.allFinite(), "pca input must be finite");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(e,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd u = svd.matrixU();
  Eigen::MatrixXd v = svd.matrixV();
  const Eigen::VectorXd signs = detail::canonicalize_signs(u);
  v = v * signs.asDiagonal();
  PcaFactors f;
  f.singular_values = svd.singularValues();
  f.x = u.leftCols(k).transpose();
  f.y = f.singular_values.head(k).asDiagonal() * v.leftCols(k).transpose();
  return f;
}

class TuckerRanks {
 public:
  TuckerRanks() = default;
  TuckerRanks(std::initializer_list<std::size_t> r) : ranks_(r) {}
  explicit TuckerRanks(std::vector<std::size_t> r) : ranks_(std::move(r)) {}

  const std::vector<std::size_t>& values() const noexcept { return ranks_; }
  std::size_t operator[](std::size_t i) const { return ranks_.at(i); }
  std::size_t size() const noexcept { return ranks_.size(); }

  void validate_for(const Shape& shape) const {
    detail::require(ranks_.size() == shape.order(),
                    "expected " + std::to_string(shape.order()) +
                        " Tucker ranks, got " + std::to_string(ranks_.size()));
    for (std::size_t i = 0; i < ranks_.size(); ++i) {
      detail::require(ranks_[i] >= 1, "Tucker ranks must be >= 1");
      detail::require(ranks_[i] <= shape[i],
                      "Tucker rank " + std::to_string(ranks_[i]) +
                          " exceeds extent " + std::to_string(shape[i]) +
                          " of mode " + std::to_string(i));
    }
  }

  static TuckerRanks full(const Shape& shape) { return TuckerRanks(shape.dims()); }

 private:
  std::vector<std::size_t> ranks_;
};

struct TuckerFactors {
  DenseTensor core;                      // r_0 x ... x r_{N-1}
  std::vector<Eigen::MatrixXd> factors;  // n_i x r_i, orthonormal columns

  DenseTensor reconstruct() const {
    DenseTensor out = core;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      out = mode_product(out, factors[i], i);
    }
    return out;
  }
};

struct TuckerOptions {
  int max_sweeps = 50;
  double tol = 1e-8;  // relative improvement per sweep
};

struct TuckerFit {
  TuckerFactors factors;
  // ||t - reconstruction||_F after initialization, then after every sweep.
  std::vector<double> errors;
  int sweeps = 0;
};

namespace detail {

// t multiplied by U_j^T along every mode except `skip`.
inline DenseTensor project_all_but(const DenseTensor& t,
                                   const std::vector<Eigen::MatrixXd>& factors,
                                   std::optional<std::size_t> skip) {
  // Contract the modes with the largest reduction first.
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < factors.size(); ++j) {
    if (!skip || j != *skip) order.push_back(j);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ra = static_cast<double>(factors[a].cols()) /
                      static_cast<double>(factors[a].rows());
    const double rb = static_cast<double>(factors[b].cols()) /
                      static_cast<double>(factors[b].rows());
    return ra < rb || (ra == rb && a < b);
  });
  DenseTensor y = t;
  for (std::size_t j : order) {
    y = mode_product(y, factors[j].transpose(), j);
  }
  return y;
}

inline double residual_norm(const DenseTensor& t, const DenseTensor& approx) {
  double ss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t[i] - approx[i];
    ss += d * d;
  }
  return std::sqrt(ss);
}

// Rotates factors so that every unfolding of the core has orthogonal rows of
// nonincreasing norm, then fixes factor column signs. The reconstruction is
// unchanged.
inline void normalize_tucker(TuckerFactors& f) {
  for (std::size_t i = 0; i < f.factors.size(); ++i) {
    const Eigen::MatrixXd g = matricize(f.core, i);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeFullU);
    const Eigen::MatrixXd p = svd.matrixU();
    f.factors[i] = f.factors[i] * p;
    f.core = mode_product(f.core, p.transpose(), i);
    const Eigen::VectorXd signs = canonicalize_signs(f.factors[i]);
    f.core = mode_product(f.core, Eigen::MatrixXd(signs.asDiagonal()), i);
  }
}

}  // namespace detail

// HOSVD initialization (or the supplied warm start) followed by HOOI sweeps.
// Each sweep replaces every factor by the leading left singular vectors of the
// tensor projected on all other factors, which never increases the residual.
inline TuckerFit tucker_fit(const DenseTensor& t, const TuckerRanks& ranks,
                            const TuckerOptions& options = {},
                            const TuckerFactors* warm_start = nullptr) {
  ranks.validate_for(t.shape());
  detail::require(options.max_sweeps >= 0, "max_sweeps must be >= 0");
  const std::size_t order = t.order();

  TuckerFit fit;
  std::vector<Eigen::MatrixXd>& u = fit.factors.factors;
  if (warm_start != nullptr) {
    detail::require(warm_start->factors.size() == order,
                    "warm start has wrong number of factors");
    for (std::size_t i = 0; i < order; ++i) {
      detail::require(
          static_cast<std::size_t>(warm_start->factors[i].rows()) ==
                  t.shape()[i] &&
              static_cast<std::size_t>(warm_start->factors[i].cols()) ==
                  ranks[i],
          "warm start factor " + std::to_string(i) + " has wrong size");
    }
    u = warm_start->factors;
  } else {
    u.resize(order);
    for (std::size_t i = 0; i < order; ++i) {
      u[i] = detail::leading_left_singular_vectors(
          matricize(t, i), static_cast<Eigen::Index>(ranks[i]));
    }
  }

  auto evaluate = [&]() {
    fit.factors.core = detail::project_all_but(t, u, std::nullopt);
    return detail::residual_norm(t, fit.factors.reconstruct());
  };
  double err = evaluate();
  fit.errors.push_back(err);
  const double scale = std::max(frobenius_norm(t), 1e-300);

  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    if (err <= 1e-14 * scale) break;
    for (std::size_t i = 0; i < order; ++i) {
      const DenseTensor y = detail::project_all_but(t, u, i);
      u[i] = detail::leading_left_singular_vectors(
          matricize(y, i), static_cast<Eigen::Index>(ranks[i]));
    }
    const double next = evaluate();
    fit.errors.push_back(next);
    ++fit.sweeps;
    const double improvement = err - next;
    const double previous = err;
    err = next;
    if (improvement < options.tol * previous) break;
  }
  detail::normalize_tucker(fit.factors);
  return fit;
}

inline TuckerFactors tucker_decompose(const DenseTensor& t,
                                      const TuckerRanks& ranks,
                                      int max_sweeps = 50, double tol = 1e-8) {
  return tucker_fit(t, ranks, TuckerOptions{max_sweeps, tol}).factors;
}

// Dataset embeddings X = U_0^T and pipeline embeddings Y, the mode-0
// unfolding of core x_1 U_1 ... x_{N-1} U_{N-1}, so that X^T Y is the mode-0
// unfolding of the reconstruction.
struct Embeddings {
  Eigen::MatrixXd x;  // r_0 x n_0
  Eigen::MatrixXd y;  // r_0 x prod_{i >= 1} n_i
};

inline Embeddings pipeline_embeddings(const TuckerFactors& f) {
  detail::require(!f.factors.empty(), "empty Tucker factors");
  DenseTensor w = f.core;
  for (std::size_t i = 1; i < f.factors.size(); ++i) {
    w = mode_product(w, f.factors[i], i);
  }
  Embeddings e;
  e.x = f.factors[0].transpose();
  e.y = matricize(w, 0);
  return e;
}

// Smallest k whose leading singular values hold `fraction` of the energy.
inline std::size_t rank_from_energy(std::span<const double> singular_values,
                                    double fraction) {
  detail::require(!singular_values.empty(),
                  "rank_from_energy needs at least one singular value");
  detail::require(fraction > 0.0 && fraction <= 1.0,
                  "energy fraction must lie in (0, 1]");
  double total = 0.0;
  for (std::size_t i = 0; i < singular_values.size(); ++i) {
    const double s = singular_values[i];
    detail::require(s >= 0.0 && std::isfinite(s),
                    "singular values must be finite and nonnegative");
    detail::require(i == 0 || s <= singular_values[i - 1],
                    "singular values must be nonincreasing");
    total += s * s;
  }
  if (total == 0.0) return 1;
  double cum = 0.0;
  for (std::size_t i = 0; i < singular_values.size(); ++i) {
    cum += singular_values[i] * singular_values[i];
    if (cum >= fraction * total) return i + 1;
  }
  return singular_values.size();
}

inline std::size_t rank_from_energy(const Eigen::VectorXd& singular_values,
                                    double fraction) {
  return rank_from_energy(
      std::span<const double>(singular_values.data(),
                              static_cast<std::size_t>(singular_values.size())),
      fraction);
}

}  // namespace pipesel
