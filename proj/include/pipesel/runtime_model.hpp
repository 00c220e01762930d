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

// Per-pipeline runtime regression on dataset size: least squares over all
// monomials of total degree <= 3 in (n, p, log n, log p).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pipesel/error.hpp"

namespace pipesel {

inline constexpr double kMinRuntime = 1e-3;

struct RuntimeObservation {
  double n_points = 1.0;
  double n_features = 1.0;
  double seconds = 1.0;
};

// Exponents of (n, p, log n, log p).
using Monomial = std::array<int, 4>;

inline const std::vector<Monomial>& runtime_basis() {
  static const std::vector<Monomial> basis = [] {
    std::vector<Monomial> b;
    for (int deg = 0; deg <= 3; ++deg)
      for (int a = deg; a >= 0; --a)
        for (int c = deg - a; c >= 0; --c)
          for (int d = deg - a - c; d >= 0; --d) {
            const int e = deg - a - c - d;
            b.push_back({a, c, d, e});
          }
    return b;
  }();
  return basis;
}

inline std::string monomial_name(const Monomial& m) {
  static const char* names[] = {"n", "p", "log_n", "log_p"};
  std::string s;
  for (int v = 0; v < 4; ++v) {
    for (int i = 0; i < m[static_cast<std::size_t>(v)]; ++i) {
      if (!s.empty()) s += '*';
      s += names[v];
    }
  }
  return s.empty() ? "1" : s;
}

namespace detail {

inline void require_size(double n_points, double n_features) {
  require(std::isfinite(n_points) && n_points > 0.0 &&
              std::isfinite(n_features) && n_features > 0.0,
          "dataset size must be positive and finite");
}

inline Eigen::RowVectorXd runtime_features(double n, double p) {
  require_size(n, p);
  const std::array<double, 4> v = {n, p, std::log(n), std::log(p)};
  const auto& basis = runtime_basis();
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t b = 0; b < basis.size(); ++b) {
    double x = 1.0;
    for (std::size_t k = 0; k < 4; ++k)
      for (int i = 0; i < basis[b][k]; ++i) x *= v[k];
    row(static_cast<Eigen::Index>(b)) = x;
  }
  return row;
}

}  // namespace detail

struct RuntimePredictor {
  Eigen::VectorXd coefficients;  // one per runtime_basis() entry

  std::vector<std::string> basis_signature() const {
    std::vector<std::string> out;
    for (const Monomial& m : runtime_basis()) out.push_back(monomial_name(m));
    return out;
  }

  // Accumulated in extended precision: the monomial terms cancel heavily.
  double raw(double n_points, double n_features) const {
    const Eigen::RowVectorXd phi =
        detail::runtime_features(n_points, n_features);
    long double s = 0.0L;
    for (Eigen::Index j = 0; j < phi.size(); ++j) {
      s += static_cast<long double>(phi(j)) *
           static_cast<long double>(coefficients(j));
    }
    return static_cast<double>(s);
  }
};

inline double predict_runtime(const RuntimePredictor& f, double n_points,
                              double n_features) {
  detail::require(f.coefficients.size() ==
                      static_cast<Eigen::Index>(runtime_basis().size()),
                  "predictor has the wrong number of coefficients");
  const double t = f.raw(n_points, n_features);
  return std::isfinite(t) ? std::max(t, kMinRuntime) : kMinRuntime;
}

inline Eigen::MatrixXd runtime_design_matrix(
    std::span<const RuntimeObservation> obs) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(obs.size()),
                    static_cast<Eigen::Index>(runtime_basis().size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    a.row(static_cast<Eigen::Index>(i)) =
        detail::runtime_features(obs[i].n_points, obs[i].n_features);
  }
  return a;
}

// Minimum-norm least squares after scaling every column to unit norm.
inline RuntimePredictor fit_runtime(std::span<const RuntimeObservation> obs) {
  detail::require(!obs.empty(), "no runtime observations");
  Eigen::VectorXd t(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    detail::require(std::isfinite(obs[i].seconds) && obs[i].seconds > 0.0,
                    "observed runtimes must be positive and finite");
    t(static_cast<Eigen::Index>(i)) = obs[i].seconds;
  }
  Eigen::MatrixXd a = runtime_design_matrix(obs);
  Eigen::VectorXd scale = a.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (scale(j) == 0.0) scale(j) = 1.0;  // log 1 = 0 columns
    a.col(j) /= scale(j);
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  Eigen::VectorXd x = cod.solve(t);
  // The monomial columns are badly conditioned (~1e10 after scaling).
  // Iterative refinement with residuals accumulated in extended precision
  // restores residual orthogonality.
  const Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> al =
      a.cast<long double>();
  const Eigen::Matrix<long double, Eigen::Dynamic, 1> tl = t.cast<long double>();
  for (int step = 0; step < 3; ++step) {
    const Eigen::VectorXd r = (tl - al * x.cast<long double>()).cast<double>();
    x += cod.solve(r);
  }
  RuntimePredictor f;
  f.coefficients = x.cwiseQuotient(scale);
  return f;
}

inline RuntimePredictor fit_runtime(
    const std::vector<RuntimeObservation>& obs) {
  return fit_runtime(std::span<const RuntimeObservation>(obs));
}

inline double within_factor_accuracy(std::span<const double> truth,
                                     std::span<const double> pred,
                                     double factor) {
  detail::require(truth.size() == pred.size(), "length mismatch");
  detail::require(!truth.empty(), "empty input");
  detail::require(factor > 1.0, "factor must exceed 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    detail::require(truth[i] > 0.0 && pred[i] > 0.0,
                    "runtimes must be positive");
    const double r = std::max(pred[i] / truth[i], truth[i] / pred[i]);
    if (r <= factor) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace pipesel
