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

// Simulation harness: planted error tensors with runtimes, observation
// censoring, leave-one-dataset-out evaluation of the online engine, and
// completion-method comparisons.
//
// Mode 0 of every corpus tensor indexes datasets and the last mode indexes
// estimators; a pipeline is the row-major flat index over modes 1..N-1.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pipesel/completion.hpp"
#include "pipesel/error.hpp"
#include "pipesel/factorization.hpp"
#include "pipesel/kfmc.hpp"
#include "pipesel/runtime_model.hpp"
#include "pipesel/selection.hpp"
#include "pipesel/tensor.hpp"

namespace pipesel {

// Runtime law monomials in u = n_points / 1000 and v = n_features / 10, total
// degree <= 3: 1, u, v, u^2, uv, v^2, u^3, u^2 v, u v^2, v^3.
inline constexpr std::size_t kLawTerms = 10;

inline double evaluate_runtime_law(const std::vector<double>& c,
                                   double n_points, double n_features) {
  detail::require(c.size() == kLawTerms, "runtime law needs 10 coefficients");
  const double u = n_points / 1000.0;
  const double v = n_features / 10.0;
  const double terms[kLawTerms] = {1.0,       u,         v,         u * u,
                                   u * v,     v * v,     u * u * u, u * u * v,
                                   u * v * v, v * v * v};
  double t = 0.0;
  for (std::size_t i = 0; i < kLawTerms; ++i) t += c[i] * terms[i];
  return t;
}

struct SyntheticSpec {
  Shape shape{30, 2, 2, 2, 3, 20};
  TuckerRanks ranks{5, 2, 2, 2, 2, 4};
  double noise_std = 0.0;
  // One coefficient vector per estimator (last-mode index); empty = drawn
  // from the seed.
  std::vector<std::vector<double>> runtime_law;
  double runtime_jitter = 0.2;  // lognormal sigma
  double n_points_min = 500.0, n_points_max = 10000.0;
  double n_features_min = 10.0, n_features_max = 100.0;
  std::uint64_t seed = 0;
};

struct DatasetSize {
  double n_points = 1.0;
  double n_features = 1.0;
};

struct SyntheticCorpus {
  DenseTensor truth;
  DenseTensor runtimes;
  std::vector<DatasetSize> sizes;  // one per dataset
  std::vector<std::vector<double>> runtime_law;

  std::size_t datasets() const { return truth.shape()[0]; }
  std::size_t pipelines() const { return truth.size() / datasets(); }
};

// Nonnegative laws with a positive constant term: each non-constant monomial
// enters with probability 0.4 and a uniform coefficient.
inline std::vector<std::vector<double>> random_runtime_laws(
    std::size_t estimators, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> laws(estimators);
  for (auto& c : laws) {
    c.assign(kLawTerms, 0.0);
    c[0] = 0.05 + 0.45 * unit(rng);
    for (std::size_t i = 1; i < kLawTerms; ++i) {
      const bool on = unit(rng) < 0.4;
      const double coef = unit(rng) * (i >= 6 ? 0.05 : 0.5);
      c[i] = on ? coef : 0.0;
    }
  }
  return laws;
}

namespace detail {

// Orthonormal n x r factor whose first column is the normalized ones vector,
// so that adding a constant to the tensor keeps its multilinear ranks.
inline Eigen::MatrixXd factor_with_constant(Eigen::Index n, Eigen::Index r,
                                            std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(n, r);
  a.col(0).setOnes();
  for (Eigen::Index j = 1; j < r; ++j)
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
  if (q.col(0).sum() < 0.0) q.col(0) *= -1.0;
  return q;
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.ranks.validate_for(spec.shape);
  detail::require(spec.shape.order() >= 2, "corpus needs at least two modes");
  detail::require(std::isfinite(spec.noise_std) && spec.noise_std >= 0.0,
                  "noise_std must be nonnegative");
  detail::require(spec.runtime_jitter >= 0.0, "runtime_jitter must be >= 0");
  detail::require(spec.n_points_min > 0.0 &&
                      spec.n_points_min <= spec.n_points_max &&
                      spec.n_features_min > 0.0 &&
                      spec.n_features_min <= spec.n_features_max,
                  "dataset size ranges must be positive and ordered");
  const std::size_t order = spec.shape.order();
  const std::size_t estimators = spec.shape[order - 1];
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticCorpus c;
  // Planted Tucker tensor.
  DenseTensor t(Shape(spec.ranks.values()));
  for (double& v : t.values()) v = normal(rng);
  for (std::size_t i = 0; i < order; ++i) {
    t = mode_product(t,
                     detail::factor_with_constant(
                         static_cast<Eigen::Index>(spec.shape[i]),
                         static_cast<Eigen::Index>(spec.ranks[i]), rng),
                     i);
  }
  const auto [lo, hi] = std::minmax_element(t.values().begin(), t.values().end());
  const double tmin = *lo;
  const double span = std::max(*hi - *lo, 1e-300);
  for (double& v : t.values()) {
    v = 0.05 + 0.9 * (v - tmin) / span;
    if (spec.noise_std > 0.0) {
      v = std::clamp(v + spec.noise_std * normal(rng), 0.0, 1.0);
    }
  }
  c.truth = std::move(t);

  c.runtime_law = spec.runtime_law.empty()
                      ? random_runtime_laws(estimators, rng)
                      : spec.runtime_law;
  detail::require(c.runtime_law.size() == estimators,
                  "need one runtime law per estimator");
  const std::size_t datasets = spec.shape[0];
  for (std::size_t d = 0; d < datasets; ++d) {
    const double n = std::round(std::exp(
        std::log(spec.n_points_min) +
        unit(rng) * std::log(spec.n_points_max / spec.n_points_min)));
    const double p = std::round(std::exp(
        std::log(spec.n_features_min) +
        unit(rng) * std::log(spec.n_features_max / spec.n_features_min)));
    c.sizes.push_back({n, p});
  }
  c.runtimes = DenseTensor(spec.shape);
  const std::size_t per = c.truth.size() / datasets;
  for (std::size_t flat = 0; flat < c.runtimes.size(); ++flat) {
    const std::size_t d = flat / per;
    const std::size_t e = flat % estimators;
    const double base = evaluate_runtime_law(c.runtime_law[e], c.sizes[d].n_points,
                                             c.sizes[d].n_features);
    detail::require(base > 0.0, "runtime law must be positive on the grid");
    c.runtimes[flat] = base * std::exp(spec.runtime_jitter * normal(rng));
  }
  return c;
}

inline ObservedTensor censor_by_runtime(const DenseTensor& truth,
                                        const DenseTensor& runtimes,
                                        double threshold) {
  detail::require(truth.shape() == runtimes.shape(),
                  "truth and runtime shapes differ");
  DenseTensor data = truth;
  DenseTensor mask(truth.shape());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool keep = runtimes[i] <= threshold;
    mask[i] = keep ? 1.0 : 0.0;
    if (!keep) data[i] = 0.0;
  }
  return ObservedTensor(std::move(data), std::move(mask));
}

namespace detail {

inline bool every_slice_observed(const DenseTensor& mask) {
  for (std::size_t mode = 0; mode < mask.order(); ++mode) {
    const Eigen::MatrixXd m = matricize(mask, mode);
    if ((m.rowwise().sum().array() == 0.0).any()) return false;
  }
  return true;
}

}  // namespace detail

// Bernoulli(1 - ratio) mask, redrawn (up to 100 times) until every slice of
// every mode has an observed entry.
inline ObservedTensor censor_uniform(const DenseTensor& truth,
                                     double missing_ratio, std::uint64_t seed) {
  detail::require(missing_ratio >= 0.0 && missing_ratio < 1.0,
                  "missing ratio must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution hide(missing_ratio);
  for (int attempt = 0; attempt < 100; ++attempt) {
    DenseTensor mask(truth.shape());
    for (double& m : mask.values()) m = hide(rng) ? 0.0 : 1.0;
    if (!detail::every_slice_observed(mask)) continue;
    DenseTensor data = truth;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (mask[i] == 0.0) data[i] = 0.0;
    }
    return ObservedTensor(std::move(data), std::move(mask));
  }
  throw ArgumentError("missing ratio leaves a slice unobserved after 100 draws");
}

// Mode-0 slice d as a flat vector, and the tensor without it.
inline std::vector<double> dataset_slice(const DenseTensor& t, std::size_t d) {
  detail::require(d < t.shape()[0], "dataset index out of range");
  const std::size_t per = t.size() / t.shape()[0];
  return {t.values().begin() + static_cast<std::ptrdiff_t>(d * per),
          t.values().begin() + static_cast<std::ptrdiff_t>((d + 1) * per)};
}

inline DenseTensor drop_dataset(const DenseTensor& t, std::size_t d) {
  detail::require(d < t.shape()[0], "dataset index out of range");
  detail::require(t.shape()[0] >= 2, "cannot drop the only dataset");
  const std::size_t per = t.size() / t.shape()[0];
  std::vector<double> v;
  v.reserve(t.size() - per);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i / per != d) v.push_back(t[i]);
  }
  return DenseTensor(t.shape().with_extent(0, t.shape()[0] - 1), std::move(v));
}

enum class CompletionMethod { zero_fill, em_tucker, em_matrix, kfmc };

inline std::string completion_method_name(CompletionMethod m) {
  switch (m) {
    case CompletionMethod::zero_fill: return "zero";
    case CompletionMethod::em_tucker: return "em-tucker";
    case CompletionMethod::em_matrix: return "em-matrix";
    case CompletionMethod::kfmc: return "kfmc";
  }
  return "unknown";
}

inline CompletionMethod parse_completion_method(const std::string& s) {
  if (s == "zero") return CompletionMethod::zero_fill;
  if (s == "em-tucker") return CompletionMethod::em_tucker;
  if (s == "em-matrix") return CompletionMethod::em_matrix;
  if (s == "kfmc") return CompletionMethod::kfmc;
  throw ArgumentError("unknown completion method '" + s + "'");
}

struct CompletionSettings {
  std::optional<TuckerRanks> tucker_ranks;  // unset: full extents
  std::size_t matrix_rank = 5;              // em-matrix on the mode-0 unfolding
  EmOptions em;
  KfmcOptions kfmc;
};

// Completes a tensor with the chosen method. Matrix methods work on the
// mode-0 unfolding (datasets x pipelines); KFMC treats pipelines as points.
inline DenseTensor complete_tensor(const ObservedTensor& t, CompletionMethod m,
                                   const CompletionSettings& s) {
  switch (m) {
    case CompletionMethod::zero_fill:
      return t.data();
    case CompletionMethod::em_tucker:
      return em_tucker(t, s.tucker_ranks.value_or(TuckerRanks::full(t.shape())),
                       s.em)
          .completed;
    case CompletionMethod::em_matrix:
      return em_matrix(t, 0, s.matrix_rank, s.em).completed;
    case CompletionMethod::kfmc: {
      const std::size_t rows = t.shape()[0];
      const Shape flat{rows, t.data().size() / rows};
      const ObservedTensor m(fold(matricize(t.data(), 0), 0, flat),
                             fold(matricize(t.mask(), 0), 0, flat));
      return fold(kfmc_fit(m, s.kfmc).completed, 0, t.shape());
    }
  }
  throw ArgumentError("unknown completion method");
}

struct CompletionComparisonRow {
  std::string method;
  std::size_t mask_index = 0;
  double relative_error = 0.0;
  std::string error;  // nonempty if the method failed on this mask
};

// Relative error on the hidden entries of each mask, per method.
inline std::vector<CompletionComparisonRow> compare_completion_methods(
    const DenseTensor& truth, const std::vector<ObservedTensor>& masks,
    const std::vector<CompletionMethod>& methods,
    const CompletionSettings& settings) {
  detail::require(!methods.empty(), "no completion methods given");
  std::vector<CompletionComparisonRow> rows;
  for (CompletionMethod m : methods) {
    for (std::size_t k = 0; k < masks.size(); ++k) {
      CompletionComparisonRow row{completion_method_name(m), k, 0.0, {}};
      try {
        detail::require(masks[k].shape() == truth.shape(),
                        "mask shape differs from the truth");
        DenseTensor hidden(truth.shape());
        for (std::size_t i = 0; i < hidden.size(); ++i) {
          hidden[i] = 1.0 - masks[k].mask()[i];
        }
        row.relative_error =
            relative_error(truth, complete_tensor(masks[k], m, settings), hidden);
      } catch (const Error& e) {
        row.relative_error = std::numeric_limits<double>::quiet_NaN();
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

enum class EmbeddingMethod { tucker, pca };

struct LooConfig {
  // Tucker ranks for meta-training; the dataset rank is capped at the number
  // of training datasets. Unset: full extents.
  std::optional<TuckerRanks> ranks;
  EmbeddingMethod embedding = EmbeddingMethod::tucker;
  std::size_t pca_rank = 5;
  // Training entries hidden uniformly at random and re-imputed by EM-Tucker.
  double training_missing_ratio = 0.0;
  std::vector<double> budget_fractions = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  double initial_target_fraction = 1.0 / 64.0;  // of each run's budget
  std::optional<std::size_t> initial_rank;      // unset: energy rule
  SelectionConfig selection;  // budget and initial target are overwritten
  std::uint64_t seed = 0;
};

struct MetaModel {
  Eigen::MatrixXd y;                // k_max x pipelines
  Eigen::VectorXd singular_values;  // of the completed training unfolding
  std::size_t initial_rank = 1;
  std::vector<RuntimePredictor> runtime_models;
  Eigen::VectorXd mean_errors;  // per pipeline over training datasets
  std::size_t baseline = 0;     // argmin of mean_errors
};

// Offline stage on every dataset except `held_out`: nothing from the held-out
// slice is read.
inline MetaModel meta_train(const SyntheticCorpus& corpus, std::size_t held_out,
                            const LooConfig& config) {
  const DenseTensor train = drop_dataset(corpus.truth, held_out);
  const DenseTensor train_rt = drop_dataset(corpus.runtimes, held_out);
  const std::size_t d_train = train.shape()[0];
  const std::size_t p = train.size() / d_train;

  std::vector<std::size_t> r = config.ranks
                                   ? config.ranks->values()
                                   : TuckerRanks::full(train.shape()).values();
  detail::require(r.size() == train.order(), "rank count does not match corpus");
  r[0] = std::min(r[0], d_train);
  const TuckerRanks ranks(r);

  DenseTensor completed = train;
  if (config.training_missing_ratio > 0.0) {
    const ObservedTensor obs =
        censor_uniform(train, config.training_missing_ratio,
                       config.seed * 1000003u + held_out);
    completed = em_tucker(obs, ranks).completed;
  }

  MetaModel m;
  const Eigen::MatrixXd unfold = matricize(completed, 0);
  m.singular_values = Eigen::BDCSVD<Eigen::MatrixXd>(unfold).singularValues();
  if (config.embedding == EmbeddingMethod::tucker) {
    m.y = pipeline_embeddings(tucker_decompose(completed, ranks)).y;
  } else {
    const auto k = static_cast<Eigen::Index>(
        std::min<std::size_t>(config.pca_rank, std::min(d_train, p)));
    m.y = pca_factorize(unfold, k).y;
  }
  const std::size_t k_max = static_cast<std::size_t>(m.y.rows());
  m.initial_rank = std::min(
      k_max, config.initial_rank
                 ? *config.initial_rank
                 : rank_from_energy(m.singular_values,
                                    config.selection.energy_fraction));

  m.mean_errors = unfold.colwise().mean().transpose();
  m.mean_errors.minCoeff(&m.baseline);

  std::vector<DatasetSize> sizes;
  for (std::size_t d = 0; d < corpus.datasets(); ++d) {
    if (d != held_out) sizes.push_back(corpus.sizes[d]);
  }
  const Eigen::MatrixXd rt = matricize(train_rt, 0);
  m.runtime_models.reserve(p);
  std::vector<RuntimeObservation> obs(d_train);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t d = 0; d < d_train; ++d) {
      obs[d] = {sizes[d].n_points, sizes[d].n_features,
                rt(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j))};
    }
    m.runtime_models.push_back(fit_runtime(obs));
  }
  return m;
}

// 1-based rank of pipeline j among all pipelines by true error.
inline std::size_t true_rank(const std::vector<double>& truth, std::size_t j) {
  std::size_t better = 0;
  for (double v : truth) better += v < truth[j];
  return better + 1;
}

struct FoldResult {
  std::size_t dataset = 0;
  std::vector<double> regrets;            // best observed minus best, per fraction
  std::vector<std::size_t> engine_ranks;  // rank of the engine's pick, per fraction
  std::vector<std::size_t> picks;
  std::size_t baseline = 0;
  std::size_t baseline_rank = 0;
  double baseline_regret = 0.0;
  std::vector<SelectionReport> reports;  // per fraction
  std::string error;                     // nonempty if the fold failed
};

struct LooResult {
  std::vector<double> budget_fractions;
  std::vector<FoldResult> folds;

  double mean_engine_rank(std::size_t fraction_index) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const FoldResult& f : folds) {
      if (!f.error.empty()) continue;
      s += static_cast<double>(f.engine_ranks[fraction_index]);
      ++n;
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  }

  double mean_baseline_rank() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const FoldResult& f : folds) {
      if (!f.error.empty()) continue;
      s += static_cast<double>(f.baseline_rank);
      ++n;
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  }
};

// Online stage for one held-out dataset with an explicit budget in seconds.
inline SelectionReport run_fold_with_budget(const SyntheticCorpus& corpus,
                                            const MetaModel& m, std::size_t held_out,
                                            double budget, const LooConfig& config) {
  const std::vector<double> errors = dataset_slice(corpus.truth, held_out);
  const std::vector<double> seconds = dataset_slice(corpus.runtimes, held_out);
  const TableOracle oracle(errors, seconds);
  SelectionContext ctx;
  ctx.y = m.y;
  ctx.runtime_models = m.runtime_models;
  ctx.n_points = corpus.sizes[held_out].n_points;
  ctx.n_features = corpus.sizes[held_out].n_features;
  ctx.oracle = &oracle;
  ctx.prior_errors = m.mean_errors;
  SelectionConfig sc = config.selection;
  sc.total_budget = budget;
  sc.initial_time_target = config.initial_target_fraction * budget;
  sc.initial_rank = m.initial_rank;
  return run_online(ctx, sc);
}

inline double total_runtime(const SyntheticCorpus& corpus, std::size_t held_out) {
  double total = 0.0;
  for (double s : dataset_slice(corpus.runtimes, held_out)) total += s;
  return total;
}

// Budget = fraction of the held-out dataset's total runtime.
inline SelectionReport run_fold(const SyntheticCorpus& corpus, const MetaModel& m,
                                std::size_t held_out, double fraction,
                                const LooConfig& config) {
  return run_fold_with_budget(corpus, m, held_out,
                              fraction * total_runtime(corpus, held_out), config);
}

// Engine pick: first member of the final ensemble (best observed), else the
// top of the final ranking.
inline std::size_t engine_pick(const SelectionReport& r) {
  if (!r.final_ensemble.empty()) return r.final_ensemble.front();
  return r.final_ranking.empty() ? 0 : r.final_ranking.front();
}

// Best error among completed observations minus the global best; if nothing
// was observed, the engine pick's error is used.
inline double report_regret(const SelectionReport& r,
                            const std::vector<double>& truth) {
  const double best = *std::min_element(truth.begin(), truth.end());
  double seen = std::numeric_limits<double>::infinity();
  for (const ObservationEvent& e : r.events) {
    if (e.completed) seen = std::min(seen, truth[e.pipeline]);
  }
  if (!std::isfinite(seen)) seen = truth[engine_pick(r)];
  return seen - best;
}

inline LooResult evaluate_loo(const SyntheticCorpus& corpus,
                              const LooConfig& config) {
  detail::require(corpus.datasets() >= 3, "LOO needs at least 3 datasets");
  detail::require(!config.budget_fractions.empty(), "no budget fractions");
  for (std::size_t i = 0; i < config.budget_fractions.size(); ++i) {
    const double f = config.budget_fractions[i];
    detail::require(f > 0.0 && f <= 1.0 &&
                        (i == 0 || f > config.budget_fractions[i - 1]),
                    "budget fractions must increase within (0, 1]");
  }
  detail::require(config.initial_target_fraction > 0.0 &&
                      config.initial_target_fraction <= 0.5,
                  "initial_target_fraction must lie in (0, 0.5]");
  LooResult out;
  out.budget_fractions = config.budget_fractions;
  for (std::size_t d = 0; d < corpus.datasets(); ++d) {
    FoldResult fold;
    fold.dataset = d;
    try {
      const MetaModel m = meta_train(corpus, d, config);
      const std::vector<double> truth = dataset_slice(corpus.truth, d);
      const double best = *std::min_element(truth.begin(), truth.end());
      fold.baseline = m.baseline;
      fold.baseline_rank = true_rank(truth, m.baseline);
      fold.baseline_regret = truth[m.baseline] - best;
      for (double f : config.budget_fractions) {
        SelectionReport r = run_fold(corpus, m, d, f, config);
        const std::size_t pick = engine_pick(r);
        fold.picks.push_back(pick);
        fold.engine_ranks.push_back(true_rank(truth, pick));
        fold.regrets.push_back(report_regret(r, truth));
        fold.reports.push_back(std::move(r));
      }
    } catch (const Error& e) {
      fold.error = e.what();
    }
    out.folds.push_back(std::move(fold));
  }
  return out;
}

}  // namespace pipesel
