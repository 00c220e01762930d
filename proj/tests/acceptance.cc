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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. A criterion also fails if it overruns its
// time limit. Pass criterion numbers as arguments to run a subset.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "malformed_corpus.hpp"
#include "pipesel/completion.hpp"
#include "pipesel/design.hpp"
#include "pipesel/harness.hpp"
#include "pipesel/io.hpp"
#include "pipesel/kfmc.hpp"
#include "pipesel/report_io.hpp"
#include "pipesel/runtime_model.hpp"
#include "pipesel/selection.hpp"
#include "test_util.hpp"

namespace {

using namespace pipesel;
using Index = std::vector<std::size_t>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Exhaustive oracle: log det through a full determinant.
double logdet_by_det(const Eigen::MatrixXd& y, const Index& s, double eps) {
  const Eigen::Index k = y.rows();
  Eigen::MatrixXd m = eps * Eigen::MatrixXd::Identity(k, k);
  for (std::size_t j : s) {
    m += y.col(static_cast<Eigen::Index>(j)) *
         y.col(static_cast<Eigen::Index>(j)).transpose();
  }
  return std::log(m.determinant()) - static_cast<double>(k) * std::log(eps);
}

Outcome greedy_ratio() {
  const double eps = 1e-6;
  const double ratio = 1.0 - std::exp(-1.0);
  double worst = std::numeric_limits<double>::infinity();
  int ok = 0;
  for (int inst = 0; inst < 50; ++inst) {
    std::mt19937_64 rng(100 + static_cast<std::uint64_t>(inst));
    const Eigen::MatrixXd y = testing::random_matrix(3, 12, rng);
    const DesignPool pool{y, Eigen::VectorXd::Ones(12), std::nullopt};
    const Index g = greedy_size_constrained(pool, 5, {}, eps);
    double best = -std::numeric_limits<double>::infinity();
    int subsets = 0;
    for (unsigned bits = 0; bits < (1u << 12); ++bits) {
      if (__builtin_popcount(bits) != 5) continue;
      Index s;
      for (std::size_t j = 0; j < 12; ++j)
        if (bits >> j & 1) s.push_back(j);
      best = std::max(best, logdet_by_det(y, s, eps));
      ++subsets;
    }
    const double r = logdet_by_det(y, g, eps) / best;
    worst = std::min(worst, r);
    ok += g.size() == 5 && subsets == 792 && r >= ratio;
  }
  return {ok == 50, std::to_string(ok) + "/50 instances, worst ratio " +
                        fmt("%.4f", worst)};
}

Outcome rank_one_identities() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(2, 8);
  double worst = 0.0;
  for (int pair = 0; pair < 1000; ++pair) {
    const Eigen::Index k = dim(rng);
    const Eigen::MatrixXd x = testing::random_spd(k, rng);
    const Eigen::VectorXd y = testing::random_matrix(k, 1, rng);
    DesignState s;
    s.fisher = x;
    s.x_inv = x.inverse();
    const Eigen::MatrixXd xy = x + y * y.transpose();
    // Determinant lemma.
    const double lhs = xy.determinant();
    const double rhs = x.determinant() * (1.0 + det_lemma_payoff(s, y));
    worst = std::max(worst, std::abs(lhs - rhs) / std::abs(lhs));
    // Sherman-Morrison against a direct inverse.
    const Eigen::MatrixXd direct = xy.inverse();
    const DesignState t = sherman_morrison_update(s, y);
    worst = std::max(worst, (t.x_inv - direct).norm() / direct.norm());
  }
  return {worst < 1e-10, "1000 pairs, max relative error " + fmt("%.2e", worst)};
}

double hidden_error(const DenseTensor& truth, const ObservedTensor& observed,
                    const DenseTensor& completed) {
  return relative_error(truth, completed, testing::complement(observed.mask()));
}

Outcome em_tucker_recovery() {
  int ok = 0;
  double worst = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(300 + static_cast<std::uint64_t>(seed));
    const DenseTensor truth =
        testing::planted_tucker(Shape{20, 6, 6, 6}, {3, 2, 2, 2}, rng);
    const ObservedTensor observed = testing::hide_uniformly(truth, 0.3, rng);
    EmOptions options;
    options.max_iter = 500;
    const CompletionResult r = em_tucker(observed, TuckerRanks{3, 2, 2, 2}, options);
    const double e = hidden_error(truth, observed, r.completed);
    worst = std::max(worst, e);
    ok += e < 1e-2 && r.iterations <= 500;
  }
  return {ok == 10, std::to_string(ok) + "/10 seeds, worst hidden error " +
                        fmt("%.2e", worst)};
}

// Same planted setting with 1% observation noise, scored on the noiseless
// truth. Noiseless, both methods are exact to rounding.
Outcome tensor_beats_matrix() {
  int wins = 0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(400 + static_cast<std::uint64_t>(seed));
    const DenseTensor truth =
        testing::planted_tucker(Shape{20, 6, 6, 6}, {3, 2, 2, 2}, rng);
    const double rms = frobenius_norm(truth) / std::sqrt(double(truth.size()));
    DenseTensor noisy = truth;
    std::normal_distribution<double> n01(0.0, 1.0);
    for (double& v : noisy.values()) v += 0.01 * rms * n01(rng);
    const ObservedTensor observed = testing::hide_uniformly(noisy, 0.3, rng);
    EmOptions options;
    options.max_iter = 500;
    const double e_t = hidden_error(
        truth, observed, em_tucker(observed, TuckerRanks{3, 2, 2, 2}, options).completed);
    const double e_m =
        hidden_error(truth, observed, em_matrix(observed, 0, 3, options).completed);
    wins += e_t < e_m;
  }
  return {wins >= 18, "tucker better on " + std::to_string(wins) + "/20 trials"};
}

Outcome dof_ordering() {
  int checked = 0, violations = 0;
  for (std::int64_t n : {3, 4}) {
    for (std::int64_t extent = 2; extent <= 8; ++extent) {
      for (std::int64_t r = 1; r < extent; ++r) {
        const DofCounts c = dof_counts(extent, n, r);
        violations += !(c.tucker < c.unfolded && c.unfolded < c.slices);
        ++checked;
      }
    }
  }
  return {violations == 0, std::to_string(checked) + " cases, " +
                               std::to_string(violations) + " violations"};
}

// Union of three quadratic manifolds in R^20 (2-d latent each), 200 columns.
Eigen::MatrixXd quadratic_manifolds(std::mt19937_64& rng) {
  const int m = 20, n = 200, dlat = 2, nq = 3;
  Eigen::MatrixXd x(m, n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int c = 0; c < 3; ++c) {
    const Eigen::MatrixXd a = testing::random_matrix(m, dlat, rng);
    const Eigen::MatrixXd b = testing::random_matrix(m, nq, rng);
    const Eigen::VectorXd off = testing::random_matrix(m, 1, rng);
    for (int j = c * n / 3; j < (c + 1) * n / 3; ++j) {
      const double t0 = u(rng), t1 = u(rng);
      x.col(j) = a * Eigen::Vector2d(t0, t1) +
                 b * Eigen::Vector3d(t0 * t0, t0 * t1, t1 * t1) + off;
    }
  }
  return x;
}

// Kernel objective expanded entry by entry, independent of the library form.
double kfmc_objective_by_loops(const Eigen::MatrixXd& x, const Eigen::MatrixXd& d,
                               const Eigen::MatrixXd& z, double sigma, double beta) {
  auto k = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
  };
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double s = 1.0;
    for (Eigen::Index a = 0; a < d.cols(); ++a) {
      s -= 2.0 * z(a, j) * k(d.col(a), x.col(j));
      for (Eigen::Index b = 0; b < d.cols(); ++b)
        s += z(a, j) * z(b, j) * k(d.col(a), d.col(b));
    }
    total += 0.5 * s;
  }
  return total + 0.5 * beta * z.squaredNorm();
}

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

Outcome kfmc_advantage() {
  int wins = 0;
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(seed));
    const DenseTensor truth = fold(quadratic_manifolds(rng), 0, Shape{20, 200});
    const ObservedTensor observed = testing::hide_uniformly(truth, 0.4, rng);
    const double e_em = hidden_error(truth, observed, em_matrix(observed, 0, 5).completed);
    KfmcOptions o;
    o.seed = static_cast<std::uint64_t>(seed);
    const KfmcFit fit = kfmc_fit(observed, o);
    const double e_k = hidden_error(truth, observed, fold(fit.completed, 0, truth.shape()));
    wins += e_k < e_em;
  }

  std::mt19937_64 rng(6);
  const double h = 1e-5, sigma = 1.3, beta = 0.05;
  double worst = 0.0;
  for (int probe = 0; probe < 20; ++probe) {
    const Eigen::MatrixXd x = testing::random_matrix(6, 9, rng);
    const Eigen::MatrixXd d = testing::random_matrix(6, 4, rng);
    const Eigen::MatrixXd z = testing::random_matrix(4, 9, rng);
    const Eigen::MatrixXd gx = kfmc_gradient_x(x, d, z, sigma);
    const Eigen::MatrixXd gd = kfmc_gradient_d(x, d, z, sigma);
    std::uniform_int_distribution<Eigen::Index> row(0, 5), xcol(0, 8), dcol(0, 3);
    const Eigen::Index i = row(rng), j = xcol(rng), a = dcol(rng);
    Eigen::MatrixXd xp = x, xm = x;
    xp(i, j) += h;
    xm(i, j) -= h;
    const double fx = (kfmc_objective_by_loops(xp, d, z, sigma, beta) -
                       kfmc_objective_by_loops(xm, d, z, sigma, beta)) / (2.0 * h);
    Eigen::MatrixXd dp = d, dm = d;
    dp(i, a) += h;
    dm(i, a) -= h;
    const double fd = (kfmc_objective_by_loops(x, dp, z, sigma, beta) -
                       kfmc_objective_by_loops(x, dm, z, sigma, beta)) / (2.0 * h);
    worst = std::max({worst, rel_diff(gx(i, j), fx), rel_diff(gd(i, a), fd)});
  }
  return {wins >= 8 && worst < 1e-5,
          "kfmc better on " + std::to_string(wins) + "/10 seeds, gradient max rel err " +
              fmt("%.2e", worst)};
}

// The corpus generator's planted cubic laws and size ranges (n log-uniform in
// [500, 10000], p in [10, 100]). Training targets carry lognormal noise
// (sigma 0.2); held-out predictions are scored against the noiseless law.
// One replicate = 20 pipelines; the score is the mean over 20 replicates,
// since a single replicate swings by several points.
Outcome runtime_accuracy() {
  const int replicates = 20, pipelines = 20;
  double a2 = 0.0, a4 = 0.0;
  int good = 0;
  for (int rep = 0; rep < replicates; ++rep) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(rep));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::lognormal_distribution<double> noise(0.0, 0.2);
    const auto laws = random_runtime_laws(pipelines, rng);
    double r2 = 0.0, r4 = 0.0;
    for (const std::vector<double>& c : laws) {
      auto draw = [&](double& n, double& p) {
        n = 500.0 * std::exp(u(rng) * std::log(20.0));
        p = 10.0 * std::exp(u(rng) * std::log(10.0));
      };
      std::vector<RuntimeObservation> train;
      for (int i = 0; i < 100; ++i) {
        double n, p;
        draw(n, p);
        train.push_back({n, p, evaluate_runtime_law(c, n, p) * noise(rng)});
      }
      const RuntimePredictor f = fit_runtime(train);
      std::vector<double> truth, pred;
      for (int i = 0; i < 50; ++i) {
        double n, p;
        draw(n, p);
        truth.push_back(evaluate_runtime_law(c, n, p));
        pred.push_back(predict_runtime(f, n, p));
      }
      r2 += within_factor_accuracy(truth, pred, 2.0) / pipelines;
      r4 += within_factor_accuracy(truth, pred, 4.0) / pipelines;
    }
    good += r2 >= 0.75 && r4 >= 0.95;
    a2 += r2 / replicates;
    a4 += r4 / replicates;
  }
  return {a2 >= 0.75 && a4 >= 0.95,
          "mean within x2 " + fmt("%.3f", a2) + ", within x4 " + fmt("%.3f", a4) +
              " over " + std::to_string(replicates) + " replicates (" +
              std::to_string(good) + " meet both alone)"};
}

RuntimePredictor constant_runtime(double seconds) {
  RuntimePredictor f{Eigen::VectorXd::Zero(35)};
  f.coefficients(0) = seconds;
  return f;
}

// Runtime predictions are deliberately wrong: all tiny, all huge, or off by
// up to x100 either way. Budgets and initial targets are random.
Outcome budget_contract() {
  int ok = 0;
  for (int sim = 0; sim < 100; ++sim) {
    std::mt19937_64 rng(800 + static_cast<std::uint64_t>(sim));
    std::uniform_int_distribution<int> kd(1, 6), nd(10, 80);
    const Eigen::Index k = kd(rng), n = nd(rng);
    const Eigen::MatrixXd y = testing::random_matrix(k, n, rng);
    const Eigen::VectorXd e = y.transpose() * testing::random_matrix(k, 1, rng);
    std::lognormal_distribution<double> rt(0.0, 1.5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> errors(e.data(), e.data() + n), seconds;
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      seconds.push_back(rt(rng));
      total += seconds.back();
    }
    const TableOracle oracle(errors, seconds);
    SelectionContext ctx;
    ctx.y = y;
    ctx.oracle = &oracle;
    for (Eigen::Index j = 0; j < n; ++j) {
      double p = 1e-3;
      switch (sim % 3) {
        case 0: break;
        case 1: p = seconds[j] * 100.0; break;
        default: p = seconds[j] * std::pow(100.0, 2.0 * u(rng) - 1.0); break;
      }
      ctx.runtime_models.push_back(constant_runtime(p));
    }
    SelectionConfig cfg;
    cfg.total_budget = total * std::exp(std::log(0.01) + u(rng) * std::log(200.0));
    cfg.initial_time_target = cfg.total_budget * (0.01 + 0.49 * u(rng));
    cfg.initial_rank = 1 + static_cast<std::size_t>(u(rng) * double(k));
    cfg.ensemble_size = 3;
    cfg.design_overhead = (sim % 4 == 0) ? 0.01 * cfg.total_budget : 0.0;
    const SelectionReport r = run_online(ctx, cfg);
    bool good = r.budget_spent <= cfg.total_budget;
    double clock = 0.0;
    for (const ObservationEvent& ev : r.events) {
      good = good && ev.clock_after >= clock && ev.clock_after <= cfg.total_budget;
      clock = ev.clock_after;
    }
    ok += good;
  }
  return {ok == 100, "spend within budget in " + std::to_string(ok) + "/100 runs"};
}

Outcome end_to_end() {
  SyntheticSpec spec;
  const SyntheticCorpus corpus = generate_synthetic(spec);
  LooConfig cfg;
  cfg.ranks = spec.ranks;
  cfg.budget_fractions = {0.1, 1.0};
  const LooResult r = evaluate_loo(corpus, cfg);
  int failed = 0, zero = 0;
  for (const FoldResult& f : r.folds) {
    if (!f.error.empty()) {
      ++failed;
      continue;
    }
    zero += f.regrets[1] == 0.0;
  }
  const double engine = r.mean_engine_rank(0), base = r.mean_baseline_rank();
  return {failed == 0 && engine < base && zero == static_cast<int>(r.folds.size()),
          "mean rank at 0.1: engine " + fmt("%.2f", engine) + " vs baseline " +
              fmt("%.2f", base) + "; zero regret at 1.0 on " + std::to_string(zero) +
              "/" + std::to_string(r.folds.size()) + " folds"};
}

Outcome doubling_monotone() {
  int ok = 0;
  for (int s = 0; s < 50; ++s) {
    SyntheticSpec spec;
    spec.seed = 1000 + static_cast<std::uint64_t>(s);
    spec.noise_std = 0.05;
    const SyntheticCorpus c = generate_synthetic(spec);
    LooConfig cfg;
    cfg.ranks = spec.ranks;
    const std::size_t d = static_cast<std::size_t>(s % 30);
    const MetaModel m = meta_train(c, d, cfg);
    const std::vector<double> truth = dataset_slice(c.truth, d);
    const SelectionReport r = run_fold(c, m, d, 0.1, cfg);
    // Every later round against every earlier one.
    bool mono = true;
    for (std::size_t b = 1; b < r.rounds.size(); ++b)
      for (std::size_t a = 0; a < b; ++a)
        mono = mono && round_regret(r.rounds[b], truth) <= round_regret(r.rounds[a], truth);
    ok += mono;
  }
  return {ok >= 40, "monotone in " + std::to_string(ok) + "/50 trials"};
}

Outcome weighted_consistency() {
  int same = 0;
  for (int inst = 0; inst < 100; ++inst) {
    std::mt19937_64 rng(1100 + static_cast<std::uint64_t>(inst));
    std::uniform_int_distribution<int> kd(2, 6), nd(10, 40);
    std::uniform_real_distribution<double> t(0.05, 0.3), w(0.1, 5.0), f(0.1, 0.9);
    const Eigen::Index k = kd(rng), n = nd(rng);
    DesignPool p{testing::random_matrix(k, n, rng), Eigen::VectorXd(n), std::nullopt};
    for (Eigen::Index j = 0; j < n; ++j) p.runtimes(j) = t(rng);
    const double tau = f(rng) * p.runtimes.sum();
    const DesignResult plain = time_constrained_design(p, tau, k);
    p.weights = Eigen::VectorXd::Constant(n, w(rng));
    same += greedy_weighted_time_constrained(p, tau, k).selected == plain.selected;
  }
  return {same == 100, "identical sets on " + std::to_string(same) + "/100 instances"};
}

std::string corpus_bytes(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  const SyntheticCorpus c = generate_synthetic(spec);
  std::ostringstream out;
  write_tensor(out, c.truth);
  write_tensor(out, censor_uniform(c.truth, 0.3, seed));
  write_runtime_table(out, runtime_rows(c.runtimes));
  return out.str();
}

std::string report_bytes(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.noise_std = 0.02;
  const SyntheticCorpus c = generate_synthetic(spec);
  LooConfig cfg;
  cfg.ranks = spec.ranks;
  const MetaModel m = meta_train(c, 3, cfg);
  std::ostringstream out;
  write_report(out, run_fold(c, m, 3, 0.1, cfg));
  return out.str();
}

Outcome serialization() {
  const std::uint64_t seed = 12;
  const std::string t1 = corpus_bytes(seed), t2 = corpus_bytes(seed);
  const std::string r1 = report_bytes(seed), r2 = report_bytes(seed);

  // Parse and re-emit.
  SyntheticSpec spec;
  spec.seed = seed;
  const ObservedTensor censored = censor_uniform(generate_synthetic(spec).truth, 0.3, seed);
  std::ostringstream once;
  write_tensor(once, censored);
  std::istringstream tin(once.str());
  std::ostringstream twice;
  write_tensor(twice, read_tensor(tin));
  std::istringstream rin(r1);
  std::ostringstream rtwice;
  write_report(rtwice, read_report(rin));

  const bool bytes = t1 == t2 && r1 == r2 && once.str() == twice.str() && rtwice.str() == r1;
  int documented = 0;
  const auto cases = testing::run_malformed_corpus();
  for (const auto& c : cases) documented += c.ok();
  const bool malformed = cases.size() == 10 && documented == 10;
  return {bytes && malformed,
          std::string("round trips ") + (bytes ? "byte-identical" : "DIFFER") +
              "; malformed files with documented error " + std::to_string(documented) +
              "/" + std::to_string(cases.size())};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "greedy log-det within 1-1/e of exhaustive optimum", 10, greedy_ratio},
      {2, "determinant lemma and Sherman-Morrison", 5, rank_one_identities},
      {3, "EM-Tucker planted recovery", 60, em_tucker_recovery},
      {4, "tensor completion beats matrix completion", 180, tensor_beats_matrix},
      {5, "degrees-of-freedom ordering", 1, dof_ordering},
      {6, "KFMC on a union of manifolds, gradient checks", 300, kfmc_advantage},
      {7, "runtime predictor accuracy", 30, runtime_accuracy},
      {8, "time budget never exceeded", 120, budget_contract},
      {9, "end-to-end cold start", 600, end_to_end},
      {10, "doubling rounds regret monotone", 300, doubling_monotone},
      {11, "uniform weights reproduce unweighted design", 10, weighted_consistency},
      {12, "serialization and malformed inputs", 5, serialization},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = dt <= c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s [%d] %s: %s (%.2fs, limit %.0fs%s)\n", pass ? "PASS" : "FAIL", c.id,
                c.name, o.detail.c_str(), dt, c.limit_seconds,
                in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
