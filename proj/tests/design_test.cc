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

#include "pipesel/design.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace pipesel {
namespace {

using Index = std::vector<std::size_t>;

DesignPool pool_of(const Eigen::MatrixXd& y, double runtime = 1.0) {
  return {y, Eigen::VectorXd::Constant(y.cols(), runtime), std::nullopt};
}

DesignPool random_pool(Eigen::Index k, Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(0.5, 3.0);
  DesignPool p{testing::random_matrix(k, n, rng), Eigen::VectorXd(n),
               std::nullopt};
  for (Eigen::Index j = 0; j < n; ++j) p.runtimes(j) = t(rng);
  return p;
}

// Oracle: objective through a full determinant.
double objective_by_det(const Eigen::MatrixXd& y, const Index& s, double eps) {
  const Eigen::Index k = y.rows();
  Eigen::MatrixXd m = eps * Eigen::MatrixXd::Identity(k, k);
  for (std::size_t j : s) {
    m += y.col(static_cast<Eigen::Index>(j)) *
         y.col(static_cast<Eigen::Index>(j)).transpose();
  }
  return std::log(m.determinant()) - static_cast<double>(k) * std::log(eps);
}

// Every subset of {0..n-1} accepted by `keep`, best objective.
template <typename Keep>
double exhaustive_best(const Eigen::MatrixXd& y, double eps, Keep keep) {
  const std::size_t n = static_cast<std::size_t>(y.cols());
  double best = 0.0;
  for (std::size_t bits = 0; bits < (std::size_t{1} << n); ++bits) {
    Index s;
    for (std::size_t j = 0; j < n; ++j)
      if (bits >> j & 1) s.push_back(j);
    if (!keep(s)) continue;
    best = std::max(best, objective_by_det(y, s, eps));
  }
  return best;
}

TEST(RankOneTest, IdentityCase) {
  DesignState s = make_design_state(pool_of(Eigen::MatrixXd::Identity(3, 3)),
                                    {0, 1, 2});
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(3, 0);
  EXPECT_DOUBLE_EQ(det_lemma_payoff(s, e1), 1.0);
  EXPECT_DOUBLE_EQ(det_lemma_payoff(s, Eigen::VectorXd::Zero(3)), 0.0);
  const DesignState t = sherman_morrison_update(s, e1);
  EXPECT_NEAR(std::exp(t.logdet), 2.0, 1e-14);
  EXPECT_THROW(det_lemma_payoff(s, Eigen::VectorXd::Zero(2)), ArgumentError);
}

TEST(RankOneTest, ShermanMorrisonTwoByTwo) {
  DesignState s = make_design_state(pool_of(Eigen::MatrixXd::Identity(2, 2)),
                                    {0, 1});
  const DesignState t = sherman_morrison_update(s, Eigen::VectorXd::Unit(2, 0));
  EXPECT_NEAR(t.x_inv(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(t.x_inv(1, 1), 1.0, 1e-15);
  EXPECT_NEAR(t.x_inv(0, 1), 0.0, 1e-15);
}

TEST(RankOneTest, RandomIdentitiesAgainstDirectEvaluation) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd x = testing::random_spd(4, rng);
    const Eigen::VectorXd y = testing::random_matrix(4, 1, rng);
    DesignState s;
    s.fisher = x;
    s.x_inv = x.inverse();
    s.logdet = std::log(x.determinant());
    const double lhs = (x + y * y.transpose()).determinant();
    const double rhs = x.determinant() * (1.0 + det_lemma_payoff(s, y));
    EXPECT_LT(std::abs(lhs - rhs) / std::abs(lhs), 1e-10);
    const DesignState t = sherman_morrison_update(s, y);
    EXPECT_LT((t.x_inv * (x + y * y.transpose()) -
               Eigen::MatrixXd::Identity(4, 4))
                  .norm(),
              1e-8);
  }
}

TEST(RankOneTest, AccumulatedUpdatesMatchDirectInverse) {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd y = testing::random_matrix(3, 12, rng);
  DesignState s = make_design_state(pool_of(y), {0, 1, 2});
  Eigen::MatrixXd sum = y.leftCols(3) * y.leftCols(3).transpose();
  for (Eigen::Index j = 3; j < 12; ++j) {
    sherman_morrison_update_inplace(s, y.col(j));
    sum += y.col(j) * y.col(j).transpose();
    EXPECT_LT((s.x_inv - sum.inverse()).norm(), 1e-6);
    EXPECT_LT((s.x_inv * s.fisher - Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-6);
    EXPECT_NEAR(s.logdet, std::log(sum.determinant()), 1e-8);
  }
}

TEST(RankOneTest, NonpositiveDenominatorThrows) {
  DesignState s;
  s.fisher = Eigen::MatrixXd::Identity(1, 1);
  s.x_inv = -Eigen::MatrixXd::Identity(1, 1);
  EXPECT_THROW(sherman_morrison_update(s, Eigen::VectorXd::Ones(1)),
               NumericalError);
}

TEST(GreedySizeTest, OrthonormalDesignsSelectsAll) {
  const Index s =
      greedy_size_constrained(pool_of(Eigen::MatrixXd::Identity(3, 3)), 3, {0}, 1e-6);
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()),
            (std::set<std::size_t>{0, 1, 2}));
  EXPECT_EQ(s.front(), 0u);
}

TEST(GreedySizeTest, SingularInitDirectsToQrInit) {
  try {
    greedy_size_constrained(pool_of(Eigen::MatrixXd::Identity(3, 3)), 3, {0});
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("qr_init"), std::string::npos);
  }
}

TEST(GreedySizeTest, ApproximationRatioAgainstExhaustiveSearch) {
  std::mt19937_64 rng(3);
  const double eps = 1e-6;
  const double ratio = 1.0 - std::exp(-1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd y = testing::random_matrix(3, 12, rng);
    const Index s = greedy_size_constrained(pool_of(y), 5, {}, eps);
    ASSERT_EQ(s.size(), 5u);
    const double best =
        exhaustive_best(y, eps, [](const Index& c) { return c.size() <= 5; });
    EXPECT_GE(objective_by_det(y, s, eps), ratio * best);
    EXPECT_NEAR(normalized_logdet(y, s, eps), objective_by_det(y, s, eps), 1e-8);
  }
}

TEST(GreedySizeTest, NeverRepeatsAnIndex) {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd y = testing::random_matrix(3, 8, rng);
  y.col(5) = y.col(2);
  const Index s = greedy_size_constrained(pool_of(y), 8, {}, 1e-6);
  EXPECT_EQ(s.size(), 8u);
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 8u);
}

TEST(GreedySizeTest, StateInvariantsHoldAfterEveryStep) {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd y = testing::random_matrix(3, 10, rng);
  for (std::size_t m = 3; m <= 10; ++m) {
    const DesignState s =
        greedy_size_constrained_state(pool_of(y), m, {0, 1, 2});
    EXPECT_LT((s.x_inv * s.fisher - Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-6);
    EXPECT_NEAR(s.logdet, std::log(s.fisher.determinant()), 1e-8);
  }
}

TEST(GreedySizeTest, RejectsBadArguments) {
  const DesignPool p = pool_of(Eigen::MatrixXd::Identity(2, 2));
  EXPECT_THROW(greedy_size_constrained(p, 1, {0, 1}), ArgumentError);
  EXPECT_THROW(greedy_size_constrained(p, 2, {0, 0}), ArgumentError);
  EXPECT_THROW(greedy_size_constrained(p, 2, {7}), ArgumentError);
  DesignPool bad = p;
  bad.runtimes(0) = 0.0;
  EXPECT_THROW(greedy_size_constrained(bad, 2, {0, 1}), ArgumentError);
}

TEST(GreedyTimeTest, CheaperOfIdenticalDesignsIsChosen) {
  Eigen::MatrixXd y(2, 4);
  y << 1, 0, 1, 1,
       0, 1, 1, 1;
  DesignPool p{y, Eigen::Vector4d(1.0, 1.0, 10.0, 1.0), std::nullopt};
  const Index s = greedy_time_constrained(p, 2.0 + 2.0, {0, 1});
  EXPECT_EQ(s, (Index{0, 1, 3}));
}

TEST(GreedyTimeTest, UnbindingBudgetSelectsEverything) {
  std::mt19937_64 rng(6);
  const DesignPool p = random_pool(2, 9, rng);
  const Index s = greedy_time_constrained(p, p.runtimes.sum(), {}, 1e-6);
  EXPECT_EQ(s.size(), 9u);
}

TEST(GreedyTimeTest, BudgetIsNeverExceededAndRunIsDeterministic) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const DesignPool p = random_pool(3, 15, rng);
    const double tau = 0.3 * p.runtimes.sum();
    const DesignState s = greedy_time_constrained_state(p, tau, {}, 1e-6);
    double spent = 0.0;
    for (std::size_t j : s.selected) spent += p.runtimes(static_cast<Eigen::Index>(j));
    EXPECT_LE(spent, tau);
    EXPECT_EQ(greedy_time_constrained(p, tau, {}, 1e-6), s.selected);
  }
}

TEST(GreedyTimeTest, MostlyWithinBoundOfKnapsackOptimum) {
  std::mt19937_64 rng(8);
  const double eps = 1e-6;
  const double ratio = 1.0 - std::exp(-1.0);
  int within = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const DesignPool p = random_pool(2, 10, rng);
    const double tau = 0.4 * p.runtimes.sum();
    const Index s = greedy_time_constrained(p, tau, {}, eps);
    const double best = exhaustive_best(p.y, eps, [&](const Index& c) {
      double t = 0.0;
      for (std::size_t j : c) t += p.runtimes(static_cast<Eigen::Index>(j));
      return t <= tau;
    });
    within += objective_by_det(p.y, s, eps) >= ratio * best;
  }
  EXPECT_GE(within, 95);
}

TEST(GreedyTimeTest, InitOverBudgetThrows) {
  const DesignPool p = pool_of(Eigen::MatrixXd::Identity(2, 2), 3.0);
  EXPECT_THROW(greedy_time_constrained(p, 5.0, {0, 1}), ArgumentError);
}

TEST(QrInitTest, IdentityDesigns) {
  const QrInit r = qr_init(pool_of(Eigen::MatrixXd::Identity(3, 3), 0.1), 10.0, 3);
  EXPECT_FALSE(r.fallback);
  EXPECT_EQ(std::set<std::size_t>(r.indices.begin(), r.indices.end()),
            (std::set<std::size_t>{0, 1, 2}));
  EXPECT_NO_THROW(make_design_state(pool_of(Eigen::MatrixXd::Identity(3, 3)),
                                    r.indices));
}

TEST(QrInitTest, FallbackTakesFastestPrefixWithinBudget) {
  DesignPool p = pool_of(Eigen::MatrixXd::Identity(3, 3));
  p.runtimes << 4.0, 2.0, 3.0;
  const QrInit r = qr_init(p, 6.0, 3);  // cutoff 1s: nothing is fast
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.indices, (Index{1, 2}));
  const DesignResult d = time_constrained_design(p, 6.0, 3);
  EXPECT_TRUE(d.fallback);
  EXPECT_EQ(d.selected, (Index{1, 2}));
}

TEST(QrInitTest, PivotsAreLinearlyIndependent) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    DesignPool p = random_pool(4, 30, rng);
    const QrInit r = qr_init(p, 100.0, 4);
    ASSERT_FALSE(r.fallback);
    Eigen::MatrixXd cols(4, 4);
    for (int c = 0; c < 4; ++c) cols.col(c) = p.y.col(static_cast<Eigen::Index>(r.indices[static_cast<std::size_t>(c)]));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cols);
    EXPECT_GT(svd.singularValues().minCoeff(), 1e-10);
  }
}

TEST(QrInitTest, OnlyFastPipelinesAreCandidates) {
  Eigen::MatrixXd y(2, 4);
  y << 10, 0, 1, 0,
       0, 10, 0, 1;
  DesignPool p{y, Eigen::Vector4d(5.0, 5.0, 1.0, 1.0), std::nullopt};
  const QrInit r = qr_init(p, 8.0, 2);  // cutoff 2s
  EXPECT_EQ(std::set<std::size_t>(r.indices.begin(), r.indices.end()),
            (std::set<std::size_t>{2, 3}));
  EXPECT_THROW(qr_init(p, 0.0, 2), ArgumentError);
}

TEST(VarianceTest, ExactFactorsHitTheFloor) {
  std::mt19937_64 rng(10);
  const Eigen::MatrixXd x = testing::random_matrix(2, 5, rng);
  const Eigen::MatrixXd y = testing::random_matrix(2, 4, rng);
  const Eigen::VectorXd v = estimate_pipeline_variances(x.transpose() * y, x, y);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_LE(v(j), 1e-12);
}

TEST(VarianceTest, HandComputedAndScaling) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 2);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1, 2);
  Eigen::MatrixXd e(2, 2);
  e << -1, 3,
        1, 5;
  const Eigen::VectorXd v = estimate_pipeline_variances(e, x, y);
  EXPECT_DOUBLE_EQ(v(0), 2.0);  // mean 0, ((-1)^2 + 1^2) / 1
  EXPECT_DOUBLE_EQ(v(1), 2.0);
  e.col(1) *= 3.0;
  EXPECT_DOUBLE_EQ(estimate_pipeline_variances(e, x, y)(1), 18.0);
  EXPECT_THROW(estimate_pipeline_variances(e.topRows(1), x.leftCols(1), y),
               ArgumentError);
}

TEST(WeightedTest, UniformWeightsMatchUnweighted) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> w(0.1, 5.0);
  for (int trial = 0; trial < 30; ++trial) {
    DesignPool p = random_pool(3, 20, rng);
    p.runtimes *= 0.1;
    const double tau = 0.4 * p.runtimes.sum();
    const DesignResult plain = time_constrained_design(p, tau, 3);
    p.weights = Eigen::VectorXd::Constant(20, w(rng));
    EXPECT_EQ(greedy_weighted_time_constrained(p, tau, 3).selected,
              plain.selected);
  }
}

TEST(WeightedTest, HugeVarianceDesignIsAvoided) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    DesignPool p = random_pool(3, 20, rng);
    p.runtimes *= 0.1;
    const double tau = 0.3 * p.runtimes.sum();
    const DesignResult plain = time_constrained_design(p, tau, 3);
    ASSERT_GT(plain.selected.size(), 4u);
    // First pick after initialization.
    const std::size_t victim = plain.selected[3];
    p.weights = Eigen::VectorXd::Ones(20);
    (*p.weights)(static_cast<Eigen::Index>(victim)) = 1e6;
    const Index s = greedy_weighted_time_constrained(p, tau, 3).selected;
    // Near-zero payoff: taken only once nothing else fits, if at all.
    const auto it = std::find(s.begin(), s.end(), victim);
    if (it != s.end()) {
      EXPECT_EQ(it, s.end() - 1);
      double spent = 0.0;
      for (std::size_t j : s) spent += p.runtimes(static_cast<Eigen::Index>(j));
      spent -= p.runtimes(static_cast<Eigen::Index>(victim));
      for (Eigen::Index j = 0; j < 20; ++j) {
        if (std::find(s.begin(), s.end(), static_cast<std::size_t>(j)) ==
            s.end()) {
          EXPECT_GT(spent + p.runtimes(j), tau);
        }
      }
    }
  }
}

TEST(WeightedTest, MatchesRescaleThenUnweighted) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> w(0.2, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    DesignPool p = random_pool(3, 20, rng);
    p.runtimes *= 0.1;
    Eigen::VectorXd sig(20);
    for (Eigen::Index j = 0; j < 20; ++j) sig(j) = w(rng);
    DesignPool scaled = p;
    for (Eigen::Index j = 0; j < 20; ++j) scaled.y.col(j) /= sig(j);
    p.weights = sig;
    const double tau = 0.4 * p.runtimes.sum();
    EXPECT_EQ(greedy_weighted_time_constrained(p, tau, 3).selected,
              time_constrained_design(scaled, tau, 3).selected);
  }
}

TEST(WeightedTest, RejectsNonpositiveWeights) {
  DesignPool p = pool_of(Eigen::MatrixXd::Identity(2, 2));
  p.weights = Eigen::Vector2d(1.0, 0.0);
  EXPECT_THROW(greedy_weighted_time_constrained(p, 10.0, 2), ArgumentError);
  p.weights.reset();
  EXPECT_THROW(greedy_weighted_time_constrained(p, 10.0, 2), ArgumentError);
}

}  // namespace
}  // namespace pipesel
