// Copyright 2026 The diffrec Authors
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
#include "diffrec/recovery.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "diffrec/adam.h"
#include "diffrec/datagen.h"
#include "diffrec/errors.h"
#include "diffrec/rng.h"
#include "test_support.h"

namespace diffrec {
namespace {

using testing::Dot;
using testing::Grid;
using testing::SmallSim;

SimulationRecord Record(double alpha, int n = 32, std::uint64_t seed = 11) {
  const SimConfig c = SmallSim(n, 1000, 0);
  SplitMix64 rng(seed);
  SimulationRecord r =
      Simulate(VoronoiInitialCondition(c.grid, VoronoiConfig{}, rng), alpha, c);
  r.sim_id = static_cast<int>(seed);
  return r;
}

SafeConfig Matched(const SimulationRecord& r) {
  return SafeConfig::ForGrid(r.config.grid, r.config.grid.save_interval);
}

TEST(SoftplusTest, StableAndInvertible) {
  EXPECT_NEAR(Softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(Softplus(800.0), 800.0);
  EXPECT_GT(Softplus(-30.0), 0.0);
  EXPECT_GT(AlphaFromParam(-800.0, Reparam::kSoftplus), 0.0);
  for (double a : {1e-6, 0.01, 0.1, 1.0, 1.7, 30.0}) {
    EXPECT_NEAR(Softplus(SoftplusInverse(a)), a, 1e-13 * a);
  }
  EXPECT_NEAR(Sigmoid(0.0), 0.5, 1e-16);
  EXPECT_GT(AlphaFromParam(-5.0, Reparam::kClamp), 0.0);
  EXPECT_EQ(AlphaFromParam(0.7, Reparam::kClamp), 0.7);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  Adam adam(2, AdamOptions{0.1, 0.9, 0.999, 1e-8});
  double p[2] = {1.0, -1.0};
  const double g[2] = {3.0, -0.002};
  adam.Step(p, g);
  EXPECT_NEAR(p[0], 0.9, 1e-7);
  EXPECT_NEAR(p[1], -0.9, 1e-5);
}

TEST(ConvergenceMonitorTest, FiresAfterPatienceStalls) {
  ConvergenceMonitor m(1e-6, 3);
  EXPECT_FALSE(m.Update(1.0));
  EXPECT_FALSE(m.Update(0.5));
  EXPECT_FALSE(m.Update(0.5));        // stalled 1
  EXPECT_FALSE(m.Update(0.6));        // a rise counts as stalled, 2
  EXPECT_FALSE(m.Update(0.3));        // improvement resets
  EXPECT_EQ(m.stalled(), 0);
  EXPECT_FALSE(m.Update(0.3 * (1 - 1e-7)));
  EXPECT_FALSE(m.Update(0.3 * (1 - 2e-7)));
  EXPECT_TRUE(m.Update(0.3 * (1 - 3e-7)));
}

TEST(RecoverTest, ConvergesOnSelfGeneratedData) {
  for (double truth : {0.05, 0.1, 0.25, 0.5, 1.0, 1.5}) {
    const SimulationRecord r = Record(truth);
    const RecoveryResult res = RecoverAlpha(r, Matched(r), TttConfig{});
    EXPECT_LE(std::fabs(res.alpha_hat - truth), 1e-3) << "alpha*=" << truth;
    EXPECT_LE(res.steps_taken, 2000);
    for (double a : res.alpha_trace) ASSERT_GT(a, 0.0);
    // Trailing window reaches the lowest loss seen, up to float64 noise.
    const auto& lt = res.loss_trace;
    ASSERT_GT(lt.size(), 60u);
    const double tail = *std::min_element(lt.end() - 50, lt.end());
    const double head = *std::min_element(lt.begin() + 10, lt.end() - 50);
    EXPECT_LE(tail, head + 1e-24);
  }
}

TEST(RecoverTest, HalfRecoveredToTightLoss) {
  const SimulationRecord r = Record(0.5);
  const RecoveryResult res = RecoverAlpha(r, Matched(r), TttConfig{});
  EXPECT_LE(std::fabs(res.alpha_hat - 0.5), 1e-3);
  EXPECT_LE(res.final_safe_loss, 1e-10);
}

TEST(RecoverTest, NoPrematureStop) {
  const SimulationRecord r = Record(1.0, 24);
  TttConfig ttt;
  const RecoveryResult stopped = RecoverAlpha(r, Matched(r), ttt);
  ASSERT_TRUE(stopped.converged);
  TttConfig longer = ttt;
  longer.patience = 1000000;
  longer.max_steps = stopped.steps_taken + 2 * ttt.patience;
  const RecoveryResult cont = RecoverAlpha(r, Matched(r), longer);
  EXPECT_EQ(cont.alpha_trace[stopped.steps_taken - 1], stopped.alpha_hat);
  EXPECT_LE(std::fabs(cont.alpha_hat - stopped.alpha_hat),
            10.0 * ttt.rel_tolerance * stopped.alpha_hat);
}

TEST(RecoverTest, NormModeDoesNotMoveTheOptimum) {
  const SimulationRecord r = Record(0.8, 24);
  TttConfig sum;
  TttConfig mean;
  mean.norm = NormMode::kMean;
  const RecoveryResult a = RecoverAlpha(r, Matched(r), sum);
  const RecoveryResult b = RecoverAlpha(r, Matched(r), mean);
  EXPECT_NEAR(a.alpha_hat, b.alpha_hat, 1e-9);
}

TEST(RecoverTest, ClampModeStaysPositive) {
  const SimulationRecord r = Record(0.05, 16);
  TttConfig ttt;
  ttt.reparam = Reparam::kClamp;
  ttt.learning_rate = 0.2;
  const RecoveryResult res = RecoverAlpha(r, Matched(r), ttt);
  for (double a : res.alpha_trace) ASSERT_GT(a, 0.0);
  EXPECT_LE(std::fabs(res.alpha_hat - 0.05), 1e-3);
}

TEST(RecoverTest, BitwiseDeterministic) {
  const SimulationRecord r = Record(0.9, 16);
  const RecoveryResult a = RecoverAlpha(r, Matched(r), TttConfig{});
  const RecoveryResult b = RecoverAlpha(r, Matched(r), TttConfig{});
  EXPECT_EQ(a.alpha_trace, b.alpha_trace);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.alpha_hat, b.alpha_hat);
}

// Without sub-stepping the prediction is affine in alpha, so the loss is a
// quadratic whose minimizer has a closed form.
TEST(RecoverTest, SingleStepMatchesLeastSquaresMinimizer) {
  const SimulationRecord r = Record(1.5);
  const GridSpec& g = r.config.grid;
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t + 1 < r.frames.size(); ++t) {
    const Field2D lf = Laplacian(r.frames[t], g);
    std::vector<double> diff(lf.size());
    std::vector<double> step(lf.size());
    for (std::size_t k = 0; k < lf.size(); ++k) {
      diff[k] = r.frames[t + 1].values()[k] - r.frames[t].values()[k];
      step[k] = g.dt_save() * lf.values()[k];
    }
    const Field2D d(g.ny, g.nx, diff), s(g.ny, g.nx, step);
    num += Dot(s, d);
    den += Dot(s, s);
  }
  const double oracle = num / den;
  const RecoveryResult res = RecoverAlpha(r, SafeConfig::ForGrid(g, 1), TttConfig{});
  EXPECT_NEAR(res.alpha_hat, oracle, 1e-4 * oracle);
  EXPECT_LT(res.alpha_hat, 0.5 * 1.5);
  EXPECT_EQ(res.rejected_steps, 0);
}

TEST(RecoverTest, NonFiniteLossBacksOff) {
  const SimulationRecord r = Record(0.5, 16);
  // 300 sub-steps of 0.25: unstable above alpha = 0.25, overflowing for
  // large alpha.
  const SafeConfig cfg(300, 75.0, r.config.grid);
  TttConfig ttt;
  ttt.alpha_init = 1.7;
  ttt.max_steps = 200;
  const RecoveryResult res = RecoverAlpha(r, cfg, ttt);
  EXPECT_GT(res.rejected_steps, 0);
  EXPECT_TRUE(std::isfinite(res.final_safe_loss));
  EXPECT_GT(res.alpha_hat, 0.0);
  EXPECT_LT(res.alpha_hat, 1.7);
}

TEST(RecoverTest, Errors) {
  const SimulationRecord r = Record(0.5, 16);
  EXPECT_THROW(RecoverAlpha(r, SafeConfig::ForGrid(Grid(32, 32), 50), TttConfig{}),
               InvalidGridError);
  const std::vector<Field2D> flat(4, Field2D::Filled(16, 16, 0.2));
  EXPECT_THROW(RecoverAlpha(flat, Matched(r), TttConfig{}), UnidentifiableError);
  TttConfig bad;
  bad.rel_tolerance = 1.0;
  EXPECT_THROW(bad.Validate(), ConfigurationError);
  bad = TttConfig{};
  bad.patience = 0;
  EXPECT_THROW(bad.Validate(), ConfigurationError);
  EXPECT_THROW(RecoverAlpha(std::vector<Field2D>(1, r.frames[0]), Matched(r), TttConfig{}),
               InvalidInput);
}

TEST(MetricsTest, MaeAndR2AgainstOracle) {
  std::vector<SimOutcome> out = {
      {0, 0.2, 0.25, 1e-3, 10, true, ""},
      {1, 0.9, 0.8, 2e-3, 10, true, ""},
      {2, 1.4, 1.5, 3e-3, 10, true, ""},
      {3, 1.0, std::numeric_limits<double>::quiet_NaN(), 0, 0, false, "boom"},
  };
  const CorpusMetrics m = SummarizeOutcomes(out, 100);
  EXPECT_EQ(m.n, 3);
  EXPECT_EQ(m.n_failed, 1);
  EXPECT_EQ(m.per_sim.size(), 4u);
  EXPECT_NEAR(m.mae, (0.05 + 0.1 + 0.1) / 3, 1e-15);
  const double mean = (0.2 + 0.9 + 1.4) / 3;
  const double ss_tot = (0.2 - mean) * (0.2 - mean) + (0.9 - mean) * (0.9 - mean) +
                        (1.4 - mean) * (1.4 - mean);
  const double ss_res = 0.05 * 0.05 + 0.1 * 0.1 + 0.1 * 0.1;
  EXPECT_NEAR(m.r2, 1 - ss_res / ss_tot, 1e-14);
  EXPECT_TRUE(m.r2_defined);
  EXPECT_NEAR(m.mean_final_safe_loss, 2e-3, 1e-18);
  EXPECT_NEAR(m.mean_final_safe_loss_mean, 2e-5, 1e-20);
}

TEST(MetricsTest, SingleRecordHasUndefinedR2) {
  const CorpusMetrics m = SummarizeOutcomes({{0, 0.5, 0.5004, 0, 1, true, ""}}, 4);
  EXPECT_EQ(m.n, 1);
  EXPECT_NEAR(m.mae, 4e-4, 1e-15);
  EXPECT_TRUE(std::isnan(m.r2));
  EXPECT_FALSE(m.r2_defined);
}

TEST(EvaluateTest, ParallelMatchesSerial) {
  std::vector<SimulationRecord> records;
  for (std::uint64_t s = 1; s <= 3; ++s) records.push_back(Record(0.3 * s, 16, s));
  const SafeConfig cfg = Matched(records[0]);
  const CorpusMetrics a = EvaluateCorpus(records, cfg, TttConfig{}, 1);
  const CorpusMetrics b = EvaluateCorpus(records, cfg, TttConfig{}, 3);
  EXPECT_EQ(a.mae, b.mae);
  EXPECT_EQ(a.r2, b.r2);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.per_sim[i].sim_id, records[i].sim_id);
    EXPECT_EQ(a.per_sim[i].alpha_hat, b.per_sim[i].alpha_hat);
  }
  EXPECT_LE(a.mae, 1e-3);
  EXPECT_THROW(EvaluateCorpus({}, cfg, TttConfig{}), InvalidInput);
}

TEST(EvaluateTest, FailuresAreRecordedNotDropped) {
  std::vector<SimulationRecord> records = {Record(0.4, 16, 1), Record(0.8, 16, 2)};
  for (Field2D& f : records[1].frames) f = Field2D::Filled(16, 16, 0.5);
  const CorpusMetrics m = EvaluateCorpus(records, Matched(records[0]), TttConfig{});
  EXPECT_EQ(m.n, 1);
  EXPECT_EQ(m.n_failed, 1);
  EXPECT_FALSE(m.per_sim[1].converged);
  EXPECT_NE(m.per_sim[1].error.find("sim 2"), std::string::npos);
}

TEST(AblationTest, StabilityColumnsMatchTable) {
  const std::vector<int> nsub = {50, 1, 2, 25, 5, 10};
  const auto rows = StabilityColumns(Grid(128, 128), nsub, 1.7);
  const double sigma[] = {13.6, 6.8, 2.72, 1.36, 0.544, 0.272};
  const double amax[] = {0.25, 0.5, 1.25, 2.5, 6.25, 12.5};
  const int order[] = {1, 2, 5, 10, 25, 50};
  ASSERT_EQ(rows.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(rows[i].n_sub, order[i]);
    EXPECT_NEAR(rows[i].stability.sigma, sigma[i], 1e-12);
    EXPECT_NEAR(rows[i].stability.alpha_max, amax[i], 1e-12);
    EXPECT_EQ(rows[i].stability.stable, order[i] >= 10);
  }
  EXPECT_THROW(StabilityColumns(Grid(8, 8), std::vector<int>{}, 1.7), ConfigurationError);
}

}  // namespace
}  // namespace diffrec
