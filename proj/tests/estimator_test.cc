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
#include "diffrec/estimator.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "diffrec/datagen.h"
#include "diffrec/errors.h"
#include "diffrec/recovery.h"
#include "diffrec/rng.h"
#include "test_support.h"

namespace diffrec {
namespace {

using testing::RandomField;
using testing::SmallSim;

SimulationRecord Record(double alpha, int n = 16, std::uint64_t seed = 11) {
  const SimConfig c = SmallSim(n, 1000, 0);
  SplitMix64 rng(seed);
  return Simulate(VoronoiInitialCondition(c.grid, VoronoiConfig{}, rng), alpha, c);
}

std::vector<Field2D> ThreeFrames() {
  return {RandomField(16, 16, 1), RandomField(16, 16, 2), RandomField(16, 16, 3)};
}

TEST(EstimatorConfigTest, Validation) {
  EstimatorConfig c;
  c.n_heads = 5;
  EXPECT_THROW(c.Validate(), ConfigurationError);
  c = EstimatorConfig{};
  EXPECT_THROW(c.ValidateFor(3, 16), ConfigurationError);
}

TEST(EstimatorParamsTest, CountAndFlatRoundTrip) {
  const EstimatorParams p = EstimatorParams::Init(EstimatorConfig{}, 0.1);
  EXPECT_EQ(p.Count(), 10177u);
  EXPECT_NEAR(Softplus(p.mlp2_b.data[0]), 0.1, 1e-15);
  EstimatorParams q = EstimatorParams::Init(EstimatorConfig{}, 0.7);
  q.Unflatten(p.Flatten());
  EXPECT_EQ(q.Flatten(), p.Flatten());
  EXPECT_THROW(q.Unflatten(std::vector<double>(3)), InvalidInput);
}

TEST(AdaptivePoolTest, WindowsCoverTheFrame) {
  std::vector<double> v(100);
  for (int k = 0; k < 100; ++k) v[k] = k;
  const Field2D f(10, 10, v);
  const ad::Tensor p = AdaptivePool(f, 4);
  // Windows along each axis: [0,3) [2,5) [5,8) [7,10).
  const int lo[] = {0, 2, 5, 7};
  const int hi[] = {3, 5, 8, 10};
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      double s = 0.0;
      int n = 0;
      for (int j = lo[a]; j < hi[a]; ++j) {
        for (int i = lo[b]; i < hi[b]; ++i, ++n) s += v[j * 10 + i];
      }
      EXPECT_DOUBLE_EQ(p.at(0, a * 4 + b), s / n);
    }
  }
  const ad::Tensor blocks = AdaptivePool(RandomField(16, 16, 4), 4);
  const Field2D r = RandomField(16, 16, 4);
  double s = 0.0;
  for (int j = 4; j < 8; ++j) {
    for (int i = 8; i < 12; ++i) s += r(j, i);
  }
  EXPECT_NEAR(blocks.at(0, 1 * 4 + 2), s / 16, 1e-15);
}

TEST(EstimatorTest, ConstantNetwork) {
  EstimatorParams p = EstimatorParams::Init(EstimatorConfig{}, 0.1);
  std::vector<double> flat(p.Count(), 0.0);
  flat.back() = 0.37;
  p.Unflatten(flat);
  const auto frames = ThreeFrames();
  EXPECT_NEAR(EstimatorForward(frames, p, EstimatorConfig{}).alpha_hat(),
              Softplus(0.37), 1e-15);
  const std::vector<Field2D> other = {RandomField(16, 16, 8), RandomField(16, 16, 9)};
  EXPECT_NEAR(EstimatorForward(other, p, EstimatorConfig{}).alpha_hat(),
              Softplus(0.37), 1e-15);
}

TEST(EstimatorTest, AttentionRowsAreStochastic) {
  const EstimatorConfig c;
  const EstimatorParams p = EstimatorParams::Init(c, 0.1);
  const SimulationRecord r = Record(0.6);
  const EstimatorPass pass = EstimatorForward(r.frames, p, c);
  const auto heads = pass.AttentionWeights();
  ASSERT_EQ(heads.size(), 4u);
  for (const ad::Tensor& w : heads) {
    ASSERT_EQ(w.rows, 21);
    ASSERT_EQ(w.cols, 21);
    for (int i = 0; i < w.rows; ++i) {
      double sum = 0.0;
      for (int j = 0; j < w.cols; ++j) {
        EXPECT_GE(w.at(i, j), 0.0);
        sum += w.at(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
  EXPECT_GT(pass.alpha_hat(), 0.0);
}

// Per-frame features, self-attention without positions and a mean over
// time make the output invariant to frame order.
TEST(EstimatorTest, FrameOrderInvariance) {
  const EstimatorConfig c;
  const EstimatorParams p = EstimatorParams::Init(c, 0.3);
  auto frames = ThreeFrames();
  const double a = EstimatorForward(frames, p, c).alpha_hat();
  std::swap(frames[0], frames[2]);
  EXPECT_NEAR(EstimatorForward(frames, p, c).alpha_hat(), a, 1e-14);
  const std::vector<Field2D> same(3, frames[1]);
  std::vector<Field2D> permuted = same;
  std::rotate(permuted.begin(), permuted.begin() + 1, permuted.end());
  EXPECT_EQ(EstimatorForward(same, p, c).alpha_hat(),
            EstimatorForward(permuted, p, c).alpha_hat());
}

TEST(EstimatorTest, NonFiniteActivationNamesTheLayer) {
  const EstimatorConfig c;
  EstimatorParams p = EstimatorParams::Init(c, 0.1);
  for (double& w : p.conv1_w.data) w = 1e308;
  const std::vector<Field2D> frames(2, Field2D::Filled(16, 16, 1e10));
  try {
    EstimatorForward(frames, p, c);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("conv1"), std::string::npos) << e.what();
  }
}

TEST(EstimatorTest, EveryParameterGradientMatchesFiniteDifferences) {
  const EstimatorConfig c;
  const EstimatorParams p = EstimatorParams::Init(c, 0.4);
  const auto frames = ThreeFrames();
  std::vector<ad::Tensor> pooled;
  for (const Field2D& f : frames) pooled.push_back(AdaptivePool(f, c.pooled_size));
  EstimatorPass pass(pooled, p, c);
  const std::vector<double> grad = pass.ParamGradient(1.0);
  std::vector<double> flat = p.Flatten();
  ASSERT_EQ(grad.size(), flat.size());
  EstimatorParams probe = p;
  auto eval = [&](const std::vector<double>& x) {
    probe.Unflatten(x);
    return EstimatorPass(pooled, probe, c).alpha_hat();
  };
  const double h = 1e-6;
  int bad = 0;
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const double orig = flat[k];
    flat[k] = orig + h;
    const double fp = eval(flat);
    flat[k] = orig - h;
    const double fm = eval(flat);
    flat[k] = orig;
    const double fd = (fp - fm) / (2 * h);
    if (std::fabs(grad[k] - fd) > 1e-4 * std::fabs(fd) + 1e-9) {
      if (++bad < 10) ADD_FAILURE() << "param " << k << ": " << grad[k] << " vs " << fd;
    }
  }
  EXPECT_EQ(bad, 0);
}

TEST(EstimatorTttTest, RecoversHalf) {
  const SimulationRecord r = Record(0.5);
  const SafeConfig cfg = SafeConfig::ForGrid(r.config.grid, 50);
  const RecoveryResult est =
      TrainEstimatorTtt(r, cfg, EstimatorConfig{}, TttConfig::ForEstimator());
  EXPECT_LE(std::fabs(est.alpha_hat - 0.5), 1e-2);
  for (double a : est.alpha_trace) ASSERT_GT(a, 0.0);
  const RecoveryResult scalar = RecoverAlpha(r, cfg, TttConfig{});
  EXPECT_LE(std::fabs(est.alpha_hat - scalar.alpha_hat), 2e-2);
}

TEST(EstimatorTttTest, MicroConfigRecovers) {
  const SimulationRecord r = Record(0.5);
  EstimatorConfig micro;
  micro.d_model = 4;
  micro.n_heads = 1;
  micro.mlp_hidden = 4;
  TttConfig ttt = TttConfig::ForEstimator();
  ttt.learning_rate = 1e-2;
  const RecoveryResult res =
      TrainEstimatorTtt(r, SafeConfig::ForGrid(r.config.grid, 50), micro, ttt);
  EXPECT_LE(std::fabs(res.alpha_hat - 0.5), 5e-2);
}

// Without sub-stepping both paths minimize the same quadratic in alpha.
TEST(EstimatorTttTest, SingleStepAgreesWithScalarPath) {
  const SimulationRecord r = Record(1.5);
  const SafeConfig cfg = SafeConfig::ForGrid(r.config.grid, 1);
  const RecoveryResult est =
      TrainEstimatorTtt(r, cfg, EstimatorConfig{}, TttConfig::ForEstimator());
  const RecoveryResult scalar = RecoverAlpha(r, cfg, TttConfig{});
  EXPECT_LE(std::fabs(est.alpha_hat - scalar.alpha_hat), 2e-2);
  EXPECT_LT(est.alpha_hat, 1.5);
}

TEST(EstimatorTttTest, CorpusEvaluation) {
  const std::vector<SimulationRecord> records = {Record(0.3, 16, 1), Record(0.9, 16, 2)};
  EstimatorConfig micro;
  micro.d_model = 4;
  micro.n_heads = 1;
  micro.mlp_hidden = 4;
  TttConfig ttt = TttConfig::ForEstimator();
  ttt.learning_rate = 1e-2;
  const CorpusMetrics m = EvaluateCorpusEstimator(
      records, SafeConfig::ForGrid(records[0].config.grid, 50), micro, ttt, 2);
  EXPECT_EQ(m.n, 2);
  EXPECT_LE(m.mae, 5e-2);
}

}  // namespace
}  // namespace diffrec
