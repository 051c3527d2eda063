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
#include "diffrec/field.h"

#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "diffrec/errors.h"
#include "test_support.h"

namespace diffrec {
namespace {

using testing::CosineMode;
using testing::Dot;
using testing::Grid;
using testing::MaxAbs;
using testing::MaxAbsDiff;
using testing::RandomField;

double ModeEigenvalue(int kx, int ky, int nx, int ny, double h) {
  const double sx = std::sin(std::numbers::pi * kx / nx);
  const double sy = std::sin(std::numbers::pi * ky / ny);
  return -4.0 / (h * h) * (sx * sx + sy * sy);
}

TEST(Field2DTest, RejectsBadData) {
  EXPECT_THROW(Field2D(3, 3, std::vector<double>(8)), InvalidGridError);
  std::vector<double> v(9, 0.0);
  v[4] = std::nan("");
  EXPECT_THROW(Field2D(3, 3, v), DomainError);
}

TEST(Field2DTest, MeanAndVariance) {
  const Field2D f(1, 4, {1.0, 2.0, 3.0, 6.0});
  EXPECT_DOUBLE_EQ(f.Mean(), 3.0);
  EXPECT_DOUBLE_EQ(f.Variance(), (4.0 + 1.0 + 0.0 + 9.0) / 4.0);
}

TEST(LaplacianTest, RejectsTinyGrids) {
  const GridSpec g = Grid(2, 5);
  EXPECT_THROW(Laplacian(Field2D::Filled(5, 2, 1.0), g), InvalidGridError);
}

TEST(LaplacianTest, EigenmodesOnRectangularGrid) {
  const int nx = 16, ny = 12;
  const GridSpec g = Grid(nx, ny);
  for (int kx = 0; kx < nx; kx += 3) {
    for (int ky = 0; ky < ny; ky += 2) {
      const Field2D u = CosineMode(ny, nx, kx, ky);
      const Field2D lu = Laplacian(u, g);
      const double lambda = ModeEigenvalue(kx, ky, nx, ny, g.dx);
      for (std::size_t k = 0; k < u.size(); ++k) {
        EXPECT_NEAR(lu.values()[k], lambda * u.values()[k], 1e-12 * 32.0)
            << "kx=" << kx << " ky=" << ky;
      }
    }
  }
}

TEST(LaplacianTest, CheckerboardIsMinus32AtHalfSpacing) {
  const GridSpec g = Grid(8, 8);
  std::vector<double> v(64);
  for (int j = 0; j < 8; ++j) {
    for (int i = 0; i < 8; ++i) v[j * 8 + i] = ((i + j) % 2 == 0) ? 1.0 : -1.0;
  }
  const Field2D f(8, 8, v);
  const Field2D lf = Laplacian(f, g);
  for (std::size_t k = 0; k < f.size(); ++k) {
    EXPECT_EQ(lf.values()[k], -32.0 * f.values()[k]);
  }
}

TEST(LaplacianTest, LinearZeroSumSelfAdjoint) {
  const GridSpec g = Grid(20, 14);
  const Field2D f = RandomField(14, 20, 1);
  const Field2D h = RandomField(14, 20, 2);
  const double a = 1.7, b = -0.3;
  std::vector<double> comb(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    comb[k] = a * f.values()[k] + b * h.values()[k];
  }
  const Field2D lc = Laplacian(Field2D(14, 20, comb), g);
  const Field2D lf = Laplacian(f, g);
  const Field2D lh = Laplacian(h, g);
  for (std::size_t k = 0; k < f.size(); ++k) {
    EXPECT_NEAR(lc.values()[k], a * lf.values()[k] + b * lh.values()[k], 1e-12);
  }

  double sum = 0.0, scale = 0.0;
  for (double x : lf.values()) {
    sum += x;
    scale += std::fabs(x);
  }
  EXPECT_LE(std::fabs(sum), 1e-12 * scale);

  const double lhs = Dot(lf, h);
  const double rhs = Dot(f, lh);
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::fabs(lhs));
}

TEST(LaplacianTest, MatchesPaddedReference) {
  const GridSpec g = Grid(33, 17, 0.37);
  const Field2D f = RandomField(17, 33, 3);
  EXPECT_LE(MaxAbsDiff(Laplacian(f, g), LaplacianPadded(f, g)),
            1e-13 * MaxAbs(Laplacian(f, g)));
}

TEST(LaplacianTest, ConstantHasZeroLaplacian) {
  const GridSpec g = Grid(9, 7);
  EXPECT_EQ(MaxAbs(Laplacian(Field2D::Filled(7, 9, 3.25), g)), 0.0);
}

TEST(LaplacianTest, SpectralRadiusByPowerIteration) {
  const GridSpec g = Grid(16, 16);
  Field2D v = RandomField(16, 16, 7);
  double rayleigh = 0.0;
  for (int it = 0; it < 3000; ++it) {
    Field2D w = Laplacian(v, g);
    const double norm = std::sqrt(Dot(w, w));
    rayleigh = Dot(v, w) / Dot(v, v);
    std::vector<double> next(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) next[k] = w.values()[k] / norm;
    v = Field2D(16, 16, next);
  }
  EXPECT_NEAR(-rayleigh, LambdaMax(g.dx, g.dy), 1e-6);
  EXPECT_DOUBLE_EQ(LambdaMax(0.5, 0.5), 32.0);
}

TEST(StabilityTest, VonNeumannTableRows) {
  const GridSpec g = Grid(128, 128);
  const StabilityReport coarse = ComputeStability(1.7, 0.25, g);
  EXPECT_NEAR(coarse.sigma, 13.6, 1e-12);
  EXPECT_NEAR(coarse.alpha_max, 0.25, 1e-12);
  EXPECT_NEAR(coarse.mu_x, 1.7, 1e-12);
  EXPECT_FALSE(coarse.stable);
  const StabilityReport fine = ComputeStability(1.7, 0.005, g);
  EXPECT_NEAR(fine.sigma, 0.272, 1e-12);
  EXPECT_NEAR(fine.alpha_max, 12.5, 1e-12);
  EXPECT_NEAR(fine.mu_x, 0.034, 1e-12);
  EXPECT_TRUE(fine.stable);
}

TEST(StabilityTest, BoundaryIsUnstable) {
  const StabilityReport s = ComputeStability(1.0, 0.0625, Grid(8, 8));
  EXPECT_EQ(s.sigma, 2.0);
  EXPECT_FALSE(s.stable);
}

TEST(StabilityTest, VanishingStepIsStable) {
  const StabilityReport s = ComputeStability(1.7, 1e-12, Grid(8, 8));
  EXPECT_LT(s.sigma, 1e-9);
  EXPECT_TRUE(s.stable);
}

TEST(StabilityTest, RejectsNonPositiveInputs) {
  EXPECT_THROW(ComputeStability(0.0, 0.1, Grid(8, 8)), DomainError);
  EXPECT_THROW(ComputeStability(1.0, -0.1, Grid(8, 8)), DomainError);
  EXPECT_THROW(AmplificationFactor(8, 0, 1.0, 0.1, Grid(8, 8)), DomainError);
}

// Every mode of an 8x8 grid: one Euler step scales the mode by the
// amplification factor.
TEST(AmplificationTest, ExhaustiveEightByEight) {
  const GridSpec g = Grid(8, 8);
  for (double alpha : {0.3, 1.7}) {
    for (double dt : {0.005, 0.1}) {
      for (int kx = 0; kx < 8; ++kx) {
        for (int ky = 0; ky < 8; ++ky) {
          const Field2D u = CosineMode(8, 8, kx, ky);
          std::vector<double> out(u.size());
          EulerStepInto(u.values(), out, alpha * dt, 8, 8, g.dx, g.dy);
          const double mux = alpha * dt / (g.dx * g.dx);
          const double sx = std::sin(std::numbers::pi * kx / 8.0);
          const double sy = std::sin(std::numbers::pi * ky / 8.0);
          const double oracle = 1.0 - 4.0 * mux * sx * sx - 4.0 * mux * sy * sy;
          const double g_factor = AmplificationFactor(kx, ky, alpha, dt, g);
          EXPECT_NEAR(g_factor, oracle, 1e-14);
          for (std::size_t k = 0; k < u.size(); ++k) {
            EXPECT_NEAR(out[k], oracle * u.values()[k], 1e-12);
          }
        }
      }
    }
  }
}

TEST(AmplificationTest, NyquistFactorIsOneMinusSigma) {
  const GridSpec g = Grid(8, 8);
  const double alpha = 1.7, dt = 0.25;
  const double sigma = ComputeStability(alpha, dt, g).sigma;
  EXPECT_NEAR(AmplificationFactor(4, 4, alpha, dt, g), 1.0 - sigma, 1e-12);
}

}  // namespace
}  // namespace diffrec
