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
#include <string>

#include "diffrec/errors.h"
#include "stencil.h"

namespace diffrec {

void GridSpec::Validate() const {
  if (nx < 3 || ny < 3) {
    throw InvalidGridError("grid must be at least 3x3, got " +
                           std::to_string(ny) + "x" + std::to_string(nx));
  }
  if (!(dx > 0.0) || !(dy > 0.0)) {
    throw DomainError("grid spacing must be positive");
  }
  if (!(dt_sim > 0.0)) throw DomainError("dt_sim must be positive");
  if (save_interval < 1) throw DomainError("save_interval must be >= 1");
}

Field2D::Field2D(int ny, int nx, std::vector<double> data)
    : ny_(ny), nx_(nx), data_(std::move(data)) {
  if (ny < 0 || nx < 0 ||
      data_.size() != static_cast<std::size_t>(ny) * static_cast<std::size_t>(nx)) {
    throw InvalidGridError("field data length does not match " +
                           std::to_string(ny) + "x" + std::to_string(nx));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw DomainError("field contains non-finite value");
  }
}

Field2D Field2D::Filled(int ny, int nx, double value) {
  return Field2D(ny, nx,
                 std::vector<double>(static_cast<std::size_t>(ny) * nx, value));
}

double Field2D::Mean() const {
  if (data_.empty()) return 0.0;
  double s = 0.0;
  for (double v : data_) s += v;
  return s / static_cast<double>(data_.size());
}

double Field2D::Variance() const {
  if (data_.empty()) return 0.0;
  const double m = Mean();
  double s = 0.0;
  for (double v : data_) s += (v - m) * (v - m);
  return s / static_cast<double>(data_.size());
}

double LambdaMax(double dx, double dy) {
  return 4.0 / (dx * dx) + 4.0 / (dy * dy);
}

void LaplacianInto(std::span<const double> in, std::span<double> out, int ny,
                   int nx, double dx, double dy) {
  const double scale = 1.0 / (dx * dy);
  double* o = out.data();
  internal::ForEachStencil(
      in.data(), ny, nx,
      [&](std::size_t k, const double* up, const double* row,
          const double* down, int i, int im1, int ip1) {
        o[k] = internal::FivePoint(up, row, down, i, im1, ip1) * scale;
      });
}

void EulerStepInto(std::span<const double> in, std::span<double> out,
                   double coeff, int ny, int nx, double dx, double dy) {
  const double scale = 1.0 / (dx * dy);
  double* o = out.data();
  internal::ForEachStencil(
      in.data(), ny, nx,
      [&](std::size_t k, const double* up, const double* row,
          const double* down, int i, int im1, int ip1) {
        o[k] = row[i] +
               coeff * (internal::FivePoint(up, row, down, i, im1, ip1) * scale);
      });
}

namespace {

void CheckStencilShape(const Field2D& f) {
  if (f.nx() < 3 || f.ny() < 3) {
    throw InvalidGridError("five-point stencil needs at least 3x3, got " +
                           std::to_string(f.ny()) + "x" +
                           std::to_string(f.nx()));
  }
}

}  // namespace

Field2D Laplacian(const Field2D& f, const GridSpec& grid) {
  CheckStencilShape(f);
  std::vector<double> out(f.size());
  LaplacianInto(f.values(), out, f.ny(), f.nx(), grid.dx, grid.dy);
  return Field2D(f.ny(), f.nx(), std::move(out));
}

Field2D LaplacianPadded(const Field2D& f, const GridSpec& grid) {
  CheckStencilShape(f);
  const int ny = f.ny();
  const int nx = f.nx();
  const int pw = nx + 2;
  std::vector<double> padded(static_cast<std::size_t>(ny + 2) * pw);
  for (int j = -1; j <= ny; ++j) {
    for (int i = -1; i <= nx; ++i) {
      const int sj = (j + ny) % ny;
      const int si = (i + nx) % nx;
      padded[static_cast<std::size_t>(j + 1) * pw + (i + 1)] = f(sj, si);
    }
  }
  auto at = [&](int j, int i) {
    return padded[static_cast<std::size_t>(j + 1) * pw + (i + 1)];
  };
  std::vector<double> out(f.size());
  const double scale = 1.0 / (grid.dx * grid.dy);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      out[static_cast<std::size_t>(j) * nx + i] =
          (at(j, i + 1) + at(j, i - 1) - 4.0 * at(j, i) + at(j - 1, i) +
           at(j + 1, i)) * scale;
    }
  }
  return Field2D(ny, nx, std::move(out));
}

StabilityReport ComputeStability(double alpha, double dt,
                                 const GridSpec& grid) {
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  if (!(grid.dx > 0.0) || !(grid.dy > 0.0)) {
    throw DomainError("grid spacing must be positive");
  }
  StabilityReport r;
  r.lambda_max = LambdaMax(grid.dx, grid.dy);
  r.sigma = dt * alpha * r.lambda_max;
  r.mu_x = alpha * dt / (grid.dx * grid.dx);
  r.mu_y = alpha * dt / (grid.dy * grid.dy);
  r.alpha_max = 2.0 / (dt * r.lambda_max);
  r.stable = r.sigma < 2.0;
  return r;
}

double AmplificationFactor(int kx_index, int ky_index, double alpha,
                           double dt, const GridSpec& grid) {
  if (kx_index < 0 || kx_index >= grid.nx || ky_index < 0 ||
      ky_index >= grid.ny) {
    throw DomainError("wavenumber index out of range");
  }
  const double mu_x = alpha * dt / (grid.dx * grid.dx);
  const double mu_y = alpha * dt / (grid.dy * grid.dy);
  const double sx = std::sin(std::numbers::pi * kx_index / grid.nx);
  const double sy = std::sin(std::numbers::pi * ky_index / grid.ny);
  return 1.0 - 4.0 * mu_x * sx * sx - 4.0 * mu_y * sy * sy;
}

}  // namespace diffrec
