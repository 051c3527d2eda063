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

#ifndef DIFFREC_FIELD_H_
#define DIFFREC_FIELD_H_

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace diffrec {

// Spatial and temporal discretization of a periodic 2-D grid.
struct GridSpec {
  int nx = 128;
  int ny = 128;
  double dx = 0.5;
  double dy = 0.5;
  double dt_sim = 0.005;
  int save_interval = 50;

  double dt_save() const { return save_interval * dt_sim; }
  std::size_t size() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  }

  // Throws InvalidGridError / DomainError on violated invariants.
  void Validate() const;
};

// Periodic ny x nx scalar field stored row-major with x fastest. Values are
// finite on construction and the field is immutable afterwards.
class Field2D {
 public:
  Field2D() = default;
  Field2D(int ny, int nx, std::vector<double> data);

  // Constant-valued field.
  static Field2D Filled(int ny, int nx, double value);

  int ny() const { return ny_; }
  int nx() const { return nx_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(int j, int i) const {
    return data_[static_cast<std::size_t>(j) * nx_ + i];
  }
  std::span<const double> values() const { return data_; }

  // Moves the storage out; the field is left empty.
  std::vector<double> release() && { return std::move(data_); }

  bool SameShape(const Field2D& other) const {
    return nx_ == other.nx_ && ny_ == other.ny_;
  }

  double Mean() const;
  double Variance() const;

  friend bool operator==(const Field2D&, const Field2D&) = default;

 private:
  int ny_ = 0;
  int nx_ = 0;
  std::vector<double> data_;
};

// Von Neumann summary for explicit Euler on the five-point stencil.
struct StabilityReport {
  double lambda_max = 0.0;  // spectral radius of the discrete Laplacian
  double sigma = 0.0;       // dt * alpha * lambda_max
  double mu_x = 0.0;        // alpha * dt / dx^2
  double mu_y = 0.0;        // alpha * dt / dy^2
  double alpha_max = 0.0;   // largest stable alpha at this dt
  bool stable = false;      // sigma < 2, strictly
};

// 4/dx^2 + 4/dy^2.
double LambdaMax(double dx, double dy);

// Five-point periodic Laplacian normalized by 1/(dx*dy).
// Requires nx >= 3 and ny >= 3.
Field2D Laplacian(const Field2D& f, const GridSpec& grid);

// Allocation-free kernel: out = Laplacian(in). `out` must not alias `in`.
void LaplacianInto(std::span<const double> in, std::span<double> out, int ny,
                   int nx, double dx, double dy);

// One explicit Euler step, out = in + coeff * Laplacian(in), where coeff is
// dt * alpha. Shared by the data generator and the propagation operator so
// both produce bit-identical trajectories. `out` must not alias `in`.
void EulerStepInto(std::span<const double> in, std::span<double> out,
                   double coeff, int ny, int nx, double dx, double dy);

// Reference implementation that materializes a one-cell periodic halo.
// Kept for equivalence testing of LaplacianInto.
Field2D LaplacianPadded(const Field2D& f, const GridSpec& grid);

StabilityReport ComputeStability(double alpha, double dt,
                                 const GridSpec& grid);

// Per-mode amplification factor of one explicit Euler step,
// 1 - 4 mu_x sin^2(pi kx / nx) - 4 mu_y sin^2(pi ky / ny).
double AmplificationFactor(int kx_index, int ky_index, double alpha,
                           double dt, const GridSpec& grid);

}  // namespace diffrec

#endif  // DIFFREC_FIELD_H_
