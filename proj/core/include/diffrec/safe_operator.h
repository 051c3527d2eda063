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
#ifndef DIFFREC_SAFE_OPERATOR_H_
#define DIFFREC_SAFE_OPERATOR_H_

#include <span>
#include <vector>

#include "diffrec/field.h"

namespace diffrec {

// Frozen sub-stepped explicit Euler propagator. Each saved-frame interval
// dt_save is covered by n_sub steps of dt_sub = dt_save / n_sub.
class SafeConfig {
 public:
  SafeConfig(int n_sub, double dt_save, const GridSpec& grid);

  // Sub-step count n_sub over the grid's own dt_save.
  static SafeConfig ForGrid(const GridSpec& grid, int n_sub);

  int n_sub() const { return n_sub_; }
  double dt_save() const { return dt_save_; }
  double dt_sub() const { return dt_sub_; }
  const GridSpec& grid() const { return grid_; }

 private:
  int n_sub_;
  double dt_save_;
  double dt_sub_;
  GridSpec grid_;
};

struct PropagationResult {
  Field2D predicted;    // F_t advanced by dt_save
  Field2D sensitivity;  // d predicted / d alpha; empty unless requested
  bool diverged = false;
};

// Advances `f` by n_sub sub-steps. With `with_sensitivity` the tangent
// S = d F / d alpha is co-iterated:
//   S <- S + dt_sub * (Lap(F) + alpha * Lap(S)),  S(0) = 0.
// A non-finite intermediate stops the iteration and sets `diverged`; the
// returned fields are then left empty.
PropagationResult Propagate(const Field2D& f, double alpha,
                            const SafeConfig& config, bool with_sensitivity);

enum class NormMode { kSum, kMean };

struct LossWeights {
  double safe = 100.0;
  double recon = 1.0;
};

struct LossReport {
  double safe_loss = 0.0;
  double safe_loss_grad_alpha = 0.0;
  bool grad_valid = true;
  double recon_loss = 0.0;
  double weighted_total = 0.0;
  int n_pairs = 0;
  std::size_t n_pixels = 0;
  NormMode norm = NormMode::kSum;
  LossWeights weights;
};

// Mean over frame pairs of the squared prediction mismatch
//   || Propagate(F_t) - F_{t+1} ||^2
// (sum over pixels) together with its alpha-derivative. Only pairs whose
// source index is a multiple of `pair_stride` are used. Frames are taken
// as the latent fields directly, so the reconstruction term is zero.
// Divergence in any pair yields an infinite loss with grad_valid = false.
LossReport SafeLoss(std::span<const Field2D> frames, double alpha,
                    const SafeConfig& config, LossWeights weights = {},
                    int pair_stride = 1, int jobs = 1);

// Rescales between the sum-over-pixels and mean-over-pixels conventions.
LossReport PerPairNormMode(const LossReport& loss, NormMode mode);

}  // namespace diffrec

#endif  // DIFFREC_SAFE_OPERATOR_H_
