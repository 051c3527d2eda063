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
#ifndef DIFFREC_RECOVERY_H_
#define DIFFREC_RECOVERY_H_

#include <span>
#include <string>
#include <vector>

#include "diffrec/datagen.h"
#include "diffrec/safe_operator.h"

namespace diffrec {

enum class Reparam { kSoftplus, kClamp };

// Test-time optimization settings. Stopping fires once the best loss has
// improved by less than rel_tolerance (relative) for `patience`
// consecutive steps, or at max_steps.
struct TttConfig {
  // Scalar-path rate. One scalar parameter moves about learning_rate per
  // Adam step, so 1e-3 cannot travel from alpha 0.1 to 1.7 within the cap.
  double learning_rate = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double rel_tolerance = 1e-6;
  int patience = 50;
  int max_steps = 2000;
  double alpha_init = 0.1;
  Reparam reparam = Reparam::kSoftplus;
  int pair_stride = 1;               // use every pair_stride-th frame pair
  NormMode norm = NormMode::kSum;    // loss convention seen by the optimizer
  int jobs = 1;                      // threads for frame pairs

  void Validate() const;

  // Defaults for the attention-estimator path (learning rate 1e-3).
  static TttConfig ForEstimator();
};

struct RecoveryResult {
  double alpha_hat = 0.0;
  double final_safe_loss = 0.0;  // at alpha_hat, in the configured norm
  int steps_taken = 0;
  bool converged = false;
  int rejected_steps = 0;        // non-finite evaluations that halved alpha
  std::vector<double> loss_trace;
  std::vector<double> alpha_trace;
};

// Stable softplus and its inverse; alpha = Softplus(theta) > 0.
double Softplus(double theta);
double SoftplusInverse(double alpha);
double Sigmoid(double theta);

// Maps between the unconstrained parameter and alpha for either mode.
double AlphaFromParam(double theta, Reparam mode);
double ParamFromAlpha(double alpha, Reparam mode);
double AlphaParamDerivative(double theta, Reparam mode);

// Relative-improvement stopping rule. A step counts as stalled when
// (previous - loss) / previous < rel_tolerance, which includes any step on
// which the loss rises.
class ConvergenceMonitor {
 public:
  ConvergenceMonitor(double rel_tolerance, int patience)
      : rel_tolerance_(rel_tolerance), patience_(patience) {}

  // Feeds one loss value; returns true once the rule fires.
  bool Update(double loss);
  int stalled() const { return stalled_; }

 private:
  double rel_tolerance_;
  int patience_;
  double previous_ = 0.0;
  bool has_previous_ = false;
  int stalled_ = 0;
};

// Recovers alpha from a single record by Adam on the SAFE loss alone.
RecoveryResult RecoverAlpha(const SimulationRecord& record,
                            const SafeConfig& safe_config,
                            const TttConfig& ttt);

// Same, over a bare frame sequence.
RecoveryResult RecoverAlpha(std::span<const Field2D> frames,
                            const SafeConfig& safe_config,
                            const TttConfig& ttt);

// Throws UnidentifiableError if every source frame used by the loss is
// spatially constant.
void CheckIdentifiable(std::span<const Field2D> frames, int pair_stride);

// Throws InvalidGridError unless the record grid matches the operator grid.
void CheckGridMatch(const SimulationRecord& record, const SafeConfig& config);

struct SimOutcome {
  int sim_id = 0;
  double alpha_true = 0.0;
  double alpha_hat = 0.0;
  double final_safe_loss = 0.0;
  int steps_taken = 0;
  bool converged = false;
  std::string error;  // non-empty when recovery threw
};

struct CorpusMetrics {
  double mae = 0.0;
  double r2 = 0.0;       // NaN when undefined (n < 2 or constant truth)
  bool r2_defined = false;
  int n = 0;             // records with a usable estimate
  int n_failed = 0;
  double mean_final_safe_loss = 0.0;       // in the sum-over-pixels convention
  double mean_final_safe_loss_mean = 0.0;  // in the mean-over-pixels convention
  std::vector<SimOutcome> per_sim;
};

// Aggregates per-record outcomes into MAE and R^2. Failed records stay in
// per_sim but are excluded from the statistics.
CorpusMetrics SummarizeOutcomes(std::vector<SimOutcome> outcomes,
                                std::size_t n_pixels);

// Independent recovery per record with fresh optimizer state. `jobs`
// parallelizes over records.
CorpusMetrics EvaluateCorpus(std::span<const SimulationRecord> records,
                             const SafeConfig& safe_config,
                             const TttConfig& ttt, int jobs = 1);

struct AblationRow {
  int n_sub = 0;
  double dt_sub = 0.0;
  CorpusMetrics metrics;
  StabilityReport stability;  // at alpha_reference and dt_sub
};

// One EvaluateCorpus per sub-step count, with analytic stability columns
// evaluated at `alpha_reference` (the largest alpha in the data range).
std::vector<AblationRow> AblateNsub(std::span<const SimulationRecord> records,
                                    std::span<const int> nsub_values,
                                    const TttConfig& ttt,
                                    double alpha_reference, int jobs = 1);

// Stability-only part of the ablation table, no recovery runs.
std::vector<AblationRow> StabilityColumns(const GridSpec& grid,
                                          std::span<const int> nsub_values,
                                          double alpha_reference);

}  // namespace diffrec

#endif  // DIFFREC_RECOVERY_H_
