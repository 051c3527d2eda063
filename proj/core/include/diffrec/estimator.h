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
#ifndef DIFFREC_ESTIMATOR_H_
#define DIFFREC_ESTIMATOR_H_

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "diffrec/datagen.h"
#include "diffrec/field.h"
#include "diffrec/recovery.h"
#include "diffrec/safe_operator.h"
#include "diffrec/tape.h"

namespace diffrec {

struct EstimatorConfig {
  int d_model = 32;
  int n_heads = 4;
  int pooled_size = 4;
  int mlp_hidden = 32;
  std::uint64_t seed = 0;

  void Validate() const;
  void ValidateFor(int nx, int ny) const;
};

// Learnable weights of the attention estimator:
//   per frame: adaptive pool -> conv(1 -> d/2) -> norm -> relu
//              -> conv(d/2 -> d) -> norm -> relu -> global average
//   sequence:  multi-head self-attention + residual + layer norm
//              -> mean over time -> dense -> relu -> dense -> softplus
struct EstimatorParams {
  ad::Tensor conv1_w, conv1_b;
  ad::Tensor conv2_w, conv2_b;
  ad::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  ad::Tensor ln_gamma, ln_beta;
  ad::Tensor mlp1_w, mlp1_b;
  ad::Tensor mlp2_w, mlp2_b;

  // Uniform(+-1/sqrt(fan_in)) weights; the final bias is chosen so that
  // softplus(bias) = alpha_init.
  static EstimatorParams Init(const EstimatorConfig& config, double alpha_init);

  std::vector<ad::Tensor*> All();
  std::vector<const ad::Tensor*> All() const;
  std::size_t Count() const;
  std::vector<double> Flatten() const;
  void Unflatten(std::span<const double> flat);
};

// Adaptive average pooling of one frame to pooled x pooled; pooling window
// i spans [floor(i n / p), ceil((i + 1) n / p)).
ad::Tensor AdaptivePool(const Field2D& frame, int pooled);

// One forward pass with its gradient record.
class EstimatorPass {
 public:
  EstimatorPass(std::span<const ad::Tensor> pooled_frames,
                const EstimatorParams& params, const EstimatorConfig& config);

  double alpha_hat() const;
  // Pre-softplus output of the final dense layer.
  double logit() const;
  // Attention weights, one T x T matrix per head.
  std::vector<ad::Tensor> AttentionWeights() const;

  // Gradient of a downstream loss with respect to every parameter, in the
  // order of EstimatorParams::Flatten, given dloss/dalpha_hat.
  std::vector<double> ParamGradient(double dloss_dalpha);

 private:
  std::unique_ptr<ad::Tape> tape_;
  std::vector<ad::Var> param_vars_;
  std::vector<ad::Var> attention_vars_;
  ad::Var logit_;
  ad::Var alpha_;
};

// Convenience wrapper: pools `frames` and runs a forward pass.
EstimatorPass EstimatorForward(std::span<const Field2D> frames,
                               const EstimatorParams& params,
                               const EstimatorConfig& config);

// Test-time training of the estimator weights on the SAFE loss alone.
// The learning rate, Adam constants, stopping rule and pair stride come
// from `ttt`; alpha_init sets the initial output bias.
RecoveryResult TrainEstimatorTtt(const SimulationRecord& record,
                                 const SafeConfig& safe_config,
                                 const EstimatorConfig& est_config,
                                 const TttConfig& ttt);

// EvaluateCorpus counterpart: fresh weights from `est_config` per record.
CorpusMetrics EvaluateCorpusEstimator(std::span<const SimulationRecord> records,
                                      const SafeConfig& safe_config,
                                      const EstimatorConfig& est_config,
                                      const TttConfig& ttt, int jobs = 1);

}  // namespace diffrec

#endif  // DIFFREC_ESTIMATOR_H_
