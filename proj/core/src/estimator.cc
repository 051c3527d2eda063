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

#include <cmath>
#include <limits>
#include <string>

#include "diffrec/adam.h"
#include "diffrec/errors.h"
#include "diffrec/parallel.h"
#include "diffrec/rng.h"

namespace diffrec {

void EstimatorConfig::Validate() const {
  if (d_model < 2 || d_model % 2 != 0) {
    throw ConfigurationError("d_model must be even and >= 2");
  }
  if (n_heads < 1 || d_model % n_heads != 0) {
    throw ConfigurationError("d_model must be divisible by n_heads");
  }
  if (pooled_size < 1) throw ConfigurationError("pooled_size must be >= 1");
  if (mlp_hidden < 1) throw ConfigurationError("mlp_hidden must be >= 1");
}

void EstimatorConfig::ValidateFor(int nx, int ny) const {
  Validate();
  if (pooled_size > nx || pooled_size > ny) {
    throw ConfigurationError("pooled_size exceeds the frame size");
  }
}

namespace {

ad::Tensor UniformTensor(int rows, int cols, int fan_in, SplitMix64& rng) {
  ad::Tensor t(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.Uniform(-bound, bound);
  return t;
}

}  // namespace

EstimatorParams EstimatorParams::Init(const EstimatorConfig& config,
                                      double alpha_init) {
  config.Validate();
  if (!(alpha_init > 0.0)) throw DomainError("alpha_init must be positive");
  SplitMix64 rng(config.seed);
  const int d = config.d_model;
  const int h = d / 2;
  EstimatorParams p;
  p.conv1_w = UniformTensor(h, 9, 9, rng);
  p.conv1_b = UniformTensor(h, 1, 9, rng);
  p.conv2_w = UniformTensor(d, h * 9, h * 9, rng);
  p.conv2_b = UniformTensor(d, 1, h * 9, rng);
  p.wq = UniformTensor(d, d, d, rng);
  p.bq = UniformTensor(1, d, d, rng);
  p.wk = UniformTensor(d, d, d, rng);
  p.bk = UniformTensor(1, d, d, rng);
  p.wv = UniformTensor(d, d, d, rng);
  p.bv = UniformTensor(1, d, d, rng);
  p.wo = UniformTensor(d, d, d, rng);
  p.bo = UniformTensor(1, d, d, rng);
  p.ln_gamma = ad::Tensor(1, d, std::vector<double>(d, 1.0));
  p.ln_beta = ad::Tensor(1, d);
  p.mlp1_w = UniformTensor(d, config.mlp_hidden, d, rng);
  p.mlp1_b = UniformTensor(1, config.mlp_hidden, d, rng);
  p.mlp2_w = UniformTensor(config.mlp_hidden, 1, config.mlp_hidden, rng);
  p.mlp2_b = ad::Tensor(1, 1, {SoftplusInverse(alpha_init)});
  return p;
}

std::vector<ad::Tensor*> EstimatorParams::All() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &wq,     &bq,
          &wk,      &bk,      &wv,      &bv,      &wo,     &bo,
          &ln_gamma, &ln_beta, &mlp1_w, &mlp1_b,  &mlp2_w, &mlp2_b};
}

std::vector<const ad::Tensor*> EstimatorParams::All() const {
  auto all = const_cast<EstimatorParams*>(this)->All();
  return {all.begin(), all.end()};
}

std::size_t EstimatorParams::Count() const {
  std::size_t n = 0;
  for (const ad::Tensor* t : All()) n += t->size();
  return n;
}

std::vector<double> EstimatorParams::Flatten() const {
  std::vector<double> flat;
  flat.reserve(Count());
  for (const ad::Tensor* t : All()) flat.insert(flat.end(), t->data.begin(), t->data.end());
  return flat;
}

void EstimatorParams::Unflatten(std::span<const double> flat) {
  if (flat.size() != Count()) {
    throw InvalidInput("flat parameter vector has the wrong length");
  }
  std::size_t off = 0;
  for (ad::Tensor* t : All()) {
    std::copy(flat.begin() + off, flat.begin() + off + t->size(), t->data.begin());
    off += t->size();
  }
}

ad::Tensor AdaptivePool(const Field2D& frame, int pooled) {
  const int ny = frame.ny();
  const int nx = frame.nx();
  ad::Tensor out(1, pooled * pooled);
  for (int a = 0; a < pooled; ++a) {
    const int y0 = a * ny / pooled;
    const int y1 = ((a + 1) * ny + pooled - 1) / pooled;
    for (int b = 0; b < pooled; ++b) {
      const int x0 = b * nx / pooled;
      const int x1 = ((b + 1) * nx + pooled - 1) / pooled;
      double s = 0.0;
      for (int j = y0; j < y1; ++j) {
        for (int i = x0; i < x1; ++i) s += frame(j, i);
      }
      out.data[static_cast<std::size_t>(a) * pooled + b] =
          s / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

namespace {

void CheckFinite(const ad::Tape& tape, ad::Var v, const char* layer) {
  for (double x : tape.value(v).data) {
    if (!std::isfinite(x)) {
      throw NumericalError(std::string("non-finite activation in estimator layer '") +
                           layer + "'");
    }
  }
}

}  // namespace

EstimatorPass::EstimatorPass(std::span<const ad::Tensor> pooled_frames,
                             const EstimatorParams& params,
                             const EstimatorConfig& config)
    : tape_(std::make_unique<ad::Tape>()) {
  config.Validate();
  if (pooled_frames.size() < 2) throw InvalidInput("estimator needs at least 2 frames");
  ad::Tape& t = *tape_;
  for (const ad::Tensor* p : params.All()) {
    for (double x : p->data) {
      if (!std::isfinite(x)) throw DomainError("estimator parameters must be finite");
    }
    param_vars_.push_back(t.Leaf(*p));
  }
  enum { kC1w, kC1b, kC2w, kC2b, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo,
         kGamma, kBeta, kM1w, kM1b, kM2w, kM2b };
  const auto P = [&](int k) { return param_vars_[k]; };

  const int ps = config.pooled_size;
  const int d = config.d_model;
  const int dh = d / config.n_heads;

  std::vector<ad::Var> features;
  features.reserve(pooled_frames.size());
  for (const ad::Tensor& frame : pooled_frames) {
    if (frame.size() != static_cast<std::size_t>(ps) * ps) {
      throw InvalidInput("pooled frame has the wrong size");
    }
    ad::Var x = t.Leaf(frame);
    ad::Var c1 = ad::Conv3x3Circular(t, x, P(kC1w), P(kC1b), ps, ps);
    c1 = ad::LayerNormColumns(t, c1);
    CheckFinite(t, c1, "conv1");
    c1 = ad::Relu(t, c1);
    ad::Var c2 = ad::Conv3x3Circular(t, c1, P(kC2w), P(kC2b), ps, ps);
    c2 = ad::LayerNormColumns(t, c2);
    CheckFinite(t, c2, "conv2");
    c2 = ad::Relu(t, c2);
    features.push_back(ad::MeanCols(t, c2));
  }
  ad::Var z = ad::StackRows(t, features);  // T x d

  ad::Var q = ad::AddRowBias(t, ad::MatMul(t, z, P(kWq)), P(kBq));
  ad::Var k = ad::AddRowBias(t, ad::MatMul(t, z, P(kWk)), P(kBk));
  ad::Var v = ad::AddRowBias(t, ad::MatMul(t, z, P(kWv)), P(kBv));
  std::vector<ad::Var> heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < config.n_heads; ++h) {
    ad::Var qh = ad::SliceCols(t, q, h * dh, (h + 1) * dh);
    ad::Var kh = ad::SliceCols(t, k, h * dh, (h + 1) * dh);
    ad::Var vh = ad::SliceCols(t, v, h * dh, (h + 1) * dh);
    ad::Var scores = ad::Scale(t, ad::MatMul(t, qh, ad::Transpose(t, kh)), inv_sqrt);
    ad::Var weights = ad::SoftmaxRows(t, scores);
    attention_vars_.push_back(weights);
    heads.push_back(ad::MatMul(t, weights, vh));
  }
  ad::Var attn = ad::AddRowBias(t, ad::MatMul(t, ad::ConcatCols(t, heads), P(kWo)), P(kBo));
  CheckFinite(t, attn, "attention");
  ad::Var hidden = ad::LayerNormRows(t, ad::Add(t, z, attn), P(kGamma), P(kBeta));
  CheckFinite(t, hidden, "layer_norm");
  ad::Var pooled = ad::MeanRows(t, hidden);
  ad::Var m1 = ad::Relu(t, ad::AddRowBias(t, ad::MatMul(t, pooled, P(kM1w)), P(kM1b)));
  logit_ = ad::AddRowBias(t, ad::MatMul(t, m1, P(kM2w)), P(kM2b));
  CheckFinite(t, logit_, "mlp");
  alpha_ = ad::Softplus(t, logit_);
}

double EstimatorPass::alpha_hat() const { return tape_->value(alpha_).data[0]; }

double EstimatorPass::logit() const { return tape_->value(logit_).data[0]; }

std::vector<ad::Tensor> EstimatorPass::AttentionWeights() const {
  std::vector<ad::Tensor> out;
  for (ad::Var v : attention_vars_) out.push_back(tape_->value(v));
  return out;
}

std::vector<double> EstimatorPass::ParamGradient(double dloss_dalpha) {
  tape_->Backward(alpha_, dloss_dalpha);
  std::vector<double> flat;
  for (ad::Var v : param_vars_) {
    const auto& g = tape_->grad(v);
    flat.insert(flat.end(), g.begin(), g.end());
  }
  return flat;
}

EstimatorPass EstimatorForward(std::span<const Field2D> frames,
                               const EstimatorParams& params,
                               const EstimatorConfig& config) {
  if (frames.empty()) throw InvalidInput("estimator needs frames");
  config.ValidateFor(frames[0].nx(), frames[0].ny());
  std::vector<ad::Tensor> pooled;
  pooled.reserve(frames.size());
  for (const Field2D& f : frames) pooled.push_back(AdaptivePool(f, config.pooled_size));
  return EstimatorPass(pooled, params, config);
}

RecoveryResult TrainEstimatorTtt(const SimulationRecord& record,
                                 const SafeConfig& safe_config,
                                 const EstimatorConfig& est_config,
                                 const TttConfig& ttt) {
  ttt.Validate();
  CheckGridMatch(record, safe_config);
  const std::span<const Field2D> frames(record.frames);
  if (frames.size() < 2) throw InvalidInput("recovery needs at least 2 frames");
  CheckIdentifiable(frames, ttt.pair_stride);
  est_config.ValidateFor(frames[0].nx(), frames[0].ny());

  std::vector<ad::Tensor> pooled;
  pooled.reserve(frames.size());
  for (const Field2D& f : frames) pooled.push_back(AdaptivePool(f, est_config.pooled_size));

  EstimatorParams params = EstimatorParams::Init(est_config, ttt.alpha_init);
  std::vector<double> flat = params.Flatten();
  Adam adam(flat.size(), AdamOptions{ttt.learning_rate, ttt.adam_beta1,
                                     ttt.adam_beta2, ttt.adam_eps});
  ConvergenceMonitor monitor(ttt.rel_tolerance, ttt.patience);

  RecoveryResult res;
  double alpha = 0.0;
  double last_loss = std::numeric_limits<double>::infinity();
  for (int step = 0; step < ttt.max_steps; ++step) {
    params.Unflatten(flat);
    EstimatorPass pass(pooled, params, est_config);
    alpha = pass.alpha_hat();
    const LossReport rep = PerPairNormMode(
        SafeLoss(frames, alpha, safe_config, {}, ttt.pair_stride, ttt.jobs),
        ttt.norm);
    res.steps_taken = step + 1;
    res.alpha_trace.push_back(alpha);
    res.loss_trace.push_back(rep.safe_loss);

    if (!rep.grad_valid || !std::isfinite(rep.safe_loss)) {
      // Shift the output bias so the network emits alpha / 2, then restart
      // the optimizer from there.
      ++res.rejected_steps;
      flat.back() += SoftplusInverse(alpha * 0.5) - pass.logit();
      adam.Reset();
      continue;
    }
    last_loss = rep.safe_loss;
    if (monitor.Update(rep.safe_loss)) {
      res.converged = true;
      break;
    }
    const std::vector<double> grad = pass.ParamGradient(rep.safe_loss_grad_alpha);
    adam.Step(flat, grad);
  }
  res.alpha_hat = alpha;
  res.final_safe_loss = last_loss;
  return res;
}

CorpusMetrics EvaluateCorpusEstimator(std::span<const SimulationRecord> records,
                                      const SafeConfig& safe_config,
                                      const EstimatorConfig& est_config,
                                      const TttConfig& ttt, int jobs) {
  if (records.empty()) throw InvalidInput("evaluation needs a non-empty set");
  ttt.Validate();
  est_config.Validate();
  std::vector<SimOutcome> outcomes(records.size());
  ParallelFor(records.size(), jobs, [&](std::size_t i) {
    const SimulationRecord& rec = records[i];
    SimOutcome& o = outcomes[i];
    o.sim_id = rec.sim_id;
    o.alpha_true = rec.alpha_true;
    try {
      const RecoveryResult r = TrainEstimatorTtt(rec, safe_config, est_config, ttt);
      o.alpha_hat = r.alpha_hat;
      o.final_safe_loss =
          ttt.norm == NormMode::kMean
              ? r.final_safe_loss * static_cast<double>(rec.frames[0].size())
              : r.final_safe_loss;
      o.steps_taken = r.steps_taken;
      o.converged = r.converged;
    } catch (const Error& e) {
      o.alpha_hat = std::numeric_limits<double>::quiet_NaN();
      o.final_safe_loss = std::numeric_limits<double>::quiet_NaN();
      o.error = "sim " + std::to_string(rec.sim_id) + ": " + e.what();
    }
  });
  return SummarizeOutcomes(std::move(outcomes), records.front().frames.empty()
                                                    ? 0
                                                    : records.front().frames[0].size());
}

}  // namespace diffrec
