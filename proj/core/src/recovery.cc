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
#include <string>

#include "diffrec/adam.h"
#include "diffrec/errors.h"
#include "diffrec/parallel.h"

namespace diffrec {

namespace {

constexpr double kClampFloor = 1e-12;

}  // namespace

void TttConfig::Validate() const {
  if (!(learning_rate > 0.0)) throw ConfigurationError("learning_rate must be > 0");
  if (!(rel_tolerance > 0.0 && rel_tolerance < 1.0)) {
    throw ConfigurationError("rel_tolerance must lie in (0, 1)");
  }
  if (patience < 1) throw ConfigurationError("patience must be >= 1");
  if (max_steps < 1) throw ConfigurationError("max_steps must be >= 1");
  if (!(alpha_init > 0.0)) throw DomainError("alpha_init must be positive");
  if (pair_stride < 1) throw ConfigurationError("pair_stride must be >= 1");
}

TttConfig TttConfig::ForEstimator() {
  TttConfig c;
  c.learning_rate = 1e-3;
  return c;
}

double Softplus(double theta) {
  if (theta > 30.0) return theta + std::log1p(std::exp(-theta));
  return std::log1p(std::exp(theta));
}

double SoftplusInverse(double alpha) {
  if (alpha > 30.0) return alpha + std::log(-std::expm1(-alpha));
  return std::log(std::expm1(alpha));
}

double Sigmoid(double theta) {
  if (theta >= 0.0) return 1.0 / (1.0 + std::exp(-theta));
  const double e = std::exp(theta);
  return e / (1.0 + e);
}

double AlphaFromParam(double theta, Reparam mode) {
  if (mode == Reparam::kSoftplus) {
    return std::max(Softplus(theta), std::numeric_limits<double>::min());
  }
  return std::max(theta, kClampFloor);
}

double ParamFromAlpha(double alpha, Reparam mode) {
  if (mode == Reparam::kSoftplus) return SoftplusInverse(alpha);
  return alpha;
}

double AlphaParamDerivative(double theta, Reparam mode) {
  if (mode == Reparam::kSoftplus) return Sigmoid(theta);
  // Straight-through below the floor so a pinned alpha can recover.
  return 1.0;
}

bool ConvergenceMonitor::Update(double loss) {
  if (!has_previous_) {
    previous_ = loss;
    has_previous_ = true;
    return false;
  }
  const double denom =
      std::max(std::fabs(previous_), std::numeric_limits<double>::min());
  const double improvement = (previous_ - loss) / denom;
  if (improvement < rel_tolerance_) {
    ++stalled_;
  } else {
    stalled_ = 0;
  }
  previous_ = loss;
  return stalled_ >= patience_;
}

void CheckIdentifiable(std::span<const Field2D> frames, int pair_stride) {
  for (std::size_t t = 0; t + 1 < frames.size();
       t += static_cast<std::size_t>(pair_stride)) {
    const auto v = frames[t].values();
    if (v.empty()) continue;
    const double first = v[0];
    for (double x : v) {
      if (x != first) return;
    }
  }
  throw UnidentifiableError(
      "alpha unidentifiable: every source frame is spatially constant, so the "
      "loss is the same for every alpha");
}

void CheckGridMatch(const SimulationRecord& record, const SafeConfig& config) {
  const GridSpec& a = record.config.grid;
  const GridSpec& b = config.grid();
  if (a.nx != b.nx || a.ny != b.ny || a.dx != b.dx || a.dy != b.dy) {
    throw InvalidGridError("record grid does not match operator grid");
  }
  for (const Field2D& f : record.frames) {
    if (f.nx() != b.nx || f.ny() != b.ny) {
      throw InvalidGridError("frame shape does not match operator grid");
    }
  }
}

RecoveryResult RecoverAlpha(std::span<const Field2D> frames,
                            const SafeConfig& safe_config,
                            const TttConfig& ttt) {
  ttt.Validate();
  if (frames.size() < 2) throw InvalidInput("recovery needs at least 2 frames");
  CheckIdentifiable(frames, ttt.pair_stride);

  const AdamOptions opts{ttt.learning_rate, ttt.adam_beta1, ttt.adam_beta2,
                         ttt.adam_eps};
  Adam adam(1, opts);
  double theta = ParamFromAlpha(ttt.alpha_init, ttt.reparam);
  ConvergenceMonitor monitor(ttt.rel_tolerance, ttt.patience);

  RecoveryResult res;
  res.loss_trace.reserve(static_cast<std::size_t>(ttt.max_steps));
  res.alpha_trace.reserve(static_cast<std::size_t>(ttt.max_steps));

  double alpha = AlphaFromParam(theta, ttt.reparam);
  double last_loss = std::numeric_limits<double>::infinity();
  for (int step = 0; step < ttt.max_steps; ++step) {
    alpha = AlphaFromParam(theta, ttt.reparam);
    const LossReport rep = PerPairNormMode(
        SafeLoss(frames, alpha, safe_config, {}, ttt.pair_stride, ttt.jobs),
        ttt.norm);
    res.steps_taken = step + 1;
    res.alpha_trace.push_back(alpha);
    res.loss_trace.push_back(rep.safe_loss);

    if (!rep.grad_valid || !std::isfinite(rep.safe_loss)) {
      // Unstable region: back off toward smaller alpha and restart Adam.
      ++res.rejected_steps;
      theta = ParamFromAlpha(alpha * 0.5, ttt.reparam);
      adam.Reset();
      continue;
    }
    last_loss = rep.safe_loss;
    if (monitor.Update(rep.safe_loss)) {
      res.converged = true;
      break;
    }
    const double grad_theta =
        rep.safe_loss_grad_alpha * AlphaParamDerivative(theta, ttt.reparam);
    double g[1] = {grad_theta};
    double p[1] = {theta};
    adam.Step(p, g);
    theta = p[0];
  }
  res.alpha_hat = alpha;
  res.final_safe_loss = last_loss;
  return res;
}

RecoveryResult RecoverAlpha(const SimulationRecord& record,
                            const SafeConfig& safe_config,
                            const TttConfig& ttt) {
  CheckGridMatch(record, safe_config);
  return RecoverAlpha(std::span<const Field2D>(record.frames), safe_config, ttt);
}

CorpusMetrics SummarizeOutcomes(std::vector<SimOutcome> outcomes,
                                std::size_t n_pixels) {
  CorpusMetrics m;
  m.per_sim = std::move(outcomes);
  double abs_err = 0.0;
  double mean_true = 0.0;
  double loss_sum = 0.0;
  for (const SimOutcome& o : m.per_sim) {
    if (!o.error.empty() || !std::isfinite(o.alpha_hat)) {
      ++m.n_failed;
      continue;
    }
    ++m.n;
    abs_err += std::fabs(o.alpha_hat - o.alpha_true);
    mean_true += o.alpha_true;
    loss_sum += o.final_safe_loss;
  }
  if (m.n == 0) {
    m.mae = std::numeric_limits<double>::quiet_NaN();
    m.r2 = std::numeric_limits<double>::quiet_NaN();
    m.mean_final_safe_loss = std::numeric_limits<double>::quiet_NaN();
    m.mean_final_safe_loss_mean = m.mean_final_safe_loss;
    return m;
  }
  m.mae = abs_err / m.n;
  mean_true /= m.n;
  m.mean_final_safe_loss = loss_sum / m.n;
  m.mean_final_safe_loss_mean =
      n_pixels > 0 ? m.mean_final_safe_loss / static_cast<double>(n_pixels)
                   : std::numeric_limits<double>::quiet_NaN();
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (const SimOutcome& o : m.per_sim) {
    if (!o.error.empty() || !std::isfinite(o.alpha_hat)) continue;
    ss_res += (o.alpha_true - o.alpha_hat) * (o.alpha_true - o.alpha_hat);
    ss_tot += (o.alpha_true - mean_true) * (o.alpha_true - mean_true);
  }
  if (m.n >= 2 && ss_tot > 0.0) {
    m.r2 = 1.0 - ss_res / ss_tot;
    m.r2_defined = true;
  } else {
    m.r2 = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

CorpusMetrics EvaluateCorpus(std::span<const SimulationRecord> records,
                             const SafeConfig& safe_config,
                             const TttConfig& ttt, int jobs) {
  if (records.empty()) throw InvalidInput("evaluation needs a non-empty set");
  ttt.Validate();
  std::vector<SimOutcome> outcomes(records.size());
  ParallelFor(records.size(), jobs, [&](std::size_t i) {
    const SimulationRecord& rec = records[i];
    SimOutcome& o = outcomes[i];
    o.sim_id = rec.sim_id;
    o.alpha_true = rec.alpha_true;
    try {
      const RecoveryResult r = RecoverAlpha(rec, safe_config, ttt);
      o.alpha_hat = r.alpha_hat;
      // Outcomes are always reported in the sum-over-pixels convention.
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

std::vector<AblationRow> StabilityColumns(const GridSpec& grid,
                                          std::span<const int> nsub_values,
                                          double alpha_reference) {
  if (nsub_values.empty()) throw ConfigurationError("n_sub list is empty");
  std::vector<AblationRow> rows;
  for (int n : nsub_values) {
    const SafeConfig cfg = SafeConfig::ForGrid(grid, n);
    AblationRow row;
    row.n_sub = n;
    row.dt_sub = cfg.dt_sub();
    row.stability = ComputeStability(alpha_reference, cfg.dt_sub(), grid);
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const AblationRow& a, const AblationRow& b) {
                     return a.n_sub < b.n_sub;
                   });
  return rows;
}

std::vector<AblationRow> AblateNsub(std::span<const SimulationRecord> records,
                                    std::span<const int> nsub_values,
                                    const TttConfig& ttt,
                                    double alpha_reference, int jobs) {
  if (records.empty()) throw InvalidInput("ablation needs a non-empty set");
  const GridSpec& grid = records.front().config.grid;
  std::vector<AblationRow> rows =
      StabilityColumns(grid, nsub_values, alpha_reference);
  for (AblationRow& row : rows) {
    const SafeConfig cfg = SafeConfig::ForGrid(grid, row.n_sub);
    row.metrics = EvaluateCorpus(records, cfg, ttt, jobs);
  }
  return rows;
}

}  // namespace diffrec
