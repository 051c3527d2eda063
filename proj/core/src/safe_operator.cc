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
#include "diffrec/safe_operator.h"

#include <cmath>
#include <limits>
#include <string>

#include "diffrec/errors.h"
#include "diffrec/parallel.h"
#include "stencil.h"

namespace diffrec {

SafeConfig::SafeConfig(int n_sub, double dt_save, const GridSpec& grid)
    : n_sub_(n_sub), dt_save_(dt_save), dt_sub_(0.0), grid_(grid) {
  if (n_sub < 1) throw ConfigurationError("n_sub must be >= 1");
  if (!(dt_save > 0.0)) throw DomainError("dt_save must be positive");
  dt_sub_ = dt_save_ / n_sub_;
}

SafeConfig SafeConfig::ForGrid(const GridSpec& grid, int n_sub) {
  return SafeConfig(n_sub, grid.dt_save(), grid);
}

namespace {

// x * 0 is NaN exactly for non-finite x. Four accumulators break the
// add dependency chain.
bool AllFinite(std::span<const double> v) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  const std::size_t n = v.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += v[i] * 0.0;
    a1 += v[i + 1] * 0.0;
    a2 += v[i + 2] * 0.0;
    a3 += v[i + 3] * 0.0;
  }
  for (; i < n; ++i) a0 += v[i] * 0.0;
  return (a0 + a1) + (a2 + a3) == 0.0;
}

// One fused step of the state and its alpha-tangent:
//   f_out = f + dt * alpha * Lap(f)
//   s_out = s + dt * (Lap(f) + alpha * Lap(s))
// The state update uses the same expression as EulerStepInto, so both
// produce identical bits.
void TangentStep(const double* __restrict f, const double* __restrict s,
                 double* __restrict f_out, double* __restrict s_out,
                 double dt, double alpha, int ny, int nx, double scale) {
  const double coeff = dt * alpha;
  const std::size_t w = static_cast<std::size_t>(nx);
  for (int j = 0; j < ny; ++j) {
    const std::size_t ju = static_cast<std::size_t>(j == 0 ? ny - 1 : j - 1) * w;
    const std::size_t jc = static_cast<std::size_t>(j) * w;
    const std::size_t jd = static_cast<std::size_t>(j == ny - 1 ? 0 : j + 1) * w;
    const double* fu = f + ju;
    const double* fc = f + jc;
    const double* fd = f + jd;
    const double* su = s + ju;
    const double* sc = s + jc;
    const double* sd = s + jd;
    double* fo = f_out + jc;
    double* so = s_out + jc;

    auto point = [&](int i, int im1, int ip1) {
      const double lap_f = (fc[ip1] + fc[im1] - 4.0 * fc[i] + fu[i] + fd[i]) * scale;
      const double lap_s = (sc[ip1] + sc[im1] - 4.0 * sc[i] + su[i] + sd[i]) * scale;
      fo[i] = fc[i] + coeff * lap_f;
      so[i] = sc[i] + dt * (lap_f + alpha * lap_s);
    };
    point(0, nx - 1, 1);
    for (int i = 1; i < nx - 1; ++i) {
      const double lap_f = (fc[i + 1] + fc[i - 1] - 4.0 * fc[i] + fu[i] + fd[i]) * scale;
      const double lap_s = (sc[i + 1] + sc[i - 1] - 4.0 * sc[i] + su[i] + sd[i]) * scale;
      fo[i] = fc[i] + coeff * lap_f;
      so[i] = sc[i] + dt * (lap_f + alpha * lap_s);
    }
    point(nx - 1, nx - 2, 0);
  }
}

}  // namespace

PropagationResult Propagate(const Field2D& f, double alpha,
                            const SafeConfig& config, bool with_sensitivity) {
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  if (f.nx() < 3 || f.ny() < 3) {
    throw InvalidGridError("five-point stencil needs at least 3x3");
  }
  const GridSpec& g = config.grid();
  const int ny = f.ny();
  const int nx = f.nx();
  const double dt = config.dt_sub();
  const double coeff = dt * alpha;
  const double scale = 1.0 / (g.dx * g.dy);

  std::vector<double> cur(f.values().begin(), f.values().end());
  std::vector<double> next(cur.size());
  std::vector<double> s_cur, s_next;
  if (with_sensitivity) {
    s_cur.assign(cur.size(), 0.0);
    s_next.resize(cur.size());
  }

  PropagationResult out;
  for (int k = 0; k < config.n_sub(); ++k) {
    if (with_sensitivity) {
      TangentStep(cur.data(), s_cur.data(), next.data(), s_next.data(), dt,
                  alpha, ny, nx, scale);
      s_cur.swap(s_next);
    } else {
      EulerStepInto(cur, next, coeff, ny, nx, g.dx, g.dy);
    }
    cur.swap(next);
    if (!AllFinite(cur) || (with_sensitivity && !AllFinite(s_cur))) {
      out.diverged = true;
      return out;
    }
  }
  out.predicted = Field2D(ny, nx, std::move(cur));
  if (with_sensitivity) out.sensitivity = Field2D(ny, nx, std::move(s_cur));
  return out;
}

LossReport SafeLoss(std::span<const Field2D> frames, double alpha,
                    const SafeConfig& config, LossWeights weights,
                    int pair_stride, int jobs) {
  if (frames.size() < 2) {
    throw InvalidInput("loss needs at least 2 frames, got " +
                       std::to_string(frames.size()));
  }
  if (pair_stride < 1) throw ConfigurationError("pair_stride must be >= 1");
  for (const Field2D& fr : frames) {
    if (!fr.SameShape(frames[0])) {
      throw InvalidGridError("frames have inconsistent shapes");
    }
  }

  std::vector<std::size_t> sources;
  for (std::size_t t = 0; t + 1 < frames.size();
       t += static_cast<std::size_t>(pair_stride)) {
    sources.push_back(t);
  }

  struct PairTerm {
    double loss = 0.0;
    double grad = 0.0;
    bool diverged = false;
  };
  std::vector<PairTerm> terms(sources.size());
  ParallelFor(sources.size(), jobs, [&](std::size_t p) {
    const std::size_t t = sources[p];
    const PropagationResult r = Propagate(frames[t], alpha, config, true);
    if (r.diverged) {
      terms[p].diverged = true;
      return;
    }
    const auto pred = r.predicted.values();
    const auto sens = r.sensitivity.values();
    const auto target = frames[t + 1].values();
    double l = 0.0;
    double g = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - target[i];
      l += d * d;
      g += d * sens[i];
    }
    terms[p].loss = l;
    terms[p].grad = 2.0 * g;
    if (!std::isfinite(l) || !std::isfinite(g)) terms[p].diverged = true;
  });

  LossReport rep;
  rep.n_pairs = static_cast<int>(sources.size());
  rep.n_pixels = frames[0].size();
  rep.weights = weights;
  double l = 0.0;
  double g = 0.0;
  bool diverged = false;
  for (const PairTerm& term : terms) {
    diverged = diverged || term.diverged;
    l += term.loss;
    g += term.grad;
  }
  if (diverged) {
    rep.safe_loss = std::numeric_limits<double>::infinity();
    rep.safe_loss_grad_alpha = std::numeric_limits<double>::quiet_NaN();
    rep.grad_valid = false;
  } else {
    rep.safe_loss = l / rep.n_pairs;
    rep.safe_loss_grad_alpha = g / rep.n_pairs;
  }
  rep.recon_loss = 0.0;
  rep.weighted_total = weights.safe * rep.safe_loss + weights.recon * rep.recon_loss;
  return rep;
}

LossReport PerPairNormMode(const LossReport& loss, NormMode mode) {
  if (mode == loss.norm) return loss;
  const double n = static_cast<double>(loss.n_pixels);
  const double factor = mode == NormMode::kMean ? 1.0 / n : n;
  LossReport out = loss;
  out.norm = mode;
  out.safe_loss *= factor;
  out.safe_loss_grad_alpha *= factor;
  out.recon_loss *= factor;
  out.weighted_total =
      out.weights.safe * out.safe_loss + out.weights.recon * out.recon_loss;
  return out;
}

}  // namespace diffrec
