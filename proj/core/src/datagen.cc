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
#include "diffrec/datagen.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "diffrec/errors.h"
#include "diffrec/parallel.h"

namespace diffrec {

void VoronoiConfig::Validate() const {
  if (n_cells_min < 2 || n_cells_max < n_cells_min) {
    throw ConfigurationError(
        "Voronoi cell counts need 2 <= n_cells_min <= n_cells_max");
  }
  if (!(interface_width > 0.0)) {
    throw ConfigurationError("interface_width must be positive");
  }
  if (!std::isfinite(perturbation_amplitude)) {
    throw ConfigurationError("perturbation_amplitude must be finite");
  }
}

void SimConfig::Validate() const {
  grid.Validate();
  if (n_steps < 1) throw ConfigurationError("n_steps must be >= 1");
  if (n_steps % grid.save_interval != 0) {
    throw ConfigurationError("n_steps must be divisible by save_interval");
  }
  if (!(alpha_min > 0.0) || alpha_max < alpha_min) {
    throw ConfigurationError("need 0 < alpha_min <= alpha_max");
  }
  const StabilityReport r = ComputeStability(alpha_max, grid.dt_sim, grid);
  if (!r.stable) {
    const double bound = 2.0 / (alpha_max * r.lambda_max);
    std::ostringstream msg;
    msg.precision(17);
    msg << "dt_sim = " << grid.dt_sim << " is unstable at alpha_max = "
        << alpha_max << " (sigma = " << r.sigma
        << "); admissible dt_sim must be below " << bound;
    throw StabilityError(msg.str(), bound);
  }
}

namespace {

// Minimum-image separation along one periodic axis.
double PeriodicDelta(double a, double b, double length) {
  double d = std::fabs(a - b);
  return std::min(d, length - d);
}

}  // namespace

Field2D VoronoiFromCentres(const GridSpec& grid, const VoronoiConfig& voronoi,
                           const std::vector<Point2>& centres) {
  if (centres.size() < 2) {
    throw ConfigurationError("Voronoi construction needs at least 2 centres");
  }
  if (grid.nx < 3 || grid.ny < 3) {
    throw InvalidGridError("grid must be at least 3x3");
  }
  const double lx = grid.nx * grid.dx;
  const double ly = grid.ny * grid.dy;
  const double kw = voronoi.perturbation_wavenumber;
  const double amp = voronoi.perturbation_amplitude;
  const double w = voronoi.interface_width;

  std::vector<double> u(grid.size());
  for (int j = 0; j < grid.ny; ++j) {
    const double y = j * grid.dy;
    const double sy = std::sin(2.0 * std::numbers::pi * kw * y / ly);
    for (int i = 0; i < grid.nx; ++i) {
      const double x = i * grid.dx;
      double d1 = std::numeric_limits<double>::infinity();
      double d2 = d1;
      for (const Point2& c : centres) {
        const double ddx = PeriodicDelta(x, c.x, lx);
        const double ddy = PeriodicDelta(y, c.y, ly);
        const double d = std::sqrt(ddx * ddx + ddy * ddy);
        if (d < d1) {
          d2 = d1;
          d1 = d;
        } else if (d < d2) {
          d2 = d;
        }
      }
      const double xi =
          amp * std::sin(2.0 * std::numbers::pi * kw * x / lx) * sy;
      u[static_cast<std::size_t>(j) * grid.nx + i] =
          0.5 * (1.0 + std::tanh((d2 - d1 + xi) / w));
    }
  }
  return Field2D(grid.ny, grid.nx, std::move(u));
}

Field2D VoronoiInitialCondition(const GridSpec& grid,
                                const VoronoiConfig& voronoi,
                                SplitMix64& rng) {
  voronoi.Validate();
  const auto n_cells = static_cast<int>(
      rng.UniformInt(voronoi.n_cells_min, voronoi.n_cells_max));
  const double lx = grid.nx * grid.dx;
  const double ly = grid.ny * grid.dy;
  std::vector<Point2> centres(n_cells);
  for (Point2& c : centres) {
    c.x = rng.Uniform(0.0, lx);
    c.y = rng.Uniform(0.0, ly);
  }
  return VoronoiFromCentres(grid, voronoi, centres);
}

SimulationRecord Simulate(const Field2D& ic, double alpha,
                          const SimConfig& config) {
  const GridSpec& grid = config.grid;
  grid.Validate();
  if (ic.nx() != grid.nx || ic.ny() != grid.ny) {
    throw InvalidGridError("initial condition shape does not match grid");
  }
  if (config.n_steps < 1 || config.n_steps % grid.save_interval != 0) {
    throw ConfigurationError("n_steps must be a positive multiple of save_interval");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw DomainError("alpha must be finite and nonnegative");
  }
  if (alpha > 0.0) {
    const StabilityReport r = ComputeStability(alpha, grid.dt_sim, grid);
    if (!r.stable) {
      const double bound = 2.0 / (alpha * r.lambda_max);
      std::ostringstream msg;
      msg.precision(17);
      msg << "explicit Euler unstable: sigma = " << r.sigma
          << " >= 2; admissible dt_sim must be below " << bound;
      throw StabilityError(msg.str(), bound);
    }
  }

  SimulationRecord rec;
  rec.alpha_true = alpha;
  rec.config = config;
  rec.frames.reserve(config.frames_per_sim());
  rec.frames.push_back(ic);

  std::vector<double> cur(ic.values().begin(), ic.values().end());
  std::vector<double> next(cur.size());
  const double coeff = grid.dt_sim * alpha;
  for (int step = 1; step <= config.n_steps; ++step) {
    EulerStepInto(cur, next, coeff, grid.ny, grid.nx, grid.dx, grid.dy);
    cur.swap(next);
    if (step % grid.save_interval == 0) {
      rec.frames.emplace_back(grid.ny, grid.nx, cur);
    }
  }
  return rec;
}

SimulationRecord GenerateOne(int sim_id, const SimConfig& config,
                             const VoronoiConfig& voronoi) {
  const std::uint64_t seed =
      SplitSeed(config.seed, static_cast<std::uint64_t>(sim_id));
  SplitMix64 rng(seed);
  const double alpha = rng.Uniform(config.alpha_min, config.alpha_max);
  Field2D ic = VoronoiInitialCondition(config.grid, voronoi, rng);
  SimulationRecord rec = Simulate(ic, alpha, config);
  rec.voronoi = voronoi;
  rec.sim_id = sim_id;
  rec.seed = seed;
  return rec;
}

std::vector<SimulationRecord> GenerateCorpus(int n_sims,
                                             const SimConfig& config,
                                             const VoronoiConfig& voronoi,
                                             int jobs) {
  if (n_sims < 1) throw ConfigurationError("n_sims must be >= 1");
  config.Validate();
  voronoi.Validate();
  std::vector<SimulationRecord> out(n_sims);
  ParallelFor(static_cast<std::size_t>(n_sims), jobs, [&](std::size_t i) {
    try {
      out[i] = GenerateOne(static_cast<int>(i), config, voronoi);
    } catch (const StabilityError& e) {
      throw StabilityError("sim " + std::to_string(i) + ": " + e.what(),
                           e.admissible_dt());
    } catch (const InvalidInput& e) {
      throw InvalidInput("sim " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

SplitIndices SplitCorpusIndices(int n, double train_fraction,
                                std::uint64_t seed) {
  if (n < 1) throw ConfigurationError("cannot split an empty corpus");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigurationError("train_fraction must lie in (0, 1)");
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.UniformInt(0, i));
    std::swap(order[i], order[j]);
  }
  const auto n_train = std::min<int>(
      n, static_cast<int>(std::ceil(n * train_fraction - 1e-12)));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.test.assign(order.begin() + n_train, order.end());
  return s;
}

std::pair<std::vector<SimulationRecord>, std::vector<SimulationRecord>>
SplitCorpus(std::vector<SimulationRecord> records, double train_fraction,
            std::uint64_t seed) {
  if (records.empty()) throw ConfigurationError("cannot split an empty corpus");
  const SplitIndices idx =
      SplitCorpusIndices(static_cast<int>(records.size()), train_fraction, seed);
  std::pair<std::vector<SimulationRecord>, std::vector<SimulationRecord>> out;
  for (int i : idx.train) out.first.push_back(std::move(records[i]));
  for (int i : idx.test) out.second.push_back(std::move(records[i]));
  return out;
}

}  // namespace diffrec
