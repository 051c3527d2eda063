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
#ifndef DIFFREC_DATAGEN_H_
#define DIFFREC_DATAGEN_H_

#include <cstdint>
#include <utility>
#include <vector>

#include "diffrec/field.h"
#include "diffrec/rng.h"

namespace diffrec {

// Voronoi initial-condition parameters. The boundary perturbation is
// xi(x, y) = amplitude * sin(2 pi k x / Lx) * sin(2 pi k y / Ly).
struct VoronoiConfig {
  int n_cells_min = 15;
  int n_cells_max = 35;
  double interface_width = 2.5;
  double perturbation_amplitude = 0.5;
  int perturbation_wavenumber = 3;

  void Validate() const;
};

struct SimConfig {
  GridSpec grid;
  int n_steps = 5000;
  double alpha_min = 0.01;
  double alpha_max = 1.7;
  std::uint64_t seed = 0;

  int frames_per_sim() const { return n_steps / grid.save_interval + 1; }

  // Checks grid, step divisibility and the stability of dt_sim at
  // alpha_max. Throws StabilityError carrying the admissible dt_sim.
  void Validate() const;
};

struct SimulationRecord {
  std::vector<Field2D> frames;
  double alpha_true = 0.0;
  SimConfig config;
  VoronoiConfig voronoi;
  int sim_id = 0;
  std::uint64_t seed = 0;  // seed of this simulation's own stream
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Tanh profile of the nearest/second-nearest centre distance gap under the
// periodic minimum-image metric. Exposed separately from the random draw so
// tests can place centres explicitly.
Field2D VoronoiFromCentres(const GridSpec& grid, const VoronoiConfig& voronoi,
                           const std::vector<Point2>& centres);

// Draws the cell count and centres from `rng`, then builds the field.
Field2D VoronoiInitialCondition(const GridSpec& grid,
                                const VoronoiConfig& voronoi, SplitMix64& rng);

// Forward Euler integration of du/dt = alpha * Laplacian(u), saving the
// initial condition and every save_interval-th step.
SimulationRecord Simulate(const Field2D& ic, double alpha,
                          const SimConfig& config);

// Generates n_sims records. Simulation i draws its initial condition and
// alpha from the stream SplitSeed(config.seed, i).
std::vector<SimulationRecord> GenerateCorpus(int n_sims,
                                             const SimConfig& config,
                                             const VoronoiConfig& voronoi,
                                             int jobs = 1);

// Generates only simulation `sim_id` of the corpus defined by `config`.
SimulationRecord GenerateOne(int sim_id, const SimConfig& config,
                             const VoronoiConfig& voronoi);

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> test;
};

// Seeded Fisher-Yates shuffle of [0, n); the first ceil(n * fraction)
// indices form the training set.
SplitIndices SplitCorpusIndices(int n, double train_fraction,
                                std::uint64_t seed);

std::pair<std::vector<SimulationRecord>, std::vector<SimulationRecord>>
SplitCorpus(std::vector<SimulationRecord> records, double train_fraction,
            std::uint64_t seed);

}  // namespace diffrec

#endif  // DIFFREC_DATAGEN_H_
