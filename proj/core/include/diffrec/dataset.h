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
#ifndef DIFFREC_DATASET_H_
#define DIFFREC_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diffrec/datagen.h"

namespace diffrec {

// On-disk corpus layout:
//   DIR/manifest.json
//   DIR/sim_NNNN/meta.json
//   DIR/sim_NNNN/frames.f32   little-endian float32, [T][ny][nx], x fastest
// Fields are computed in float64 and rounded to float32 on write.
inline constexpr int kFormatVersion = 1;

struct ManifestEntry {
  int sim_id = 0;
  double alpha_true = 0.0;
  std::uint64_t seed = 0;
  std::string path;  // relative to the dataset directory
};

struct DatasetManifest {
  int format_version = kFormatVersion;
  int n_sims = 0;
  GridSpec grid;
  int n_steps = 0;
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  std::vector<ManifestEntry> per_sim;

  int frames_per_sim() const { return n_steps / grid.save_interval + 1; }
  SimConfig sim_config() const;
  const ManifestEntry& Entry(int sim_id) const;  // throws DataError
};

// Builds a manifest for records 0..n_sims-1 generated from `config`, with
// the train/test split drawn by SplitCorpusIndices.
DatasetManifest MakeManifest(const SimConfig& config, int n_sims,
                             const std::vector<double>& alphas,
                             const std::vector<std::uint64_t>& seeds,
                             double train_fraction, std::uint64_t split_seed);

std::string SimDirName(int sim_id);

// Writes meta.json and frames.f32 of one record under dir/SimDirName(id).
void WriteSimulation(const std::filesystem::path& dir,
                     const SimulationRecord& record);
void WriteManifest(const std::filesystem::path& dir,
                   const DatasetManifest& manifest);

// Reads and validates the manifest, including that every listed frames
// file exists and has exactly T * nx * ny * 4 bytes.
DatasetManifest ReadManifest(const std::filesystem::path& dir);

SimulationRecord ReadSimulation(const std::filesystem::path& dir,
                                const DatasetManifest& manifest, int sim_id);

// Raw float32 frame I/O, exposed for tests.
void WriteFramesF32(const std::filesystem::path& file,
                    const std::vector<Field2D>& frames);
std::vector<Field2D> ReadFramesF32(const std::filesystem::path& file, int n_frames,
                                   int ny, int nx);

}  // namespace diffrec

#endif  // DIFFREC_DATASET_H_
