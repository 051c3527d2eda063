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
#include "diffrec/dataset.h"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "diffrec/errors.h"
#include "json.hpp"

namespace diffrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json ReadJson(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + file.string() + ": " + e.what());
  }
}

void WriteJson(const fs::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << j.dump(2) << "\n";
  if (!out) throw Error("failed writing " + file.string());
}

template <typename T>
T Get(const json& j, const char* key, const fs::path& file) {
  if (!j.contains(key)) {
    throw DataError(file.string() + ": missing key '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": bad value for '" + key + "': " + e.what());
  }
}

std::uint32_t ToLittle(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace

SimConfig DatasetManifest::sim_config() const {
  SimConfig c;
  c.grid = grid;
  c.n_steps = n_steps;
  c.alpha_min = alpha_min;
  c.alpha_max = alpha_max;
  c.seed = seed;
  return c;
}

const ManifestEntry& DatasetManifest::Entry(int sim_id) const {
  for (const ManifestEntry& e : per_sim) {
    if (e.sim_id == sim_id) return e;
  }
  throw DataError("sim " + std::to_string(sim_id) + " is not in the manifest (n_sims = " +
                  std::to_string(n_sims) + ")");
}

std::string SimDirName(int sim_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sim_%04d", sim_id);
  return buf;
}

DatasetManifest MakeManifest(const SimConfig& config, int n_sims,
                             const std::vector<double>& alphas,
                             const std::vector<std::uint64_t>& seeds,
                             double train_fraction, std::uint64_t split_seed) {
  if (alphas.size() != static_cast<std::size_t>(n_sims) ||
      seeds.size() != static_cast<std::size_t>(n_sims)) {
    throw InvalidInput("manifest needs one alpha and seed per simulation");
  }
  DatasetManifest m;
  m.n_sims = n_sims;
  m.grid = config.grid;
  m.n_steps = config.n_steps;
  m.alpha_min = config.alpha_min;
  m.alpha_max = config.alpha_max;
  m.seed = config.seed;
  m.train_fraction = train_fraction;
  m.split_seed = split_seed;
  const SplitIndices split = SplitCorpusIndices(n_sims, train_fraction, split_seed);
  m.train_ids = split.train;
  m.test_ids = split.test;
  for (int i = 0; i < n_sims; ++i) {
    m.per_sim.push_back({i, alphas[i], seeds[i], SimDirName(i)});
  }
  return m;
}

void WriteFramesF32(const fs::path& file, const std::vector<Field2D>& frames) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  std::vector<std::uint32_t> buf;
  for (const Field2D& f : frames) {
    buf.resize(f.size());
    const auto v = f.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      buf[i] = ToLittle(std::bit_cast<std::uint32_t>(static_cast<float>(v[i])));
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
  }
  if (!out) throw Error("failed writing " + file.string());
}

std::vector<Field2D> ReadFramesF32(const fs::path& file, int n_frames, int ny,
                                   int nx) {
  const std::uintmax_t expected =
      static_cast<std::uintmax_t>(n_frames) * ny * nx * 4;
  std::error_code ec;
  const std::uintmax_t actual = fs::file_size(file, ec);
  if (ec) throw DataError("cannot stat " + file.string());
  if (actual != expected) {
    throw DataError(file.string() + ": expected " + std::to_string(expected) +
                    " bytes, found " + std::to_string(actual));
  }
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  const std::size_t n = static_cast<std::size_t>(ny) * nx;
  std::vector<std::uint32_t> buf(n);
  std::vector<Field2D> frames;
  frames.reserve(n_frames);
  for (int t = 0; t < n_frames; ++t) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
    if (!in) throw DataError("short read in " + file.string());
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) {
      vals[i] = static_cast<double>(std::bit_cast<float>(ToLittle(buf[i])));
    }
    try {
      frames.emplace_back(ny, nx, std::move(vals));
    } catch (const DomainError&) {
      throw DataError(file.string() + ": frame " + std::to_string(t) +
                      " contains non-finite values");
    }
  }
  return frames;
}

void WriteSimulation(const fs::path& dir, const SimulationRecord& record) {
  const fs::path sim_dir = dir / SimDirName(record.sim_id);
  std::error_code ec;
  fs::create_directories(sim_dir, ec);
  if (ec) throw Error("cannot create " + sim_dir.string() + ": " + ec.message());
  const GridSpec& g = record.config.grid;
  json meta = {
      {"sim_id", record.sim_id},
      {"alpha", record.alpha_true},
      {"dx", g.dx},
      {"dy", g.dy},
      {"dt_sim", g.dt_sim},
      {"save_interval", g.save_interval},
      {"n_steps", record.config.n_steps},
      {"nx", g.nx},
      {"ny", g.ny},
      {"seed", record.seed},
      {"format_version", kFormatVersion},
  };
  WriteJson(sim_dir / "meta.json", meta);
  WriteFramesF32(sim_dir / "frames.f32", record.frames);
}

void WriteManifest(const fs::path& dir, const DatasetManifest& m) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  json per_sim = json::array();
  for (const ManifestEntry& e : m.per_sim) {
    per_sim.push_back({{"sim_id", e.sim_id}, {"alpha", e.alpha_true},
                       {"seed", e.seed}, {"path", e.path}});
  }
  json j = {
      {"format_version", m.format_version},
      {"n_sims", m.n_sims},
      {"grid",
       {{"nx", m.grid.nx}, {"ny", m.grid.ny}, {"dx", m.grid.dx},
        {"dy", m.grid.dy}, {"dt_sim", m.grid.dt_sim},
        {"save_interval", m.grid.save_interval}}},
      {"n_steps", m.n_steps},
      {"alpha_min", m.alpha_min},
      {"alpha_max", m.alpha_max},
      {"seed", m.seed},
      {"split",
       {{"train_fraction", m.train_fraction}, {"seed", m.split_seed},
        {"train", m.train_ids}, {"test", m.test_ids}}},
      {"per_sim", per_sim},
  };
  WriteJson(dir / "manifest.json", j);
}

DatasetManifest ReadManifest(const fs::path& dir) {
  const fs::path file = dir / "manifest.json";
  const json j = ReadJson(file);
  DatasetManifest m;
  m.format_version = Get<int>(j, "format_version", file);
  if (m.format_version != kFormatVersion) {
    throw DataError("unsupported format_version " + std::to_string(m.format_version));
  }
  m.n_sims = Get<int>(j, "n_sims", file);
  const json grid = Get<json>(j, "grid", file);
  m.grid.nx = Get<int>(grid, "nx", file);
  m.grid.ny = Get<int>(grid, "ny", file);
  m.grid.dx = Get<double>(grid, "dx", file);
  m.grid.dy = Get<double>(grid, "dy", file);
  m.grid.dt_sim = Get<double>(grid, "dt_sim", file);
  m.grid.save_interval = Get<int>(grid, "save_interval", file);
  try {
    m.grid.Validate();
  } catch (const InvalidInput& e) {
    throw DataError(file.string() + ": " + e.what());
  }
  m.n_steps = Get<int>(j, "n_steps", file);
  if (m.n_steps < 1 || m.n_steps % m.grid.save_interval != 0) {
    throw DataError(file.string() + ": n_steps is not a positive multiple of save_interval");
  }
  m.alpha_min = Get<double>(j, "alpha_min", file);
  m.alpha_max = Get<double>(j, "alpha_max", file);
  m.seed = Get<std::uint64_t>(j, "seed", file);
  const json split = Get<json>(j, "split", file);
  m.train_fraction = Get<double>(split, "train_fraction", file);
  m.split_seed = Get<std::uint64_t>(split, "seed", file);
  m.train_ids = Get<std::vector<int>>(split, "train", file);
  m.test_ids = Get<std::vector<int>>(split, "test", file);
  for (const json& e : Get<json>(j, "per_sim", file)) {
    ManifestEntry entry;
    entry.sim_id = Get<int>(e, "sim_id", file);
    entry.alpha_true = Get<double>(e, "alpha", file);
    entry.seed = Get<std::uint64_t>(e, "seed", file);
    entry.path = Get<std::string>(e, "path", file);
    m.per_sim.push_back(entry);
  }
  if (static_cast<int>(m.per_sim.size()) != m.n_sims) {
    throw DataError(file.string() + ": per_sim has " + std::to_string(m.per_sim.size()) +
                    " entries, n_sims = " + std::to_string(m.n_sims));
  }
  const std::uintmax_t expected =
      static_cast<std::uintmax_t>(m.frames_per_sim()) * m.grid.ny * m.grid.nx * 4;
  for (const ManifestEntry& e : m.per_sim) {
    const fs::path frames = dir / e.path / "frames.f32";
    std::error_code ec;
    const std::uintmax_t size = fs::file_size(frames, ec);
    if (ec) throw DataError("missing " + frames.string());
    if (size != expected) {
      throw DataError(frames.string() + ": expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(size));
    }
  }
  return m;
}

SimulationRecord ReadSimulation(const fs::path& dir, const DatasetManifest& m,
                                int sim_id) {
  const ManifestEntry& e = m.Entry(sim_id);
  const fs::path sim_dir = dir / e.path;
  const fs::path meta_file = sim_dir / "meta.json";
  const json meta = ReadJson(meta_file);
  SimulationRecord rec;
  rec.sim_id = Get<int>(meta, "sim_id", meta_file);
  rec.alpha_true = Get<double>(meta, "alpha", meta_file);
  rec.seed = Get<std::uint64_t>(meta, "seed", meta_file);
  rec.config = m.sim_config();
  GridSpec& g = rec.config.grid;
  if (Get<int>(meta, "nx", meta_file) != g.nx || Get<int>(meta, "ny", meta_file) != g.ny ||
      Get<double>(meta, "dx", meta_file) != g.dx || Get<double>(meta, "dy", meta_file) != g.dy ||
      Get<double>(meta, "dt_sim", meta_file) != g.dt_sim ||
      Get<int>(meta, "save_interval", meta_file) != g.save_interval ||
      Get<int>(meta, "n_steps", meta_file) != m.n_steps ||
      Get<int>(meta, "format_version", meta_file) != m.format_version) {
    throw DataError(meta_file.string() + ": metadata disagrees with the manifest");
  }
  if (rec.sim_id != sim_id) throw DataError(meta_file.string() + ": sim_id mismatch");
  rec.frames = ReadFramesF32(sim_dir / "frames.f32", m.frames_per_sim(), g.ny, g.nx);
  return rec;
}

}  // namespace diffrec
