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
// diffrec: generate diffusion corpora and recover the diffusion coefficient.
//
//   diffrec generate  --out DIR [--sims N --nx --ny ...]
//   diffrec recover   --data DIR --sim-id K [--n-sub N --path scalar]
//   diffrec ablate    --data DIR --n-sub-list 1,2,5,10,25,50 --out table.csv
//   diffrec stability --alpha A --dt DT [--dx --dy]
//   diffrec evaluate  --data DIR [--split test --n-sub 50] --out metrics.json
//
// Exit status: 0 success, 1 internal failure, 2 invalid input.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffrec/datagen.h"
#include "diffrec/dataset.h"
#include "diffrec/errors.h"
#include "diffrec/estimator.h"
#include "diffrec/field.h"
#include "diffrec/parallel.h"
#include "diffrec/recovery.h"
#include "diffrec/report.h"
#include "diffrec/safe_operator.h"

namespace fs = std::filesystem;

namespace diffrec {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInvalid = 2;

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// SAFE_PIT_SEED, when set, replaces the --seed value.
std::uint64_t EffectiveSeed(std::uint64_t flag_seed) {
  const char* env = std::getenv("SAFE_PIT_SEED");
  if (env == nullptr || *env == '\0') return flag_seed;
  try {
    std::size_t pos = 0;
    const std::string s(env);
    const unsigned long long v = std::stoull(s, &pos, 0);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigurationError(std::string("SAFE_PIT_SEED is not an unsigned integer: ") + env);
  }
}

void WriteTextFile(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
  }
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << text;
  if (!out) throw Error("failed writing " + file.string());
}

// Options shared by the commands that run test-time training.
struct TrainOptions {
  std::string path = "scalar";
  std::optional<double> learning_rate;
  double alpha_init = 0.1;
  int max_steps = 2000;
  int patience = 50;
  double rel_tolerance = 1e-6;
  int pair_stride = 1;
  std::string norm = "sum";
  std::string reparam = "softplus";
  std::uint64_t seed = 0;  // estimator weight init

  void Register(CLI::App* cmd) {
    cmd->add_option("--path", path, "scalar | estimator")
        ->check(CLI::IsMember({"scalar", "estimator"}));
    cmd->add_option("--lr", learning_rate,
                    "Adam learning rate (default 0.05 scalar, 1e-3 estimator)");
    cmd->add_option("--alpha-init", alpha_init, "initial alpha");
    cmd->add_option("--max-steps", max_steps, "optimizer step cap");
    cmd->add_option("--patience", patience, "stalled steps before stopping");
    cmd->add_option("--tol", rel_tolerance, "relative improvement tolerance");
    cmd->add_option("--pair-stride", pair_stride, "use every k-th frame pair");
    cmd->add_option("--norm", norm, "pixel norm of the loss: sum | mean")
        ->check(CLI::IsMember({"sum", "mean"}));
    cmd->add_option("--reparam", reparam, "softplus | clamp")
        ->check(CLI::IsMember({"softplus", "clamp"}));
    cmd->add_option("--seed", seed, "estimator weight seed");
  }

  EstimatorPath estimator_path() const {
    return path == "scalar" ? EstimatorPath::kScalar : EstimatorPath::kEstimator;
  }
  NormMode norm_mode() const { return norm == "sum" ? NormMode::kSum : NormMode::kMean; }

  TttConfig Ttt() const {
    TttConfig t = estimator_path() == EstimatorPath::kScalar ? TttConfig{}
                                                              : TttConfig::ForEstimator();
    if (learning_rate) t.learning_rate = *learning_rate;
    t.alpha_init = alpha_init;
    t.max_steps = max_steps;
    t.patience = patience;
    t.rel_tolerance = rel_tolerance;
    t.pair_stride = pair_stride;
    t.norm = norm_mode();
    t.reparam = reparam == "softplus" ? Reparam::kSoftplus : Reparam::kClamp;
    t.Validate();
    return t;
  }

  EstimatorConfig Estimator() const {
    EstimatorConfig c;
    c.seed = EffectiveSeed(seed);
    c.Validate();
    return c;
  }
};

std::vector<int> SplitIds(const DatasetManifest& m, const std::string& split) {
  if (split == "train") return m.train_ids;
  if (split == "test") return m.test_ids;
  std::vector<int> all;
  for (const ManifestEntry& e : m.per_sim) all.push_back(e.sim_id);
  return all;
}

std::vector<SimulationRecord> LoadRecords(const fs::path& dir,
                                          const DatasetManifest& m,
                                          const std::vector<int>& ids, int jobs) {
  std::vector<SimulationRecord> records(ids.size());
  ParallelFor(ids.size(), jobs,
              [&](std::size_t i) { records[i] = ReadSimulation(dir, m, ids[i]); });
  return records;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  int sims = 100;
  SimConfig sim;
  VoronoiConfig voronoi;
  double train_fraction = 0.8;
  std::optional<std::uint64_t> split_seed;
  std::string out;
  int jobs = 1;
};

int RunGenerate(GenerateArgs& a) {
  a.sim.seed = EffectiveSeed(a.sim.seed);
  if (a.sims < 1) throw ConfigurationError("--sims must be at least 1");
  if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) {
    throw ConfigurationError("--train-fraction must lie in (0, 1)");
  }
  a.sim.Validate();
  a.voronoi.Validate();
  const fs::path out(a.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    throw ConfigurationError("cannot create output directory " + a.out);
  }

  const auto start = Clock::now();
  std::vector<double> alphas(a.sims);
  std::vector<std::uint64_t> seeds(a.sims);
  // Workers fill one batch; the main thread writes it in sim_id order.
  const int batch = std::max(1, a.jobs) * 2;
  for (int first = 0; first < a.sims; first += batch) {
    const int n = std::min(batch, a.sims - first);
    std::vector<SimulationRecord> records(n);
    ParallelFor(n, a.jobs, [&](std::size_t i) {
      records[i] = GenerateOne(first + static_cast<int>(i), a.sim, a.voronoi);
    });
    for (const SimulationRecord& r : records) {
      WriteSimulation(out, r);
      alphas[r.sim_id] = r.alpha_true;
      seeds[r.sim_id] = r.seed;
    }
  }
  const DatasetManifest m =
      MakeManifest(a.sim, a.sims, alphas, seeds, a.train_fraction,
                   a.split_seed.value_or(a.sim.seed));
  WriteManifest(out, m);
  std::cout << "wrote " << a.sims << " simulations (" << m.frames_per_sim()
            << " frames of " << a.sim.grid.ny << "x" << a.sim.grid.nx << ") to "
            << a.out << " in " << FormatSig9(SecondsSince(start)) << " s\n"
            << "train " << m.train_ids.size() << ", test " << m.test_ids.size()
            << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- recover

struct RecoverArgs {
  std::string data;
  int sim_id = 0;
  int n_sub = 50;
  TrainOptions train;
  std::string out;
  int jobs = 1;
};

int RunRecover(const RecoverArgs& a) {
  const DatasetManifest m = ReadManifest(a.data);
  const SimulationRecord rec = ReadSimulation(a.data, m, a.sim_id);
  const SafeConfig safe = SafeConfig::ForGrid(m.grid, a.n_sub);
  TttConfig ttt = a.train.Ttt();
  ttt.jobs = a.jobs;

  const auto start = Clock::now();
  const RecoveryResult r =
      a.train.estimator_path() == EstimatorPath::kScalar
          ? RecoverAlpha(rec, safe, ttt)
          : TrainEstimatorTtt(rec, safe, a.train.Estimator(), ttt);
  const double wall = SecondsSince(start);

  std::cout << "alpha_true " << FormatSig9(rec.alpha_true) << "\n"
            << "alpha_hat  " << FormatSig9(r.alpha_hat) << "\n"
            << "abs_error  " << FormatSig9(std::abs(r.alpha_hat - rec.alpha_true)) << "\n"
            << "steps      " << r.steps_taken << "\n"
            << "converged  " << (r.converged ? "true" : "false") << "\n";
  if (!a.out.empty()) {
    WriteTextFile(a.out, RecoveryJson(rec.sim_id, rec.alpha_true, a.n_sub,
                                      a.train.estimator_path(), r, wall));
  }
  return kExitOk;
}

// ------------------------------------------------------------------ ablate

struct AblateArgs {
  std::string data;
  std::vector<int> n_sub_list = {1, 2, 5, 10, 25, 50};
  std::string split = "test";
  TrainOptions train;
  bool stability_only = false;
  std::string out;
  int jobs = 1;
};

int RunAblate(const AblateArgs& a) {
  const DatasetManifest m = ReadManifest(a.data);
  if (a.train.estimator_path() != EstimatorPath::kScalar) {
    throw ConfigurationError("ablate supports --path scalar only");
  }
  std::vector<AblationRow> rows;
  if (a.stability_only) {
    rows = StabilityColumns(m.grid, a.n_sub_list, m.alpha_max);
  } else {
    const std::vector<int> ids = SplitIds(m, a.split);
    if (ids.empty()) throw DataError("split '" + a.split + "' is empty");
    const std::vector<SimulationRecord> records = LoadRecords(a.data, m, ids, a.jobs);
    rows = AblateNsub(records, a.n_sub_list, a.train.Ttt(), m.alpha_max, a.jobs);
  }
  const std::string csv = AblationCsv(rows);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    WriteTextFile(a.out, csv);
    std::cout << csv;
  }
  return kExitOk;
}

// --------------------------------------------------------------- stability

struct StabilityArgs {
  double alpha = 0.0;
  double dt = 0.0;
  double dx = 0.5;
  double dy = 0.5;
};

int RunStability(const StabilityArgs& a) {
  if (!(a.dx > 0.0) || !(a.dy > 0.0)) throw DomainError("dx and dy must be positive");
  GridSpec grid;
  grid.dx = a.dx;
  grid.dy = a.dy;
  const StabilityReport s = ComputeStability(a.alpha, a.dt, grid);
  std::cout << StabilityText(s, a.alpha, a.dt, a.dx, a.dy);
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string data;
  std::string split = "test";
  int n_sub = 50;
  TrainOptions train;
  std::string out;
  int jobs = 1;
};

int RunEvaluate(const EvaluateArgs& a) {
  const DatasetManifest m = ReadManifest(a.data);
  const std::vector<int> ids = SplitIds(m, a.split);
  if (ids.empty()) throw DataError("split '" + a.split + "' is empty");
  const std::vector<SimulationRecord> records = LoadRecords(a.data, m, ids, a.jobs);
  const SafeConfig safe = SafeConfig::ForGrid(m.grid, a.n_sub);
  const TttConfig ttt = a.train.Ttt();

  const auto start = Clock::now();
  ExperimentReport report;
  report.n_sub = a.n_sub;
  report.norm = ttt.norm;
  report.path = a.train.estimator_path();
  report.stability = ComputeStability(m.alpha_max, safe.dt_sub(), m.grid);
  report.metrics = report.path == EstimatorPath::kScalar
                       ? EvaluateCorpus(records, safe, ttt, a.jobs)
                       : EvaluateCorpusEstimator(records, safe, a.train.Estimator(),
                                                 ttt, a.jobs);
  report.wall_time_s = SecondsSince(start);

  const CorpusMetrics& mt = report.metrics;
  std::cout << "n          " << mt.n << " (failed " << mt.n_failed << ")\n"
            << "mae        " << FormatSig9(mt.mae) << "\n"
            << "r2         " << FormatSig9(mt.r2) << "\n"
            << "loss_sum   " << FormatSig9(mt.mean_final_safe_loss) << "\n"
            << "loss_mean  " << FormatSig9(mt.mean_final_safe_loss_mean) << "\n";
  for (const SimOutcome& o : mt.per_sim) {
    if (!o.error.empty()) std::cerr << "warning: " << o.error << "\n";
  }
  if (!a.out.empty()) WriteTextFile(a.out, MetricsJson(report));
  return kExitOk;
}

int Main(int argc, char** argv) {
  CLI::App app{"Diffusion coefficient recovery from field snapshots"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "diffrec 0.1.0");

  GenerateArgs gen;
  CLI::App* g = app.add_subcommand("generate", "write a simulated corpus");
  g->add_option("--sims", gen.sims, "number of simulations");
  g->add_option("--nx", gen.sim.grid.nx, "grid points in x");
  g->add_option("--ny", gen.sim.grid.ny, "grid points in y");
  g->add_option("--dx", gen.sim.grid.dx, "spacing in x");
  g->add_option("--dy", gen.sim.grid.dy, "spacing in y");
  g->add_option("--dt-sim", gen.sim.grid.dt_sim, "solver time step");
  g->add_option("--steps", gen.sim.n_steps, "solver steps per simulation");
  g->add_option("--save-interval", gen.sim.grid.save_interval, "steps between frames");
  g->add_option("--alpha-min", gen.sim.alpha_min, "lower end of the alpha range");
  g->add_option("--alpha-max", gen.sim.alpha_max, "upper end of the alpha range");
  g->add_option("--seed", gen.sim.seed, "master seed (SAFE_PIT_SEED overrides)");
  g->add_option("--train-fraction", gen.train_fraction, "train share of the split");
  g->add_option("--split-seed", gen.split_seed, "split seed (default: master seed)");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--jobs", gen.jobs, "worker threads")->check(CLI::PositiveNumber);

  RecoverArgs rec;
  CLI::App* r = app.add_subcommand("recover", "recover alpha for one simulation");
  r->add_option("--data", rec.data, "corpus directory")->required();
  r->add_option("--sim-id", rec.sim_id, "simulation id")->required();
  r->add_option("--n-sub", rec.n_sub, "operator sub-steps per frame interval");
  rec.train.Register(r);
  r->add_option("--out", rec.out, "report.json with loss and alpha traces");
  r->add_option("--jobs", rec.jobs, "worker threads")->check(CLI::PositiveNumber);

  AblateArgs abl;
  CLI::App* b = app.add_subcommand("ablate", "sweep the sub-step count");
  b->add_option("--data", abl.data, "corpus directory")->required();
  b->add_option("--n-sub-list", abl.n_sub_list, "comma-separated sub-step counts")
      ->delimiter(',');
  b->add_option("--split", abl.split, "test | train | all")
      ->check(CLI::IsMember({"test", "train", "all"}));
  abl.train.Register(b);
  b->add_flag("--stability-only", abl.stability_only, "skip recovery columns");
  b->add_option("--out", abl.out, "CSV output file");
  b->add_option("--jobs", abl.jobs, "worker threads")->check(CLI::PositiveNumber);

  StabilityArgs st;
  CLI::App* s = app.add_subcommand("stability", "von Neumann stability numbers");
  s->add_option("--alpha", st.alpha, "diffusion coefficient")->required();
  s->add_option("--dt", st.dt, "time step")->required();
  s->add_option("--dx", st.dx, "spacing in x");
  s->add_option("--dy", st.dy, "spacing in y");

  EvaluateArgs ev;
  CLI::App* e = app.add_subcommand("evaluate", "recover alpha over a split");
  e->add_option("--data", ev.data, "corpus directory")->required();
  e->add_option("--split", ev.split, "test | train | all")
      ->check(CLI::IsMember({"test", "train", "all"}));
  e->add_option("--n-sub", ev.n_sub, "operator sub-steps per frame interval");
  ev.train.Register(e);
  e->add_option("--out", ev.out, "metrics.json");
  e->add_option("--jobs", ev.jobs, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (g->parsed()) return RunGenerate(gen);
    if (r->parsed()) return RunRecover(rec);
    if (b->parsed()) return RunAblate(abl);
    if (s->parsed()) return RunStability(st);
    if (e->parsed()) return RunEvaluate(ev);
  } catch (const StabilityError& err) {
    std::cerr << "error: " << err.what() << "\n"
              << "admissible dt_sim < " << FormatSig9(err.admissible_dt()) << "\n";
    return kExitInvalid;
  } catch (const InvalidInput& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace
}  // namespace diffrec

int main(int argc, char** argv) { return diffrec::Main(argc, argv); }
