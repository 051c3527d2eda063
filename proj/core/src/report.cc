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
#include "diffrec/report.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace diffrec {

using nlohmann::json;

namespace {

json Num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json StabilityJson(const StabilityReport& s) {
  return {{"lambda_max", Num(s.lambda_max)}, {"sigma", Num(s.sigma)},
          {"mu_x", Num(s.mu_x)},             {"mu_y", Num(s.mu_y)},
          {"alpha_max", Num(s.alpha_max)},   {"stable", s.stable}};
}

}  // namespace

const char* PathName(EstimatorPath path) {
  return path == EstimatorPath::kScalar ? "scalar" : "estimator";
}

const char* NormName(NormMode norm) {
  return norm == NormMode::kSum ? "sum" : "mean";
}

std::string FormatSig9(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

std::string AblationCsv(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out << kAblationCsvHeader << "\n";
  for (const AblationRow& r : rows) {
    out << r.n_sub << "," << FormatSig9(r.dt_sub) << ","
        << FormatSig9(r.stability.sigma) << ","
        << FormatSig9(r.stability.alpha_max) << ","
        << (r.stability.stable ? "true" : "false") << ",";
    if (r.metrics.n > 0) {
      out << FormatSig9(r.metrics.mae) << "," << FormatSig9(r.metrics.r2) << ","
          << FormatSig9(r.metrics.mean_final_safe_loss_mean);
    } else {
      out << ",,";
    }
    out << "\n";
  }
  return out.str();
}

std::string MetricsJson(const ExperimentReport& report) {
  const CorpusMetrics& m = report.metrics;
  json per_sim = json::array();
  for (const SimOutcome& o : m.per_sim) {
    json row = {{"sim_id", o.sim_id},
                {"alpha_true", Num(o.alpha_true)},
                {"alpha_hat", Num(o.alpha_hat)},
                {"abs_error", Num(std::abs(o.alpha_hat - o.alpha_true))},
                {"final_safe_loss", Num(o.final_safe_loss)},
                {"steps", o.steps_taken},
                {"converged", o.converged}};
    if (!o.error.empty()) row["error"] = o.error;
    per_sim.push_back(row);
  }
  json j = {
      {"setting",
       {{"n_sub", report.n_sub},
        {"norm", NormName(report.norm)},
        {"path", PathName(report.path)}}},
      {"mae", Num(m.mae)},
      {"r2", Num(m.r2)},
      {"r2_defined", m.r2_defined},
      {"n", m.n},
      {"n_failed", m.n_failed},
      {"mean_final_safe_loss_sum", Num(m.mean_final_safe_loss)},
      {"mean_final_safe_loss_mean", Num(m.mean_final_safe_loss_mean)},
      {"stability", StabilityJson(report.stability)},
      {"wall_time_s", report.wall_time_s},
      {"per_sim", per_sim},
  };
  return j.dump(2) + "\n";
}

std::string RecoveryJson(int sim_id, double alpha_true, int n_sub,
                         EstimatorPath path, const RecoveryResult& result,
                         double wall_time_s) {
  json loss = json::array();
  for (double v : result.loss_trace) loss.push_back(Num(v));
  json j = {
      {"sim_id", sim_id},
      {"n_sub", n_sub},
      {"path", PathName(path)},
      {"alpha_true", alpha_true},
      {"alpha_hat", Num(result.alpha_hat)},
      {"abs_error", Num(std::abs(result.alpha_hat - alpha_true))},
      {"final_safe_loss", Num(result.final_safe_loss)},
      {"steps", result.steps_taken},
      {"converged", result.converged},
      {"rejected_steps", result.rejected_steps},
      {"wall_time_s", wall_time_s},
      {"loss_trace", loss},
      {"alpha_trace", result.alpha_trace},
  };
  return j.dump(2) + "\n";
}

std::string StabilityText(const StabilityReport& s, double alpha, double dt,
                          double dx, double dy) {
  std::ostringstream out;
  out << "alpha      " << FormatSig9(alpha) << "\n"
      << "dt         " << FormatSig9(dt) << "\n"
      << "dx, dy     " << FormatSig9(dx) << ", " << FormatSig9(dy) << "\n"
      << "lambda_max " << FormatSig9(s.lambda_max) << "\n"
      << "mu_x       " << FormatSig9(s.mu_x) << "\n"
      << "mu_y       " << FormatSig9(s.mu_y) << "\n"
      << "sigma      " << FormatSig9(s.sigma) << "\n"
      << "alpha_max  " << FormatSig9(s.alpha_max) << "\n"
      << "verdict    " << (s.stable ? "stable" : "unstable") << "\n";
  return out.str();
}

}  // namespace diffrec
