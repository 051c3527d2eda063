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
#ifndef DIFFREC_REPORT_H_
#define DIFFREC_REPORT_H_

#include <span>
#include <string>

#include "diffrec/field.h"
#include "diffrec/recovery.h"
#include "diffrec/safe_operator.h"

namespace diffrec {

enum class EstimatorPath { kScalar, kEstimator };

const char* PathName(EstimatorPath path);
const char* NormName(NormMode norm);

struct ExperimentReport {
  int n_sub = 0;
  NormMode norm = NormMode::kSum;
  EstimatorPath path = EstimatorPath::kScalar;
  CorpusMetrics metrics;
  StabilityReport stability;
  double wall_time_s = 0.0;
};

// Decimal with 9 significant digits; "nan" / "inf" / "-inf" otherwise.
std::string FormatSig9(double value);

inline constexpr const char* kAblationCsvHeader =
    "n_sub,dt_sub,sigma_max,alpha_max,stable,mae_alpha,r2,mean_safe_loss";

// One row per AblationRow, in the given order. mean_safe_loss uses the
// mean-over-pixels convention. Rows without recovery metrics (n == 0)
// leave the three metric columns empty.
std::string AblationCsv(std::span<const AblationRow> rows);

// JSON documents, doubles at full precision; NaN is written as null.
std::string MetricsJson(const ExperimentReport& report);
std::string RecoveryJson(int sim_id, double alpha_true, int n_sub,
                         EstimatorPath path, const RecoveryResult& result,
                         double wall_time_s);
std::string StabilityText(const StabilityReport& report, double alpha,
                          double dt, double dx, double dy);

}  // namespace diffrec

#endif  // DIFFREC_REPORT_H_
