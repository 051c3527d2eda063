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
#ifndef DIFFREC_SRC_STENCIL_H_
#define DIFFREC_SRC_STENCIL_H_

#include <cstddef>

namespace diffrec::internal {

// Visits every grid point with its periodic five-point neighbourhood.
// `op(k, up, row, down, i, im1, ip1)` receives the flat index and row
// pointers; the interior loop is kept free of modulo arithmetic.
template <typename Op>
inline void ForEachStencil(const double* in, int ny, int nx, Op&& op) {
  const std::size_t w = static_cast<std::size_t>(nx);
  for (int j = 0; j < ny; ++j) {
    const double* up = in + static_cast<std::size_t>(j == 0 ? ny - 1 : j - 1) * w;
    const double* row = in + static_cast<std::size_t>(j) * w;
    const double* down = in + static_cast<std::size_t>(j == ny - 1 ? 0 : j + 1) * w;
    const std::size_t base = static_cast<std::size_t>(j) * w;
    op(base, up, row, down, 0, nx - 1, 1);
    for (int i = 1; i < nx - 1; ++i) op(base + i, up, row, down, i, i - 1, i + 1);
    op(base + nx - 1, up, row, down, nx - 1, nx - 2, 0);
  }
}

inline double FivePoint(const double* up, const double* row, const double* down,
                        int i, int im1, int ip1) {
  return row[ip1] + row[im1] - 4.0 * row[i] + up[i] + down[i];
}

}  // namespace diffrec::internal

#endif  // DIFFREC_SRC_STENCIL_H_
