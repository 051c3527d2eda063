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
#include "diffrec/tape.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "diffrec/errors.h"

namespace diffrec::ad {

Tensor::Tensor(int r, int c, std::vector<double> d)
    : rows(r), cols(c), data(std::move(d)) {
  if (data.size() != static_cast<std::size_t>(r) * c) {
    throw InvalidInput("tensor data does not match its shape");
  }
}

Var Tape::Leaf(Tensor value) { return Push(std::move(value), nullptr); }

Var Tape::Push(Tensor value,
               std::function<void(Tape&, const std::vector<double>&)> backward) {
  Node n;
  n.grad.assign(value.size(), 0.0);
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::Backward(Var output, double seed) {
  if (nodes_[output.id].value.size() != 1) {
    throw InvalidInput("Backward needs a scalar output");
  }
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  nodes_[output.id].grad[0] = seed;
  for (int i = output.id; i >= 0; --i) {
    // No nodes are appended during the sweep, so references stay valid.
    if (nodes_[i].backward) nodes_[i].backward(*this, nodes_[i].grad);
  }
}

namespace {

void RequireShape(bool ok, const char* what) {
  if (!ok) throw InvalidInput(std::string("tape shape mismatch in ") + what);
}

}  // namespace

Var MatMul(Tape& t, Var a, Var b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  RequireShape(A.cols == B.rows, "MatMul");
  Tensor C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A.at(i, k);
      for (int j = 0; j < B.cols; ++j) C.at(i, j) += aik * B.at(k, j);
    }
  }
  return t.Push(std::move(C), [a, b](Tape& tp, const std::vector<double>& g) {
    const Tensor& A = tp.value(a);
    const Tensor& B = tp.value(b);
    auto& ga = tp.mutable_grad(a);
    auto& gb = tp.mutable_grad(b);
    const int n = B.cols;
    for (int i = 0; i < A.rows; ++i) {
      for (int k = 0; k < A.cols; ++k) {
        double acc = 0.0;
        const double aik = A.at(i, k);
        for (int j = 0; j < n; ++j) {
          const double gij = g[static_cast<std::size_t>(i) * n + j];
          acc += gij * B.at(k, j);
          gb[static_cast<std::size_t>(k) * n + j] += aik * gij;
        }
        ga[static_cast<std::size_t>(i) * A.cols + k] += acc;
      }
    }
  });
}

Var AddRowBias(Tape& t, Var a, Var b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  RequireShape(B.size() == static_cast<std::size_t>(A.cols), "AddRowBias");
  Tensor C = A;
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(i, j) += B.data[j];
  }
  const int rows = A.rows;
  const int cols = A.cols;
  return t.Push(std::move(C), [a, b, rows, cols](Tape& tp, const std::vector<double>& g) {
    auto& ga = tp.mutable_grad(a);
    auto& gb = tp.mutable_grad(b);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const double v = g[static_cast<std::size_t>(i) * cols + j];
        ga[static_cast<std::size_t>(i) * cols + j] += v;
        gb[j] += v;
      }
    }
  });
}

Var Add(Tape& t, Var a, Var b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  RequireShape(A.rows == B.rows && A.cols == B.cols, "Add");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  return t.Push(std::move(C), [a, b](Tape& tp, const std::vector<double>& g) {
    auto& ga = tp.mutable_grad(a);
    auto& gb = tp.mutable_grad(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Var Scale(Tape& t, Var a, double s) {
  Tensor C = t.value(a);
  for (double& v : C.data) v *= s;
  return t.Push(std::move(C), [a, s](Tape& tp, const std::vector<double>& g) {
    auto& ga = tp.mutable_grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var Transpose(Tape& t, Var a) {
  const Tensor& A = t.value(a);
  Tensor C(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(j, i) = A.at(i, j);
  }
  const int rows = A.rows;
  const int cols = A.cols;
  return t.Push(std::move(C), [a, rows, cols](Tape& tp, const std::vector<double>& g) {
    auto& ga = tp.mutable_grad(a);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        ga[static_cast<std::size_t>(i) * cols + j] += g[static_cast<std::size_t>(j) * rows + i];
      }
    }
  });
}

Var Relu(Tape& t, Var a) {
  Tensor C = t.value(a);
  for (double& v : C.data) v = v > 0.0 ? v : 0.0;
  return t.Push(std::move(C), [a](Tape& tp, const std::vector<double>& g) {
    const Tensor& A = tp.value(a);
    auto& ga = tp.mutable_grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (A.data[i] > 0.0) ga[i] += g[i];
    }
  });
}

Var SoftmaxRows(Tape& t, Var a) {
  Tensor C = t.value(a);
  for (int i = 0; i < C.rows; ++i) {
    double m = C.at(i, 0);
    for (int j = 1; j < C.cols; ++j) m = std::max(m, C.at(i, j));
    double s = 0.0;
    for (int j = 0; j < C.cols; ++j) {
      C.at(i, j) = std::exp(C.at(i, j) - m);
      s += C.at(i, j);
    }
    for (int j = 0; j < C.cols; ++j) C.at(i, j) /= s;
  }
  Var out{static_cast<int>(t.size())};
  return t.Push(std::move(C), [a, out](Tape& tp, const std::vector<double>& g) {
    const Tensor& P = tp.value(out);
    auto& ga = tp.mutable_grad(a);
    for (int i = 0; i < P.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < P.cols; ++j) {
        dot += g[static_cast<std::size_t>(i) * P.cols + j] * P.at(i, j);
      }
      for (int j = 0; j < P.cols; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * P.cols + j;
        ga[k] += P.at(i, j) * (g[k] - dot);
      }
    }
  });
}

Var SliceCols(Tape& t, Var a, int begin, int end) {
  const Tensor& A = t.value(a);
  RequireShape(0 <= begin && begin < end && end <= A.cols, "SliceCols");
  const int w = end - begin;
  Tensor C(A.rows, w);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < w; ++j) C.at(i, j) = A.at(i, begin + j);
  }
  const int cols = A.cols;
  return t.Push(std::move(C), [a, begin, w, cols](Tape& tp, const std::vector<double>& g) {
    auto& ga = tp.mutable_grad(a);
    const std::size_t rows = g.size() / static_cast<std::size_t>(w);
    for (std::size_t i = 0; i < rows; ++i) {
      for (int j = 0; j < w; ++j) ga[i * cols + begin + j] += g[i * w + j];
    }
  });
}

Var ConcatCols(Tape& t, std::span<const Var> parts) {
  RequireShape(!parts.empty(), "ConcatCols");
  const int rows = t.value(parts[0]).rows;
  int cols = 0;
  for (Var p : parts) {
    RequireShape(t.value(p).rows == rows, "ConcatCols");
    cols += t.value(p).cols;
  }
  Tensor C(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Tensor& P = t.value(p);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < P.cols; ++j) C.at(i, off + j) = P.at(i, j);
    }
    off += P.cols;
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.Push(std::move(C), [saved, rows, cols](Tape& tp, const std::vector<double>& g) {
    int off = 0;
    for (Var p : saved) {
      const int pc = tp.value(p).cols;
      auto& gp = tp.mutable_grad(p);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < pc; ++j) {
          gp[static_cast<std::size_t>(i) * pc + j] += g[static_cast<std::size_t>(i) * cols + off + j];
        }
      }
      off += pc;
    }
  });
}

Var StackRows(Tape& t, std::span<const Var> rows) {
  RequireShape(!rows.empty(), "StackRows");
  const std::size_t n = t.value(rows[0]).size();
  Tensor C(static_cast<int>(rows.size()), static_cast<int>(n));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& R = t.value(rows[r]);
    RequireShape(R.size() == n, "StackRows");
    std::copy(R.data.begin(), R.data.end(), C.data.begin() + r * n);
  }
  std::vector<Var> saved(rows.begin(), rows.end());
  return t.Push(std::move(C), [saved, n](Tape& tp, const std::vector<double>& g) {
    for (std::size_t r = 0; r < saved.size(); ++r) {
      auto& gr = tp.mutable_grad(saved[r]);
      for (std::size_t j = 0; j < n; ++j) gr[j] += g[r * n + j];
    }
  });
}

Var MeanRows(Tape& t, Var a) {
  const Tensor& A = t.value(a);
  Tensor C(1, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.data[j] += A.at(i, j);
  }
  for (double& v : C.data) v /= A.rows;
  const int rows = A.rows;
  const int cols = A.cols;
  return t.Push(std::move(C), [a, rows, cols](Tape& tp, const std::vector<double>& g) {
    auto& ga = tp.mutable_grad(a);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) ga[static_cast<std::size_t>(i) * cols + j] += g[j] / rows;
    }
  });
}

Var MeanCols(Tape& t, Var a) {
  const Tensor& A = t.value(a);
  Tensor C(A.rows, 1);
  for (int i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < A.cols; ++j) s += A.at(i, j);
    C.data[i] = s / A.cols;
  }
  const int rows = A.rows;
  const int cols = A.cols;
  return t.Push(std::move(C), [a, rows, cols](Tape& tp, const std::vector<double>& g) {
    auto& ga = tp.mutable_grad(a);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) ga[static_cast<std::size_t>(i) * cols + j] += g[i] / cols;
    }
  });
}

namespace {

// Normalizes `n` values read with stride `stride` starting at `x`.
// Writes xhat and returns 1/sigma.
double NormalizeStrided(const double* x, double* xhat, int n, std::size_t stride,
                        double eps) {
  double mean = 0.0;
  for (int k = 0; k < n; ++k) mean += x[k * stride];
  mean /= n;
  double var = 0.0;
  for (int k = 0; k < n; ++k) {
    const double d = x[k * stride] - mean;
    var += d * d;
  }
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  for (int k = 0; k < n; ++k) xhat[k * stride] = (x[k * stride] - mean) * inv;
  return inv;
}

// dx = inv/n * (n*g - sum(g) - xhat * sum(g*xhat)), strided.
void NormalizeBackwardStrided(const double* g, const double* xhat, double* dx,
                              int n, std::size_t stride, double inv) {
  double sg = 0.0;
  double sgx = 0.0;
  for (int k = 0; k < n; ++k) {
    sg += g[k * stride];
    sgx += g[k * stride] * xhat[k * stride];
  }
  for (int k = 0; k < n; ++k) {
    dx[k * stride] += inv / n * (n * g[k * stride] - sg - xhat[k * stride] * sgx);
  }
}

}  // namespace

Var LayerNormRows(Tape& t, Var a, Var gamma, Var beta, double eps) {
  const Tensor& A = t.value(a);
  RequireShape(t.value(gamma).size() == static_cast<std::size_t>(A.cols) &&
                   t.value(beta).size() == static_cast<std::size_t>(A.cols),
               "LayerNormRows");
  const int rows = A.rows;
  const int cols = A.cols;
  auto xhat = std::make_shared<std::vector<double>>(A.size());
  auto inv = std::make_shared<std::vector<double>>(rows);
  for (int i = 0; i < rows; ++i) {
    (*inv)[i] = NormalizeStrided(A.data.data() + static_cast<std::size_t>(i) * cols,
                                 xhat->data() + static_cast<std::size_t>(i) * cols,
                                 cols, 1, eps);
  }
  Tensor C(rows, cols);
  const Tensor& G = t.value(gamma);
  const Tensor& B = t.value(beta);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      C.at(i, j) = G.data[j] * (*xhat)[static_cast<std::size_t>(i) * cols + j] + B.data[j];
    }
  }
  return t.Push(std::move(C), [a, gamma, beta, xhat, inv, rows, cols](
                                  Tape& tp, const std::vector<double>& g) {
    const Tensor& G = tp.value(gamma);
    auto& ga = tp.mutable_grad(a);
    auto& gg = tp.mutable_grad(gamma);
    auto& gb = tp.mutable_grad(beta);
    std::vector<double> gx(static_cast<std::size_t>(cols));
    for (int i = 0; i < rows; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) {
        gg[j] += g[base + j] * (*xhat)[base + j];
        gb[j] += g[base + j];
        gx[j] = g[base + j] * G.data[j];
      }
      NormalizeBackwardStrided(gx.data(), xhat->data() + base, ga.data() + base,
                               cols, 1, (*inv)[i]);
    }
  });
}

Var LayerNormColumns(Tape& t, Var a, double eps) {
  const Tensor& A = t.value(a);
  const int rows = A.rows;
  const int cols = A.cols;
  auto xhat = std::make_shared<std::vector<double>>(A.size());
  auto inv = std::make_shared<std::vector<double>>(cols);
  for (int j = 0; j < cols; ++j) {
    (*inv)[j] = NormalizeStrided(A.data.data() + j, xhat->data() + j, rows,
                                 static_cast<std::size_t>(cols), eps);
  }
  Tensor C(rows, cols, *xhat);
  return t.Push(std::move(C), [a, xhat, inv, rows, cols](Tape& tp,
                                                         const std::vector<double>& g) {
    auto& ga = tp.mutable_grad(a);
    for (int j = 0; j < cols; ++j) {
      NormalizeBackwardStrided(g.data() + j, xhat->data() + j, ga.data() + j,
                               rows, static_cast<std::size_t>(cols), (*inv)[j]);
    }
  });
}

Var Conv3x3Circular(Tape& t, Var x, Var w, Var b, int h, int width) {
  const Tensor& X = t.value(x);
  const Tensor& W = t.value(w);
  const Tensor& B = t.value(b);
  const int c_in = X.rows;
  const int c_out = W.rows;
  RequireShape(X.cols == h * width && W.cols == c_in * 9 &&
                   B.size() == static_cast<std::size_t>(c_out),
               "Conv3x3Circular");
  // Flat source index of every (pixel, tap) pair, shared by both passes.
  auto src = std::make_shared<std::vector<int>>(static_cast<std::size_t>(h) * width * 9);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < width; ++xx) {
      for (int dy = 0; dy < 3; ++dy) {
        for (int dx = 0; dx < 3; ++dx) {
          const int sy = (y + dy - 1 + h) % h;
          const int sx = (xx + dx - 1 + width) % width;
          (*src)[(static_cast<std::size_t>(y) * width + xx) * 9 + dy * 3 + dx] = sy * width + sx;
        }
      }
    }
  }
  const int hw = h * width;
  Tensor Y(c_out, hw);
  for (int co = 0; co < c_out; ++co) {
    for (int p = 0; p < hw; ++p) {
      double acc = B.data[co];
      for (int ci = 0; ci < c_in; ++ci) {
        const double* wr = &W.data[static_cast<std::size_t>(co) * c_in * 9 + ci * 9];
        const double* xr = &X.data[static_cast<std::size_t>(ci) * hw];
        const int* sr = &(*src)[static_cast<std::size_t>(p) * 9];
        for (int k = 0; k < 9; ++k) acc += wr[k] * xr[sr[k]];
      }
      Y.at(co, p) = acc;
    }
  }
  return t.Push(std::move(Y), [x, w, b, src, c_in, c_out, hw](Tape& tp,
                                                            const std::vector<double>& g) {
    const Tensor& X = tp.value(x);
    const Tensor& W = tp.value(w);
    auto& gx = tp.mutable_grad(x);
    auto& gw = tp.mutable_grad(w);
    auto& gb = tp.mutable_grad(b);
    for (int co = 0; co < c_out; ++co) {
      for (int p = 0; p < hw; ++p) {
        const double gy = g[static_cast<std::size_t>(co) * hw + p];
        if (gy == 0.0) continue;
        gb[co] += gy;
        for (int ci = 0; ci < c_in; ++ci) {
          const std::size_t wo = static_cast<std::size_t>(co) * c_in * 9 + ci * 9;
          const std::size_t xo = static_cast<std::size_t>(ci) * hw;
          const int* sr = &(*src)[static_cast<std::size_t>(p) * 9];
          for (int k = 0; k < 9; ++k) {
            gw[wo + k] += gy * X.data[xo + sr[k]];
            gx[xo + sr[k]] += gy * W.data[wo + k];
          }
        }
      }
    }
  });
}

Var Softplus(Tape& t, Var a) {
  Tensor C = t.value(a);
  for (double& v : C.data) {
    v = v > 30.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  return t.Push(std::move(C), [a](Tape& tp, const std::vector<double>& g) {
    const Tensor& A = tp.value(a);
    auto& ga = tp.mutable_grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double z = A.data[i];
      const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                : std::exp(z) / (1.0 + std::exp(z));
      ga[i] += g[i] * s;
    }
  });
}

}  // namespace diffrec::ad
