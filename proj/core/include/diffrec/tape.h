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
#ifndef DIFFREC_TAPE_H_
#define DIFFREC_TAPE_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace diffrec::ad {

// Dense row-major matrix. Convolution activations use rows = channels and
// cols = height * width.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  Tensor(int r, int c, std::vector<double> d);

  std::size_t size() const { return data.size(); }
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

// Reverse-mode gradient record. Every op appends a node holding its value
// and a closure that scatters the node's gradient into its inputs. Nodes
// are only ever appended, so the tape order is a topological order.
class Tape {
 public:
  Var Leaf(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const std::vector<double>& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(output)/d(output) = seed for a 1x1 output and propagates.
  void Backward(Var output, double seed = 1.0);

  // Low-level: adds a node whose backward receives (tape, node grad).
  Var Push(Tensor value, std::function<void(Tape&, const std::vector<double>&)> backward);
  std::vector<double>& mutable_grad(Var v) { return nodes_[v.id].grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void(Tape&, const std::vector<double>&)> backward;
  };
  std::vector<Node> nodes_;
};

// C = A * B.
Var MatMul(Tape& t, Var a, Var b);
// A with row vector b (1 x cols) added to every row.
Var AddRowBias(Tape& t, Var a, Var b);
Var Add(Tape& t, Var a, Var b);
Var Scale(Tape& t, Var a, double s);
Var Transpose(Tape& t, Var a);
Var Relu(Tape& t, Var a);
// Row-wise softmax.
Var SoftmaxRows(Tape& t, Var a);
Var SliceCols(Tape& t, Var a, int begin, int end);
Var ConcatCols(Tape& t, std::span<const Var> parts);
// Stacks 1 x n (or n x 1) vectors into a k x n matrix.
Var StackRows(Tape& t, std::span<const Var> rows);
// 1 x cols mean over rows.
Var MeanRows(Tape& t, Var a);
// Column vector (rows x 1) of per-row means.
Var MeanCols(Tape& t, Var a);
// Per-row layer norm with affine gamma/beta (both 1 x cols).
Var LayerNormRows(Tape& t, Var a, Var gamma, Var beta, double eps = 1e-5);
// Normalizes every column across rows (channels), no affine.
Var LayerNormColumns(Tape& t, Var a, double eps = 1e-5);
// 3x3 convolution with circular padding. Input is c_in x (h*w); weights are
// c_out x (c_in*9) with taps ordered (ci, dy, dx); bias is c_out x 1.
Var Conv3x3Circular(Tape& t, Var x, Var w, Var b, int h, int width);
// Elementwise log(1 + exp(a)).
Var Softplus(Tape& t, Var a);

}  // namespace diffrec::ad

#endif  // DIFFREC_TAPE_H_
