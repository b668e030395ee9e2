// Copyright 2026 The MCIR Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense f64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle to a buffer, like a framework tensor: copying
// the handle aliases the data. Use Clone() for an independent copy. All
// differentiable operations are members of Tape, which records one entry per
// operation whose output needs a gradient; Tape::Backward replays the
// recorded entries once, in reverse order.
//
// Row-wise operations (Softmax, LayerNorm, NormalizeRows, ...) treat a tensor
// of any rank as a matrix of rows() x cols() where cols() is the last
// dimension.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mcir {

using Shape = std::vector<std::size_t>;

std::string ShapeToString(const Shape& shape);
std::size_t ShapeNumel(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows here
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<double> data,
                         bool requires_grad = false);
  // Shape {1}.
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t cols() const { return node_->shape.back(); }
  std::size_t rows() const { return numel() / cols(); }

  std::span<const double> data() const { return node_->data; }
  // Used by optimizers and loaders; must not be called while a tape that
  // recorded this tensor is still going to run Backward.
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void ZeroGrad() { node_->grad.clear(); }

  // Deep copy keeping requires_grad, without gradient.
  Tensor Clone() const;
  // Deep copy that does not require a gradient.
  Tensor Detach() const;

  bool SameStorage(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
  friend class Tape;
};

// Plain (non-recorded) cosine similarity. Throws DegenerateInputError on a
// zero-norm input and ShapeError on a length mismatch.
double CosineSimilarity(std::span<const double> u, std::span<const double> v);

class Tape {
 public:
  // A tape built with record=false computes forward values only; use it for
  // inference.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // [m x k] * [k x n] -> [m x n].
  Tensor MatMul(const Tensor& a, const Tensor& b);
  // 2-D transpose.
  Tensor Transpose(const Tensor& a);

  // Elementwise, identical shapes.
  Tensor Add(const Tensor& a, const Tensor& b);
  Tensor Sub(const Tensor& a, const Tensor& b);
  Tensor Mul(const Tensor& a, const Tensor& b);
  // x [.. x n] + b [n] added to every row.
  Tensor AddRowVector(const Tensor& x, const Tensor& b);
  Tensor Scale(const Tensor& x, double factor);
  // x * s for a one-element tensor s.
  Tensor ScaleBy(const Tensor& x, const Tensor& s);

  // GELU, tanh approximation:
  //   0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
  Tensor Gelu(const Tensor& x);
  Tensor Relu(const Tensor& x);
  Tensor Sigmoid(const Tensor& x);

  // Row-wise, max-subtracted.
  Tensor Softmax(const Tensor& x);
  Tensor LogSoftmax(const Tensor& x);
  // Row-wise (x - mean) / sqrt(var + eps) * gamma + beta; a constant row
  // normalizes to exactly 0, so the output is beta.
  Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   double eps);
  // Row-wise x / ||x||_2. Zero rows throw DegenerateInputError.
  Tensor NormalizeRows(const Tensor& x);

  // Rows of a 2-D table; the gradient scatter-adds into the table.
  Tensor GatherRows(const Tensor& table, std::span<const std::size_t> rows);
  Tensor ConcatRows(std::span<const Tensor> parts);
  Tensor ConcatCols(std::span<const Tensor> parts);
  Tensor SliceCols(const Tensor& x, std::size_t start, std::size_t count);
  // Row i as a 1-D tensor of length cols().
  Tensor Row(const Tensor& x, std::size_t i);
  // Stacks equally sized tensors into [n x numel].
  Tensor StackRows(std::span<const Tensor> parts);
  Tensor Reshape(const Tensor& x, Shape shape);

  Tensor Sum(const Tensor& x);
  Tensor Mean(const Tensor& x);
  Tensor Dot(const Tensor& a, const Tensor& b);
  // out[i] = x[i, index[i]] for a 2-D x.
  Tensor PickPerRow(const Tensor& x, std::span<const std::size_t> index);
  // Differentiable cosine similarity of two equal-length tensors, shape {1}.
  Tensor Cosine(const Tensor& u, const Tensor& v);

  // Populates grad() of every requires_grad tensor reachable from `loss`.
  // Gradients accumulate, so callers zero leaf gradients between steps.
  // Throws InvariantError unless loss has exactly one element.
  void Backward(const Tensor& loss);

  std::size_t size() const { return ops_.size(); }
  bool recording() const { return record_; }

 private:
  using NodePtr = std::shared_ptr<detail::Node>;
  struct Op {
    const char* name;
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void()> backward;
  };

  // Creates the output node; requires_grad iff recording and any input
  // requires grad.
  NodePtr MakeOutput(Shape shape, std::initializer_list<const Tensor*> inputs);
  NodePtr MakeOutput(Shape shape, std::span<const Tensor> inputs);
  void Record(const char* name, std::vector<NodePtr> inputs, NodePtr output,
              std::function<void()> backward);

  bool record_;
  std::vector<Op> ops_;
};

}  // namespace mcir
