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

#include "mcir/tensor.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mcir/errors.h"

namespace mcir {

namespace {

using detail::Node;

std::vector<double>& GradOf(Node* n) {
  if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
  return n->grad;
}

void RequireSameShape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     ShapeToString(a.shape()) + " vs " +
                     ShapeToString(b.shape()));
  }
}

void Require2D(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                     ShapeToString(a.shape()));
  }
}

// c[m x n] += a[m x k] * b[k x n]
void GemmAcc(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::size_t ShapeNumel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  const std::size_t n = ShapeNumel(shape);
  return FromData(std::move(shape), std::vector<double>(n, 0.0),
                  requires_grad);
}

Tensor Tensor::FromData(Shape shape, std::vector<double> data,
                        bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (std::size_t d : shape) {
    if (d == 0) {
      throw ShapeError("tensor dimensions must be positive, got " +
                       ShapeToString(shape));
    }
  }
  if (ShapeNumel(shape) != data.size()) {
    throw ShapeError("shape " + ShapeToString(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + ShapeToString(shape()));
  }
  return node_->data[0];
}

Tensor Tensor::Clone() const {
  return FromData(node_->shape, node_->data, node_->requires_grad);
}

Tensor Tensor::Detach() const {
  return FromData(node_->shape, node_->data, false);
}

double CosineSimilarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine similarity: length mismatch " +
                     std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) {
    throw DegenerateInputError("cosine similarity of a zero-norm vector");
  }
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

// ---------------------------------------------------------------------------
// Tape plumbing

Tape::NodePtr Tape::MakeOutput(Shape shape,
                               std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->data.assign(ShapeNumel(shape), 0.0);
  node->shape = std::move(shape);
  if (record_) {
    for (const Tensor* t : inputs) {
      if (t->requires_grad()) node->requires_grad = true;
    }
  }
  return node;
}

Tape::NodePtr Tape::MakeOutput(Shape shape, std::span<const Tensor> inputs) {
  auto node = std::make_shared<Node>();
  node->data.assign(ShapeNumel(shape), 0.0);
  node->shape = std::move(shape);
  if (record_) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) node->requires_grad = true;
    }
  }
  return node;
}

void Tape::Record(const char* name, std::vector<NodePtr> inputs,
                  NodePtr output, std::function<void()> backward) {
  if (!output->requires_grad) return;
  ops_.push_back(
      Op{name, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::Backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw InvariantError("backward requires a scalar loss, got " +
                         (loss.defined() ? ShapeToString(loss.shape())
                                         : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;
  GradOf(loss.node_.get())[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not on a path to the loss
    it->backward();
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor Tape::MatMul(const Tensor& a, const Tensor& b) {
  Require2D("matmul", a);
  Require2D("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree for " +
                     ShapeToString(a.shape()) + " x " +
                     ShapeToString(b.shape()));
  }
  NodePtr out = MakeOutput({m, n}, {&a, &b});
  GemmAcc(a.node_->data.data(), b.node_->data.data(), out->data.data(), m, k,
          n);
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  Node* on = out.get();
  Record("matmul", {a.node_, b.node_}, out, [an, bn, on, m, k, n] {
    const double* dc = on->grad.data();
    if (an->requires_grad) {
      // dA = dC * B^T
      double* da = GradOf(an).data();
      const double* bd = bn->data.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += dc[i * n + j] * bd[p * n + j];
          da[i * k + p] += s;
        }
      }
    }
    if (bn->requires_grad) {
      // dB = A^T * dC
      double* db = GradOf(bn).data();
      const double* ad = an->data.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = ad[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += av * dc[i * n + j];
        }
      }
    }
  });
  return Tensor(out);
}

Tensor Tape::Transpose(const Tensor& a) {
  Require2D("transpose", a);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  NodePtr out = MakeOutput({n, m}, {&a});
  const auto& ad = a.node_->data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out->data[j * m + i] = ad[i * n + j];
  Node* an = a.node_.get();
  Node* on = out.get();
  Record("transpose", {a.node_}, out, [an, on, m, n] {
    auto& da = GradOf(an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += on->grad[j * m + i];
  });
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor Tape::Add(const Tensor& a, const Tensor& b) {
  RequireSameShape("add", a, b);
  NodePtr out = MakeOutput(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = a.node_->data[i] + b.node_->data[i];
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  Node* on = out.get();
  Record("add", {a.node_, b.node_}, out, [an, bn, on] {
    if (an->requires_grad) {
      auto& g = GradOf(an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = GradOf(bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    }
  });
  return Tensor(out);
}

Tensor Tape::Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape("sub", a, b);
  NodePtr out = MakeOutput(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = a.node_->data[i] - b.node_->data[i];
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  Node* on = out.get();
  Record("sub", {a.node_, b.node_}, out, [an, bn, on] {
    if (an->requires_grad) {
      auto& g = GradOf(an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = GradOf(bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= on->grad[i];
    }
  });
  return Tensor(out);
}

Tensor Tape::Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape("mul", a, b);
  NodePtr out = MakeOutput(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = a.node_->data[i] * b.node_->data[i];
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  Node* on = out.get();
  Record("mul", {a.node_, b.node_}, out, [an, bn, on] {
    if (an->requires_grad) {
      auto& g = GradOf(an);
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += on->grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& g = GradOf(bn);
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += on->grad[i] * an->data[i];
    }
  });
  return Tensor(out);
}

Tensor Tape::AddRowVector(const Tensor& x, const Tensor& b) {
  if (b.numel() != x.cols()) {
    throw ShapeError("add_row_vector: bias " + ShapeToString(b.shape()) +
                     " does not match rows of " + ShapeToString(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  NodePtr out = MakeOutput(x.shape(), {&x, &b});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out->data[r * cols + c] = x.node_->data[r * cols + c] + b.node_->data[c];
  Node* xn = x.node_.get();
  Node* bn = b.node_.get();
  Node* on = out.get();
  Record("add_row_vector", {x.node_, b.node_}, out, [xn, bn, on, rows, cols] {
    if (xn->requires_grad) {
      auto& g = GradOf(xn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = GradOf(bn);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += on->grad[r * cols + c];
    }
  });
  return Tensor(out);
}

Tensor Tape::Scale(const Tensor& x, double factor) {
  NodePtr out = MakeOutput(x.shape(), {&x});
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = x.node_->data[i] * factor;
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("scale", {x.node_}, out, [xn, on, factor] {
    auto& g = GradOf(xn);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * factor;
  });
  return Tensor(out);
}

Tensor Tape::ScaleBy(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw ShapeError("scale_by: factor must have one element, got " +
                     ShapeToString(s.shape()));
  }
  NodePtr out = MakeOutput(x.shape(), {&x, &s});
  const double f = s.node_->data[0];
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = x.node_->data[i] * f;
  Node* xn = x.node_.get();
  Node* sn = s.node_.get();
  Node* on = out.get();
  Record("scale_by", {x.node_, s.node_}, out, [xn, sn, on] {
    const double f = sn->data[0];
    if (xn->requires_grad) {
      auto& g = GradOf(xn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * f;
    }
    if (sn->requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        acc += on->grad[i] * xn->data[i];
      GradOf(sn)[0] += acc;
    }
  });
  return Tensor(out);
}

Tensor Tape::Gelu(const Tensor& x) {
  NodePtr out = MakeOutput(x.shape(), {&x});
  for (std::size_t i = 0; i < out->data.size(); ++i) {
    const double v = x.node_->data[i];
    out->data[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("gelu", {x.node_}, out, [xn, on] {
    auto& g = GradOf(xn);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xn->data[i];
      const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      g[i] += on->grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
  return Tensor(out);
}

Tensor Tape::Relu(const Tensor& x) {
  NodePtr out = MakeOutput(x.shape(), {&x});
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = std::max(0.0, x.node_->data[i]);
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("relu", {x.node_}, out, [xn, on] {
    auto& g = GradOf(xn);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xn->data[i] > 0.0) g[i] += on->grad[i];
  });
  return Tensor(out);
}

Tensor Tape::Sigmoid(const Tensor& x) {
  NodePtr out = MakeOutput(x.shape(), {&x});
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = 1.0 / (1.0 + std::exp(-x.node_->data[i]));
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("sigmoid", {x.node_}, out, [xn, on] {
    auto& g = GradOf(xn);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = on->data[i];
      g[i] += on->grad[i] * y * (1.0 - y);
    }
  });
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Row-wise

Tensor Tape::Softmax(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  NodePtr out = MakeOutput(x.shape(), {&x});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.node_->data.data() + r * cols;
    double* o = out->data.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= sum;
  }
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("softmax", {x.node_}, out, [xn, on, rows, cols] {
    auto& g = GradOf(xn);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = on->data.data() + r * cols;
      const double* dy = on->grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c)
        g[r * cols + c] += y[c] * (dy[c] - dot);
    }
  });
  return Tensor(out);
}

Tensor Tape::LogSoftmax(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  NodePtr out = MakeOutput(x.shape(), {&x});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.node_->data.data() + r * cols;
    double* o = out->data.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(in[c] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < cols; ++c) o[c] = in[c] - lse;
  }
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("log_softmax", {x.node_}, out, [xn, on, rows, cols] {
    auto& g = GradOf(xn);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = on->data.data() + r * cols;
      const double* dy = on->grad.data() + r * cols;
      double sum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) sum += dy[c];
      for (std::size_t c = 0; c < cols; ++c)
        g[r * cols + c] += dy[c] - std::exp(y[c]) * sum;
    }
  });
  return Tensor(out);
}

Tensor Tape::LayerNorm(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, double eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.numel() != cols || beta.numel() != cols) {
    throw ShapeError("layer_norm: gamma " + ShapeToString(gamma.shape()) +
                     " / beta " + ShapeToString(beta.shape()) +
                     " do not match last dimension of " +
                     ShapeToString(x.shape()));
  }
  if (!(eps > 0.0)) throw InputError("layer_norm: eps must be positive");
  NodePtr out = MakeOutput(x.shape(), {&x, &gamma, &beta});
  // Saved for backward.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* gd = gamma.node_->data.data();
  const double* bd = beta.node_->data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.node_->data.data() + r * cols;
    double* xh = xhat->data() + r * cols;
    const bool constant =
        std::all_of(in, in + cols, [&](double v) { return v == in[0]; });
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      xh[c] = constant ? 0.0 : (in[c] - mean) * is;
      out->data[r * cols + c] = xh[c] * gd[c] + bd[c];
    }
  }
  Node* xn = x.node_.get();
  Node* gn = gamma.node_.get();
  Node* bn = beta.node_.get();
  Node* on = out.get();
  Record("layer_norm", {x.node_, gamma.node_, beta.node_}, out,
         [xn, gn, bn, on, xhat, inv_std, rows, cols] {
           const double n = static_cast<double>(cols);
           for (std::size_t r = 0; r < rows; ++r) {
             const double* dy = on->grad.data() + r * cols;
             const double* xh = xhat->data() + r * cols;
             if (gn->requires_grad) {
               auto& g = GradOf(gn);
               for (std::size_t c = 0; c < cols; ++c) g[c] += dy[c] * xh[c];
             }
             if (bn->requires_grad) {
               auto& g = GradOf(bn);
               for (std::size_t c = 0; c < cols; ++c) g[c] += dy[c];
             }
             if (xn->requires_grad) {
               auto& g = GradOf(xn);
               double mean_dxh = 0.0, mean_dxh_xh = 0.0;
               for (std::size_t c = 0; c < cols; ++c) {
                 const double dxh = dy[c] * gn->data[c];
                 mean_dxh += dxh;
                 mean_dxh_xh += dxh * xh[c];
               }
               mean_dxh /= n;
               mean_dxh_xh /= n;
               const double is = (*inv_std)[r];
               for (std::size_t c = 0; c < cols; ++c) {
                 const double dxh = dy[c] * gn->data[c];
                 g[r * cols + c] += is * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
               }
             }
           }
         });
  return Tensor(out);
}

Tensor Tape::NormalizeRows(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  NodePtr out = MakeOutput(x.shape(), {&x});
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.node_->data.data() + r * cols;
    double ss = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ss += in[c] * in[c];
    if (ss == 0.0) {
      throw DegenerateInputError("normalize: row " + std::to_string(r) +
                                 " has zero norm");
    }
    const double nrm = std::sqrt(ss);
    (*norms)[r] = nrm;
    for (std::size_t c = 0; c < cols; ++c) out->data[r * cols + c] = in[c] / nrm;
  }
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("normalize_rows", {x.node_}, out, [xn, on, norms, rows, cols] {
    auto& g = GradOf(xn);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = on->data.data() + r * cols;
      const double* dy = on->grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[c] * dy[c];
      const double nrm = (*norms)[r];
      for (std::size_t c = 0; c < cols; ++c)
        g[r * cols + c] += (dy[c] - y[c] * dot) / nrm;
    }
  });
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Structural

Tensor Tape::GatherRows(const Tensor& table, std::span<const std::size_t> rows) {
  Require2D("gather_rows", table);
  const std::size_t n = table.shape()[0], cols = table.shape()[1];
  if (rows.empty()) throw ShapeError("gather_rows: no rows requested");
  for (std::size_t r : rows) {
    if (r >= n) {
      throw BoundsError("gather_rows: row " + std::to_string(r) +
                        " out of range for " + ShapeToString(table.shape()));
    }
  }
  NodePtr out = MakeOutput({rows.size(), cols}, {&table});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(table.node_->data.data() + rows[i] * cols, cols,
                out->data.data() + i * cols);
  Node* tn = table.node_.get();
  Node* on = out.get();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Record("gather_rows", {table.node_}, out, [tn, on, idx, cols] {
    auto& g = GradOf(tn);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c)
        g[idx[i] * cols + c] += on->grad[i * cols + c];
  });
  return Tensor(out);
}

Tensor Tape::ConcatRows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: column mismatch " +
                       ShapeToString(parts[0].shape()) + " vs " +
                       ShapeToString(p.shape()));
    }
    total += p.rows();
  }
  NodePtr out = MakeOutput({total, cols}, parts);
  std::vector<NodePtr> inputs;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy(p.node_->data.begin(), p.node_->data.end(),
              out->data.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.numel();
    inputs.push_back(p.node_);
  }
  Node* on = out.get();
  std::vector<Node*> raw;
  for (auto& n : inputs) raw.push_back(n.get());
  Record("concat_rows", inputs, out, [raw, on] {
    std::size_t offset = 0;
    for (Node* n : raw) {
      if (n->requires_grad) {
        auto& g = GradOf(n);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[offset + i];
      }
      offset += n->data.size();
    }
  });
  return Tensor(out);
}

Tensor Tape::ConcatCols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " +
                       ShapeToString(parts[0].shape()) + " vs " +
                       ShapeToString(p.shape()));
    }
    total += p.cols();
  }
  Shape shape = parts[0].shape();
  shape.back() = total;
  NodePtr out = MakeOutput(shape, parts);
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> starts;
  std::size_t start = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.node_->data.data() + r * c, c,
                  out->data.data() + r * total + start);
    inputs.push_back(p.node_);
    starts.push_back(start);
    start += c;
  }
  Node* on = out.get();
  std::vector<Node*> raw;
  for (auto& n : inputs) raw.push_back(n.get());
  Record("concat_cols", inputs, out, [raw, starts, on, rows, total] {
    for (std::size_t k = 0; k < raw.size(); ++k) {
      Node* n = raw[k];
      if (!n->requires_grad) continue;
      auto& g = GradOf(n);
      const std::size_t c = n->shape.back();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j)
          g[r * c + j] += on->grad[r * total + starts[k] + j];
    }
  });
  return Tensor(out);
}

Tensor Tape::SliceCols(const Tensor& x, std::size_t start, std::size_t count) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (count == 0 || start + count > cols) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     ShapeToString(x.shape()));
  }
  Shape shape = x.shape();
  shape.back() = count;
  NodePtr out = MakeOutput(shape, {&x});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.node_->data.data() + r * cols + start, count,
                out->data.data() + r * count);
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("slice_cols", {x.node_}, out, [xn, on, rows, cols, start, count] {
    auto& g = GradOf(xn);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < count; ++j)
        g[r * cols + start + j] += on->grad[r * count + j];
  });
  return Tensor(out);
}

Tensor Tape::Row(const Tensor& x, std::size_t i) {
  const std::size_t cols = x.cols();
  if (i >= x.rows()) {
    throw BoundsError("row " + std::to_string(i) + " out of range for " +
                      ShapeToString(x.shape()));
  }
  NodePtr out = MakeOutput({cols}, {&x});
  std::copy_n(x.node_->data.data() + i * cols, cols, out->data.data());
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("row", {x.node_}, out, [xn, on, i, cols] {
    auto& g = GradOf(xn);
    for (std::size_t c = 0; c < cols; ++c) g[i * cols + c] += on->grad[c];
  });
  return Tensor(out);
}

Tensor Tape::StackRows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("stack_rows: no inputs");
  const std::size_t d = parts[0].numel();
  for (const Tensor& p : parts) {
    if (p.numel() != d) {
      throw ShapeError("stack_rows: size mismatch " +
                       ShapeToString(parts[0].shape()) + " vs " +
                       ShapeToString(p.shape()));
    }
  }
  NodePtr out = MakeOutput({parts.size(), d}, parts);
  std::vector<NodePtr> inputs;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::copy(parts[i].node_->data.begin(), parts[i].node_->data.end(),
              out->data.begin() + static_cast<std::ptrdiff_t>(i * d));
    inputs.push_back(parts[i].node_);
  }
  Node* on = out.get();
  std::vector<Node*> raw;
  for (auto& n : inputs) raw.push_back(n.get());
  Record("stack_rows", inputs, out, [raw, on, d] {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!raw[i]->requires_grad) continue;
      auto& g = GradOf(raw[i]);
      for (std::size_t c = 0; c < d; ++c) g[c] += on->grad[i * d + c];
    }
  });
  return Tensor(out);
}

Tensor Tape::Reshape(const Tensor& x, Shape shape) {
  if (ShapeNumel(shape) != x.numel()) {
    throw ShapeError("reshape: " + ShapeToString(x.shape()) + " to " +
                     ShapeToString(shape));
  }
  NodePtr out = MakeOutput(std::move(shape), {&x});
  out->data = x.node_->data;
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("reshape", {x.node_}, out, [xn, on] {
    auto& g = GradOf(xn);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
  });
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Reductions

Tensor Tape::Sum(const Tensor& x) {
  NodePtr out = MakeOutput({1}, {&x});
  double s = 0.0;
  for (double v : x.node_->data) s += v;
  out->data[0] = s;
  Node* xn = x.node_.get();
  Node* on = out.get();
  Record("sum", {x.node_}, out, [xn, on] {
    auto& g = GradOf(xn);
    for (double& v : g) v += on->grad[0];
  });
  return Tensor(out);
}

Tensor Tape::Mean(const Tensor& x) {
  return Scale(Sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor Tape::Dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("dot: size mismatch " + ShapeToString(a.shape()) +
                     " vs " + ShapeToString(b.shape()));
  }
  NodePtr out = MakeOutput({1}, {&a, &b});
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    s += a.node_->data[i] * b.node_->data[i];
  out->data[0] = s;
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  Node* on = out.get();
  Record("dot", {a.node_, b.node_}, out, [an, bn, on] {
    const double dy = on->grad[0];
    if (an->requires_grad) {
      auto& g = GradOf(an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& g = GradOf(bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy * an->data[i];
    }
  });
  return Tensor(out);
}

Tensor Tape::PickPerRow(const Tensor& x, std::span<const std::size_t> index) {
  Require2D("pick_per_row", x);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (index.size() != rows) {
    throw ShapeError("pick_per_row: " + std::to_string(index.size()) +
                     " indices for " + ShapeToString(x.shape()));
  }
  for (std::size_t c : index) {
    if (c >= cols) throw BoundsError("pick_per_row: column out of range");
  }
  NodePtr out = MakeOutput({rows}, {&x});
  for (std::size_t r = 0; r < rows; ++r)
    out->data[r] = x.node_->data[r * cols + index[r]];
  Node* xn = x.node_.get();
  Node* on = out.get();
  std::vector<std::size_t> idx(index.begin(), index.end());
  Record("pick_per_row", {x.node_}, out, [xn, on, idx, cols] {
    auto& g = GradOf(xn);
    for (std::size_t r = 0; r < idx.size(); ++r)
      g[r * cols + idx[r]] += on->grad[r];
  });
  return Tensor(out);
}

Tensor Tape::Cosine(const Tensor& u, const Tensor& v) {
  if (u.numel() != v.numel()) {
    throw ShapeError("cosine: size mismatch " + ShapeToString(u.shape()) +
                     " vs " + ShapeToString(v.shape()));
  }
  const std::size_t d = u.numel();
  Tensor un = NormalizeRows(Reshape(u, {1, d}));
  Tensor vn = NormalizeRows(Reshape(v, {1, d}));
  return Dot(un, vn);
}

}  // namespace mcir
