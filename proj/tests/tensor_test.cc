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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mcir/errors.h"
#include "test_util.h"

namespace mcir {
namespace {

using testing::GradCheck;
using testing::RandomTensor;

TEST(TensorTest, FromDataChecksLength) {
  EXPECT_THROW(Tensor::FromData({2, 2}, {1, 2, 3}), ShapeError);
  const Tensor t = Tensor::FromData({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(MatMulTest, IdentityAndScalar) {
  Tape tape(false);
  const Tensor eye = Tensor::FromData({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::FromData({2, 2}, {3, 4, 5, 6});
  const Tensor out = tape.MatMul(eye, m);
  EXPECT_EQ(std::vector<double>(out.data().begin(), out.data().end()),
            (std::vector<double>{3, 4, 5, 6}));
  EXPECT_EQ(tape.MatMul(Tensor::FromData({1, 1}, {2}),
                        Tensor::FromData({1, 1}, {3})).item(),
            6.0);
}

TEST(MatMulTest, MatchesTripleLoop) {
  std::mt19937_64 gen(1);
  const Tensor a = RandomTensor({3, 4}, gen, false);
  const Tensor b = RandomTensor({4, 2}, gen, false);
  Tape tape(false);
  const Tensor out = tape.MatMul(a, b);
  const testing::Mat oracle = testing::MatMulLoop(testing::ToMat(a), testing::ToMat(b));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_NEAR(out.data()[i * 2 + j], oracle[i][j], 1e-12);
}

TEST(MatMulTest, RejectsMismatchedInner) {
  Tape tape;
  EXPECT_THROW(tape.MatMul(Tensor::Zeros({2, 3}), Tensor::Zeros({2, 3})),
               ShapeError);
}

TEST(SoftmaxTest, UniformAndStable) {
  Tape tape(false);
  const Tensor u = tape.Softmax(Tensor::FromData({3}, {0, 0, 0}));
  for (double v : u.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  const Tensor big = tape.Softmax(Tensor::FromData({2}, {1000, 0}));
  EXPECT_NEAR(big.data()[0], 1.0, 1e-15);
  EXPECT_NEAR(big.data()[1], 0.0, 1e-15);
  EXPECT_TRUE(std::isfinite(big.data()[1]));
}

TEST(SoftmaxTest, MatchesLongDoubleDefinition) {
  std::mt19937_64 gen(2);
  const Tensor x = RandomTensor({5}, gen, false, 3.0);
  Tape tape(false);
  const Tensor s = tape.Softmax(x);
  long double z = 0;
  for (double v : x.data()) z += std::exp(static_cast<long double>(v));
  for (std::size_t i = 0; i < 5; ++i) {
    const long double want = std::exp(static_cast<long double>(x.data()[i])) / z;
    EXPECT_NEAR(s.data()[i], static_cast<double>(want), 1e-12);
  }
}

TEST(LayerNormTest, ConstantRowGivesBeta) {
  Tape tape(false);
  const Tensor out = tape.LayerNorm(Tensor::FromData({3}, {5, 5, 5}),
                                    Tensor::FromData({3}, {1, 1, 1}),
                                    Tensor::FromData({3}, {0, 0, 0}), 1e-5);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNormTest, AnalyticTwoElementCase) {
  Tape tape(false);
  const Tensor out = tape.LayerNorm(Tensor::FromData({2}, {1, -1}),
                                    Tensor::FromData({2}, {2, 2}),
                                    Tensor::FromData({2}, {1, 1}), 1e-12);
  EXPECT_NEAR(out.data()[0], 3.0, 1e-10);
  EXPECT_NEAR(out.data()[1], -1.0, 1e-10);
}

TEST(LayerNormTest, MatchesDefinition) {
  std::mt19937_64 gen(3);
  const Tensor x = RandomTensor({2, 6}, gen, false);
  const Tensor g = RandomTensor({6}, gen, false);
  const Tensor b = RandomTensor({6}, gen, false);
  Tape tape(false);
  const Tensor out = tape.LayerNorm(x, g, b, 1e-5);
  for (std::size_t r = 0; r < 2; ++r) {
    const std::vector<double> row(x.data().begin() + r * 6,
                                  x.data().begin() + (r + 1) * 6);
    const std::vector<double> want =
        testing::LayerNormLoop(row, g.data(), b.data(), 1e-5);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out.data()[r * 6 + j], want[j], 1e-10);
  }
}

TEST(CosineTest, Examples) {
  const std::vector<double> u = {1, 2, 3};
  EXPECT_NEAR(CosineSimilarity(u, u), 1.0, 1e-15);
  const std::vector<double> a = {1, 0}, b = {0, 1};
  EXPECT_EQ(CosineSimilarity(a, b), 0.0);
  const std::vector<double> z = {0, 0};
  EXPECT_THROW(CosineSimilarity(a, z), DegenerateInputError);
  const std::vector<double> c = {1, 2, 3, 4};
  EXPECT_THROW(CosineSimilarity(a, c), ShapeError);
}

TEST(CosineTest, MatchesDefinition) {
  std::mt19937_64 gen(4);
  const std::vector<double> u = testing::RandomVector(7, gen);
  const std::vector<double> v = testing::RandomVector(7, gen);
  long double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    dot += static_cast<long double>(u[i]) * v[i];
    nu += static_cast<long double>(u[i]) * u[i];
    nv += static_cast<long double>(v[i]) * v[i];
  }
  EXPECT_NEAR(CosineSimilarity(u, v),
              static_cast<double>(dot / std::sqrt(nu * nv)), 1e-12);
  Tape tape(false);
  EXPECT_NEAR(tape.Cosine(Tensor::FromData({7}, u), Tensor::FromData({7}, v)).item(),
              CosineSimilarity(u, v), 1e-15);
}

TEST(BackwardTest, SumGivesOnes) {
  Tensor x = Tensor::FromData({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tape tape;
  tape.Backward(tape.Sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(BackwardTest, DotWithItself) {
  Tensor x = Tensor::FromData({2}, {1, 2}, true);
  Tape tape;
  tape.Backward(tape.Dot(x, x));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(BackwardTest, RequiresScalarLoss) {
  Tensor x = Tensor::FromData({2}, {1, 2}, true);
  Tape tape;
  const Tensor y = tape.Scale(x, 2.0);
  EXPECT_THROW(tape.Backward(y), InvariantError);
}

TEST(BackwardTest, ReusedTensorAccumulates) {
  Tensor x = Tensor::FromData({1}, {3}, true);
  Tape tape;
  tape.Backward(tape.Sum(tape.Add(tape.Mul(x, x), x)));
  EXPECT_EQ(x.grad()[0], 7.0);
}

TEST(TapeTest, NonRecordingTapeStoresNothing) {
  Tensor x = Tensor::FromData({2}, {1, 2}, true);
  Tape tape(false);
  const Tensor y = tape.Sum(tape.Mul(x, x));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(y.item(), 5.0);
}

// Every primitive: a random weighting makes the output a scalar.
class PrimitiveGradTest : public ::testing::Test {
 protected:
  void Check(const std::function<Tensor(Tape&)>& f, std::vector<Tensor> leaves,
             const Shape& out_shape) {
    const Tensor weights = RandomTensor(out_shape, gen_, false);
    const auto loss = [&](Tape& tape) {
      return tape.Sum(tape.Mul(f(tape), weights));
    };
    const testing::GradCheckResult r = GradCheck(loss, std::move(leaves));
    EXPECT_LE(r.worst_relative, 1e-4) << r.worst_where;
  }
  std::mt19937_64 gen_{99};
};

TEST_F(PrimitiveGradTest, MatMul) {
  Tensor a = RandomTensor({3, 4}, gen_), b = RandomTensor({4, 2}, gen_);
  Check([&](Tape& t) { return t.MatMul(a, b); }, {a, b}, {3, 2});
}

TEST_F(PrimitiveGradTest, Transpose) {
  Tensor a = RandomTensor({3, 4}, gen_);
  Check([&](Tape& t) { return t.Transpose(a); }, {a}, {4, 3});
}

TEST_F(PrimitiveGradTest, AddSubMul) {
  Tensor a = RandomTensor({2, 3}, gen_), b = RandomTensor({2, 3}, gen_);
  Check([&](Tape& t) { return t.Add(a, b); }, {a, b}, {2, 3});
  Check([&](Tape& t) { return t.Sub(a, b); }, {a, b}, {2, 3});
  Check([&](Tape& t) { return t.Mul(a, b); }, {a, b}, {2, 3});
}

TEST_F(PrimitiveGradTest, AddRowVector) {
  Tensor x = RandomTensor({3, 4}, gen_), b = RandomTensor({4}, gen_);
  Check([&](Tape& t) { return t.AddRowVector(x, b); }, {x, b}, {3, 4});
}

TEST_F(PrimitiveGradTest, ScaleAndScaleBy) {
  Tensor x = RandomTensor({2, 3}, gen_), s = RandomTensor({1}, gen_);
  Check([&](Tape& t) { return t.Scale(x, -1.7); }, {x}, {2, 3});
  Check([&](Tape& t) { return t.ScaleBy(x, s); }, {x, s}, {2, 3});
}

TEST_F(PrimitiveGradTest, Activations) {
  Tensor x = RandomTensor({3, 5}, gen_);
  Check([&](Tape& t) { return t.Gelu(x); }, {x}, {3, 5});
  Check([&](Tape& t) { return t.Sigmoid(x); }, {x}, {3, 5});
  // Kinks are measure zero; random inputs avoid them.
  Check([&](Tape& t) { return t.Relu(x); }, {x}, {3, 5});
}

TEST_F(PrimitiveGradTest, SoftmaxAndLogSoftmax) {
  Tensor x = RandomTensor({3, 4}, gen_);
  Check([&](Tape& t) { return t.Softmax(x); }, {x}, {3, 4});
  Check([&](Tape& t) { return t.LogSoftmax(x); }, {x}, {3, 4});
}

TEST_F(PrimitiveGradTest, LayerNorm) {
  Tensor x = RandomTensor({3, 5}, gen_), g = RandomTensor({5}, gen_),
         b = RandomTensor({5}, gen_);
  Check([&](Tape& t) { return t.LayerNorm(x, g, b, 1e-5); }, {x, g, b}, {3, 5});
}

TEST_F(PrimitiveGradTest, NormalizeRows) {
  Tensor x = RandomTensor({3, 4}, gen_);
  Check([&](Tape& t) { return t.NormalizeRows(x); }, {x}, {3, 4});
}

TEST_F(PrimitiveGradTest, GatherRowsWithRepeats) {
  Tensor table = RandomTensor({4, 3}, gen_);
  const std::vector<std::size_t> rows = {2, 0, 2};
  Check([&](Tape& t) { return t.GatherRows(table, rows); }, {table}, {3, 3});
}

TEST_F(PrimitiveGradTest, ConcatAndSlice) {
  Tensor a = RandomTensor({2, 3}, gen_), b = RandomTensor({1, 3}, gen_),
         c = RandomTensor({2, 2}, gen_);
  Check([&](Tape& t) { const Tensor p[] = {a, b}; return t.ConcatRows(p); },
        {a, b}, {3, 3});
  Check([&](Tape& t) { const Tensor p[] = {a, c}; return t.ConcatCols(p); },
        {a, c}, {2, 5});
  Check([&](Tape& t) { return t.SliceCols(a, 1, 2); }, {a}, {2, 2});
}

TEST_F(PrimitiveGradTest, RowStackReshape) {
  Tensor a = RandomTensor({3, 4}, gen_), u = RandomTensor({4}, gen_),
         v = RandomTensor({4}, gen_);
  Check([&](Tape& t) { return t.Row(a, 1); }, {a}, {4});
  Check([&](Tape& t) { const Tensor p[] = {u, v}; return t.StackRows(p); },
        {u, v}, {2, 4});
  Check([&](Tape& t) { return t.Reshape(a, {2, 6}); }, {a}, {2, 6});
}

TEST_F(PrimitiveGradTest, Reductions) {
  Tensor a = RandomTensor({2, 3}, gen_), b = RandomTensor({2, 3}, gen_);
  Check([&](Tape& t) { return t.Sum(a); }, {a}, {1});
  Check([&](Tape& t) { return t.Mean(a); }, {a}, {1});
  Check([&](Tape& t) { return t.Dot(a, b); }, {a, b}, {1});
}

TEST_F(PrimitiveGradTest, PickPerRowAndCosine) {
  Tensor x = RandomTensor({3, 4}, gen_);
  const std::vector<std::size_t> idx = {3, 0, 1};
  Check([&](Tape& t) { return t.PickPerRow(x, idx); }, {x}, {3});
  Tensor u = RandomTensor({5}, gen_), v = RandomTensor({5}, gen_);
  Check([&](Tape& t) { return t.Cosine(u, v); }, {u, v}, {1});
}

TEST(TensorInvariantTest, GradLengthMatchesData) {
  std::mt19937_64 gen(5);
  Tensor a = RandomTensor({3, 4}, gen), b = RandomTensor({4, 2}, gen);
  Tape tape;
  tape.Backward(tape.Sum(tape.Gelu(tape.MatMul(a, b))));
  EXPECT_EQ(a.grad().size(), a.numel());
  EXPECT_EQ(b.grad().size(), b.numel());
  for (double g : a.grad()) EXPECT_TRUE(std::isfinite(g));
}

}  // namespace
}  // namespace mcir
