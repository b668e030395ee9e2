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

#include "mcir/pretrain.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mcir/errors.h"
#include "mcir/rng.h"
#include "mcir/synthdata.h"
#include "test_util.h"

namespace mcir {
namespace {

std::vector<Tensor> Vectors(std::size_t n, std::size_t d, std::mt19937_64& gen) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::RandomTensor({d}, gen));
  return out;
}

double Loss(std::span<const Tensor> q, std::span<const Tensor> t,
            double temperature = 1.0) {
  Tape tape(false);
  return ContrastiveLoss(tape, q, t, temperature).item();
}

// Direct summation of the definition in long double.
double LossOracle(std::span<const Tensor> q, std::span<const Tensor> t,
                  double temperature) {
  auto cos = [](const Tensor& a, const Tensor& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
      dot += static_cast<long double>(a[i]) * b[i];
      na += static_cast<long double>(a[i]) * a[i];
      nb += static_cast<long double>(b[i]) * b[i];
    }
    return dot / std::sqrt(na * nb);
  };
  long double total = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    long double z = 0;
    for (std::size_t j = 0; j < t.size(); ++j) z += std::exp(cos(q[i], t[j]) / temperature);
    total += -std::log(std::exp(cos(q[i], t[i]) / temperature) / z);
  }
  return static_cast<double>(total / q.size());
}

TEST(ComposeQueryTest, Examples) {
  Tape tape(false);
  const Tensor composed = ComposeQuery(tape, Tensor::FromData({2}, {1, 2}),
                                       Tensor::FromData({2}, {0, 0}));
  EXPECT_EQ(composed.data()[0], 1.0);
  EXPECT_EQ(composed.data()[1], 2.0);
  const Tensor b = ComposeQuery(tape, Tensor::FromData({2}, {1, 0}),
                                Tensor::FromData({2}, {0, 1}));
  EXPECT_EQ(b.data()[0], 1.0);
  EXPECT_EQ(b.data()[1], 1.0);
  std::mt19937_64 gen(1);
  const Tensor u = testing::RandomTensor({6}, gen, false);
  const Tensor v = testing::RandomTensor({6}, gen, false);
  EXPECT_EQ(testing::MaxAbsDiff(ComposeQuery(tape, u, v).data(),
                                ComposeQuery(tape, v, u).data()),
            0.0);
}

TEST(ContrastiveLossTest, SingleItemIsZero) {
  std::mt19937_64 gen(2);
  const std::vector<Tensor> q = Vectors(1, 5, gen), t = Vectors(1, 5, gen);
  EXPECT_EQ(Loss(q, t), 0.0);
  EXPECT_EQ(Loss(q, t, 0.07), 0.0);
}

TEST(ContrastiveLossTest, EqualSimilaritiesGiveLogB) {
  std::mt19937_64 gen(3);
  for (std::size_t b : {2u, 5u, 32u}) {
    const std::vector<Tensor> q = Vectors(b, 6, gen);
    const Tensor same = testing::RandomTensor({6}, gen);
    const std::vector<Tensor> t(b, same);
    EXPECT_NEAR(Loss(q, t), std::log(static_cast<double>(b)), 1e-9);
    EXPECT_NEAR(Loss(q, t, 0.1), std::log(static_cast<double>(b)), 1e-9);
  }
}

TEST(ContrastiveLossTest, MatchesDirectSummation) {
  std::mt19937_64 gen(4);
  const std::vector<Tensor> q = Vectors(4, 8, gen), t = Vectors(4, 8, gen);
  EXPECT_NEAR(Loss(q, t), LossOracle(q, t, 1.0), 1e-10);
  EXPECT_NEAR(Loss(q, t, 0.1), LossOracle(q, t, 0.1), 1e-10);
}

TEST(ContrastiveLossTest, InvariantUnderJointPermutation) {
  std::mt19937_64 gen(5);
  const std::vector<Tensor> q = Vectors(6, 4, gen), t = Vectors(6, 4, gen);
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  std::vector<Tensor> qp, tp;
  for (std::size_t i : perm) {
    qp.push_back(q[i]);
    tp.push_back(t[i]);
  }
  EXPECT_NEAR(Loss(q, t), Loss(qp, tp), 1e-12);
}

TEST(ContrastiveLossTest, InvariantUnderPositiveRescaling) {
  std::mt19937_64 gen(6);
  std::vector<Tensor> q = Vectors(4, 5, gen), t = Vectors(4, 5, gen);
  const double base = Loss(q, t);
  Tape tape(false);
  q[1] = tape.Scale(q[1], 37.5);
  t[2] = tape.Scale(t[2], 1e-3);
  EXPECT_NEAR(Loss(q, t), base, 1e-12);
}

TEST(ContrastiveLossTest, RejectsZeroFeatureAndMismatch) {
  std::mt19937_64 gen(7);
  std::vector<Tensor> q = Vectors(2, 3, gen), t = Vectors(2, 3, gen);
  std::vector<Tensor> zero = {Tensor::Zeros({3}), t[1]};
  EXPECT_THROW(Loss(q, zero), DegenerateInputError);
  const std::vector<Tensor> short_t = {t[0]};
  EXPECT_THROW(Loss(q, short_t), ShapeError);
}

TEST(ContrastiveLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(8);
  const std::vector<Tensor> q = Vectors(3, 4, gen), t = Vectors(3, 4, gen);
  std::vector<Tensor> leaves = q;
  leaves.insert(leaves.end(), t.begin(), t.end());
  for (double temperature : {1.0, 0.1}) {
    const testing::GradCheckResult r = testing::GradCheck(
        [&](Tape& tape) { return ContrastiveLoss(tape, q, t, temperature); },
        leaves);
    EXPECT_LE(r.worst_relative, 1e-4) << r.worst_where;
  }
}

class TinyTrainingTest : public ::testing::Test {
 protected:
  TinyTrainingTest() {
    encoder_.embed_dim = 4;
    encoder_.num_heads = 2;
    encoder_.num_layers = 1;
    for (const PretrainPair& p : GenPretrainPairs(8, 5, SynthConfig{}, encoder_)) {
      pairs_.push_back(p.pair);
    }
  }

  Tensor Loss(Tape& tape, const DualEncoderParams& params, const MaskConfig& mc,
              std::size_t batch, double temperature) {
    std::vector<MaskedTriplet> b;
    for (std::size_t i = 0; i < batch; ++i) {
      Rng rng = MaskRng(mc, 0, i);
      b.push_back(BuildTriplet(tape, pairs_[i], mc, params, encoder_, rng));
    }
    return BatchLoss(tape, b, params, encoder_, temperature);
  }

  EncoderConfig encoder_;
  std::vector<ImageTextPair> pairs_;
};

TEST_F(TinyTrainingTest, FullLossGradientMatchesFiniteDifferences) {
  DualEncoderParams params = InitParams(encoder_);
  std::vector<Tensor> leaves;
  params.ForEach([&](const std::string&, Tensor& t, ParamKind) { leaves.push_back(t); });
  const MaskConfig mc{0.5, 3};
  for (double temperature : {1.0, 0.1}) {
    const testing::GradCheckResult r = testing::GradCheck(
        [&](Tape& tape) { return Loss(tape, params, mc, 2, temperature); }, leaves);
    EXPECT_LE(r.worst_relative, 1e-3) << r.worst_where;
  }
}

TEST_F(TinyTrainingTest, NullUpdateLeavesParamsBitIdentical) {
  DualEncoderParams params = InitParams(encoder_);
  const DualEncoderParams before = params.Clone();
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.weight_decay = 0.0;
  std::vector<ParamRef> refs = TrainableParams(params);
  OptimizerState state = OptimizerState::For(refs);
  Tape tape;
  std::vector<MaskedTriplet> batch;
  for (std::size_t i = 0; i < 2; ++i) {
    Rng rng = MaskRng(tc.mask, 0, i);
    batch.push_back(BuildTriplet(tape, pairs_[i], tc.mask, params, encoder_, rng));
  }
  TrainStep(tape, params, state, batch, encoder_, tc, 0);
  std::vector<double> a, b;
  params.ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    a.insert(a.end(), t.data().begin(), t.data().end());
  });
  before.ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    b.insert(b.end(), t.data().begin(), t.data().end());
  });
  EXPECT_EQ(a, b);
}

TEST_F(TinyTrainingTest, SingleStepLowersLossOnSameBatch) {
  encoder_.embed_dim = 8;
  DualEncoderParams params = InitParams(encoder_);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  const MaskConfig mc = tc.mask;
  double before;
  {
    Tape tape(false);
    before = Loss(tape, params, mc, 4, tc.temperature).item();
  }
  std::vector<ParamRef> refs = TrainableParams(params);
  OptimizerState state = OptimizerState::For(refs);
  Tape tape;
  std::vector<MaskedTriplet> batch;
  for (std::size_t i = 0; i < 4; ++i) {
    Rng rng = MaskRng(mc, 0, i);
    batch.push_back(BuildTriplet(tape, pairs_[i], mc, params, encoder_, rng));
  }
  const StepResult r = TrainStep(tape, params, state, batch, encoder_, tc, 0);
  EXPECT_NEAR(r.loss, before, 1e-12);
  Tape again(false);
  EXPECT_LT(Loss(again, params, mc, 4, tc.temperature).item(), before);
}

TEST_F(TinyTrainingTest, ZeroEpochsReturnsInit) {
  TrainConfig tc;
  tc.epochs = 0;
  const TrainResult r = Train(pairs_, encoder_, tc);
  EXPECT_EQ(r.steps, 0);
  std::vector<double> a, b;
  r.params.ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    a.insert(a.end(), t.data().begin(), t.data().end());
  });
  InitParams(encoder_).ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    b.insert(b.end(), t.data().begin(), t.data().end());
  });
  EXPECT_EQ(a, b);
}

TEST_F(TinyTrainingTest, SeededRunsAreBitIdentical) {
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 3;
  const TrainResult a = Train(pairs_, encoder_, tc);
  const TrainResult b = Train(pairs_, encoder_, tc);
  ASSERT_EQ(a.log.steps.size(), b.log.steps.size());
  EXPECT_EQ(a.steps, 2 * 3);  // ceil(8 / 3) per epoch
  for (std::size_t i = 0; i < a.log.steps.size(); ++i) {
    EXPECT_EQ(a.log.steps[i].loss, b.log.steps[i].loss);
  }
  std::vector<double> pa, pb;
  a.params.ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    pa.insert(pa.end(), t.data().begin(), t.data().end());
  });
  b.params.ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    pb.insert(pb.end(), t.data().begin(), t.data().end());
  });
  EXPECT_EQ(pa, pb);
}

TEST_F(TinyTrainingTest, SmallDatasetPadsAndWarns) {
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 16;
  const TrainResult r = Train(pairs_, encoder_, tc);
  EXPECT_EQ(r.steps, 1);
  EXPECT_FALSE(r.log.warnings.empty());
}

TEST(TrainConfigTest, Validation) {
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(tc.Validate(), ConfigError);
  tc = TrainConfig{};
  tc.temperature = 0.0;
  EXPECT_THROW(tc.Validate(), ConfigError);
  tc = TrainConfig{};
  tc.mask.ratio = 1.0;
  EXPECT_THROW(tc.Validate(), ConfigError);
}

// Training on the synthetic corpus is its own oracle: the last epoch's mean
// loss must fall below half of the first epoch's.
TEST(TrainSyntheticTest, LossHalvesOnSyntheticCorpus) {
  EncoderConfig encoder;
  encoder.embed_dim = 32;
  encoder.num_layers = 1;
  std::vector<ImageTextPair> pairs;
  for (const PretrainPair& p : GenPretrainPairs(256, 101, SynthConfig{}, encoder)) {
    pairs.push_back(p.pair);
  }
  TrainConfig tc;
  tc.epochs = 8;
  tc.temperature = 0.1;
  const TrainResult r = Train(pairs, encoder, tc);
  const double first = r.log.EpochMean(0), last = r.log.EpochMean(tc.epochs - 1);
  EXPECT_LT(last, 0.5 * first) << "first " << first << " last " << last;
}

}  // namespace
}  // namespace mcir
