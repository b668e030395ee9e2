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

#include "mcir/combiner.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mcir/checkpoint.h"
#include "mcir/errors.h"
#include "mcir/retrieval.h"
#include "mcir/rng.h"

namespace mcir {

void CombinerConfig::Validate() const {
  if (!std::isfinite(initial_gate_logit)) {
    throw ConfigError("combiner initial_gate_logit must be finite");
  }
  train.Validate();
}

double CombinerParams::gate_value() const {
  return 1.0 / (1.0 + std::exp(-gate.item()));
}

void CombinerParams::ForEach(const ParamVisitor& visit) {
  visit("combiner.image.weight", image_w, ParamKind::kMatrix);
  visit("combiner.image.bias", image_b, ParamKind::kBias);
  visit("combiner.text.weight", text_w, ParamKind::kMatrix);
  visit("combiner.text.bias", text_b, ParamKind::kBias);
  visit("combiner.joint.weight", joint_w, ParamKind::kMatrix);
  visit("combiner.joint.bias", joint_b, ParamKind::kBias);
  visit("combiner.out.weight", out_w, ParamKind::kMatrix);
  visit("combiner.out.bias", out_b, ParamKind::kBias);
  visit("combiner.gate", gate, ParamKind::kNorm);
}

void CombinerParams::ForEach(
    const std::function<void(const std::string&, const Tensor&, ParamKind)>&
        visit) const {
  const_cast<CombinerParams*>(this)->ForEach(
      [&](const std::string& name, Tensor& t, ParamKind kind) {
        visit(name, t, kind);
      });
}

CombinerParams CombinerParams::Clone() const {
  CombinerParams out = *this;
  out.ForEach([](const std::string&, Tensor& t, ParamKind) {
    t = t.Clone();
    t.set_requires_grad(true);
  });
  return out;
}

CombinerParams InitCombiner(std::size_t dim, const CombinerConfig& config) {
  config.Validate();
  if (dim == 0) throw ConfigError("combiner dim must be positive");
  const std::size_t h = config.HiddenFor(dim);
  CombinerParams p;
  p.image_w = Tensor::Zeros({dim, h}, true);
  p.image_b = Tensor::Zeros({h}, true);
  p.text_w = Tensor::Zeros({dim, h}, true);
  p.text_b = Tensor::Zeros({h}, true);
  p.joint_w = Tensor::Zeros({2 * h, h}, true);
  p.joint_b = Tensor::Zeros({h}, true);
  p.out_w = Tensor::Zeros({h, dim}, true);
  p.out_b = Tensor::Zeros({dim}, true);
  p.gate = Tensor::Scalar(config.initial_gate_logit, true);
  Rng rng(DeriveSeed(config.seed, {0xc0b1}));
  p.ForEach([&](const std::string&, Tensor& t, ParamKind kind) {
    if (kind != ParamKind::kMatrix) return;
    // He init for the ReLU layers.
    const double std = std::sqrt(2.0 / static_cast<double>(t.shape()[0]));
    for (double& v : t.mutable_data()) v = std * rng.Normal();
  });
  return p;
}

Tensor CombinerForward(Tape& tape, const Tensor& f_i, const Tensor& f_t,
                       const CombinerParams& params) {
  const std::size_t d = params.dim();
  if (f_i.rank() != 2 || f_i.shape() != f_t.shape() || f_i.cols() != d) {
    throw ShapeError("combiner_forward: inputs " + ShapeToString(f_i.shape()) +
                     " and " + ShapeToString(f_t.shape()) + ", expected [B x " +
                     std::to_string(d) + "]");
  }
  const Tensor a =
      tape.Relu(tape.AddRowVector(tape.MatMul(f_i, params.image_w), params.image_b));
  const Tensor b =
      tape.Relu(tape.AddRowVector(tape.MatMul(f_t, params.text_w), params.text_b));
  const Tensor ab[] = {a, b};
  const Tensor j = tape.Relu(tape.AddRowVector(
      tape.MatMul(tape.ConcatCols(ab), params.joint_w), params.joint_b));
  const Tensor m = tape.AddRowVector(tape.MatMul(j, params.out_w), params.out_b);
  const Tensor base = tape.Add(f_i, f_t);
  const Tensor g = tape.Sigmoid(params.gate);
  return tape.Add(base, tape.ScaleBy(tape.Sub(m, base), g));
}

std::vector<double> CombinerForward(std::span<const double> f_i,
                                    std::span<const double> f_t,
                                    const CombinerParams& params) {
  if (f_i.size() != params.dim() || f_t.size() != params.dim()) {
    throw ShapeError("combiner_forward: dims " + std::to_string(f_i.size()) +
                     " and " + std::to_string(f_t.size()) + ", expected " +
                     std::to_string(params.dim()));
  }
  const std::size_t d = params.dim();
  Tape tape(/*record=*/false);
  const Tensor out = CombinerForward(
      tape, Tensor::FromData({1, d}, {f_i.begin(), f_i.end()}),
      Tensor::FromData({1, d}, {f_t.begin(), f_t.end()}), params);
  return {out.data().begin(), out.data().end()};
}

std::uint64_t BackboneFingerprint(const DualEncoderParams& params) {
  return Fnv1a64(EncoderSection(params).Payload());
}

CombinerTrainResult TrainCombiner(const DualEncoderParams& frozen,
                                  const EncoderConfig& encoder,
                                  std::span<const SupervisedTriplet> triplets,
                                  const CombinerConfig& config,
                                  const StepCallback& on_step) {
  encoder.Validate();
  config.Validate();
  if (triplets.empty()) throw DataError("combiner training set is empty");
  const std::uint64_t before = BackboneFingerprint(frozen);

  const std::size_t d = encoder.embed_dim;
  const std::size_t n = triplets.size();
  std::vector<double> fi(n * d), ft(n * d), fg(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const SupervisedTriplet& t = triplets[i];
    std::ranges::copy(ImageFeature(t.reference, frozen, encoder),
                      fi.begin() + i * d);
    std::ranges::copy(TextFeature(t.modification_ids, frozen, encoder),
                      ft.begin() + i * d);
    std::ranges::copy(ImageFeature(t.target, frozen, encoder),
                      fg.begin() + i * d);
  }

  CombinerTrainResult result;
  result.params = InitCombiner(d, config);
  std::vector<ParamRef> refs;
  result.params.ForEach([&](const std::string&, Tensor& t, ParamKind kind) {
    refs.push_back(ParamRef{t, IsDecayed(kind)});
  });
  OptimizerState state = OptimizerState::For(refs);
  const TrainConfig& tc = config.train;
  const std::size_t b = std::min(tc.batch_size, n);
  const auto start = std::chrono::steady_clock::now();
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle(DeriveSeed(tc.seed, {0xc0b2, epoch}));
    const std::vector<std::size_t> order = shuffle.Permutation(n);
    for (std::size_t begin = 0; begin < n; begin += b) {
      const std::size_t end = std::min(begin + b, n);
      const std::size_t m = end - begin;
      std::vector<double> bi(m * d), bt(m * d);
      std::vector<Tensor> targets;
      for (std::size_t s = 0; s < m; ++s) {
        const std::size_t i = order[begin + s];
        std::copy_n(fi.begin() + i * d, d, bi.begin() + s * d);
        std::copy_n(ft.begin() + i * d, d, bt.begin() + s * d);
        targets.push_back(Tensor::FromData(
            {d}, std::vector<double>(fg.begin() + i * d, fg.begin() + (i + 1) * d)));
      }
      Tape tape;
      const Tensor out = CombinerForward(tape, Tensor::FromData({m, d}, bi),
                                         Tensor::FromData({m, d}, bt),
                                         result.params);
      std::vector<Tensor> queries;
      for (std::size_t s = 0; s < m; ++s) queries.push_back(tape.Row(out, s));
      const Tensor loss = ContrastiveLoss(tape, queries, targets, tc.temperature);
      const double value = loss.item();
      if (!std::isfinite(value)) throw DivergenceError(step, "combiner loss");
      for (ParamRef& r : refs) r.tensor.ZeroGrad();
      tape.Backward(loss);
      AdamWUpdate(refs, state, tc);
      for (ParamRef& r : refs) r.tensor.ZeroGrad();

      LossRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.loss = value;
      rec.wall_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
      result.log.steps.push_back(rec);
      if (on_step) on_step(rec);
      ++step;
    }
  }
  result.steps = step;
  if (BackboneFingerprint(frozen) != before) {
    throw InvariantError("train_combiner: backbone parameters changed");
  }
  return result;
}

}  // namespace mcir
