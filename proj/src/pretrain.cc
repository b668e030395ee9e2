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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "mcir/errors.h"
#include "mcir/rng.h"

namespace mcir {

void TrainConfig::Validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  mask.Validate();
}

std::vector<ParamRef> TrainableParams(DualEncoderParams& params) {
  std::vector<ParamRef> refs;
  params.ForEach([&](const std::string&, Tensor& t, ParamKind kind) {
    refs.push_back(ParamRef{t, IsDecayed(kind)});
  });
  return refs;
}

OptimizerState OptimizerState::For(std::span<const ParamRef> params) {
  OptimizerState s;
  for (const ParamRef& p : params) {
    s.first_moment.emplace_back(p.tensor.numel(), 0.0);
    s.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void AdamWUpdate(std::span<ParamRef> params, OptimizerState& state,
                 const TrainConfig& config) {
  if (state.first_moment.size() != params.size()) {
    throw InvariantError("optimizer state does not match parameter list");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double lr = config.learning_rate;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k].tensor;
    auto data = p.mutable_data();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != data.size()) {
      throw InvariantError("optimizer moment shape mismatch");
    }
    const auto grad = p.grad();
    const bool has_grad = p.has_grad();
    const double decay = params[k].decay ? lr * config.weight_decay : 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      data[i] -= decay * data[i];
      data[i] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

Tensor ComposeQuery(Tape& tape, const Tensor& f_im, const Tensor& f_t) {
  return tape.Add(f_im, f_t);
}

Tensor ContrastiveLoss(Tape& tape, std::span<const Tensor> queries,
                       std::span<const Tensor> targets, double temperature) {
  if (queries.empty() || queries.size() != targets.size()) {
    throw ShapeError("contrastive_loss: " + std::to_string(queries.size()) +
                     " queries vs " + std::to_string(targets.size()) +
                     " targets");
  }
  const std::size_t b = queries.size();
  const Tensor q = tape.NormalizeRows(tape.StackRows(queries));
  const Tensor t = tape.NormalizeRows(tape.StackRows(targets));
  if (q.cols() != t.cols()) {
    throw ShapeError("contrastive_loss: feature dims differ");
  }
  Tensor logits = tape.MatMul(q, tape.Transpose(t));
  if (temperature != 1.0) logits = tape.Scale(logits, 1.0 / temperature);
  std::vector<std::size_t> diag(b);
  for (std::size_t i = 0; i < b; ++i) diag[i] = i;
  const Tensor picked = tape.PickPerRow(tape.LogSoftmax(logits), diag);
  return tape.Scale(tape.Sum(picked), -1.0 / static_cast<double>(b));
}

Tensor BatchLoss(Tape& tape, std::span<const MaskedTriplet> batch,
                 const DualEncoderParams& params,
                 const EncoderConfig& encoder, double temperature) {
  if (batch.empty()) throw InputError("empty training batch");
  std::vector<Tensor> queries, targets;
  queries.reserve(batch.size());
  targets.reserve(batch.size());
  for (const MaskedTriplet& tr : batch) {
    const Tensor f_im = EncodeImage(tape, tr.visible_tokens, params, encoder);
    const Tensor f_text = EncodeText(tape, tr.text_ids, params, encoder);
    queries.push_back(ComposeQuery(tape, f_im, f_text));
    targets.push_back(EncodeFullImage(tape, tr.target_image, params, encoder));
  }
  return ContrastiveLoss(tape, queries, targets, temperature);
}

StepResult TrainStep(Tape& tape, DualEncoderParams& params,
                     OptimizerState& state,
                     std::span<const MaskedTriplet> batch,
                     const EncoderConfig& encoder, const TrainConfig& config,
                     std::int64_t step_index) {
  const Tensor loss =
      BatchLoss(tape, batch, params, encoder, config.temperature);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw DivergenceError(step_index, "non-finite loss");
  }
  params.ZeroGrad();
  tape.Backward(loss);
  std::vector<ParamRef> refs = TrainableParams(params);
  AdamWUpdate(refs, state, config);
  params.ZeroGrad();
  return StepResult{value};
}

double TrainLog::EpochMean(std::size_t epoch) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const LossRecord& r : steps) {
    if (r.epoch == epoch) {
      sum += r.loss;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n)
           : std::numeric_limits<double>::quiet_NaN();
}

TrainResult Train(std::span<const ImageTextPair> pairs,
                  const EncoderConfig& encoder, const TrainConfig& config,
                  const StepCallback& on_step) {
  return Train(pairs, InitParams(encoder), encoder, config, on_step);
}

TrainResult Train(std::span<const ImageTextPair> pairs,
                  DualEncoderParams initial, const EncoderConfig& encoder,
                  const TrainConfig& config, const StepCallback& on_step) {
  encoder.Validate();
  config.Validate();
  if (pairs.empty()) throw DataError("training dataset is empty");
  TrainResult result;
  result.params = std::move(initial);
  std::vector<ParamRef> refs = TrainableParams(result.params);
  OptimizerState state = OptimizerState::For(refs);

  const std::size_t n = pairs.size();
  const std::size_t b = config.batch_size;
  const std::size_t per_epoch = n < b ? b : n;
  if (n < b && config.epochs > 0) {
    result.log.warnings.push_back(
        "dataset of " + std::to_string(n) + " pairs is smaller than batch " +
        std::to_string(b) + "; padding batches by wraparound");
  }
  const auto start = std::chrono::steady_clock::now();
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle(DeriveSeed(config.seed, {0x5eed, epoch}));
    const std::vector<std::size_t> order = shuffle.Permutation(n);
    for (std::size_t begin = 0; begin < per_epoch; begin += b) {
      const std::size_t end = std::min(begin + b, per_epoch);
      Tape tape;
      std::vector<MaskedTriplet> batch;
      batch.reserve(end - begin);
      for (std::size_t slot = begin; slot < end; ++slot) {
        const std::size_t pair_index = order[slot % n];
        const std::size_t visit = slot / n;  // > 0 only when padding
        Rng rng = MaskRng(config.mask, epoch, pair_index + visit * n);
        batch.push_back(BuildTriplet(tape, pairs[pair_index], config.mask,
                                     result.params, encoder, rng));
      }
      const StepResult r =
          TrainStep(tape, result.params, state, batch, encoder, config, step);
      LossRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.loss = r.loss;
      rec.wall_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
      result.log.steps.push_back(rec);
      if (on_step) on_step(rec);
      ++step;
    }
  }
  result.steps = step;
  return result;
}

}  // namespace mcir
