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

// Masked tuning. Each pair becomes <masked image, caption, image>; the query
// feature is image(masked) + text(caption) and is pulled toward
// image(full) with an in-batch contrastive loss over cosine similarities.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcir/encoders.h"
#include "mcir/masking.h"
#include "mcir/tensor.h"

namespace mcir {

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 5e-5;
  std::size_t epochs = 30;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Logits are cos / temperature. 1.0 keeps the loss exactly as
  // exp(cos(q, t)) with no logit scale.
  double temperature = 1.0;
  std::uint64_t seed = 11;
  MaskConfig mask;

  void Validate() const;
};

// One trainable tensor as seen by the optimizer.
struct ParamRef {
  Tensor tensor;
  bool decay = true;
};

std::vector<ParamRef> TrainableParams(DualEncoderParams& params);

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;

  // Zero moments matching `params`.
  static OptimizerState For(std::span<const ParamRef> params);
};

// AdamW with decoupled weight decay:
//   p <- p - lr * wd * p        (decayed tensors only)
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
// A tensor without a gradient contributes a zero gradient.
void AdamWUpdate(std::span<ParamRef> params, OptimizerState& state,
                 const TrainConfig& config);

// Elementwise f_im + f_t; no projection, no normalization.
Tensor ComposeQuery(Tape& tape, const Tensor& f_im, const Tensor& f_t);

// (1/B) sum_i -log softmax_j(cos(q_i, t_j) / temperature)[i]
// Throws DegenerateInputError for a zero-norm feature.
Tensor ContrastiveLoss(Tape& tape, std::span<const Tensor> queries,
                       std::span<const Tensor> targets,
                       double temperature = 1.0);

// Forward pass of a batch on `tape`: the loss whose minimization is one
// training step.
Tensor BatchLoss(Tape& tape, std::span<const MaskedTriplet> batch,
                 const DualEncoderParams& params,
                 const EncoderConfig& encoder, double temperature);

struct StepResult {
  double loss = 0.0;
};

// Loss, backward and one AdamW update. `batch` must have been built on
// `tape`. Throws DivergenceError (carrying step_index) on a non-finite loss;
// in that case the parameters are left untouched.
StepResult TrainStep(Tape& tape, DualEncoderParams& params,
                     OptimizerState& state,
                     std::span<const MaskedTriplet> batch,
                     const EncoderConfig& encoder, const TrainConfig& config,
                     std::int64_t step_index);

struct LossRecord {
  std::int64_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<LossRecord> steps;
  std::vector<std::string> warnings;

  // Mean step loss in `epoch`; NaN if the epoch has no steps.
  double EpochMean(std::size_t epoch) const;
};

struct TrainResult {
  DualEncoderParams params;
  TrainLog log;
  std::int64_t steps = 0;
};

using StepCallback = std::function<void(const LossRecord&)>;

// epochs x ceil(N / B) steps over a seeded shuffle per epoch, the short last
// batch kept. A dataset smaller than B is padded by wraparound and a warning
// is logged. A fresh mask is drawn for every visit of a pair.
TrainResult Train(std::span<const ImageTextPair> pairs,
                  const EncoderConfig& encoder, const TrainConfig& config,
                  const StepCallback& on_step = {});

// Same, continuing from the given initial parameters.
TrainResult Train(std::span<const ImageTextPair> pairs,
                  DualEncoderParams initial, const EncoderConfig& encoder,
                  const TrainConfig& config, const StepCallback& on_step = {});

}  // namespace mcir
