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

// A small fusion network trained on top of a frozen dual encoder.
//
//   a   = relu(f_i Wi + bi)            d -> h
//   b   = relu(f_t Wt + bt)            d -> h
//   j   = relu([a, b] Wj + bj)         2h -> h
//   m   = j Wo + bo                    h -> d
//   out = (f_i + f_t) + g (m - (f_i + f_t)),   g = sigmoid(gate)

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcir/encoders.h"
#include "mcir/pretrain.h"
#include "mcir/tensor.h"

namespace mcir {

struct CombinerConfig {
  std::size_t hidden = 0;  // 0 means 2 * embed_dim
  double initial_gate_logit = -2.0;
  std::uint64_t seed = 17;
  TrainConfig train = [] {
    TrainConfig t;
    t.learning_rate = 1e-3;
    t.epochs = 30;
    return t;
  }();

  std::size_t HiddenFor(std::size_t dim) const {
    return hidden == 0 ? 2 * dim : hidden;
  }
  void Validate() const;
};

struct CombinerParams {
  Tensor image_w, image_b;  // [d x h], [h]
  Tensor text_w, text_b;    // [d x h], [h]
  Tensor joint_w, joint_b;  // [2h x h], [h]
  Tensor out_w, out_b;      // [h x d], [d]
  Tensor gate;              // [1], pre-sigmoid

  std::size_t dim() const { return image_w.shape()[0]; }
  std::size_t hidden() const { return image_w.shape()[1]; }
  double gate_value() const;

  using ParamVisitor =
      std::function<void(const std::string&, Tensor&, ParamKind)>;
  void ForEach(const ParamVisitor& visit);
  void ForEach(const std::function<void(const std::string&, const Tensor&,
                                        ParamKind)>& visit) const;
  CombinerParams Clone() const;
};

CombinerParams InitCombiner(std::size_t dim, const CombinerConfig& config);

// Rows of f_i and f_t [B x d] are combined independently.
Tensor CombinerForward(Tape& tape, const Tensor& f_i, const Tensor& f_t,
                       const CombinerParams& params);
// Single pair, no gradient tracking.
std::vector<double> CombinerForward(std::span<const double> f_i,
                                    std::span<const double> f_t,
                                    const CombinerParams& params);

struct SupervisedTriplet {
  Tensor reference;                // [C x S x S]
  std::vector<int> modification_ids;
  Tensor target;                   // [C x S x S]
  std::string target_id;
};

struct CombinerTrainResult {
  CombinerParams params;
  TrainLog log;
  std::int64_t steps = 0;
};

// Trains only the combiner under the contrastive loss, with query
// CombinerForward(f_i(reference), f_t(text)) and the target image feature.
// Backbone features are computed once. The backbone serialization is
// fingerprinted before and after; any change throws InvariantError.
// `on_step` runs after every optimizer step.
CombinerTrainResult TrainCombiner(const DualEncoderParams& frozen,
                                  const EncoderConfig& encoder,
                                  std::span<const SupervisedTriplet> triplets,
                                  const CombinerConfig& config,
                                  const StepCallback& on_step = {});

// FNV-1a-64 of the backbone's checkpoint section payload.
std::uint64_t BackboneFingerprint(const DualEncoderParams& params);

}  // namespace mcir
