/*
 * Copyright (c) 2026 The cflab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cflab/rng.hpp"

namespace cflab::dqn {

inline constexpr std::size_t kAntennas = 8;
inline constexpr std::size_t kFeatures = 4;
inline constexpr std::size_t kActions = 16;
inline constexpr std::string_view kModelMagic = "cfdqn/1";

/// Rows are antennas; columns are [active, snr_norm, rsrp_norm, epre_norm].
using Observation = std::array<std::array<double, kFeatures>, kAntennas>;
using QValues = std::array<double, kActions>;

struct ConvSpec {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;
};

/// Three same-padded 1-D convolutions along the antenna axis with ReLU,
/// then a linear head over the flattened (antenna-major) feature map.
/// All weights live in one flat parameter vector in declared layer order:
/// conv weights [out][in][tap], conv bias [out], head weights [action][in],
/// head bias [action].
class DqnModel {
 public:
  DqnModel(std::size_t hidden_channels = 16, std::size_t kernel = 3);

  /// He-uniform init for weights, zero biases.
  static DqnModel initialized(uint64_t seed, std::size_t hidden_channels = 16, std::size_t kernel = 3);

  QValues forward(const Observation& obs) const;

  struct Trace;
  /// Forward pass that keeps the activations needed by backward().
  QValues forward(const Observation& obs, Trace& trace) const;
  /// Accumulates dL/dparams into grad (same layout as params()) for the
  /// upstream gradient dq. Optionally returns dL/dinput.
  void backward(const Trace& trace, const QValues& dq, std::span<double> grad,
                Observation* input_grad = nullptr) const;

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  const std::vector<ConvSpec>& conv_layers() const { return convs_; }
  std::size_t head_inputs() const { return kAntennas * convs_.back().out_channels; }

  /// Header line, JSON layer description, base64 of little-endian doubles.
  std::string serialize() const;
  static DqnModel deserialize(const std::string& text);
  void save(const std::string& path) const;
  static DqnModel load(const std::string& path);

  bool operator==(const DqnModel& o) const;

 private:
  std::size_t conv_w_offset(std::size_t l) const { return conv_offsets_[l]; }
  std::size_t conv_b_offset(std::size_t l) const;
  std::size_t head_w_offset() const { return head_offset_; }
  std::size_t head_b_offset() const { return head_offset_ + kActions * head_inputs(); }

  std::vector<ConvSpec> convs_;
  std::vector<std::size_t> conv_offsets_;
  std::size_t head_offset_ = 0;
  std::vector<double> params_;
};

struct DqnModel::Trace {
  // Channel-major activations [channel][antenna]; acts[0] is the input.
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> pre;  // pre-ReLU per conv layer
};

std::size_t argmax(const QValues& q);

struct Experience {
  Observation obs{};
  std::size_t action = 0;
  double reward = 0.0;
  Observation next_obs{};
  bool done = false;
};

/// FIFO ring with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(const Experience& e);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool can_sample(std::size_t batch) const { return batch > 0 && data_.size() >= batch; }
  std::vector<const Experience*> sample(std::size_t batch, Rng& rng) const;
  const Experience& at(std::size_t i) const { return data_.at(i); }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Experience> data_;
};

class SgdMomentum {
 public:
  SgdMomentum(std::size_t n_params, double lr, double momentum = 0.9);
  void step(std::span<double> params, std::span<const double> grad);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double momentum_;
  std::vector<double> velocity_;
};

/// Mean squared TD error over the batch with targets
/// y = r + gamma * (1 - done) * max_a q_target(next_obs).
double td_loss(const DqnModel& model, const DqnModel& target, std::span<const Experience* const> batch,
               double gamma, std::vector<double>* grad = nullptr);

/// One optimizer step on td_loss. Throws std::runtime_error if the loss is
/// not finite.
double train_step(DqnModel& model, const DqnModel& target, std::span<const Experience* const> batch,
                  double gamma, SgdMomentum& opt, double max_grad_norm = 0.0);

std::string base64_encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> base64_decode(std::string_view text);

}  // namespace cflab::dqn
