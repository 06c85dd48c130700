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

#include <bitset>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cflab/dqn.hpp"
#include "cflab/e2.hpp"
#include "cflab/topology.hpp"

namespace cflab::xapp {

using dqn::Observation;

struct AntennaAction {
  std::size_t antenna = 0;
  bool activate = true;
  bool operator==(const AntennaAction&) const = default;
};

/// 0..7 activate antenna idx, 8..15 deactivate antenna idx-8.
/// Throws std::out_of_range for idx >= 16.
AntennaAction decode_action(std::size_t idx);
std::size_t encode_action(const AntennaAction& a);
AntennaMask apply_action(AntennaMask mask, const AntennaAction& a);

double snr_norm(double snr_db);
double power_norm(double dbm);

/// Throws std::invalid_argument if SNR, RSRP or EPRE is missing or not an
/// 8-element array.
Observation build_observation(const e2::KpmRecord& record, const UeCfConfig& cfg);
Observation build_observation(const PortCsi& csi, const AntennaMask& mask);

struct RewardSnapshot {
  double total_thpt_mbps = 0.0;
  double ptime_us = 0.0;
};

// beta is per microsecond of ZF processing time; see the README for why the
// default is 1 rather than 5.
struct RewardWeights {
  double alpha = 1.0;
  double beta = 1.0;
};

double reward(const RewardSnapshot& prev, const RewardSnapshot& next, const RewardWeights& w = {});

// ---------------------------------------------------------------------------
// Pretraining simulator

struct EnvConfig {
  RuAntennaArray array = RuAntennaArray::lab_default();
  double tx_power_dbm = 23.0;
  std::size_t realizations = 16;  // fading draws averaged into the potential
  double area_min_m = 0.5;
  double area_max_m = 9.5;
  // Share of episodes placed around the deployment's known UE positions
  // (swapped at random, jittered uniformly by +-anchor_jitter_m).
  std::vector<Point> anchor_positions{kLabUePositions[0], kLabUePositions[1]};
  double anchor_prob = 0.5;
  double anchor_jitter_m = 0.75;
  std::size_t n_re = 51;
  int max_mcs = 28;
  double la_backoff_db = 1.0;
  double random_mask_prob = 0.4;
  double fault_toggle_prob = 0.05;
  std::size_t max_faults = 6;
  std::size_t horizon = 32;
  RewardWeights weights;
};

/// Total throughput of a ZF pair over the full grid, both UEs on every PRB.
double pair_throughput_mbps(const AntennaVector& h1, const AntennaVector& h2, const AntennaMask& mask,
                            double p_w, std::span<const double, kNumAntennas> noise_var,
                            std::size_t n_re = 51, int max_mcs = 28, double backoff_db = 1.0);

/// One UE's view of the shared-mask environment. The partner UE mirrors the
/// agent's mask, so the equalizer mask is the agent's mask. Reward is the
/// change of alpha * E[total thpt] - beta * t_zf(active count).
class PretrainEnv {
 public:
  explicit PretrainEnv(EnvConfig cfg = {});

  Observation reset(Rng& rng);
  /// Places both UEs and the fault pattern explicitly.
  Observation set_state(Point self, Point partner, std::bitset<kNumAntennas> faults, AntennaMask mask,
                        uint64_t fading_seed);

  struct StepResult {
    Observation obs;
    double reward = 0.0;
    bool done = false;
  };
  /// Applies the action; a deactivation that would leave fewer than two
  /// antennas is a no-op. Random fault toggles (if rng given) happen after
  /// the reward is computed.
  StepResult step(std::size_t action, Rng* rng = nullptr);

  double potential(const AntennaMask& mask) const;
  Observation observe() const;
  const AntennaMask& mask() const { return mask_; }
  std::bitset<kNumAntennas> faults() const { return faults_; }
  std::size_t t() const { return t_; }
  const EnvConfig& config() const { return cfg_; }

 private:
  void rebuild();

  EnvConfig cfg_;
  Point self_, partner_;
  uint64_t fading_seed_ = 0;
  std::bitset<kNumAntennas> faults_;
  AntennaMask mask_ = AntennaMask::all();
  std::size_t t_ = 0;
  std::vector<ChannelState> self_ch_, partner_ch_;
  mutable std::map<unsigned long, double> cache_;
};

struct PretrainConfig {
  std::size_t episodes = 3000;
  uint64_t seed = 1;
  double gamma = 0.0;  // one-step bandit target; see README
  double lr = 2e-3;
  double lr_final = 1e-5;  // linear decay over the run
  double momentum = 0.9;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.8;
  std::size_t replay_capacity = 50000;
  std::size_t batch = 64;
  std::size_t target_sync = 500;
  std::size_t warmup = 1000;
  std::size_t train_every = 1;
  double max_grad_norm = 10.0;
  // Stored rewards are clipped to [-reward_clip, reward_clip]; 0 disables.
  double reward_clip = 1.0;
  std::size_t hidden = 16;
  std::size_t kernel = 3;
  EnvConfig env;
};

struct PretrainResult {
  dqn::DqnModel model;
  std::string manifest_json;
  double final_loss = 0.0;
  std::size_t steps = 0;
};

/// Deterministic given cfg.seed. Throws std::runtime_error naming the
/// episode if the TD loss diverges.
PretrainResult pretrain(const PretrainConfig& cfg);

/// Greedy action that respects the two-antenna floor and never activates an
/// antenna reporting the RSRP floor. Mask-unchanging actions score exactly 0.
std::size_t greedy_action(const dqn::DqnModel& model, const Observation& obs, const AntennaMask& mask);

// ---------------------------------------------------------------------------
// Live control loop

struct Decision {
  uint64_t timestamp_ms = 0;
  Rnti ue_id = 0;
  AntennaAction action;
  AntennaMask requested;
  uint64_t ctrl_id = 0;
  bool sent = false;  // false: no-op suppressed
  std::optional<bool> applied;
  double inference_ms = 0.0;
};

class AssociationXapp {
 public:
  explicit AssociationXapp(dqn::DqnModel model);

  e2::SubscriptionRequest subscribe();
  void on_subscription_response(const e2::SubscriptionResponse& resp);
  bool subscribed() const { return subscribed_; }

  /// One greedy action per UE; at most one ControlRequest per UE.
  std::vector<e2::ControlRequest> on_indication(const e2::Indication& ind);
  void on_ack(const e2::ControlAck& ack);

  AntennaMask believed_mask(Rnti ue) const;
  const std::vector<Decision>& decisions() const { return log_; }
  const dqn::DqnModel& model() const { return model_; }

 private:
  dqn::DqnModel model_;
  e2::E2Client client_;
  bool subscribed_ = false;
  std::map<Rnti, AntennaMask> masks_;
  std::map<uint64_t, std::size_t> pending_;  // ctrl_id -> decision index
  std::vector<Decision> log_;
};

}  // namespace cflab::xapp
