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

#include "cflab/xapp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "cflab/log.hpp"
#include "cflab/mcs.hpp"
#include "cflab/phy.hpp"
#include "json.hpp"

namespace cflab::xapp {

using dqn::DqnModel;

AntennaAction decode_action(std::size_t idx) {
  if (idx >= dqn::kActions) throw std::out_of_range("action index must be in [0, 16)");
  return idx < kNumAntennas ? AntennaAction{idx, true} : AntennaAction{idx - kNumAntennas, false};
}

std::size_t encode_action(const AntennaAction& a) {
  if (a.antenna >= kNumAntennas) throw std::out_of_range("antenna index must be in [0, 8)");
  return a.activate ? a.antenna : a.antenna + kNumAntennas;
}

AntennaMask apply_action(AntennaMask mask, const AntennaAction& a) {
  return mask.set(a.antenna, a.activate);
}

double snr_norm(double snr_db) { return std::clamp((snr_db + 10.0) / 50.0, 0.0, 1.0); }
double power_norm(double dbm) { return std::clamp((dbm + 160.0) / 160.0, 0.0, 1.0); }

Observation build_observation(const PortCsi& csi, const AntennaMask& mask) {
  Observation obs{};
  for (std::size_t a = 0; a < kNumAntennas; ++a)
    obs[a] = {mask.test(a) ? 1.0 : 0.0, snr_norm(csi.snr_db[a]), power_norm(csi.rsrp_dbm[a]),
              power_norm(csi.epre_dbm[a])};
  return obs;
}

Observation build_observation(const e2::KpmRecord& record, const UeCfConfig& cfg) {
  auto port = [&](std::string_view name) -> const std::vector<double>& {
    const e2::MetricValue* v = record.find(name);
    if (!v) throw std::invalid_argument("record for UE " + std::to_string(record.ue_id) + " lacks " + std::string(name));
    const auto* arr = std::get_if<std::vector<double>>(v);
    if (!arr || arr->size() != kNumAntennas)
      throw std::invalid_argument(std::string(name) + " must be an 8-element array");
    return *arr;
  };
  const auto& snr = port(e2::metric::kPortSnr);
  const auto& rsrp = port(e2::metric::kPortRsrp);
  const auto& epre = port(e2::metric::kPortEpre);
  PortCsi csi;
  std::copy(snr.begin(), snr.end(), csi.snr_db.begin());
  std::copy(rsrp.begin(), rsrp.end(), csi.rsrp_dbm.begin());
  std::copy(epre.begin(), epre.end(), csi.epre_dbm.begin());
  return build_observation(csi, cfg.cf_port_selection);
}

double reward(const RewardSnapshot& prev, const RewardSnapshot& next, const RewardWeights& w) {
  return w.alpha * (next.total_thpt_mbps - prev.total_thpt_mbps) - w.beta * (next.ptime_us - prev.ptime_us);
}

double pair_throughput_mbps(const AntennaVector& h1, const AntennaVector& h2, const AntennaMask& mask,
                            double p_w, std::span<const double, kNumAntennas> noise_var, std::size_t n_re,
                            int max_mcs, double backoff_db) {
  double s1, s2;
  try {
    std::tie(s1, s2) = zf_sinr_masked(h1, h2, mask, p_w, p_w, noise_var);
  } catch (const SingularChannelError&) {
    s1 = mrc_sinr_with_interference(h1, h2, mask, p_w, p_w, noise_var);
    s2 = mrc_sinr_with_interference(h2, h1, mask, p_w, p_w, noise_var);
  }
  return ue_throughput_mbps(n_re, sinr_to_mcs(s1 - backoff_db, max_mcs)) +
         ue_throughput_mbps(n_re, sinr_to_mcs(s2 - backoff_db, max_mcs));
}

// ---------------------------------------------------------------------------

PretrainEnv::PretrainEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.array.validate();
  if (cfg_.realizations == 0) throw std::invalid_argument("need at least one fading realization");
  if (cfg_.array.num_antennas() != kNumAntennas) throw std::invalid_argument("the DQN expects 8 antennas");
}

void PretrainEnv::rebuild() {
  self_ch_.clear();
  partner_ch_.clear();
  const UeNode self{1, self_, cfg_.tx_power_dbm, 0};
  const UeNode partner{2, partner_, cfg_.tx_power_dbm, 0};
  for (std::size_t r = 0; r < cfg_.realizations; ++r) {
    self_ch_.push_back(draw_channel(self, cfg_.array, mix_seed({fading_seed_, 1, r})));
    partner_ch_.push_back(draw_channel(partner, cfg_.array, mix_seed({fading_seed_, 2, r})));
  }
  for (std::size_t a = 0; a < kNumAntennas; ++a)
    if (faults_.test(a))
      for (std::size_t r = 0; r < cfg_.realizations; ++r) {
        self_ch_[r].set_fault(a, true);
        partner_ch_[r].set_fault(a, true);
      }
  cache_.clear();
}

Observation PretrainEnv::set_state(Point self, Point partner, std::bitset<kNumAntennas> faults, AntennaMask mask,
                                   uint64_t fading_seed) {
  if (mask.count() < e2::kMinActiveAntennas) throw std::invalid_argument("mask needs two active antennas");
  self_ = self;
  partner_ = partner;
  faults_ = faults;
  mask_ = mask;
  fading_seed_ = fading_seed;
  t_ = 0;
  rebuild();
  return observe();
}

Observation PretrainEnv::reset(Rng& rng) {
  auto pos = [&] {
    const double span = cfg_.area_max_m - cfg_.area_min_m;
    const double x = cfg_.area_min_m + span * rng.uniform();
    return Point{x, cfg_.area_min_m + span * rng.uniform()};
  };
  Point self, partner;
  if (cfg_.anchor_positions.size() >= 2 && rng.uniform() < cfg_.anchor_prob) {
    const std::size_t n = cfg_.anchor_positions.size();
    const std::size_t i = rng.below(n);
    const std::size_t j = (i + 1 + rng.below(n - 1)) % n;
    auto jitter = [&](Point p) {
      p.x += cfg_.anchor_jitter_m * (2.0 * rng.uniform() - 1.0);
      p.y += cfg_.anchor_jitter_m * (2.0 * rng.uniform() - 1.0);
      return p;
    };
    self = jitter(cfg_.anchor_positions[i]);
    partner = jitter(cfg_.anchor_positions[j]);
  } else {
    self = pos();
    partner = pos();
  }

  // Mostly one or two faults, sometimes none or many.
  const double u = rng.uniform();
  std::size_t n_faults = u < 0.15 ? 0 : u < 0.5 ? 1 : u < 0.7 ? 2 : 3 + rng.below(cfg_.max_faults - 2);
  n_faults = std::min(n_faults, kNumAntennas - e2::kMinActiveAntennas);
  std::array<std::size_t, kNumAntennas> idx{};
  for (std::size_t i = 0; i < kNumAntennas; ++i) idx[i] = i;
  std::bitset<kNumAntennas> faults;
  for (std::size_t i = 0; i < n_faults; ++i) {
    std::swap(idx[i], idx[i + rng.below(kNumAntennas - i)]);
    faults.set(idx[i]);
  }

  AntennaMask mask = AntennaMask::all();
  if (rng.uniform() < cfg_.random_mask_prob) {
    do {
      mask = AntennaMask::none();
      for (std::size_t a = 0; a < kNumAntennas; ++a) mask.set(a, rng.uniform() < 0.5);
    } while (mask.count() < e2::kMinActiveAntennas);
  }
  return set_state(self, partner, faults, mask, rng.next());
}

double PretrainEnv::potential(const AntennaMask& mask) const {
  const auto key = mask.bits().to_ulong();
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const double p = dbm_to_watts(cfg_.tx_power_dbm);
  double sum = 0.0;
  for (std::size_t r = 0; r < cfg_.realizations; ++r)
    sum += pair_throughput_mbps(self_ch_[r].h(), partner_ch_[r].h(), mask, p, self_ch_[r].noise_var(), cfg_.n_re,
                                cfg_.max_mcs, cfg_.la_backoff_db);
  const double thpt = sum / static_cast<double>(cfg_.realizations);
  const double phi = cfg_.weights.alpha * thpt -
                     cfg_.weights.beta * processing_time_us(std::max<std::size_t>(mask.count(), 2), EqualizerKind::Zf);
  cache_.emplace(key, phi);
  return phi;
}

Observation PretrainEnv::observe() const {
  const auto& ch = self_ch_[t_ % cfg_.realizations];
  return build_observation(compute_port_csi(ch, cfg_.tx_power_dbm), mask_);
}

PretrainEnv::StepResult PretrainEnv::step(std::size_t action, Rng* rng) {
  AntennaMask next = apply_action(mask_, decode_action(action));
  if (next.count() < e2::kMinActiveAntennas) next = mask_;
  StepResult out;
  out.reward = potential(next) - potential(mask_);
  mask_ = next;
  ++t_;
  if (rng && rng->uniform() < cfg_.fault_toggle_prob) {
    const std::size_t a = rng->below(kNumAntennas);
    auto f = faults_;
    f.flip(a);
    if (kNumAntennas - f.count() >= e2::kMinActiveAntennas) {
      faults_ = f;
      rebuild();
    }
  }
  out.obs = observe();
  out.done = t_ >= cfg_.horizon;
  return out;
}

// ---------------------------------------------------------------------------

std::size_t greedy_action(const DqnModel& model, const Observation& obs, const AntennaMask& mask) {
  const auto q = model.forward(obs);
  // Actions that leave the mask unchanged are worth exactly zero under the
  // potential-difference reward; score them so instead of trusting the net.
  std::size_t best = dqn::kActions;
  double best_q = 0.0;
  std::size_t noop = dqn::kActions;
  for (std::size_t i = 0; i < dqn::kActions; ++i) {
    const AntennaAction a = decode_action(i);
    if (!a.activate && mask.test(a.antenna) && mask.count() <= e2::kMinActiveAntennas) continue;
    // an antenna reporting the RSRP floor is disconnected: nothing to gain
    if (a.activate && !mask.test(a.antenna) && obs[a.antenna][2] <= 0.0) continue;
    const bool changes = mask.test(a.antenna) != a.activate;
    if (!changes) {
      if (noop == dqn::kActions) noop = i;
      continue;
    }
    if (best == dqn::kActions || q[i] > best_q) {
      best = i;
      best_q = q[i];
    }
  }
  if (best == dqn::kActions || (noop != dqn::kActions && best_q <= 0.0)) return noop;
  return best;
}

namespace {

nlohmann::ordered_json manifest(const PretrainConfig& c, std::size_t steps, double final_loss) {
  const auto& e = c.env;
  nlohmann::ordered_json ru = nlohmann::ordered_json::array();
  for (const auto& p : e.array.ru_positions) ru.push_back({p.x, p.y});
  nlohmann::ordered_json anchors = nlohmann::ordered_json::array();
  for (const auto& p : e.anchor_positions) anchors.push_back({p.x, p.y});
  return {{"format", "cfdqn-manifest/1"},
          {"seed", c.seed},
          {"episodes", c.episodes},
          {"horizon", e.horizon},
          {"gamma", c.gamma},
          {"optimizer", {{"kind", "sgd_momentum"}, {"lr", c.lr}, {"lr_final", c.lr_final}, {"momentum", c.momentum}}},
          {"epsilon", {{"start", c.eps_start}, {"end", c.eps_end}, {"decay_fraction", c.eps_decay_fraction}}},
          {"replay_capacity", c.replay_capacity},
          {"batch", c.batch},
          {"target_sync", c.target_sync},
          {"warmup", c.warmup},
          {"train_every", c.train_every},
          {"max_grad_norm", c.max_grad_norm},
          {"reward_clip", c.reward_clip},
          {"model", {{"hidden_channels", c.hidden}, {"kernel", c.kernel}}},
          {"reward", {{"alpha_per_mbps", e.weights.alpha}, {"beta_per_us", e.weights.beta}}},
          {"env",
           {{"ru_positions", ru},
            {"tx_power_dbm", e.tx_power_dbm},
            {"noise_floor_dbm", e.array.noise_floor_dbm},
            {"realizations", e.realizations},
            {"area_m", {e.area_min_m, e.area_max_m}},
            {"anchor_positions", anchors},
            {"anchor_prob", e.anchor_prob},
            {"anchor_jitter_m", e.anchor_jitter_m},
            {"n_re", e.n_re},
            {"la_backoff_db", e.la_backoff_db},
            {"random_mask_prob", e.random_mask_prob},
            {"fault_toggle_prob", e.fault_toggle_prob},
            {"max_faults", e.max_faults}}},
          {"steps", steps},
          {"final_loss", final_loss}};
}

}  // namespace

PretrainResult pretrain(const PretrainConfig& cfg) {
  if (cfg.episodes == 0) throw std::invalid_argument("episodes must be positive");
  if (cfg.batch == 0 || cfg.target_sync == 0 || cfg.train_every == 0)
    throw std::invalid_argument("batch, target_sync and train_every must be positive");
  PretrainEnv env(cfg.env);
  DqnModel online = DqnModel::initialized(mix_seed({cfg.seed, 0xd91}), cfg.hidden, cfg.kernel);
  DqnModel target = online;
  dqn::ReplayBuffer replay(cfg.replay_capacity);
  dqn::SgdMomentum opt(online.param_count(), cfg.lr, cfg.momentum);
  Rng env_rng(mix_seed({cfg.seed, 1}));
  Rng act_rng(mix_seed({cfg.seed, 2}));
  Rng sample_rng(mix_seed({cfg.seed, 3}));

  const double decay_eps = std::max(1.0, cfg.eps_decay_fraction * static_cast<double>(cfg.episodes));
  const std::size_t total_steps = cfg.episodes * cfg.env.horizon;
  std::size_t steps = 0, updates = 0;
  double loss = 0.0, loss_avg = 0.0;
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const double frac = std::min(1.0, static_cast<double>(ep) / decay_eps);
    const double eps = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
    Observation obs = env.reset(env_rng);
    bool done = false;
    while (!done) {
      std::size_t a;
      if (act_rng.uniform() < eps)
        a = act_rng.below(dqn::kActions);
      else
        a = greedy_action(online, obs, env.mask());
      auto res = env.step(a, &env_rng);
      done = res.done;
      // The horizon is a time limit, not a terminal state: keep bootstrapping.
      const double r = cfg.reward_clip > 0.0 ? std::clamp(res.reward, -cfg.reward_clip, cfg.reward_clip) : res.reward;
      replay.push({obs, a, r, res.obs, false});
      obs = res.obs;
      ++steps;
      if (replay.size() >= std::max(cfg.warmup, cfg.batch) && steps % cfg.train_every == 0) {
        const double progress = static_cast<double>(steps) / static_cast<double>(total_steps);
        opt.set_lr(cfg.lr + (cfg.lr_final - cfg.lr) * std::min(1.0, progress));
        const auto batch = replay.sample(cfg.batch, sample_rng);
        try {
          loss = dqn::train_step(online, target, batch, cfg.gamma, opt, cfg.max_grad_norm);
        } catch (const std::runtime_error& e) {
          throw std::runtime_error("pretraining diverged in episode " + std::to_string(ep) + ": " + e.what());
        }
        loss_avg = updates == 0 ? loss : 0.99 * loss_avg + 0.01 * loss;
        if (++updates % cfg.target_sync == 0) target = online;
      }
    }
    if ((ep + 1) % 500 == 0)
      spdlog::info("pretrain episode {}/{} eps {:.3f} loss {:.4f}", ep + 1, cfg.episodes, eps, loss_avg);
  }
  PretrainResult out{online, manifest(cfg, steps, loss_avg).dump(2) + "\n", loss_avg, steps};
  return out;
}

// ---------------------------------------------------------------------------

AssociationXapp::AssociationXapp(DqnModel model) : model_(std::move(model)) {}

e2::SubscriptionRequest AssociationXapp::subscribe() { return client_.make_subscription(e2::demo_metrics(), 4, 1000); }

void AssociationXapp::on_subscription_response(const e2::SubscriptionResponse& resp) {
  subscribed_ = resp.accepted;
  if (!resp.accepted) spdlog::warn("KPM subscription {} rejected", resp.sub_id);
}

AntennaMask AssociationXapp::believed_mask(Rnti ue) const {
  auto it = masks_.find(ue);
  return it == masks_.end() ? AntennaMask::all() : it->second;
}

std::vector<e2::ControlRequest> AssociationXapp::on_indication(const e2::Indication& ind) {
  std::vector<e2::ControlRequest> out;
  std::vector<Rnti> seen;
  for (const auto& rec : ind.records) {
    if (std::find(seen.begin(), seen.end(), rec.ue_id) != seen.end()) continue;
    seen.push_back(rec.ue_id);
    const AntennaMask mask = believed_mask(rec.ue_id);
    Observation obs;
    try {
      obs = build_observation(rec, UeCfConfig{mask});
    } catch (const std::invalid_argument& e) {
      spdlog::warn("skipping UE {}: {}", rec.ue_id, e.what());
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t idx = greedy_action(model_, obs, mask);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    Decision d;
    d.timestamp_ms = ind.timestamp_ms;
    d.ue_id = rec.ue_id;
    d.action = decode_action(idx);
    d.requested = apply_action(mask, d.action);
    d.inference_ms = ms;
    d.sent = d.requested != mask;
    if (d.sent) {
      auto req = client_.make_control(rec.ue_id, d.requested);
      d.ctrl_id = req.ctrl_id;
      pending_[req.ctrl_id] = log_.size();
      out.push_back(req);
      spdlog::debug("UE {} {} antenna {} -> {} ({:.3f} ms)", rec.ue_id, d.action.activate ? "activate" : "deactivate",
                    d.action.antenna, d.requested.str(), ms);
    }
    log_.push_back(d);
  }
  return out;
}

void AssociationXapp::on_ack(const e2::ControlAck& ack) {
  client_.on_ack(ack);
  auto it = pending_.find(ack.ctrl_id);
  if (it == pending_.end()) return;
  Decision& d = log_[it->second];
  d.applied = ack.applied;
  if (ack.applied) masks_[d.ue_id] = ack.antenna_mask;
  pending_.erase(it);
}

}  // namespace cflab::xapp
