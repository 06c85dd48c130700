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

#include "cflab/sim.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <system_error>

#include "cflab/log.hpp"
#include "cflab/mcs.hpp"

namespace cflab {

namespace {

constexpr double kFullBufferBytes = 1e12;
constexpr double kBlerMarginDb = 1.0;
constexpr double kBlerLow = 0.001;
constexpr double kBlerHigh = 0.1;

}  // namespace

// The in-process RIC: agent and xApp talk over a socketpair using the
// framed wire protocol, driven from the simulation thread.
struct Simulation::RicLink {
  int fds[2] = {-1, -1};
  e2::FdStream ran{-1};
  e2::FdStream ric{-1};

  RicLink() {
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
      throw std::system_error(errno, std::generic_category(), "socketpair");
    ran = e2::FdStream(fds[0]);
    ric = e2::FdStream(fds[1]);
    ran.send_version();
    ric.send_version();
    ric.expect_version();
    ran.expect_version();
  }
  ~RicLink() {
    for (int fd : fds)
      if (fd >= 0) ::close(fd);
  }
  RicLink(const RicLink&) = delete;
  RicLink& operator=(const RicLink&) = delete;

  static e2::Message receive(e2::FdStream& s) {
    auto m = s.read();
    if (!m) throw std::runtime_error("E2 link closed");
    return *std::move(m);
  }
};

Simulation::Simulation(ScenarioConfig cfg, std::optional<dqn::DqnModel> model)
    : cfg_(std::move(cfg)), bm_(cfg_.n_re) {
  auto problems = validate(cfg_);
  // a model handed in directly stands in for the file
  if (model) std::erase_if(problems, [](const std::string& p) { return p.rfind("xapp.model_path", 0) == 0; });
  if (!problems.empty()) throw ScenarioError(std::move(problems));
  fault_applied_.assign(cfg_.fault_schedule.size(), false);
  for (const auto& spec : cfg_.ues) {
    UeRuntime ue;
    ue.spec = spec;
    ues_.emplace(spec.rnti, ue);
    UeLink link;
    link.tx_power_dbm = spec.tx_power_dbm;
    links_.emplace(spec.rnti, link);
    agent_.attach_ue(spec.rnti);
  }
  apply_due_faults();
  redraw_channels();
  for (auto& [rnti, ue] : ues_) {
    const auto& l = links_.at(rnti);
    ue.last_sinr_db = mrc_sinr(l.channel.h(), l.cfg.cf_port_selection, dbm_to_watts(l.tx_power_dbm), l.channel.noise_var());
    last_csi_[rnti] = compute_port_csi(l.channel, l.tx_power_dbm);
    agent_.update_csi(rnti, last_csi_[rnti]);
  }

  if (cfg_.xapp.enabled) {
    xapp_ = std::make_unique<xapp::AssociationXapp>(model ? *std::move(model) : dqn::DqnModel::load(cfg_.xapp.model_path));
    ric_ = std::make_unique<RicLink>();
    ric_->ric.write(xapp_->subscribe());
    auto reply = agent_.handle(RicLink::receive(ric_->ran), now_ms());
    if (reply) ric_->ran.write(*reply);
    const auto resp = RicLink::receive(ric_->ric);
    if (const auto* r = std::get_if<e2::SubscriptionResponse>(&resp)) xapp_->on_subscription_response(*r);
    if (!xapp_->subscribed()) throw std::runtime_error("xApp KPM subscription was rejected");
  }
}

Simulation::~Simulation() = default;

void Simulation::redraw_channels() {
  fading_block_ = now_ms() / cfg_.fading_block_ms;
  for (auto& [rnti, link] : links_) {
    const auto& spec = ues_.at(rnti).spec;
    link.channel = draw_channel(UeNode{rnti, spec.position, spec.tx_power_dbm, 0}, cfg_.array,
                                mix_seed({cfg_.seed, rnti, fading_block_}));
    for (std::size_t a = 0; a < kNumAntennas; ++a)
      if (faults_.test(a)) link.channel.set_fault(a, true);
  }
}

void Simulation::set_fault(std::size_t antenna, bool on) {
  if (antenna >= kNumAntennas) throw std::out_of_range("antenna " + std::to_string(antenna) + " out of range [0, 8)");
  faults_.set(antenna, on);
  for (auto& [_, link] : links_) link.channel.set_fault(antenna, on);
  spdlog::info("t={} ms antenna {} {}", now_ms(), antenna, on ? "disconnected" : "reconnected");
}

void Simulation::move_ue(Rnti rnti, Point p) {
  auto it = ues_.find(rnti);
  if (it == ues_.end()) throw std::out_of_range("unknown UE " + std::to_string(rnti));
  it->second.spec.position = p;
  redraw_channels();
}

void Simulation::apply_due_faults() {
  for (std::size_t i = 0; i < cfg_.fault_schedule.size(); ++i) {
    const auto& f = cfg_.fault_schedule[i];
    if (fault_applied_[i] || static_cast<double>(now_ms()) < f.time_s * 1000.0) continue;
    fault_applied_[i] = true;
    set_fault(f.antenna, f.on);
  }
}

AntennaMask Simulation::equalizer_mask() const {
  AntennaMask m = AntennaMask::none();
  for (const auto& [_, link] : links_) m = m | link.cfg.cf_port_selection;
  return m;
}

void Simulation::run_ul_slot() {
  std::vector<Rnti> rntis;
  for (const auto& [r, _] : ues_) rntis.push_back(r);
  std::vector<SchedRequest> reqs;
  for (Rnti r : round_robin_order(rntis, ul_index_)) {
    UeRuntime& ue = ues_.at(r);
    const double csi_sinr = ue.last_sinr_db - cfg_.la_backoff_db;
    if (!ue.retx.empty()) {
      SchedRequest req = ue.retx.front();
      req.wideband_sinr_db = csi_sinr;
      reqs.push_back(req);
    } else if (ue.buffer_bytes >= 1.0) {
      SchedRequest req;
      req.rnti = r;
      req.buffer_bytes = static_cast<uint64_t>(std::ceil(ue.buffer_bytes));
      req.wideband_sinr_db = csi_sinr;
      req.harq_id = ue.next_harq;
      ue.next_harq = (ue.next_harq + 1) % 16;
      reqs.push_back(req);
    }
  }

  bm_.reset();
  const SlotSchedule sched = schedule_slot(reqs, bm_, slot_, cfg_.max_ul_mcs);
  counters_.deferred += sched.deferred.size();
  counters_.grants += sched.grants.size();

  const auto reports = process_slot(sched.pdus, links_, PhyOptions{cfg_.est_snr_db, mix_seed({cfg_.seed, 0x9e7, slot_})});
  double ptime = 0.0;
  for (const auto& rep : reports) {
    ptime += rep.processing_time_us;
    if (rep.ues.size() == 2) ++counters_.mu_pairs;
    if (rep.singular_fallback) ++counters_.singular_fallbacks;
    for (const auto& u : rep.ues) {
      auto g = std::find_if(sched.grants.begin(), sched.grants.end(), [&](const UlGrant& x) { return x.rnti == u.rnti; });
      if (g == sched.grants.end()) throw std::logic_error("PHY reported a UE without a grant");
      UeRuntime& ue = ues_.at(u.rnti);
      if (g->is_retx) {
        ue.retx.pop_front();
        ++counters_.retx_grants;
      }
      const double p_err = u.post_eq_sinr_db < mcs_sinr_threshold_db(g->mcs) + kBlerMarginDb ? kBlerHigh : kBlerLow;
      Rng draw(mix_seed({cfg_.seed, 0xb1e, slot_, u.rnti}));
      ++ue.tb_total;
      ue.prb_this_second += g->re_range.length;
      if (draw.uniform() < p_err) {
        ++ue.tb_err;
        ++counters_.failed_tx;
        SchedRequest retx;
        retx.rnti = u.rnti;
        retx.is_retx = true;
        retx.retx_mcs = g->mcs;
        retx.retx_n_prb = g->re_range.length;
        retx.harq_id = g->harq_id;
        ue.retx.push_back(retx);
      } else {
        const double bits = transport_block_bits(g->re_range.length, g->mcs);
        ue.bits_this_second += bits;
        if (ue.spec.traffic == TrafficKind::Rate) ue.buffer_bytes = std::max(0.0, ue.buffer_bytes - bits / 8.0);
      }
      ue.last_sinr_db = u.post_eq_sinr_db;
    }
  }
  ptime_sum_us_ += ptime;
  ++ul_slots_this_second_;
  ++ul_index_;
  ++counters_.ul_slots;

  for (const auto& [r, link] : links_) {
    last_csi_[r] = compute_port_csi(link.channel, link.tx_power_dbm);
    agent_.update_csi(r, last_csi_[r]);
  }
}

std::vector<e2::UeKpmSource> Simulation::kpm_sources() const {
  std::vector<e2::UeKpmSource> out;
  for (const auto& [r, ue] : ues_) {
    e2::UeKpmSource s;
    s.rnti = r;
    s.csi = last_csi_.at(r);
    s.scalars[std::string(e2::metric::kUeThpUl)] = ue.bits_this_second / 1e6;
    s.scalars[std::string(e2::metric::kUeThpDl)] = kDlCapacityMbps / static_cast<double>(ues_.size());
    s.scalars[std::string(e2::metric::kPrbUsedUl)] =
        ul_slots_this_second_ ? static_cast<double>(ue.prb_this_second) / static_cast<double>(ul_slots_this_second_) : 0.0;
    s.scalars[std::string(e2::metric::kPrbUsedDl)] = static_cast<double>(cfg_.n_re);
    s.scalars[std::string(e2::metric::kTbTotUl)] = static_cast<double>(ue.tb_total);
    s.scalars[std::string(e2::metric::kTbErrUl)] = static_cast<double>(ue.tb_err);
    out.push_back(std::move(s));
  }
  return out;
}

void Simulation::kpm_round() {
  const auto sources = kpm_sources();
  for (const auto& ind : agent_.report_tick(now_ms(), sources)) {
    ++counters_.indications;
    if (on_indication_) on_indication_(ind);
    ric_->ran.write(ind);
    const auto msg = RicLink::receive(ric_->ric);
    const auto* got = std::get_if<e2::Indication>(&msg);
    if (!got) throw std::runtime_error("RIC expected an indication");
    const auto ctrls = xapp_->on_indication(*got);
    for (const auto& c : ctrls) ric_->ric.write(c);
    for (std::size_t i = 0; i < ctrls.size(); ++i) {
      auto reply = agent_.handle(RicLink::receive(ric_->ran), now_ms());
      if (reply) ric_->ran.write(*reply);
      const auto ack = RicLink::receive(ric_->ric);
      if (const auto* a = std::get_if<e2::ControlAck>(&ack)) {
        xapp_->on_ack(*a);
        ++counters_.acks;
      }
    }
    counters_.controls += ctrls.size();
    actions_this_second_ += ctrls.size();
  }
}

void Simulation::finalize_second() {
  MetricsRow row;
  row.time_s = now_ms() / 1000;
  for (auto& [r, ue] : ues_) {
    UeMetrics m;
    m.rnti = r;
    m.thpt_mbps = ue.bits_this_second / 1e6;
    m.cf_port_selection = links_.at(r).cfg.cf_port_selection;
    m.csi = last_csi_.at(r);
    row.total_thpt_mbps += m.thpt_mbps;
    row.ues.push_back(m);
    ue.last_thpt_mbps = m.thpt_mbps;
    ue.bits_this_second = 0.0;
    ue.prb_this_second = 0;
  }
  row.active_antennas = equalizer_mask().count();
  row.power_w = processor_power_w(std::clamp<std::size_t>(row.active_antennas, 2, kNumAntennas));
  row.ptime_us = ul_slots_this_second_ ? ptime_sum_us_ / static_cast<double>(ul_slots_this_second_) : 0.0;
  row.actions = actions_this_second_;
  ptime_sum_us_ = 0.0;
  ul_slots_this_second_ = 0;
  actions_this_second_ = 0;
  log_.rows.push_back(std::move(row));
}

void Simulation::step_slot() {
  // Slot boundary: staged controls take effect before this slot is built.
  agent_.apply_pending();
  for (auto& [r, link] : links_) link.cfg = agent_.config(r);
  for (auto& [_, ue] : ues_) {
    if (ue.spec.traffic == TrafficKind::FullBuffer) ue.buffer_bytes = kFullBufferBytes;
    else ue.buffer_bytes += ue.spec.rate_mbps * 1e6 / 8.0 * kSlotSeconds;
  }
  if (cfg_.tdd.is_ul(slot_)) run_ul_slot();
  ++slot_;
  if (slot_ % 2 != 0) return;

  const uint64_t now = now_ms();
  if (xapp_ && agent_.report_due(now)) kpm_round();
  if (now % 1000 == 0) finalize_second();
  apply_due_faults();
  if (now / cfg_.fading_block_ms != fading_block_) redraw_channels();
}

const MetricsRow& Simulation::step_second() {
  const std::size_t before = log_.rows.size();
  while (log_.rows.size() == before) step_slot();
  return log_.rows.back();
}

const MetricsLog& Simulation::run_to_end() {
  while (!finished()) step_slot();
  return log_;
}

e2::UiSnapshot Simulation::snapshot(std::size_t max_decisions) const {
  e2::UiSnapshot s;
  s.time_s = static_cast<double>(now_ms()) / 1000.0;
  const MetricsRow* last = log_.rows.empty() ? nullptr : &log_.rows.back();
  for (const auto& [r, link] : links_) {
    e2::UeSnapshot u;
    u.ue_id = r;
    if (last)
      for (const auto& m : last->ues)
        if (m.rnti == r) u.thpt_mbps = m.thpt_mbps;
    u.cf_port_selection = link.cfg.cf_port_selection;
    const auto csi = compute_port_csi(link.channel, link.tx_power_dbm);
    u.snr_db.assign(csi.snr_db.begin(), csi.snr_db.end());
    u.rsrp_dbm.assign(csi.rsrp_dbm.begin(), csi.rsrp_dbm.end());
    s.ues.push_back(std::move(u));
  }
  s.dl_capacity_mbps = kDlCapacityMbps;
  s.active_antennas = equalizer_mask().count();
  if (last) {
    s.total_thpt_mbps = last->total_thpt_mbps;
    s.power_w = last->power_w;
    s.ptime_us = last->ptime_us;
    s.actions = last->actions;
  }
  for (std::size_t a = 0; a < kNumAntennas; ++a) s.faults.push_back(faults_.test(a));
  if (xapp_) {
    std::vector<e2::DecisionEntry> entries;
    for (const auto& d : xapp_->decisions()) {
      if (!d.sent) continue;
      entries.push_back({static_cast<double>(d.timestamp_ms) / 1000.0, d.ue_id, d.action.antenna, d.action.activate,
                         d.requested, d.applied.value_or(false)});
    }
    const std::size_t from = entries.size() > max_decisions ? entries.size() - max_decisions : 0;
    s.decisions.assign(entries.begin() + static_cast<std::ptrdiff_t>(from), entries.end());
  }
  return s;
}

// ---------------------------------------------------------------------------

const char* MetricsLog::csv_header() {
  return "time_s,ue_id,thpt_mbps,total_thpt_mbps,active_antennas,power_w,ptime_us,actions";
}

std::string MetricsLog::csv() const {
  std::string out = std::string(csv_header()) + "\n";
  char line[256];
  for (const auto& row : rows)
    for (const auto& u : row.ues) {
      std::snprintf(line, sizeof line, "%llu,%u,%.6f,%.6f,%zu,%.4f,%.4f,%zu\n",
                    static_cast<unsigned long long>(row.time_s), static_cast<unsigned>(u.rnti), u.thpt_mbps,
                    row.total_thpt_mbps, row.active_antennas, row.power_w, row.ptime_us, row.actions);
      out += line;
    }
  return out;
}

void MetricsLog::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << csv();
  if (!f) throw std::runtime_error("write failed for " + path);
}

MetricsLog run_scenario(const ScenarioConfig& cfg, std::optional<dqn::DqnModel> model) {
  Simulation sim(cfg, std::move(model));
  return sim.run_to_end();
}

std::vector<Table3Row> table3_experiment(const dqn::DqnModel& model, const ScenarioConfig& base,
                                         const Table3Options& opt) {
  if (opt.fault_order.size() < kNumAntennas - 2) throw std::invalid_argument("fault order needs 6 antennas");
  std::vector<Table3Row> out;
  for (std::size_t k = kNumAntennas; k >= 2; --k) {
    ScenarioConfig cfg = base;
    cfg.seed = opt.seed;
    cfg.duration_s = opt.converge_by_s + opt.measure_s;
    cfg.xapp.enabled = true;
    cfg.fault_schedule.clear();
    for (std::size_t i = 0; i < kNumAntennas - k; ++i) cfg.fault_schedule.push_back({0.0, opt.fault_order[i], true});
    Simulation sim(cfg, model);
    const auto& rows = sim.run_to_end().rows;

    Table3Row t;
    t.antennas_selected = k;
    for (std::size_t i = rows.size(); i-- > 0;) {
      if (rows[i].active_antennas != k) break;
      t.converged_at_s = rows[i].time_s;
    }
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.time_s <= opt.converge_by_s) continue;
      t.power_w += r.power_w;
      t.total_thpt_mbps += r.total_thpt_mbps;
      t.ptime_us += r.ptime_us;
      ++n;
    }
    if (n) {
      t.power_w /= static_cast<double>(n);
      t.total_thpt_mbps /= static_cast<double>(n);
      t.ptime_us /= static_cast<double>(n);
    }
    t.flagged = !t.converged_at_s || *t.converged_at_s > opt.converge_by_s;
    if (t.flagged) spdlog::warn("table3: xApp did not settle on {} antennas within {} s", k, opt.converge_by_s);
    out.push_back(t);
  }
  return out;
}

std::string table3_csv(const std::vector<Table3Row>& rows) {
  std::string out = "antennas_selected,power_w,total_thpt_mbps,ptime_us,flagged\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%zu,%.3f,%.3f,%.3f,%d\n", r.antennas_selected, r.power_w, r.total_thpt_mbps,
                  r.ptime_us, r.flagged ? 1 : 0);
    out += line;
  }
  return out;
}

}  // namespace cflab
