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

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cflab/e2.hpp"
#include "cflab/phy.hpp"
#include "cflab/scenario.hpp"
#include "cflab/scheduler.hpp"
#include "cflab/xapp.hpp"

namespace cflab {

inline constexpr double kDlCapacityMbps = 127.0;
inline constexpr uint64_t kKpmPeriodMs = 1000;

struct UeMetrics {
  Rnti rnti = 0;
  double thpt_mbps = 0.0;
  AntennaMask cf_port_selection;
  PortCsi csi;
};

/// One simulated second.
struct MetricsRow {
  uint64_t time_s = 0;
  std::vector<UeMetrics> ues;
  double total_thpt_mbps = 0.0;
  std::size_t active_antennas = 0;
  double power_w = 0.0;
  double ptime_us = 0.0;  // mean per UL slot
  std::size_t actions = 0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;
  static const char* csv_header();
  std::string csv() const;
  void write_csv(const std::string& path) const;
};

/// Slot-level counters, mostly for tests.
struct SimCounters {
  uint64_t ul_slots = 0;
  uint64_t grants = 0;
  uint64_t retx_grants = 0;
  uint64_t failed_tx = 0;
  uint64_t mu_pairs = 0;
  uint64_t singular_fallbacks = 0;
  uint64_t deferred = 0;
  uint64_t indications = 0;
  uint64_t controls = 0;
  uint64_t acks = 0;
};

/// The slot loop: scheduler -> PHY every UL slot, KPM report every second,
/// xApp controls applied at the next slot boundary. Faults and UI commands
/// are applied between slots. Fully deterministic given the scenario.
class Simulation {
 public:
  /// Loads the xApp model from cfg.xapp.model_path when the xApp is enabled
  /// and no model is passed; with a model, model_path may be empty.
  explicit Simulation(ScenarioConfig cfg, std::optional<dqn::DqnModel> model = std::nullopt);
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Advances one 0.5 ms slot.
  void step_slot();
  /// Advances to the next whole second and returns its row.
  const MetricsRow& step_second();
  /// Runs until duration_s.
  const MetricsLog& run_to_end();

  bool finished() const { return now_ms() >= cfg_.duration_s * 1000; }
  uint64_t slot() const { return slot_; }
  uint64_t now_ms() const { return slot_ / 2; }

  void set_fault(std::size_t antenna, bool on);
  void move_ue(Rnti rnti, Point p);

  const MetricsLog& log() const { return log_; }
  const SimCounters& counters() const { return counters_; }
  const ScenarioConfig& config() const { return cfg_; }
  const std::map<Rnti, UeLink>& links() const { return links_; }
  std::bitset<kNumAntennas> faults() const { return faults_; }
  const xapp::AssociationXapp* xapp() const { return xapp_.get(); }
  const e2::E2Agent& agent() const { return agent_; }
  AntennaMask equalizer_mask() const;

  e2::UiSnapshot snapshot(std::size_t max_decisions = 32) const;

  /// Sees every indication as it leaves the agent.
  void set_indication_observer(std::function<void(const e2::Indication&)> f) { on_indication_ = std::move(f); }

 private:
  struct UeRuntime {
    UeSpec spec;
    double buffer_bytes = 0.0;
    double last_sinr_db = 0.0;
    std::deque<SchedRequest> retx;
    int next_harq = 0;
    double bits_this_second = 0.0;
    double last_thpt_mbps = 0.0;
    uint64_t prb_this_second = 0;
    uint64_t tb_total = 0;
    uint64_t tb_err = 0;
  };
  struct RicLink;

  void redraw_channels();
  void apply_due_faults();
  void run_ul_slot();
  void kpm_round();
  void finalize_second();
  std::vector<e2::UeKpmSource> kpm_sources() const;

  ScenarioConfig cfg_;
  uint64_t slot_ = 0;
  uint64_t ul_index_ = 0;
  std::map<Rnti, UeRuntime> ues_;
  std::map<Rnti, UeLink> links_;
  std::map<Rnti, PortCsi> last_csi_;
  std::bitset<kNumAntennas> faults_;
  std::vector<bool> fault_applied_;
  uint64_t fading_block_ = ~uint64_t{0};
  ReBitmaps bm_;
  e2::E2Agent agent_;
  std::unique_ptr<xapp::AssociationXapp> xapp_;
  std::unique_ptr<RicLink> ric_;
  double ptime_sum_us_ = 0.0;
  uint64_t ul_slots_this_second_ = 0;
  std::size_t actions_this_second_ = 0;
  MetricsLog log_;
  SimCounters counters_;
  std::function<void(const e2::Indication&)> on_indication_;
};

MetricsLog run_scenario(const ScenarioConfig& cfg, std::optional<dqn::DqnModel> model = std::nullopt);

struct Table3Row {
  std::size_t antennas_selected = 0;
  double power_w = 0.0;
  double total_thpt_mbps = 0.0;
  double ptime_us = 0.0;
  bool flagged = false;
  std::optional<uint64_t> converged_at_s;
};

struct Table3Options {
  std::vector<std::size_t> fault_order = {2, 3, 5, 7, 4, 6};
  uint64_t converge_by_s = 60;
  uint64_t measure_s = 30;
  uint64_t seed = 1;
};

/// For k = 8..2 faults the first 8-k antennas of the fault order at t = 0,
/// lets the xApp converge, then averages the next measure_s rows.
std::vector<Table3Row> table3_experiment(const dqn::DqnModel& model, const ScenarioConfig& base,
                                         const Table3Options& opt = {});
std::string table3_csv(const std::vector<Table3Row>& rows);

}  // namespace cflab
