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

#include "cflab/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "cflab/mcs.hpp"
#include "json.hpp"

namespace cflab {

using Json = nlohmann::ordered_json;

ScenarioConfig ScenarioConfig::lab_default() {
  ScenarioConfig c;
  c.ues = {{kDefaultRnti1, kLabUePositions[0], 23.0, TrafficKind::FullBuffer, 0.0},
           {kDefaultRnti2, kLabUePositions[1], 23.0, TrafficKind::FullBuffer, 0.0}};
  return c;
}

std::size_t prbs_for_bandwidth(double bandwidth_mhz, double scs_khz) {
  if (scs_khz != 30.0) return 0;
  // 30 kHz rows of the NR FR1 transmission bandwidth table that fit the
  // 51-PRB calibration.
  static const std::pair<double, std::size_t> rows[] = {{5, 11}, {10, 24}, {15, 38}, {20, 51}};
  for (const auto& [bw, n] : rows)
    if (bw == bandwidth_mhz) return n;
  return 0;
}

ScenarioError::ScenarioError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string s = "invalid scenario:";
        for (const auto& p : problems) s += "\n  " + p;
        return s;
      }()),
      problems_(std::move(problems)) {}

std::vector<std::string> validate(const ScenarioConfig& c) {
  std::vector<std::string> e;
  if (c.array.ru_positions.empty()) e.push_back("topology.ru_positions: at least one RU is required");
  if (c.array.antennas_per_ru == 0) e.push_back("topology.antennas_per_ru: must be positive");
  if (c.array.num_antennas() != kNumAntennas)
    e.push_back("topology: ru_positions x antennas_per_ru must give 8 antennas, got " +
                std::to_string(c.array.num_antennas()));
  if (!(c.array.height_offset_m >= 0.0)) e.push_back("topology.height_offset_m: must be >= 0");
  if (!(c.array.path_loss.d0_m > 0.0)) e.push_back("topology.path_loss.d0_m: must be > 0");
  if (!(c.array.path_loss.exponent > 0.0)) e.push_back("topology.path_loss.exponent: must be > 0");

  if (c.ues.empty()) e.push_back("topology.ues: at least one UE is required");
  if (c.ues.size() > 2) e.push_back("topology.ues: at most 2 UEs share the grid");
  std::set<Rnti> seen;
  for (std::size_t i = 0; i < c.ues.size(); ++i) {
    const auto& u = c.ues[i];
    const std::string p = "topology.ues[" + std::to_string(i) + "]";
    if (u.rnti == 0) e.push_back(p + ".rnti: must be non-zero");
    if (!seen.insert(u.rnti).second) e.push_back(p + ".rnti: duplicate RNTI " + std::to_string(u.rnti));
    if (!std::isfinite(u.position.x) || !std::isfinite(u.position.y)) e.push_back(p + ": position must be finite");
    if (!std::isfinite(u.tx_power_dbm)) e.push_back(p + ".tx_power_dbm: must be finite");
    if (u.traffic == TrafficKind::Rate && !(u.rate_mbps > 0.0)) e.push_back(p + ".rate_mbps: must be > 0");
    if (c.array.height_offset_m == 0.0)
      for (const auto& ru : c.array.ru_positions)
        if (ru == u.position) e.push_back(p + ": UE sits on an RU with zero height offset");
  }

  const std::size_t expect = prbs_for_bandwidth(c.bandwidth_mhz, c.scs_khz);
  if (c.scs_khz != 30.0) e.push_back("scs_khz: only 30 kHz is modeled");
  else if (expect == 0) e.push_back("bandwidth_mhz: unsupported at 30 kHz (use 5, 10, 15 or 20)");
  else if (c.n_re != expect)
    e.push_back("n_re: " + std::to_string(c.bandwidth_mhz) + " MHz at 30 kHz carries " + std::to_string(expect) +
                " PRBs, got " + std::to_string(c.n_re));
  if (c.n_re == 0 || c.n_re > kAnchorPrbs) e.push_back("n_re: must be in [1, 51]");

  if (c.tdd.period_slots == 0) e.push_back("tdd.period_slots: must be positive");
  if (c.tdd.ul_slots == 0) e.push_back("tdd.ul_slots: at least one UL slot is required");
  if (c.tdd.ul_slots + c.tdd.dl_slots > c.tdd.period_slots) e.push_back("tdd: ul_slots + dl_slots exceeds period_slots");
  if (c.max_ul_mcs < 0 || c.max_ul_mcs > kMaxMcs) e.push_back("max_ul_mcs: must be in [0, 28]");
  if (c.fading_block_ms == 0) e.push_back("channel.fading_block_ms: must be positive");
  if (std::isnan(c.est_snr_db)) e.push_back("channel.est_snr_db: must be a number");
  if (!std::isfinite(c.la_backoff_db) || c.la_backoff_db < 0.0) e.push_back("channel.la_backoff_db: must be >= 0");
  for (std::size_t i = 0; i < c.fault_schedule.size(); ++i) {
    const auto& f = c.fault_schedule[i];
    const std::string p = "fault_schedule[" + std::to_string(i) + "]";
    if (!(f.time_s >= 0.0) || !std::isfinite(f.time_s)) e.push_back(p + ".time_s: must be >= 0");
    if (f.antenna >= kNumAntennas) e.push_back(p + ".antenna: must be in [0, 8)");
  }
  if (c.duration_s == 0) e.push_back("duration_s: must be positive");
  if (c.xapp.enabled && c.xapp.model_path.empty()) e.push_back("xapp.model_path: required when the xApp is enabled");
  return e;
}

namespace {

class Reader {
 public:
  std::vector<std::string> errors;

  bool object(const Json& j, const std::string& path) {
    if (j.is_object()) return true;
    errors.push_back(path + ": expected an object");
    return false;
  }

  void only(const Json& j, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& [k, _] : j.items()) {
      bool ok = false;
      for (const char* a : keys) ok = ok || k == a;
      if (!ok) errors.push_back(join(path, k) + ": unknown field");
    }
  }

  void num(const Json& j, const char* key, const std::string& path, double& out) {
    if (!j.contains(key)) return;
    if (j[key].is_number()) out = j[key].get<double>();
    else errors.push_back(join(path, key) + ": expected a number");
  }

  template <class U>
  void uint(const Json& j, const char* key, const std::string& path, U& out) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<int64_t>() >= 0)) {
      const auto x = v.get<uint64_t>();
      if (x > std::numeric_limits<U>::max()) errors.push_back(join(path, key) + ": out of range");
      else out = static_cast<U>(x);
    } else {
      errors.push_back(join(path, key) + ": expected a non-negative integer");
    }
  }

  void integer(const Json& j, const char* key, const std::string& path, int& out) {
    if (!j.contains(key)) return;
    if (j[key].is_number_integer()) out = j[key].get<int>();
    else errors.push_back(join(path, key) + ": expected an integer");
  }

  void boolean(const Json& j, const char* key, const std::string& path, bool& out) {
    if (!j.contains(key)) return;
    if (j[key].is_boolean()) out = j[key].get<bool>();
    else errors.push_back(join(path, key) + ": expected true or false");
  }

  void str(const Json& j, const char* key, const std::string& path, std::string& out) {
    if (!j.contains(key)) return;
    if (j[key].is_string()) out = j[key].get<std::string>();
    else errors.push_back(join(path, key) + ": expected a string");
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

void read_topology(Reader& r, const Json& t, ScenarioConfig& c) {
  const std::string p = "topology";
  if (!r.object(t, p)) return;
  r.only(t, p, {"ru_positions", "antennas_per_ru", "ru_output_power_dbm", "height_offset_m", "noise_floor_dbm",
                "path_loss", "ues"});
  if (t.contains("ru_positions")) {
    const auto& rp = t["ru_positions"];
    if (!rp.is_array()) {
      r.errors.push_back(p + ".ru_positions: expected an array of [x, y]");
    } else {
      c.array.ru_positions.clear();
      for (std::size_t i = 0; i < rp.size(); ++i) {
        if (rp[i].is_array() && rp[i].size() == 2 && rp[i][0].is_number() && rp[i][1].is_number())
          c.array.ru_positions.push_back({rp[i][0].get<double>(), rp[i][1].get<double>()});
        else
          r.errors.push_back(p + ".ru_positions[" + std::to_string(i) + "]: expected [x, y]");
      }
    }
  }
  r.uint(t, "antennas_per_ru", p, c.array.antennas_per_ru);
  r.num(t, "ru_output_power_dbm", p, c.array.ru_output_power_dbm);
  r.num(t, "height_offset_m", p, c.array.height_offset_m);
  r.num(t, "noise_floor_dbm", p, c.array.noise_floor_dbm);
  if (t.contains("path_loss") && r.object(t["path_loss"], p + ".path_loss")) {
    const auto& pl = t["path_loss"];
    r.only(pl, p + ".path_loss", {"pl0_db", "d0_m", "exponent"});
    r.num(pl, "pl0_db", p + ".path_loss", c.array.path_loss.pl0_db);
    r.num(pl, "d0_m", p + ".path_loss", c.array.path_loss.d0_m);
    r.num(pl, "exponent", p + ".path_loss", c.array.path_loss.exponent);
  }
  if (t.contains("ues")) {
    const auto& ues = t["ues"];
    if (!ues.is_array()) {
      r.errors.push_back(p + ".ues: expected an array");
      return;
    }
    c.ues.clear();
    for (std::size_t i = 0; i < ues.size(); ++i) {
      const std::string up = p + ".ues[" + std::to_string(i) + "]";
      if (!r.object(ues[i], up)) continue;
      const auto& u = ues[i];
      r.only(u, up, {"rnti", "x", "y", "tx_power_dbm", "traffic", "rate_mbps"});
      UeSpec s;
      s.rnti = static_cast<Rnti>(c.ues.size() + 1);
      if (!u.contains("rnti")) r.errors.push_back(up + ".rnti: required");
      if (!u.contains("x") || !u.contains("y")) r.errors.push_back(up + ": x and y are required");
      r.uint(u, "rnti", up, s.rnti);
      r.num(u, "x", up, s.position.x);
      r.num(u, "y", up, s.position.y);
      r.num(u, "tx_power_dbm", up, s.tx_power_dbm);
      std::string traffic = "full_buffer";
      r.str(u, "traffic", up, traffic);
      if (traffic == "full_buffer") {
        s.traffic = TrafficKind::FullBuffer;
      } else if (traffic == "rate") {
        s.traffic = TrafficKind::Rate;
        if (!u.contains("rate_mbps")) r.errors.push_back(up + ".rate_mbps: required for rate traffic");
      } else {
        r.errors.push_back(up + ".traffic: expected \"full_buffer\" or \"rate\"");
      }
      r.num(u, "rate_mbps", up, s.rate_mbps);
      c.ues.push_back(s);
    }
  }
}

}  // namespace

ScenarioConfig parse_scenario(std::string_view text, const std::string& base_dir) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ScenarioError({std::string("json: ") + e.what()});
  }
  Reader r;
  ScenarioConfig c = ScenarioConfig::lab_default();
  if (!r.object(j, "scenario")) throw ScenarioError(r.errors);
  r.only(j, "", {"topology", "bandwidth_mhz", "scs_khz", "n_re", "tdd", "max_ul_mcs", "channel", "fault_schedule",
                 "duration_s", "seed", "xapp"});
  if (j.contains("topology")) read_topology(r, j["topology"], c);
  r.num(j, "bandwidth_mhz", "", c.bandwidth_mhz);
  r.num(j, "scs_khz", "", c.scs_khz);
  r.uint(j, "n_re", "", c.n_re);
  if (j.contains("tdd") && r.object(j["tdd"], "tdd")) {
    r.only(j["tdd"], "tdd", {"period_slots", "ul_slots", "dl_slots"});
    r.uint(j["tdd"], "period_slots", "tdd", c.tdd.period_slots);
    r.uint(j["tdd"], "ul_slots", "tdd", c.tdd.ul_slots);
    r.uint(j["tdd"], "dl_slots", "tdd", c.tdd.dl_slots);
  }
  r.integer(j, "max_ul_mcs", "", c.max_ul_mcs);
  if (j.contains("channel") && r.object(j["channel"], "channel")) {
    const auto& ch = j["channel"];
    r.only(ch, "channel", {"fading_block_ms", "est_snr_db", "la_backoff_db"});
    r.uint(ch, "fading_block_ms", "channel", c.fading_block_ms);
    if (ch.contains("est_snr_db") && ch["est_snr_db"].is_null())
      c.est_snr_db = std::numeric_limits<double>::infinity();
    else
      r.num(ch, "est_snr_db", "channel", c.est_snr_db);
    r.num(ch, "la_backoff_db", "channel", c.la_backoff_db);
  }
  if (j.contains("fault_schedule")) {
    const auto& fs = j["fault_schedule"];
    if (!fs.is_array()) {
      r.errors.push_back("fault_schedule: expected an array");
    } else {
      for (std::size_t i = 0; i < fs.size(); ++i) {
        const std::string p = "fault_schedule[" + std::to_string(i) + "]";
        if (!r.object(fs[i], p)) continue;
        r.only(fs[i], p, {"time_s", "antenna", "on"});
        if (!fs[i].contains("time_s") || !fs[i].contains("antenna")) r.errors.push_back(p + ": time_s and antenna are required");
        FaultEvent f;
        r.num(fs[i], "time_s", p, f.time_s);
        r.uint(fs[i], "antenna", p, f.antenna);
        r.boolean(fs[i], "on", p, f.on);
        c.fault_schedule.push_back(f);
      }
    }
  }
  r.uint(j, "duration_s", "", c.duration_s);
  r.uint(j, "seed", "", c.seed);
  if (j.contains("xapp") && r.object(j["xapp"], "xapp")) {
    r.only(j["xapp"], "xapp", {"enabled", "model_path"});
    r.boolean(j["xapp"], "enabled", "xapp", c.xapp.enabled);
    r.str(j["xapp"], "model_path", "xapp", c.xapp.model_path);
  }

  auto problems = r.errors;
  for (auto& p : validate(c)) problems.push_back(std::move(p));
  if (!problems.empty()) throw ScenarioError(std::move(problems));

  if (!c.xapp.model_path.empty() && !base_dir.empty()) {
    std::filesystem::path mp(c.xapp.model_path);
    if (mp.is_relative()) c.xapp.model_path = (std::filesystem::path(base_dir) / mp).lexically_normal().string();
  }
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError({"scenario: cannot open " + path});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string scenario_to_json(const ScenarioConfig& c) {
  Json ru = Json::array();
  for (const auto& p : c.array.ru_positions) ru.push_back({p.x, p.y});
  Json ues = Json::array();
  for (const auto& u : c.ues) {
    Json o{{"rnti", u.rnti}, {"x", u.position.x}, {"y", u.position.y}, {"tx_power_dbm", u.tx_power_dbm}};
    if (u.traffic == TrafficKind::FullBuffer) {
      o["traffic"] = "full_buffer";
    } else {
      o["traffic"] = "rate";
      o["rate_mbps"] = u.rate_mbps;
    }
    ues.push_back(o);
  }
  Json faults = Json::array();
  for (const auto& f : c.fault_schedule) faults.push_back({{"time_s", f.time_s}, {"antenna", f.antenna}, {"on", f.on}});
  Json j{{"topology",
          {{"ru_positions", ru},
           {"antennas_per_ru", c.array.antennas_per_ru},
           {"ru_output_power_dbm", c.array.ru_output_power_dbm},
           {"height_offset_m", c.array.height_offset_m},
           {"noise_floor_dbm", c.array.noise_floor_dbm},
           {"path_loss",
            {{"pl0_db", c.array.path_loss.pl0_db},
             {"d0_m", c.array.path_loss.d0_m},
             {"exponent", c.array.path_loss.exponent}}},
           {"ues", ues}}},
         {"bandwidth_mhz", c.bandwidth_mhz},
         {"scs_khz", c.scs_khz},
         {"n_re", c.n_re},
         {"tdd", {{"period_slots", c.tdd.period_slots}, {"ul_slots", c.tdd.ul_slots}, {"dl_slots", c.tdd.dl_slots}}},
         {"max_ul_mcs", c.max_ul_mcs},
         {"channel",
          {{"fading_block_ms", c.fading_block_ms},
           {"est_snr_db", std::isfinite(c.est_snr_db) ? Json(c.est_snr_db) : Json(nullptr)},
           {"la_backoff_db", c.la_backoff_db}}},
         {"fault_schedule", faults},
         {"duration_s", c.duration_s},
         {"seed", c.seed},
         {"xapp", {{"enabled", c.xapp.enabled}, {"model_path", c.xapp.model_path}}}};
  return j.dump(2) + "\n";
}

}  // namespace cflab
