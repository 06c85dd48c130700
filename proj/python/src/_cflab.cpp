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

// Python bindings: scenarios go in and out as JSON text, rows and snapshots
// come back as plain dicts.

#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cflab/dqn.hpp"
#include "cflab/e2.hpp"
#include "cflab/mcs.hpp"
#include "cflab/phy.hpp"
#include "cflab/scenario.hpp"
#include "cflab/scheduler.hpp"
#include "cflab/sim.hpp"
#include "cflab/xapp.hpp"

namespace py = pybind11;
using namespace cflab;

namespace {

template <class A>
py::list to_list(const A& a) {
  py::list l;
  for (const auto& x : a) l.append(x);
  return l;
}

py::dict row_dict(const MetricsRow& r) {
  py::list ues;
  for (const auto& u : r.ues) {
    py::dict d;
    d["ue_id"] = u.rnti;
    d["thpt_mbps"] = u.thpt_mbps;
    d["cf_port_selection"] = u.cf_port_selection.str();
    d["snr_db"] = to_list(u.csi.snr_db);
    d["rsrp_dbm"] = to_list(u.csi.rsrp_dbm);
    ues.append(d);
  }
  py::dict d;
  d["time_s"] = r.time_s;
  d["ues"] = ues;
  d["total_thpt_mbps"] = r.total_thpt_mbps;
  d["active_antennas"] = r.active_antennas;
  d["power_w"] = r.power_w;
  d["ptime_us"] = r.ptime_us;
  d["actions"] = r.actions;
  return d;
}

std::optional<dqn::DqnModel> maybe_model(const std::optional<std::string>& path) {
  if (!path) return std::nullopt;
  return dqn::DqnModel::load(*path);
}

EqualizerKind kind_of(const std::string& k) {
  if (k == "zf") return EqualizerKind::Zf;
  if (k == "mrc") return EqualizerKind::Mrc;
  throw py::value_error("equalizer must be 'zf' or 'mrc'");
}

dqn::Observation to_obs(const std::vector<std::vector<double>>& rows) {
  if (rows.size() != dqn::kAntennas) throw py::value_error("observation must be 8 rows of 4 features");
  dqn::Observation o{};
  for (std::size_t a = 0; a < dqn::kAntennas; ++a) {
    if (rows[a].size() != dqn::kFeatures) throw py::value_error("observation must be 8 rows of 4 features");
    for (std::size_t f = 0; f < dqn::kFeatures; ++f) o[a][f] = rows[a][f];
  }
  return o;
}

}  // namespace

PYBIND11_MODULE(_cflab, m) {
  m.doc() = "Cell-free MU-MIMO uplink lab simulator";
  m.attr("NUM_ANTENNAS") = kNumAntennas;
  m.attr("PROTOCOL_VERSION") = std::string(e2::kProtocolVersion);

  py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  py::register_exception<e2::DecodeError>(m, "DecodeError", PyExc_ValueError);
  py::register_exception<SingularChannelError>(m, "SingularChannelError", PyExc_ArithmeticError);

  // scenarios
  m.def("default_scenario", [] { return scenario_to_json(ScenarioConfig::lab_default()); },
        "The lab scenario as canonical JSON.");
  m.def("normalize_scenario", [](const std::string& text, const std::string& base_dir) {
        return scenario_to_json(parse_scenario(text, base_dir));
      }, py::arg("text"), py::arg("base_dir") = "",
      "Parses and validates a scenario; returns it with every default filled in.");
  m.def("validate_scenario", [](const std::string& text) {
        try {
          return validate(parse_scenario(text));
        } catch (const ScenarioError& e) {
          return e.problems();
        }
      }, py::arg("text"), "List of problems; empty when the scenario is valid.");
  m.def("prbs_for_bandwidth", &prbs_for_bandwidth, py::arg("bandwidth_mhz"), py::arg("scs_khz") = 30.0);

  // models
  m.def("processing_time_us", [](std::size_t n, const std::string& k) { return processing_time_us(n, kind_of(k)); },
        py::arg("n_active"), py::arg("equalizer") = "zf");
  m.def("processor_power_w", &processor_power_w, py::arg("n_active"));
  m.def("sinr_to_mcs", &sinr_to_mcs, py::arg("sinr_db"), py::arg("max_mcs") = kMaxMcs);
  m.def("ue_throughput_mbps", &ue_throughput_mbps, py::arg("n_prb"), py::arg("mcs"),
        py::arg("ul_fraction") = kDefaultUlFraction);
  m.def("estimate_grant", [](uint64_t bytes, double sinr_db, std::size_t n_re) {
        SchedRequest r;
        r.buffer_bytes = bytes;
        r.wideband_sinr_db = sinr_db;
        const auto g = estimate_grant(r, n_re);
        return std::make_pair(g.n_prb, g.mcs);
      }, py::arg("buffer_bytes"), py::arg("sinr_db"), py::arg("n_re") = 51, "(n_prb, mcs)");
  m.def("zf_sinr", [](const std::vector<std::pair<Cplx, Cplx>>& rows, double p, double nv) {
        std::vector<Column2> r;
        for (const auto& [a, b] : rows) r.push_back({a, b});
        return zf_sinr(r, p, nv);
      }, py::arg("rows"), py::arg("p_tx_w"), py::arg("noise_var"),
      "Per-UE ZF SINR in dB for an N x 2 channel given as (h1, h2) rows.");

  // E2 codec
  m.def("e2_encode", [](const std::string& payload) {
        const auto f = e2::encode(e2::decode_payload(payload));
        return py::bytes(reinterpret_cast<const char*>(f.data()), f.size());
      }, py::arg("payload_json"), "Validates a JSON payload and returns the framed bytes.");
  m.def("e2_decode", [](const py::bytes& b) {
        const std::string s = b;
        return e2::encode_payload(e2::decode(std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size())));
      }, py::arg("frame"), "Decodes exactly one frame into its canonical JSON payload.");

  // DQN
  py::class_<dqn::DqnModel>(m, "DqnModel")
      .def(py::init<>())
      .def_static("load", &dqn::DqnModel::load, py::arg("path"))
      .def("save", &dqn::DqnModel::save, py::arg("path"))
      .def("serialize", &dqn::DqnModel::serialize)
      .def_property_readonly("param_count", &dqn::DqnModel::param_count)
      .def("forward", [](const dqn::DqnModel& self, const std::vector<std::vector<double>>& obs) {
        const auto q = self.forward(to_obs(obs));
        return std::vector<double>(q.begin(), q.end());
      }, py::arg("obs"))
      .def("greedy_action", [](const dqn::DqnModel& self, const std::vector<std::vector<double>>& obs,
                               const std::string& mask) {
        return xapp::greedy_action(self, to_obs(obs), AntennaMask::parse(mask));
      }, py::arg("obs"), py::arg("mask"));
  m.def("pretrain", [](std::size_t episodes, uint64_t seed) {
        xapp::PretrainConfig c;
        c.episodes = episodes;
        c.seed = seed;
        py::gil_scoped_release nogil;
        auto r = xapp::pretrain(c);
        return std::make_pair(std::move(r.model), r.manifest_json);
      }, py::arg("episodes"), py::arg("seed") = 1, "(model, manifest_json)");

  // simulation
  py::class_<Simulation>(m, "Simulation")
      .def(py::init([](const std::string& text, const std::optional<std::string>& model_path,
                       const std::string& base_dir) {
             return std::make_unique<Simulation>(parse_scenario(text, base_dir), maybe_model(model_path));
           }),
           py::arg("scenario_json"), py::arg("model_path") = std::nullopt, py::arg("base_dir") = "")
      .def("step_second", [](Simulation& s) { return row_dict(s.step_second()); })
      .def("run", [](Simulation& s) {
        {
          py::gil_scoped_release nogil;
          s.run_to_end();
        }
        py::list rows;
        for (const auto& r : s.log().rows) rows.append(row_dict(r));
        return rows;
      }, "Runs to the end; returns every row so far.")
      .def_property_readonly("finished", &Simulation::finished)
      .def_property_readonly("now_ms", &Simulation::now_ms)
      .def("set_fault", &Simulation::set_fault, py::arg("antenna"), py::arg("on") = true)
      .def("move_ue", [](Simulation& s, Rnti r, double x, double y) { s.move_ue(r, {x, y}); },
           py::arg("ue_id"), py::arg("x"), py::arg("y"))
      .def("snapshot_json", [](const Simulation& s) { return e2::encode_payload(s.snapshot()); })
      .def("csv", [](const Simulation& s) { return s.log().csv(); })
      .def_property_readonly("equalizer_mask", [](const Simulation& s) { return s.equalizer_mask().str(); });

  m.def("run_csv", [](const std::string& text, const std::optional<std::string>& model_path, const std::string& base_dir) {
        auto cfg = parse_scenario(text, base_dir);
        auto model = maybe_model(model_path);
        py::gil_scoped_release nogil;
        return run_scenario(cfg, std::move(model)).csv();
      }, py::arg("scenario_json"), py::arg("model_path") = std::nullopt, py::arg("base_dir") = "",
      "Batch run; returns the metrics CSV (same bytes as `cflab run`).");
  m.def("table3_csv", [](const std::string& model_path, uint64_t seed) {
        const auto model = dqn::DqnModel::load(model_path);
        Table3Options opt;
        opt.seed = seed;
        py::gil_scoped_release nogil;
        return table3_csv(table3_experiment(model, ScenarioConfig::lab_default(), opt));
      }, py::arg("model_path"), py::arg("seed") = 1);
}
