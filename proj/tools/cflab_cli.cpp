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

// cflab command line: run, pretrain, table3, serve, validate.
// Exit codes: 0 ok, 1 bad arguments or invalid scenario, 2 runtime failure.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cflab/log.hpp"
#include "cflab/scenario.hpp"
#include "cflab/service.hpp"
#include "cflab/sim.hpp"
#include "cflab/xapp.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

cflab::SimService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

cflab::ScenarioConfig scenario_or_default(const std::string& path) {
  return path.empty() ? cflab::ScenarioConfig::lab_default() : cflab::load_scenario(path);
}

}  // namespace

int main(int argc, char** argv) {
  cflab::init_logging();
  CLI::App app{"Cell-free MU-MIMO uplink lab simulator"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  std::string scenario, out, model_path;
  uint64_t seed = 0;
  std::size_t episodes = 3000;
  uint16_t port = 0;
  double speed = 1.0;
  uint64_t duration = 0;
  bool no_xapp = false;

  auto* run = app.add_subcommand("run", "Run a scenario and write the per-second metrics CSV");
  run->add_option("--scenario", scenario, "Scenario JSON")->required();
  auto* run_seed = run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out, "Output CSV")->required();
  run->add_option("--duration", duration, "Override duration_s");
  run->add_flag("--no-xapp", no_xapp, "Disable the xApp regardless of the scenario");

  auto* pre = app.add_subcommand("pretrain", "Pretrain the antenna-association DQN in the simulator");
  pre->add_option("--episodes", episodes, "Training episodes")->check(CLI::PositiveNumber);
  pre->add_option("--seed", seed, "Training seed");
  pre->add_option("--out", out, "Model file (the manifest goes to <out>.manifest.json)")->required();

  auto* t3 = app.add_subcommand("table3", "Antenna-count sweep: power, throughput and processing time");
  t3->add_option("--model", model_path, "Pretrained model")->required();
  t3->add_option("--out", out, "Output CSV")->required();
  t3->add_option("--scenario", scenario, "Base scenario (defaults to the lab layout)");
  auto* t3_seed = t3->add_option("--seed", seed, "Seed shared by every row");

  auto* serve = app.add_subcommand("serve", "Serve the live simulation to operator consoles");
  serve->add_option("--scenario", scenario, "Scenario JSON")->required();
  serve->add_option("--port", port, "TCP port on 127.0.0.1")->required();
  serve->add_option("--speed", speed, "Simulated seconds per wall second")->check(CLI::PositiveNumber);
  serve->add_option("--duration", duration, "Stop after this many simulated seconds (0 = run until killed)");
  serve->add_option("--out", out, "Write the metrics CSV on exit");

  auto* val = app.add_subcommand("validate", "Check a scenario file");
  val->add_option("--scenario", scenario, "Scenario JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*val) {
      cflab::load_scenario(scenario);
      std::cout << scenario << ": ok\n";
    } else if (*run) {
      auto cfg = cflab::load_scenario(scenario);
      if (*run_seed) cfg.seed = seed;
      if (duration > 0) cfg.duration_s = duration;
      if (no_xapp) cfg.xapp.enabled = false;
      cflab::run_scenario(cfg).write_csv(out);
    } else if (*pre) {
      cflab::xapp::PretrainConfig pc;
      pc.episodes = episodes;
      pc.seed = seed;
      auto res = cflab::xapp::pretrain(pc);
      res.model.save(out);
      write_text(out + ".manifest.json", res.manifest_json);
      std::cout << "trained " << res.steps << " steps, final loss " << res.final_loss << "\n";
    } else if (*t3) {
      const auto model = cflab::dqn::DqnModel::load(model_path);
      cflab::Table3Options opt;
      if (*t3_seed) opt.seed = seed;
      const auto rows = cflab::table3_experiment(model, scenario_or_default(scenario), opt);
      write_text(out, cflab::table3_csv(rows));
      for (const auto& r : rows)
        if (r.flagged) std::cerr << "warning: row k=" << r.antennas_selected << " did not converge\n";
    } else if (*serve) {
      auto cfg = cflab::load_scenario(scenario);
      cflab::ServeOptions so;
      so.port = port;
      so.speed = speed;
      so.csv_out = out;
      if (serve->count("--duration")) {
        if (duration == 0) so.run_forever = true;
        else cfg.duration_s = duration;
      }
      cflab::SimService svc(cfg, std::nullopt, so);
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on 127.0.0.1:" << svc.port() << std::endl;
      svc.run();
      g_service = nullptr;
    }
  } catch (const cflab::ScenarioError& e) {
    std::cerr << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
