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

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cflab/sim.hpp"

namespace cflab {

struct ServeOptions {
  uint16_t port = 0;  // 0 picks an ephemeral port
  std::string bind_address = "127.0.0.1";
  double speed = 1.0;  // simulated seconds per wall second
  // Stop after this much simulated time; defaults to the scenario duration.
  // Unset with run_forever.
  bool run_forever = false;
  std::string csv_out;  // optional MetricsLog written on exit
};

/// Real-time driver for the operator console. Clients speak the E2 framing:
/// each side sends the protocol version first, then the client sends
/// ui_fault / ui_move_ue / ui_snapshot_req and receives one ui_snapshot per
/// simulated second. Client commands are queued and applied by the loop at
/// slot boundaries; malformed frames get an error frame and the connection
/// stays up.
class SimService {
 public:
  SimService(ScenarioConfig cfg, std::optional<dqn::DqnModel> model, ServeOptions opt);
  ~SimService();
  SimService(const SimService&) = delete;
  SimService& operator=(const SimService&) = delete;

  /// Bound port, valid once the constructor returns.
  uint16_t port() const { return port_; }
  /// Runs the loop on the calling thread until the end of the scenario or stop().
  void run();
  void stop();
  std::size_t client_count() const;
  const Simulation& simulation() const { return sim_; }

 private:
  struct Client;
  struct Command {
    std::shared_ptr<Client> from;
    e2::Message msg;
  };

  void accept_loop();
  void client_loop(std::shared_ptr<Client> c);
  void send_to(Client& c, const e2::Message& m);
  void broadcast(const e2::Message& m);
  void drain_commands();
  void reap_clients();

  Simulation sim_;
  ServeOptions opt_;
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::thread acceptor_;
  mutable std::mutex clients_mu_;
  std::vector<std::shared_ptr<Client>> clients_;
  std::mutex cmd_mu_;
  std::vector<Command> commands_;
};

}  // namespace cflab
