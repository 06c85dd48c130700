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

#include "cflab/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <stdexcept>
#include <system_error>

#include "cflab/log.hpp"

namespace cflab {

struct SimService::Client {
  int fd = -1;
  std::mutex write_mu;
  std::atomic<bool> alive{true};
  std::atomic<bool> ready{false};  // version exchanged
  std::thread reader;
  ~Client() {
    if (reader.joinable()) {
      // The reader may hold the last reference itself.
      if (reader.get_id() == std::this_thread::get_id()) reader.detach();
      else reader.join();
    }
    if (fd >= 0) ::close(fd);
  }
};

SimService::SimService(ScenarioConfig cfg, std::optional<dqn::DqnModel> model, ServeOptions opt)
    : sim_(std::move(cfg), std::move(model)), opt_(std::move(opt)) {
  if (!(opt_.speed > 0.0)) throw std::invalid_argument("speed must be > 0");
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::system_error(errno, std::generic_category(), "socket");
  int yes = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(opt_.port);
  if (::inet_pton(AF_INET, opt_.bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw std::invalid_argument("bad bind address " + opt_.bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
    const int err = errno;
    ::close(listen_fd_);
    throw std::system_error(err, std::generic_category(), "bind/listen on port " + std::to_string(opt_.port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

SimService::~SimService() {
  stop();
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::shared_ptr<Client>> clients;
  {
    std::lock_guard lk(clients_mu_);
    clients.swap(clients_);
  }
  for (auto& c : clients) ::shutdown(c->fd, SHUT_RDWR);
  for (auto& c : clients)
    if (c->reader.joinable()) c->reader.join();
  std::lock_guard lk(cmd_mu_);
  commands_.clear();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void SimService::stop() { stop_ = true; }

std::size_t SimService::client_count() const {
  std::lock_guard lk(clients_mu_);
  std::size_t n = 0;
  for (const auto& c : clients_) n += c->alive && c->ready;
  return n;
}

void SimService::accept_loop() {
  while (!stop_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 50);
    if (r <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    timeval tv{2, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    auto c = std::make_shared<Client>();
    c->fd = fd;
    {
      std::lock_guard lk(clients_mu_);
      clients_.push_back(c);
    }
    c->reader = std::thread([this, c] { client_loop(c); });
  }
}

void SimService::send_to(Client& c, const e2::Message& m) {
  if (!c.alive) return;
  const std::string payload = e2::encode_payload(m);
  std::lock_guard lk(c.write_mu);
  try {
    e2::FdStream(c.fd).write_payload(payload);
  } catch (const std::exception& e) {
    spdlog::info("dropping client: {}", e.what());
    c.alive = false;
    ::shutdown(c.fd, SHUT_RDWR);
  }
}

void SimService::client_loop(std::shared_ptr<Client> c) {
  e2::FdStream s(c->fd);
  try {
    {
      std::lock_guard lk(c->write_mu);
      s.send_version();
    }
    try {
      s.expect_version();
    } catch (const e2::DecodeError&) {
      throw;
    } catch (const std::runtime_error& e) {
      send_to(*c, e2::ErrorMsg{e.what()});
      throw;
    }
    c->ready = true;
    while (c->alive && !stop_) {
      auto payload = s.read_payload();
      if (!payload) break;
      e2::Message msg;
      try {
        msg = e2::decode_payload(*payload);
      } catch (const e2::DecodeError& e) {
        send_to(*c, e2::ErrorMsg{std::string("malformed frame: ") + e.what()});
        continue;
      }
      if (std::holds_alternative<e2::UiFault>(msg) || std::holds_alternative<e2::UiMoveUe>(msg) ||
          std::holds_alternative<e2::UiSnapshotReq>(msg)) {
        std::lock_guard lk(cmd_mu_);
        commands_.push_back({c, std::move(msg)});
      } else {
        send_to(*c, e2::ErrorMsg{"unsupported message '" + std::string(e2::msg_type_name(msg)) + "' on the console port"});
      }
    }
  } catch (const std::exception& e) {
    spdlog::info("client session ended: {}", e.what());
  }
  c->alive = false;
  ::shutdown(c->fd, SHUT_RDWR);
}

void SimService::broadcast(const e2::Message& m) {
  std::vector<std::shared_ptr<Client>> targets;
  {
    std::lock_guard lk(clients_mu_);
    for (const auto& c : clients_)
      if (c->alive && c->ready) targets.push_back(c);
  }
  for (auto& c : targets) send_to(*c, m);
}

void SimService::reap_clients() {
  std::vector<std::shared_ptr<Client>> dead;
  {
    std::lock_guard lk(clients_mu_);
    for (auto it = clients_.begin(); it != clients_.end();) {
      if (!(*it)->alive) {
        dead.push_back(*it);
        it = clients_.erase(it);
      } else {
        ++it;
      }
    }
  }
  // Joining happens in ~Client once the last reference (maybe a queued
  // command) goes away.
}

void SimService::drain_commands() {
  std::vector<Command> cmds;
  {
    std::lock_guard lk(cmd_mu_);
    cmds.swap(commands_);
  }
  for (auto& cmd : cmds) {
    try {
      if (const auto* f = std::get_if<e2::UiFault>(&cmd.msg)) {
        sim_.set_fault(f->antenna, f->on);
      } else if (const auto* mv = std::get_if<e2::UiMoveUe>(&cmd.msg)) {
        sim_.move_ue(mv->ue_id, {mv->x, mv->y});
      } else if (std::holds_alternative<e2::UiSnapshotReq>(cmd.msg)) {
        send_to(*cmd.from, sim_.snapshot());
      }
    } catch (const std::exception& e) {
      send_to(*cmd.from, e2::ErrorMsg{e.what()});
    }
  }
}

void SimService::run() {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::size_t rows = 0;
  while (!stop_ && (opt_.run_forever || !sim_.finished())) {
    drain_commands();
    sim_.step_slot();
    if (sim_.log().rows.size() != rows) {
      rows = sim_.log().rows.size();
      broadcast(sim_.snapshot());
      reap_clients();
    }
    if (sim_.slot() % 2 == 0) {
      const auto target = start + std::chrono::duration_cast<clock::duration>(
                                      std::chrono::duration<double, std::milli>(static_cast<double>(sim_.now_ms()) / opt_.speed));
      if (target > clock::now()) std::this_thread::sleep_until(target);
    }
  }
  if (!opt_.csv_out.empty()) sim_.log().write_csv(opt_.csv_out);
}

}  // namespace cflab
