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

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "cflab/service.hpp"
#include "doctest.h"

using namespace cflab;

namespace {

struct TestClient {
  int fd = -1;
  std::unique_ptr<e2::FdStream> s;

  explicit TestClient(uint16_t port, bool handshake = true) {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd >= 0);
    timeval tv{10, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &a.sin_addr);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) == 0);
    s = std::make_unique<e2::FdStream>(fd);
    if (handshake) {
      s->send_version();
      s->expect_version();
    }
  }
  ~TestClient() { ::close(fd); }

  e2::Message next() {
    auto m = s->read();
    REQUIRE(m.has_value());
    return *m;
  }
  // Skips periodic snapshots until pred matches.
  template <class T, class Pred>
  T wait_for(Pred pred, int limit = 200) {
    for (int i = 0; i < limit; ++i) {
      const auto m = next();
      if (const auto* t = std::get_if<T>(&m); t && pred(*t)) return *t;
    }
    FAIL("expected message never arrived");
    return {};
  }
};

ScenarioConfig short_run(uint64_t s) {
  auto c = ScenarioConfig::lab_default();
  c.duration_s = s;
  return c;
}

void wait_clients(const SimService& svc, std::size_t n) {
  for (int i = 0; i < 500 && svc.client_count() < n; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  REQUIRE(svc.client_count() == n);
}

struct Running {
  SimService svc;
  std::thread th;
  Running(ScenarioConfig c, ServeOptions o) : svc(std::move(c), std::nullopt, std::move(o)) {}
  void start() {
    th = std::thread([this] { svc.run(); });
  }
  ~Running() {
    svc.stop();
    if (th.joinable()) th.join();
  }
};

}  // namespace

TEST_CASE("console fault shows in the next snapshot") {
  ServeOptions o;
  o.speed = 20.0;
  o.run_forever = true;
  Running r(short_run(5), o);
  TestClient cl(r.svc.port());
  wait_clients(r.svc, 1);
  r.start();
  cl.s->write(e2::UiFault{3, true});
  cl.s->write(e2::UiSnapshotReq{});
  const auto snap = cl.wait_for<e2::UiSnapshot>([](const e2::UiSnapshot& s) { return s.faults.size() == 8 && s.faults[3]; });
  REQUIRE(snap.ues.size() == 2);
  for (const auto& u : snap.ues) {
    REQUIRE(u.rsrp_dbm.size() == 8);
    CHECK(u.rsrp_dbm[3] == kFaultFloorDbm);
    CHECK(u.rsrp_dbm[2] > kFaultFloorDbm);
  }
  cl.s->write(e2::UiFault{3, false});
  cl.wait_for<e2::UiSnapshot>([](const e2::UiSnapshot& s) { return !s.faults[3] && s.ues[0].rsrp_dbm[3] > kFaultFloorDbm; });
  // move a UE next to the far RU
  cl.s->write(e2::UiMoveUe{kDefaultRnti1, 7.0, 7.0});
  cl.s->write(e2::UiSnapshotReq{});
  cl.wait_for<e2::UiSnapshot>([](const e2::UiSnapshot& s) { return s.ues[0].rsrp_dbm[7] > s.ues[0].rsrp_dbm[0]; });
}

TEST_CASE("bad requests get errors and the session survives") {
  ServeOptions o;
  o.speed = 20.0;
  o.run_forever = true;
  Running r(short_run(5), o);
  TestClient cl(r.svc.port());
  wait_clients(r.svc, 1);
  r.start();
  cl.s->write_payload("{not json");
  auto err = cl.wait_for<e2::ErrorMsg>([](const e2::ErrorMsg&) { return true; });
  CHECK(err.reason.find("malformed") != std::string::npos);
  cl.s->write(e2::UiFault{42, true});
  err = cl.wait_for<e2::ErrorMsg>([](const e2::ErrorMsg&) { return true; });
  CHECK(err.reason.find("42") != std::string::npos);
  cl.s->write(e2::SubscriptionRequest{});
  err = cl.wait_for<e2::ErrorMsg>([](const e2::ErrorMsg&) { return true; });
  CHECK(err.reason.find("unsupported") != std::string::npos);
  cl.s->write(e2::UiMoveUe{0x1234, 1.0, 1.0});
  cl.wait_for<e2::ErrorMsg>([](const e2::ErrorMsg&) { return true; });
  cl.s->write(e2::UiSnapshotReq{});
  CHECK(cl.wait_for<e2::UiSnapshot>([](const e2::UiSnapshot&) { return true; }).ues.size() == 2);
  CHECK(r.svc.client_count() == 1);
}

TEST_CASE("version mismatch is refused") {
  ServeOptions o;
  Running r(short_run(2), o);
  TestClient cl(r.svc.port(), false);
  cl.s->write_payload("cfe2/9");
  CHECK(cl.s->read_payload() == std::string(e2::kProtocolVersion));
  const auto m = cl.s->read();
  REQUIRE(m.has_value());
  REQUIRE(std::holds_alternative<e2::ErrorMsg>(*m));
  CHECK(std::get<e2::ErrorMsg>(*m).reason.find("cfe2/9") != std::string::npos);
  CHECK_FALSE(cl.s->read().has_value());  // closed
  CHECK(r.svc.client_count() == 0);
}

TEST_CASE("all clients see the same stream") {
  ServeOptions o;
  o.speed = 50.0;
  auto r = std::make_unique<Running>(short_run(4), o);
  TestClient a(r->svc.port()), b(r->svc.port());
  wait_clients(r->svc, 2);
  r->start();
  r->th.join();
  r.reset();
  auto drain = [](TestClient& c) {
    std::vector<e2::Message> out;
    while (auto m = c.s->read()) out.push_back(*m);
    return out;
  };
  const auto sa = drain(a), sb = drain(b);
  CHECK(sa.size() == 4);
  CHECK(sa == sb);
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(std::get<e2::UiSnapshot>(sa[i]).time_s == double(i + 1));
}

TEST_CASE("serve writes the same csv as a batch run") {
  const auto path = (std::filesystem::temp_directory_path() / "cflab_serve.csv").string();
  ServeOptions o;
  o.speed = 1000.0;
  o.csv_out = path;
  auto c = short_run(5);
  {
    SimService svc(c, std::nullopt, o);
    svc.run();
  }
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str() == run_scenario(c).csv());
  std::filesystem::remove(path);
}

TEST_CASE("bad options") {
  ServeOptions o;
  o.speed = 0.0;
  CHECK_THROWS_AS(SimService(short_run(1), std::nullopt, o), std::invalid_argument);
  o.speed = 1.0;
  o.bind_address = "nowhere";
  CHECK_THROWS_AS(SimService(short_run(1), std::nullopt, o), std::invalid_argument);
}
