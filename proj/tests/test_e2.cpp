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

#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <string>
#include <thread>

#include "cflab/e2.hpp"
#include "cflab/rng.hpp"
#include "doctest.h"
#include "e2_corpus.hpp"
#include "e2_golden.hpp"

using namespace cflab;
using namespace cflab::e2;

namespace {

DecodeErrorKind decode_kind(std::span<const uint8_t> b) {
  try {
    decode(b);
  } catch (const DecodeError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return DecodeErrorKind::Truncated;
}

DecodeErrorKind payload_kind(std::string_view p) { return decode_kind(frame(p)); }

UeKpmSource source(Rnti rnti, double thpt) {
  UeKpmSource s;
  s.rnti = rnti;
  for (std::size_t a = 0; a < kNumAntennas; ++a) {
    s.csi.snr_db[a] = 10.0 + static_cast<double>(a);
    s.csi.rsrp_dbm[a] = -60.0 - static_cast<double>(a);
    s.csi.noise_var[a] = 1e-8;
    s.csi.epre_dbm[a] = s.csi.rsrp_dbm[a];
  }
  s.scalars[std::string(metric::kUeThpUl)] = thpt;
  s.scalars[std::string(metric::kUeThpDl)] = 63.5;
  return s;
}

}  // namespace

TEST_CASE("codec round trip over random messages") {
  Rng rng(2024);
  for (int i = 0; i < 3000; ++i) {
    const Message m = testing::random_message(rng);
    const auto b = encode(m);
    const Message back = decode(b);
    REQUIRE(back == m);
    CHECK(encode(back) == b);
  }
}

TEST_CASE("golden frames") {
  const auto msgs = testing::golden_messages();
  const auto& hex = testing::golden_hex();
  REQUIRE(msgs.size() == hex.size());
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    INFO(msgs[i].first);
    CHECK(msgs[i].first == hex[i].first);
    const auto b = encode(msgs[i].second);
    CHECK(testing::to_hex(b) == hex[i].second);
    CHECK(decode(b) == msgs[i].second);
  }
}

TEST_CASE("payload layout") {
  const std::string p = encode_payload(ControlRequest{7, kCfPortSelectionParamId, 0x4601, AntennaMask::parse("11110111")});
  CHECK(p == R"({"msg_type":"control_request","ctrl_id":7,"ran_param_id":32001,"ue_id":17921,"antenna_mask":"11110111"})");
  const auto f = frame("abc");
  CHECK(f == std::vector<uint8_t>{0, 0, 0, 3, 'a', 'b', 'c'});
  CHECK(msg_type_name(Message{UiFault{}}) == "ui_fault");
  // record order survives
  Indication ind{1, 5, {{2, {{"DRB.UETHpUL", 1.0}}}, {1, {{"DRB.UETHpUL", 2.0}}}}};
  const auto back = std::get<Indication>(decode(encode(ind)));
  CHECK(back.records[0].ue_id == 2);
  CHECK(back.records[1].ue_id == 1);
}

TEST_CASE("decode errors are distinct") {
  std::vector<uint8_t> f = frame(R"({"msg_type":"ui_snapshot_req"})");
  std::vector<uint8_t> short_frame(f.begin(), f.begin() + 10);
  CHECK(decode_kind(short_frame) == DecodeErrorKind::Truncated);
  CHECK(decode_kind(std::vector<uint8_t>{0, 0}) == DecodeErrorKind::Truncated);
  std::vector<uint8_t> claims10{0, 0, 0, 10, '{', '}', ' ', ' ', ' '};
  CHECK(decode_kind(claims10) == DecodeErrorKind::Truncated);
  auto extra = f;
  extra.push_back('x');
  CHECK(decode_kind(extra) == DecodeErrorKind::LengthMismatch);

  CHECK(payload_kind(R"({"msg_type":"bogus"})") == DecodeErrorKind::UnknownMsgType);
  CHECK(payload_kind(R"({"msg_type":"control_request","ctrl_id":1})") == DecodeErrorKind::MalformedPayload);
  CHECK(payload_kind("not json") == DecodeErrorKind::MalformedPayload);
  CHECK(payload_kind("[1,2]") == DecodeErrorKind::MalformedPayload);
  CHECK(payload_kind(R"({"sub_id":1})") == DecodeErrorKind::MalformedPayload);
  CHECK(payload_kind(R"({"msg_type":"ui_fault","antenna":"3","on":true})") == DecodeErrorKind::MalformedPayload);
  CHECK(payload_kind(R"({"msg_type":"ui_fault","antenna":-1,"on":true})") == DecodeErrorKind::MalformedPayload);
  CHECK(payload_kind(R"({"msg_type":"control_ack","ctrl_id":1,"applied":true,"clamped":false,"antenna_mask":"1121"})") ==
        DecodeErrorKind::MalformedPayload);
  CHECK(payload_kind(R"({"msg_type":"control_request","ctrl_id":1,"ran_param_id":32001,"ue_id":70000,"antenna_mask":"11111111"})") ==
        DecodeErrorKind::MalformedPayload);
}

TEST_CASE("frame buffer splits a byte stream") {
  Rng rng(3);
  std::vector<Message> sent;
  std::vector<uint8_t> stream;
  for (int i = 0; i < 50; ++i) {
    sent.push_back(testing::random_message(rng));
    const auto b = encode(sent.back());
    stream.insert(stream.end(), b.begin(), b.end());
  }
  FrameBuffer fb;
  std::vector<Message> got;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    const std::size_t n = std::min<std::size_t>(1 + rng.below(37), stream.size() - pos);
    fb.feed(std::span<const uint8_t>(stream.data() + pos, n));
    pos += n;
    while (auto p = fb.next()) got.push_back(decode_payload(*p));
  }
  CHECK(got == sent);
  CHECK(fb.buffered() == 0);

  FrameBuffer big;
  const std::vector<uint8_t> huge{0x7f, 0xff, 0xff, 0xff};
  big.feed(huge);
  CHECK_THROWS_AS(big.next(), DecodeError);
}

TEST_CASE("fd stream handshake and messages") {
  int sv[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) == 0);
  FdStream a(sv[0]), b(sv[1]);
  std::thread t([&] {
    b.send_version();
    b.expect_version();
    auto m = b.read();
    REQUIRE(m);
    b.write(ControlAck{std::get<ControlRequest>(*m).ctrl_id, true, false, AntennaMask::all()});
  });
  a.send_version();
  a.expect_version();
  a.write(ControlRequest{9, kCfPortSelectionParamId, 1, AntennaMask::all()});
  const auto reply = a.read();
  t.join();
  REQUIRE(reply);
  CHECK(std::get<ControlAck>(*reply).ctrl_id == 9);
  ::close(sv[1]);
  CHECK_FALSE(a.read().has_value());  // orderly EOF
  ::close(sv[0]);

  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) == 0);
  FdStream c(sv[0]), d(sv[1]);
  d.write_payload("cfe2/0");
  CHECK_THROWS_WITH_AS(c.expect_version(), doctest::Contains("version mismatch"), std::runtime_error);
  ::close(sv[0]);
  ::close(sv[1]);
}

TEST_CASE("subscription handling") {
  E2Agent agent;
  E2Client client;
  const auto req = client.make_subscription(demo_metrics());
  CHECK(req.sub_id == 1);
  CHECK(req.report_style == 4);
  CHECK(req.period_ms == 1000);
  CHECK(demo_metrics().size() == 6);
  auto resp = agent.handle_subscription(req);
  CHECK(resp.accepted);
  CHECK(resp.rejected_metrics.empty());
  CHECK(resp.sub_id == 1);

  auto bad = client.make_subscription({"DRB.UETHpUL", "PUSCH.PORT.BOGUS"});
  CHECK(bad.sub_id == 2);
  resp = agent.handle_subscription(bad);
  CHECK_FALSE(resp.accepted);
  CHECK(resp.rejected_metrics == std::vector<std::string>{"PUSCH.PORT.BOGUS"});

  for (int style = 1; style <= 5; ++style)
    CHECK(agent.handle_subscription(client.make_subscription({"RRU.PrbUsedUl"}, style)).accepted);
  CHECK_FALSE(agent.handle_subscription(client.make_subscription({"RRU.PrbUsedUl"}, 6)).accepted);
  CHECK_FALSE(agent.handle_subscription(client.make_subscription({"RRU.PrbUsedUl"}, 4, 0)).accepted);
  CHECK_FALSE(agent.handle_subscription(req).accepted);  // duplicate id
  CHECK(agent.subscription_count() == 6);
}

TEST_CASE("style-4 reports once per period with every ue") {
  E2Agent agent;
  agent.attach_ue(0x4601);
  agent.attach_ue(0x4602);
  E2Client client;
  REQUIRE(agent.handle_subscription(client.make_subscription(demo_metrics()), 0).accepted);
  std::vector<UeKpmSource> src{source(0x4601, 16.0), source(0x4602, 15.0)};
  src[0].csi.rsrp_dbm[3] = kFaultFloorDbm;
  std::size_t count = 0;
  for (uint64_t t = 0; t <= 30'000; ++t) {
    CHECK(agent.report_due(t) == (t > 0 && t % 1000 == 0));
    for (const auto& ind : agent.report_tick(t, src)) {
      ++count;
      CHECK(ind.timestamp_ms == t);
      REQUIRE(ind.records.size() == 2);
      for (const auto& r : ind.records) {
        CHECK(r.metrics.size() == 6);
        for (const auto& name : demo_metrics()) CHECK(r.find(name) != nullptr);
        const auto& snr = std::get<std::vector<double>>(*r.find(metric::kPortSnr));
        CHECK(snr.size() == kNumAntennas);
      }
      CHECK(std::get<std::vector<double>>(*ind.records[0].find(metric::kPortRsrp))[3] == kFaultFloorDbm);
      CHECK(std::get<double>(*ind.records[1].find(metric::kUeThpUl)) == 15.0);
    }
  }
  CHECK(count == 30);

  E2Agent empty;
  REQUIRE(empty.handle_subscription(SubscriptionRequest{1, 4, 500, demo_metrics()}, 100).accepted);
  CHECK(empty.report_tick(600, {}).size() == 1);
  CHECK(empty.report_tick(600, {})[0].records.empty());
  CHECK(empty.report_tick(700, {}).empty());
}

TEST_CASE("control applies at the slot boundary") {
  E2Agent agent;
  agent.attach_ue(0x4601);
  agent.attach_ue(0x4602);
  E2Client client;
  const auto req = client.make_control(0x4601, AntennaMask::parse("11110111"));
  const auto ack = agent.handle_control(req);
  CHECK(ack.applied);
  CHECK_FALSE(ack.clamped);
  CHECK(agent.config(0x4601).cf_port_selection == AntennaMask::all());  // not yet
  CHECK(agent.apply_pending() == std::vector<Rnti>{0x4601});
  CHECK(agent.config(0x4601).cf_port_selection.str() == "11110111");
  CHECK(agent.config(0x4602).cf_port_selection == AntennaMask::all());
  CHECK(agent.apply_pending().empty());
  client.on_ack(ack);
  CHECK(client.ack_for(req.ctrl_id) == ack);
  CHECK_FALSE(client.ack_for(99).has_value());

  // two controls before a boundary: the later one wins
  agent.handle_control(client.make_control(0x4602, AntennaMask::parse("01111111")));
  agent.handle_control(client.make_control(0x4602, AntennaMask::parse("00111111")));
  agent.apply_pending();
  CHECK(agent.config(0x4602).cf_port_selection.str() == "00111111");

  // stale ids are refused
  auto stale = agent.handle_control(ControlRequest{1, kCfPortSelectionParamId, 0x4602, AntennaMask::all()});
  CHECK_FALSE(stale.applied);
  CHECK(stale.antenna_mask.str() == "00111111");
}

TEST_CASE("control errors and clamping") {
  E2Agent agent;
  agent.attach_ue(0x4601);
  CHECK_THROWS_AS(agent.attach_ue(0), std::invalid_argument);
  E2Client client;
  auto unknown = agent.handle_control(client.make_control(0x9999, AntennaMask::all()));
  CHECK_FALSE(unknown.applied);
  auto wrong = client.make_control(0x4601, AntennaMask::parse("11111100"));
  wrong.ran_param_id = 1;
  CHECK_FALSE(agent.handle_control(wrong).applied);
  CHECK(agent.apply_pending().empty());

  PortCsi csi{};
  for (std::size_t a = 0; a < kNumAntennas; ++a) csi.snr_db[a] = static_cast<double>(a);
  csi.snr_db[2] = 50.0;  // best
  agent.update_csi(0x4601, csi);
  auto ack = agent.handle_control(client.make_control(0x4601, AntennaMask::parse("00000001")));
  CHECK(ack.applied);
  CHECK(ack.clamped);
  CHECK(ack.antenna_mask.str() == "00100001");
  agent.apply_pending();
  CHECK(agent.config(0x4601).cf_port_selection.count() == 2);

  ack = agent.handle_control(client.make_control(0x4601, AntennaMask::none()));
  CHECK(ack.antenna_mask.str() == "00100001");  // 2 then 7

  // dispatcher
  auto reply = agent.handle(Message{UiFault{}});
  REQUIRE(reply);
  CHECK(std::holds_alternative<ErrorMsg>(*reply));
  reply = agent.handle(Message{client.make_subscription({"DRB.UETHpUL"})});
  REQUIRE(reply);
  CHECK(std::get<SubscriptionResponse>(*reply).accepted);
}
