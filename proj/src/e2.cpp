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

#include "cflab/e2.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <numeric>
#include <set>

#include "json.hpp"

namespace cflab::e2 {

using Json = nlohmann::ordered_json;

const std::vector<std::string>& supported_metrics() {
  static const std::vector<std::string> names = {
      std::string(metric::kUeThpUl),   std::string(metric::kUeThpDl),   std::string(metric::kPortSnr),
      std::string(metric::kPortRsrp),  std::string(metric::kPortNvar),  std::string(metric::kPortEpre),
      std::string(metric::kPrbUsedUl), std::string(metric::kPrbUsedDl), std::string(metric::kTbTotUl),
      std::string(metric::kTbErrUl)};
  return names;
}

bool is_port_metric(std::string_view name) { return name.starts_with("PUSCH.PORT."); }

std::vector<std::string> demo_metrics() {
  return {std::string(metric::kUeThpUl),  std::string(metric::kUeThpDl),  std::string(metric::kPortSnr),
          std::string(metric::kPortRsrp), std::string(metric::kPortNvar), std::string(metric::kPortEpre)};
}

const MetricValue* KpmRecord::find(std::string_view name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return &v;
  return nullptr;
}

namespace {

constexpr std::array<std::string_view, std::variant_size_v<Message>> kTypeNames = {
    "subscription_request", "subscription_response", "indication", "control_request", "control_ack",
    "ui_fault",             "ui_move_ue",            "ui_snapshot_req", "ui_snapshot", "error"};

[[noreturn]] void malformed(const std::string& what) {
  throw DecodeError(DecodeErrorKind::MalformedPayload, "malformed payload: " + what);
}

const Json& field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

uint64_t get_u64(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number_unsigned()) malformed(std::string("field '") + key + "' must be an unsigned integer");
  return v.get<uint64_t>();
}

Rnti get_rnti(const Json& j, const char* key) {
  const uint64_t v = get_u64(j, key);
  if (v > 0xffff) malformed(std::string("field '") + key + "' exceeds 16 bits");
  return static_cast<Rnti>(v);
}

double get_double(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number()) malformed(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

bool get_bool(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_boolean()) malformed(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

std::string get_string(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

const Json& get_array(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_array()) malformed(std::string("field '") + key + "' must be an array");
  return v;
}

std::vector<std::string> get_strings(const Json& j, const char* key) {
  std::vector<std::string> out;
  for (const Json& s : get_array(j, key)) {
    if (!s.is_string()) malformed(std::string("field '") + key + "' must hold strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

std::vector<double> to_doubles(const Json& arr, const char* key) {
  std::vector<double> out;
  for (const Json& x : arr) {
    if (!x.is_number()) malformed(std::string("field '") + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

AntennaMask get_mask(const Json& j, const char* key) {
  try {
    return AntennaMask::parse(get_string(j, key));
  } catch (const std::invalid_argument& e) {
    malformed(e.what());
  }
}

Json body_json(const SubscriptionRequest& m) {
  return Json{{"sub_id", m.sub_id}, {"report_style", m.report_style}, {"period_ms", m.period_ms},
              {"metric_names", m.metric_names}};
}
Json body_json(const SubscriptionResponse& m) {
  return Json{{"sub_id", m.sub_id}, {"accepted", m.accepted}, {"rejected_metrics", m.rejected_metrics}};
}
Json body_json(const Indication& m) {
  Json records = Json::array();
  for (const auto& r : m.records) {
    Json metrics = Json::object();
    for (const auto& [name, value] : r.metrics)
      std::visit([&](const auto& v) { metrics[name] = v; }, value);
    records.push_back(Json{{"ue_id", r.ue_id}, {"metrics", std::move(metrics)}});
  }
  return Json{{"sub_id", m.sub_id}, {"timestamp_ms", m.timestamp_ms}, {"records", std::move(records)}};
}
Json body_json(const ControlRequest& m) {
  return Json{{"ctrl_id", m.ctrl_id}, {"ran_param_id", m.ran_param_id}, {"ue_id", m.ue_id},
              {"antenna_mask", m.antenna_mask.str()}};
}
Json body_json(const ControlAck& m) {
  return Json{{"ctrl_id", m.ctrl_id}, {"applied", m.applied}, {"clamped", m.clamped},
              {"antenna_mask", m.antenna_mask.str()}};
}
Json body_json(const UiFault& m) { return Json{{"antenna", m.antenna}, {"on", m.on}}; }
Json body_json(const UiMoveUe& m) { return Json{{"ue_id", m.ue_id}, {"x", m.x}, {"y", m.y}}; }
Json body_json(const UiSnapshotReq&) { return Json::object(); }
Json body_json(const UiSnapshot& m) {
  Json ues = Json::array();
  for (const auto& u : m.ues)
    ues.push_back(Json{{"ue_id", u.ue_id},
                       {"thpt_mbps", u.thpt_mbps},
                       {"cf_port_selection", u.cf_port_selection.str()},
                       {"snr_db", u.snr_db},
                       {"rsrp_dbm", u.rsrp_dbm}});
  Json decisions = Json::array();
  for (const auto& d : m.decisions)
    decisions.push_back(Json{{"time_s", d.time_s},
                             {"ue_id", d.ue_id},
                             {"antenna", d.antenna},
                             {"activate", d.activate},
                             {"antenna_mask", d.antenna_mask.str()},
                             {"applied", d.applied}});
  return Json{{"time_s", m.time_s},
              {"ues", std::move(ues)},
              {"total_thpt_mbps", m.total_thpt_mbps},
              {"dl_capacity_mbps", m.dl_capacity_mbps},
              {"active_antennas", m.active_antennas},
              {"power_w", m.power_w},
              {"ptime_us", m.ptime_us},
              {"actions", m.actions},
              {"faults", m.faults},
              {"decisions", std::move(decisions)}};
}
Json body_json(const ErrorMsg& m) { return Json{{"reason", m.reason}}; }

Message message_from_json(std::string_view type, const Json& j) {
  if (type == "subscription_request") {
    SubscriptionRequest m;
    m.sub_id = get_u64(j, "sub_id");
    m.report_style = static_cast<int>(get_u64(j, "report_style"));
    m.period_ms = get_u64(j, "period_ms");
    m.metric_names = get_strings(j, "metric_names");
    return m;
  }
  if (type == "subscription_response") {
    SubscriptionResponse m;
    m.sub_id = get_u64(j, "sub_id");
    m.accepted = get_bool(j, "accepted");
    m.rejected_metrics = get_strings(j, "rejected_metrics");
    return m;
  }
  if (type == "indication") {
    Indication m;
    m.sub_id = get_u64(j, "sub_id");
    m.timestamp_ms = get_u64(j, "timestamp_ms");
    for (const Json& r : get_array(j, "records")) {
      if (!r.is_object()) malformed("records must hold objects");
      KpmRecord rec;
      rec.ue_id = get_rnti(r, "ue_id");
      const Json& metrics = field(r, "metrics");
      if (!metrics.is_object()) malformed("metrics must be an object");
      for (const auto& [name, value] : metrics.items()) {
        if (value.is_array())
          rec.metrics.emplace_back(name, to_doubles(value, "metrics"));
        else if (value.is_number())
          rec.metrics.emplace_back(name, value.get<double>());
        else
          malformed("metric '" + name + "' must be a number or an array");
      }
      m.records.push_back(std::move(rec));
    }
    return m;
  }
  if (type == "control_request") {
    ControlRequest m;
    m.ctrl_id = get_u64(j, "ctrl_id");
    const uint64_t id = get_u64(j, "ran_param_id");
    if (id > 0xffffffffULL) malformed("ran_param_id exceeds 32 bits");
    m.ran_param_id = static_cast<uint32_t>(id);
    m.ue_id = get_rnti(j, "ue_id");
    m.antenna_mask = get_mask(j, "antenna_mask");
    return m;
  }
  if (type == "control_ack") {
    ControlAck m;
    m.ctrl_id = get_u64(j, "ctrl_id");
    m.applied = get_bool(j, "applied");
    m.clamped = get_bool(j, "clamped");
    m.antenna_mask = get_mask(j, "antenna_mask");
    return m;
  }
  if (type == "ui_fault") {
    UiFault m;
    m.antenna = get_u64(j, "antenna");
    m.on = get_bool(j, "on");
    return m;
  }
  if (type == "ui_move_ue") {
    UiMoveUe m;
    m.ue_id = get_rnti(j, "ue_id");
    m.x = get_double(j, "x");
    m.y = get_double(j, "y");
    return m;
  }
  if (type == "ui_snapshot_req") return UiSnapshotReq{};
  if (type == "ui_snapshot") {
    UiSnapshot m;
    m.time_s = get_double(j, "time_s");
    for (const Json& u : get_array(j, "ues")) {
      UeSnapshot s;
      s.ue_id = get_rnti(u, "ue_id");
      s.thpt_mbps = get_double(u, "thpt_mbps");
      s.cf_port_selection = get_mask(u, "cf_port_selection");
      s.snr_db = to_doubles(get_array(u, "snr_db"), "snr_db");
      s.rsrp_dbm = to_doubles(get_array(u, "rsrp_dbm"), "rsrp_dbm");
      m.ues.push_back(std::move(s));
    }
    m.total_thpt_mbps = get_double(j, "total_thpt_mbps");
    m.dl_capacity_mbps = get_double(j, "dl_capacity_mbps");
    m.active_antennas = get_u64(j, "active_antennas");
    m.power_w = get_double(j, "power_w");
    m.ptime_us = get_double(j, "ptime_us");
    m.actions = get_u64(j, "actions");
    for (const Json& f : get_array(j, "faults")) {
      if (!f.is_boolean()) malformed("faults must hold booleans");
      m.faults.push_back(f.get<bool>());
    }
    for (const Json& d : get_array(j, "decisions")) {
      DecisionEntry e;
      e.time_s = get_double(d, "time_s");
      e.ue_id = get_rnti(d, "ue_id");
      e.antenna = get_u64(d, "antenna");
      e.activate = get_bool(d, "activate");
      e.antenna_mask = get_mask(d, "antenna_mask");
      e.applied = get_bool(d, "applied");
      m.decisions.push_back(std::move(e));
    }
    return m;
  }
  if (type == "error") return ErrorMsg{get_string(j, "reason")};
  throw DecodeError(DecodeErrorKind::UnknownMsgType, "unknown msg_type '" + std::string(type) + "'");
}

uint32_t read_be32(const uint8_t* p) {
  return (uint32_t{p[0]} << 24) | (uint32_t{p[1]} << 16) | (uint32_t{p[2]} << 8) | uint32_t{p[3]};
}

}  // namespace

std::string_view msg_type_name(const Message& m) { return kTypeNames[m.index()]; }

std::string encode_payload(const Message& msg) {
  Json j = Json::object();
  j["msg_type"] = msg_type_name(msg);
  Json body = std::visit([](const auto& m) { return body_json(m); }, msg);
  for (auto& [k, v] : body.items()) j[k] = v;
  return j.dump();
}

Message decode_payload(std::string_view payload) {
  Json j;
  try {
    j = Json::parse(payload);
  } catch (const Json::exception& e) {
    malformed(e.what());
  }
  if (!j.is_object()) malformed("payload must be a JSON object");
  const std::string type = get_string(j, "msg_type");
  try {
    return message_from_json(type, j);
  } catch (const Json::exception& e) {
    malformed(e.what());
  }
}

std::vector<uint8_t> frame(std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) throw std::length_error("payload exceeds the frame limit");
  const auto n = static_cast<uint32_t>(payload.size());
  std::vector<uint8_t> out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<uint8_t>(n >> 24));
  out.push_back(static_cast<uint8_t>(n >> 16));
  out.push_back(static_cast<uint8_t>(n >> 8));
  out.push_back(static_cast<uint8_t>(n));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::vector<uint8_t> encode(const Message& msg) { return frame(encode_payload(msg)); }

Message decode(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4) throw DecodeError(DecodeErrorKind::Truncated, "frame shorter than its header");
  const uint32_t n = read_be32(bytes.data());
  if (bytes.size() - 4 < n)
    throw DecodeError(DecodeErrorKind::Truncated, "frame claims " + std::to_string(n) + " bytes, has " +
                                                      std::to_string(bytes.size() - 4));
  if (bytes.size() - 4 > n)
    throw DecodeError(DecodeErrorKind::LengthMismatch, "frame carries bytes past its declared length");
  return decode_payload(std::string_view(reinterpret_cast<const char*>(bytes.data()) + 4, n));
}

void FrameBuffer::feed(std::span<const uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

std::optional<std::string> FrameBuffer::next() {
  if (buf_.size() < 4) return std::nullopt;
  const uint32_t n = read_be32(buf_.data());
  if (n > kMaxFrameBytes) throw DecodeError(DecodeErrorKind::LengthMismatch, "frame length exceeds limit");
  if (buf_.size() - 4 < n) return std::nullopt;
  std::string payload(reinterpret_cast<const char*>(buf_.data()) + 4, n);
  buf_.erase(buf_.begin(), buf_.begin() + 4 + n);
  return payload;
}

void FdStream::write_payload(std::string_view payload) {
  const std::vector<uint8_t> bytes = frame(payload);
  std::size_t off = 0;
  while (off < bytes.size()) {
    ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) n = ::write(fd_, bytes.data() + off, bytes.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("frame write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> FdStream::read_payload() {
  for (;;) {
    if (auto p = buf_.next()) return p;
    uint8_t chunk[4096];
    const ssize_t n = ::read(fd_, chunk, sizeof chunk);
    if (n == 0) {
      if (buf_.buffered() > 0) throw DecodeError(DecodeErrorKind::Truncated, "stream ended mid-frame");
      return std::nullopt;
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("frame read failed: ") + std::strerror(errno));
    }
    buf_.feed(std::span<const uint8_t>(chunk, static_cast<std::size_t>(n)));
  }
}

std::optional<Message> FdStream::read() {
  auto p = read_payload();
  if (!p) return std::nullopt;
  return decode_payload(*p);
}

void FdStream::expect_version() {
  auto p = read_payload();
  if (!p) throw std::runtime_error("peer closed before sending its protocol version");
  if (*p != kProtocolVersion)
    throw std::runtime_error("protocol version mismatch: peer speaks '" + p->substr(0, 32) + "', expected '" +
                             std::string(kProtocolVersion) + "'");
}

void E2Agent::attach_ue(Rnti rnti, UeCfConfig cfg) {
  if (rnti == 0) throw std::invalid_argument("RNTI 0 is reserved");
  ues_[rnti] = UeState{cfg, std::nullopt, std::nullopt};
}

std::vector<Rnti> E2Agent::attached_ues() const {
  std::vector<Rnti> out;
  for (const auto& [r, _] : ues_) out.push_back(r);
  return out;
}

SubscriptionResponse E2Agent::handle_subscription(const SubscriptionRequest& req, uint64_t now_ms) {
  SubscriptionResponse resp;
  resp.sub_id = req.sub_id;
  const auto& supported = supported_metrics();
  for (const auto& name : req.metric_names)
    if (std::find(supported.begin(), supported.end(), name) == supported.end())
      resp.rejected_metrics.push_back(name);
  const bool dup = std::any_of(subs_.begin(), subs_.end(), [&](const Subscription& s) { return s.req.sub_id == req.sub_id; });
  resp.accepted = resp.rejected_metrics.empty() && !req.metric_names.empty() && req.report_style >= 1 &&
                  req.report_style <= 5 && req.period_ms > 0 && !dup;
  // Every accepted style is served with the style-4 payload: all UEs, all metrics.
  if (resp.accepted) subs_.push_back({req, now_ms});
  return resp;
}

bool E2Agent::report_due(uint64_t now_ms) const {
  return std::any_of(subs_.begin(), subs_.end(), [&](const Subscription& sub) {
    return now_ms > sub.start_ms && (now_ms - sub.start_ms) % sub.req.period_ms == 0;
  });
}

std::vector<Indication> E2Agent::report_tick(uint64_t now_ms, std::span<const UeKpmSource> sources) {
  std::vector<Indication> out;
  for (const auto& sub : subs_) {
    if (now_ms <= sub.start_ms || (now_ms - sub.start_ms) % sub.req.period_ms != 0) continue;
    Indication ind;
    ind.sub_id = sub.req.sub_id;
    ind.timestamp_ms = now_ms;
    for (const auto& [rnti, _] : ues_) {
      auto src = std::find_if(sources.begin(), sources.end(), [&](const UeKpmSource& s) { return s.rnti == rnti; });
      if (src == sources.end()) continue;
      KpmRecord rec;
      rec.ue_id = rnti;
      for (const auto& name : sub.req.metric_names) {
        if (name == metric::kPortSnr)
          rec.metrics.emplace_back(name, std::vector<double>(src->csi.snr_db.begin(), src->csi.snr_db.end()));
        else if (name == metric::kPortRsrp)
          rec.metrics.emplace_back(name, std::vector<double>(src->csi.rsrp_dbm.begin(), src->csi.rsrp_dbm.end()));
        else if (name == metric::kPortNvar)
          rec.metrics.emplace_back(name, std::vector<double>(src->csi.noise_var.begin(), src->csi.noise_var.end()));
        else if (name == metric::kPortEpre)
          rec.metrics.emplace_back(name, std::vector<double>(src->csi.epre_dbm.begin(), src->csi.epre_dbm.end()));
        else {
          auto it = src->scalars.find(name);
          rec.metrics.emplace_back(name, it == src->scalars.end() ? 0.0 : it->second);
        }
      }
      ind.records.push_back(std::move(rec));
    }
    out.push_back(std::move(ind));
  }
  return out;
}

AntennaMask E2Agent::clamp(Rnti rnti, AntennaMask mask) const {
  if (mask.count() >= kMinActiveAntennas) return mask;
  const auto& st = ues_.at(rnti);
  std::vector<std::size_t> order(kNumAntennas);
  std::iota(order.begin(), order.end(), 0);
  if (st.csi)
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return st.csi->snr_db[a] > st.csi->snr_db[b]; });
  for (std::size_t a : order) {
    if (mask.count() >= kMinActiveAntennas) break;
    if (!mask.test(a)) mask.set(a);
  }
  return mask;
}

ControlAck E2Agent::handle_control(const ControlRequest& req) {
  ControlAck ack;
  ack.ctrl_id = req.ctrl_id;
  auto it = ues_.find(req.ue_id);
  if (req.ran_param_id != kCfPortSelectionParamId || it == ues_.end() ||
      (last_ctrl_id_ && req.ctrl_id <= *last_ctrl_id_)) {
    ack.applied = false;
    ack.antenna_mask = it == ues_.end() ? AntennaMask{} : (it->second.pending ? it->second.pending->cf_port_selection
                                                                               : it->second.active.cf_port_selection);
    return ack;
  }
  last_ctrl_id_ = req.ctrl_id;
  const AntennaMask mask = clamp(req.ue_id, req.antenna_mask);
  it->second.pending = UeCfConfig{mask};
  ack.applied = true;
  ack.clamped = !(mask == req.antenna_mask);
  ack.antenna_mask = mask;
  return ack;
}

std::optional<Message> E2Agent::handle(const Message& msg, uint64_t now_ms) {
  if (const auto* s = std::get_if<SubscriptionRequest>(&msg)) return handle_subscription(*s, now_ms);
  if (const auto* c = std::get_if<ControlRequest>(&msg)) return handle_control(*c);
  return ErrorMsg{"agent does not accept '" + std::string(msg_type_name(msg)) + "'"};
}

void E2Agent::update_csi(Rnti rnti, const PortCsi& csi) {
  auto it = ues_.find(rnti);
  if (it != ues_.end()) it->second.csi = csi;
}

std::vector<Rnti> E2Agent::apply_pending() {
  std::vector<Rnti> changed;
  for (auto& [rnti, st] : ues_) {
    if (!st.pending) continue;
    if (!(st.active == *st.pending)) changed.push_back(rnti);
    st.active = *st.pending;
    st.pending.reset();
  }
  return changed;
}

const UeCfConfig& E2Agent::config(Rnti rnti) const {
  auto it = ues_.find(rnti);
  if (it == ues_.end()) throw std::out_of_range("unknown UE " + std::to_string(rnti));
  return it->second.active;
}

SubscriptionRequest E2Client::make_subscription(std::vector<std::string> metrics, int style, uint64_t period_ms) {
  return SubscriptionRequest{next_sub_id_++, style, period_ms, std::move(metrics)};
}

ControlRequest E2Client::make_control(Rnti ue, AntennaMask mask) {
  return ControlRequest{next_ctrl_id_++, kCfPortSelectionParamId, ue, mask};
}

void E2Client::on_ack(const ControlAck& ack) { acks_[ack.ctrl_id] = ack; }

std::optional<ControlAck> E2Client::ack_for(uint64_t ctrl_id) const {
  auto it = acks_.find(ctrl_id);
  if (it == acks_.end()) return std::nullopt;
  return it->second;
}

}  // namespace cflab::e2
