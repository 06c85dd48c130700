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
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "cflab/antenna_mask.hpp"
#include "cflab/phy.hpp"

namespace cflab::e2 {

inline constexpr std::string_view kProtocolVersion = "cfe2/1";
inline constexpr uint32_t kCfPortSelectionParamId = 32001;
inline constexpr std::size_t kMinActiveAntennas = 2;
inline constexpr std::size_t kMaxFrameBytes = 16u << 20;

namespace metric {
inline constexpr std::string_view kUeThpUl = "DRB.UETHpUL";
inline constexpr std::string_view kUeThpDl = "DRB.UETHpDL";
inline constexpr std::string_view kPortSnr = "PUSCH.PORT.SNR";
inline constexpr std::string_view kPortRsrp = "PUSCH.PORT.RSRP";
inline constexpr std::string_view kPortNvar = "PUSCH.PORT.NVAR";
inline constexpr std::string_view kPortEpre = "PUSCH.PORT.EPRE";
// Extra standardized counters served by this agent.
inline constexpr std::string_view kPrbUsedUl = "RRU.PrbUsedUl";
inline constexpr std::string_view kPrbUsedDl = "RRU.PrbUsedDl";
inline constexpr std::string_view kTbTotUl = "TB.TotNbrUl";
inline constexpr std::string_view kTbErrUl = "TB.ErrTotalNbrUl";
}  // namespace metric

const std::vector<std::string>& supported_metrics();
bool is_port_metric(std::string_view name);
/// DRB.UETHpUL, DRB.UETHpDL and the four PUSCH.PORT metrics.
std::vector<std::string> demo_metrics();

using MetricValue = std::variant<double, std::vector<double>>;

struct KpmRecord {
  Rnti ue_id = 0;
  std::vector<std::pair<std::string, MetricValue>> metrics;  // subscription order

  const MetricValue* find(std::string_view name) const;
  bool operator==(const KpmRecord&) const = default;
};

struct SubscriptionRequest {
  uint64_t sub_id = 0;
  int report_style = 4;
  uint64_t period_ms = 1000;
  std::vector<std::string> metric_names;
  bool operator==(const SubscriptionRequest&) const = default;
};

struct SubscriptionResponse {
  uint64_t sub_id = 0;
  bool accepted = false;
  std::vector<std::string> rejected_metrics;
  bool operator==(const SubscriptionResponse&) const = default;
};

struct Indication {
  uint64_t sub_id = 0;
  uint64_t timestamp_ms = 0;
  std::vector<KpmRecord> records;
  bool operator==(const Indication&) const = default;
};

struct ControlRequest {
  uint64_t ctrl_id = 0;
  uint32_t ran_param_id = kCfPortSelectionParamId;
  Rnti ue_id = 0;
  AntennaMask antenna_mask;
  bool operator==(const ControlRequest&) const = default;
};

struct ControlAck {
  uint64_t ctrl_id = 0;
  bool applied = false;
  // Set when the request left fewer than two antennas on; antenna_mask is
  // the mask actually stored.
  bool clamped = false;
  AntennaMask antenna_mask;
  bool operator==(const ControlAck&) const = default;
};

// Operator-console extension carried on the same framing.
struct UiFault {
  std::size_t antenna = 0;
  bool on = true;  // true = disconnect
  bool operator==(const UiFault&) const = default;
};

struct UiMoveUe {
  Rnti ue_id = 0;
  double x = 0.0;
  double y = 0.0;
  bool operator==(const UiMoveUe&) const = default;
};

struct UiSnapshotReq {
  bool operator==(const UiSnapshotReq&) const = default;
};

struct UeSnapshot {
  Rnti ue_id = 0;
  double thpt_mbps = 0.0;
  AntennaMask cf_port_selection;
  std::vector<double> snr_db;
  std::vector<double> rsrp_dbm;
  bool operator==(const UeSnapshot&) const = default;
};

struct DecisionEntry {
  double time_s = 0.0;
  Rnti ue_id = 0;
  std::size_t antenna = 0;
  bool activate = false;
  AntennaMask antenna_mask;
  bool applied = false;
  bool operator==(const DecisionEntry&) const = default;
};

struct UiSnapshot {
  double time_s = 0.0;
  std::vector<UeSnapshot> ues;
  double total_thpt_mbps = 0.0;
  double dl_capacity_mbps = 0.0;
  std::size_t active_antennas = 0;
  double power_w = 0.0;
  double ptime_us = 0.0;
  std::size_t actions = 0;
  std::vector<bool> faults;
  std::vector<DecisionEntry> decisions;
  bool operator==(const UiSnapshot&) const = default;
};

struct ErrorMsg {
  std::string reason;
  bool operator==(const ErrorMsg&) const = default;
};

using Message = std::variant<SubscriptionRequest, SubscriptionResponse, Indication, ControlRequest,
                             ControlAck, UiFault, UiMoveUe, UiSnapshotReq, UiSnapshot, ErrorMsg>;

std::string_view msg_type_name(const Message& m);

enum class DecodeErrorKind { Truncated, LengthMismatch, UnknownMsgType, MalformedPayload };

class DecodeError : public std::runtime_error {
 public:
  DecodeError(DecodeErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  DecodeErrorKind kind() const { return kind_; }

 private:
  DecodeErrorKind kind_;
};

/// JSON payload with "msg_type" first and fields in declaration order.
std::string encode_payload(const Message& msg);
Message decode_payload(std::string_view payload);

/// 4-byte big-endian payload length followed by the payload.
std::vector<uint8_t> frame(std::string_view payload);
std::vector<uint8_t> encode(const Message& msg);
/// Decodes exactly one frame; trailing bytes are a LengthMismatch.
Message decode(std::span<const uint8_t> bytes);

/// Incremental splitter for byte streams.
class FrameBuffer {
 public:
  void feed(std::span<const uint8_t> bytes);
  /// Next complete payload, or nullopt. Throws DecodeError on an oversized header.
  std::optional<std::string> next();
  std::size_t buffered() const { return buf_.size(); }

 private:
  std::vector<uint8_t> buf_;
};

/// Blocking framed I/O over a stream file descriptor (socket or pipe).
class FdStream {
 public:
  explicit FdStream(int fd) : fd_(fd) {}
  int fd() const { return fd_; }

  void write_payload(std::string_view payload);
  void write(const Message& msg) { write_payload(encode_payload(msg)); }
  /// nullopt on orderly EOF.
  std::optional<std::string> read_payload();
  std::optional<Message> read();

  void send_version() { write_payload(kProtocolVersion); }
  /// Reads the peer's version frame; throws std::runtime_error on mismatch.
  void expect_version();

 private:
  int fd_;
  FrameBuffer buf_;
};

/// Per-UE values the agent reports from.
struct UeKpmSource {
  Rnti rnti = 0;
  PortCsi csi;
  std::map<std::string, double, std::less<>> scalars;
};

/// RAN-side E2 endpoint. All mutations go through this object, which the
/// simulation loop owns; controls are staged and take effect only when
/// apply_pending() is called at a slot boundary.
class E2Agent {
 public:
  void attach_ue(Rnti rnti, UeCfConfig cfg = {});
  bool has_ue(Rnti rnti) const { return ues_.contains(rnti); }
  std::vector<Rnti> attached_ues() const;

  SubscriptionResponse handle_subscription(const SubscriptionRequest& req, uint64_t now_ms = 0);
  std::vector<Indication> report_tick(uint64_t now_ms, std::span<const UeKpmSource> sources);
  /// True if report_tick(now_ms) would emit at least one indication.
  bool report_due(uint64_t now_ms) const;
  ControlAck handle_control(const ControlRequest& req);

  /// Dispatches a RIC-originated message; returns the reply, if any.
  std::optional<Message> handle(const Message& msg, uint64_t now_ms = 0);

  void update_csi(Rnti rnti, const PortCsi& csi);
  /// Moves staged controls into effect. Returns the RNTIs that changed.
  std::vector<Rnti> apply_pending();

  const UeCfConfig& config(Rnti rnti) const;
  std::size_t subscription_count() const { return subs_.size(); }

 private:
  struct UeState {
    UeCfConfig active;
    std::optional<UeCfConfig> pending;
    std::optional<PortCsi> csi;
  };
  struct Subscription {
    SubscriptionRequest req;
    uint64_t start_ms = 0;
  };

  AntennaMask clamp(Rnti rnti, AntennaMask mask) const;

  std::map<Rnti, UeState> ues_;
  std::vector<Subscription> subs_;
  std::optional<uint64_t> last_ctrl_id_;
};

/// RIC-side helper: numbers requests and tracks acknowledgements.
class E2Client {
 public:
  SubscriptionRequest make_subscription(std::vector<std::string> metrics, int style = 4,
                                        uint64_t period_ms = 1000);
  ControlRequest make_control(Rnti ue, AntennaMask mask);
  void on_ack(const ControlAck& ack);
  std::optional<ControlAck> ack_for(uint64_t ctrl_id) const;

 private:
  uint64_t next_sub_id_ = 1;
  uint64_t next_ctrl_id_ = 1;
  std::map<uint64_t, ControlAck> acks_;
};

}  // namespace cflab::e2
