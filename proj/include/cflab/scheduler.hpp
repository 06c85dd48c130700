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
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cflab/pdu.hpp"

namespace cflab {

inline constexpr std::size_t kMaxOwnersPerRe = 2;
// Grants below these sizes at low MCS are bumped (diamond A) or kept off MU (diamond B).
inline constexpr std::size_t kBumpPrbLimit = 1;
inline constexpr std::size_t kSkipMuPrbLimit = 2;
inline constexpr int kLowMcsLimit = 6;

/// Per-UL-slot RE occupancy.
///  bm_su[i] = 1: RE occupied by at least one UE.
///  bm_mu[i] = 0: RE holds exactly one MU-eligible, not yet paired UE.
class ReBitmaps {
 public:
  explicit ReBitmaps(std::size_t n_re);

  void reset();
  std::size_t size() const { return bm_su_.size(); }

  const std::vector<bool>& bm_su() const { return bm_su_; }
  const std::vector<bool>& bm_mu() const { return bm_mu_; }
  const std::vector<std::vector<Rnti>>& re_owners() const { return owners_; }

  /// SU allocation: marks bm_su and sets bm_mu to 0 (pairable) or 1.
  void occupy_su(const ReRange& r, Rnti rnti, bool mu_eligible);
  /// MU allocation on top of `first`'s REs. Closes every RE of `first` for
  /// further pairing.
  void occupy_mu(const ReRange& r, Rnti rnti, Rnti first);

  /// Throws std::logic_error naming the first broken invariant.
  void check_invariants() const;

 private:
  std::vector<bool> bm_su_;
  std::vector<bool> bm_mu_;
  std::vector<std::vector<Rnti>> owners_;
};

struct SchedRequest {
  Rnti rnti = 0;
  uint64_t buffer_bytes = 0;
  double wideband_sinr_db = 0.0;
  bool is_retx = false;
  int retx_mcs = 0;
  std::size_t retx_n_prb = 0;
  int harq_id = 0;
};

struct GrantEstimate {
  std::size_t n_prb = 0;
  int mcs = 0;
  bool operator==(const GrantEstimate&) const = default;
};

GrantEstimate estimate_grant(const SchedRequest& req, std::size_t n_re_total, int max_mcs = 28);

/// Lowest-start zero run of length >= n truncated to n, else the longest
/// zero run (lowest start on ties). nullopt when the bitmap is full.
std::optional<ReRange> find_su_range(const std::vector<bool>& bm_su, std::size_t n);

struct MuCandidate {
  ReRange range;
  Rnti first_rnti = 0;
  bool operator==(const MuCandidate&) const = default;
};

/// Same search over bm_mu zeros, with runs split wherever the single owner
/// changes so the result sits inside one UE's allocation.
std::optional<MuCandidate> find_mu_range(const ReBitmaps& bm, std::size_t n);

struct ScheduledTx {
  UlGrant grant;
  PuschPdu pdu;
  // PRB count before any diamond bump; used for exclusion checks.
  std::size_t requested_n_prb = 0;
};

struct SlotSchedule {
  std::vector<UlGrant> grants;
  std::vector<PuschPdu> pdus;
  std::vector<Rnti> deferred;
};

/// Gives the pair orthogonal DMRS: the first UE keeps antenna_ports 2
/// (port 0), the MU partner gets antenna_ports 4 (port 2). Throws
/// std::logic_error unless first is SU and second is MU.
std::pair<PuschPdu, PuschPdu> assign_dmrs_ports(PuschPdu first, PuschPdu second);

/// Schedules one request (new or retransmission) into `bm`. nullopt if no
/// RE is free; the caller defers the request.
std::optional<ScheduledTx> schedule_request(const SchedRequest& req, ReBitmaps& bm,
                                            uint64_t slot_index, int max_mcs = 28);

/// Retransmission entry point: reuses retx_mcs and retx_n_prb verbatim and
/// returns nullopt unless a range of that full size is available.
std::optional<ScheduledTx> schedule_retx(const SchedRequest& req, ReBitmaps& bm, uint64_t slot_index);

/// Runs every request in order against `bm`.
SlotSchedule schedule_slot(std::span<const SchedRequest> requests, ReBitmaps& bm, uint64_t slot_index,
                           int max_mcs = 28);

/// Round-robin order: ascending RNTI rotated by slot index.
std::vector<Rnti> round_robin_order(std::vector<Rnti> rntis, uint64_t slot_index);

}  // namespace cflab
