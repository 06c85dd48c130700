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

#include "cflab/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "cflab/mcs.hpp"

namespace cflab {

int dmrs_port_for_antenna_ports(int antenna_ports_value) {
  switch (antenna_ports_value) {
    case 2: return 0;
    case 4: return 2;
    case 5: return 3;
    default: throw std::invalid_argument("antenna_ports value " + std::to_string(antenna_ports_value) +
                                         " has no working channel estimation");
  }
}

int antenna_ports_for_dmrs_port(int dmrs_port) {
  switch (dmrs_port) {
    case 0: return 2;
    case 2: return 4;
    case 3: return 5;
    default: throw std::invalid_argument("unsupported DMRS port " + std::to_string(dmrs_port));
  }
}

ReBitmaps::ReBitmaps(std::size_t n_re) : bm_su_(n_re, false), bm_mu_(n_re, true), owners_(n_re) {
  if (n_re == 0) throw std::invalid_argument("RE grid must be non-empty");
}

void ReBitmaps::reset() {
  std::fill(bm_su_.begin(), bm_su_.end(), false);
  std::fill(bm_mu_.begin(), bm_mu_.end(), true);
  for (auto& o : owners_) o.clear();
}

void ReBitmaps::occupy_su(const ReRange& r, Rnti rnti, bool mu_eligible) {
  if (r.length == 0 || r.end() > size()) throw std::out_of_range("RE range outside the grid");
  for (std::size_t i = r.start; i < r.end(); ++i) {
    if (bm_su_[i]) throw std::logic_error("SU allocation over an occupied RE " + std::to_string(i));
    bm_su_[i] = true;
    bm_mu_[i] = !mu_eligible;
    owners_[i].push_back(rnti);
  }
}

void ReBitmaps::occupy_mu(const ReRange& r, Rnti rnti, Rnti first) {
  if (r.length == 0 || r.end() > size()) throw std::out_of_range("RE range outside the grid");
  if (rnti == first) throw std::logic_error("a UE cannot pair with itself");
  for (std::size_t i = r.start; i < r.end(); ++i) {
    if (bm_mu_[i] || owners_[i].size() != 1 || owners_[i][0] != first)
      throw std::logic_error("MU allocation outside the first UE's pairable REs at " + std::to_string(i));
    owners_[i].push_back(rnti);
  }
  for (std::size_t i = 0; i < size(); ++i)
    if (std::find(owners_[i].begin(), owners_[i].end(), first) != owners_[i].end()) bm_mu_[i] = true;
}

void ReBitmaps::check_invariants() const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (bm_su_[i] != !owners_[i].empty())
      throw std::logic_error("bm_su disagrees with re_owners at RE " + std::to_string(i));
    if (owners_[i].size() > kMaxOwnersPerRe)
      throw std::logic_error("more than two owners at RE " + std::to_string(i));
    if (!bm_mu_[i] && owners_[i].size() != 1)
      throw std::logic_error("bm_mu=0 on an RE without exactly one owner at " + std::to_string(i));
  }
}

GrantEstimate estimate_grant(const SchedRequest& req, std::size_t n_re_total, int max_mcs) {
  GrantEstimate e;
  e.mcs = sinr_to_mcs(req.wideband_sinr_db, max_mcs);
  const double needed = std::ceil(static_cast<double>(req.buffer_bytes) * 8.0 / bits_per_prb(e.mcs));
  e.n_prb = static_cast<std::size_t>(std::clamp(needed, 1.0, static_cast<double>(n_re_total)));
  return e;
}

namespace {

struct Run {
  std::size_t start;
  std::size_t length;
};

// Picks from runs in left-to-right order: first run long enough, else the
// longest (first wins ties).
std::optional<ReRange> pick_run(const std::vector<Run>& runs, std::size_t n) {
  const Run* longest = nullptr;
  for (const Run& r : runs) {
    if (r.length >= n) return ReRange{r.start, n};
    if (!longest || r.length > longest->length) longest = &r;
  }
  if (!longest) return std::nullopt;
  return ReRange{longest->start, longest->length};
}

}  // namespace

std::optional<ReRange> find_su_range(const std::vector<bool>& bm_su, std::size_t n) {
  if (n == 0) throw std::invalid_argument("requested RE count must be >= 1");
  std::vector<Run> runs;
  for (std::size_t i = 0; i < bm_su.size();) {
    if (bm_su[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < bm_su.size() && !bm_su[j]) ++j;
    runs.push_back({i, j - i});
    i = j;
  }
  return pick_run(runs, n);
}

std::optional<MuCandidate> find_mu_range(const ReBitmaps& bm, std::size_t n) {
  if (n == 0) throw std::invalid_argument("requested RE count must be >= 1");
  const auto& mu = bm.bm_mu();
  const auto& owners = bm.re_owners();
  auto pairable = [&](std::size_t i) { return !mu[i] && owners[i].size() == 1; };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < mu.size();) {
    if (!pairable(i)) {
      ++i;
      continue;
    }
    const Rnti owner = owners[i][0];
    std::size_t j = i;
    while (j < mu.size() && pairable(j) && owners[j][0] == owner) ++j;
    runs.push_back({i, j - i});
    i = j;
  }
  auto r = pick_run(runs, n);
  if (!r) return std::nullopt;
  return MuCandidate{*r, owners[r->start][0]};
}

std::pair<PuschPdu, PuschPdu> assign_dmrs_ports(PuschPdu first, PuschPdu second) {
  if (first.mu_flag || !second.mu_flag)
    throw std::logic_error("assign_dmrs_ports needs an SU first PDU and an MU second PDU");
  first.dmrs_port = dmrs_port_for_antenna_ports(kAntennaPortsSu);
  second.dmrs_port = dmrs_port_for_antenna_ports(kAntennaPortsMu);
  return {first, second};
}

namespace {

std::optional<ScheduledTx> place(const SchedRequest& req, ReBitmaps& bm, uint64_t slot_index,
                                 std::size_t n_prb, int mcs, std::size_t requested, bool try_mu,
                                 bool mu_eligible) {
  ScheduledTx tx;
  tx.requested_n_prb = requested;
  tx.grant.rnti = req.rnti;
  tx.grant.mcs = mcs;
  tx.grant.harq_id = req.harq_id;
  tx.grant.slot_index = slot_index;
  tx.grant.is_retx = req.is_retx;
  tx.pdu.rnti = req.rnti;
  tx.pdu.mcs = mcs;
  tx.pdu.slot_index = slot_index;

  // A retransmission keeps its PRB count: partial ranges are not accepted.
  const bool exact = req.is_retx;
  if (try_mu) {
    if (auto cand = find_mu_range(bm, n_prb); cand && mu_eligible && (!exact || cand->range.length == n_prb)) {
      bm.occupy_mu(cand->range, req.rnti, cand->first_rnti);
      tx.grant.re_range = cand->range;
      tx.grant.antenna_ports_value = kAntennaPortsMu;
      tx.pdu.re_range = cand->range;
      tx.pdu.mu_flag = true;
      tx.pdu.rnti_mu = cand->first_rnti;
      tx.pdu.dmrs_port = dmrs_port_for_antenna_ports(kAntennaPortsMu);
      return tx;
    }
  }
  auto range = find_su_range(bm.bm_su(), n_prb);
  if (!range || (exact && range->length != n_prb)) return std::nullopt;
  bm.occupy_su(*range, req.rnti, mu_eligible);
  tx.grant.re_range = *range;
  tx.grant.antenna_ports_value = kAntennaPortsSu;
  tx.pdu.re_range = *range;
  tx.pdu.dmrs_port = dmrs_port_for_antenna_ports(kAntennaPortsSu);
  return tx;
}

bool low_grant(std::size_t n_prb, int mcs, std::size_t prb_limit) {
  return n_prb <= prb_limit && mcs < kLowMcsLimit;
}

}  // namespace

std::optional<ScheduledTx> schedule_retx(const SchedRequest& req, ReBitmaps& bm, uint64_t slot_index) {
  if (!req.is_retx || req.retx_n_prb == 0) throw std::invalid_argument("not a retransmission request");
  const std::size_t n = std::min(req.retx_n_prb, bm.size());
  const bool eligible = !low_grant(n, req.retx_mcs, kSkipMuPrbLimit);
  return place(req, bm, slot_index, n, req.retx_mcs, n, true, eligible);
}

std::optional<ScheduledTx> schedule_request(const SchedRequest& req, ReBitmaps& bm, uint64_t slot_index,
                                            int max_mcs) {
  if (req.is_retx) return schedule_retx(req, bm, slot_index);
  const GrantEstimate est = estimate_grant(req, bm.size(), max_mcs);
  if (low_grant(est.n_prb, est.mcs, kBumpPrbLimit)) {
    const std::size_t bumped = std::min<std::size_t>(2, bm.size());
    return place(req, bm, slot_index, bumped, est.mcs, est.n_prb, false, false);
  }
  const bool eligible = !low_grant(est.n_prb, est.mcs, kSkipMuPrbLimit);
  return place(req, bm, slot_index, est.n_prb, est.mcs, est.n_prb, true, eligible);
}

SlotSchedule schedule_slot(std::span<const SchedRequest> requests, ReBitmaps& bm, uint64_t slot_index,
                           int max_mcs) {
  std::set<Rnti> seen;
  for (const auto& r : requests)
    if (r.rnti == 0 || !seen.insert(r.rnti).second)
      throw std::invalid_argument("requests need unique non-zero RNTIs");

  SlotSchedule out;
  for (const auto& req : requests) {
    auto tx = schedule_request(req, bm, slot_index, max_mcs);
    if (!tx) {
      out.deferred.push_back(req.rnti);
      continue;
    }
    out.grants.push_back(tx->grant);
    out.pdus.push_back(tx->pdu);
  }
  bm.check_invariants();
  return out;
}

std::vector<Rnti> round_robin_order(std::vector<Rnti> rntis, uint64_t slot_index) {
  std::sort(rntis.begin(), rntis.end());
  if (!rntis.empty())
    std::rotate(rntis.begin(), rntis.begin() + static_cast<std::ptrdiff_t>(slot_index % rntis.size()),
                rntis.end());
  return rntis;
}

}  // namespace cflab
