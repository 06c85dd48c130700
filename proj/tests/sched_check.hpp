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

// Independent checker for a scheduled slot. Replays the requests against a
// plain per-RE owner list and reports every rule the scheduler broke.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cflab/mcs.hpp"
#include "cflab/rng.hpp"
#include "cflab/scheduler.hpp"

namespace cflab::testing {

struct OwnerGrid {
  std::vector<std::vector<Rnti>> owners;
  std::map<Rnti, bool> eligible;
  std::set<Rnti> closed;  // first UEs that already carry a partner

  explicit OwnerGrid(std::size_t n) : owners(n) {}

  bool is_free(std::size_t i) const { return owners[i].empty(); }
  bool is_pairable(std::size_t i) const {
    if (owners[i].size() != 1) return false;
    const Rnti o = owners[i][0];
    return eligible.at(o) && !closed.count(o);
  }
  std::size_t longest_free() const {
    std::size_t best = 0, cur = 0;
    for (std::size_t i = 0; i < owners.size(); ++i) {
      cur = is_free(i) ? cur + 1 : 0;
      best = std::max(best, cur);
    }
    return best;
  }
  // Longest run of pairable REs that all belong to one owner.
  std::size_t longest_pairable() const {
    std::size_t best = 0, cur = 0;
    Rnti prev = 0;
    for (std::size_t i = 0; i < owners.size(); ++i) {
      if (!is_pairable(i)) {
        cur = 0;
        continue;
      }
      cur = (cur > 0 && owners[i][0] == prev) ? cur + 1 : 1;
      prev = owners[i][0];
      best = std::max(best, cur);
    }
    return best;
  }
};

inline std::size_t oracle_prb_need(uint64_t bytes, double sinr_db, std::size_t n_re, int max_mcs, int* mcs_out) {
  int mcs = static_cast<int>(std::floor(sinr_db + 6.0));
  mcs = std::clamp(mcs, 0, max_mcs);
  *mcs_out = mcs;
  const McsRate r = mcs_to_rate(mcs);
  const double per_prb = static_cast<double>(kSubcarriersPerPrb * kDataSymbolsPerSlot) * r.bits_per_symbol * r.code_rate;
  double n = std::ceil(static_cast<double>(bytes) * 8.0 / per_prb);
  n = std::clamp(n, 1.0, static_cast<double>(n_re));
  return static_cast<std::size_t>(n);
}

inline std::vector<std::string> check_slot(std::span<const SchedRequest> reqs, const SlotSchedule& out,
                                           std::size_t n_re, int max_mcs = 28) {
  std::vector<std::string> bad;
  auto fail = [&](Rnti r, const std::string& what) { bad.push_back("rnti " + std::to_string(r) + ": " + what); };
  if (out.grants.size() != out.pdus.size()) bad.push_back("grant/pdu count mismatch");
  if (out.grants.size() + out.deferred.size() != reqs.size()) bad.push_back("requests lost or duplicated");
  if (!bad.empty()) return bad;

  OwnerGrid g(n_re);
  std::set<Rnti> deferred(out.deferred.begin(), out.deferred.end());
  std::set<Rnti> protected_low;  // diamond-excluded UEs
  std::size_t gi = 0;
  for (const SchedRequest& req : reqs) {
    const std::size_t free_run = g.longest_free();
    const std::size_t pair_run = g.longest_pairable();

    int mcs = req.retx_mcs;
    std::size_t need = std::min(req.retx_n_prb, n_re);
    if (!req.is_retx) need = oracle_prb_need(req.buffer_bytes, req.wideband_sinr_db, n_re, max_mcs, &mcs);
    const bool bump = !req.is_retx && need <= kBumpPrbLimit && mcs < kLowMcsLimit;
    const std::size_t ask = bump ? std::min<std::size_t>(2, n_re) : need;
    const bool may_mu = !bump && !(ask <= kSkipMuPrbLimit && mcs < kLowMcsLimit);

    // retransmissions only take a range of their full size
    const std::size_t min_run = req.is_retx ? need : 1;
    if (deferred.count(req.rnti)) {
      if (free_run >= min_run) fail(req.rnti, "deferred with free REs");
      if (may_mu && pair_run >= min_run) fail(req.rnti, "deferred with a pairable range");
      continue;
    }
    if (gi >= out.grants.size()) {
      fail(req.rnti, "no grant");
      break;
    }
    const UlGrant& gr = out.grants[gi];
    const PuschPdu& pdu = out.pdus[gi];
    ++gi;
    if (gr.rnti != req.rnti || pdu.rnti != req.rnti) {
      fail(req.rnti, "grant order differs from request order");
      break;
    }
    const ReRange rr = gr.re_range;
    if (!(pdu.re_range == rr)) fail(req.rnti, "grant and PDU ranges differ");
    if (rr.length == 0 || rr.end() > n_re) {
      fail(req.rnti, "range out of bounds");
      continue;
    }
    if (gr.mcs != mcs || pdu.mcs != mcs) fail(req.rnti, "unexpected MCS");
    if (gr.is_retx != req.is_retx) fail(req.rnti, "retx flag");
    if (rr.length > ask) fail(req.rnti, "grant larger than needed");

    if (pdu.mu_flag) {
      if (!may_mu) fail(req.rnti, "excluded grant was paired");
      const Rnti first = pdu.rnti_mu;
      for (std::size_t i = rr.start; i < rr.end(); ++i)
        if (!g.is_pairable(i) || g.owners[i][0] != first) {
          fail(req.rnti, "MU range not inside one pairable allocation");
          break;
        }
      if (protected_low.count(first)) fail(req.rnti, "paired onto a low-rate UE");
      if (pdu.dmrs_port == 0 || gr.antenna_ports_value != kAntennaPortsMu) fail(req.rnti, "MU DMRS port");
      if (rr.length != ask && rr.length != pair_run) fail(req.rnti, "MU range neither fits nor longest");
      for (std::size_t i = rr.start; i < rr.end(); ++i) g.owners[i].push_back(req.rnti);
      g.closed.insert(first);
      g.eligible[req.rnti] = false;
    } else {
      if (pdu.rnti_mu != 0) fail(req.rnti, "SU PDU names a partner");
      if (pdu.dmrs_port != 0 || gr.antenna_ports_value != kAntennaPortsSu) fail(req.rnti, "SU DMRS port");
      if (may_mu && pair_run >= min_run) fail(req.rnti, "SU chosen although pairing was possible");
      for (std::size_t i = rr.start; i < rr.end(); ++i)
        if (!g.is_free(i)) {
          fail(req.rnti, "SU range overlaps");
          break;
        }
      const std::size_t expect = std::min(ask, free_run);
      if (rr.length != expect) fail(req.rnti, "SU range neither fits nor longest");
      for (std::size_t i = rr.start; i < rr.end(); ++i) g.owners[i].push_back(req.rnti);
      g.eligible[req.rnti] = may_mu;
      if (!may_mu) protected_low.insert(req.rnti);
    }
    if (req.is_retx && rr.length != need) fail(req.rnti, "retransmission changed PRB count");
  }
  for (std::size_t i = 0; i < n_re; ++i)
    if (g.owners[i].size() > kMaxOwnersPerRe) bad.push_back("RE " + std::to_string(i) + " over-subscribed");
  return bad;
}

// Random slot: 1..8 UEs, mixed buffer sizes (many tiny), SINRs across the
// whole MCS range, about a quarter retransmissions.
inline std::vector<SchedRequest> random_slot(Rng& rng, std::size_t n_re) {
  std::vector<SchedRequest> reqs;
  const std::size_t n = 1 + rng.below(8);
  for (std::size_t k = 0; k < n; ++k) {
    SchedRequest r;
    r.rnti = static_cast<Rnti>(0x4600 + k + 1);
    r.harq_id = static_cast<int>(rng.below(16));
    if (rng.uniform() < 0.25) {
      r.is_retx = true;
      r.retx_mcs = static_cast<int>(rng.below(29));
      r.retx_n_prb = 1 + rng.below(n_re);
    } else {
      const double u = rng.uniform();
      r.buffer_bytes = u < 0.3 ? 1 + rng.below(40) : u < 0.7 ? 1 + rng.below(2000) : 1 + rng.below(200000);
      r.wideband_sinr_db = -12.0 + 40.0 * rng.uniform();
    }
    reqs.push_back(r);
  }
  // shuffle order so RNTI order is not request order
  for (std::size_t i = reqs.size(); i > 1; --i) std::swap(reqs[i - 1], reqs[rng.below(i)]);
  return reqs;
}

}  // namespace cflab::testing
