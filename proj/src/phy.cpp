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

#include "cflab/phy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cflab/rng.hpp"

namespace cflab {

double to_db(double linear) {
  if (!(linear > 0.0)) return kSinrFloorDb;
  return std::max(10.0 * std::log10(linear), kSinrFloorDb);
}

AntennaVector estimate_channel(const ChannelState& channel, int dmrs_port, double est_snr_db,
                               uint64_t seed) {
  AntennaVector est = channel.h();
  if (std::isinf(est_snr_db) && est_snr_db > 0) return est;
  Rng rng(mix_seed({seed, static_cast<uint64_t>(dmrs_port), 0x5e57ULL}));
  const double scale = std::pow(10.0, -est_snr_db / 10.0);
  for (std::size_t a = 0; a < kNumAntennas; ++a)
    est[a] += rng.complex_normal() * std::sqrt(channel.noise_var()[a] * scale);
  return est;
}

double mrc_sinr(const AntennaVector& h_est, const AntennaMask& mask, double p_tx_w,
                std::span<const double, kNumAntennas> noise_var) {
  if (mask.count() == 0) throw std::invalid_argument("MRC needs at least one active antenna");
  double acc = 0.0;
  for (std::size_t a = 0; a < kNumAntennas; ++a)
    if (mask.test(a)) acc += std::norm(h_est[a]) / noise_var[a];
  return to_db(p_tx_w * acc);
}

namespace {

struct Gram2 {
  double a = 0.0;  // |h1|^2
  double d = 0.0;  // |h2|^2
  Cplx b{};        // h1^H h2
  double det() const { return a * d - std::norm(b); }
};

Gram2 gram(std::span<const Column2> rows) {
  Gram2 g;
  for (const auto& r : rows) {
    g.a += std::norm(r[0]);
    g.d += std::norm(r[1]);
    g.b += std::conj(r[0]) * r[1];
  }
  return g;
}

void require_full_rank(std::span<const Column2> rows, const Gram2& g) {
  if (rows.size() < 2) throw SingularChannelError("ZF needs at least two antenna rows");
  if (!(g.a > 0.0) || !(g.d > 0.0) || g.det() <= 1e-12 * g.a * g.d)
    throw SingularChannelError("UE channels are collinear");
}

}  // namespace

std::pair<double, double> zf_sinr(std::span<const Column2> rows, double p_tx_w, double noise_var) {
  const Gram2 g = gram(rows);
  require_full_rank(rows, g);
  const double det = g.det();
  // [(H^H H)^-1]_11 = d / det, [(H^H H)^-1]_22 = a / det
  return {to_db(p_tx_w * det / (noise_var * g.d)), to_db(p_tx_w * det / (noise_var * g.a))};
}

std::vector<Column2> zf_combiner(std::span<const Column2> rows) {
  const Gram2 g = gram(rows);
  require_full_rank(rows, g);
  const double det = g.det();
  std::vector<Column2> w;
  w.reserve(rows.size());
  for (const auto& r : rows)
    w.push_back({(r[0] * g.d - r[1] * std::conj(g.b)) / det, (r[1] * g.a - r[0] * g.b) / det});
  return w;
}

std::pair<double, double> zf_sinr_masked(const AntennaVector& h1, const AntennaVector& h2,
                                         const AntennaMask& mask, double p1_w, double p2_w,
                                         std::span<const double, kNumAntennas> noise_var) {
  std::vector<Column2> rows;
  rows.reserve(kNumAntennas);
  const double s1 = std::sqrt(p1_w), s2 = std::sqrt(p2_w);
  for (std::size_t a = 0; a < kNumAntennas; ++a) {
    if (!mask.test(a)) continue;
    const double w = 1.0 / std::sqrt(noise_var[a]);
    rows.push_back({h1[a] * (s1 * w), h2[a] * (s2 * w)});
  }
  return zf_sinr(rows, 1.0, 1.0);
}

double mrc_sinr_with_interference(const AntennaVector& h, const AntennaVector& h_other,
                                  const AntennaMask& mask, double p_w, double p_other_w,
                                  std::span<const double, kNumAntennas> noise_var) {
  if (mask.count() == 0) throw std::invalid_argument("MRC needs at least one active antenna");
  double self = 0.0;
  Cplx cross{};
  for (std::size_t a = 0; a < kNumAntennas; ++a) {
    if (!mask.test(a)) continue;
    const Cplx u = h[a] * std::sqrt(p_w / noise_var[a]);
    const Cplx v = h_other[a] * std::sqrt(p_other_w / noise_var[a]);
    self += std::norm(u);
    cross += std::conj(u) * v;
  }
  if (!(self > 0.0)) return kSinrFloorDb;
  return to_db(self * self / (self + std::norm(cross)));
}

AntennaMask active_mask(const UeCfConfig& ue1, const UeCfConfig& ue2) {
  return ue1.cf_port_selection | ue2.cf_port_selection;
}

PortCsi compute_port_csi(const ChannelState& channel, double p_tx_dbm) {
  PortCsi csi;
  for (std::size_t a = 0; a < kNumAntennas; ++a) {
    const double mag = std::abs(channel.h()[a]);
    const double rsrp = mag > 0.0 ? std::max(p_tx_dbm + 20.0 * std::log10(mag), kFaultFloorDbm)
                                  : kFaultFloorDbm;
    csi.rsrp_dbm[a] = rsrp;
    csi.noise_var[a] = channel.noise_var()[a];
    csi.snr_db[a] = rsrp - watts_to_dbm(channel.noise_var()[a]);
    csi.epre_dbm[a] = rsrp;
  }
  return csi;
}

double processing_time_us(std::size_t n, EqualizerKind kind) {
  if (n == 0 || n > kNumAntennas) throw std::out_of_range("active antenna count " + std::to_string(n));
  if (kind == EqualizerKind::Zf && n < 2) throw std::out_of_range("ZF needs at least two antennas");
  const double zf = 3.6 + (static_cast<double>(n) - 2.0) * (0.5 / 6.0);
  return kind == EqualizerKind::Zf ? zf : zf / 2.0;
}

double processor_power_w(std::size_t n) {
  if (n > kNumAntennas) throw std::out_of_range("active antenna count " + std::to_string(n));
  return 54.9 + (static_cast<double>(n) - 2.0) * (4.0 / 6.0);
}

std::vector<EqualizerReport> process_slot(std::span<const PuschPdu> pool,
                                          const std::map<Rnti, UeLink>& links,
                                          const PhyOptions& options) {
  auto link_of = [&](Rnti rnti) -> const UeLink& {
    auto it = links.find(rnti);
    if (it == links.end()) throw PduProtocolError("no channel for RNTI " + std::to_string(rnti));
    return it->second;
  };
  auto est = [&](const PuschPdu& pdu, const UeLink& link) {
    return estimate_channel(link.channel, pdu.dmrs_port, options.est_snr_db,
                            mix_seed({options.seed, pdu.rnti, pdu.slot_index}));
  };

  std::vector<bool> done(pool.size(), false);
  std::vector<EqualizerReport> reports;

  for (std::size_t i = 0; i < pool.size(); ++i) {
    const PuschPdu& mu = pool[i];
    if (!mu.mu_flag || done[i]) continue;
    std::size_t partner = pool.size();
    for (std::size_t j = 0; j < pool.size(); ++j)
      if (!done[j] && j != i && !pool[j].mu_flag && pool[j].rnti == mu.rnti_mu) {
        partner = j;
        break;
      }
    if (partner == pool.size())
      throw PduProtocolError("MU PDU for RNTI " + std::to_string(mu.rnti) + " has no partner");
    if (pool[partner].dmrs_port == mu.dmrs_port)
      throw PduProtocolError("paired PDUs share a DMRS port");
    done[i] = done[partner] = true;

    const PuschPdu& first = pool[partner];
    const UeLink& l_mu = link_of(mu.rnti);
    const UeLink& l_first = link_of(first.rnti);
    const AntennaVector h_mu = est(mu, l_mu);
    const AntennaVector h_first = est(first, l_first);
    const AntennaMask mask = active_mask(l_mu.cfg, l_first.cfg);
    const double p_mu = dbm_to_watts(l_mu.tx_power_dbm);
    const double p_first = dbm_to_watts(l_first.tx_power_dbm);
    const auto& nv = l_mu.channel.noise_var();

    EqualizerReport r;
    r.active_antenna_count = mask.count();
    try {
      const auto [s_mu, s_first] = zf_sinr_masked(h_mu, h_first, mask, p_mu, p_first, nv);
      r.kind = EqualizerKind::Zf;
      r.ues = {{mu.rnti, s_mu}, {first.rnti, s_first}};
      r.processing_time_us = processing_time_us(mask.count(), EqualizerKind::Zf);
    } catch (const SingularChannelError&) {
      r.kind = EqualizerKind::Mrc;
      r.singular_fallback = true;
      r.ues = {{mu.rnti, mrc_sinr_with_interference(h_mu, h_first, mask, p_mu, p_first, nv)},
               {first.rnti, mrc_sinr_with_interference(h_first, h_mu, mask, p_first, p_mu, nv)}};
      r.processing_time_us = 2.0 * processing_time_us(std::max<std::size_t>(mask.count(), 1), EqualizerKind::Mrc);
    }
    reports.push_back(std::move(r));
  }

  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (done[i]) continue;
    const PuschPdu& pdu = pool[i];
    const UeLink& link = link_of(pdu.rnti);
    const AntennaMask& mask = link.cfg.cf_port_selection;
    EqualizerReport r;
    r.kind = EqualizerKind::Mrc;
    r.active_antenna_count = mask.count();
    r.ues = {{pdu.rnti, mrc_sinr(est(pdu, link), mask, dbm_to_watts(link.tx_power_dbm),
                                 link.channel.noise_var())}};
    r.processing_time_us = processing_time_us(mask.count(), EqualizerKind::Mrc);
    reports.push_back(std::move(r));
    done[i] = true;
  }
  return reports;
}

}  // namespace cflab
