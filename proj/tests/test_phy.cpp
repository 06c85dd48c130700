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

#include <cmath>
#include <map>

#include "cflab/phy.hpp"
#include "cflab/rng.hpp"
#include "doctest.h"
#include "phy_check.hpp"

using namespace cflab;
using doctest::Approx;

namespace {

std::array<double, kNumAntennas> flat(double v) {
  std::array<double, kNumAntennas> a{};
  a.fill(v);
  return a;
}

double lin(double db) { return std::pow(10.0, db / 10.0); }

AntennaMask mask_of(const char* s) { return AntennaMask::parse(s); }

UeLink link(Rng& rng) {
  UeLink l;
  l.channel = ChannelState(testing::random_vector(rng, 1e-3), 1e-9);
  return l;
}

}  // namespace

TEST_CASE("mrc matched-filter bound") {
  AntennaVector h{};
  h[0] = 1.0;
  h[1] = 1.0;
  CHECK(lin(mrc_sinr(h, mask_of("11000000"), 1.0, flat(1.0))) == Approx(2.0));
  AntennaVector g{};
  g[3] = 2.0;
  CHECK(mrc_sinr(g, mask_of("00010000"), 1.0, flat(1.0)) == Approx(10.0 * std::log10(4.0)));
  CHECK_THROWS_AS(mrc_sinr(g, AntennaMask::none(), 1.0, flat(1.0)), std::invalid_argument);

  Rng rng(3);
  const auto r = testing::random_vector(rng);
  AntennaMask m = mask_of("10000000");
  double prev = mrc_sinr(r, m, 1.0, flat(0.5));
  for (std::size_t a = 1; a < kNumAntennas; ++a) {
    m.set(a);
    const double s = mrc_sinr(r, m, 1.0, flat(0.5));
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("zf closed-form examples") {
  const std::vector<Column2> eye{{1.0, 0.0}, {0.0, 1.0}};
  auto [a, b] = zf_sinr(eye, 1.0, 0.1);
  CHECK(lin(a) == Approx(10.0));
  CHECK(lin(b) == Approx(10.0));

  const double r = 1.0 / std::sqrt(2.0);
  const std::vector<Column2> skew{{1.0, r}, {0.0, r}};
  auto [s1, s2] = zf_sinr(skew, 1.0, 0.1);
  CHECK(std::abs(lin(s1) - 5.0) < 1e-12);
  CHECK(std::abs(lin(s2) - 5.0) < 1e-12);

  const std::vector<Column2> collinear{{1.0, 2.0}, {0.5, 1.0}};
  CHECK_THROWS_AS(zf_sinr(collinear, 1.0, 0.1), SingularChannelError);
  const std::vector<Column2> one{{1.0, 2.0}};
  CHECK_THROWS_AS(zf_sinr(one, 1.0, 0.1), SingularChannelError);
}

TEST_CASE("zf agrees with an eigen inverse") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto h1 = testing::random_vector(rng), h2 = testing::random_vector(rng);
    const auto rows = testing::rows_of(h1, h2);
    const auto [x, y] = zf_sinr(rows, 0.7, 0.05);
    const auto [ex, ey] = testing::eigen_zf_sinr(rows, 0.7, 0.05);
    CHECK(lin(x) == Approx(ex).epsilon(1e-10));
    CHECK(lin(y) == Approx(ey).epsilon(1e-10));
  }
}

TEST_CASE("zf nulls the other user") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto h1 = testing::random_vector(rng), h2 = testing::random_vector(rng);
    CHECK(testing::zf_leakage(h1, h2) < 1e-10);
  }
}

TEST_CASE("extra antennas never hurt zf") {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const auto h1 = testing::random_vector(rng), h2 = testing::random_vector(rng);
    auto nv = flat(0.1);
    nv[i % kNumAntennas] = 0.4;  // uneven noise exercises the whitening
    CHECK(testing::zf_mask_monotonicity_violations(h1, h2, nv) == 0);
  }
}

TEST_CASE("masked zf with per-antenna noise") {
  Rng rng(21);
  const auto h1 = testing::random_vector(rng), h2 = testing::random_vector(rng);
  const AntennaMask m = mask_of("10110110");
  auto nv = flat(0.2);
  const auto [a, b] = zf_sinr_masked(h1, h2, m, 2.0, 0.5, nv);
  // same result as scaling the rows by sqrt(p) and using a scalar noise
  std::vector<Column2> rows;
  for (std::size_t k = 0; k < kNumAntennas; ++k)
    if (m.test(k)) rows.push_back({h1[k] * std::sqrt(2.0), h2[k] * std::sqrt(0.5)});
  const auto [ea, eb] = testing::eigen_zf_sinr(rows, 1.0, 0.2);
  CHECK(lin(a) == Approx(ea).epsilon(1e-10));
  CHECK(lin(b) == Approx(eb).epsilon(1e-10));
}

TEST_CASE("mrc with interference") {
  AntennaVector h{}, g{};
  h[0] = 1.0;
  g[1] = 1.0;  // orthogonal: no interference
  CHECK(lin(mrc_sinr_with_interference(h, g, AntennaMask::all(), 1.0, 1.0, flat(1.0))) == Approx(1.0));
  g[0] = 1.0;
  // self 1, cross 1: 1 / (1 + 1)
  CHECK(lin(mrc_sinr_with_interference(h, g, AntennaMask::all(), 1.0, 1.0, flat(1.0))) == Approx(0.5));
  AntennaVector z{};
  CHECK(mrc_sinr_with_interference(z, g, AntennaMask::all(), 1.0, 1.0, flat(1.0)) == kSinrFloorDb);
}

TEST_CASE("equalizer mask needs both ues to drop an antenna") {
  UeCfConfig all, drop0, drop0b;
  drop0.cf_port_selection = mask_of("01111111");
  drop0b.cf_port_selection = mask_of("01111111");
  CHECK(active_mask(all, all) == AntennaMask::all());
  CHECK(active_mask(drop0, all) == AntennaMask::all());
  CHECK(active_mask(drop0, drop0b).str() == "01111111");
}

TEST_CASE("channel estimation") {
  Rng rng(1);
  const ChannelState ch(testing::random_vector(rng), 0.01);
  CHECK(estimate_channel(ch, 0, INFINITY, 9) == ch.h());
  const auto e0 = estimate_channel(ch, 0, 10.0, 9);
  CHECK(e0 == estimate_channel(ch, 0, 10.0, 9));
  CHECK_FALSE(e0 == estimate_channel(ch, 2, 10.0, 9));

  // mean squared error
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto e = estimate_channel(ch, 0, 10.0, static_cast<uint64_t>(i));
    for (std::size_t a = 0; a < kNumAntennas; ++a) acc += std::norm(e[a] - ch.h()[a]);
  }
  CHECK(acc / n == Approx(8 * 0.01 / 10.0).epsilon(0.02));
}

TEST_CASE("port csi") {
  AntennaVector g{};
  g.fill(1.0);
  g[1] = 2.0;
  ChannelState ch(g, dbm_to_watts(-46.0));
  ch.set_fault(3, true);
  const auto csi = compute_port_csi(ch, 0.0);
  CHECK(csi.rsrp_dbm[0] == Approx(0.0));
  CHECK(csi.rsrp_dbm[1] - csi.rsrp_dbm[0] == Approx(20.0 * std::log10(2.0)));
  CHECK(csi.rsrp_dbm[3] == kFaultFloorDbm);
  for (std::size_t a = 0; a < kNumAntennas; ++a) {
    CHECK(std::abs(csi.snr_db[a] - (csi.rsrp_dbm[a] + 46.0)) < 1e-9);
    CHECK(csi.epre_dbm[a] == csi.rsrp_dbm[a]);
  }
}

TEST_CASE("timing and power models") {
  CHECK(processing_time_us(8, EqualizerKind::Zf) == Approx(4.1));
  CHECK(processing_time_us(2, EqualizerKind::Zf) == Approx(3.6));
  CHECK(processing_time_us(5, EqualizerKind::Zf) == Approx(3.85));
  CHECK(processing_time_us(8, EqualizerKind::Mrc) == Approx(2.05));
  CHECK(processor_power_w(8) == Approx(58.9));
  CHECK(processor_power_w(2) == Approx(54.9));
  CHECK(processor_power_w(5) == Approx(56.9));
  CHECK_THROWS_AS(processing_time_us(1, EqualizerKind::Zf), std::out_of_range);
  CHECK_THROWS_AS(processing_time_us(9, EqualizerKind::Mrc), std::out_of_range);
  CHECK_THROWS_AS(processor_power_w(9), std::out_of_range);
}

TEST_CASE("slot processing order") {
  Rng rng(4);
  std::map<Rnti, UeLink> links{{1, link(rng)}, {2, link(rng)}, {3, link(rng)}, {4, link(rng)}, {5, link(rng)}};
  PuschPdu a{1, {0, 10}, 10, 0, false, 0, 0};
  PuschPdu b{2, {0, 5}, 10, 2, true, 3, 0};
  PuschPdu c{3, {0, 5}, 10, 0, false, 0, 0};
  std::vector<PuschPdu> pool{a, b, c};
  auto rep = process_slot(pool, links);
  REQUIRE(rep.size() == 2);
  CHECK(rep[0].kind == EqualizerKind::Zf);
  CHECK(rep[0].ues.size() == 2);
  CHECK(rep[0].ues[0].rnti == 2);
  CHECK(rep[0].ues[1].rnti == 3);
  CHECK(rep[0].processing_time_us == Approx(4.1));
  CHECK(rep[1].kind == EqualizerKind::Mrc);
  CHECK(rep[1].ues[0].rnti == 1);
  CHECK(rep[1].processing_time_us == Approx(2.05));

  // two pairs and one SU
  PuschPdu d{4, {10, 5}, 10, 0, false, 0, 0};
  PuschPdu e{5, {10, 5}, 10, 2, true, 4, 0};
  std::vector<PuschPdu> pool2{a, b, c, d, e};
  rep = process_slot(pool2, links);
  REQUIRE(rep.size() == 3);
  CHECK(rep[0].kind == EqualizerKind::Zf);
  CHECK(rep[1].kind == EqualizerKind::Zf);
  CHECK(rep[2].kind == EqualizerKind::Mrc);
  std::map<Rnti, int> seen;
  for (const auto& r : rep)
    for (const auto& u : r.ues) ++seen[u.rnti];
  CHECK(seen.size() == 5);
  for (const auto& [k, v] : seen) CHECK(v == 1);

  // the pair uses the union of both masks
  links[2].cfg.cf_port_selection = mask_of("00111111");
  links[3].cfg.cf_port_selection = mask_of("01111111");
  rep = process_slot(pool, links);
  CHECK(rep[0].active_antenna_count == 7);
  // the SU UE uses its own mask
  links[1].cfg.cf_port_selection = mask_of("00001111");
  rep = process_slot(pool, links);
  CHECK(rep[1].active_antenna_count == 4);
}

TEST_CASE("slot processing errors and fallback") {
  Rng rng(6);
  std::map<Rnti, UeLink> links{{1, link(rng)}, {2, link(rng)}};
  std::vector<PuschPdu> orphan{{2, {0, 5}, 10, 2, true, 9, 0}};
  CHECK_THROWS_AS(process_slot(orphan, links), PduProtocolError);
  std::vector<PuschPdu> unknown{{7, {0, 5}, 10, 0, false, 0, 0}};
  CHECK_THROWS_AS(process_slot(unknown, links), PduProtocolError);
  std::vector<PuschPdu> same_port{{1, {0, 5}, 10, 0, false, 0, 0}, {2, {0, 5}, 10, 0, true, 1, 0}};
  CHECK_THROWS_AS(process_slot(same_port, links), PduProtocolError);

  // identical channels: ZF is singular, the pair is processed one UE at a time
  links[2].channel = links[1].channel;
  std::vector<PuschPdu> pair{{1, {0, 5}, 10, 0, false, 0, 0}, {2, {0, 5}, 10, 2, true, 1, 0}};
  const auto rep = process_slot(pair, links);
  REQUIRE(rep.size() == 1);
  CHECK(rep[0].singular_fallback);
  CHECK(rep[0].kind == EqualizerKind::Mrc);
  CHECK(rep[0].ues.size() == 2);
  CHECK(rep[0].processing_time_us == Approx(4.1));
}
