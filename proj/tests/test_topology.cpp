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

#include "cflab/antenna_mask.hpp"
#include "cflab/topology.hpp"
#include "doctest.h"

using namespace cflab;

TEST_CASE("path loss follows the log-distance law") {
  CHECK(path_loss_db(1.0) == doctest::Approx(40.0));
  CHECK(path_loss_db(10.0) == doctest::Approx(62.0));
  // 40 + 22 * log10(4)
  CHECK(path_loss_db(4.0) == doctest::Approx(40.0 + 22.0 * std::log10(4.0)).epsilon(1e-12));
  CHECK(path_loss_db(4.0) == doctest::Approx(53.245).epsilon(1e-4));
  CHECK_THROWS_AS(path_loss_db(0.0), std::domain_error);
  CHECK_THROWS_AS(path_loss_db(-1.0), std::domain_error);
  for (double d = 0.5; d < 50.0; d *= 1.3) CHECK(path_loss_db(d) < path_loss_db(d * 1.01));
}

TEST_CASE("lab array maps 8 antennas onto 4 RUs") {
  const auto a = RuAntennaArray::lab_default();
  CHECK(a.num_antennas() == 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(a.ru_of(i) == i / 2);
  CHECK_NOTHROW(a.validate());
  auto bad = a;
  bad.ru_positions.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("draw_channel is a pure function of its inputs") {
  const auto arr = RuAntennaArray::lab_default();
  const UeNode ue{17921, {3.0, 2.5}, 23.0, 0};
  const auto c1 = draw_channel(ue, arr, 42);
  const auto c2 = draw_channel(ue, arr, 42);
  CHECK(c1 == c2);
  CHECK_FALSE(c1 == draw_channel(ue, arr, 43));
  for (double nv : c1.noise_var()) CHECK(nv > 0.0);
}

TEST_CASE("mean channel power matches the path loss over many seeds") {
  const auto arr = RuAntennaArray::lab_default();
  const UeNode ue{1, {4.0, 1.0}, 23.0, 0};
  constexpr int kSeeds = 100000;
  std::array<double, kNumAntennas> acc{};
  for (int s = 0; s < kSeeds; ++s) {
    const auto c = draw_channel(ue, arr, static_cast<uint64_t>(s) * 7919 + 1);
    for (std::size_t a = 0; a < kNumAntennas; ++a) acc[a] += std::norm(c.h()[a]);
  }
  for (std::size_t a = 0; a < kNumAntennas; ++a) {
    const double expect = std::pow(10.0, -path_loss_db(antenna_distance_m(ue, arr, a)) / 10.0);
    CHECK(acc[a] / kSeeds == doctest::Approx(expect).epsilon(0.02));
  }
}

TEST_CASE("faults zero the gain and reconnecting restores it") {
  const auto arr = RuAntennaArray::lab_default();
  const auto c = draw_channel(UeNode{1, {3.0, 2.5}, 23.0, 0}, arr, 7);
  const auto f = apply_fault(c, 3, true);
  double hmax = 0.0;
  for (auto v : f.h()) hmax = std::max(hmax, std::abs(v));
  CHECK(std::abs(f.h()[3]) <= 1e-6 * hmax);
  for (std::size_t a = 0; a < kNumAntennas; ++a)
    if (a != 3) CHECK(f.h()[a] == c.h()[a]);
  CHECK(apply_fault(f, 3, false) == c);
  CHECK(apply_fault(f, 3, true) == f);  // idempotent

  auto two = apply_fault(apply_fault(c, 1, true), 6, true);
  int zeros = 0;
  for (auto v : two.h()) zeros += v == Cplx{};
  CHECK(zeros == 2);

  ChannelState all = c;
  for (std::size_t a = 0; a < kNumAntennas; ++a) all = apply_fault(all, a, true);
  for (auto v : all.h()) CHECK(v == Cplx{});
  CHECK_THROWS_AS(apply_fault(c, 8, true), std::out_of_range);
}

TEST_CASE("antenna mask string form lists antenna 0 first") {
  const auto m = AntennaMask::parse("11110111");
  CHECK(m.count() == 7);
  CHECK_FALSE(m.test(4));
  CHECK(m.test(0));
  CHECK(m.str() == "11110111");
  CHECK_THROWS_AS(AntennaMask::parse("1111011"), std::invalid_argument);
  CHECK_THROWS_AS(AntennaMask::parse("1111011x"), std::invalid_argument);
  CHECK((AntennaMask::parse("01111111") | AntennaMask::parse("11111111")) == AntennaMask::all());
  CHECK((AntennaMask::parse("01111111") & AntennaMask::parse("10111111")).str() == "00111111");
}
