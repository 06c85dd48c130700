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

#include <bitset>
#include <cstddef>
#include <string>
#include <string_view>

#include "cflab/topology.hpp"

namespace cflab {

/// Per-antenna on/off selection (cf_port_selection). The string form lists
/// antenna 0 first, so "11110111" disables antenna 4.
class AntennaMask {
 public:
  AntennaMask() = default;
  explicit AntennaMask(std::bitset<kNumAntennas> bits) : bits_(bits) {}

  static AntennaMask all() { return AntennaMask(std::bitset<kNumAntennas>().set()); }
  static AntennaMask none() { return AntennaMask(); }
  /// Parses an 8-character '0'/'1' string. Throws std::invalid_argument.
  static AntennaMask parse(std::string_view s);

  bool test(std::size_t a) const { return bits_.test(a); }
  AntennaMask& set(std::size_t a, bool on = true) {
    bits_.set(a, on);
    return *this;
  }
  std::size_t count() const { return bits_.count(); }
  std::bitset<kNumAntennas> bits() const { return bits_; }
  std::string str() const;

  AntennaMask operator|(const AntennaMask& o) const { return AntennaMask(bits_ | o.bits_); }
  AntennaMask operator&(const AntennaMask& o) const { return AntennaMask(bits_ & o.bits_); }
  bool operator==(const AntennaMask&) const = default;

 private:
  std::bitset<kNumAntennas> bits_;
};

/// cf_port_selection of one UE. At least two antennas are kept on by the
/// E2 control handler; the type itself does not enforce it.
struct UeCfConfig {
  AntennaMask cf_port_selection = AntennaMask::all();
  bool operator==(const UeCfConfig&) const = default;
};

}  // namespace cflab
