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

#include "cflab/antenna_mask.hpp"

#include <stdexcept>

namespace cflab {

AntennaMask AntennaMask::parse(std::string_view s) {
  if (s.size() != kNumAntennas) throw std::invalid_argument("antenna mask must have 8 digits");
  AntennaMask m;
  for (std::size_t a = 0; a < kNumAntennas; ++a) {
    if (s[a] == '1')
      m.set(a);
    else if (s[a] != '0')
      throw std::invalid_argument("antenna mask digits must be 0 or 1");
  }
  return m;
}

std::string AntennaMask::str() const {
  std::string s(kNumAntennas, '0');
  for (std::size_t a = 0; a < kNumAntennas; ++a)
    if (bits_.test(a)) s[a] = '1';
  return s;
}

}  // namespace cflab
