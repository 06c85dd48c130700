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

#include "cflab/log.hpp"

#include <cstdlib>
#include <mutex>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>

namespace cflab {

spdlog::level::level_enum parse_log_level(std::string_view name) {
  const auto lvl = spdlog::level::from_str(std::string(name));
  // from_str returns off for unknown names; only honour an explicit "off".
  if (lvl == spdlog::level::off && name != "off") return spdlog::level::warn;
  return lvl;
}

void init_logging() {
  static std::once_flag once;
  std::call_once(once, [] {
    auto logger = spdlog::stderr_logger_mt("cflab");
    logger->set_pattern("[%Y-%m-%d %H:%M:%S.%e] [%l] %v");
    spdlog::set_default_logger(logger);
  });
  const char* env = std::getenv("CF_LAB_LOG");
  spdlog::set_level(env ? parse_log_level(env) : spdlog::level::warn);
}

}  // namespace cflab
