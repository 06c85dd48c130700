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

#include <string_view>

#include <spdlog/spdlog.h>

namespace cflab {

/// Routes the default logger to stderr at the level named by CF_LAB_LOG
/// (trace, debug, info, warn, error, off; default warn). Safe to call more
/// than once.
void init_logging();

/// Level parsing shared with the CLI; unknown names map to warn.
spdlog::level::level_enum parse_log_level(std::string_view name);

}  // namespace cflab
