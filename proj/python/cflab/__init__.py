#
# Copyright (c) 2026 The cflab Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#

"""Cell-free MU-MIMO uplink lab simulator."""

from __future__ import annotations

import csv
import io
import json
from typing import Any, Mapping

from ._cflab import (  # noqa: F401
    NUM_ANTENNAS,
    PROTOCOL_VERSION,
    DecodeError,
    DqnModel,
    ScenarioError,
    Simulation,
    SingularChannelError,
    default_scenario,
    e2_decode,
    e2_encode,
    estimate_grant,
    normalize_scenario,
    prbs_for_bandwidth,
    pretrain,
    processing_time_us,
    processor_power_w,
    run_csv,
    sinr_to_mcs,
    table3_csv,
    ue_throughput_mbps,
    validate_scenario,
    zf_sinr,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["scenario", "run", "parse_csv"]


def _text(s: str | Mapping[str, Any]) -> str:
    return s if isinstance(s, str) else json.dumps(s)


def scenario(**overrides: Any) -> dict:
    """Lab scenario as a dict, top-level keys replaced by ``overrides``."""
    s = json.loads(default_scenario())
    unknown = set(overrides) - set(s)
    if unknown:
        raise KeyError(f"unknown scenario keys: {sorted(unknown)}")
    s.update(overrides)
    return json.loads(normalize_scenario(json.dumps(s)))


def parse_csv(text: str) -> list[dict]:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({k: (float(v) if k in ("thpt_mbps", "total_thpt_mbps", "power_w", "ptime_us") else int(v))
                     for k, v in r.items()})
    return rows


def run(s: str | Mapping[str, Any], model_path: str | None = None, base_dir: str = "") -> list[dict]:
    """Batch run; one dict per (second, UE), same columns as the CLI CSV."""
    return parse_csv(run_csv(_text(s), model_path, base_dir))
