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

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cflab/antenna_mask.hpp"
#include "cflab/pdu.hpp"
#include "cflab/topology.hpp"

namespace cflab {

using Column2 = std::array<Cplx, 2>;  // one antenna row of a 2-UE channel matrix

enum class EqualizerKind { Mrc, Zf };

/// Floor used for SINR values of a dead link.
inline constexpr double kSinrFloorDb = -300.0;

class SingularChannelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PduProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PortCsi {
  std::array<double, kNumAntennas> snr_db{};
  std::array<double, kNumAntennas> rsrp_dbm{};
  std::array<double, kNumAntennas> noise_var{};
  std::array<double, kNumAntennas> epre_dbm{};
};

struct UeSinr {
  Rnti rnti = 0;
  double post_eq_sinr_db = kSinrFloorDb;
};

struct EqualizerReport {
  std::vector<UeSinr> ues;  // 2 entries for ZF, 1 for MRC
  std::size_t active_antenna_count = 0;
  double processing_time_us = 0.0;
  EqualizerKind kind = EqualizerKind::Mrc;
  // ZF was singular and the pair was processed one UE at a time.
  bool singular_fallback = false;
};

double to_db(double linear);

/// h + e with e ~ CN(0, noise_var[a] / 10^(est_snr_db/10)). An infinite
/// est_snr_db returns h exactly. Each DMRS port draws from its own stream,
/// so paired UEs on orthogonal ports never mix estimates.
AntennaVector estimate_channel(const ChannelState& channel, int dmrs_port, double est_snr_db,
                               uint64_t seed);

/// Matched-filter bound p * sum_{a in mask} |h_a|^2 / noise_a, in dB.
double mrc_sinr(const AntennaVector& h_est, const AntennaMask& mask, double p_tx_w,
                std::span<const double, kNumAntennas> noise_var);

/// ZF post-equalization SINR p / (noise * [(H^H H)^-1]_kk) for a rows x 2
/// matrix. Throws SingularChannelError when rank deficient.
std::pair<double, double> zf_sinr(std::span<const Column2> rows, double p_tx_w, double noise_var);

/// ZF combiner W = H (H^H H)^-1 (rows x 2).
std::vector<Column2> zf_combiner(std::span<const Column2> rows);

/// ZF over the masked antennas with per-antenna noise handled by
/// pre-whitening each row.
std::pair<double, double> zf_sinr_masked(const AntennaVector& h1, const AntennaVector& h2,
                                         const AntennaMask& mask, double p1_w, double p2_w,
                                         std::span<const double, kNumAntennas> noise_var);

/// MRC for one UE of an overlapping pair, with the partner as interference.
double mrc_sinr_with_interference(const AntennaVector& h, const AntennaVector& h_other,
                                  const AntennaMask& mask, double p_w, double p_other_w,
                                  std::span<const double, kNumAntennas> noise_var);

/// An antenna leaves the ZF equalizer only when both UEs deselect it.
AntennaMask active_mask(const UeCfConfig& ue1, const UeCfConfig& ue2);

PortCsi compute_port_csi(const ChannelState& channel, double p_tx_dbm);

/// ZF time per 2-PDU batch, fit through (2, 3.6 us) and (8, 4.1 us). MRC
/// costs half of that per PDU.
double processing_time_us(std::size_t n_active_antennas, EqualizerKind kind);

/// Host power, fit through (2, 54.9 W) and (8, 58.9 W).
double processor_power_w(std::size_t n_active_antennas);

struct UeLink {
  ChannelState channel;
  UeCfConfig cfg;
  double tx_power_dbm = 23.0;
};

struct PhyOptions {
  double est_snr_db = std::numeric_limits<double>::infinity();
  uint64_t seed = 0;
};

/// Processes a slot's PDU pool: every MU pair first (ZF over the union of
/// both cf_port_selection masks), then remaining SU PDUs in pool order
/// (MRC over the UE's own mask). One report per pair or SU PDU.
std::vector<EqualizerReport> process_slot(std::span<const PuschPdu> pdu_pool,
                                          const std::map<Rnti, UeLink>& links,
                                          const PhyOptions& options = {});

}  // namespace cflab
