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

#include "cflab/dqn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cflab::dqn {

using Json = nlohmann::ordered_json;

DqnModel::DqnModel(std::size_t hidden, std::size_t kernel) {
  if (hidden == 0 || kernel == 0 || kernel % 2 == 0)
    throw std::invalid_argument("conv layers need hidden > 0 and an odd kernel");
  convs_ = {{kFeatures, hidden, kernel}, {hidden, hidden, kernel}, {hidden, hidden, kernel}};
  std::size_t off = 0;
  for (const auto& c : convs_) {
    conv_offsets_.push_back(off);
    off += c.out_channels * c.in_channels * c.kernel + c.out_channels;
  }
  head_offset_ = off;
  off += kActions * head_inputs() + kActions;
  params_.assign(off, 0.0);
}

std::size_t DqnModel::conv_b_offset(std::size_t l) const {
  const auto& c = convs_[l];
  return conv_offsets_[l] + c.out_channels * c.in_channels * c.kernel;
}

DqnModel DqnModel::initialized(uint64_t seed, std::size_t hidden, std::size_t kernel) {
  DqnModel m(hidden, kernel);
  Rng rng(seed);
  for (std::size_t l = 0; l < m.convs_.size(); ++l) {
    const auto& c = m.convs_[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(c.in_channels * c.kernel));
    for (std::size_t i = m.conv_w_offset(l); i < m.conv_b_offset(l); ++i)
      m.params_[i] = (2.0 * rng.uniform() - 1.0) * bound;
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(m.head_inputs()));
  for (std::size_t i = m.head_w_offset(); i < m.head_b_offset(); ++i)
    m.params_[i] = (2.0 * rng.uniform() - 1.0) * bound * 0.5;
  return m;
}

QValues DqnModel::forward(const Observation& obs) const {
  Trace t;
  return forward(obs, t);
}

QValues DqnModel::forward(const Observation& obs, Trace& trace) const {
  trace.acts.assign(convs_.size() + 1, {});
  trace.pre.assign(convs_.size(), {});
  auto& x0 = trace.acts[0];
  x0.assign(kFeatures * kAntennas, 0.0);
  for (std::size_t p = 0; p < kAntennas; ++p)
    for (std::size_t c = 0; c < kFeatures; ++c) x0[c * kAntennas + p] = obs[p][c];

  for (std::size_t l = 0; l < convs_.size(); ++l) {
    const auto& spec = convs_[l];
    const double* w = params_.data() + conv_w_offset(l);
    const double* b = params_.data() + conv_b_offset(l);
    const auto& x = trace.acts[l];
    auto& pre = trace.pre[l];
    pre.assign(spec.out_channels * kAntennas, 0.0);
    const auto pad = static_cast<std::ptrdiff_t>(spec.kernel / 2);
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      for (std::size_t p = 0; p < kAntennas; ++p) {
        double acc = b[o];
        for (std::size_t i = 0; i < spec.in_channels; ++i) {
          const double* wi = w + (o * spec.in_channels + i) * spec.kernel;
          const double* xi = x.data() + i * kAntennas;
          for (std::size_t t = 0; t < spec.kernel; ++t) {
            const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p + t) - pad;
            if (q >= 0 && q < static_cast<std::ptrdiff_t>(kAntennas)) acc += wi[t] * xi[q];
          }
        }
        pre[o * kAntennas + p] = acc;
      }
    }
    auto& act = trace.acts[l + 1];
    act.resize(pre.size());
    for (std::size_t k = 0; k < pre.size(); ++k) act[k] = pre[k] > 0.0 ? pre[k] : 0.0;
  }

  const auto& h = trace.acts.back();
  const std::size_t channels = convs_.back().out_channels;
  const double* w = params_.data() + head_w_offset();
  const double* b = params_.data() + head_b_offset();
  QValues q{};
  for (std::size_t a = 0; a < kActions; ++a) {
    double acc = b[a];
    const double* wa = w + a * head_inputs();
    for (std::size_t p = 0; p < kAntennas; ++p)
      for (std::size_t c = 0; c < channels; ++c) acc += wa[p * channels + c] * h[c * kAntennas + p];
    q[a] = acc;
  }
  return q;
}

void DqnModel::backward(const Trace& trace, const QValues& dq, std::span<double> grad,
                        Observation* input_grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer has the wrong size");
  const std::size_t channels = convs_.back().out_channels;
  const auto& h = trace.acts.back();
  const double* hw = params_.data() + head_w_offset();

  std::vector<double> dact(channels * kAntennas, 0.0);
  for (std::size_t a = 0; a < kActions; ++a) {
    if (dq[a] == 0.0) continue;
    double* gw = grad.data() + head_w_offset() + a * head_inputs();
    const double* wa = hw + a * head_inputs();
    for (std::size_t p = 0; p < kAntennas; ++p)
      for (std::size_t c = 0; c < channels; ++c) {
        gw[p * channels + c] += dq[a] * h[c * kAntennas + p];
        dact[c * kAntennas + p] += dq[a] * wa[p * channels + c];
      }
    grad[head_b_offset() + a] += dq[a];
  }

  for (std::size_t l = convs_.size(); l-- > 0;) {
    const auto& spec = convs_[l];
    const auto& x = trace.acts[l];
    const auto& pre = trace.pre[l];
    const double* w = params_.data() + conv_w_offset(l);
    double* gw = grad.data() + conv_w_offset(l);
    double* gb = grad.data() + conv_b_offset(l);
    const auto pad = static_cast<std::ptrdiff_t>(spec.kernel / 2);
    std::vector<double> dx(spec.in_channels * kAntennas, 0.0);
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      for (std::size_t p = 0; p < kAntennas; ++p) {
        const double d = pre[o * kAntennas + p] > 0.0 ? dact[o * kAntennas + p] : 0.0;
        if (d == 0.0) continue;
        gb[o] += d;
        for (std::size_t i = 0; i < spec.in_channels; ++i) {
          const std::size_t wbase = (o * spec.in_channels + i) * spec.kernel;
          for (std::size_t t = 0; t < spec.kernel; ++t) {
            const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p + t) - pad;
            if (q < 0 || q >= static_cast<std::ptrdiff_t>(kAntennas)) continue;
            gw[wbase + t] += d * x[i * kAntennas + static_cast<std::size_t>(q)];
            dx[i * kAntennas + static_cast<std::size_t>(q)] += d * w[wbase + t];
          }
        }
      }
    }
    dact = std::move(dx);
  }

  if (input_grad)
    for (std::size_t p = 0; p < kAntennas; ++p)
      for (std::size_t c = 0; c < kFeatures; ++c) (*input_grad)[p][c] = dact[c * kAntennas + p];
}

std::size_t argmax(const QValues& q) {
  return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

Json layer_json(const DqnModel& m) {
  Json layers = Json::array();
  for (const auto& c : m.conv_layers())
    layers.push_back(Json{{"type", "conv1d"},
                          {"in_channels", c.in_channels},
                          {"out_channels", c.out_channels},
                          {"kernel", c.kernel},
                          {"padding", "same"},
                          {"activation", "relu"}});
  layers.push_back(Json{{"type", "dense"}, {"in", m.head_inputs()}, {"out", kActions}, {"activation", "linear"}});
  return layers;
}

}  // namespace

std::string base64_encode(std::span<const uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const uint32_t b0 = bytes[i];
    const uint32_t b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
    const uint32_t b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
    const uint32_t v = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kB64[v & 63] : '=');
  }
  return out;
}

std::vector<uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64 length must be a multiple of 4");
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + static_cast<std::size_t>(k)];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else if (pad > 0 || (v[k] = b64_value(c)) < 0) {
        throw std::invalid_argument("invalid base64 character");
      }
    }
    const uint32_t w = (uint32_t(v[0]) << 18) | (uint32_t(v[1]) << 12) | (uint32_t(v[2]) << 6) | uint32_t(v[3]);
    out.push_back(static_cast<uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<uint8_t>(w >> 8));
    if (pad < 1) out.push_back(static_cast<uint8_t>(w));
  }
  return out;
}

std::string DqnModel::serialize() const {
  Json body{{"input", {kAntennas, kFeatures}},
            {"actions", kActions},
            {"layers", layer_json(*this)},
            {"param_count", params_.size()},
            {"dtype", "float64-le"}};
  std::vector<uint8_t> raw;
  raw.reserve(params_.size() * 8);
  for (double d : params_) {
    const auto bits = std::bit_cast<uint64_t>(d);
    for (int k = 0; k < 8; ++k) raw.push_back(static_cast<uint8_t>(bits >> (8 * k)));
  }
  return std::string(kModelMagic) + "\n" + body.dump() + "\n" + base64_encode(raw) + "\n";
}

DqnModel DqnModel::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string magic, header, weights;
  if (!std::getline(in, magic) || magic != kModelMagic) throw std::runtime_error("not a cfdqn/1 model file");
  if (!std::getline(in, header) || !std::getline(in, weights)) throw std::runtime_error("model file is truncated");
  Json body;
  try {
    body = Json::parse(header);
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("model header: ") + e.what());
  }
  const auto& layers = body.at("layers");
  if (layers.size() != 4) throw std::runtime_error("model must have 3 conv layers and a head");
  const std::size_t hidden = layers[0].at("out_channels").get<std::size_t>();
  const std::size_t kernel = layers[0].at("kernel").get<std::size_t>();
  DqnModel m(hidden, kernel);
  if (layer_json(m) != layers) throw std::runtime_error("model layer dims do not match this build");
  const auto raw = base64_decode(weights);
  if (raw.size() != m.params_.size() * 8) throw std::runtime_error("model weight count mismatch");
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= uint64_t{raw[i * 8 + static_cast<std::size_t>(k)]} << (8 * k);
    m.params_[i] = std::bit_cast<double>(bits);
  }
  return m;
}

void DqnModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file " + path);
  out << serialize();
}

DqnModel DqnModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

bool DqnModel::operator==(const DqnModel& o) const {
  if (convs_.size() != o.convs_.size()) return false;
  for (std::size_t l = 0; l < convs_.size(); ++l)
    if (convs_[l].in_channels != o.convs_[l].in_channels || convs_[l].out_channels != o.convs_[l].out_channels ||
        convs_[l].kernel != o.convs_[l].kernel)
      return false;
  return std::memcmp(params_.data(), o.params_.data(), params_.size() * sizeof(double)) == 0 &&
         params_.size() == o.params_.size();
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1u << 16));
}

void ReplayBuffer::push(const Experience& e) {
  if (data_.size() < capacity_) {
    data_.push_back(e);
    return;
  }
  data_[head_] = e;
  head_ = (head_ + 1) % capacity_;
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  if (!can_sample(batch)) throw std::logic_error("replay buffer holds fewer samples than the batch size");
  std::vector<const Experience*> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) out.push_back(&data_[rng.below(data_.size())]);
  return out;
}

SgdMomentum::SgdMomentum(std::size_t n, double lr, double momentum)
    : lr_(lr), momentum_(momentum), velocity_(n, 0.0) {}

void SgdMomentum::step(std::span<double> params, std::span<const double> grad) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity_[i] = momentum_ * velocity_[i] + grad[i];
    params[i] -= lr_ * velocity_[i];
  }
}

double td_loss(const DqnModel& model, const DqnModel& target, std::span<const Experience* const> batch,
               double gamma, std::vector<double>* grad) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (grad) grad->assign(model.param_count(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  DqnModel::Trace trace;
  for (const Experience* e : batch) {
    const QValues q = model.forward(e->obs, trace);
    double y = e->reward;
    if (!e->done && gamma != 0.0) {
      const QValues qn = target.forward(e->next_obs);
      y += gamma * *std::max_element(qn.begin(), qn.end());
    }
    const double diff = q[e->action] - y;
    loss += diff * diff * inv_b;
    if (grad) {
      QValues dq{};
      dq[e->action] = 2.0 * diff * inv_b;
      model.backward(trace, dq, *grad);
    }
  }
  return loss;
}

double train_step(DqnModel& model, const DqnModel& target, std::span<const Experience* const> batch,
                  double gamma, SgdMomentum& opt, double max_grad_norm) {
  std::vector<double> grad;
  const double loss = td_loss(model, target, batch, gamma, &grad);
  if (!std::isfinite(loss)) throw std::runtime_error("TD loss is not finite");
  if (max_grad_norm > 0.0) {
    double n2 = 0.0;
    for (double g : grad) n2 += g * g;
    const double norm = std::sqrt(n2);
    if (norm > max_grad_norm)
      for (double& g : grad) g *= max_grad_norm / norm;
  }
  opt.step(model.params(), grad);
  return loss;
}

}  // namespace cflab::dqn
