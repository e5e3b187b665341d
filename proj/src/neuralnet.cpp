#include "implan/neuralnet.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "implan/rng.hpp"

namespace implan {

namespace {

// Flat parameter layout. Weight matrices are (out x window) where window is
// kernel*in_channels; rows of an im2col matrix hold one flattened window.
constexpr int kW1 = 0;                    // 16 x 30
constexpr int kB1 = kW1 + 16 * 30;        // 16
constexpr int kW2 = kB1 + 16;             // 32 x 80
constexpr int kB2 = kW2 + 32 * 80;        // 32
constexpr int kW3 = kB2 + 32;             // 64 x 96
constexpr int kB3 = kW3 + 64 * 96;        // 64
constexpr int kW4 = kB3 + 64;             // 192
constexpr int kB4 = kW4 + 192;            // 1
static_assert(kB4 + 1 == Discriminator::kParamCount);

struct ShapeEntry {
  std::uint32_t rows, cols;
};
constexpr std::array<ShapeEntry, 8> kShapeTable = {{{16, 30},
                                                    {16, 1},
                                                    {32, 80},
                                                    {32, 1},
                                                    {64, 96},
                                                    {64, 1},
                                                    {1, 192},
                                                    {1, 1}}};

using M1 = Eigen::Matrix<double, 13, 16>;
using M2 = Eigen::Matrix<double, 5, 32>;
using M3 = Eigen::Matrix<double, 3, 64>;
using I1 = Eigen::Matrix<double, 13, 30>;
using I2 = Eigen::Matrix<double, 5, 80>;
using I3 = Eigen::Matrix<double, 3, 96>;
using FlatVec = Eigen::Matrix<double, 192, 1>;

using MapW1 = Eigen::Map<const Eigen::Matrix<double, 16, 30>>;
using MapW2 = Eigen::Map<const Eigen::Matrix<double, 32, 80>>;
using MapW3 = Eigen::Map<const Eigen::Matrix<double, 64, 96>>;

struct Views {
  MapW1 w1;
  Eigen::Map<const Eigen::Matrix<double, 16, 1>> b1;
  MapW2 w2;
  Eigen::Map<const Eigen::Matrix<double, 32, 1>> b2;
  MapW3 w3;
  Eigen::Map<const Eigen::Matrix<double, 64, 1>> b3;
  Eigen::Map<const FlatVec> w4;
  double b4;

  explicit Views(const VecX& p)
      : w1(p.data() + kW1),
        b1(p.data() + kB1),
        w2(p.data() + kW2),
        b2(p.data() + kB2),
        w3(p.data() + kW3),
        b3(p.data() + kB3),
        w4(p.data() + kW4),
        b4(p[kB4]) {}
};

// Forward activations for one sample, kept for the backward pass.
struct Workspace {
  I1 i1;
  M1 c1pre, c1;
  I2 i2;
  M2 c2pre, c2;
  I3 i3;
  M3 c3pre, c3;
  FlatVec flat;
  double z = 0.0;
  double p = 0.0;
};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void forward(const Views& v, const MotionRepr& m, Workspace& ws) {
  for (int t = 0; t < 13; ++t)
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 6; ++c) ws.i1(t, r * 6 + c) = m.grid(2 * t + r, c);
  ws.c1pre.noalias() = ws.i1 * v.w1.transpose();
  ws.c1pre.rowwise() += v.b1.transpose();
  ws.c1 = ws.c1pre.cwiseMax(0.0);

  for (int t = 0; t < 5; ++t)
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 16; ++c) ws.i2(t, r * 16 + c) = ws.c1(2 * t + r, c);
  ws.c2pre.noalias() = ws.i2 * v.w2.transpose();
  ws.c2pre.rowwise() += v.b2.transpose();
  ws.c2 = ws.c2pre.cwiseMax(0.0);

  for (int t = 0; t < 3; ++t)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 32; ++c) ws.i3(t, r * 32 + c) = ws.c2(t + r, c);
  ws.c3pre.noalias() = ws.i3 * v.w3.transpose();
  ws.c3pre.rowwise() += v.b3.transpose();
  ws.c3 = ws.c3pre.cwiseMax(0.0);

  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 64; ++c) ws.flat[t * 64 + c] = ws.c3(t, c);
  ws.z = ws.flat.dot(v.w4) + v.b4;
  ws.p = sigmoid(ws.z);
}

// Accumulates dLoss/dparams into grad given dLoss/dz for the sample in ws.
void backward(const Views& v, const Workspace& ws, double dz, VecX& grad) {
  Eigen::Map<Eigen::Matrix<double, 16, 30>> gw1(grad.data() + kW1);
  Eigen::Map<Eigen::Matrix<double, 16, 1>> gb1(grad.data() + kB1);
  Eigen::Map<Eigen::Matrix<double, 32, 80>> gw2(grad.data() + kW2);
  Eigen::Map<Eigen::Matrix<double, 32, 1>> gb2(grad.data() + kB2);
  Eigen::Map<Eigen::Matrix<double, 64, 96>> gw3(grad.data() + kW3);
  Eigen::Map<Eigen::Matrix<double, 64, 1>> gb3(grad.data() + kB3);
  Eigen::Map<FlatVec> gw4(grad.data() + kW4);

  gw4 += ws.flat * dz;
  grad[kB4] += dz;

  M3 dc3 = M3::Zero();
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 64; ++c) dc3(t, c) = v.w4[t * 64 + c] * dz;
  dc3 = (ws.c3pre.array() > 0.0).select(dc3, M3::Zero());

  gw3.noalias() += dc3.transpose() * ws.i3;
  gb3 += dc3.colwise().sum().transpose();
  I3 di3 = dc3 * v.w3;

  M2 dc2 = M2::Zero();
  for (int t = 0; t < 3; ++t)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 32; ++c) dc2(t + r, c) += di3(t, r * 32 + c);
  dc2 = (ws.c2pre.array() > 0.0).select(dc2, M2::Zero());

  gw2.noalias() += dc2.transpose() * ws.i2;
  gb2 += dc2.colwise().sum().transpose();
  I2 di2 = dc2 * v.w2;

  M1 dc1 = M1::Zero();
  for (int t = 0; t < 5; ++t)
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 16; ++c) dc1(2 * t + r, c) += di2(t, r * 16 + c);
  dc1 = (ws.c1pre.array() > 0.0).select(dc1, M1::Zero());

  gw1.noalias() += dc1.transpose() * ws.i1;
  gb1 += dc1.colwise().sum().transpose();
}

// Per-entry contribution to dLoss/dz given batch label counts. Clamped
// scores contribute zero gradient, matching the finite-difference view of
// the clamped loss.
double dloss_dz(double p, bool real, LossMode mode, double clamp_eps, std::size_t n_real,
                std::size_t n_gen, std::size_t n_total) {
  const bool inside = p >= clamp_eps && p <= 1.0 - clamp_eps;
  if (!inside) return 0.0;
  if (mode == LossMode::bce) {
    const double y = real ? 1.0 : 0.0;
    return (p - y) / static_cast<double>(n_total);
  }
  // d/dz of log(sigmoid(z)) is (1 - p).
  return real ? -(1.0 - p) / static_cast<double>(n_real)
              : (1.0 - p) / static_cast<double>(n_gen);
}

double entry_loss(double p, bool real, LossMode mode, double clamp_eps, std::size_t n_real,
                  std::size_t n_gen, std::size_t n_total) {
  const double pc = std::clamp(p, clamp_eps, 1.0 - clamp_eps);
  if (mode == LossMode::bce) {
    const double y = real ? 1.0 : 0.0;
    return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc)) /
           static_cast<double>(n_total);
  }
  return real ? -std::log(pc) / static_cast<double>(n_real)
              : std::log(pc) / static_cast<double>(n_gen);
}

std::uint32_t crc32(const unsigned char* data, std::size_t size) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t read_u32(const std::string& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return v;
}

}  // namespace

Discriminator::Discriminator() : params_(VecX::Zero(kParamCount)) {}

Discriminator Discriminator::seeded(std::uint64_t seed) {
  Discriminator d;
  Rng rng(seed);
  auto fill = [&](int offset, int count, double stddev) {
    for (int i = 0; i < count; ++i) d.params_[offset + i] = stddev * rng.normal();
  };
  fill(kW1, 16 * 30, std::sqrt(2.0 / 30.0));
  fill(kW2, 32 * 80, std::sqrt(2.0 / 80.0));
  fill(kW3, 64 * 96, std::sqrt(2.0 / 96.0));
  fill(kW4, 192, std::sqrt(1.0 / 192.0));
  return d;
}

double Discriminator::score(const MotionRepr& m) const {
  const Views v(params_);
  Workspace ws;
  forward(v, m, ws);
  return ws.p;
}

std::vector<double> Discriminator::score_batch(std::span<const MotionRepr> ms) const {
  const Views v(params_);
  Workspace ws;
  std::vector<double> out(ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    forward(v, ms[i], ws);
    out[i] = ws.p;
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (!(learning_rate >= 0)) throw ContractError("learning_rate must be >= 0");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (!(clamp_eps > 0 && clamp_eps < 0.5)) throw ContractError("clamp_eps out of range");
}

double loss(const Discriminator& d, const LabeledDataset& dataset, LossMode mode,
            double clamp_eps) {
  if (!dataset.has_both_labels())
    throw ContractError("loss requires both labels in the dataset");
  const std::size_t n_real = dataset.count(true);
  const std::size_t n_gen = dataset.count(false);
  const std::size_t n_total = dataset.entries.size();

  const Views v(d.params());
  Workspace ws;
  double total = 0.0;
  for (const auto& e : dataset.entries) {
    forward(v, e.repr, ws);
    total += entry_loss(ws.p, e.real, mode, clamp_eps, n_real, n_gen, n_total);
  }
  return total;
}

VecX loss_gradient(const Discriminator& d, const LabeledDataset& dataset, LossMode mode,
                   double clamp_eps) {
  if (!dataset.has_both_labels())
    throw ContractError("loss requires both labels in the dataset");
  const std::size_t n_real = dataset.count(true);
  const std::size_t n_gen = dataset.count(false);
  const std::size_t n_total = dataset.entries.size();

  const Views v(d.params());
  Workspace ws;
  VecX grad = VecX::Zero(Discriminator::kParamCount);
  for (const auto& e : dataset.entries) {
    forward(v, e.repr, ws);
    const double dz = dloss_dz(ws.p, e.real, mode, clamp_eps, n_real, n_gen, n_total);
    if (dz != 0.0) backward(v, ws, dz, grad);
  }
  return grad;
}

TrainResult train(const Discriminator& init, const LabeledDataset& dataset,
                  const TrainConfig& config) {
  config.validate();
  if (dataset.entries.empty()) throw ContractError("train requires a non-empty dataset");
  if (!dataset.has_both_labels())
    throw ContractError("train requires both labels in the dataset");

  TrainResult result;
  result.model = init;
  VecX& params = result.model.params();

  VecX grad = VecX::Zero(Discriminator::kParamCount);
  VecX adam_m = VecX::Zero(Discriminator::kParamCount);
  VecX adam_v = VecX::Zero(Discriminator::kParamCount);
  long adam_t = 0;

  Rng rng(config.rng_seed);
  std::vector<std::size_t> order(dataset.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Workspace ws;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));

      std::size_t n_real = 0, n_gen = 0;
      for (std::size_t i = begin; i < end; ++i)
        (dataset.entries[order[i]].real ? n_real : n_gen) += 1;

      grad.setZero();
      const Views v(params);
      for (std::size_t i = begin; i < end; ++i) {
        const auto& e = dataset.entries[order[i]];
        forward(v, e.repr, ws);
        const double dz =
            dloss_dz(ws.p, e.real, config.loss_mode, config.clamp_eps,
                     std::max<std::size_t>(1, n_real), std::max<std::size_t>(1, n_gen),
                     end - begin);
        if (dz != 0.0) backward(v, ws, dz, grad);
      }

      ++adam_t;
      const double bc1 = 1.0 - std::pow(config.beta1, adam_t);
      const double bc2 = 1.0 - std::pow(config.beta2, adam_t);
      for (int j = 0; j < Discriminator::kParamCount; ++j) {
        adam_m[j] = config.beta1 * adam_m[j] + (1.0 - config.beta1) * grad[j];
        adam_v[j] = config.beta2 * adam_v[j] + (1.0 - config.beta2) * grad[j] * grad[j];
        params[j] -= config.learning_rate * (adam_m[j] / bc1) /
                     (std::sqrt(adam_v[j] / bc2) + config.adam_eps);
      }
    }
    result.epoch_losses.push_back(
        loss(result.model, dataset, config.loss_mode, config.clamp_eps));
  }
  return result;
}

double accuracy(const Discriminator& d, const LabeledDataset& dataset) {
  if (dataset.entries.empty()) throw ContractError("accuracy of an empty dataset");
  std::size_t correct = 0;
  const Views v(d.params());
  Workspace ws;
  for (const auto& e : dataset.entries) {
    forward(v, e.repr, ws);
    if ((ws.p >= 0.5) == e.real) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.entries.size());
}

double gradient_check(const Discriminator& d, const LabeledDataset& dataset, LossMode mode,
                      double h, double clamp_eps) {
  const VecX analytic = loss_gradient(d, dataset, mode, clamp_eps);
  Discriminator probe = d;
  double worst = 0.0;
  for (int j = 0; j < Discriminator::kParamCount; ++j) {
    const double orig = probe.params()[j];
    probe.params()[j] = orig + h;
    const double lp = loss(probe, dataset, mode, clamp_eps);
    probe.params()[j] = orig - h;
    const double lm = loss(probe, dataset, mode, clamp_eps);
    probe.params()[j] = orig;
    const double numeric = (lp - lm) / (2.0 * h);
    const double err = std::abs(analytic[j] - numeric) /
                       std::max(1.0, std::abs(analytic[j]) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

void Discriminator::save(const std::string& path) const {
  std::string buf;
  buf.reserve(16 + kShapeTable.size() * 8 + kParamCount * 8 + 4);
  buf += "IDSC";
  append_u32(buf, 1u);  // version
  append_u32(buf, static_cast<std::uint32_t>(kShapeTable.size()));
  for (const auto& s : kShapeTable) {
    append_u32(buf, s.rows);
    append_u32(buf, s.cols);
  }
  for (int i = 0; i < kParamCount; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &params_[i], 8);
    for (int b = 0; b < 8; ++b)
      buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
  }
  append_u32(buf, crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

Discriminator Discriminator::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 12 || buf.compare(0, 4, "IDSC") != 0)
    throw CheckpointError("not a discriminator checkpoint: " + path);
  if (read_u32(buf, 4) != 1u) throw CheckpointError("unsupported checkpoint version");

  const std::size_t layer_count = read_u32(buf, 8);
  if (buf.size() < 12 + layer_count * 8)
    throw CheckpointError("checkpoint checksum unverifiable (truncated): " + path);
  if (layer_count != kShapeTable.size())
    throw CheckpointError("checkpoint layer-shape mismatch");
  std::size_t table_params = 0;
  for (std::size_t i = 0; i < layer_count; ++i) {
    const std::uint32_t rows = read_u32(buf, 12 + i * 8);
    const std::uint32_t cols = read_u32(buf, 16 + i * 8);
    table_params += static_cast<std::size_t>(rows) * cols;
    if (rows != kShapeTable[i].rows || cols != kShapeTable[i].cols)
      throw CheckpointError("checkpoint layer-shape mismatch");
  }
  const std::size_t expected = 12 + layer_count * 8 + table_params * 8 + 4;
  if (buf.size() != expected)
    throw CheckpointError("checkpoint checksum unverifiable (truncated or padded): " + path);
  if (crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4) !=
      read_u32(buf, buf.size() - 4))
    throw CheckpointError("checkpoint checksum mismatch: " + path);

  Discriminator d;
  std::size_t off = 12 + kShapeTable.size() * 8;
  for (int i = 0; i < kParamCount; ++i, off += 8) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + b])) << (8 * b);
    std::memcpy(&d.params_[i], &bits, 8);
  }
  return d;
}

}  // namespace implan
