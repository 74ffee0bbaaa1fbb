#include "ccldc/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ccldc/errors.hpp"
#include "ccldc/kernels.hpp"
#include "ccldc/rng.hpp"

namespace ccldc {

void Architecture::validate() const {
  if (input_dim == 0) throw ConfigError("architecture: input_dim must be > 0");
  if (num_classes == 0) throw ConfigError("architecture: num_classes must be > 0");
  if (!std::isfinite(input_offset)) throw ConfigError("architecture: input_offset must be finite");
  if (!(std::isfinite(input_gain) && input_gain > 0.0)) {
    throw ConfigError("architecture: input_gain must be finite and > 0");
  }
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] == 0) {
      throw ConfigError("architecture: hidden[" + std::to_string(i) + "] must be > 0");
    }
  }
}

Network Network::init(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Network net;
  net.arch_ = arch;
  Rng rng(seed);
  std::vector<std::size_t> widths{arch.input_dim};
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.num_classes);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = stddev * rng.normal();
    net.layers_.push_back({Tensor::from_values({fan_in, fan_out}, std::move(w), true),
                           Tensor::zeros({fan_out}, true)});
  }
  return net;
}

Tensor Network::features(const Tensor& x) const {
  Tensor h = x.dim() == 2 ? x : flatten(x);
  if (h.cols() != arch_.input_dim) {
    throw DimensionError("network: input width " + std::to_string(h.cols()) + " does not match " +
                         std::to_string(arch_.input_dim));
  }
  if (arch_.input_gain != 1.0 || arch_.input_offset != 0.0) {
    const Tensor shift = Tensor::full({arch_.input_dim}, -arch_.input_gain * arch_.input_offset);
    h = add_row(scale(h, arch_.input_gain), shift);
  }
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    h = relu(add_row(matmul(h, layers_[l].weight), layers_[l].bias));
  }
  return h;
}

Tensor Network::head(const Tensor& features) const {
  const Linear& last = layers_.back();
  return add_row(matmul(features, last.weight), last.bias);
}

Tensor Network::forward(const Tensor& x) const { return head(features(x)); }

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> params;
  for (const Linear& l : layers_) {
    params.push_back(l.weight);
    params.push_back(l.bias);
  }
  return params;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& p : parameters()) n += p.size();
  return n;
}

std::vector<double> Network::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const Tensor& p : parameters()) flat.insert(flat.end(), p.values().begin(), p.values().end());
  return flat;
}

void Network::zero_grad() {
  for (Tensor& p : parameters()) p.zero_grad();
}

Network Network::clone() const {
  Network copy;
  copy.arch_ = arch_;
  for (const Linear& l : layers_) {
    auto dup = [](const Tensor& t) {
      return Tensor::from_values(t.shape(), {t.values().begin(), t.values().end()},
                                 t.requires_grad());
    };
    copy.layers_.push_back({dup(l.weight), dup(l.bias)});
  }
  return copy;
}

// ---- optimizer -------------------------------------------------------------

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("optimizer.lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer.momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optimizer.beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer.beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("optimizer.eps must be > 0");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

std::span<const double> Optimizer::velocity(std::size_t i) const {
  if (i >= first_.size()) throw StateError("optimizer: no state for parameter " + std::to_string(i));
  return first_[i];
}

void Optimizer::step(Network& net) {
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw StateError("optimizer step: parameter " + std::to_string(i) +
                       " has no gradient (call backward first)");
    }
  }
  if (first_.empty()) {
    for (const Tensor& p : params) {
      first_.emplace_back(p.size(), 0.0);
      second_.emplace_back(config_.kind == OptimizerKind::adamw ? p.size() : 0, 0.0);
    }
  } else if (first_.size() != params.size()) {
    throw StateError("optimizer step: network does not match optimizer state");
  }
  ++steps_;

  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> w = params[i].mutable_values();
    std::span<const double> g = params[i].grad();
    std::vector<double>& m = first_[i];
    if (config_.kind == OptimizerKind::sgd) {
      std::vector<double> d(g.begin(), g.end());
      if (config_.weight_decay != 0.0) kernels::axpy(config_.weight_decay, w, d);
      if (config_.momentum != 0.0) {
        if (steps_ == 1) {
          m = d;
        } else {
          kernels::scale(config_.momentum, m, m);
          kernels::add(m, d, m);
        }
        kernels::axpy(-config_.lr, m, w);
      } else {
        m = d;
        kernels::axpy(-config_.lr, d, w);
      }
    } else {
      std::vector<double>& v = second_[i];
      const double b1 = config_.beta1, b2 = config_.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
      for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] -= config_.lr * config_.weight_decay * w[j];
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        const double mh = m[j] / c1;
        const double vh = v[j] / c2;
        w[j] -= config_.lr * mh / (std::sqrt(vh) + config_.eps);
      }
    }
  }
}

// ---- peer pair / inference -------------------------------------------------

PeerPair PeerPair::create(const Architecture& arch, const OptimizerConfig& opt, std::uint64_t seed1,
                          std::uint64_t seed2) {
  return PeerPair{Network::init(arch, seed1), Network::init(arch, seed2), Optimizer(opt),
                  Optimizer(opt)};
}

Tensor ensemble_logits(const Tensor& logits1, const Tensor& logits2) {
  return scale(add(logits1, logits2), 0.5);
}

Tensor ensemble_logits(const PeerPair& pair, const Tensor& x) {
  return ensemble_logits(pair.model1.forward(x), pair.model2.forward(x));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  const auto v = logits.values();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = v.subspan(r * cols, cols);
    // max_element returns the first maximum.
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<int> predict(const Network& net, const Tensor& x) {
  NoGradGuard no_grad;
  return argmax_rows(net.forward(x));
}

std::vector<int> predict(const PeerPair& pair, const Tensor& x, PredictMode mode) {
  NoGradGuard no_grad;
  if (mode == PredictMode::independent) return argmax_rows(pair.model1.forward(x));
  return argmax_rows(ensemble_logits(pair, x));
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr std::array<char, 8> kCheckpointMagic{'C', 'C', 'L', 'D', 'C', 'P', '0', '1'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  std::array<char, sizeof(T)> bytes;
  const auto offset = in.tellg();
  if (!in.read(bytes.data(), sizeof(T))) {
    throw ParseError(path.string() + ": truncated checkpoint at byte " +
                     std::to_string(static_cast<long long>(offset)));
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  const auto params = net.parameters();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Tensor& p : params) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.dim()));
    for (std::size_t e : p.shape()) write_le<std::uint64_t>(out, e);
    for (double v : p.values()) write_le<double>(out, v);
  }
  if (!out) throw Error("failed writing " + path.string());
}

void load_checkpoint(Network& net, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw ParseError(path.string() + ": bad checkpoint magic at byte 0");
  }
  auto params = net.parameters();
  const auto count = read_le<std::uint32_t>(in, path);
  if (count != params.size()) {
    throw ParseError(path.string() + ": checkpoint holds " + std::to_string(count) +
                     " tensors, network has " + std::to_string(params.size()));
  }
  for (Tensor& p : params) {
    const auto rank = read_le<std::uint32_t>(in, path);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(read_le<std::uint64_t>(in, path));
    if (shape != p.shape()) {
      throw ParseError(path.string() + ": tensor shape " + shape_str(shape) + " does not match " +
                       shape_str(p.shape()));
    }
    for (double& v : p.mutable_values()) v = read_le<double>(in, path);
  }
}

}  // namespace ccldc
