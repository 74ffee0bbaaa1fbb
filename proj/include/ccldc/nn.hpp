#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccldc/tensor.hpp"

namespace ccldc {

/// Multilayer perceptron description:
/// flatten -> x' = gain * (x - offset) -> [linear -> relu]* -> linear.
struct Architecture {
  std::size_t input_dim = 144;
  std::vector<std::size_t> hidden = {128, 64};
  std::size_t num_classes = 10;
  // [0, 1] pixels map to [-1, 1].
  double input_offset = 0.5;
  double input_gain = 2.0;

  void validate() const;
  /// Width of the penultimate representation returned by Network::features.
  std::size_t feature_dim() const { return hidden.empty() ? input_dim : hidden.back(); }
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

class Network {
 public:
  /// Kaiming-normal weights (std = sqrt(2 / fan_in)), zero biases.
  static Network init(const Architecture& arch, std::uint64_t seed);

  const Architecture& arch() const { return arch_; }

  /// Raw logits [batch x num_classes].
  Tensor forward(const Tensor& x) const;
  /// Penultimate activations [batch x feature_dim].
  Tensor features(const Tensor& x) const;
  /// Final linear layer applied to features.
  Tensor head(const Tensor& features) const;

  /// Parameters in checkpoint order: layer order, weight before bias.
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  /// All parameter values concatenated in checkpoint order.
  std::vector<double> flat_parameters() const;

  void zero_grad();
  /// Deep copy with separate parameter storage.
  Network clone() const;

  const std::vector<Linear>& layers() const { return layers_; }

 private:
  Architecture arch_;
  std::vector<Linear> layers_;
};

enum class OptimizerKind { sgd, adamw };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.05;
  double momentum = 0.0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Update rules:
///   sgd:   g' = g + wd*w;  v = momentum*v + g' (v = g' on the first step);  w -= lr*v
///   adamw: w -= lr*wd*w;  m, v moment estimates with bias correction;
///          w -= lr * m_hat / (sqrt(v_hat) + eps)
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// Applies one update to every parameter of net. Throws StateError when a
  /// parameter has no accumulated gradient.
  void step(Network& net);

  const OptimizerConfig& config() const { return config_; }
  /// Momentum buffer (sgd) or first moment (adamw) of parameter i.
  std::span<const double> velocity(std::size_t i) const;

 private:
  OptimizerConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

/// Two learners of one architecture with identical optimizer settings and
/// separate parameter storage.
struct PeerPair {
  Network model1;
  Network model2;
  Optimizer opt1;
  Optimizer opt2;

  static PeerPair create(const Architecture& arch, const OptimizerConfig& opt,
                         std::uint64_t seed1, std::uint64_t seed2);
};

/// Elementwise mean of the two logit matrices.
Tensor ensemble_logits(const Tensor& logits1, const Tensor& logits2);
Tensor ensemble_logits(const PeerPair& pair, const Tensor& x);

/// Row-wise argmax; ties resolve to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

enum class PredictMode { independent, ensemble };

std::vector<int> predict(const Network& net, const Tensor& x);
/// independent uses model1 only.
std::vector<int> predict(const PeerPair& pair, const Tensor& x, PredictMode mode);

// ---- checkpoints ----------------------------------------------------------
//
// Binary layout, little-endian:
//   char[8]  "CCLDCP01"
//   u32      tensor count
//   per tensor: u32 rank, u64 extents[rank], f64 values[prod(extents)]
// Tensors follow Network::parameters() order.

void save_checkpoint(const Network& net, const std::filesystem::path& path);
/// Loads values into an already-initialized network of matching architecture.
void load_checkpoint(Network& net, const std::filesystem::path& path);

}  // namespace ccldc
