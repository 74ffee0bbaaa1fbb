#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ccldc/augment.hpp"
#include "ccldc/replay.hpp"
#include "ccldc/tensor.hpp"

namespace ccldc {

struct Dataset {
  ImageShape shape;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  /// Sorted distinct labels.
  std::vector<int> classes() const;
  /// Examples whose label is in `labels`, original order kept.
  Dataset subset(std::span<const int> labels) const;
};

struct LabeledSplit {
  Dataset train;
  Dataset test;
};

/// Class-template synthetic images. Each class owns a smooth random template
/// (a coarse uniform grid bilinearly upsampled to the image extent); every
/// example is clamp(template + N(0, noise^2)) per pixel.
struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 100;
  ImageShape shape{1, 12, 12};
  double noise = 0.15;
  std::size_t grid = 4;  // coarse template resolution per axis
  std::uint64_t seed = 0;

  void validate() const;
};

/// Train and test sets, class-major order. Deterministic in spec.seed.
LabeledSplit gen_synthetic(const SyntheticSpec& spec);
Image class_template(const SyntheticSpec& spec, int label);

/// Stacks images into a [n x (c*h*w)] tensor.
Tensor stack_images(std::span<const Image> images);
Tensor stack_examples(std::span<const Example> examples);
std::vector<int> labels_of(std::span<const Example> examples);

// IDX files: big-endian u32 magic (0x00000803 images, 0x00000801 labels),
// u32 dims, then u8 payload. Pixels map to [0, 1] by value / 255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Single-channel datasets only. Pixels quantize as round(clamp(v) * 255).
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels);

}  // namespace ccldc
