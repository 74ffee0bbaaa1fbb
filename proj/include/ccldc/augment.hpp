#pragma once

// Image augmentations: the geometric stage (reflect-pad random crop plus
// horizontal flip), a desk-scale RandAugment, the difficulty chain built from
// them, and the partial/full baseline strategies.
//
// Every random transform is split into sample_*() (consumes the Rng, returns a
// plain draw record) and apply_*() (pure function of image and draw), so tests
// can pin draws without faking a generator.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ccldc/rng.hpp"

namespace ccldc {

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

/// Channel-major (CHW) image with values in [0, 1].
struct Image {
  ImageShape shape;
  std::vector<double> pixels;

  Image() = default;
  Image(ImageShape s, double fill = 0.0) : shape(s), pixels(s.size(), fill) {}
  Image(ImageShape s, std::vector<double> values);

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * shape.height + y) * shape.width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * shape.height + y) * shape.width + x];
  }
  bool operator==(const Image&) const = default;
};

void clamp_unit(Image& img);

// ---- geometric stage -------------------------------------------------------

struct GeometricConfig {
  double crop_prob = 0.5;
  std::size_t pad = 4;
  double flip_prob = 0.5;
};

struct GeometricDraw {
  bool crop = false;
  std::size_t offset_y = 0;  // in [0, 2 * pad]
  std::size_t offset_x = 0;
  bool flip = false;
};

GeometricDraw sample_geometric(const GeometricConfig& cfg, Rng& rng);
/// Reflect-pad by cfg.pad and crop at the drawn offset (offset pad, pad is the
/// identity), then mirror horizontally if drawn. Throws ConfigError when an
/// image extent is not larger than the pad (reflection undefined).
Image apply_geometric(const Image& x, const GeometricConfig& cfg, const GeometricDraw& draw);
Image geometric_distort(const Image& x, const GeometricConfig& cfg, Rng& rng);

// ---- RandAugment -----------------------------------------------------------

enum class AugOp { invert, brightness, contrast, translate_x, translate_y, cutout, gaussian_noise };

std::string_view to_string(AugOp op);
AugOp aug_op_from_string(std::string_view name);
std::vector<AugOp> all_aug_ops();

inline constexpr int kMaxMagnitude = 30;

struct AugPolicy {
  std::size_t n_ops = 3;
  int magnitude = 15;
  std::vector<AugOp> op_set = all_aug_ops();

  void validate() const;
};

/// One sampled op. Every field is drawn for every op so the Rng advances by
/// the same amount regardless of which op was chosen.
struct OpDraw {
  AugOp op = AugOp::invert;
  double sign = 1.0;          // direction for brightness/contrast/translate
  double u = 0.0;             // cutout centre, row fraction
  double v = 0.0;             // cutout centre, column fraction
  std::uint64_t noise_seed = 0;
};

/// Magnitude mappings, M in [0, 30], m = M / 30:
///   brightness/contrast factor 1 +- 0.9 m
///   translate shift round(0.3 * extent * m) pixels, zero fill
///   cutout square side round(0.5 * min(h, w) * m), zero fill
///   gaussian noise sigma 0.3 m
std::size_t translate_pixels(std::size_t extent, int magnitude);
std::size_t cutout_side(const ImageShape& shape, int magnitude);
double noise_sigma(int magnitude);
double photometric_factor(int magnitude, double sign);

std::vector<OpDraw> sample_rand_augment(const AugPolicy& policy, Rng& rng);
Image apply_op(const Image& x, const OpDraw& draw, int magnitude);
Image apply_rand_augment(const Image& x, const std::vector<OpDraw>& draws, int magnitude);
Image rand_augment(const Image& x, const AugPolicy& policy, Rng& rng);

// ---- difficulty chain ------------------------------------------------------

struct ChainConfig {
  std::size_t stages = 3;
  GeometricConfig geometric;
  AugPolicy policy;

  void validate() const;
};

/// [X0, X1, ..., Xn]: X0 = x, X1 = geometric(X0), Xi = rand_augment(X(i-1)).
std::vector<Image> build_chain(const Image& x, const ChainConfig& cfg, Rng& rng);

// ---- baseline strategies ---------------------------------------------------

enum class AugStrategy { none, partial, full };

std::string_view to_string(AugStrategy s);
AugStrategy aug_strategy_from_string(std::string_view name);

struct JitterDraw {
  bool jitter = false;
  double brightness = 1.0;  // factor in [0.6, 1.4]
  double contrast = 1.0;    // factor in [0.6, 1.4]
  double saturation = 1.0;  // factor in [0.6, 1.4]
  double hue = 0.0;         // shift in [-0.1, 0.1] of a full turn
  bool grayscale = false;
};

/// Color jitter (0.4, 0.4, 0.4, 0.1) applied with p = 0.8, then grayscale with p = 0.2.
JitterDraw sample_jitter(Rng& rng);
Image apply_jitter(const Image& x, const JitterDraw& draw);

Image adjust_brightness(const Image& x, double factor);
Image adjust_contrast(const Image& x, double factor);
Image adjust_saturation(const Image& x, double factor);
Image adjust_hue(const Image& x, double shift);
Image to_grayscale(const Image& x);

/// none: identity. partial: geometric stage. full: geometric stage then jitter.
Image baseline_augment(const Image& x, AugStrategy strategy, const GeometricConfig& cfg, Rng& rng);

}  // namespace ccldc
