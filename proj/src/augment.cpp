#include "ccldc/augment.hpp"

#include <algorithm>
#include <cmath>

#include "ccldc/errors.hpp"

namespace ccldc {

Image::Image(ImageShape s, std::vector<double> values) : shape(s), pixels(std::move(values)) {
  if (pixels.size() != shape.size()) {
    throw DimensionError("image: " + std::to_string(pixels.size()) + " values for " +
                         std::to_string(shape.channels) + "x" + std::to_string(shape.height) + "x" +
                         std::to_string(shape.width));
  }
}

void clamp_unit(Image& img) {
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
}

// ---- geometric -------------------------------------------------------------

namespace {

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  if (i < 0) i = -i;
  if (i > last) i = 2 * last - i;
  return static_cast<std::size_t>(i);
}

// Luma weights used by the grayscale, contrast and saturation ops.
double luma(const Image& x, std::size_t y, std::size_t col) {
  if (x.shape.channels < 3) return x.at(0, y, col);
  return 0.299 * x.at(0, y, col) + 0.587 * x.at(1, y, col) + 0.114 * x.at(2, y, col);
}

double mean_luma(const Image& x) {
  double s = 0.0;
  for (std::size_t y = 0; y < x.shape.height; ++y) {
    for (std::size_t c = 0; c < x.shape.width; ++c) s += luma(x, y, c);
  }
  return s / static_cast<double>(x.shape.height * x.shape.width);
}

}  // namespace

GeometricDraw sample_geometric(const GeometricConfig& cfg, Rng& rng) {
  GeometricDraw d;
  d.crop = rng.bernoulli(cfg.crop_prob);
  if (d.crop) {
    d.offset_y = rng.index(2 * cfg.pad + 1);
    d.offset_x = rng.index(2 * cfg.pad + 1);
  }
  d.flip = rng.bernoulli(cfg.flip_prob);
  return d;
}

Image apply_geometric(const Image& x, const GeometricConfig& cfg, const GeometricDraw& draw) {
  const ImageShape s = x.shape;
  if (s.height <= cfg.pad || s.width <= cfg.pad) {
    throw ConfigError("geometric distortion: image " + std::to_string(s.height) + "x" +
                      std::to_string(s.width) + " too small for reflect padding " +
                      std::to_string(cfg.pad));
  }
  Image out = x;
  if (draw.crop) {
    if (draw.offset_y > 2 * cfg.pad || draw.offset_x > 2 * cfg.pad) {
      throw ContractError("geometric distortion: crop offset outside the padded image");
    }
    const auto pad = static_cast<std::ptrdiff_t>(cfg.pad);
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t y = 0; y < s.height; ++y) {
        const std::size_t sy =
            reflect(static_cast<std::ptrdiff_t>(y + draw.offset_y) - pad, s.height);
        for (std::size_t col = 0; col < s.width; ++col) {
          const std::size_t sx =
              reflect(static_cast<std::ptrdiff_t>(col + draw.offset_x) - pad, s.width);
          out.at(c, y, col) = x.at(c, sy, sx);
        }
      }
    }
  }
  if (draw.flip) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t y = 0; y < s.height; ++y) {
        double* row = &out.at(c, y, 0);
        std::reverse(row, row + s.width);
      }
    }
  }
  return out;
}

Image geometric_distort(const Image& x, const GeometricConfig& cfg, Rng& rng) {
  return apply_geometric(x, cfg, sample_geometric(cfg, rng));
}

// ---- RandAugment -----------------------------------------------------------

std::string_view to_string(AugOp op) {
  switch (op) {
    case AugOp::invert: return "invert";
    case AugOp::brightness: return "brightness";
    case AugOp::contrast: return "contrast";
    case AugOp::translate_x: return "translate_x";
    case AugOp::translate_y: return "translate_y";
    case AugOp::cutout: return "cutout";
    case AugOp::gaussian_noise: return "gaussian_noise";
  }
  return "unknown";
}

AugOp aug_op_from_string(std::string_view name) {
  for (AugOp op : all_aug_ops()) {
    if (to_string(op) == name) return op;
  }
  throw ConfigError("unknown augmentation op '" + std::string(name) + "'");
}

std::vector<AugOp> all_aug_ops() {
  return {AugOp::invert,      AugOp::brightness, AugOp::contrast,      AugOp::translate_x,
          AugOp::translate_y, AugOp::cutout,     AugOp::gaussian_noise};
}

void AugPolicy::validate() const {
  if (magnitude < 0 || magnitude > kMaxMagnitude) {
    throw ConfigError("augmentation magnitude must be in [0, 30], got " + std::to_string(magnitude));
  }
  if (n_ops > 0 && op_set.empty()) {
    throw ConfigError("augmentation op_set is empty but n_ops = " + std::to_string(n_ops));
  }
}

std::size_t translate_pixels(std::size_t extent, int magnitude) {
  return static_cast<std::size_t>(
      std::lround(0.3 * static_cast<double>(extent) * magnitude / kMaxMagnitude));
}

std::size_t cutout_side(const ImageShape& shape, int magnitude) {
  const double extent = static_cast<double>(std::min(shape.height, shape.width));
  return static_cast<std::size_t>(std::lround(0.5 * extent * magnitude / kMaxMagnitude));
}

double noise_sigma(int magnitude) { return 0.3 * magnitude / kMaxMagnitude; }

double photometric_factor(int magnitude, double sign) {
  return 1.0 + sign * 0.9 * magnitude / kMaxMagnitude;
}

std::vector<OpDraw> sample_rand_augment(const AugPolicy& policy, Rng& rng) {
  policy.validate();
  std::vector<OpDraw> draws(policy.n_ops);
  for (OpDraw& d : draws) {
    d.op = policy.op_set[rng.index(policy.op_set.size())];
    d.sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    d.u = rng.uniform();
    d.v = rng.uniform();
    d.noise_seed = rng.next_u64();
  }
  return draws;
}

namespace {

Image translate(const Image& x, std::ptrdiff_t dy, std::ptrdiff_t dx) {
  Image out(x.shape, 0.0);
  const auto h = static_cast<std::ptrdiff_t>(x.shape.height);
  const auto w = static_cast<std::ptrdiff_t>(x.shape.width);
  for (std::size_t c = 0; c < x.shape.channels; ++c) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      const std::ptrdiff_t sy = y - dy;
      if (sy < 0 || sy >= h) continue;
      for (std::ptrdiff_t col = 0; col < w; ++col) {
        const std::ptrdiff_t sx = col - dx;
        if (sx < 0 || sx >= w) continue;
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(col)) =
            x.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
    }
  }
  return out;
}

Image cutout(const Image& x, std::size_t side, double u, double v) {
  Image out = x;
  if (side == 0) return out;
  const auto h = static_cast<std::ptrdiff_t>(x.shape.height);
  const auto w = static_cast<std::ptrdiff_t>(x.shape.width);
  const auto cy = static_cast<std::ptrdiff_t>(u * static_cast<double>(h));
  const auto cx = static_cast<std::ptrdiff_t>(v * static_cast<double>(w));
  const auto half = static_cast<std::ptrdiff_t>(side / 2);
  const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, cy - half);
  const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(h, cy - half + static_cast<std::ptrdiff_t>(side));
  const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, cx - half);
  const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, cx - half + static_cast<std::ptrdiff_t>(side));
  for (std::size_t c = 0; c < x.shape.channels; ++c) {
    for (std::ptrdiff_t y = y0; y < y1; ++y) {
      for (std::ptrdiff_t col = x0; col < x1; ++col) {
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(col)) = 0.0;
      }
    }
  }
  return out;
}

}  // namespace

Image apply_op(const Image& x, const OpDraw& d, int magnitude) {
  Image out;
  switch (d.op) {
    case AugOp::invert:
      out = x;
      for (double& p : out.pixels) p = 1.0 - p;
      break;
    case AugOp::brightness:
      out = adjust_brightness(x, photometric_factor(magnitude, d.sign));
      break;
    case AugOp::contrast:
      out = adjust_contrast(x, photometric_factor(magnitude, d.sign));
      break;
    case AugOp::translate_x: {
      const auto s = static_cast<std::ptrdiff_t>(translate_pixels(x.shape.width, magnitude));
      out = translate(x, 0, d.sign > 0 ? s : -s);
      break;
    }
    case AugOp::translate_y: {
      const auto s = static_cast<std::ptrdiff_t>(translate_pixels(x.shape.height, magnitude));
      out = translate(x, d.sign > 0 ? s : -s, 0);
      break;
    }
    case AugOp::cutout:
      out = cutout(x, cutout_side(x.shape, magnitude), d.u, d.v);
      break;
    case AugOp::gaussian_noise: {
      out = x;
      const double sigma = noise_sigma(magnitude);
      Rng noise(d.noise_seed);
      for (double& p : out.pixels) p = p + sigma * noise.normal();
      break;
    }
  }
  clamp_unit(out);
  return out;
}

Image apply_rand_augment(const Image& x, const std::vector<OpDraw>& draws, int magnitude) {
  Image out = x;
  for (const OpDraw& d : draws) out = apply_op(out, d, magnitude);
  return out;
}

Image rand_augment(const Image& x, const AugPolicy& policy, Rng& rng) {
  return apply_rand_augment(x, sample_rand_augment(policy, rng), policy.magnitude);
}

// ---- chain -----------------------------------------------------------------

void ChainConfig::validate() const {
  policy.validate();
  if (geometric.crop_prob < 0.0 || geometric.crop_prob > 1.0 || geometric.flip_prob < 0.0 ||
      geometric.flip_prob > 1.0) {
    throw ConfigError("chain: geometric probabilities must lie in [0, 1]");
  }
}

std::vector<Image> build_chain(const Image& x, const ChainConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<Image> chain;
  chain.reserve(cfg.stages + 1);
  chain.push_back(x);
  for (std::size_t i = 1; i <= cfg.stages; ++i) {
    if (i == 1) {
      chain.push_back(geometric_distort(chain.back(), cfg.geometric, rng));
    } else {
      chain.push_back(rand_augment(chain.back(), cfg.policy, rng));
    }
  }
  return chain;
}

// ---- baseline strategies ---------------------------------------------------

std::string_view to_string(AugStrategy s) {
  switch (s) {
    case AugStrategy::none: return "none";
    case AugStrategy::partial: return "partial";
    case AugStrategy::full: return "full";
  }
  return "unknown";
}

AugStrategy aug_strategy_from_string(std::string_view name) {
  if (name == "none") return AugStrategy::none;
  if (name == "partial") return AugStrategy::partial;
  if (name == "full") return AugStrategy::full;
  throw ConfigError("unknown augmentation strategy '" + std::string(name) +
                    "' (expected none, partial or full)");
}

Image adjust_brightness(const Image& x, double factor) {
  Image out = x;
  for (double& p : out.pixels) p = p * factor;
  clamp_unit(out);
  return out;
}

Image adjust_contrast(const Image& x, double factor) {
  const double mu = mean_luma(x);
  Image out = x;
  for (double& p : out.pixels) p = mu + factor * (p - mu);
  clamp_unit(out);
  return out;
}

Image adjust_saturation(const Image& x, double factor) {
  if (x.shape.channels < 3) return x;
  Image out = x;
  for (std::size_t y = 0; y < x.shape.height; ++y) {
    for (std::size_t col = 0; col < x.shape.width; ++col) {
      const double l = luma(x, y, col);
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, col) = l + factor * (x.at(c, y, col) - l);
    }
  }
  clamp_unit(out);
  return out;
}

Image adjust_hue(const Image& x, double shift) {
  if (x.shape.channels < 3 || shift == 0.0) return x;
  Image out = x;
  for (std::size_t y = 0; y < x.shape.height; ++y) {
    for (std::size_t col = 0; col < x.shape.width; ++col) {
      const double r = x.at(0, y, col), g = x.at(1, y, col), b = x.at(2, y, col);
      const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
      const double delta = mx - mn;
      double h = 0.0;
      if (delta > 0.0) {
        if (mx == r) {
          h = std::fmod((g - b) / delta, 6.0);
        } else if (mx == g) {
          h = (b - r) / delta + 2.0;
        } else {
          h = (r - g) / delta + 4.0;
        }
        h /= 6.0;
      }
      const double s = mx > 0.0 ? delta / mx : 0.0;
      const double v = mx;
      h = std::fmod(h + shift, 1.0);
      if (h < 0.0) h += 1.0;
      const double hh = h * 6.0;
      const auto sector = static_cast<int>(std::floor(hh)) % 6;
      const double f = hh - std::floor(hh);
      const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
      double rgb[3];
      switch (sector) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
      }
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, col) = rgb[c];
    }
  }
  clamp_unit(out);
  return out;
}

Image to_grayscale(const Image& x) {
  if (x.shape.channels < 3) return x;
  Image out = x;
  for (std::size_t y = 0; y < x.shape.height; ++y) {
    for (std::size_t col = 0; col < x.shape.width; ++col) {
      const double l = luma(x, y, col);
      for (std::size_t c = 0; c < x.shape.channels; ++c) out.at(c, y, col) = l;
    }
  }
  clamp_unit(out);
  return out;
}

JitterDraw sample_jitter(Rng& rng) {
  JitterDraw d;
  d.jitter = rng.bernoulli(0.8);
  if (d.jitter) {
    d.brightness = rng.uniform(0.6, 1.4);
    d.contrast = rng.uniform(0.6, 1.4);
    d.saturation = rng.uniform(0.6, 1.4);
    d.hue = rng.uniform(-0.1, 0.1);
  }
  d.grayscale = rng.bernoulli(0.2);
  return d;
}

Image apply_jitter(const Image& x, const JitterDraw& d) {
  Image out = x;
  if (d.jitter) {
    out = adjust_brightness(out, d.brightness);
    out = adjust_contrast(out, d.contrast);
    out = adjust_saturation(out, d.saturation);
    out = adjust_hue(out, d.hue);
  }
  if (d.grayscale) out = to_grayscale(out);
  return out;
}

Image baseline_augment(const Image& x, AugStrategy strategy, const GeometricConfig& cfg, Rng& rng) {
  switch (strategy) {
    case AugStrategy::none:
      return x;
    case AugStrategy::partial:
      return geometric_distort(x, cfg, rng);
    case AugStrategy::full: {
      Image out = geometric_distort(x, cfg, rng);
      return apply_jitter(out, sample_jitter(rng));
    }
  }
  return x;
}

}  // namespace ccldc
