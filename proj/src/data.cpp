#include "ccldc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include "ccldc/errors.hpp"
#include "ccldc/rng.hpp"

namespace ccldc {

std::vector<int> Dataset::classes() const {
  std::set<int> seen;
  for (const Example& e : examples) seen.insert(e.label);
  return {seen.begin(), seen.end()};
}

Dataset Dataset::subset(std::span<const int> labels) const {
  Dataset out;
  out.shape = shape;
  for (const Example& e : examples) {
    if (std::find(labels.begin(), labels.end(), e.label) != labels.end()) out.examples.push_back(e);
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (classes < 1) throw ConfigError("synthetic.classes must be >= 1");
  if (train_per_class < 1) throw ConfigError("synthetic.train_per_class must be >= 1");
  if (test_per_class < 1) throw ConfigError("synthetic.test_per_class must be >= 1");
  if (shape.channels < 1 || shape.height < 1 || shape.width < 1) {
    throw ConfigError("synthetic image extents must be >= 1");
  }
  if (!(noise >= 0.0)) throw ConfigError("synthetic.noise must be >= 0");
  if (grid < 2) throw ConfigError("synthetic.grid must be >= 2");
}

namespace {

// Stream ids for the independent random streams of the generator.
constexpr std::uint64_t kTemplateStream = 1;
constexpr std::uint64_t kTrainNoiseStream = 2;
constexpr std::uint64_t kTestNoiseStream = 3;

double bilinear(const std::vector<double>& grid, std::size_t g, double gy, double gx) {
  const auto y0 = std::min(static_cast<std::size_t>(gy), g - 2);
  const auto x0 = std::min(static_cast<std::size_t>(gx), g - 2);
  const double fy = gy - static_cast<double>(y0), fx = gx - static_cast<double>(x0);
  const double a = grid[y0 * g + x0], b = grid[y0 * g + x0 + 1];
  const double c = grid[(y0 + 1) * g + x0], d = grid[(y0 + 1) * g + x0 + 1];
  return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
}

Dataset noisy_copies(const SyntheticSpec& spec, const std::vector<Image>& templates,
                     std::size_t per_class, std::uint64_t stream) {
  Rng rng(spec.seed, stream);
  Dataset out;
  out.shape = spec.shape;
  out.examples.reserve(templates.size() * per_class);
  for (std::size_t k = 0; k < templates.size(); ++k) {
    for (std::size_t n = 0; n < per_class; ++n) {
      Image img = templates[k];
      if (spec.noise > 0.0) {
        for (double& p : img.pixels) p += spec.noise * rng.normal();
        clamp_unit(img);
      }
      out.examples.push_back({std::move(img), static_cast<int>(k)});
    }
  }
  return out;
}

}  // namespace

Image class_template(const SyntheticSpec& spec, int label) {
  Rng rng(derive_seed(spec.seed, kTemplateStream), static_cast<std::uint64_t>(label));
  const std::size_t g = spec.grid;
  Image img(spec.shape);
  for (std::size_t c = 0; c < spec.shape.channels; ++c) {
    std::vector<double> grid(g * g);
    for (double& v : grid) v = rng.uniform();
    const double sy = spec.shape.height > 1
                          ? static_cast<double>(g - 1) / static_cast<double>(spec.shape.height - 1)
                          : 0.0;
    const double sx = spec.shape.width > 1
                          ? static_cast<double>(g - 1) / static_cast<double>(spec.shape.width - 1)
                          : 0.0;
    for (std::size_t y = 0; y < spec.shape.height; ++y) {
      for (std::size_t x = 0; x < spec.shape.width; ++x) {
        img.at(c, y, x) = bilinear(grid, g, static_cast<double>(y) * sy, static_cast<double>(x) * sx);
      }
    }
  }
  return img;
}

LabeledSplit gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<Image> templates;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    templates.push_back(class_template(spec, static_cast<int>(k)));
  }
  return {noisy_copies(spec, templates, spec.train_per_class, kTrainNoiseStream),
          noisy_copies(spec, templates, spec.test_per_class, kTestNoiseStream)};
}

Tensor stack_images(std::span<const Image> images) {
  if (images.empty()) throw DimensionError("stack_images: no images");
  const ImageShape shape = images.front().shape;
  std::vector<double> values;
  values.reserve(images.size() * shape.size());
  for (const Image& img : images) {
    if (img.shape != shape) throw DimensionError("stack_images: mixed image shapes");
    values.insert(values.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor::from_values({images.size(), shape.size()}, std::move(values));
}

Tensor stack_examples(std::span<const Example> examples) {
  std::vector<Image> images;
  images.reserve(examples.size());
  for (const Example& e : examples) images.push_back(e.image);
  return stack_images(images);
}

std::vector<int> labels_of(std::span<const Example> examples) {
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const Example& e : examples) labels.push_back(e.label);
  return labels;
}

// ---- IDX -------------------------------------------------------------------

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path, const char* what) {
  if (offset + 4 > bytes.size()) {
    throw ParseError(path.string() + ": truncated at byte " + std::to_string(offset) +
                     " while reading " + what + " (file has " + std::to_string(bytes.size()) +
                     " bytes)");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void check_magic(std::uint32_t found, std::uint32_t expected, const std::filesystem::path& path) {
  if (found != expected) {
    throw ParseError(path.string() + ": bad magic at byte 0: expected " + hex32(expected) +
                     ", found " + hex32(found));
  }
}

void check_payload(std::size_t offset, std::size_t need, std::size_t have,
                   const std::filesystem::path& path) {
  if (have - offset < need) {
    throw ParseError(path.string() + ": truncated payload at byte " + std::to_string(have) +
                     ": expected " + std::to_string(need) + " bytes from byte " +
                     std::to_string(offset));
  }
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_all(images);
  check_magic(read_be32(ib, 0, images, "magic"), kImageMagic, images);
  const std::size_t n = read_be32(ib, 4, images, "image count");
  const std::size_t rows = read_be32(ib, 8, images, "row count");
  const std::size_t cols = read_be32(ib, 12, images, "column count");
  const std::size_t pixels = rows * cols;
  check_payload(16, n * pixels, ib.size(), images);

  const auto lb = read_all(labels);
  check_magic(read_be32(lb, 0, labels, "magic"), kLabelMagic, labels);
  const std::size_t m = read_be32(lb, 4, labels, "label count");
  if (m != n) {
    throw ParseError(labels.string() + ": count mismatch at byte 4: " + std::to_string(m) +
                     " labels for " + std::to_string(n) + " images");
  }
  check_payload(8, n, lb.size(), labels);

  Dataset out;
  out.shape = {1, rows, cols};
  out.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Image img(out.shape);
    const unsigned char* src = ib.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) img.pixels[p] = static_cast<double>(src[p]) / 255.0;
    out.examples.push_back({std::move(img), static_cast<int>(lb[8 + i])});
  }
  return out;
}

void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  if (data.shape.channels != 1) throw ParameterError("write_idx: only single-channel images");
  std::ofstream io(images, std::ios::binary);
  std::ofstream lo(labels, std::ios::binary);
  if (!io) throw Error("cannot open " + images.string() + " for writing");
  if (!lo) throw Error("cannot open " + labels.string() + " for writing");
  const auto n = static_cast<std::uint32_t>(data.size());
  put_be32(io, kImageMagic);
  put_be32(io, n);
  put_be32(io, static_cast<std::uint32_t>(data.shape.height));
  put_be32(io, static_cast<std::uint32_t>(data.shape.width));
  put_be32(lo, kLabelMagic);
  put_be32(lo, n);
  std::vector<char> buf;
  for (const Example& e : data.examples) {
    if (e.label < 0 || e.label > 255) {
      throw ParameterError("write_idx: label " + std::to_string(e.label) + " does not fit in u8");
    }
    buf.resize(e.image.pixels.size());
    for (std::size_t p = 0; p < buf.size(); ++p) {
      const double v = std::clamp(e.image.pixels[p], 0.0, 1.0);
      buf[p] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    io.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    lo.put(static_cast<char>(static_cast<unsigned char>(e.label)));
  }
  if (!io || !lo) throw Error("failed writing IDX files");
}

}  // namespace ccldc
