#include "bitsearch/dataset.hpp"

#include "bitsearch/error.hpp"
#include "bitsearch/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <iterator>

namespace bitsearch {

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unknown";
}

Shape Dataset::feature_shape() const {
  if (inputs.rank() == 0) return {};
  return Shape(inputs.shape().begin() + 1, inputs.shape().end());
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  Dataset out;
  out.inputs = inputs.slice_rows(first, count);
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                    labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.num_classes = num_classes;
  out.split = split;
  return out;
}

Dataset Dataset::with_split(Split s) const {
  Dataset out = *this;
  out.split = s;
  return out;
}

void Dataset::validate() const {
  if (inputs.rank() == 0 || inputs.dim(0) != labels.size()) {
    throw CountMismatchError(fmt::format("{} inputs but {} labels", inputs.rank() ? inputs.dim(0) : 0, labels.size()));
  }
  if (num_classes < 2) throw DatasetError("a dataset needs at least two classes");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DatasetError(fmt::format("label {} outside [0, {})", y, num_classes));
    }
  }
}

Tensor gather_rows(const Tensor& inputs, std::span<const std::size_t> indices) {
  const std::size_t row = inputs.dim(0) ? inputs.size() / inputs.dim(0) : 0;
  Shape shape = inputs.shape();
  shape[0] = indices.size();
  std::vector<double> data(indices.size() * row);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = inputs.data().subspan(indices[i] * row, row);
    std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  return Tensor(std::move(shape), std::move(data));
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(fmt::format("cannot open '{}'", path.string()));
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) {
    throw TruncatedFileError(fmt::format("'{}' ends inside its header", path.string()));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);

  const std::uint32_t img_magic = read_be32(img, 0, images);
  if (img_magic != kIdxImagesMagic) {
    throw BadMagicError(fmt::format("'{}': magic {:#010x}, expected {:#010x}", images.string(), img_magic, kIdxImagesMagic));
  }
  const std::uint32_t lab_magic = read_be32(lab, 0, labels);
  if (lab_magic != kIdxLabelsMagic) {
    throw BadMagicError(fmt::format("'{}': magic {:#010x}, expected {:#010x}", labels.string(), lab_magic, kIdxLabelsMagic));
  }
  const std::size_t n_images = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t n_labels = read_be32(lab, 4, labels);
  if (n_images != n_labels) {
    throw CountMismatchError(fmt::format("{} images in '{}' but {} labels in '{}'", n_images, images.string(), n_labels,
                                         labels.string()));
  }
  const std::size_t pixels = n_images * rows * cols;
  if (img.size() < 16 + pixels) {
    throw TruncatedFileError(fmt::format("'{}' holds {} pixel bytes, header promises {}", images.string(),
                                         img.size() - 16, pixels));
  }
  if (lab.size() < 8 + n_labels) {
    throw TruncatedFileError(fmt::format("'{}' holds {} labels, header promises {}", labels.string(), lab.size() - 8,
                                         n_labels));
  }

  Dataset data;
  data.split = split;
  std::vector<double> values(pixels);
  for (std::size_t i = 0; i < pixels; ++i) values[i] = static_cast<double>(img[16 + i]) / 255.0;
  data.inputs = Tensor({n_images, 1, rows, cols}, std::move(values));
  data.labels.resize(n_labels);
  int max_label = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    data.labels[i] = lab[8 + i];
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  return data;
}

void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
  const Shape f = data.feature_shape();
  std::size_t rows = 0, cols = 0;
  if (f.size() == 3 && f[0] == 1) {
    rows = f[1];
    cols = f[2];
  } else if (f.size() == 2) {
    rows = f[0];
    cols = f[1];
  } else {
    throw DimensionError(fmt::format("IDX images need {{1,H,W}} or {{H,W}} features, got {}", shape_to_string(f)));
  }
  std::ofstream img(images, std::ios::binary | std::ios::trunc);
  std::ofstream lab(labels, std::ios::binary | std::ios::trunc);
  if (!img || !lab) throw DatasetError("cannot open IDX output files");
  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : data.inputs.data()) {
    img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::blobs: return "blobs";
    case SynthKind::moons: return "moons";
    case SynthKind::glyphs: return "glyphs";
  }
  return "unknown";
}

SynthKind parse_synth_kind(const std::string& text) {
  if (text == "blobs") return SynthKind::blobs;
  if (text == "moons") return SynthKind::moons;
  if (text == "glyphs") return SynthKind::glyphs;
  throw Error(fmt::format("unknown synthetic dataset '{}'", text));
}

namespace {

constexpr std::size_t kGlyphSize = 12;
constexpr std::size_t kGlyphClasses = 10;
constexpr double kPi = 3.14159265358979323846;

Dataset make_blobs(std::size_t n, Rng& rng, const SynthOptions& opt) {
  if (opt.classes < 2 || opt.dims < 1) throw DatasetError("blobs need >= 2 classes and >= 1 dimension");
  // Class centers on a circle (first two axes) so every pair is at least
  // `separation` apart.
  const double k = static_cast<double>(opt.classes);
  const double radius = opt.separation / (2.0 * std::sin(kPi / k));
  std::vector<double> values(n * opt.dims);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<int>(i % opt.classes);
    labels[i] = c;
    const double angle = 2.0 * kPi * static_cast<double>(c) / k;
    for (std::size_t d = 0; d < opt.dims; ++d) {
      double center = 0.0;
      if (d == 0) center = radius * std::cos(angle);
      if (d == 1) center = radius * std::sin(angle);
      values[i * opt.dims + d] = center + rng.normal();
    }
  }
  Dataset out;
  out.inputs = Tensor({n, opt.dims}, std::move(values));
  out.labels = std::move(labels);
  out.num_classes = opt.classes;
  return out;
}

Dataset make_moons(std::size_t n, Rng& rng, const SynthOptions& opt) {
  std::vector<double> values(n * 2);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    const double t = rng.uniform(0.0, kPi);
    double x = std::cos(t), y = std::sin(t);
    if (c == 1) {
      x = 1.0 - x;
      y = 0.5 - y;
    }
    values[2 * i] = x + opt.noise * rng.normal();
    values[2 * i + 1] = y + opt.noise * rng.normal();
    labels[i] = c;
  }
  Dataset out;
  out.inputs = Tensor({n, 2}, std::move(values));
  out.labels = std::move(labels);
  out.num_classes = 2;
  return out;
}

using Canvas = std::array<double, kGlyphSize * kGlyphSize>;

void draw_line(Canvas& canvas, double x0, double y0, double x1, double y1) {
  const int steps = 24;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const auto x = static_cast<long>(std::lround(x0 + t * (x1 - x0)));
    const auto y = static_cast<long>(std::lround(y0 + t * (y1 - y0)));
    if (x >= 0 && y >= 0 && x < static_cast<long>(kGlyphSize) && y < static_cast<long>(kGlyphSize)) {
      canvas[static_cast<std::size_t>(y) * kGlyphSize + static_cast<std::size_t>(x)] = 1.0;
    }
  }
}

// Ten class prototypes, each three random strokes inside the central 8x8
// area so shifted copies stay on the canvas.
std::array<Canvas, kGlyphClasses> glyph_prototypes(std::uint64_t seed) {
  Rng rng(seed);
  std::array<Canvas, kGlyphClasses> protos{};
  for (auto& canvas : protos) {
    canvas.fill(0.0);
    for (int stroke = 0; stroke < 3; ++stroke) {
      const double x0 = rng.uniform(2.0, 9.0), y0 = rng.uniform(2.0, 9.0);
      const double x1 = rng.uniform(2.0, 9.0), y1 = rng.uniform(2.0, 9.0);
      draw_line(canvas, x0, y0, x1, y1);
    }
  }
  return protos;
}

Dataset make_glyphs(std::size_t n, Rng& rng, const SynthOptions& opt) {
  const auto protos = glyph_prototypes(opt.prototype_seed);
  constexpr std::size_t pixels = kGlyphSize * kGlyphSize;
  std::vector<double> values(n * pixels);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = i % kGlyphClasses;
    labels[i] = static_cast<int>(c);
    const long dx = static_cast<long>(rng.below(3)) - 1;
    const long dy = static_cast<long>(rng.below(3)) - 1;
    const double intensity = rng.uniform(0.6, 1.0);
    double* out = values.data() + i * pixels;
    for (long y = 0; y < static_cast<long>(kGlyphSize); ++y) {
      for (long x = 0; x < static_cast<long>(kGlyphSize); ++x) {
        const long sx = x - dx, sy = y - dy;
        double v = 0.0;
        if (sx >= 0 && sy >= 0 && sx < static_cast<long>(kGlyphSize) && sy < static_cast<long>(kGlyphSize)) {
          v = protos[c][static_cast<std::size_t>(sy) * kGlyphSize + static_cast<std::size_t>(sx)] * intensity;
        }
        // Randomly erase stroke pixels and add background noise.
        if (v > 0.0 && rng.uniform() < 0.15) v = 0.0;
        v += opt.noise * rng.normal();
        out[static_cast<std::size_t>(y) * kGlyphSize + static_cast<std::size_t>(x)] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  Dataset out;
  out.inputs = Tensor({n, 1, kGlyphSize, kGlyphSize}, std::move(values));
  out.labels = std::move(labels);
  out.num_classes = kGlyphClasses;
  return out;
}

}  // namespace

Dataset synth_dataset(SynthKind kind, std::size_t n, std::uint64_t seed, const SynthOptions& options, Split split) {
  if (n < 2) throw DatasetError("synthetic datasets need at least two items");
  Rng rng(seed);
  Dataset out;
  switch (kind) {
    case SynthKind::blobs: out = make_blobs(n, rng, options); break;
    case SynthKind::moons: out = make_moons(n, rng, options); break;
    case SynthKind::glyphs: out = make_glyphs(n, rng, options); break;
  }
  out.split = split;
  return out;
}

}  // namespace bitsearch
