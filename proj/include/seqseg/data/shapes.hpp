#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "seqseg/core/errors.hpp"
#include "seqseg/core/mask_ops.hpp"
#include "seqseg/core/types.hpp"

namespace seqseg::data {

enum class ShapeKind { circle = 0, square = 1, triangle = 2 };

inline const char* shape_name(int class_id) {
  static constexpr std::array<const char*, 3> names{"circle", "square", "triangle"};
  return class_id >= 0 && class_id < 3 ? names[class_id] : "unknown";
}

struct ShapesSpec {
  int height = 64;
  int width = 64;
  int classes = 3;
  int min_objects = 1;
  int max_objects = 4;
  double min_size = 0.2;  // shape extent as a fraction of min(height, width)
  double max_size = 0.45;
  double max_overlap = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (height < 8 || width < 8) throw ConfigError("shapes: image must be at least 8x8");
    if (classes < 1 || classes > 3) throw ConfigError("shapes: classes must be in [1, 3]");
    if (min_objects < 1 || max_objects < min_objects) throw ConfigError("shapes: need 1 <= min_objects <= max_objects");
    if (max_objects > 8) throw ConfigError("shapes: at most 8 objects (one palette color each)");
    if (!(min_size > 0 && min_size <= max_size && max_size < 1)) {
      throw ConfigError("shapes: size fractions must satisfy 0 < min_size <= max_size < 1");
    }
    if (!(max_overlap >= 0 && max_overlap < 1)) throw ConfigError("shapes: max_overlap must be in [0, 1)");
  }
};

struct DatasetRecord {
  ImageSample image;
  std::vector<GroundTruthInstance> instances;

  bool operator==(const DatasetRecord&) const = default;
};

inline constexpr int kMaxConsecutiveRejections = 1000;
inline constexpr long kMinVisibleArea = 4;

namespace detail {

struct Rgb {
  std::uint8_t r, g, b;
};

// Saturated colors, none close to the gray background range.
inline constexpr std::array<Rgb, 8> kPalette{{{230, 25, 75},
                                              {60, 180, 75},
                                              {255, 225, 25},
                                              {0, 130, 200},
                                              {245, 130, 48},
                                              {145, 30, 180},
                                              {70, 240, 240},
                                              {240, 50, 230}}};

struct Placed {
  int class_id;
  BinaryMask full;
  Rgb color;
};

/// Rasterizes a shape by testing pixel centers.
inline BinaryMask rasterize(ShapeKind kind, double cy, double cx, double size, int h, int w) {
  BinaryMask m(h, w);
  const double r = size / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double py = y + 0.5 - cy, px = x + 0.5 - cx;
      bool in = false;
      switch (kind) {
        case ShapeKind::circle: in = px * px + py * py <= r * r; break;
        case ShapeKind::square: in = std::abs(px) <= r && std::abs(py) <= r; break;
        case ShapeKind::triangle:
          // Apex up; the half-width shrinks linearly from r at the base to 0 at the apex.
          in = py >= -r && py <= r && std::abs(px) <= (py + r) / 2;
          break;
      }
      m.at(y, x) = in;
    }
  }
  return m;
}

/// Index of the topmost shape at each pixel (-1 for background), painting back to front.
inline std::vector<int> paint(const std::vector<Placed>& shapes, const BinaryMask* top, std::size_t plane) {
  std::vector<int> owner(plane, -1);
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    for (std::size_t p = 0; p < plane; ++p) {
      if (shapes[k].full.data[p]) owner[p] = static_cast<int>(k);
    }
  }
  if (top) {
    for (std::size_t p = 0; p < plane; ++p) {
      if (top->data[p]) owner[p] = static_cast<int>(shapes.size());
    }
  }
  return owner;
}

}  // namespace detail

/// One image of non-degenerate, possibly occluding shapes. Instances are listed back to front
/// and their masks are the visible regions.
inline DatasetRecord generate_sample(const ShapesSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const int h = spec.height, w = spec.width;
  const double extent = std::min(h, w);
  std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
  std::uniform_int_distribution<int> class_dist(0, spec.classes - 1);
  std::uniform_real_distribution<double> size_dist(spec.min_size * extent, spec.max_size * extent);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int n = count_dist(rng);
  std::vector<detail::Rgb> colors(detail::kPalette.begin(), detail::kPalette.end());
  std::shuffle(colors.begin(), colors.end(), rng);

  std::vector<detail::Placed> placed;
  int rejections = 0;
  while (static_cast<int>(placed.size()) < n) {
    const int cls = class_dist(rng);
    for (;;) {
      const double size = size_dist(rng);
      const double cy = size / 2 + unit(rng) * (h - size);
      const double cx = size / 2 + unit(rng) * (w - size);
      BinaryMask full = detail::rasterize(static_cast<ShapeKind>(cls), cy, cx, size, h, w);
      const long area = full.area();
      bool ok = area >= kMinVisibleArea;
      for (std::size_t k = 0; ok && k < placed.size(); ++k) {
        const long inter = intersection_area(full, placed[k].full);
        const long smaller = std::min(area, placed[k].full.area());
        ok = static_cast<double>(inter) <= spec.max_overlap * static_cast<double>(smaller);
      }
      if (ok) {
        // Visible areas after painting the new shape on top.
        std::vector<long> visible(placed.size() + 1, 0);
        for (int o : detail::paint(placed, &full, full.size())) {
          if (o >= 0) ++visible[o];
        }
        ok = *std::min_element(visible.begin(), visible.end()) >= kMinVisibleArea;
      }
      if (ok) {
        placed.push_back({cls, std::move(full), colors[placed.size() % colors.size()]});
        rejections = 0;
        break;
      }
      if (++rejections >= kMaxConsecutiveRejections) {
        throw GenerationError("shapes: " + std::to_string(kMaxConsecutiveRejections) +
                              " consecutive placements rejected; relax max_overlap or sizes");
      }
    }
  }

  DatasetRecord rec;
  const std::uint8_t bg = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(20, 110)(rng));
  rec.image.pixels = Tensor<float>(3, h, w, bg / 255.0f);
  const std::vector<int> owner = detail::paint(placed, nullptr, static_cast<std::size_t>(h) * w);
  for (std::size_t k = 0; k < placed.size(); ++k) {
    GroundTruthInstance gt;
    gt.mask = BinaryMask(h, w);
    for (std::size_t p = 0; p < owner.size(); ++p) gt.mask.data[p] = owner[p] == static_cast<int>(k);
    gt.box = box_from_mask(gt.mask);
    gt.class_id = placed[k].class_id;
    rec.instances.push_back(std::move(gt));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  float* px = rec.image.pixels.data();
  for (std::size_t p = 0; p < plane; ++p) {
    if (owner[p] < 0) continue;
    const auto& c = placed[owner[p]].color;
    px[p] = c.r / 255.0f;
    px[plane + p] = c.g / 255.0f;
    px[2 * plane + p] = c.b / 255.0f;
  }
  return rec;
}

/// Generator state for sample `index` under `spec.seed`; samples are independent of each other.
inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

inline DatasetRecord generate_sample(const ShapesSpec& spec, std::uint64_t index) {
  auto rng = sample_rng(spec.seed, index);
  return generate_sample(spec, rng);
}

}  // namespace seqseg::data
