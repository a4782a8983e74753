#pragma once

#include <array>
#include <string>
#include <vector>

#include "adls/core.hpp"
#include "adls/rng.hpp"

namespace adls {

enum class RgbMode { kFlatColorPerObject, kNone };

struct SynthSpec {
  int width = 160;
  int height = 120;
  int n_objects = 12;
  double depth_min = 2.0;
  double depth_max = 85.0;
  double gt_density = 0.5;
  RgbMode rgb_mode = RgbMode::kFlatColorPerObject;

  void validate() const;
};

/// A planar depth field over a rectangular, triangular, or full-image
/// (ground) footprint: depth(col, row) = base + gx*col + gy*row.
struct PlanarSurface {
  enum class Kind { kGround, kRectangle, kTriangle };
  Kind kind = Kind::kGround;
  double base = 0.0;
  double gx = 0.0;
  double gy = 0.0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // rectangle bounds, inclusive
  std::array<Pixel, 3> tri{};
  std::array<std::uint8_t, 3> color{};

  bool covers(int col, int row) const;
  double depth_at(int col, int row) const { return base + gx * col + gy * row; }
};

struct SceneGeometry {
  std::vector<PlanarSurface> surfaces;  // ground first, then objects
};

/// Piecewise-planar scene: a ground plane receding from bottom to top plus
/// random rectangles and triangles, composited front-most-wins. The GT mask
/// is per-pixel Bernoulli(gt_density). Deterministic given the rng stream.
Scene generate_scene(const SynthSpec& spec, const std::string& id, Rng& rng,
                     SceneGeometry* geometry = nullptr);

/// Nearest-measured-neighbor (L1) fill over the full grid; ties resolve to
/// the lowest row-major neighbor index.
DepthMap interpolation_oracle(const SampleMap& samples, int width, int height);

}  // namespace adls
