#include "adls/synth.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "adls/features.hpp"
#include "adls/parallel.hpp"

namespace adls {

void SynthSpec::validate() const {
  if (width <= 0 || height <= 0)
    throw InvalidArgumentError("scene dimensions must be positive");
  if (n_objects < 0) throw InvalidArgumentError("n_objects must be >= 0");
  if (!(depth_min < depth_max) || depth_min < 0.0)
    throw InvalidArgumentError("need 0 <= depth_min < depth_max");
  if (!(gt_density > 0.0 && gt_density <= 1.0))
    throw InvalidArgumentError("gt_density must be in (0, 1]");
}

bool PlanarSurface::covers(int col, int row) const {
  switch (kind) {
    case Kind::kGround:
      return true;
    case Kind::kRectangle:
      return col >= x0 && col <= x1 && row >= y0 && row <= y1;
    case Kind::kTriangle: {
      auto cross = [](const Pixel& a, const Pixel& b, int col, int row) {
        return static_cast<long long>(b.col - a.col) * (row - a.row) -
               static_cast<long long>(b.row - a.row) * (col - a.col);
      };
      const long long d0 = cross(tri[0], tri[1], col, row);
      const long long d1 = cross(tri[1], tri[2], col, row);
      const long long d2 = cross(tri[2], tri[0], col, row);
      const bool has_neg = d0 < 0 || d1 < 0 || d2 < 0;
      const bool has_pos = d0 > 0 || d1 > 0 || d2 > 0;
      return !(has_neg && has_pos);
    }
  }
  return false;
}

namespace {

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c, g = x;
  } else if (hp < 2) {
    r = x, g = c;
  } else if (hp < 3) {
    g = c, b = x;
  } else if (hp < 4) {
    g = x, b = c;
  } else if (hp < 5) {
    r = x, b = c;
  } else {
    r = c, b = x;
  }
  const double m = v - c;
  auto to8 = [m](double q) {
    return static_cast<std::uint8_t>(std::clamp((q + m) * 255.0, 0.0, 255.0));
  };
  return {to8(r), to8(g), to8(b)};
}

// Saturated palette with golden-angle hue steps: object colors stay far
// apart, so object membership is sharply visible in color space.
std::array<std::uint8_t, 3> object_color(Rng& rng, double hue_offset,
                                         int index) {
  const double h = std::fmod(hue_offset + index * 137.508, 360.0);
  const double s = 0.7 + 0.3 * rng.real01();
  const double v = 0.7 + 0.3 * rng.real01();
  return hsv_to_rgb(h, s, v);
}

PlanarSurface make_ground(const SynthSpec& spec, Rng& rng) {
  PlanarSurface g;
  g.kind = PlanarSurface::Kind::kGround;
  // Near at the bottom row, far at the top.
  const double span = spec.depth_max - spec.depth_min;
  g.gy = -span / std::max(1, spec.height - 1);
  g.gx = 0.0;
  g.base = spec.depth_min - g.gy * (spec.height - 1);
  // Desaturated and dim, well off the object palette.
  g.color = hsv_to_rgb(rng.real01() * 360.0, 0.15 * rng.real01(),
                       0.3 + 0.3 * rng.real01());
  return g;
}

int log_uniform_size(Rng& rng, int lo, int hi) {
  const double u = rng.real01();
  const double s = std::exp(std::log(static_cast<double>(lo)) +
                            u * (std::log(static_cast<double>(hi)) -
                                 std::log(static_cast<double>(lo))));
  return std::clamp(static_cast<int>(s), lo, hi);
}

PlanarSurface make_object(const SynthSpec& spec, Rng& rng, double hue_offset,
                          int index) {
  PlanarSurface s;
  const int w = spec.width, h = spec.height;
  // Log-uniform sizes: plenty of small objects a fixed grid would miss.
  const int obj_w = log_uniform_size(rng, std::min(4, w), std::max(4, w / 4));
  const int obj_h = log_uniform_size(rng, std::min(4, h), std::max(4, h / 4));
  const int x0 = rng.below_int(w - obj_w + 1);
  const int y0 = rng.below_int(h - obj_h + 1);
  s.x0 = x0;
  s.y0 = y0;
  s.x1 = x0 + obj_w - 1;
  s.y1 = y0 + obj_h - 1;

  if (rng.below(2) == 0) {
    s.kind = PlanarSurface::Kind::kRectangle;
  } else {
    s.kind = PlanarSurface::Kind::kTriangle;
    const long long min_area2 =
        std::max(1LL, static_cast<long long>(obj_w) * obj_h / 4);
    for (;;) {
      for (auto& v : s.tri)
        v = {x0 + rng.below_int(obj_w), y0 + rng.below_int(obj_h)};
      const long long twice_area =
          std::llabs(static_cast<long long>(s.tri[1].col - s.tri[0].col) *
                         (s.tri[2].row - s.tri[0].row) -
                     static_cast<long long>(s.tri[1].row - s.tri[0].row) *
                         (s.tri[2].col - s.tri[0].col));
      if (twice_area >= min_area2) break;
    }
  }

  // Planar depth field kept inside [depth_min, depth_max] over the bbox.
  const double span = spec.depth_max - spec.depth_min;
  const double margin = 0.1 * span;
  const double center_depth =
      spec.depth_min + margin + rng.real01() * (span - 2.0 * margin);
  const double extent = std::max(obj_w, obj_h);
  const double max_slope = margin / extent;
  s.gx = (2.0 * rng.real01() - 1.0) * max_slope;
  s.gy = (2.0 * rng.real01() - 1.0) * max_slope;
  const double cx = 0.5 * (s.x0 + s.x1);
  const double cy = 0.5 * (s.y0 + s.y1);
  s.base = center_depth - s.gx * cx - s.gy * cy;
  s.color = object_color(rng, hue_offset, index);
  return s;
}

}  // namespace

Scene generate_scene(const SynthSpec& spec, const std::string& id, Rng& rng,
                     SceneGeometry* geometry) {
  spec.validate();

  SceneGeometry geo;
  geo.surfaces.push_back(make_ground(spec, rng));
  const double hue_offset = rng.real01() * 360.0;
  for (int i = 0; i < spec.n_objects; ++i)
    geo.surfaces.push_back(make_object(spec, rng, hue_offset, i));

  const bool with_rgb = spec.rgb_mode == RgbMode::kFlatColorPerObject;
  std::optional<RgbImage> rgb;
  if (with_rgb) rgb = RgbImage(spec.width, spec.height);

  DepthMap dense(spec.width, spec.height);
  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      double best = geo.surfaces[0].depth_at(col, row);
      const PlanarSurface* winner = &geo.surfaces[0];
      for (std::size_t s = 1; s < geo.surfaces.size(); ++s) {
        if (!geo.surfaces[s].covers(col, row)) continue;
        const double d = geo.surfaces[s].depth_at(col, row);
        if (d < best) {
          best = d;
          winner = &geo.surfaces[s];
        }
      }
      dense.set(col, row, best);
      if (with_rgb)
        rgb->set(col, row, winner->color[0], winner->color[1],
                 winner->color[2]);
    }
  }

  // Semi-dense ground truth: keep each pixel with probability gt_density.
  DepthMap gt(spec.width, spec.height);
  for (int row = 0; row < spec.height; ++row)
    for (int col = 0; col < spec.width; ++col)
      if (rng.real01() < spec.gt_density)
        gt.set(col, row, dense.depth(col, row));

  if (geometry) *geometry = std::move(geo);
  return Scene(id, std::move(rgb), std::move(gt));
}

DepthMap interpolation_oracle(const SampleMap& samples, int width,
                              int height) {
  if (samples.count() == 0)
    throw DataError("interpolation oracle needs at least one measurement");
  DepthMap out(width, height);
  std::vector<double> values(static_cast<std::size_t>(width) * height);
  parallel_for(0, static_cast<std::int64_t>(width) * height,
               [&](std::int64_t b, std::int64_t e) {
                 for (std::int64_t i = b; i < e; ++i) {
                   const Pixel p{static_cast<int>(i % width),
                                 static_cast<int>(i / width)};
                   const auto hit = nearest_measured(samples, p, 1);
                   values[static_cast<std::size_t>(i)] = hit.front().depth;
                 }
               });
  for (int row = 0; row < height; ++row)
    for (int col = 0; col < width; ++col)
      out.set(col, row,
              values[static_cast<std::size_t>(row) * width + col]);
  return out;
}

}  // namespace adls
