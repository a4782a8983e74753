#include "adls/features.hpp"

#include <algorithm>
#include <numeric>

#include "adls/imaging.hpp"
#include "adls/parallel.hpp"

namespace adls {

int feature_count(Scenario scenario, int neighbors) {
  return scenario == Scenario::kRgbd ? 5 + 7 * neighbors : 2 + 4 * neighbors;
}

namespace {

constexpr int kBruteForceLimit = 64;

void sort_hits(std::vector<Neighbor>& hits, int width) {
  std::sort(hits.begin(), hits.end(), [width](const Neighbor& a, const Neighbor& b) {
    if (a.l1_dist != b.l1_dist) return a.l1_dist < b.l1_dist;
    return row_major_index(a.pos, width) < row_major_index(b.pos, width);
  });
}

std::vector<Neighbor> brute_force_knn(const SampleMap& samples, Pixel query,
                                      int k) {
  std::vector<Neighbor> hits;
  hits.reserve(samples.measured_pixels().size());
  for (const Pixel& p : samples.measured_pixels())
    hits.push_back({p, samples.value(p), l1_distance(p, query)});
  sort_hits(hits, samples.width());
  if (static_cast<int>(hits.size()) > k) hits.resize(k);
  return hits;
}

// Expanding-diamond scan: after finishing radius r with >= k hits collected,
// every unvisited pixel is strictly farther, so the result is exact.
std::vector<Neighbor> ring_knn(const SampleMap& samples, Pixel query, int k) {
  const int w = samples.width();
  const int h = samples.height();
  const int max_r = (w - 1) + (h - 1);
  const int total = samples.count();

  std::vector<Neighbor> hits;
  auto visit = [&](int col, int row, int r) {
    if (col < 0 || col >= w || row < 0 || row >= h) return;
    if (samples.measured(col, row))
      hits.push_back({{col, row}, samples.value(col, row), r});
  };

  for (int r = 0; r <= max_r; ++r) {
    if (r == 0) {
      visit(query.col, query.row, 0);
    } else {
      for (int dr = -r; dr <= r; ++dr) {
        const int dc = r - std::abs(dr);
        visit(query.col - dc, query.row + dr, r);
        if (dc != 0) visit(query.col + dc, query.row + dr, r);
      }
    }
    if (static_cast<int>(hits.size()) >= k ||
        static_cast<int>(hits.size()) == total)
      break;
  }
  sort_hits(hits, w);
  if (static_cast<int>(hits.size()) > k) hits.resize(k);
  return hits;
}

}  // namespace

std::vector<Neighbor> nearest_measured(const SampleMap& samples, Pixel query,
                                       int k) {
  if (k <= 0 || samples.count() == 0) return {};
  if (samples.count() < kBruteForceLimit)
    return brute_force_knn(samples, query, k);
  return ring_knn(samples, query, k);
}

void build_features(const Scene& scene, Pixel pixel, Scenario scenario, int k,
                    double* out) {
  const bool rgbd = scenario == Scenario::kRgbd;
  if (rgbd && !scene.rgb)
    throw InvalidArgumentError("RGBd scenario requires an RGB image: scene " +
                               scene.id);

  HsvPixel here;
  int idx = 0;
  if (rgbd) {
    const auto* px = scene.rgb->at(pixel.col, pixel.row);
    here = rgb_to_hsv(px[0], px[1], px[2]);
    out[idx++] = here.h;
    out[idx++] = here.s;
    out[idx++] = here.v;
  }
  out[idx++] = pixel.col;
  out[idx++] = pixel.row;

  const auto neighbors = nearest_measured(scene.samples, pixel, k);
  const double pad_dist = scene.width() + scene.height();
  for (int j = 0; j < k; ++j) {
    if (j < static_cast<int>(neighbors.size())) {
      const Neighbor& n = neighbors[j];
      out[idx++] = n.depth;
      out[idx++] = n.l1_dist;
      out[idx++] = n.pos.col - pixel.col;
      out[idx++] = n.pos.row - pixel.row;
      if (rgbd) {
        const auto* px = scene.rgb->at(n.pos.col, n.pos.row);
        const HsvPixel there = rgb_to_hsv(px[0], px[1], px[2]);
        out[idx++] = there.h - here.h;
        out[idx++] = there.s - here.s;
        out[idx++] = there.v - here.v;
      }
    } else {
      out[idx++] = 0.0;       // depth
      out[idx++] = pad_dist;  // unreachable L1 bound
      out[idx++] = 0.0;       // dx
      out[idx++] = 0.0;       // dy
      if (rgbd) {
        out[idx++] = 0.0;
        out[idx++] = 0.0;
        out[idx++] = 0.0;
      }
    }
  }
}

Eigen::RowVectorXd build_features(const Scene& scene, Pixel pixel,
                                  Scenario scenario, int k) {
  Eigen::RowVectorXd row(feature_count(scenario, k));
  build_features(scene, pixel, scenario, k, row.data());
  return row;
}

Eigen::MatrixXd build_feature_rows(const Scene& scene,
                                   const std::vector<Pixel>& pixels,
                                   Scenario scenario, int neighbors) {
  const int d = feature_count(scenario, neighbors);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(pixels.size()), d);
  parallel_for(0, static_cast<std::int64_t>(pixels.size()),
               [&](std::int64_t b, std::int64_t e) {
                 std::vector<double> row(d);
                 for (std::int64_t i = b; i < e; ++i) {
                   build_features(scene, pixels[i], scenario, neighbors,
                                  row.data());
                   for (int f = 0; f < d; ++f) X(i, f) = row[f];
                 }
               });
  return X;
}

TrainingMatrix build_training_matrix(const Scene& scene, int subsample_size,
                                     Scenario scenario, int neighbors,
                                     Rng& rng) {
  if (subsample_size < 1)
    throw InvalidArgumentError("subsample size must be positive");
  std::vector<Pixel> valid;
  valid.reserve(static_cast<std::size_t>(scene.width()) * scene.height());
  for (int row = 0; row < scene.height(); ++row)
    for (int col = 0; col < scene.width(); ++col)
      if (scene.ground_truth.valid(col, row)) valid.push_back({col, row});
  if (valid.empty())
    throw DataError("scene has no valid ground-truth pixels: " + scene.id);

  const auto take =
      std::min<std::size_t>(valid.size(), static_cast<std::size_t>(subsample_size));
  // Partial Fisher-Yates over the row-major valid list.
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(valid.size() - i);
    std::swap(valid[i], valid[j]);
  }
  valid.resize(take);

  TrainingMatrix out;
  out.pixels = std::move(valid);
  out.X = build_feature_rows(scene, out.pixels, scenario, neighbors);
  out.y.resize(static_cast<Eigen::Index>(out.pixels.size()));
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.y[static_cast<Eigen::Index>(i)] = scene.ground_truth.depth(out.pixels[i]);
  return out;
}

}  // namespace adls
