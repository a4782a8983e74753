#pragma once

#include <Eigen/Dense>

#include <vector>

#include "adls/core.hpp"
#include "adls/rng.hpp"

namespace adls {

/// 26 for RGBd ([h,s,v,x,y] + 7 per neighbor), 14 for depth-only
/// ([x,y] + 4 per neighbor), with 3 neighbors.
int feature_count(Scenario scenario, int neighbors = 3);

struct Neighbor {
  Pixel pos;
  double depth = 0.0;
  int l1_dist = 0;
};

/// The k measured pixels closest to `query` in L1, sorted by distance then
/// row-major index. Returns fewer when fewer exist; a measured query pixel is
/// its own first neighbor at distance 0.
std::vector<Neighbor> nearest_measured(const SampleMap& samples, Pixel query,
                                       int k);

/// Writes feature_count(scenario, k) values to `out`. Missing neighbors are
/// padded with {depth 0, dist width+height, deltas 0}.
void build_features(const Scene& scene, Pixel pixel, Scenario scenario, int k,
                    double* out);
Eigen::RowVectorXd build_features(const Scene& scene, Pixel pixel,
                                  Scenario scenario, int k = 3);

struct TrainingMatrix {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<Pixel> pixels;
};

/// Uniform subsample (without replacement) of valid-GT pixels, featurized
/// against the scene's current sample map; targets are GT depths.
TrainingMatrix build_training_matrix(const Scene& scene, int subsample_size,
                                     Scenario scenario, int neighbors,
                                     Rng& rng);

/// Feature rows for an explicit pixel list (parallel across pixels).
Eigen::MatrixXd build_feature_rows(const Scene& scene,
                                   const std::vector<Pixel>& pixels,
                                   Scenario scenario, int neighbors);

}  // namespace adls
