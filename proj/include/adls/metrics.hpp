#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "adls/core.hpp"

namespace adls {

/// RMSE/MAE in millimeters, REL and delta1 dimensionless, over valid-GT
/// pixels only.
struct MetricReport {
  double rmse_mm = 0.0;
  double mae_mm = 0.0;
  double rel = 0.0;
  double delta1 = 0.0;
  std::int64_t n_pixels = 0;
};

/// Pixel-pooled accumulation across scenes; the corpus report is recomputed
/// from pooled sums, not averaged per-scene values.
class MetricAccumulator {
 public:
  void add(const DepthMap& prediction, const DepthMap& ground_truth);
  MetricReport report() const;
  std::int64_t n_pixels() const { return n_; }

 private:
  double sum_sq_ = 0.0;  // meters^2
  double sum_abs_ = 0.0;
  double sum_rel_ = 0.0;
  std::int64_t n_delta1_ = 0;
  std::int64_t n_ = 0;
};

MetricReport evaluate(const DepthMap& prediction, const DepthMap& ground_truth);

/// Pearson correlation; throws DataError when either series is constant.
double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct UtilityTriple {
  double u_pm = 0.0;
  double u_rnd = 0.0;
  double u_max = 0.0;
  bool degenerate = false;  // all-zero utility vector
};

/// u_max = max u_i, u_rnd = mean u_i, u_pm = sum(u_i^2)/sum(u_i); entries
/// must be non-negative.
UtilityTriple utility_analysis(const Eigen::VectorXd& u);

// CSV schema shared by eval/bench outputs.
std::string metric_csv_header();
std::string metric_csv_row(const std::string& scene_id,
                           const std::string& sampler, int budget, int phases,
                           const MetricReport& report, std::uint64_t seed,
                           const std::string& error = "");

}  // namespace adls
