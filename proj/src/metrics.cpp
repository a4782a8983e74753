#include "adls/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace adls {

void MetricAccumulator::add(const DepthMap& prediction,
                            const DepthMap& ground_truth) {
  if (prediction.width() != ground_truth.width() ||
      prediction.height() != ground_truth.height())
    throw InvalidArgumentError("prediction/GT dimension mismatch");

  for (int row = 0; row < ground_truth.height(); ++row) {
    for (int col = 0; col < ground_truth.width(); ++col) {
      if (!ground_truth.valid(col, row)) continue;
      if (!prediction.valid(col, row))
        throw DataError("prediction missing at a valid-GT pixel");
      const double g = ground_truth.depth(col, row);
      const double p = prediction.depth(col, row);
      if (!(g > 0.0))
        throw DataError("REL undefined: non-positive GT at a valid pixel");
      if (!(std::isfinite(p) && p > 0.0))
        throw DataError("prediction must be finite and positive at valid-GT pixels");
      const double err = p - g;
      sum_sq_ += err * err;
      sum_abs_ += std::abs(err);
      sum_rel_ += std::abs(err) / g;
      if (std::max(p / g, g / p) < 1.25) ++n_delta1_;
      ++n_;
    }
  }
}

MetricReport MetricAccumulator::report() const {
  if (n_ == 0) throw DataError("no valid ground-truth pixels to evaluate");
  MetricReport r;
  r.n_pixels = n_;
  r.rmse_mm = std::sqrt(sum_sq_ / n_) * 1000.0;
  r.mae_mm = (sum_abs_ / n_) * 1000.0;
  r.rel = sum_rel_ / n_;
  r.delta1 = static_cast<double>(n_delta1_) / n_;
  return r;
}

MetricReport evaluate(const DepthMap& prediction,
                      const DepthMap& ground_truth) {
  MetricAccumulator acc;
  acc.add(prediction, ground_truth);
  return acc.report();
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw InvalidArgumentError("pearson needs two equal-length series, n >= 2");
  const double mean_a = a.mean();
  const double mean_b = b.mean();
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0)
    throw DataError("correlation undefined for a constant series");
  const double r = cov / std::sqrt(var_a * var_b);
  return std::clamp(r, -1.0, 1.0);
}

UtilityTriple utility_analysis(const Eigen::VectorXd& u) {
  if (u.size() < 1) throw InvalidArgumentError("utility vector must be non-empty");
  long double sum = 0.0L, sum_sq = 0.0L;
  double max = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double v = u[i];
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidArgumentError("utilities must be finite and non-negative");
    sum += v;
    sum_sq += static_cast<long double>(v) * v;
    max = std::max(max, v);
  }
  UtilityTriple out;
  out.u_max = max;
  out.u_rnd = static_cast<double>(sum / u.size());
  if (sum == 0.0L) {
    out.degenerate = true;  // the ensemble fully agrees everywhere
    return out;
  }
  out.u_pm = static_cast<double>(sum_sq / sum);
  return out;
}

std::string metric_csv_header() {
  return "scene_id,sampler,budget,phases,rmse_mm,mae_mm,rel,delta1,seed,error";
}

std::string metric_csv_row(const std::string& scene_id,
                           const std::string& sampler, int budget, int phases,
                           const MetricReport& report, std::uint64_t seed,
                           const std::string& error) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", report.rmse_mm,
                report.mae_mm, report.rel, report.delta1);
  std::string sanitized = error;
  for (char& c : sanitized)
    if (c == ',' || c == '\n') c = ';';
  return scene_id + "," + sampler + "," + std::to_string(budget) + "," +
         std::to_string(phases) + "," + buf + "," + std::to_string(seed) +
         "," + sanitized;
}

}  // namespace adls
