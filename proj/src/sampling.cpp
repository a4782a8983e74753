#include "adls/sampling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "adls/features.hpp"
#include "adls/metrics.hpp"
#include "adls/parallel.hpp"

namespace adls {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::vector<Pixel> sampling_support(const Scene& scene) {
  std::vector<Pixel> out;
  for (int row = 0; row < scene.height(); ++row)
    for (int col = 0; col < scene.width(); ++col)
      if (scene.ground_truth.valid(col, row) &&
          !scene.samples.measured(col, row))
        out.push_back({col, row});
  return out;
}

/// Fenwick tree over per-pixel weights; removal zeroes a slot so later draws
/// renormalize over the remainder implicitly.
class WeightedSampler {
 public:
  explicit WeightedSampler(std::vector<double> weights)
      : n_(static_cast<int>(weights.size())),
        weights_(std::move(weights)),
        alive_(weights_.size(), true),
        tree_(weights_.size() + 1, 0.0) {
    for (int i = 1; i <= n_; ++i) tree_[i] = weights_[i - 1];
    for (int i = 1; i <= n_; ++i) {
      const int parent = i + (i & -i);
      if (parent <= n_) tree_[parent] += tree_[i];
    }
    top_ = 1;
    while (top_ * 2 <= n_) top_ *= 2;
    alive_count_ = n_;
  }

  int alive_count() const { return alive_count_; }

  double total() const {
    double t = 0.0;
    for (int i = n_; i > 0; i -= i & -i) t += tree_[i];
    return t;
  }

  int draw(Rng& rng) {
    const double tot = total();
    if (!(tot > 0.0)) return draw_uniform(rng);
    double u = rng.real01() * tot;
    int pos = 0;
    for (int step = top_; step > 0; step >>= 1) {
      const int next = pos + step;
      if (next <= n_ && tree_[next] <= u) {
        u -= tree_[next];
        pos = next;
      }
    }
    int idx = std::min(pos, n_ - 1);
    // Roundoff can land on a dead or zero-weight slot; roll to a live one.
    while (idx < n_ && (!alive_[idx] || weights_[idx] <= 0.0)) ++idx;
    if (idx >= n_) {
      idx = n_ - 1;
      while (idx >= 0 && !alive_[idx]) --idx;
    }
    return idx;
  }

  void remove(int idx) {
    if (!alive_[idx]) return;
    alive_[idx] = false;
    --alive_count_;
    const double w = weights_[idx];
    weights_[idx] = 0.0;
    for (int i = idx + 1; i <= n_; i += i & -i) tree_[i] -= w;
  }

 private:
  // All remaining weight is zero: finish uniformly over the remainder.
  int draw_uniform(Rng& rng) {
    auto nth = static_cast<int>(rng.below(static_cast<std::uint64_t>(alive_count_)));
    for (int i = 0; i < n_; ++i) {
      if (!alive_[i]) continue;
      if (nth == 0) return i;
      --nth;
    }
    throw Error("weighted sampler exhausted");  // unreachable by contract
  }

  int n_;
  int top_ = 1;
  int alive_count_ = 0;
  std::vector<double> weights_;
  std::vector<bool> alive_;
  std::vector<double> tree_;
};

}  // namespace

VarianceMap make_variance_map(const std::vector<Pixel>& support,
                              const Eigen::VectorXd& values, int width,
                              int height) {
  if (static_cast<Eigen::Index>(support.size()) != values.size())
    throw InvalidArgumentError("support/value length mismatch");
  VarianceMap m;
  m.value = DepthArray::Zero(height, width);
  m.support = MaskArray::Constant(height, width, false);
  for (std::size_t i = 0; i < support.size(); ++i) {
    const double v = values[static_cast<Eigen::Index>(i)];
    if (!(std::isfinite(v) && v >= 0.0))
      throw InvalidArgumentError("variance values must be finite and >= 0");
    m.value(support[i].row, support[i].col) = v;
    m.support(support[i].row, support[i].col) = true;
  }
  return m;
}

ProbabilityMap variance_to_probability(const VarianceMap& v) {
  const auto support_count = v.support.count();
  if (support_count == 0)
    throw DataError("no candidate pixels: sampling support is empty");

  double total = 0.0;
  for (int row = 0; row < v.height(); ++row)
    for (int col = 0; col < v.width(); ++col)
      if (v.support(row, col)) {
        const double x = v.value(row, col);
        if (!(std::isfinite(x) && x >= 0.0))
          throw InvalidArgumentError("variance values must be finite and >= 0");
        total += x;
      }

  ProbabilityMap pi;
  pi.support = v.support;
  pi.prob = DepthArray::Zero(v.height(), v.width());
  if (total > 0.0) {
    for (int row = 0; row < v.height(); ++row)
      for (int col = 0; col < v.width(); ++col)
        if (v.support(row, col)) pi.prob(row, col) = v.value(row, col) / total;
  } else {
    const double uniform = 1.0 / static_cast<double>(support_count);
    for (int row = 0; row < v.height(); ++row)
      for (int col = 0; col < v.width(); ++col)
        if (v.support(row, col)) pi.prob(row, col) = uniform;
  }
  return pi;
}

DrawResult sample_without_replacement(const ProbabilityMap& pi, int count,
                                      Rng& rng) {
  std::vector<Pixel> support;
  std::vector<double> weights;
  const int h = static_cast<int>(pi.prob.rows());
  const int w = static_cast<int>(pi.prob.cols());
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col)
      if (pi.support(row, col)) {
        support.push_back({col, row});
        weights.push_back(pi.prob(row, col));
      }

  DrawResult res;
  res.exhausted = count > static_cast<int>(support.size());
  const int draws = std::min<int>(count, static_cast<int>(support.size()));
  if (draws <= 0) return res;

  WeightedSampler sampler(std::move(weights));
  res.pixels.reserve(draws);
  for (int i = 0; i < draws; ++i) {
    const int idx = sampler.draw(rng);
    sampler.remove(idx);
    res.pixels.push_back(support[idx]);
  }
  return res;
}

DrawResult max_sampler(const VarianceMap& v, int count) {
  std::vector<int> order;
  std::vector<Pixel> support;
  std::vector<double> value;
  for (int row = 0; row < v.height(); ++row)
    for (int col = 0; col < v.width(); ++col)
      if (v.support(row, col)) {
        order.push_back(static_cast<int>(support.size()));
        support.push_back({col, row});
        value.push_back(v.value(row, col));
      }
  // Highest variance first; row-major order breaks ties (support is already
  // row-major, so stable sort on value alone suffices).
  std::stable_sort(order.begin(), order.end(),
                   [&value](int a, int b) { return value[a] > value[b]; });

  DrawResult res;
  res.exhausted = count > static_cast<int>(support.size());
  const int take = std::min<int>(count, static_cast<int>(support.size()));
  res.pixels.reserve(take);
  for (int i = 0; i < take; ++i) res.pixels.push_back(support[order[i]]);
  return res;
}

DrawResult random_sampler(const Scene& scene, int budget, Rng& rng) {
  std::vector<Pixel> support = sampling_support(scene);
  DrawResult res;
  res.exhausted = budget > static_cast<int>(support.size());
  const auto take =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(budget, 0)),
                            support.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(support.size() - i);
    std::swap(support[i], support[j]);
  }
  support.resize(take);
  res.pixels = std::move(support);
  return res;
}

namespace {

// Nearest open pixel in L1; ties resolve to the smallest row-major index
// (the scan below visits each ring in row-major order).
std::optional<Pixel> snap_to_open(const MaskArray& open, Pixel ideal) {
  const int h = static_cast<int>(open.rows());
  const int w = static_cast<int>(open.cols());
  const int max_r = (w - 1) + (h - 1);
  for (int r = 0; r <= max_r; ++r) {
    for (int dr = -r; dr <= r; ++dr) {
      const int row = ideal.row + dr;
      if (row < 0 || row >= h) continue;
      const int dc = r - std::abs(dr);
      const int left = ideal.col - dc;
      if (left >= 0 && left < w && open(row, left)) return Pixel{left, row};
      if (dc != 0) {
        const int right = ideal.col + dc;
        if (right >= 0 && right < w && open(row, right))
          return Pixel{right, row};
      }
    }
  }
  return std::nullopt;
}

}  // namespace

DrawResult grid_sampler(const Scene& scene, int budget, Rng& rng) {
  const int w = scene.width();
  const int h = scene.height();
  MaskArray open = scene.ground_truth.valid_mask() &&
                   !scene.samples.measured_mask();
  const auto support_count = static_cast<std::int64_t>(open.count());

  DrawResult res;
  res.exhausted = budget > support_count;
  if (budget <= 0) return res;
  if (res.exhausted || budget == support_count) {
    for (int row = 0; row < h; ++row)
      for (int col = 0; col < w; ++col)
        if (open(row, col)) res.pixels.push_back({col, row});
    return res;
  }

  const double b = budget;
  const int nx = std::clamp(
      static_cast<int>(std::ceil(std::sqrt(b * w / h))), 1, w);
  const int ny = std::clamp(
      static_cast<int>(std::ceil(std::sqrt(b * h / w))), 1, h);

  struct Snapped {
    Pixel pixel;
    int displacement;
    int lattice_index;
  };
  std::vector<Snapped> chosen;
  chosen.reserve(static_cast<std::size_t>(nx) * ny);
  int lattice_index = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i, ++lattice_index) {
      const Pixel ideal{static_cast<int>((i + 0.5) * w / nx),
                        static_cast<int>((j + 0.5) * h / ny)};
      const auto hit = snap_to_open(open, ideal);
      if (!hit) continue;  // every open pixel already claimed
      open(hit->row, hit->col) = false;
      chosen.push_back({*hit, l1_distance(*hit, ideal), lattice_index});
    }
  }

  if (static_cast<int>(chosen.size()) > budget) {
    // Keep the best-placed points: smallest snap displacement survives,
    // ties keep the earlier lattice point.
    std::sort(chosen.begin(), chosen.end(),
              [](const Snapped& a, const Snapped& b) {
                if (a.displacement != b.displacement)
                  return a.displacement < b.displacement;
                return a.lattice_index < b.lattice_index;
              });
    chosen.resize(budget);
  }
  std::sort(chosen.begin(), chosen.end(),
            [](const Snapped& a, const Snapped& b) {
              return a.lattice_index < b.lattice_index;
            });
  for (const auto& s : chosen) res.pixels.push_back(s.pixel);

  if (static_cast<int>(res.pixels.size()) < budget) {
    std::vector<Pixel> rest;
    for (int row = 0; row < h; ++row)
      for (int col = 0; col < w; ++col)
        if (open(row, col)) rest.push_back({col, row});
    const auto need = static_cast<std::size_t>(budget) - res.pixels.size();
    for (std::size_t i = 0; i < need && i < rest.size(); ++i) {
      const std::size_t j = i + rng.below(rest.size() - i);
      std::swap(rest[i], rest[j]);
      res.pixels.push_back(rest[i]);
    }
  }
  return res;
}

void RandomForestProvider::train_phase(const std::vector<Scene>& scenes,
                                       int phase) {
  if (phase != static_cast<int>(forests_.size()))
    throw InvalidArgumentError("phase ensembles must be trained in order");

  std::vector<TrainingMatrix> parts;
  parts.reserve(scenes.size());
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Rng rng(derive_seed(plan_.seed, {stream::kSubsample,
                                     static_cast<std::uint64_t>(phase),
                                     static_cast<std::uint64_t>(i)}));
    parts.push_back(build_training_matrix(scenes[i],
                                          config_.pixels_per_image_subsample,
                                          config_.scenario, config_.neighbors,
                                          rng));
    rows += parts.back().X.rows();
  }
  const int d = feature_count(config_.scenario, config_.neighbors);
  Eigen::MatrixXd X(rows, d);
  Eigen::VectorXd y(rows);
  Eigen::Index at = 0;
  for (const auto& part : parts) {
    X.middleRows(at, part.X.rows()) = part.X;
    y.segment(at, part.y.size()) = part.y;
    at += part.X.rows();
  }
  forests_.push_back(fit_forest(
      X, y, plan_.ensemble_size,
      derive_seed(plan_.seed, {stream::kForest, static_cast<std::uint64_t>(phase)}),
      config_.scenario));
}

Eigen::MatrixXd RandomForestProvider::predict_members(
    const Scene& scene, const std::vector<Pixel>& pixels, int phase) const {
  const auto F =
      build_feature_rows(scene, pixels, config_.scenario, config_.neighbors);
  return predict_per_tree(forests_.at(static_cast<std::size_t>(phase)), F);
}

namespace {

bool is_phased(SamplerKind kind) {
  return kind == SamplerKind::kPm || kind == SamplerKind::kMax ||
         kind == SamplerKind::kOracleSqErr;
}

Eigen::VectorXd squared_error_of_mean(const Eigen::MatrixXd& members,
                                      const DepthMap& gt,
                                      const std::vector<Pixel>& support) {
  Eigen::VectorXd mean = members.rowwise().mean();
  Eigen::VectorXd out(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double e = mean[i] - gt.depth(support[static_cast<std::size_t>(i)]);
    out[i] = e * e;
  }
  return out;
}

// PM and the squared-error oracle share the probability-matching path; only
// the map fed to variance_to_probability differs. MAX takes the top pixels.
DrawResult draw_for_phase(SamplerKind kind, const std::vector<Pixel>& support,
                          const Eigen::VectorXd& variance,
                          const Eigen::VectorXd& score, int count, int width,
                          int height, Rng& rng) {
  if (kind == SamplerKind::kMax)
    return max_sampler(make_variance_map(support, variance, width, height),
                       count);
  const VarianceMap map = make_variance_map(support, score, width, height);
  return sample_without_replacement(variance_to_probability(map), count, rng);
}

double measured_value(double gt_depth, const RunConfig& config,
                      std::uint64_t seed, std::uint64_t phase,
                      std::uint64_t scene_tag, std::int64_t pixel_index) {
  if (!config.noise_sigma || *config.noise_sigma == 0.0) return gt_depth;
  Rng rng(derive_seed(seed, {stream::kNoise, phase, scene_tag,
                             static_cast<std::uint64_t>(pixel_index)}));
  return std::max(0.0, gt_depth + *config.noise_sigma * rng.normal());
}

void add_measurements(Scene& scene, const std::vector<Pixel>& pixels,
                      const RunConfig& config, std::uint64_t seed,
                      std::uint64_t phase, std::uint64_t scene_tag) {
  for (const Pixel& p : pixels) {
    scene.samples.add(
        p, measured_value(scene.ground_truth.depth(p), config, seed, phase,
                          scene_tag, row_major_index(p, scene.width())));
  }
}

void check_scenario_inputs(const std::vector<Scene>& scenes,
                           const RunConfig& config) {
  if (config.scenario != Scenario::kRgbd) return;
  for (const auto& scene : scenes)
    if (!scene.rgb)
      throw InvalidArgumentError("RGBd scenario requires an RGB image: scene " +
                                 scene.id);
}

Eigen::MatrixXd pooled_final_matrix(const std::vector<Scene>& scenes,
                                    const SamplingPlan& plan,
                                    const RunConfig& config,
                                    Eigen::VectorXd& y_out) {
  std::vector<TrainingMatrix> parts;
  parts.reserve(scenes.size());
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Rng rng(derive_seed(plan.seed, {stream::kFinalSubsample,
                                    static_cast<std::uint64_t>(i)}));
    parts.push_back(build_training_matrix(scenes[i],
                                          config.pixels_per_image_subsample,
                                          config.scenario, config.neighbors,
                                          rng));
    rows += parts.back().X.rows();
  }
  const int d = feature_count(config.scenario, config.neighbors);
  Eigen::MatrixXd X(rows, d);
  y_out.resize(rows);
  Eigen::Index at = 0;
  for (const auto& part : parts) {
    X.middleRows(at, part.X.rows()) = part.X;
    y_out.segment(at, part.y.size()) = part.y;
    at += part.X.rows();
  }
  return X;
}

RegressionForest fit_final_forest(const std::vector<Scene>& scenes,
                                  const SamplingPlan& plan,
                                  const RunConfig& config, TrainStats* stats) {
  const auto t0 = std::chrono::steady_clock::now();
  Eigen::VectorXd y;
  const Eigen::MatrixXd X = pooled_final_matrix(scenes, plan, config, y);
  RegressionForest forest =
      fit_forest(X, y, config.trees_final,
                 derive_seed(plan.seed, {stream::kFinalForest}),
                 config.scenario);
  if (stats) {
    stats->final_fit_seconds = seconds_since(t0);
    stats->final_pooled_rows = static_cast<int>(X.rows());
  }
  return forest;
}

}  // namespace

void drive_phased_sampling(std::vector<Scene>& scenes,
                           EnsembleProvider& provider,
                           const SamplingPlan& plan, const RunConfig& config,
                           TrainStats* stats) {
  plan.validate();
  config.validate();
  if (scenes.empty()) throw InvalidArgumentError("no training scenes");
  if (!is_phased(plan.sampler))
    throw InvalidArgumentError(
        "phased sampling drives pm, max, or oracle plans only");
  if (provider.ensemble_size() < 2)
    throw InvalidArgumentError("ensemble size must be >= 2");
  check_scenario_inputs(scenes, config);

  const std::vector<int> alloc = plan.per_phase();
  for (int k = 0; k < plan.phases; ++k) {
    TrainStats::Phase phase_stats;
    auto t0 = std::chrono::steady_clock::now();
    provider.train_phase(scenes, k);
    phase_stats.fit_seconds = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      Scene& scene = scenes[i];
      const std::vector<Pixel> support = sampling_support(scene);
      if (support.empty())
        throw DataError("sampling support is empty for scene " + scene.id);

      const Eigen::MatrixXd members = provider.predict_members(scene, support, k);
      const Eigen::VectorXd variance = ensemble_variance(members);
      const Eigen::VectorXd score =
          plan.sampler == SamplerKind::kOracleSqErr
              ? squared_error_of_mean(members, scene.ground_truth, support)
              : variance;

      Rng rng(derive_seed(plan.seed, {stream::kDraw,
                                      static_cast<std::uint64_t>(k),
                                      static_cast<std::uint64_t>(i)}));
      const DrawResult draw =
          draw_for_phase(plan.sampler, support, variance, score, alloc[k],
                         scene.width(), scene.height(), rng);
      if (static_cast<int>(draw.pixels.size()) < alloc[k])
        throw DataError("sampling support exhausted for scene " + scene.id);
      add_measurements(scene, draw.pixels, config, plan.seed,
                       static_cast<std::uint64_t>(k),
                       static_cast<std::uint64_t>(i));
      phase_stats.drawn_per_scene.push_back(
          static_cast<int>(draw.pixels.size()));
    }
    phase_stats.sample_seconds = seconds_since(t0);
    if (stats) stats->phases.push_back(std::move(phase_stats));
  }
}

TrainedPipeline run_phased_training(std::vector<Scene>& scenes,
                                    const SamplingPlan& plan,
                                    const RunConfig& config,
                                    TrainStats* stats) {
  RandomForestProvider provider(plan, config);
  drive_phased_sampling(scenes, provider, plan, config, stats);
  TrainedPipeline pipeline;
  pipeline.plan = plan;
  pipeline.config = config;
  pipeline.final_forest = fit_final_forest(scenes, plan, config, stats);
  pipeline.phase_forests = std::move(provider.forests());
  return pipeline;
}

TrainedPipeline train_pipeline(std::vector<Scene>& scenes,
                               const SamplingPlan& plan,
                               const RunConfig& config, TrainStats* stats) {
  if (is_phased(plan.sampler))
    return run_phased_training(scenes, plan, config, stats);

  plan.validate();
  config.validate();
  if (scenes.empty()) throw InvalidArgumentError("no training scenes");
  check_scenario_inputs(scenes, config);

  TrainStats::Phase phase_stats;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Scene& scene = scenes[i];
    if (sampling_support(scene).empty())
      throw DataError("sampling support is empty for scene " + scene.id);
    Rng rng(derive_seed(plan.seed, {stream::kDraw, 0,
                                    static_cast<std::uint64_t>(i)}));
    const DrawResult draw = plan.sampler == SamplerKind::kRandom
                                ? random_sampler(scene, plan.budget, rng)
                                : grid_sampler(scene, plan.budget, rng);
    if (static_cast<int>(draw.pixels.size()) < plan.budget)
      throw DataError("sampling support exhausted for scene " + scene.id);
    add_measurements(scene, draw.pixels, config, plan.seed, 0,
                     static_cast<std::uint64_t>(i));
    phase_stats.drawn_per_scene.push_back(static_cast<int>(draw.pixels.size()));
  }
  phase_stats.sample_seconds = seconds_since(t0);
  if (stats) stats->phases.push_back(std::move(phase_stats));

  TrainedPipeline pipeline;
  pipeline.plan = plan;
  pipeline.config = config;
  pipeline.final_forest = fit_final_forest(scenes, plan, config, stats);
  return pipeline;
}

TestResult run_phased_testing(const Scene& scene,
                              const TrainedPipeline& pipeline,
                              std::uint64_t seed) {
  const SamplingPlan& plan = pipeline.plan;
  const RunConfig& config = pipeline.config;
  if (config.scenario == Scenario::kRgbd && !scene.rgb)
    throw InvalidArgumentError(
        "pipeline expects the RGBd scenario but scene has no RGB: " + scene.id);
  const int expected_features = feature_count(config.scenario, config.neighbors);
  if (pipeline.final_forest.n_features() != expected_features)
    throw InvalidArgumentError("pipeline/feature dimensionality mismatch");

  Scene work = scene;
  const std::uint64_t tag = fnv1a64(scene.id);
  TestResult res{SampleMap(scene.width(), scene.height()),
                 DepthMap(scene.width(), scene.height()),
                 {}};

  if (is_phased(plan.sampler)) {
    if (static_cast<int>(pipeline.phase_forests.size()) != plan.phases)
      throw InvalidArgumentError("pipeline is missing phase ensembles");
    const std::vector<int> alloc = plan.per_phase();
    for (int k = 0; k < plan.phases; ++k) {
      const std::vector<Pixel> support = sampling_support(work);
      if (support.empty())
        throw DataError("sampling support is empty for scene " + work.id);
      const Eigen::MatrixXd F = build_feature_rows(
          work, support, config.scenario, config.neighbors);
      const Eigen::MatrixXd members =
          predict_per_tree(pipeline.phase_forests[static_cast<std::size_t>(k)], F);
      const Eigen::VectorXd variance = ensemble_variance(members);
      const Eigen::VectorXd sq_err =
          squared_error_of_mean(members, work.ground_truth, support);

      double r = std::numeric_limits<double>::quiet_NaN();
      if (variance.size() >= 2) {
        try {
          r = pearson(variance, sq_err);
        } catch (const DataError&) {
          // constant series; leave NaN
        }
      }
      res.phase_variance_error_r.push_back(r);

      const Eigen::VectorXd& score =
          plan.sampler == SamplerKind::kOracleSqErr ? sq_err : variance;
      Rng rng(derive_seed(seed, {stream::kDraw, static_cast<std::uint64_t>(k),
                                 tag}));
      const DrawResult draw =
          draw_for_phase(plan.sampler, support, variance, score, alloc[k],
                         work.width(), work.height(), rng);
      if (static_cast<int>(draw.pixels.size()) < alloc[k])
        throw DataError("sampling support exhausted for scene " + work.id);
      add_measurements(work, draw.pixels, config, seed,
                       static_cast<std::uint64_t>(k), tag);
    }
  } else {
    if (sampling_support(work).empty())
      throw DataError("sampling support is empty for scene " + work.id);
    Rng rng(derive_seed(seed, {stream::kDraw, 0, tag}));
    const DrawResult draw = plan.sampler == SamplerKind::kRandom
                                ? random_sampler(work, plan.budget, rng)
                                : grid_sampler(work, plan.budget, rng);
    if (static_cast<int>(draw.pixels.size()) < plan.budget)
      throw DataError("sampling support exhausted for scene " + work.id);
    add_measurements(work, draw.pixels, config, seed, 0, tag);
  }

  std::vector<Pixel> all_pixels;
  all_pixels.reserve(static_cast<std::size_t>(work.width()) * work.height());
  for (int row = 0; row < work.height(); ++row)
    for (int col = 0; col < work.width(); ++col)
      all_pixels.push_back({col, row});
  const Eigen::MatrixXd F =
      build_feature_rows(work, all_pixels, config.scenario, config.neighbors);
  const Eigen::VectorXd mean = predict_mean(pipeline.final_forest, F);
  for (std::size_t i = 0; i < all_pixels.size(); ++i)
    res.prediction.set(all_pixels[i],
                       std::max(0.0, mean[static_cast<Eigen::Index>(i)]));

  res.samples = work.samples;
  return res;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::map<std::string, std::string> parse_kv_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("bad key=value line in " + path.string() + ": " + line);
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

const std::string& require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key,
                               const std::filesystem::path& path) {
  const auto it = kv.find(key);
  if (it == kv.end())
    throw FormatError("missing key '" + key + "' in " + path.string());
  return it->second;
}

std::string phase_forest_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "phase_%04d.forest", k + 1);
  return buf;
}

}  // namespace

void save_pipeline(const TrainedPipeline& pipeline,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream cfg(dir / "pipeline.cfg", std::ios::trunc);
  if (!cfg) throw IoError("cannot write pipeline.cfg in " + dir.string());
  cfg << "format = 1\n"
      << "scenario = " << to_string(pipeline.config.scenario) << "\n"
      << "sampler = " << to_string(pipeline.plan.sampler) << "\n"
      << "budget = " << pipeline.plan.budget << "\n"
      << "phases = " << pipeline.plan.phases << "\n"
      << "ensemble_size = " << pipeline.plan.ensemble_size << "\n"
      << "seed = " << pipeline.plan.seed << "\n"
      << "trees_per_phase = " << pipeline.config.trees_per_phase_forest << "\n"
      << "trees_final = " << pipeline.config.trees_final << "\n"
      << "subsample = " << pipeline.config.pixels_per_image_subsample << "\n"
      << "knn = " << pipeline.config.neighbors << "\n";
  if (pipeline.config.noise_sigma)
    cfg << "noise_sigma = " << format_double(*pipeline.config.noise_sigma)
        << "\n";
  if (pipeline.config.crop)
    cfg << "crop = " << pipeline.config.crop->first << "x"
        << pipeline.config.crop->second << "\n";
  cfg << "phase_forests = " << pipeline.phase_forests.size() << "\n";
  if (!cfg) throw IoError("pipeline.cfg write failed");
  cfg.close();

  for (std::size_t k = 0; k < pipeline.phase_forests.size(); ++k)
    serialize_forest(pipeline.phase_forests[k],
                     dir / phase_forest_name(static_cast<int>(k)));
  serialize_forest(pipeline.final_forest, dir / "final.forest");
}

TrainedPipeline load_pipeline(const std::filesystem::path& dir) {
  const auto cfg_path = dir / "pipeline.cfg";
  const auto kv = parse_kv_file(cfg_path);
  if (require_key(kv, "format", cfg_path) != "1")
    throw FormatError("unsupported pipeline format in " + cfg_path.string());

  TrainedPipeline p;
  p.config.scenario = scenario_from_string(require_key(kv, "scenario", cfg_path));
  p.plan.sampler = sampler_from_string(require_key(kv, "sampler", cfg_path));
  p.plan.budget = std::stoi(require_key(kv, "budget", cfg_path));
  p.plan.phases = std::stoi(require_key(kv, "phases", cfg_path));
  p.plan.ensemble_size = std::stoi(require_key(kv, "ensemble_size", cfg_path));
  p.plan.seed = std::stoull(require_key(kv, "seed", cfg_path));
  p.config.trees_per_phase_forest =
      std::stoi(require_key(kv, "trees_per_phase", cfg_path));
  p.config.trees_final = std::stoi(require_key(kv, "trees_final", cfg_path));
  p.config.pixels_per_image_subsample =
      std::stoi(require_key(kv, "subsample", cfg_path));
  p.config.neighbors = std::stoi(require_key(kv, "knn", cfg_path));
  if (const auto it = kv.find("noise_sigma"); it != kv.end())
    p.config.noise_sigma = std::stod(it->second);
  if (const auto it = kv.find("crop"); it != kv.end()) {
    const auto x = it->second.find('x');
    if (x == std::string::npos)
      throw FormatError("bad crop value in " + cfg_path.string());
    p.config.crop = {std::stoi(it->second.substr(0, x)),
                     std::stoi(it->second.substr(x + 1))};
  }
  p.plan.validate();
  p.config.validate();

  const int n_phase = std::stoi(require_key(kv, "phase_forests", cfg_path));
  for (int k = 0; k < n_phase; ++k)
    p.phase_forests.push_back(deserialize_forest(dir / phase_forest_name(k)));
  p.final_forest = deserialize_forest(dir / "final.forest");

  const int expected = feature_count(p.config.scenario, p.config.neighbors);
  if (p.final_forest.n_features() != expected)
    throw FormatError("pipeline scenario and forest dimensionality disagree");
  if (is_phased(p.plan.sampler) && n_phase != p.plan.phases)
    throw FormatError("pipeline phase-forest count does not match plan");
  return p;
}

}  // namespace adls
