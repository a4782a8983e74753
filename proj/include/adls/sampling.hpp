#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <memory>
#include <vector>

#include "adls/core.hpp"
#include "adls/forest.hpp"
#include "adls/rng.hpp"

namespace adls {

/// Per-pixel ensemble variance over the sampling support (valid-GT pixels not
/// yet measured); pixels outside the support are excluded.
struct VarianceMap {
  DepthArray value;
  MaskArray support;

  int width() const { return static_cast<int>(value.cols()); }
  int height() const { return static_cast<int>(value.rows()); }
};

VarianceMap make_variance_map(const std::vector<Pixel>& support,
                              const Eigen::VectorXd& values, int width,
                              int height);

/// Normalized sampling distribution over the variance map's support:
/// pi proportional to v, uniform when the total variance is zero.
struct ProbabilityMap {
  DepthArray prob;
  MaskArray support;
};

ProbabilityMap variance_to_probability(const VarianceMap& v);

struct DrawResult {
  std::vector<Pixel> pixels;
  bool exhausted = false;  // fewer support pixels than requested
};

/// Sequential weighted draws without replacement: pick from pi, remove,
/// renormalize over the remainder. Deterministic given the rng stream.
DrawResult sample_without_replacement(const ProbabilityMap& pi, int count,
                                      Rng& rng);

/// The `count` highest-variance support pixels; ties break row-major.
DrawResult max_sampler(const VarianceMap& v, int count);

/// Uniform draw (without replacement) over valid-GT, unmeasured pixels.
DrawResult random_sampler(const Scene& scene, int budget, Rng& rng);

/// Even lattice snapped to valid unmeasured pixels (nearest L1, row-major
/// ties), trimmed by greatest snap displacement; rng only feeds the densify
/// fallback.
DrawResult grid_sampler(const Scene& scene, int budget, Rng& rng);

/// Committee abstraction: anything that can train a per-phase ensemble and
/// expose per-member predictions can drive the sampler.
class EnsembleProvider {
 public:
  virtual ~EnsembleProvider() = default;
  virtual int ensemble_size() const = 0;
  virtual void train_phase(const std::vector<Scene>& scenes, int phase) = 0;
  /// Rows follow `pixels`; columns are the M members of the phase ensemble.
  virtual Eigen::MatrixXd predict_members(const Scene& scene,
                                          const std::vector<Pixel>& pixels,
                                          int phase) const = 0;
};

/// The forest-backed committee: one forest per phase, trained on pooled
/// per-scene subsample matrices; the forest's trees are the members.
class RandomForestProvider final : public EnsembleProvider {
 public:
  RandomForestProvider(const SamplingPlan& plan, const RunConfig& config)
      : plan_(plan), config_(config) {}

  int ensemble_size() const override { return plan_.ensemble_size; }
  void train_phase(const std::vector<Scene>& scenes, int phase) override;
  Eigen::MatrixXd predict_members(const Scene& scene,
                                  const std::vector<Pixel>& pixels,
                                  int phase) const override;

  std::vector<RegressionForest>& forests() { return forests_; }
  const std::vector<RegressionForest>& forests() const { return forests_; }

 private:
  SamplingPlan plan_;
  RunConfig config_;
  std::vector<RegressionForest> forests_;
};

struct TrainStats {
  struct Phase {
    double fit_seconds = 0.0;
    double sample_seconds = 0.0;
    std::vector<int> drawn_per_scene;
  };
  std::vector<Phase> phases;
  double final_fit_seconds = 0.0;
  int final_pooled_rows = 0;
};

/// Phase ensembles + final predictor + the settings that produced them.
struct TrainedPipeline {
  SamplingPlan plan;
  RunConfig config;
  std::vector<RegressionForest> phase_forests;  // empty for random/grid
  RegressionForest final_forest;
};

/// Runs the phased sampler over the training scenes with any committee,
/// mutating their sample maps in place. One phase = train committee, score
/// every scene's support, draw that phase's allocation.
void drive_phased_sampling(std::vector<Scene>& scenes,
                           EnsembleProvider& provider,
                           const SamplingPlan& plan, const RunConfig& config,
                           TrainStats* stats = nullptr);

/// Phased training for pm/max/oracle plans with the forest committee; places
/// all B samples per scene, then fits the final forest on the pooled
/// final-state matrices.
TrainedPipeline run_phased_training(std::vector<Scene>& scenes,
                                    const SamplingPlan& plan,
                                    const RunConfig& config,
                                    TrainStats* stats = nullptr);

/// Any-sampler entry point: dispatches to run_phased_training or to the
/// single-shot random/grid placement plus final-forest fit.
TrainedPipeline train_pipeline(std::vector<Scene>& scenes,
                               const SamplingPlan& plan,
                               const RunConfig& config,
                               TrainStats* stats = nullptr);

struct TestResult {
  SampleMap samples;
  DepthMap prediction;  // dense: every pixel valid
  // Pearson r between ensemble variance and squared error of the ensemble
  // mean, per phase; NaN where undefined. Empty for single-shot samplers.
  std::vector<double> phase_variance_error_r;
};

/// Replays the frozen phase ensembles on one scene to place B measurements,
/// then predicts dense depth with the final forest. Never retrains.
TestResult run_phased_testing(const Scene& scene,
                              const TrainedPipeline& pipeline,
                              std::uint64_t seed);

// Pipeline directory: pipeline.cfg (key = value) + phase_XX.forest +
// final.forest in the forest container format.
void save_pipeline(const TrainedPipeline& pipeline,
                   const std::filesystem::path& dir);
TrainedPipeline load_pipeline(const std::filesystem::path& dir);

}  // namespace adls
