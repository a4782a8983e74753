#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "adls/core.hpp"
#include "adls/metrics.hpp"
#include "adls/sampling.hpp"

namespace adls {

struct ExperimentMatrix {
  std::vector<SamplerKind> samplers;
  std::vector<int> budgets;
  std::vector<int> phase_counts;  // single-shot samplers always run at 1
  std::vector<std::uint64_t> seeds;
  Scenario scenario = Scenario::kRgbd;

  void validate() const;
};

/// Scene ids group into "drives" by everything before the last underscore;
/// scenes of a drive always land on the same side of the split.
std::string drive_of(const std::string& scene_id);

struct SplitResult {
  std::vector<std::size_t> train;  // indices into the scene list
  std::vector<std::size_t> test;
};

/// 70/30-ish deterministic split: drives ranked by FNV-1a hash, the
/// round(0.3 * n_drives) smallest-hash drives (at least one, never all)
/// become the test set.
SplitResult split_train_test(const std::vector<std::string>& scene_ids);

struct BenchCellResult {
  SamplerKind sampler = SamplerKind::kPm;
  int budget = 0;
  int phases = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> scene_ids;         // test scenes
  std::vector<MetricReport> per_scene;        // aligned with scene_ids
  std::vector<SampleMap> samples;             // aligned with scene_ids
  std::vector<std::vector<double>> phase_r;   // variance/sq-error correlation
  MetricReport pooled;
  std::string error;  // non-empty when the cell failed
};

/// Trains on the split's train scenes (fresh copies of the pristine corpus)
/// and evaluates every test scene. Failures land in .error.
BenchCellResult run_bench_cell(const std::vector<Scene>& pristine,
                               const SplitResult& split, SamplerKind sampler,
                               int budget, int phases, std::uint64_t seed,
                               const RunConfig& config);

struct BenchOptions {
  RunConfig config;
  std::vector<double> target_rmse_mm;  // emit budget-for-target table when set
};

/// Runs the full matrix, appending one CSV row per test scene per cell plus
/// a pooled ALL row. Cells whose pooled row already exists are skipped, so
/// interrupted runs resume. PM cells also append per-phase variance-error
/// correlations to <out stem>_correlations.csv.
void run_bench(const std::vector<Scene>& scenes, const ExperimentMatrix& matrix,
               const BenchOptions& options,
               const std::filesystem::path& out_csv);

}  // namespace adls
