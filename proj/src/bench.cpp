#include "adls/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace adls {

void ExperimentMatrix::validate() const {
  if (samplers.empty() || budgets.empty() || phase_counts.empty() ||
      seeds.empty())
    throw InvalidArgumentError("experiment matrix lists must be non-empty");
  for (int b : budgets)
    if (b < 1) throw InvalidArgumentError("budgets must be positive");
  for (int k : phase_counts)
    if (k < 1) throw InvalidArgumentError("phase counts must be positive");
}

std::string drive_of(const std::string& scene_id) {
  const auto pos = scene_id.rfind('_');
  return pos == std::string::npos ? scene_id : scene_id.substr(0, pos);
}

SplitResult split_train_test(const std::vector<std::string>& scene_ids) {
  if (scene_ids.size() < 2)
    throw InvalidArgumentError("need at least two scenes to split");

  std::map<std::string, std::vector<std::size_t>> drives;
  for (std::size_t i = 0; i < scene_ids.size(); ++i)
    drives[drive_of(scene_ids[i])].push_back(i);
  if (drives.size() < 2)
    throw InvalidArgumentError("need at least two drives to split");

  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  ranked.reserve(drives.size());
  for (const auto& [name, _] : drives) ranked.push_back({fnv1a64(name), name});
  std::sort(ranked.begin(), ranked.end());

  const auto n = static_cast<int>(drives.size());
  const int n_test = std::clamp(
      static_cast<int>(std::floor(0.3 * n + 0.5)), 1, n - 1);

  SplitResult out;
  for (int i = 0; i < n; ++i) {
    auto& bucket = i < n_test ? out.test : out.train;
    for (std::size_t idx : drives[ranked[static_cast<std::size_t>(i)].second])
      bucket.push_back(idx);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

BenchCellResult run_bench_cell(const std::vector<Scene>& pristine,
                               const SplitResult& split, SamplerKind sampler,
                               int budget, int phases, std::uint64_t seed,
                               const RunConfig& config) {
  BenchCellResult cell;
  cell.sampler = sampler;
  cell.budget = budget;
  cell.phases = phases;
  cell.seed = seed;
  try {
    SamplingPlan plan;
    plan.budget = budget;
    plan.phases = phases;
    plan.sampler = sampler;
    plan.ensemble_size = config.trees_per_phase_forest;
    plan.seed = seed;
    plan.validate();
    config.validate();

    std::vector<Scene> train_scenes;
    train_scenes.reserve(split.train.size());
    for (std::size_t idx : split.train) train_scenes.push_back(pristine[idx]);

    const TrainedPipeline pipeline = train_pipeline(train_scenes, plan, config);

    MetricAccumulator pooled;
    for (std::size_t idx : split.test) {
      const Scene& scene = pristine[idx];
      TestResult res = run_phased_testing(scene, pipeline, seed);
      cell.scene_ids.push_back(scene.id);
      cell.per_scene.push_back(evaluate(res.prediction, scene.ground_truth));
      pooled.add(res.prediction, scene.ground_truth);
      cell.samples.push_back(std::move(res.samples));
      cell.phase_r.push_back(std::move(res.phase_variance_error_r));
    }
    cell.pooled = pooled.report();
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

namespace {

using CellKey = std::tuple<std::string, int, int, std::uint64_t>;

std::set<CellKey> existing_cells(const std::filesystem::path& csv) {
  std::set<CellKey> done;
  std::ifstream in(csv);
  if (!in) return done;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string scene_id, sampler, budget, phases, skip, seed;
    if (!std::getline(fields, scene_id, ',') ||
        !std::getline(fields, sampler, ',') ||
        !std::getline(fields, budget, ',') ||
        !std::getline(fields, phases, ','))
      continue;
    for (int i = 0; i < 4; ++i) std::getline(fields, skip, ',');
    if (!std::getline(fields, seed, ',')) continue;
    if (scene_id != "ALL") continue;
    try {
      done.insert({sampler, std::stoi(budget), std::stoi(phases),
                   std::stoull(seed)});
    } catch (const std::exception&) {
      // malformed row; treat the cell as absent
    }
  }
  return done;
}

struct AllRow {
  std::string sampler;
  int budget;
  double rmse_mm;
};

std::vector<AllRow> pooled_rows(const std::filesystem::path& csv) {
  std::vector<AllRow> rows;
  std::ifstream in(csv);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<std::string> cols;
    std::string col;
    while (std::getline(fields, col, ',')) cols.push_back(col);
    if (cols.size() < 9 || cols[0] != "ALL") continue;
    if (cols.size() >= 10 && !cols[9].empty()) continue;  // failed cell
    try {
      rows.push_back({cols[1], std::stoi(cols[2]), std::stod(cols[4])});
    } catch (const std::exception&) {
    }
  }
  return rows;
}

void write_target_table(const std::filesystem::path& csv,
                        const std::vector<double>& targets, double n_pixels) {
  const auto rows = pooled_rows(csv);
  std::map<std::string, std::vector<std::pair<double, double>>> by_sampler;
  for (const auto& row : rows)
    if (row.rmse_mm > 0.0 && row.budget > 0)
      by_sampler[row.sampler].push_back(
          {std::log(row.rmse_mm), std::log(static_cast<double>(row.budget))});

  auto path = csv;
  path.replace_filename(csv.stem().string() + "_budget_for_target.csv");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sampler,target_rmse_mm,budget_pixels,budget_percent,n_points\n";
  for (const auto& [sampler, pts] : by_sampler) {
    if (pts.size() < 2) continue;  // need a sweep to regress on
    // ln(budget) = a + b ln(rmse), per the budget-for-target protocol.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : pts) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double n = static_cast<double>(pts.size());
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) continue;
    const double b = (n * sxy - sx * sy) / denom;
    const double a = (sy - b * sx) / n;
    for (double target : targets) {
      const double budget = std::exp(a + b * std::log(target));
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%.1f,%.1f,%.4f,%zu", sampler.c_str(),
                    target, budget, 100.0 * budget / n_pixels, pts.size());
      out << buf << "\n";
    }
  }
}

}  // namespace

void run_bench(const std::vector<Scene>& scenes, const ExperimentMatrix& matrix,
               const BenchOptions& options,
               const std::filesystem::path& out_csv) {
  matrix.validate();
  options.config.validate();
  if (scenes.empty()) throw InvalidArgumentError("no scenes");

  std::vector<std::string> ids;
  ids.reserve(scenes.size());
  for (const auto& s : scenes) ids.push_back(s.id);
  const SplitResult split = split_train_test(ids);

  const std::set<CellKey> done = existing_cells(out_csv);
  const bool fresh = !std::filesystem::exists(out_csv);
  if (out_csv.has_parent_path())
    std::filesystem::create_directories(out_csv.parent_path());
  std::ofstream out(out_csv, std::ios::app);
  if (!out) throw IoError("cannot open " + out_csv.string());
  if (fresh) out << metric_csv_header() << "\n";

  auto corr_path = out_csv;
  corr_path.replace_filename(out_csv.stem().string() + "_correlations.csv");

  RunConfig config = options.config;
  config.scenario = matrix.scenario;

  for (SamplerKind sampler : matrix.samplers) {
    const bool single_shot =
        sampler == SamplerKind::kRandom || sampler == SamplerKind::kGrid;
    const std::vector<int> phase_list =
        single_shot ? std::vector<int>{1} : matrix.phase_counts;
    for (int budget : matrix.budgets) {
      for (int phases : phase_list) {
        for (std::uint64_t seed : matrix.seeds) {
          const CellKey key{to_string(sampler), budget, phases, seed};
          if (done.count(key)) continue;

          const BenchCellResult cell = run_bench_cell(
              scenes, split, sampler, budget, phases, seed, config);

          if (cell.error.empty()) {
            for (std::size_t i = 0; i < cell.scene_ids.size(); ++i)
              out << metric_csv_row(cell.scene_ids[i], to_string(sampler),
                                    budget, phases, cell.per_scene[i], seed)
                  << "\n";
            out << metric_csv_row("ALL", to_string(sampler), budget, phases,
                                  cell.pooled, seed)
                << "\n";
          } else {
            out << metric_csv_row("ALL", to_string(sampler), budget, phases,
                                  MetricReport{}, seed, cell.error)
                << "\n";
          }
          out.flush();

          if (sampler == SamplerKind::kPm && cell.error.empty()) {
            const bool corr_fresh = !std::filesystem::exists(corr_path);
            std::ofstream corr(corr_path, std::ios::app);
            if (corr_fresh)
              corr << "scene_id,sampler,budget,phases,seed,phase,pearson_r\n";
            for (std::size_t i = 0; i < cell.scene_ids.size(); ++i) {
              for (std::size_t k = 0; k < cell.phase_r[i].size(); ++k) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.6f", cell.phase_r[i][k]);
                corr << cell.scene_ids[i] << ",pm," << budget << "," << phases
                     << "," << seed << "," << (k + 1) << "," << buf << "\n";
              }
            }
          }
        }
      }
    }
  }
  out.close();

  if (!options.target_rmse_mm.empty()) {
    const double n_pixels =
        static_cast<double>(scenes.front().width()) * scenes.front().height();
    write_target_table(out_csv, options.target_rmse_mm, n_pixels);
  }
}

}  // namespace adls
