#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adls/bench.hpp"
#include "adls/core.hpp"
#include "adls/imaging.hpp"
#include "adls/metrics.hpp"
#include "adls/parallel.hpp"
#include "adls/rng.hpp"
#include "adls/sampling.hpp"
#include "adls/synth.hpp"

namespace fs = std::filesystem;

namespace {

struct SynthParams {
  int scenes = 20;
  int width = 160;
  int height = 120;
  int objects = 12;
  int scenes_per_drive = 4;
  double depth_min = 2.0;
  double depth_max = 85.0;
  double gt_density = 0.5;
  bool no_rgb = false;
};

void add_synth_options(CLI::App* cmd, SynthParams& p, const char* prefix) {
  const std::string pre(prefix);
  cmd->add_option("--" + pre + "scenes", p.scenes, "Number of scenes");
  cmd->add_option("--width", p.width, "Scene width in pixels");
  cmd->add_option("--height", p.height, "Scene height in pixels");
  cmd->add_option("--objects", p.objects, "Objects per scene");
  cmd->add_option("--scenes-per-drive", p.scenes_per_drive,
                  "Scenes grouped into one drive id");
  cmd->add_option("--depth-min", p.depth_min, "Minimum depth in meters");
  cmd->add_option("--depth-max", p.depth_max, "Maximum depth in meters");
  cmd->add_option("--gt-density", p.gt_density,
                  "Fraction of pixels with valid ground truth");
  cmd->add_flag("--no-rgb", p.no_rgb, "Generate depth-only scenes");
}

std::vector<adls::Scene> generate_corpus(const SynthParams& p,
                                         std::uint64_t seed) {
  adls::SynthSpec spec;
  spec.width = p.width;
  spec.height = p.height;
  spec.n_objects = p.objects;
  spec.depth_min = p.depth_min;
  spec.depth_max = p.depth_max;
  spec.gt_density = p.gt_density;
  spec.rgb_mode =
      p.no_rgb ? adls::RgbMode::kNone : adls::RgbMode::kFlatColorPerObject;

  std::vector<adls::Scene> scenes;
  scenes.reserve(p.scenes);
  const int per_drive = std::max(1, p.scenes_per_drive);
  for (int i = 0; i < p.scenes; ++i) {
    char id[64];
    std::snprintf(id, sizeof(id), "drive%03d_img%05d", i / per_drive, i);
    adls::Rng rng(adls::derive_seed(
        seed, {adls::stream::kScene, static_cast<std::uint64_t>(i)}));
    scenes.push_back(adls::generate_scene(spec, id, rng));
  }
  return scenes;
}

std::optional<std::pair<int, int>> parse_crop(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto x = s.find('x');
  if (x == std::string::npos)
    throw adls::InvalidArgumentError("crop must look like 1216x352");
  return std::make_pair(std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1)));
}

std::vector<adls::Scene> load_corpus(const fs::path& manifest,
                                     const std::optional<std::pair<int, int>>& crop) {
  const auto entries = adls::load_manifest(manifest);
  if (entries.empty())
    throw adls::DataError("manifest lists no scenes: " + manifest.string());
  const fs::path base = manifest.parent_path();
  std::vector<adls::Scene> scenes;
  scenes.reserve(entries.size());
  for (const auto& e : entries) {
    adls::Scene scene = adls::load_scene(e, base);
    if (crop) scene = adls::crop_bottom_center(scene, crop->first, crop->second);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

int cmd_synth(const SynthParams& params, const fs::path& out_dir,
              std::uint64_t seed) {
  const auto scenes = generate_corpus(params, seed);
  std::vector<adls::ManifestEntry> entries;
  entries.reserve(scenes.size());
  for (const auto& scene : scenes)
    entries.push_back(adls::save_scene(scene, out_dir));
  adls::save_manifest(entries, out_dir / "manifest.tsv");
  std::printf("wrote %zu scenes + manifest.tsv to %s\n", entries.size(),
              out_dir.string().c_str());
  return 0;
}

int cmd_train(const fs::path& manifest, const fs::path& model_dir,
              const adls::SamplingPlan& plan, const adls::RunConfig& config) {
  auto scenes = load_corpus(manifest, config.crop);
  adls::TrainStats stats;
  const adls::TrainedPipeline pipeline =
      adls::train_pipeline(scenes, plan, config, &stats);
  adls::save_pipeline(pipeline, model_dir);

  for (std::size_t k = 0; k < stats.phases.size(); ++k) {
    const auto& ph = stats.phases[k];
    const int drawn = ph.drawn_per_scene.empty() ? 0 : ph.drawn_per_scene[0];
    std::printf("phase %zu/%zu: fit %.2fs, sample %.2fs, %d samples/scene\n",
                k + 1, stats.phases.size(), ph.fit_seconds, ph.sample_seconds,
                drawn);
  }
  std::printf("final forest: %.2fs on %d pooled rows\n",
              stats.final_fit_seconds, stats.final_pooled_rows);
  std::printf("pipeline saved to %s\n", model_dir.string().c_str());
  return 0;
}

int cmd_complete(const fs::path& manifest, const fs::path& model_dir,
                 const fs::path& out_dir, std::optional<std::uint64_t> seed) {
  const adls::TrainedPipeline pipeline = adls::load_pipeline(model_dir);
  const std::uint64_t test_seed = seed.value_or(pipeline.plan.seed);
  const auto entries = adls::load_manifest(manifest);
  const fs::path base = manifest.parent_path();
  fs::create_directories(out_dir);

  for (const auto& e : entries) {
    adls::Scene scene = adls::load_scene(e, base);
    if (pipeline.config.crop)
      scene = adls::crop_bottom_center(scene, pipeline.config.crop->first,
                                       pipeline.config.crop->second);
    const adls::TestResult res =
        adls::run_phased_testing(scene, pipeline, test_seed);
    adls::save_depth_png(res.prediction, out_dir / (e.id + "_pred.png"));

    adls::DepthMap mask(scene.width(), scene.height());
    for (const adls::Pixel& p : res.samples.measured_pixels())
      mask.set(p, res.samples.value(p));
    adls::save_depth_png(mask, out_dir / (e.id + "_mask.png"));
  }

  std::ofstream run_cfg(out_dir / "run.cfg", std::ios::trunc);
  run_cfg << "sampler = " << adls::to_string(pipeline.plan.sampler) << "\n"
          << "budget = " << pipeline.plan.budget << "\n"
          << "phases = " << pipeline.plan.phases << "\n"
          << "seed = " << test_seed << "\n";
  if (pipeline.config.crop)
    run_cfg << "crop = " << pipeline.config.crop->first << "x"
            << pipeline.config.crop->second << "\n";
  std::printf("completed %zu scenes into %s\n", entries.size(),
              out_dir.string().c_str());
  return 0;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& manifest,
             const fs::path& out_csv) {
  std::string sampler = "unknown";
  int budget = 0, phases = 0;
  std::uint64_t seed = 0;
  std::optional<std::pair<int, int>> crop;
  if (fs::exists(pred_dir / "run.cfg")) {
    std::ifstream in(pred_dir / "run.cfg");
    std::string line;
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    if (kv.count("sampler")) sampler = kv["sampler"];
    if (kv.count("budget")) budget = std::stoi(kv["budget"]);
    if (kv.count("phases")) phases = std::stoi(kv["phases"]);
    if (kv.count("seed")) seed = std::stoull(kv["seed"]);
    if (kv.count("crop")) crop = parse_crop(kv["crop"]);
  }

  const auto entries = adls::load_manifest(manifest);
  const fs::path base = manifest.parent_path();
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  std::ofstream out(out_csv, std::ios::trunc);
  if (!out) throw adls::IoError("cannot write " + out_csv.string());
  out << adls::metric_csv_header() << "\n";

  adls::MetricAccumulator pooled;
  for (const auto& e : entries) {
    adls::Scene scene = adls::load_scene(e, base);
    if (crop)
      scene = adls::crop_bottom_center(scene, crop->first, crop->second);
    const fs::path pred_path = pred_dir / (e.id + "_pred.png");
    if (!fs::exists(pred_path))
      throw adls::IoError("missing prediction: " + pred_path.string());
    const adls::DepthMap pred = adls::load_depth_png(pred_path);
    const adls::MetricReport report =
        adls::evaluate(pred, scene.ground_truth);
    pooled.add(pred, scene.ground_truth);
    out << adls::metric_csv_row(e.id, sampler, budget, phases, report, seed)
        << "\n";
  }
  out << adls::metric_csv_row("ALL", sampler, budget, phases, pooled.report(),
                              seed)
      << "\n";
  std::printf("wrote %s\n", out_csv.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive depth sampling & completion toolkit"};
  app.set_config("--config", "", "Flat key = value config file; flags win");
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  int threads = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Global RNG seed");
  app.add_option("--threads", threads, "Worker threads (0 = hardware)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  SynthParams synth_params;
  add_synth_options(synth, synth_params, "");
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a sampling pipeline");
  std::string train_manifest, train_out, train_sampler = "pm",
              train_scenario = "rgbd", train_crop;
  adls::RunConfig train_config;
  int train_budget = 256, train_phases = 8;
  double train_noise = -1.0;
  train->add_option("--manifest", train_manifest, "Dataset manifest")->required();
  train->add_option("--out", train_out, "Model directory")->required();
  train->add_option("--sampler", train_sampler,
                    "pm | max | random | grid | oracle");
  train->add_option("--budget", train_budget, "Measurements per scene");
  train->add_option("--phases", train_phases, "Sampling phases");
  train->add_option("--scenario", train_scenario, "rgbd | d");
  train->add_option("--trees-phase", train_config.trees_per_phase_forest,
                    "Trees per phase forest (ensemble size)");
  train->add_option("--trees-final", train_config.trees_final,
                    "Trees in the final forest");
  train->add_option("--subsample", train_config.pixels_per_image_subsample,
                    "Training pixels per image");
  train->add_option("--knn", train_config.neighbors,
                    "Measured neighbors per feature vector");
  train->add_option("--noise-sigma", train_noise,
                    "Additive Gaussian measurement noise (meters)");
  train->add_option("--crop", train_crop, "Crop WxH from bottom center");

  // complete
  auto* complete =
      app.add_subcommand("complete", "Sample + predict dense depth");
  std::string complete_manifest, complete_model, complete_out;
  complete->add_option("--manifest", complete_manifest, "Dataset manifest")
      ->required();
  complete->add_option("--model", complete_model, "Model directory")->required();
  complete->add_option("--out", complete_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate predictions against GT");
  std::string eval_pred, eval_manifest, eval_out;
  eval->add_option("--pred", eval_pred, "Prediction directory")->required();
  eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required();
  eval->add_option("--out", eval_out, "Output CSV")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "Run an experiment matrix");
  std::string bench_manifest, bench_scenario = "rgbd", bench_out,
              bench_data_dir, bench_crop;
  std::vector<std::string> bench_samplers{"pm", "random", "grid"};
  std::vector<int> bench_budgets{256};
  std::vector<int> bench_phases{8};
  std::vector<std::uint64_t> bench_seeds{1};
  std::vector<double> bench_targets;
  SynthParams bench_synth;
  std::uint64_t bench_data_seed = 7;
  adls::RunConfig bench_config;
  double bench_noise = -1.0;
  bench->add_option("--manifest", bench_manifest,
                    "Dataset manifest (omit to generate synthetic data)");
  bench->add_option("--samplers", bench_samplers, "Samplers to compare")
      ->delimiter(',');
  bench->add_option("--budgets", bench_budgets, "Budgets to sweep")
      ->delimiter(',');
  bench->add_option("--phases", bench_phases, "Phase counts to sweep")
      ->delimiter(',');
  bench->add_option("--seeds", bench_seeds, "Seeds per cell")->delimiter(',');
  bench->add_option("--scenario", bench_scenario, "rgbd | d");
  bench->add_option("--out", bench_out, "Results CSV")->required();
  bench->add_option("--target-rmse", bench_targets,
                    "Emit budget-for-target table for these RMSEs (mm)")
      ->delimiter(',');
  bench->add_option("--trees-phase", bench_config.trees_per_phase_forest,
                    "Trees per phase forest");
  bench->add_option("--trees-final", bench_config.trees_final,
                    "Trees in the final forest");
  bench->add_option("--subsample", bench_config.pixels_per_image_subsample,
                    "Training pixels per image");
  bench->add_option("--knn", bench_config.neighbors, "Measured neighbors");
  bench->add_option("--noise-sigma", bench_noise,
                    "Additive Gaussian measurement noise (meters)");
  bench->add_option("--crop", bench_crop, "Crop WxH from bottom center");
  bench->add_option("--data-seed", bench_data_seed,
                    "Seed for generated benchmark data");
  bench->add_option("--data-dir", bench_data_dir,
                    "Where generated benchmark data goes");
  add_synth_options(bench, bench_synth, "synth-");

  CLI11_PARSE(app, argc, argv);
  adls::set_num_threads(threads);

  try {
    if (*synth) return cmd_synth(synth_params, synth_out, seed);

    if (*train) {
      adls::SamplingPlan plan;
      plan.budget = train_budget;
      plan.phases = train_phases;
      plan.sampler = adls::sampler_from_string(train_sampler);
      if (plan.sampler == adls::SamplerKind::kRandom ||
          plan.sampler == adls::SamplerKind::kGrid)
        plan.phases = 1;
      plan.seed = seed;
      adls::RunConfig config = train_config;
      config.scenario = adls::scenario_from_string(train_scenario);
      config.crop = parse_crop(train_crop);
      if (train_noise >= 0.0) config.noise_sigma = train_noise;
      plan.ensemble_size = config.trees_per_phase_forest;
      return cmd_train(train_manifest, train_out, plan, config);
    }

    if (*complete) {
      std::optional<std::uint64_t> test_seed;
      if (seed_opt->count() > 0) test_seed = seed;
      return cmd_complete(complete_manifest, complete_model, complete_out,
                          test_seed);
    }

    if (*eval) return cmd_eval(eval_pred, eval_manifest, eval_out);

    if (*bench) {
      std::vector<adls::Scene> scenes;
      if (!bench_manifest.empty()) {
        scenes = load_corpus(bench_manifest, parse_crop(bench_crop));
      } else {
        scenes = generate_corpus(bench_synth, bench_data_seed);
        fs::path data_dir(bench_data_dir);
        if (data_dir.empty()) {
          data_dir = bench_out;
          data_dir.replace_extension();
          data_dir += "_data";
        }
        std::vector<adls::ManifestEntry> entries;
        for (const auto& scene : scenes)
          entries.push_back(adls::save_scene(scene, data_dir));
        adls::save_manifest(entries, data_dir / "manifest.tsv");
      }
      adls::ExperimentMatrix matrix;
      for (const auto& s : bench_samplers)
        matrix.samplers.push_back(adls::sampler_from_string(s));
      matrix.budgets = bench_budgets;
      matrix.phase_counts = bench_phases;
      matrix.seeds = bench_seeds;
      matrix.scenario = adls::scenario_from_string(bench_scenario);
      adls::BenchOptions options;
      options.config = bench_config;
      options.config.scenario = matrix.scenario;
      if (bench_noise >= 0.0) options.config.noise_sigma = bench_noise;
      options.target_rmse_mm = bench_targets;
      adls::run_bench(scenes, matrix, options, bench_out);
      std::printf("bench results in %s\n", bench_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
