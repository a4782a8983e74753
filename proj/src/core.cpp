#include "adls/core.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "adls/parallel.hpp"

namespace adls {

namespace {
std::atomic<int> g_num_threads{0};
}

void set_num_threads(int n) { g_num_threads.store(n < 0 ? 0 : n); }

int num_threads() {
  const int n = g_num_threads.load();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::string to_string(Scenario s) {
  return s == Scenario::kRgbd ? "rgbd" : "d";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "rgbd") return Scenario::kRgbd;
  if (s == "d") return Scenario::kDepthOnly;
  throw InvalidArgumentError("unknown scenario: " + s);
}

std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::kPm:
      return "pm";
    case SamplerKind::kMax:
      return "max";
    case SamplerKind::kRandom:
      return "random";
    case SamplerKind::kGrid:
      return "grid";
    case SamplerKind::kOracleSqErr:
      return "oracle";
  }
  throw InvalidArgumentError("bad sampler enum");
}

SamplerKind sampler_from_string(const std::string& s) {
  if (s == "pm") return SamplerKind::kPm;
  if (s == "max") return SamplerKind::kMax;
  if (s == "random") return SamplerKind::kRandom;
  if (s == "grid") return SamplerKind::kGrid;
  if (s == "oracle") return SamplerKind::kOracleSqErr;
  throw InvalidArgumentError("unknown sampler: " + s);
}

DepthMap::DepthMap(int width, int height) {
  if (width <= 0 || height <= 0)
    throw InvalidArgumentError("DepthMap dimensions must be positive");
  values_ = DepthArray::Zero(height, width);
  valid_ = MaskArray::Constant(height, width, false);
}

DepthMap DepthMap::constant(int width, int height, double depth) {
  DepthMap m(width, height);
  if (!(std::isfinite(depth) && depth >= 0.0))
    throw InvalidArgumentError("depth must be finite and non-negative");
  m.values_.setConstant(depth);
  m.valid_.setConstant(true);
  return m;
}

void DepthMap::set(int col, int row, double depth) {
  if (!(std::isfinite(depth) && depth >= 0.0))
    throw InvalidArgumentError("depth must be finite and non-negative");
  values_(row, col) = depth;
  valid_(row, col) = true;
}

void DepthMap::clear(int col, int row) {
  values_(row, col) = 0.0;
  valid_(row, col) = false;
}

SampleMap::SampleMap(int width, int height) {
  if (width <= 0 || height <= 0)
    throw InvalidArgumentError("SampleMap dimensions must be positive");
  values_ = DepthArray::Zero(height, width);
  mask_ = MaskArray::Constant(height, width, false);
}

void SampleMap::add(const Pixel& p, double depth) {
  if (p.col < 0 || p.col >= width() || p.row < 0 || p.row >= height())
    throw InvalidArgumentError("sample position out of bounds");
  if (mask_(p.row, p.col))
    throw InvalidArgumentError("position already measured (no repetitions)");
  if (!(std::isfinite(depth) && depth >= 0.0))
    throw InvalidArgumentError("measured depth must be finite and non-negative");
  values_(p.row, p.col) = depth;
  mask_(p.row, p.col) = true;
  measured_.push_back(p);
}

RgbImage::RgbImage(int width, int height)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0)
    throw InvalidArgumentError("RgbImage dimensions must be positive");
  data_.assign(static_cast<std::size_t>(width) * height * 3, 0);
}

void RgbImage::set(int col, int row, std::uint8_t r, std::uint8_t g,
                   std::uint8_t b) {
  auto* px = data_.data() + 3 * (static_cast<std::size_t>(row) * width_ + col);
  px[0] = r;
  px[1] = g;
  px[2] = b;
}

std::vector<int> allocate_phases(int budget, int phases) {
  if (phases < 1 || budget < 1 || phases > budget)
    throw InvalidArgumentError("invalid plan: need 1 <= phases <= budget");
  const int base = budget / phases;
  const int extra = budget % phases;
  std::vector<int> out(phases, base);
  for (int i = 0; i < extra; ++i) out[i] += 1;
  return out;
}

void SamplingPlan::validate() const {
  const auto counts = allocate_phases(budget, phases);  // checks K, B
  int sum = 0;
  for (int c : counts) sum += c;
  if (sum != budget) throw InvalidArgumentError("per-phase counts do not sum to budget");
  if ((sampler == SamplerKind::kRandom || sampler == SamplerKind::kGrid) &&
      phases != 1)
    throw InvalidArgumentError("random and grid samplers are single-shot (phases must be 1)");
  if (ensemble_size < 1) throw InvalidArgumentError("ensemble size must be positive");
}

void RunConfig::validate() const {
  if (trees_per_phase_forest < 1 || trees_final < 1 ||
      pixels_per_image_subsample < 1)
    throw InvalidArgumentError("tree and subsample counts must be positive");
  if (neighbors < 1) throw InvalidArgumentError("neighbor count must be >= 1");
  if (noise_sigma && !(*noise_sigma >= 0.0 && std::isfinite(*noise_sigma)))
    throw InvalidArgumentError("noise sigma must be finite and non-negative");
  if (crop && (crop->first <= 0 || crop->second <= 0))
    throw InvalidArgumentError("crop dimensions must be positive");
}

std::vector<SceneViolation> validate_scene(const Scene& scene,
                                           const ValidateOptions& opts) {
  std::vector<SceneViolation> out;
  const auto& gt = scene.ground_truth;
  const auto& samples = scene.samples;

  if (samples.width() != gt.width() || samples.height() != gt.height()) {
    out.push_back({"dimension mismatch", {-1, -1},
                   "sample map does not match ground truth dimensions"});
    return out;  // positional checks below would be meaningless
  }
  if (scene.rgb &&
      (scene.rgb->width() != gt.width() || scene.rgb->height() != gt.height())) {
    out.push_back({"dimension mismatch", {-1, -1},
                   "rgb image does not match ground truth dimensions"});
  }

  for (int row = 0; row < gt.height(); ++row) {
    for (int col = 0; col < gt.width(); ++col) {
      if (gt.valid(col, row)) {
        const double d = gt.depth(col, row);
        if (!(std::isfinite(d) && d >= 0.0))
          out.push_back({"invalid ground-truth depth", {col, row}, ""});
      }
    }
  }

  int measured_in_mask = 0;
  for (const Pixel& p : samples.measured_pixels()) {
    if (!samples.measured(p)) {
      out.push_back({"sample list/mask mismatch", p, ""});
      continue;
    }
    ++measured_in_mask;
    if (!gt.valid(p)) {
      out.push_back({"sample outside valid GT", p, ""});
      continue;
    }
    const double v = samples.value(p);
    if (!(std::isfinite(v) && v >= 0.0)) {
      out.push_back({"invalid measured depth", p, ""});
    } else if (opts.require_measured_equals_gt && v != gt.depth(p)) {
      out.push_back({"measured value differs from ground truth", p, ""});
    }
  }
  if (measured_in_mask != samples.count() ||
      samples.measured_mask().count() != samples.count()) {
    out.push_back({"sample count mismatch", {-1, -1}, ""});
  }
  return out;
}

}  // namespace adls
