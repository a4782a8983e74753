#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace adls {

// Dense per-pixel storage is (height, width); index order is (row, col).
using DepthArray = Eigen::ArrayXXd;
using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct CorruptError : Error {
  using Error::Error;
};
struct InvalidArgumentError : Error {
  using Error::Error;
};
struct FitError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};

struct Pixel {
  int col = 0;
  int row = 0;

  friend bool operator==(const Pixel& a, const Pixel& b) {
    return a.col == b.col && a.row == b.row;
  }
  friend bool operator!=(const Pixel& a, const Pixel& b) { return !(a == b); }
};

inline std::int64_t row_major_index(const Pixel& p, int width) {
  return static_cast<std::int64_t>(p.row) * width + p.col;
}

inline int l1_distance(const Pixel& a, const Pixel& b) {
  return std::abs(a.col - b.col) + std::abs(a.row - b.row);
}

enum class Scenario { kRgbd, kDepthOnly };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

/// Dense depth image in meters; pixels are either valid or missing.
class DepthMap {
 public:
  DepthMap(int width, int height);
  static DepthMap constant(int width, int height, double depth);

  int width() const { return static_cast<int>(values_.cols()); }
  int height() const { return static_cast<int>(values_.rows()); }

  bool valid(int col, int row) const { return valid_(row, col); }
  bool valid(const Pixel& p) const { return valid_(p.row, p.col); }
  // Only meaningful where valid().
  double depth(int col, int row) const { return values_(row, col); }
  double depth(const Pixel& p) const { return values_(p.row, p.col); }

  void set(int col, int row, double depth);
  void set(const Pixel& p, double depth) { set(p.col, p.row, depth); }
  void clear(int col, int row);

  std::int64_t valid_count() const { return valid_.count(); }
  const DepthArray& values() const { return values_; }
  const MaskArray& valid_mask() const { return valid_; }

 private:
  DepthArray values_;  // 0 where missing
  MaskArray valid_;
};

/// The measured-sample map D: a growing set of (pixel, depth) measurements.
/// Positions never repeat.
class SampleMap {
 public:
  SampleMap(int width, int height);

  int width() const { return static_cast<int>(values_.cols()); }
  int height() const { return static_cast<int>(values_.rows()); }
  int count() const { return static_cast<int>(measured_.size()); }

  bool measured(int col, int row) const { return mask_(row, col); }
  bool measured(const Pixel& p) const { return mask_(p.row, p.col); }
  double value(int col, int row) const { return values_(row, col); }
  double value(const Pixel& p) const { return values_(p.row, p.col); }

  void add(const Pixel& p, double depth);

  /// Measured positions in insertion order.
  const std::vector<Pixel>& measured_pixels() const { return measured_; }
  const DepthArray& values() const { return values_; }
  const MaskArray& measured_mask() const { return mask_; }

 private:
  DepthArray values_;
  MaskArray mask_;
  std::vector<Pixel> measured_;
};

/// 8-bit interleaved RGB image.
class RgbImage {
 public:
  RgbImage(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  const std::uint8_t* at(int col, int row) const {
    return data_.data() + 3 * (static_cast<std::size_t>(row) * width_ + col);
  }
  void set(int col, int row, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

/// One scene: optional RGB, semi-dense ground truth, and the mutable
/// measured-sample map.
struct Scene {
  std::string id;
  std::optional<RgbImage> rgb;
  DepthMap ground_truth;
  SampleMap samples;

  Scene(std::string id_, std::optional<RgbImage> rgb_, DepthMap gt)
      : id(std::move(id_)),
        rgb(std::move(rgb_)),
        ground_truth(std::move(gt)),
        samples(ground_truth.width(), ground_truth.height()) {}

  int width() const { return ground_truth.width(); }
  int height() const { return ground_truth.height(); }
};

enum class SamplerKind { kPm, kMax, kRandom, kGrid, kOracleSqErr };

std::string to_string(SamplerKind k);
SamplerKind sampler_from_string(const std::string& s);

/// Splits a budget over phases: the first (budget % phases) phases get the
/// extra sample. Throws InvalidArgumentError unless 1 <= phases <= budget.
std::vector<int> allocate_phases(int budget, int phases);

struct SamplingPlan {
  int budget = 256;
  int phases = 1;
  SamplerKind sampler = SamplerKind::kPm;
  int ensemble_size = 40;
  std::uint64_t seed = 1;

  std::vector<int> per_phase() const { return allocate_phases(budget, phases); }
  /// Throws InvalidArgumentError on any violated plan invariant.
  void validate() const;
};

struct RunConfig {
  Scenario scenario = Scenario::kRgbd;
  int trees_per_phase_forest = 40;
  int trees_final = 500;
  int pixels_per_image_subsample = 2048;
  int neighbors = 3;
  std::optional<double> noise_sigma;
  std::optional<std::pair<int, int>> crop;  // width x height

  void validate() const;
};

struct SceneViolation {
  std::string invariant;
  Pixel pixel{-1, -1};  // (-1,-1) when not pixel-specific
  std::string detail;
};

struct ValidateOptions {
  // Measured values must equal ground truth exactly; turn off when the
  // additive-noise model is active.
  bool require_measured_equals_gt = true;
};

std::vector<SceneViolation> validate_scene(const Scene& scene,
                                           const ValidateOptions& opts = {});

}  // namespace adls
