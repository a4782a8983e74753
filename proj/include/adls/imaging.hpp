#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adls/core.hpp"

namespace adls {

struct HsvPixel {
  double h = 0.0;  // [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

/// Hexcone HSV; achromatic pixels get h = 0, s = 0.
HsvPixel rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// Depth interchange: 16-bit grayscale PNG, raw = floor(meters * 256) clamped
// to [1, 65535] for valid pixels, 0 = missing.
DepthMap load_depth_png(const std::filesystem::path& path);
void save_depth_png(const DepthMap& map, const std::filesystem::path& path);

RgbImage load_rgb_png(const std::filesystem::path& path);
void save_rgb_png(const RgbImage& image, const std::filesystem::path& path);

/// target_w x target_h region flush with the bottom edge and horizontally
/// centered (odd slack gives the left margin the extra column), applied to
/// RGB, ground truth, and samples alike.
Scene crop_bottom_center(const Scene& scene, int target_w, int target_h);

// Dataset manifest: one scene per line, "id<TAB>rgb<TAB>depth" with "-" for a
// missing RGB path. Relative paths resolve against the manifest directory.
struct ManifestEntry {
  std::string id;
  std::string rgb_path;  // empty when absent
  std::string depth_path;
};

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::vector<ManifestEntry>& entries,
                   const std::filesystem::path& path);

Scene load_scene(const ManifestEntry& entry,
                 const std::filesystem::path& base_dir);
/// Writes {id}_gt.png (+ {id}_rgb.png when present) under dir.
ManifestEntry save_scene(const Scene& scene, const std::filesystem::path& dir);

}  // namespace adls
