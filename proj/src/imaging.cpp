#include "adls/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace adls {

HsvPixel rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double rf = r / 255.0, gf = g / 255.0, bf = b / 255.0;
  const double maxc = std::max({rf, gf, bf});
  const double minc = std::min({rf, gf, bf});
  const double delta = maxc - minc;

  HsvPixel out;
  out.v = maxc;
  if (maxc > 0.0) out.s = delta / maxc;
  if (delta > 0.0) {
    double h;
    if (maxc == rf)
      h = std::fmod((gf - bf) / delta, 6.0);
    else if (maxc == gf)
      h = (bf - rf) / delta + 2.0;
    else
      h = (rf - gf) / delta + 4.0;
    h *= 60.0;
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    out.h = h;
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

void open_for_read(PngReader& r, std::FILE* fp,
                   const std::filesystem::path& path) {
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError("not a PNG file: " + path.string());
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                 nullptr);
  if (!r.png) throw IoError("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw IoError("png_create_info_struct failed");
  png_init_io(r.png, fp);
  png_set_sig_bytes(r.png, 8);
}

}  // namespace

DepthMap load_depth_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path.string());

  PngReader r;
  open_for_read(r, fp.get(), path);
  if (setjmp(png_jmpbuf(r.png)))
    throw CorruptError("corrupt PNG stream: " + path.string());

  png_read_info(r.png, r.info);
  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);
  if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY)
    throw FormatError("depth PNG must be 16-bit single-channel grayscale: " +
                      path.string());
  png_set_swap(r.png);  // 16-bit PNG samples are big-endian on disk
  png_read_update_info(r.png, r.info);

  DepthMap map(static_cast<int>(w), static_cast<int>(h));
  std::vector<std::uint16_t> row(w);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(r.png, reinterpret_cast<png_bytep>(row.data()), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      if (row[x] > 0)
        map.set(static_cast<int>(x), static_cast<int>(y), row[x] / 256.0);
    }
  }
  png_read_end(r.png, nullptr);
  return map;
}

void save_depth_png(const DepthMap& map, const std::filesystem::path& path) {
  // Check the full range first so a failed save never leaves a partial file.
  for (int row = 0; row < map.height(); ++row)
    for (int col = 0; col < map.width(); ++col)
      if (map.valid(col, row) && map.depth(col, row) >= 256.0)
        throw InvalidArgumentError(
            "depth out of 16-bit range (>= 256 m) at pixel (" +
            std::to_string(col) + "," + std::to_string(row) + ")");

  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  nullptr);
  if (!w.png) throw IoError("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png)))
    throw IoError("PNG write failed: " + path.string());

  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, map.width(), map.height(), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  png_set_swap(w.png);

  std::vector<std::uint16_t> row(map.width());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (!map.valid(x, y)) {
        row[x] = 0;
        continue;
      }
      const double raw = std::floor(map.depth(x, y) * 256.0);
      row[x] = static_cast<std::uint16_t>(
          std::clamp(raw, 1.0, 65535.0));
    }
    png_write_row(w.png, reinterpret_cast<png_bytep>(row.data()));
  }
  png_write_end(w.png, w.info);
}

RgbImage load_rgb_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path.string());

  PngReader r;
  open_for_read(r, fp.get(), path);
  if (setjmp(png_jmpbuf(r.png)))
    throw CorruptError("corrupt PNG stream: " + path.string());

  png_read_info(r.png, r.info);
  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);
  if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_RGB)
    throw FormatError("RGB PNG must be 8-bit 3-channel: " + path.string());
  png_read_update_info(r.png, r.info);

  RgbImage image(static_cast<int>(w), static_cast<int>(h));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(r.png,
                 image.data().data() + static_cast<std::size_t>(y) * w * 3,
                 nullptr);
  }
  png_read_end(r.png, nullptr);
  return image;
}

void save_rgb_png(const RgbImage& image, const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  nullptr);
  if (!w.png) throw IoError("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png)))
    throw IoError("PNG write failed: " + path.string());

  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, image.width(), image.height(), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  for (int y = 0; y < image.height(); ++y) {
    png_write_row(w.png,
                  const_cast<png_bytep>(image.data().data() +
                                        static_cast<std::size_t>(y) *
                                            image.width() * 3));
  }
  png_write_end(w.png, w.info);
}

Scene crop_bottom_center(const Scene& scene, int target_w, int target_h) {
  const int w = scene.width();
  const int h = scene.height();
  if (target_w <= 0 || target_h <= 0 || target_w > w || target_h > h)
    throw InvalidArgumentError("crop target exceeds source dimensions");
  const int col_off = (w - target_w + 1) / 2;  // extra column goes left
  const int row_off = h - target_h;

  DepthMap gt(target_w, target_h);
  for (int row = 0; row < target_h; ++row)
    for (int col = 0; col < target_w; ++col)
      if (scene.ground_truth.valid(col + col_off, row + row_off))
        gt.set(col, row, scene.ground_truth.depth(col + col_off, row + row_off));

  std::optional<RgbImage> rgb;
  if (scene.rgb) {
    RgbImage img(target_w, target_h);
    for (int row = 0; row < target_h; ++row)
      for (int col = 0; col < target_w; ++col) {
        const auto* px = scene.rgb->at(col + col_off, row + row_off);
        img.set(col, row, px[0], px[1], px[2]);
      }
    rgb = std::move(img);
  }

  Scene out(scene.id, std::move(rgb), std::move(gt));
  for (const Pixel& p : scene.samples.measured_pixels()) {
    const int col = p.col - col_off;
    const int row = p.row - row_off;
    if (col >= 0 && col < target_w && row >= 0 && row < target_h)
      out.samples.add({col, row}, scene.samples.value(p));
  }
  return out;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    ManifestEntry e;
    std::string rgb;
    if (!std::getline(fields, e.id, '\t') || !std::getline(fields, rgb, '\t') ||
        !std::getline(fields, e.depth_path, '\t'))
      throw FormatError("manifest line " + std::to_string(lineno) +
                        " is not id<TAB>rgb<TAB>depth: " + path.string());
    if (rgb != "-") e.rgb_path = rgb;
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_manifest(const std::vector<ManifestEntry>& entries,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  for (const auto& e : entries) {
    out << e.id << '\t' << (e.rgb_path.empty() ? "-" : e.rgb_path) << '\t'
        << e.depth_path << '\n';
  }
  if (!out) throw IoError("manifest write failed: " + path.string());
}

namespace {
std::filesystem::path resolve(const std::string& p,
                              const std::filesystem::path& base) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}
}  // namespace

Scene load_scene(const ManifestEntry& entry,
                 const std::filesystem::path& base_dir) {
  DepthMap gt = load_depth_png(resolve(entry.depth_path, base_dir));
  std::optional<RgbImage> rgb;
  if (!entry.rgb_path.empty())
    rgb = load_rgb_png(resolve(entry.rgb_path, base_dir));
  return Scene(entry.id, std::move(rgb), std::move(gt));
}

ManifestEntry save_scene(const Scene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ManifestEntry entry;
  entry.id = scene.id;
  entry.depth_path = scene.id + "_gt.png";
  save_depth_png(scene.ground_truth, dir / entry.depth_path);
  if (scene.rgb) {
    entry.rgb_path = scene.id + "_rgb.png";
    save_rgb_png(*scene.rgb, dir / entry.rgb_path);
  }
  return entry;
}

}  // namespace adls
