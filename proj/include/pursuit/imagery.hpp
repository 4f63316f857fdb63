#pragma once

#include "pursuit/core.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pursuit {

/// Row-major luminance image; rows index y, columns index x.
using GrayImage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FoveaFrame {
  GrayImage values;  // fovea_px x fovea_px
  long frame_index = 0;
};

struct FramePair {
  FoveaFrame previous;
  FoveaFrame current;
};

/// PGM parse failure; `offset` is the byte position where parsing stopped.
class PgmError : public std::runtime_error {
 public:
  PgmError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Decodes a binary (P5) or ASCII (P2) PGM; luminance is scaled to [0, 1].
GrayImage load_pgm(std::span<const std::byte> bytes);
GrayImage load_pgm(std::string_view bytes);
GrayImage read_pgm_file(const std::filesystem::path& path);

/// Encodes as 8-bit P5. Values are clamped to [0, 1] and rounded to 1/255 steps.
std::string save_pgm(const GrayImage& image);
void write_pgm_file(const std::filesystem::path& path, const GrayImage& image);

/// Maps an arbitrary image to [0, 1] by its min/max (constant images map to 0.5).
GrayImage rescale_to_unit(const GrayImage& image);

/// Dead-leaves texture: occluding disks with a power-law radius law, giving
/// an approximately 1/f amplitude spectrum with sharp edges. Values in [0, 1].
GrayImage synth_texture(std::uint64_t seed, Index width, Index height);

/// Zero mean, unit variance. Constant images become all-zero.
GrayImage normalize_contrast(const GrayImage& image);

/// 55x55 window centered at (center_x, center_y) with bilinear interpolation
/// and toroidal wrap. Window pixel (r, c) samples image point
/// (center_x + c - 27, center_y + r - 27).
FoveaFrame sample_window(const GrayImage& image, double center_x, double center_y, long frame_index);

/// Bilinear sample at a single real-valued point with toroidal wrap.
double sample_bilinear(const GrayImage& image, double x, double y);

/// All *.pgm files in `dir`, sorted by file name, contrast-normalized.
std::vector<GrayImage> load_texture_dir(const std::filesystem::path& dir);

/// `count` synthetic textures with seeds derived from `seed`; contrast-normalized.
std::vector<GrayImage> synth_corpus(std::uint64_t seed, int count, Index size);

}  // namespace pursuit
