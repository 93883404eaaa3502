#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dposelets/common.hpp"

namespace dposelets::imaging {

inline constexpr int kPatchSide = 61;

/// Row-major interleaved raster with intensities in [0,1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);
  Image(int width, int height, int channels, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  /// Luma 0.299R + 0.587G + 0.114B; a copy when already single-channel.
  Image to_gray() const;
  /// Replicates a gray channel; a copy when already RGB.
  Image to_rgb() const;
  Image with_channels(int channels) const;
  Image crop(int x0, int y0, int w, int h) const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Maps p to scale * R(rotation) * p + (tx, ty).
struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  Point apply(Point p) const;
  SimilarityTransform inverse() const;
  bool valid() const;

  static SimilarityTransform identity() { return {}; }
  static SimilarityTransform translation(double tx, double ty) { return {1.0, 0.0, tx, ty}; }
  /// Maps the square window (x, y, side) onto a patch of `patch_side` pixels.
  static SimilarityTransform window_to_patch(const Box& window, int patch_side = kPatchSide);
};

/// outer o inner: applies `inner` first.
SimilarityTransform compose(const SimilarityTransform& outer, const SimilarityTransform& inner);

struct PyramidLevel {
  double scale = 1.0;
  Image image;
};

struct ScalePyramid {
  double ratio = 0.0;
  std::vector<PyramidLevel> levels;
};

struct JitterConfig {
  double max_rotation = 0.3490658503988659;  // 20 degrees
  double scale_low = 0.7;
  double scale_high = 1.3;
  double max_translation_frac = 0.25;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct JitterDraw {
  Image patch;
  SimilarityTransform transform;
  double rotation = 0.0;
  double scale = 1.0;
  double dx = 0.0;
  double dy = 0.0;
};

Image load_image(const std::filesystem::path& path);
/// Binary PGM (1 channel) or PPM (3 channels), maxval 255.
void save_pnm(const Image& img, const std::filesystem::path& path);

/// Bilinear resize where destination pixel centre (x + 0.5) samples source
/// coordinate (x + 0.5) / scale; edges clamp.
Image resize(const Image& img, int out_width, int out_height, double scale_x, double scale_y);

ScalePyramid build_pyramid(const Image& img, double ratio, int min_side = kPatchSide);
/// Number of levels build_pyramid produces for a shorter side of `min_dim`.
int pyramid_level_count(int min_dim, double ratio, int min_side);

/// Patch pixel centres are mapped through t^-1 into the image and sampled
/// bilinearly; neighbours outside the image read as 0.5.
Image warp_patch(const Image& img, const SimilarityTransform& t, int side = kPatchSide);

/// Random rotation/scale about the patch centre plus translation, applied
/// after `base`. Deterministic in (cfg.rng_seed, draw_index).
JitterDraw jitter_sample(const Image& img, const SimilarityTransform& base, const JitterConfig& cfg,
                         std::uint64_t draw_index, int side = kPatchSide);

}  // namespace dposelets::imaging
