#include "dposelets/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dposelets::features {

using imaging::Image;

void HogConfig::validate() const {
  const bool ok = cell > 0 && resample_side > 0 && resample_side % cell == 0 && block > 0 &&
                  block_stride > 0 && block <= cells_per_side() && orientations > 0 && clip > 0 &&
                  epsilon > 0 && (cells_per_side() - block) % block_stride == 0;
  if (!ok) throw Error(Errc::InvalidConfig, "invalid HOG configuration");
}

std::string HogConfig::tag() const {
  const double fields[] = {static_cast<double>(resample_side), static_cast<double>(cell),
                           static_cast<double>(block), static_cast<double>(block_stride),
                           static_cast<double>(orientations), clip, epsilon};
  return "hog:" + hex64(fnv1a(fields, sizeof(fields)));
}

CellGrid hog_cells(const Image& gray, const HogConfig& cfg) {
  if (gray.channels() != 1) throw Error(Errc::ShapeMismatch, "HOG expects a single-channel image");
  CellGrid grid;
  grid.cells_x = gray.width() / cfg.cell;
  grid.cells_y = gray.height() / cfg.cell;
  grid.bins = cfg.orientations;
  grid.hist.assign(static_cast<std::size_t>(grid.cells_x) * grid.cells_y * grid.bins, 0.0f);
  const double bin_width = std::numbers::pi / cfg.orientations;
  const int c = cfg.cell;
  for (int cy = 0; cy < grid.cells_y; ++cy) {
    for (int cx = 0; cx < grid.cells_x; ++cx) {
      float* h = &grid.hist[(static_cast<std::size_t>(cy) * grid.cells_x + cx) * grid.bins];
      const int x0 = cx * c, y0 = cy * c;
      for (int y = y0; y < y0 + c; ++y) {
        const int ym = std::max(y - 1, y0), yp = std::min(y + 1, y0 + c - 1);
        for (int x = x0; x < x0 + c; ++x) {
          const int xm = std::max(x - 1, x0), xp = std::min(x + 1, x0 + c - 1);
          const float gx = gray.at(xp, y) - gray.at(xm, y);
          const float gy = gray.at(x, yp) - gray.at(x, ym);
          const float mag = std::sqrt(gx * gx + gy * gy);
          if (mag == 0.0f) continue;
          double angle = std::atan2(static_cast<double>(gy), static_cast<double>(gx));
          if (angle < 0) angle += std::numbers::pi;
          if (angle >= std::numbers::pi) angle -= std::numbers::pi;
          const double pos = angle / bin_width;
          const double lo = std::floor(pos);
          const float frac = static_cast<float>(pos - lo);
          const int b0 = static_cast<int>(lo) % grid.bins;
          const int b1 = (b0 + 1) % grid.bins;
          h[b0] += mag * (1.0f - frac);
          h[b1] += mag * frac;
        }
      }
    }
  }
  return grid;
}

std::vector<float> hog_normalize_window(const CellGrid& grid, int cx0, int cy0, int window_cells,
                                        const HogConfig& cfg) {
  const int bps = (window_cells - cfg.block) / cfg.block_stride + 1;
  const int bins = grid.bins;
  const std::size_t block_len = static_cast<std::size_t>(cfg.block) * cfg.block * bins;
  std::vector<float> out(static_cast<std::size_t>(bps) * bps * block_len);
  const float eps2 = static_cast<float>(cfg.epsilon * cfg.epsilon);
  const float clip = static_cast<float>(cfg.clip);
  std::vector<float> v(block_len);
  auto normalize = [&]() {
    float ss = 0.0f;
    for (float a : v) ss += a * a;
    const float inv = 1.0f / std::sqrt(ss + eps2);
    for (float& a : v) a = std::min(a * inv, clip);
  };
  std::size_t o = 0;
  for (int by = 0; by < bps; ++by) {
    for (int bx = 0; bx < bps; ++bx) {
      std::size_t k = 0;
      for (int j = 0; j < cfg.block; ++j) {
        for (int i = 0; i < cfg.block; ++i) {
          const float* h = grid.cell(cx0 + bx * cfg.block_stride + i, cy0 + by * cfg.block_stride + j);
          for (int b = 0; b < bins; ++b) v[k++] = h[b];
        }
      }
      // normalise, clip, renormalise, clip
      normalize();
      normalize();
      std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(o));
      o += block_len;
    }
  }
  return out;
}

FeatureVector hog_descriptor(const Image& patch, const HogConfig& cfg) {
  cfg.validate();
  if (patch.width() != patch.height() || patch.width() == 0) {
    throw Error(Errc::ShapeMismatch, "HOG patch must be square and non-empty");
  }
  Image gray = patch.to_gray();
  if (gray.width() != cfg.resample_side) {
    const double s = static_cast<double>(cfg.resample_side) / gray.width();
    gray = imaging::resize(gray, cfg.resample_side, cfg.resample_side, s, s);
  }
  const CellGrid grid = hog_cells(gray, cfg);
  return {hog_normalize_window(grid, 0, 0, cfg.cells_per_side(), cfg), cfg.tag()};
}

DenseHog hog_dense(const Image& level, const HogConfig& cfg, int window_cells) {
  HogConfig window_cfg = cfg;
  window_cfg.resample_side = window_cells * cfg.cell;
  window_cfg.validate();
  if (level.width() < window_cfg.resample_side || level.height() < window_cfg.resample_side) {
    throw Error(Errc::ImageTooSmall, "level smaller than one HOG window");
  }
  const CellGrid grid = hog_cells(level.to_gray(), window_cfg);
  DenseHog dense;
  dense.cell = cfg.cell;
  dense.windows_x = grid.cells_x - window_cells + 1;
  dense.windows_y = grid.cells_y - window_cells + 1;
  const std::string tag = window_cfg.tag();
  dense.descriptors.reserve(static_cast<std::size_t>(dense.windows_x) * dense.windows_y);
  for (int wy = 0; wy < dense.windows_y; ++wy) {
    for (int wx = 0; wx < dense.windows_x; ++wx) {
      dense.descriptors.push_back({hog_normalize_window(grid, wx, wy, window_cells, window_cfg), tag});
    }
  }
  return dense;
}

}  // namespace dposelets::features
