#pragma once

#include <string>
#include <vector>

#include "dposelets/imaging.hpp"

namespace dposelets::features {

/// A dense feature vector bound to the extractor configuration that produced
/// it. Classifiers refuse to mix tags.
struct FeatureVector {
  std::vector<float> values;
  std::string extractor_tag;

  std::size_t dim() const { return values.size(); }
};

struct HogConfig {
  int resample_side = 64;
  int cell = 8;
  int block = 2;
  int block_stride = 1;
  int orientations = 9;
  double clip = 0.2;
  double epsilon = 1e-6;

  void validate() const;
  int cells_per_side() const { return resample_side / cell; }
  int blocks_per_side() const { return (cells_per_side() - block) / block_stride + 1; }
  int dim() const { return blocks_per_side() * blocks_per_side() * block * block * orientations; }
  /// "hog:<hash of every field>".
  std::string tag() const;

  friend bool operator==(const HogConfig&, const HogConfig&) = default;
};

/// Per-cell unnormalised orientation histograms, row-major cells, bins inner.
struct CellGrid {
  int cells_x = 0;
  int cells_y = 0;
  int bins = 0;
  std::vector<float> hist;

  const float* cell(int cx, int cy) const {
    return &hist[(static_cast<std::size_t>(cy) * cells_x + cx) * bins];
  }
};

/// Gradients are central differences taken inside each cell (one-sided on the
/// cell border), so a cell's histogram depends on its own pixels only. Each
/// pixel splits its magnitude between the two nearest unsigned orientation
/// bins, whose centres sit at i * 180 / orientations degrees.
CellGrid hog_cells(const imaging::Image& gray, const HogConfig& cfg);

/// Block-normalised descriptor for the `window_cells` square of cells with
/// top-left cell (cx0, cy0).
std::vector<float> hog_normalize_window(const CellGrid& grid, int cx0, int cy0, int window_cells,
                                        const HogConfig& cfg);

FeatureVector hog_descriptor(const imaging::Image& patch, const HogConfig& cfg);

struct DenseHog {
  int windows_x = 0;
  int windows_y = 0;
  int cell = 0;
  std::vector<FeatureVector> descriptors;  // row-major window order

  const FeatureVector& at(int wx, int wy) const {
    return descriptors[static_cast<std::size_t>(wy) * windows_x + wx];
  }
  /// Pixel origin of window (wx, wy) in the level.
  int origin_x(int wx) const { return wx * cell; }
  int origin_y(int wy) const { return wy * cell; }
};

/// Computes the cell grid of `level` once and emits a descriptor at every
/// cell-aligned window of `window_cells` cells. Each descriptor equals
/// hog_descriptor of the cropped window with resample_side = window_cells * cell.
DenseHog hog_dense(const imaging::Image& level, const HogConfig& cfg, int window_cells);

}  // namespace dposelets::features
