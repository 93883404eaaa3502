#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dposelets {

/// Error codes raised by the library. Each maps to one failure named in the
/// module contracts; `is_numeric_failure` separates numerical breakdowns from
/// bad input data (the CLI turns these into exit codes 3 and 2).
enum class Errc {
  FileNotFound,
  UnsupportedFormat,
  CorruptData,
  ImageTooSmall,
  InvalidRatio,
  InvalidTransform,
  InvalidConfig,
  ExtractorNotReady,
  ShapeMismatch,
  LabelOutOfRange,
  EmptyDataset,
  DivergenceDetected,
  SingleClassData,
  MixedExtractorTags,
  NonFiniteFeature,
  DimMismatch,
  NoConvergence,
  TooFewCorrespondences,
  DegenerateConfiguration,
  NoMatchingExamples,
  TooFewSamples,
  EmptyHarvest,
  MixedFeatureModes,
  EmptyModel,
  IdMismatch,
  WeightLengthMismatch,
  UnsortedInput,
  NoTruths,
  InsufficientData,
  ChecksumMismatch,
  VersionMismatch,
  MalformedRecord,
};

std::string_view errc_name(Errc code) noexcept;
bool is_numeric_failure(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box in continuous pixel coordinates; pixel i covers [i, i+1).
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w > 0 && h > 0 ? w * h : 0.0; }

  static Box from_center(double cx, double cy, double w, double h) {
    return Box{cx - 0.5 * w, cy - 0.5 * h, w, h};
  }
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

/// 64-bit FNV-1a over raw bytes; used for extractor tags.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 14695981039346656037ull);
std::string hex64(std::uint64_t v);

}  // namespace dposelets
