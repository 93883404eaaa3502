#include "dposelets/common.hpp"

#include <algorithm>
#include <cstdio>

namespace dposelets {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::CorruptData: return "CorruptData";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::InvalidRatio: return "InvalidRatio";
    case Errc::InvalidTransform: return "InvalidTransform";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::ExtractorNotReady: return "ExtractorNotReady";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::DivergenceDetected: return "DivergenceDetected";
    case Errc::SingleClassData: return "SingleClassData";
    case Errc::MixedExtractorTags: return "MixedExtractorTags";
    case Errc::NonFiniteFeature: return "NonFiniteFeature";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::TooFewCorrespondences: return "TooFewCorrespondences";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::NoMatchingExamples: return "NoMatchingExamples";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::EmptyHarvest: return "EmptyHarvest";
    case Errc::MixedFeatureModes: return "MixedFeatureModes";
    case Errc::EmptyModel: return "EmptyModel";
    case Errc::IdMismatch: return "IdMismatch";
    case Errc::WeightLengthMismatch: return "WeightLengthMismatch";
    case Errc::UnsortedInput: return "UnsortedInput";
    case Errc::NoTruths: return "NoTruths";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::MalformedRecord: return "MalformedRecord";
  }
  return "Unknown";
}

bool is_numeric_failure(Errc code) noexcept {
  return code == Errc::DivergenceDetected || code == Errc::NoConvergence ||
         code == Errc::NonFiniteFeature;
}

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0 || ih <= 0) return 0.0;
  return iw * ih;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace dposelets
