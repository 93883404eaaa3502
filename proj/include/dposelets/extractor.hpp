#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dposelets/convnet.hpp"
#include "dposelets/features.hpp"

namespace dposelets::features {

enum class FeatureMode { Hog, Pdf };

std::string_view to_string(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view s);

/// Either a HOG configuration or a trained PDF network; a PDF extractor
/// without a network is not ready.
class Extractor {
 public:
  static Extractor hog(HogConfig cfg = {});
  static Extractor pdf(std::shared_ptr<const convnet::PdfNetwork> net);

  FeatureMode mode() const { return mode_; }
  bool ready() const { return mode_ == FeatureMode::Hog || net_ != nullptr; }
  const HogConfig& hog_config() const { return hog_; }
  const std::shared_ptr<const convnet::PdfNetwork>& network() const { return net_; }
  std::string tag() const;
  std::size_t dim() const;

 private:
  FeatureMode mode_ = FeatureMode::Hog;
  HogConfig hog_;
  std::shared_ptr<const convnet::PdfNetwork> net_;
};

FeatureVector extract(const imaging::Image& patch, const Extractor& extractor);
std::vector<FeatureVector> extract_all(std::span<const imaging::Image> patches, const Extractor& extractor);

}  // namespace dposelets::features
