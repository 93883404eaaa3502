#include "dposelets/extractor.hpp"

namespace dposelets::features {

std::string_view to_string(FeatureMode mode) { return mode == FeatureMode::Hog ? "hog" : "pdf"; }

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "hog") return FeatureMode::Hog;
  if (s == "pdf") return FeatureMode::Pdf;
  throw Error(Errc::InvalidConfig, "feature mode must be hog or pdf, got " + std::string(s));
}

Extractor Extractor::hog(HogConfig cfg) {
  cfg.validate();
  Extractor e;
  e.mode_ = FeatureMode::Hog;
  e.hog_ = cfg;
  return e;
}

Extractor Extractor::pdf(std::shared_ptr<const convnet::PdfNetwork> net) {
  Extractor e;
  e.mode_ = FeatureMode::Pdf;
  e.net_ = std::move(net);
  return e;
}

std::string Extractor::tag() const {
  if (mode_ == FeatureMode::Hog) return hog_.tag();
  if (!net_) throw Error(Errc::ExtractorNotReady, "PDF extractor has no trained network");
  return net_->tag();
}

std::size_t Extractor::dim() const {
  if (mode_ == FeatureMode::Hog) return static_cast<std::size_t>(hog_.dim());
  if (!net_) throw Error(Errc::ExtractorNotReady, "PDF extractor has no trained network");
  return static_cast<std::size_t>(net_->spec().pdf_width());
}

FeatureVector extract(const imaging::Image& patch, const Extractor& extractor) {
  if (!extractor.ready()) throw Error(Errc::ExtractorNotReady, "PDF extractor has no trained network");
  if (extractor.mode() == FeatureMode::Hog) return hog_descriptor(patch, extractor.hog_config());
  return extractor.network()->extract_pdf(patch);
}

std::vector<FeatureVector> extract_all(std::span<const imaging::Image> patches, const Extractor& extractor) {
  std::vector<FeatureVector> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(extract(p, extractor));
  return out;
}

}  // namespace dposelets::features
