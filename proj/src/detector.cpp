#include "dposelets/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace dposelets::detector {

using imaging::Image;

void PoseletModel::validate() const {
  if (poselets.empty()) throw Error(Errc::EmptyModel, "model has no poselets");
  for (const auto& p : poselets) {
    if (p.feature_mode != extractor.mode()) {
      throw Error(Errc::MixedFeatureModes, "poselet " + std::to_string(p.id) + " was trained in " +
                                               std::string(features::to_string(p.feature_mode)) + " mode");
    }
  }
  if (!extractor.ready()) throw Error(Errc::ExtractorNotReady, "PDF extractor has no trained network");
}

namespace {

void score_window(const features::FeatureVector& desc, const PoseletModel& model, const Box& window, double threshold,
                  int level, const std::string& image_id, std::vector<Activation>& out) {
  for (const auto& p : model.poselets) {
    const double s = learning::score(p.classifier, desc);
    const double prob = p.calibration.probability(s);
    if (prob >= threshold) out.push_back({p.id, image_id, window, s, prob, {}, level});
  }
}

}  // namespace

std::vector<Activation> scan(const imaging::ScalePyramid& pyramid, const PoseletModel& model, int stride,
                             double threshold, const std::string& image_id) {
  model.validate();
  if (stride < 1) throw Error(Errc::InvalidConfig, "stride must be positive");
  std::vector<Activation> out;
  constexpr int side = imaging::kPatchSide;
  for (std::size_t k = 0; k < pyramid.levels.size(); ++k) {
    const auto& level = pyramid.levels[k];
    const Image& img = level.image;
    if (img.width() < side || img.height() < side) continue;
    const int lvl = static_cast<int>(k);
    if (model.mode() == features::FeatureMode::Hog) {
      // Resample the level so one 61-pixel window spans exactly one HOG window.
      const auto& cfg = model.extractor.hog_config();
      const double f = static_cast<double>(cfg.resample_side) / side;
      const int rw = static_cast<int>(std::floor(img.width() * f));
      const int rh = static_cast<int>(std::floor(img.height() * f));
      if (rw < cfg.resample_side || rh < cfg.resample_side) continue;
      const Image resized = imaging::resize(img.to_gray(), rw, rh, f, f);
      const auto dense = features::hog_dense(resized, cfg, cfg.cells_per_side());
      const int step = std::max(1, static_cast<int>(std::lround(stride * f / cfg.cell)));
      for (int wy = 0; wy < dense.windows_y; wy += step) {
        for (int wx = 0; wx < dense.windows_x; wx += step) {
          const Box window{dense.origin_x(wx) / f / level.scale, dense.origin_y(wy) / f / level.scale,
                           side / level.scale, side / level.scale};
          score_window(dense.at(wx, wy), model, window, threshold, lvl, image_id, out);
        }
      }
    } else {
      const auto dense = model.extractor.network()->dense_pdf(img.to_rgb(), stride);
      for (int wy = 0; wy < dense.windows_y; ++wy) {
        for (int wx = 0; wx < dense.windows_x; ++wx) {
          const Box window{static_cast<double>(wx) * stride / level.scale, static_cast<double>(wy) * stride / level.scale,
                           side / level.scale, side / level.scale};
          score_window(dense.pdfs[static_cast<std::size_t>(wy) * dense.windows_x + wx], model, window, threshold, lvl,
                       image_id, out);
        }
      }
    }
  }
  return out;
}

std::vector<Activation> scan_image(const Image& image, const PoseletModel& model, const DetectConfig& cfg,
                                   const std::string& image_id) {
  model.validate();
  if (std::min(image.width(), image.height()) < imaging::kPatchSide) return {};
  const auto pyramid = imaging::build_pyramid(image, cfg.pyramid_ratio, imaging::kPatchSide);
  return scan(pyramid, model, cfg.stride, cfg.threshold, image_id);
}

std::vector<Activation> nms_per_poselet(std::span<const Activation> acts, double iou_threshold) {
  std::vector<Activation> sorted(acts.begin(), acts.end());
  std::sort(sorted.begin(), sorted.end(), [](const Activation& a, const Activation& b) {
    if (a.poselet_id != b.poselet_id) return a.poselet_id < b.poselet_id;
    if (a.probability != b.probability) return a.probability > b.probability;
    if (a.window.x != b.window.x) return a.window.x < b.window.x;
    if (a.window.y != b.window.y) return a.window.y < b.window.y;
    return a.window.w < b.window.w;
  });
  std::vector<Activation> kept;
  std::size_t group_start = 0;
  for (const auto& a : sorted) {
    while (group_start < kept.size() && kept[group_start].poselet_id != a.poselet_id) ++group_start;
    bool suppressed = false;
    for (std::size_t k = group_start; k < kept.size(); ++k) {
      if (iou(kept[k].window, a.window) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(a);
  }
  return kept;
}

Box vote(const Activation& act, const poselets::PoseletType& p) {
  if (act.poselet_id != p.id) throw Error(Errc::IdMismatch, "activation belongs to another poselet");
  const double side = act.window.w;
  return Box::from_center(act.window.cx() + p.vote.dcx * side, act.window.cy() + p.vote.dcy * side, p.vote.dw * side,
                          p.vote.dh * side);
}

void assign_votes(std::span<Activation> acts, const PoseletModel& model) {
  std::map<int, const poselets::PoseletType*> by_id;
  for (const auto& p : model.poselets) by_id[p.id] = &p;
  for (auto& a : acts) {
    const auto it = by_id.find(a.poselet_id);
    if (it == by_id.end()) throw Error(Errc::IdMismatch, "no poselet with id " + std::to_string(a.poselet_id));
    a.vote = vote(a, *it->second);
  }
}

Box consensus_bounds(std::span<const Activation> members) {
  if (members.empty()) throw Error(Errc::TooFewSamples, "consensus of an empty hypothesis");
  if (members.size() == 1) return members.front().vote;
  double wsum = 0.0;
  for (const auto& m : members) wsum += m.probability;
  const bool uniform = !(wsum > 0);
  double cx = 0, cy = 0, lw = 0, lh = 0, total = 0;
  for (const auto& m : members) {
    const double w = uniform ? 1.0 : m.probability;
    cx += w * m.vote.cx();
    cy += w * m.vote.cy();
    lw += w * std::log(m.vote.w);
    lh += w * std::log(m.vote.h);
    total += w;
  }
  return Box::from_center(cx / total, cy / total, std::exp(lw / total), std::exp(lh / total));
}

std::vector<PersonHypothesis> cluster(std::span<const Activation> acts, double iou_threshold) {
  std::vector<std::size_t> order(acts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const auto& a = acts[i];
    const auto& b = acts[j];
    if (a.probability != b.probability) return a.probability > b.probability;
    if (a.poselet_id != b.poselet_id) return a.poselet_id < b.poselet_id;
    if (a.window.x != b.window.x) return a.window.x < b.window.x;
    return a.window.y < b.window.y;
  });
  std::vector<PersonHypothesis> hyps;
  for (std::size_t i : order) {
    const auto& a = acts[i];
    double best = -1.0;
    std::size_t best_h = 0;
    for (std::size_t h = 0; h < hyps.size(); ++h) {
      const double o = iou(hyps[h].consensus, a.vote);
      if (o > best) {
        best = o;
        best_h = h;
      }
    }
    if (!hyps.empty() && best >= iou_threshold) {
      hyps[best_h].members.push_back(a);
      hyps[best_h].consensus = consensus_bounds(hyps[best_h].members);
    } else {
      hyps.push_back({{a}, a.vote, 0.0});
    }
  }
  return hyps;
}

std::vector<double> hypothesis_features(const PersonHypothesis& h, std::size_t poselet_count) {
  std::vector<double> f(poselet_count, 0.0);
  for (const auto& m : h.members) {
    if (m.poselet_id < 0 || static_cast<std::size_t>(m.poselet_id) >= poselet_count) {
      throw Error(Errc::IdMismatch, "member poselet id out of range");
    }
    auto& v = f[static_cast<std::size_t>(m.poselet_id)];
    v = std::max(v, m.probability);
  }
  return f;
}

double score_hypothesis(const PersonHypothesis& h, const HypothesisScorer& scorer, std::size_t poselet_count) {
  const auto f = hypothesis_features(h, poselet_count);
  if (scorer.mode == HypothesisScorer::Mode::Sum) return std::accumulate(f.begin(), f.end(), 0.0);
  if (scorer.weights.size() != poselet_count) {
    throw Error(Errc::WeightLengthMismatch, "scorer has " + std::to_string(scorer.weights.size()) +
                                                " weights for " + std::to_string(poselet_count) + " poselets");
  }
  double s = scorer.bias;
  for (std::size_t k = 0; k < f.size(); ++k) s += scorer.weights[k] * f[k];
  return s;
}

std::vector<PersonHypothesis> suppress_hypotheses(std::vector<PersonHypothesis> hyps, double iou_threshold) {
  std::stable_sort(hyps.begin(), hyps.end(), [](const PersonHypothesis& a, const PersonHypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.consensus.x != b.consensus.x) return a.consensus.x < b.consensus.x;
    return a.consensus.y < b.consensus.y;
  });
  std::vector<PersonHypothesis> kept;
  for (auto& h : hyps) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const PersonHypothesis& k) {
      return iou(k.consensus, h.consensus) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(h));
  }
  return kept;
}

std::vector<PersonHypothesis> hypotheses(const Image& image, const PoseletModel& model, const DetectConfig& cfg,
                                         const std::string& image_id) {
  auto acts = nms_per_poselet(scan_image(image, model, cfg, image_id), cfg.nms_iou);
  assign_votes(acts, model);
  auto hyps = cluster(acts, cfg.cluster_iou);
  for (auto& h : hyps) h.score = score_hypothesis(h, model.scorer, model.poselets.size());
  return hyps;
}

std::vector<Detection> detect(const Image& image, const PoseletModel& model, const DetectConfig& cfg,
                              const std::string& image_id) {
  const auto kept = suppress_hypotheses(hypotheses(image, model, cfg, image_id), cfg.final_nms_iou);
  std::vector<Detection> out;
  out.reserve(kept.size());
  for (const auto& h : kept) out.push_back({image_id, h.consensus, h.score});
  return out;
}

ScorerTraining train_scorer(std::span<const std::vector<PersonHypothesis>> per_image_hyps,
                            std::span<const std::vector<Box>> per_image_truths, std::size_t poselet_count,
                            const learning::SvmConfig& svm, double match_iou) {
  if (per_image_hyps.size() != per_image_truths.size()) {
    throw Error(Errc::DimMismatch, "hypotheses and truths cover different image counts");
  }
  std::vector<features::FeatureVector> xs;
  std::vector<int> ys;
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < per_image_hyps.size(); ++i) {
    for (const auto& h : per_image_hyps[i]) {
      double best = 0.0;
      for (const auto& t : per_image_truths[i]) best = std::max(best, iou(h.consensus, t));
      const auto f = hypothesis_features(h, poselet_count);
      xs.push_back({std::vector<float>(f.begin(), f.end()), "poselet-scores"});
      ys.push_back(best >= match_iou ? 1 : -1);
      (best >= match_iou ? pos : neg) = true;
    }
  }
  ScorerTraining out;
  if (!pos || !neg) {
    out.fallback = true;
    out.message = "scorer training needs matching and non-matching hypotheses; using sum mode";
    return out;
  }
  const auto model = learning::train_svm(xs, ys, svm);
  out.scorer.mode = HypothesisScorer::Mode::Linear;
  out.scorer.weights = model.weights;
  out.scorer.bias = model.bias;
  return out;
}

}  // namespace dposelets::detector
