#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dposelets/activation.hpp"
#include "dposelets/extractor.hpp"
#include "dposelets/imaging.hpp"
#include "dposelets/learning.hpp"
#include "dposelets/poselets.hpp"

namespace dposelets::detector {

struct PersonHypothesis {
  std::vector<Activation> members;
  Box consensus;
  double score = 0.0;
};

/// Object-level score from per-poselet-type maximum member probabilities.
struct HypothesisScorer {
  enum class Mode { Sum, Linear };
  Mode mode = Mode::Sum;
  std::vector<double> weights;
  double bias = 0.0;
};

/// Poselets sharing one feature mode, their extractor, and the hypothesis scorer.
struct PoseletModel {
  features::Extractor extractor = features::Extractor::hog();
  std::vector<poselets::PoseletType> poselets;
  HypothesisScorer scorer;

  features::FeatureMode mode() const { return extractor.mode(); }
  /// Throws EmptyModel / MixedFeatureModes.
  void validate() const;
};

struct DetectConfig {
  double pyramid_ratio = 0.8408964152537145;  // 2^(-1/4)
  int stride = 8;
  double threshold = 0.1;
  double nms_iou = 0.5;
  double cluster_iou = 0.4;
  double final_nms_iou = 0.6;
};

struct Detection {
  std::string image_id;
  Box box;
  double score = 0.0;
};

/// Evaluates every poselet at every stride-aligned 61x61 window of every
/// level and keeps windows with calibrated probability >= threshold. Window
/// bounds are mapped back to the original image by dividing by the level scale.
std::vector<Activation> scan(const imaging::ScalePyramid& pyramid, const PoseletModel& model, int stride = 8,
                             double threshold = 0.1, const std::string& image_id = {});

/// Builds the pyramid first; an image smaller than one window yields nothing.
std::vector<Activation> scan_image(const imaging::Image& image, const PoseletModel& model, const DetectConfig& cfg,
                                   const std::string& image_id = {});

/// Per poselet: keep the most probable activation, drop others with window
/// IoU >= iou, repeat. Ties break on lower window x, then lower y.
std::vector<Activation> nms_per_poselet(std::span<const Activation> acts, double iou = 0.5);

Box vote(const Activation& act, const poselets::PoseletType& p);

/// Fills every activation's vote from the model's poselets (by id).
void assign_votes(std::span<Activation> acts, const PoseletModel& model);

/// Probability-weighted mean of member votes over (cx, cy, log w, log h).
Box consensus_bounds(std::span<const Activation> members);

/// Greedy clustering in descending probability (ties: poselet id, window x,
/// window y). Each activation joins the hypothesis whose consensus overlaps
/// its vote most if that IoU >= iou, otherwise it founds a new hypothesis.
std::vector<PersonHypothesis> cluster(std::span<const Activation> acts, double iou = 0.4);

/// Per-type maximum member probability, zero for absent types.
std::vector<double> hypothesis_features(const PersonHypothesis& h, std::size_t poselet_count);

double score_hypothesis(const PersonHypothesis& h, const HypothesisScorer& scorer, std::size_t poselet_count);

/// Greedy suppression of hypotheses by consensus IoU >= iou, highest score first.
std::vector<PersonHypothesis> suppress_hypotheses(std::vector<PersonHypothesis> hyps, double iou);

/// Scored hypotheses before the final suppression.
std::vector<PersonHypothesis> hypotheses(const imaging::Image& image, const PoseletModel& model,
                                         const DetectConfig& cfg, const std::string& image_id = {});

std::vector<Detection> detect(const imaging::Image& image, const PoseletModel& model, const DetectConfig& cfg = {},
                              const std::string& image_id = {});

struct ScorerTraining {
  HypothesisScorer scorer;
  bool fallback = false;
  std::string message;
};

/// Labels hypotheses by IoU >= match_iou with any truth and trains a linear
/// scorer on their per-type features. Falls back to Sum mode when one label
/// class is missing.
ScorerTraining train_scorer(std::span<const std::vector<PersonHypothesis>> per_image_hyps,
                            std::span<const std::vector<Box>> per_image_truths, std::size_t poselet_count,
                            const learning::SvmConfig& svm = {.lambda = 1e-3, .epochs = 50, .seed = 1},
                            double match_iou = 0.5);

}  // namespace dposelets::detector
