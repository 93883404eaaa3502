#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dposelets/detector.hpp"

namespace dposelets::harness {

enum class ApMode { Continuous, ElevenPoint };

std::string_view to_string(ApMode mode);
/// Accepts "cont" / "continuous" and "11pt".
ApMode parse_ap_mode(std::string_view s);

using TruthMap = std::map<std::string, std::vector<Box>>;

struct MatchResult {
  std::vector<bool> true_positive;   // per detection, in input order
  std::vector<bool> truth_covered;   // per truth, images in map order
  std::size_t truth_count = 0;
};

/// Descending score, ties by image id, then box x.
bool ranked_before(const detector::Detection& a, const detector::Detection& b);
void sort_ranked(std::vector<detector::Detection>& dets);

/// Greedy matching in rank order: each detection takes the highest-IoU
/// unmatched truth of its image when that IoU >= iou. Throws UnsortedInput.
MatchResult match_detections(std::span<const detector::Detection> dets, const TruthMap& truths, double iou = 0.5);

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
};

struct EvalReport {
  std::vector<PrPoint> curve;  // one point per ranked detection
  double ap = 0.0;
  ApMode mode = ApMode::Continuous;
  double match_iou = 0.5;
};

/// Throws NoTruths when truth_count is zero.
EvalReport average_precision(const std::vector<bool>& flags, std::size_t truth_count, ApMode mode);

/// Sorts, matches and scores in one step.
EvalReport evaluate(std::vector<detector::Detection> dets, const TruthMap& truths, double iou, ApMode mode);

/// AP of a binary classifier from scores and {0,1} labels; ties are broken
/// pessimistically (negatives first) so the result does not depend on input order.
double classifier_ap(std::span<const double> scores, std::span<const int> labels, ApMode mode = ApMode::Continuous);

}  // namespace dposelets::harness
