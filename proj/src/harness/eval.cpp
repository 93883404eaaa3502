#include "dposelets/harness/eval.hpp"

#include <algorithm>
#include <numeric>

namespace dposelets::harness {

std::string_view to_string(ApMode mode) { return mode == ApMode::Continuous ? "cont" : "11pt"; }

ApMode parse_ap_mode(std::string_view s) {
  if (s == "cont" || s == "continuous") return ApMode::Continuous;
  if (s == "11pt") return ApMode::ElevenPoint;
  throw Error(Errc::InvalidConfig, "unknown AP mode '" + std::string(s) + "'");
}

bool ranked_before(const detector::Detection& a, const detector::Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  return a.box.x < b.box.x;
}

void sort_ranked(std::vector<detector::Detection>& dets) { std::stable_sort(dets.begin(), dets.end(), ranked_before); }

MatchResult match_detections(std::span<const detector::Detection> dets, const TruthMap& truths, double iou_threshold) {
  for (std::size_t i = 1; i < dets.size(); ++i) {
    if (ranked_before(dets[i], dets[i - 1])) {
      throw Error(Errc::UnsortedInput, "detection " + std::to_string(i) + " ranks above its predecessor");
    }
  }
  MatchResult r;
  std::map<std::string, std::size_t> offset;
  for (const auto& [id, boxes] : truths) {
    offset[id] = r.truth_count;
    r.truth_count += boxes.size();
  }
  r.truth_covered.assign(r.truth_count, false);
  r.true_positive.assign(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto it = truths.find(dets[i].image_id);
    if (it == truths.end()) continue;
    const std::size_t base = offset[it->first];
    double best = -1.0;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < it->second.size(); ++k) {
      if (r.truth_covered[base + k]) continue;
      const double o = iou(dets[i].box, it->second[k]);
      if (o > best) {
        best = o;
        best_k = k;
      }
    }
    if (best >= iou_threshold) {
      r.true_positive[i] = true;
      r.truth_covered[base + best_k] = true;
    }
  }
  return r;
}

EvalReport average_precision(const std::vector<bool>& flags, std::size_t truth_count, ApMode mode) {
  if (truth_count == 0) throw Error(Errc::NoTruths, "average precision needs at least one truth");
  EvalReport rep;
  rep.mode = mode;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) ++tp;
    rep.curve.push_back({static_cast<double>(tp) / static_cast<double>(i + 1),
                         static_cast<double>(tp) / static_cast<double>(truth_count)});
  }
  // Precision envelope: maximum precision at any rank to the right.
  std::vector<double> env(rep.curve.size());
  double run = 0.0;
  for (std::size_t i = rep.curve.size(); i-- > 0;) {
    run = std::max(run, rep.curve[i].precision);
    env[i] = run;
  }
  if (mode == ApMode::Continuous) {
    double prev = 0.0;
    for (std::size_t i = 0; i < rep.curve.size(); ++i) {
      rep.ap += (rep.curve[i].recall - prev) * env[i];
      prev = rep.curve[i].recall;
    }
  } else {
    for (int t = 0; t <= 10; ++t) {
      const double r = t / 10.0;
      double p = 0.0;
      for (std::size_t i = 0; i < rep.curve.size(); ++i) {
        if (rep.curve[i].recall >= r - 1e-12) {
          p = env[i];
          break;
        }
      }
      rep.ap += p / 11.0;
    }
  }
  return rep;
}

EvalReport evaluate(std::vector<detector::Detection> dets, const TruthMap& truths, double iou_threshold, ApMode mode) {
  sort_ranked(dets);
  const auto m = match_detections(dets, truths, iou_threshold);
  auto rep = average_precision(m.true_positive, m.truth_count, mode);
  rep.match_iou = iou_threshold;
  return rep;
}

double classifier_ap(std::span<const double> scores, std::span<const int> labels, ApMode mode) {
  if (scores.size() != labels.size()) throw Error(Errc::DimMismatch, "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (scores[i] != scores[j]) return scores[i] > scores[j];
    return labels[i] < labels[j];
  });
  std::vector<bool> flags;
  std::size_t pos = 0;
  for (std::size_t i : order) {
    flags.push_back(labels[i] == 1);
    pos += labels[i] == 1;
  }
  return average_precision(flags, pos, mode).ap;
}

}  // namespace dposelets::harness
