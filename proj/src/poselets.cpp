#include "dposelets/poselets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

namespace dposelets::poselets {

using imaging::Image;
using imaging::SimilarityTransform;

namespace {

constexpr std::array<std::string_view, kKeypointCount> kNames = {
    "head_top", "nose",    "l_eye",   "r_eye",   "l_shoulder", "r_shoulder", "l_elbow",
    "r_elbow",  "l_wrist", "r_wrist", "l_hip",   "r_hip",      "l_knee",     "r_knee",
    "l_ankle",  "r_ankle", "neck",    "pelvis",  "l_ear",      "r_ear"};

}  // namespace

std::string_view keypoint_name(KeypointName k) { return kNames.at(static_cast<std::size_t>(k)); }

std::optional<KeypointName> parse_keypoint(std::string_view s) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == s) return static_cast<KeypointName>(i);
  }
  return std::nullopt;
}

const Keypoint* PersonAnnotation::find(KeypointName name) const {
  for (const auto& k : keypoints) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void PersonAnnotation::validate() const {
  if (!(bounds.w > 0 && bounds.h > 0)) throw Error(Errc::MalformedRecord, "person bounds must have w, h > 0");
  std::array<bool, kKeypointCount> seen{};
  for (const auto& k : keypoints) {
    auto& s = seen[static_cast<std::size_t>(k.name)];
    if (s) throw Error(Errc::MalformedRecord, "duplicate keypoint " + std::string(keypoint_name(k.name)));
    s = true;
    if (!std::isfinite(k.x) || !std::isfinite(k.y)) throw Error(Errc::MalformedRecord, "non-finite keypoint");
  }
}

SeedWindow make_seed(std::string name, const PersonAnnotation& person, const Box& window) {
  SeedWindow seed;
  seed.name = std::move(name);
  seed.image_id = person.image_id;
  seed.window = window;
  for (const auto& k : person.keypoints) {
    if (!k.visible) continue;
    if (k.x < window.x || k.y < window.y || k.x >= window.right() || k.y >= window.bottom()) continue;
    seed.keypoints.push_back({k.name, (k.x - window.x) / window.w, (k.y - window.y) / window.h, true});
  }
  if (seed.keypoints.size() < 2) {
    throw Error(Errc::TooFewCorrespondences, "seed window needs at least two visible keypoints");
  }
  return seed;
}

SimilarityFit fit_similarity(std::span<const Keypoint> src, std::span<const Keypoint> dst, double dst_side) {
  std::vector<Point> a, b;
  for (const auto& s : src) {
    if (!s.visible) continue;
    for (const auto& d : dst) {
      if (d.visible && d.name == s.name) {
        a.push_back({s.x, s.y});
        b.push_back({d.x, d.y});
        break;
      }
    }
  }
  if (a.size() < 2) throw Error(Errc::TooFewCorrespondences, "need at least two common visible keypoints");
  const double n = static_cast<double>(a.size());
  Point ma{}, mb{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma.x += a[i].x / n;
    ma.y += a[i].y / n;
    mb.x += b[i].x / n;
    mb.y += b[i].y / n;
  }
  // With centred points as complex numbers, the optimal scale * e^{i theta}
  // is sum(conj(a) b) / sum(|a|^2).
  double saa = 0.0, re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ax = a[i].x - ma.x, ay = a[i].y - ma.y;
    const double bx = b[i].x - mb.x, by = b[i].y - mb.y;
    saa += ax * ax + ay * ay;
    re += ax * bx + ay * by;
    im += ax * by - ay * bx;
  }
  const double spread = std::max({std::abs(ma.x), std::abs(ma.y), 1.0});
  if (saa <= 1e-24 * spread * spread) throw Error(Errc::DegenerateConfiguration, "source keypoints coincide");
  const double mag = std::hypot(re, im);
  if (mag <= 0.0) throw Error(Errc::DegenerateConfiguration, "destination keypoints coincide");

  SimilarityFit fit;
  fit.transform.scale = mag / saa;
  fit.transform.rotation = std::atan2(im, re);
  const Point rm = SimilarityTransform{fit.transform.scale, fit.transform.rotation, 0.0, 0.0}.apply(ma);
  fit.transform.tx = mb.x - rm.x;
  fit.transform.ty = mb.y - rm.y;
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point p = fit.transform.apply(a[i]);
    err += std::hypot(p.x - b[i].x, p.y - b[i].y);
  }
  fit.residual = err / n / dst_side;
  fit.correspondences = static_cast<int>(a.size());
  return fit;
}

std::vector<Keypoint> seed_patch_keypoints(const SeedWindow& seed, int side) {
  std::vector<Keypoint> out = seed.keypoints;
  for (auto& k : out) {
    k.x *= side;
    k.y *= side;
  }
  return out;
}

std::optional<SimilarityFit> rank_residual(const SeedWindow& seed, const PersonAnnotation& person,
                                           const SelectConfig& cfg) {
  const auto dst = seed_patch_keypoints(seed);
  int shared = 0;
  for (const auto& k : seed.keypoints) {
    const Keypoint* p = person.find(k.name);
    if (p && p->visible) ++shared;
  }
  if (shared < 2) return std::nullopt;
  SimilarityFit fit;
  try {
    fit = fit_similarity(person.keypoints, dst, imaging::kPatchSide);
  } catch (const Error& e) {
    if (e.code() == Errc::DegenerateConfiguration) return std::nullopt;
    throw;
  }
  const double missing = static_cast<double>(seed.keypoints.size() - static_cast<std::size_t>(shared)) /
                         static_cast<double>(seed.keypoints.size());
  fit.residual += cfg.missing_penalty * missing;
  return fit;
}

std::vector<PatchSample> select_examples(const SeedWindow& seed, const Corpus& corpus, const SelectConfig& cfg) {
  if (corpus.empty()) throw Error(Errc::NoMatchingExamples, "empty corpus");
  struct Candidate {
    std::size_t image;
    std::size_t person;
    SimilarityFit fit;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t j = 0; j < corpus[i].persons.size(); ++j) {
      if (auto fit = rank_residual(seed, corpus[i].persons[j], cfg)) cands.push_back({i, j, *fit});
    }
  }
  if (cands.empty()) throw Error(Errc::NoMatchingExamples, "no person shares two keypoints with seed " + seed.name);
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& x, const Candidate& y) { return x.fit.residual < y.fit.residual; });
  const std::size_t n = std::min(cands.size(), static_cast<std::size_t>(std::max(cfg.count, 0)));
  std::vector<PatchSample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& c = cands[k];
    const auto& img = corpus[c.image];
    const auto& person = img.persons[c.person];
    PatchSample s;
    s.source = c.fit.transform;
    s.pixels = imaging::warp_patch(img.image, s.source).to_rgb();
    s.label = 0;
    s.provenance = Provenance::Annotated;
    s.image_id = img.id;
    s.residual = c.fit.residual;
    const Point ctr = s.source.apply({person.bounds.cx(), person.bounds.cy()});
    s.person_bounds = Box::from_center(ctr.x, ctr.y, person.bounds.w * s.source.scale, person.bounds.h * s.source.scale);
    out.push_back(std::move(s));
  }
  return out;
}

VoteModel fit_vote_model(std::span<const PatchSample> samples, int side) {
  std::vector<std::array<double, 4>> rows;
  const double half = 0.5 * side;
  for (const auto& s : samples) {
    if (!s.person_bounds) continue;
    const Box& b = *s.person_bounds;
    rows.push_back({(b.cx() - half) / side, (b.cy() - half) / side, std::log(b.w / side), std::log(b.h / side)});
  }
  if (rows.size() < 2) throw Error(Errc::TooFewSamples, "vote model needs at least two samples with person bounds");
  std::array<double, 4> mean{}, sd{};
  for (const auto& r : rows) {
    for (int k = 0; k < 4; ++k) mean[k] += r[k];
  }
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (int k = 0; k < 4; ++k) sd[k] += (r[k] - mean[k]) * (r[k] - mean[k]);
  }
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(rows.size()));
  VoteModel v;
  v.dcx = mean[0];
  v.dcy = mean[1];
  v.dw = std::exp(mean[2]);
  v.dh = std::exp(mean[3]);
  v.sd_cx = sd[0];
  v.sd_cy = sd[1];
  v.sd_log_w = sd[2];
  v.sd_log_h = sd[3];
  return v;
}

std::size_t split_test_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
}

std::vector<NegativeWindow> sample_negative_windows(const Corpus& corpus, std::size_t count, std::uint64_t seed) {
  std::vector<NegativeWindow> out;
  if (corpus.empty()) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t attempts = 0;
  const std::size_t max_attempts = 100 * count + 100;
  while (out.size() < count && attempts++ < max_attempts) {
    const std::size_t i = pick(rng);
    const auto& img = corpus[i];
    const int w = img.image.width(), h = img.image.height();
    const int max_side = std::min(w, h);
    if (max_side < imaging::kPatchSide) continue;
    const double side = imaging::kPatchSide + unit(rng) * (0.75 * max_side - imaging::kPatchSide);
    if (side < imaging::kPatchSide) continue;
    const Box win{unit(rng) * (w - side), unit(rng) * (h - side), side, side};
    const bool clear = std::none_of(img.persons.begin(), img.persons.end(),
                                    [&](const PersonAnnotation& p) { return intersection_area(win, p.bounds) > 0; });
    if (clear) out.push_back({i, win});
  }
  return out;
}

std::vector<Image> sample_negative_patches(const Corpus& corpus, std::size_t count, std::uint64_t seed) {
  std::vector<Image> out;
  for (const auto& nw : sample_negative_windows(corpus, count, seed)) {
    out.push_back(imaging::warp_patch(corpus[nw.image].image, SimilarityTransform::window_to_patch(nw.window)).to_rgb());
  }
  return out;
}

std::vector<NegativeWindow> displaced_windows(const Corpus& corpus, std::span<const PatchSample> positives,
                                              int per_positive, double max_iou, std::uint64_t seed) {
  std::vector<NegativeWindow> out;
  if (per_positive <= 0) return out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus[i].id, i);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double half = 0.5 * imaging::kPatchSide;
  for (const auto& s : positives) {
    const auto it = index.find(s.image_id);
    if (it == index.end()) continue;
    const auto& img = corpus[it->second].image;
    const Point c = s.source.inverse().apply({half, half});
    const double side = imaging::kPatchSide / s.source.scale;
    const Box aligned = Box::from_center(c.x, c.y, side, side);
    int made = 0;
    for (int attempt = 0; attempt < 50 * per_positive && made < per_positive; ++attempt) {
      // Log-scale change of up to a factor 2.2 either way, shift up to 0.6 side.
      const double ls = (unit(rng) * 2.0 - 1.0) * 0.8;
      const double ns = side * std::exp(ls);
      const double dx = (unit(rng) * 2.0 - 1.0) * 0.6 * side;
      const double dy = (unit(rng) * 2.0 - 1.0) * 0.6 * side;
      const Box win = Box::from_center(c.x + dx, c.y + dy, ns, ns);
      if (ns < imaging::kPatchSide || win.x < 0 || win.y < 0 || win.x + ns > img.width() ||
          win.y + ns > img.height()) {
        continue;
      }
      if (iou(win, aligned) > max_iou || intersection_area(win, aligned) <= 0) continue;
      out.push_back({it->second, win});
      ++made;
    }
  }
  return out;
}

TrainPoseletResult train_poselet(int id, const SeedWindow& seed, const Corpus& corpus,
                                 const features::Extractor& extractor,
                                 std::span<const features::FeatureVector> negative_features,
                                 const TrainPoseletConfig& cfg) {
  if (!extractor.ready()) throw Error(Errc::ExtractorNotReady, "PDF extractor has no trained network");
  const auto positives = select_examples(seed, corpus, cfg.select);
  if (positives.size() < 10) {
    throw Error(Errc::NoMatchingExamples, "seed " + seed.name + " matched only " + std::to_string(positives.size()) +
                                              " examples (need 10)");
  }
  if (negative_features.empty()) throw Error(Errc::SingleClassData, "no negative samples");
  std::vector<features::FeatureVector> pos;
  pos.reserve(positives.size());
  for (const auto& p : positives) pos.push_back(features::extract(p.pixels, extractor));
  const std::string tag = extractor.tag();
  for (const auto& f : negative_features) {
    if (f.extractor_tag != tag) throw Error(Errc::MixedExtractorTags, "negatives extracted with " + f.extractor_tag);
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> neg_idx(negative_features.size());
  std::iota(neg_idx.begin(), neg_idx.end(), std::size_t{0});
  std::shuffle(neg_idx.begin(), neg_idx.end(), rng);
  neg_idx.resize(std::min(neg_idx.size(), pos.size() * static_cast<std::size_t>(cfg.negative_ratio)));
  std::vector<features::FeatureVector> all_neg;
  all_neg.reserve(neg_idx.size());
  for (std::size_t i : neg_idx) all_neg.push_back(negative_features[i]);
  for (const auto& w :
       displaced_windows(corpus, positives, cfg.displaced_per_positive, cfg.displaced_max_iou, cfg.seed ^ 0x5eedULL)) {
    const Image patch = imaging::warp_patch(corpus[w.image].image, SimilarityTransform::window_to_patch(w.window));
    all_neg.push_back(features::extract(patch.to_rgb(), extractor));
  }
  neg_idx.resize(all_neg.size());
  std::iota(neg_idx.begin(), neg_idx.end(), std::size_t{0});
  std::shuffle(neg_idx.begin(), neg_idx.end(), rng);
  std::vector<std::size_t> pos_idx(pos.size());
  std::iota(pos_idx.begin(), pos_idx.end(), std::size_t{0});
  std::shuffle(pos_idx.begin(), pos_idx.end(), rng);

  const std::size_t pos_test = split_test_count(pos_idx.size(), cfg.test_fraction);
  const std::size_t neg_test = split_test_count(neg_idx.size(), cfg.test_fraction);
  std::vector<features::FeatureVector> train_x;
  std::vector<int> train_y;
  for (std::size_t k = pos_test; k < pos_idx.size(); ++k) {
    train_x.push_back(pos[pos_idx[k]]);
    train_y.push_back(1);
  }
  for (std::size_t k = neg_test; k < neg_idx.size(); ++k) {
    train_x.push_back(all_neg[neg_idx[k]]);
    train_y.push_back(-1);
  }

  TrainPoseletResult result;
  result.train_positives = pos_idx.size() - pos_test;
  result.train_negatives = neg_idx.size() - neg_test;
  auto& p = result.poselet;
  p.id = id;
  p.seed = seed;
  p.feature_mode = extractor.mode();
  p.classifier = learning::train_svm(train_x, train_y, cfg.svm);

  for (std::size_t k = 0; k < pos_test; ++k) {
    result.test_scores.push_back(learning::score(p.classifier, pos[pos_idx[k]]));
    result.test_labels.push_back(1);
  }
  for (std::size_t k = 0; k < neg_test; ++k) {
    result.test_scores.push_back(learning::score(p.classifier, all_neg[neg_idx[k]]));
    result.test_labels.push_back(0);
  }
  p.calibration = learning::calibrate(result.test_scores, result.test_labels);
  p.vote = fit_vote_model(positives);
  return result;
}

WeakLabel weak_label(const detector::Activation& act, std::span<const PersonAnnotation> truths,
                     const WeakLabelConfig& cfg) {
  double best_vote = 0.0, best_patch = 0.0;
  for (const auto& t : truths) {
    best_vote = std::max(best_vote, iou(act.vote, t.bounds));
    best_patch = std::max(best_patch, iou(act.window, t.bounds));
  }
  if (act.probability >= cfg.min_probability && best_vote >= cfg.min_vote_iou) {
    return {WeakLabelKind::Positive, act.poselet_id};
  }
  if (best_patch <= cfg.max_background_iou) return {WeakLabelKind::Background, kBackground};
  return {WeakLabelKind::Discard, kBackground};
}

std::vector<CnnDatasetEntry> build_cnn_dataset(std::span<const HarvestRecord> harvested, const CnnDatasetConfig& cfg) {
  std::map<int, std::vector<std::size_t>> by_class;
  std::vector<std::size_t> background;
  for (std::size_t i = 0; i < harvested.size(); ++i) {
    const auto& l = harvested[i].label;
    if (l.kind == WeakLabelKind::Positive) by_class[l.poselet_id].push_back(i);
    else if (l.kind == WeakLabelKind::Background) background.push_back(i);
  }
  if (by_class.empty()) throw Error(Errc::EmptyHarvest, "no weakly labelled positives");
  std::mt19937_64 rng(cfg.seed);
  std::vector<CnnDatasetEntry> out;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), cfg.per_class_max));
    for (std::size_t i : idx) out.push_back({i, label});
  }
  const auto bg_cap = static_cast<std::size_t>(std::floor(cfg.bg_ratio * static_cast<double>(out.size())));
  std::shuffle(background.begin(), background.end(), rng);
  background.resize(std::min(background.size(), bg_cap));
  for (std::size_t i : background) out.push_back({i, kBackground});
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<PatchSample> materialize(const Corpus& corpus, std::span<const HarvestRecord> harvested,
                                     std::span<const CnnDatasetEntry> entries, int jitter_copies,
                                     const imaging::JitterConfig& jitter) {
  if (jitter_copies < 0) throw Error(Errc::InvalidConfig, "negative jitter copy count");
  if (jitter_copies > 0) jitter.validate();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus[i].id, i);
  std::vector<PatchSample> out;
  out.reserve(entries.size() * static_cast<std::size_t>(1 + jitter_copies));
  std::uint64_t draw = 0;
  for (const auto& e : entries) {
    const auto& act = harvested[e.record].activation;
    const auto it = index.find(act.image_id);
    if (it == index.end()) throw Error(Errc::MalformedRecord, "unknown image id " + act.image_id);
    PatchSample s;
    s.source = SimilarityTransform::window_to_patch(act.window);
    s.pixels = imaging::warp_patch(corpus[it->second].image, s.source).to_rgb();
    s.label = e.label;
    s.provenance = Provenance::BootstrappedWeak;
    s.image_id = act.image_id;
    if (act.vote.w > 0) {
      const Point c = s.source.apply({act.vote.cx(), act.vote.cy()});
      s.person_bounds = Box::from_center(c.x, c.y, act.vote.w * s.source.scale, act.vote.h * s.source.scale);
    }
    for (int k = 0; k < jitter_copies; ++k) {
      PatchSample j = s;
      const auto d = imaging::jitter_sample(corpus[it->second].image, s.source, jitter, draw++);
      j.pixels = d.patch.to_rgb();
      j.source = d.transform;
      j.person_bounds.reset();
      out.push_back(std::move(j));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dposelets::poselets
