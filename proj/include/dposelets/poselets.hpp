#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dposelets/activation.hpp"
#include "dposelets/extractor.hpp"
#include "dposelets/imaging.hpp"
#include "dposelets/learning.hpp"

namespace dposelets::poselets {

enum class KeypointName : int {
  HeadTop, Nose, LEye, REye, LShoulder, RShoulder, LElbow, RElbow, LWrist, RWrist,
  LHip, RHip, LKnee, RKnee, LAnkle, RAnkle, Neck, Pelvis, LEar, REar,
};
inline constexpr int kKeypointCount = 20;

std::string_view keypoint_name(KeypointName k);
std::optional<KeypointName> parse_keypoint(std::string_view s);

struct Keypoint {
  KeypointName name = KeypointName::Nose;
  double x = 0.0;
  double y = 0.0;
  bool visible = true;
};

struct PersonAnnotation {
  std::string image_id;
  Box bounds;
  std::vector<Keypoint> keypoints;

  const Keypoint* find(KeypointName name) const;
  /// Throws MalformedRecord on non-positive bounds, duplicate names or
  /// non-finite coordinates.
  void validate() const;
};

struct AnnotatedImage {
  std::string id;
  imaging::Image image;
  std::vector<PersonAnnotation> persons;
};

using Corpus = std::vector<AnnotatedImage>;

/// Exemplar window defining a poselet; keypoints are in [0,1]^2 window units.
struct SeedWindow {
  std::string name;
  std::string image_id;
  Box window;
  std::vector<Keypoint> keypoints;
};

/// Visible keypoints of `person` inside the square `window`, normalised.
SeedWindow make_seed(std::string name, const PersonAnnotation& person, const Box& window);

/// Person-box offset statistics in window-side units. Sizes are geometric
/// means; deviations of sizes are taken in log space.
struct VoteModel {
  double dcx = 0.0;
  double dcy = 0.0;
  double dw = 1.0;
  double dh = 1.0;
  double sd_cx = 0.0;
  double sd_cy = 0.0;
  double sd_log_w = 0.0;
  double sd_log_h = 0.0;
};

struct PoseletType {
  int id = 0;
  SeedWindow seed;
  learning::LinearModel classifier;
  learning::Calibration calibration;
  VoteModel vote;
  features::FeatureMode feature_mode = features::FeatureMode::Hog;
};

enum class Provenance { Annotated, BootstrappedWeak };
inline constexpr int kBackground = -1;

struct PatchSample {
  imaging::Image pixels;  // 61x61x3
  int label = kBackground;
  imaging::SimilarityTransform source;  // image -> patch
  Provenance provenance = Provenance::Annotated;
  std::optional<Box> person_bounds;      // in the patch frame
  std::string image_id;
  double residual = 0.0;
};

struct SimilarityFit {
  imaging::SimilarityTransform transform;
  double residual = 0.0;  // mean keypoint distance after alignment / dst_side
  int correspondences = 0;
};

/// Least-squares similarity (no reflection) mapping src onto dst over their
/// common visible keypoints.
SimilarityFit fit_similarity(std::span<const Keypoint> src, std::span<const Keypoint> dst, double dst_side = 1.0);

/// Seed keypoints in patch pixels (window units times the patch side).
std::vector<Keypoint> seed_patch_keypoints(const SeedWindow& seed, int side = imaging::kPatchSide);

struct SelectConfig {
  int count = 200;
  /// Added to the residual per fraction of seed keypoints the person lacks.
  double missing_penalty = 1.0;
};

/// Persons ranked by ascending alignment residual against the seed; the top
/// `count` are warped to 61x61 patches.
std::vector<PatchSample> select_examples(const SeedWindow& seed, const Corpus& corpus, const SelectConfig& cfg = {});

/// Residual used for ranking one person against a seed, or nullopt when
/// fewer than two keypoints are shared.
std::optional<SimilarityFit> rank_residual(const SeedWindow& seed, const PersonAnnotation& person,
                                           const SelectConfig& cfg = {});

VoteModel fit_vote_model(std::span<const PatchSample> samples, int side = imaging::kPatchSide);

struct TrainPoseletConfig {
  SelectConfig select;
  int negative_ratio = 20;
  /// Extra negatives per positive: windows on the same person whose IoU with
  /// the aligned window is at most displaced_max_iou. 0 disables them.
  int displaced_per_positive = 6;
  double displaced_max_iou = 0.3;
  double test_fraction = 0.25;
  learning::SvmConfig svm;
  std::uint64_t seed = 1;
};

struct TrainPoseletResult {
  PoseletType poselet;
  std::vector<double> test_scores;
  std::vector<int> test_labels;  // 1 positive, 0 negative
  std::size_t train_positives = 0;
  std::size_t train_negatives = 0;
};

/// Test count for a held-out split: floor(n * fraction).
std::size_t split_test_count(std::size_t n, double fraction = 0.25);

struct NegativeWindow {
  std::size_t image = 0;  // corpus index
  Box window;
};

/// Random square windows (side 61 to 0.75 of the shorter image side) that
/// touch no annotated person.
std::vector<NegativeWindow> sample_negative_windows(const Corpus& corpus, std::size_t count, std::uint64_t seed);

/// Square windows near each positive's person that overlap its aligned window
/// by at most max_iou: shifted, shrunk or enlarged copies, kept inside the image.
std::vector<NegativeWindow> displaced_windows(const Corpus& corpus, std::span<const PatchSample> positives,
                                              int per_positive, double max_iou, std::uint64_t seed);

/// sample_negative_windows warped to 61x61 patches.
std::vector<imaging::Image> sample_negative_patches(const Corpus& corpus, std::size_t count, std::uint64_t seed);

TrainPoseletResult train_poselet(int id, const SeedWindow& seed, const Corpus& corpus,
                                 const features::Extractor& extractor,
                                 std::span<const features::FeatureVector> negative_features,
                                 const TrainPoseletConfig& cfg = {});

// Bootstrap weak labelling.

struct WeakLabelConfig {
  double min_probability = 0.7;
  double min_vote_iou = 0.4;
  double max_background_iou = 0.1;
};

enum class WeakLabelKind { Positive, Background, Discard };

struct WeakLabel {
  WeakLabelKind kind = WeakLabelKind::Discard;
  int poselet_id = kBackground;
};

WeakLabel weak_label(const detector::Activation& act, std::span<const PersonAnnotation> truths,
                     const WeakLabelConfig& cfg = {});

struct HarvestRecord {
  detector::Activation activation;
  WeakLabel label;
};

struct CnnDatasetConfig {
  std::size_t per_class_max = 400;
  double bg_ratio = 2.0;
  std::uint64_t seed = 1;
  /// Jittered copies added per selected window when materialising.
  int jitter_copies = 2;
  imaging::JitterConfig jitter;
};

struct CnnDatasetEntry {
  std::size_t record = 0;
  int label = kBackground;  // poselet id or kBackground
};

/// Caps each poselet class at per_class_max and background at
/// bg_ratio * positives, then shuffles. Deterministic per seed.
std::vector<CnnDatasetEntry> build_cnn_dataset(std::span<const HarvestRecord> harvested, const CnnDatasetConfig& cfg);

/// Warps the selected activation windows to 61x61 patches. Each window is
/// followed by `jitter_copies` jittered patches of the same window and label.
std::vector<PatchSample> materialize(const Corpus& corpus, std::span<const HarvestRecord> harvested,
                                     std::span<const CnnDatasetEntry> entries, int jitter_copies = 0,
                                     const imaging::JitterConfig& jitter = {});

}  // namespace dposelets::poselets
