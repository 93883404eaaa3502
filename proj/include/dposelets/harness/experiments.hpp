#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dposelets/extractor.hpp"
#include "dposelets/harness/io.hpp"
#include "dposelets/learning.hpp"
#include "dposelets/poselets.hpp"

namespace dposelets::harness {

using Log = std::function<void(const std::string&)>;

/// Aligned positive patches of one poselet and person-free negatives.
struct PatchSets {
  std::vector<imaging::Image> positives;
  std::vector<imaging::Image> negatives;
};

/// Up to `positives` examples of `seed` (ranked by select_examples) and
/// `negatives` random person-free windows. With `jitter`, every patch is a
/// jitter_sample of its source window instead of the plain warp.
PatchSets collect_patches(const poselets::Corpus& corpus, const poselets::SeedWindow& seed, std::size_t positives,
                          std::size_t negatives, const std::optional<imaging::JitterConfig>& jitter,
                          std::uint64_t rng_seed);

struct JitterRow {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double ap_hog = 0.0;
  double ap_pdf = 0.0;
};

struct JitterExperimentConfig {
  std::size_t test_positives = 125;
  std::size_t test_negatives = 2500;
  std::size_t top_positives = 375;
  std::size_t top_negatives = 7500;
  int rows = 8;
  learning::SvmConfig svm{.lambda = 1e-3};
  std::uint64_t seed = 1;
};

/// Halving schedule: row k trains on floor(top / 2^k) of each class.
std::vector<std::pair<std::size_t, std::size_t>> jitter_schedule(const JitterExperimentConfig& cfg);

/// Shuffles each class per seed, holds out the test counts, and for every
/// schedule row trains one linear SVM per feature mode on the leading slice
/// of the training pool. AP is measured on the fixed held-out set.
/// Throws InsufficientData.
std::vector<JitterRow> experiment_jitter(const PatchSets& data, const features::Extractor& hog,
                                         const features::Extractor& pdf, const JitterExperimentConfig& cfg,
                                         const Log& log = {});

Table jitter_table(std::span<const JitterRow> rows);

struct CompareRow {
  std::string poselet;
  double fraction = 1.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double ap_hog = 0.0;
  double ap_pdf = 0.0;
};

struct CompareExperimentConfig {
  std::vector<double> fractions = {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0};
  std::size_t max_positives = 500;
  std::size_t negative_ratio = 20;
  double test_fraction = 0.25;
  std::size_t min_seeds = 4;
  learning::SvmConfig svm;
  std::uint64_t seed = 1;
};

/// Per poselet: up to max_positives examples and negative_ratio times as many
/// negatives, a fixed test_fraction split, then HOG and PDF models trained on
/// each fraction of the training part. Throws InsufficientData.
std::vector<CompareRow> experiment_feature_compare(const poselets::Corpus& corpus,
                                                   std::span<const poselets::SeedWindow> seeds,
                                                   const features::Extractor& hog, const features::Extractor& pdf,
                                                   const CompareExperimentConfig& cfg, const Log& log = {});

Table compare_table(std::span<const CompareRow> rows);

/// Held-out AP of a linear SVM trained on the given features.
double linear_probe_ap(std::span<const features::FeatureVector> train_pos,
                       std::span<const features::FeatureVector> train_neg,
                       std::span<const features::FeatureVector> test_pos,
                       std::span<const features::FeatureVector> test_neg, const learning::SvmConfig& svm);

}  // namespace dposelets::harness
