#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dposelets/convnet.hpp"
#include "dposelets/detector.hpp"
#include "dposelets/harness/eval.hpp"
#include "dposelets/harness/experiments.hpp"
#include "dposelets/poselets.hpp"

namespace dposelets::harness {

struct PipelineConfig {
  poselets::TrainPoseletConfig poselet;
  std::size_t negatives = 4000;  // person-free patches shared by all poselets
  bool train_scorer = true;
  detector::DetectConfig detect;

  // Bootstrap harvest.
  double harvest_threshold = 0.0;
  poselets::WeakLabelConfig weak;
  std::size_t background_per_image = 40;  // half hardest, half random
  poselets::CnnDatasetConfig dataset{.per_class_max = 300, .bg_ratio = 2.0, .seed = 1};

  convnet::SgdConfig sgd{.learning_rate = 0.01, .momentum = 0.9, .batch_size = 32, .epochs = 8,
                         .weight_decay = 1e-4, .rng_seed = 1};
  std::uint64_t seed = 1;

  /// Propagates `seed` into every stage's own seed.
  void reseed(std::uint64_t s);
};

struct PoseletReport {
  std::string name;
  std::size_t train_positives = 0;
  std::size_t train_negatives = 0;
  double held_out_ap = 0.0;
};

/// Trains one poselet per seed (ids in seed order) and, when enabled, the
/// hypothesis scorer on the same corpus.
detector::PoseletModel train_poselet_model(const poselets::Corpus& corpus, std::span<const poselets::SeedWindow> seeds,
                                           const features::Extractor& extractor, const PipelineConfig& cfg,
                                           std::vector<PoseletReport>* report = nullptr, const Log& log = {});

/// Scans every image with the (HOG) model and weak-labels the activations.
/// Positives keep every pre-NMS activation, one label per window (the most
/// probable poselet). Background keeps background_per_image windows per image.
std::vector<poselets::HarvestRecord> bootstrap_harvest(const poselets::Corpus& corpus,
                                                       const detector::PoseletModel& model, const PipelineConfig& cfg,
                                                       const Log& log = {});

struct CnnTraining {
  std::shared_ptr<const convnet::PdfNetwork> network;
  convnet::TrainReport report;
  double train_accuracy = 0.0;
  std::size_t samples = 0;
};

/// Class index of a weak label: poselet id, background last.
int cnn_class(int label, int poselet_count);

/// Trains the standard network on bootstrapped patches (labels are poselet
/// ids or kBackground) and reports accuracy on that same set.
CnnTraining train_cnn(std::span<const poselets::PatchSample> samples, int poselet_count, const PipelineConfig& cfg,
                      const Log& log = {});

std::vector<detector::Detection> detect_corpus(const poselets::Corpus& corpus, const detector::PoseletModel& model,
                                               const detector::DetectConfig& cfg, const Log& log = {});

TruthMap truths_of(const poselets::Corpus& corpus);

}  // namespace dposelets::harness
