#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dposelets/poselets.hpp"

namespace dposelets::harness {

/// Toy pose corpus: articulated glyph persons (capsule limbs, disk head,
/// clothing colours, random joint angles and body turn) composited over
/// smooth noisy backgrounds with geometric clutter. Every keypoint is annotated.
struct ToyCorpusConfig {
  int train_images = 160;
  int test_images = 50;
  int pool_images = 300;  // extra persons for the feature experiments
  int pool_backgrounds = 60;  // person-free pool images, the negative source
  int width = 288;
  int height = 240;
  double min_person_height = 150.0;
  double max_person_height = 210.0;
  int max_persons = 2;
  double empty_fraction = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ToyCorpus {
  poselets::Corpus train;
  poselets::Corpus test;
  poselets::Corpus pool;
};

/// Background only.
imaging::Image render_background(int width, int height, std::mt19937_64& rng);

/// Draws one person of figure height `height` whose bounds' top-left lands at
/// (x, y). Returns its annotation (bounds and all 20 keypoints).
poselets::PersonAnnotation plant_person(imaging::Image& canvas, double x, double y, double height,
                                        std::mt19937_64& rng);
/// Width and height of the bounds plant_person would produce for the same rng state.
Box person_extent(double height, std::mt19937_64 rng);

poselets::AnnotatedImage render_toy_image(const std::string& id, int width, int height, int persons,
                                          double min_person_height, double max_person_height, std::uint64_t seed);

/// Split "train", "test" or "pool" of the corpus described by cfg.
poselets::Corpus generate_toy_split(const ToyCorpusConfig& cfg, const std::string& split);
ToyCorpus generate_toy_corpus(const ToyCorpusConfig& cfg);
/// dir/train.jsonl, dir/test.jsonl, dir/pool.jsonl and dir/images/.
void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir);

/// A poselet definition: the window is centred on the mean of the anchor
/// keypoints (the person box centre when there are none) and has side
/// side_factor times the person height.
struct PoseletSpec {
  std::string name;
  std::vector<poselets::KeypointName> anchors;
  double side_factor = 0.5;
};

/// head_shoulders, upper_body, torso, legs, full_body.
std::vector<PoseletSpec> default_poselet_specs();

/// Seed window of `spec` around `person`.
poselets::SeedWindow seed_from_person(const PoseletSpec& spec, const poselets::PersonAnnotation& person);

/// One seed per spec, from the first person (in corpus order) with every
/// anchor visible. Throws NoMatchingExamples.
std::vector<poselets::SeedWindow> make_seeds(const poselets::Corpus& corpus, std::span<const PoseletSpec> specs);

}  // namespace dposelets::harness
