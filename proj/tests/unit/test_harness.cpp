#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dposelets/harness/eval.hpp"
#include "dposelets/harness/experiments.hpp"
#include "dposelets/harness/io.hpp"
#include "oracles.hpp"

using namespace dposelets;
using namespace dposelets::harness;
using detector::Detection;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidConfig;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "dposelets_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

detector::PoseletModel sample_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  detector::PoseletModel m;
  m.extractor = features::Extractor::hog();
  for (int id = 0; id < 3; ++id) {
    poselets::PoseletType p;
    p.id = id;
    p.seed.name = "p" + std::to_string(id);
    p.seed.image_id = "img_" + std::to_string(id);
    p.seed.window = {1.5, 2.25, 80, 80};
    p.seed.keypoints = {{poselets::KeypointName::Nose, 0.25, 0.5, true}, {poselets::KeypointName::Neck, 0.5, 0.75, false}};
    for (int k = 0; k < 1764; ++k) p.classifier.weights.push_back(static_cast<float>(g(rng)));
    p.classifier.bias = g(rng);
    p.classifier.lambda = 1e-4;
    p.classifier.extractor_tag = m.extractor.tag();
    p.calibration = {-1.7, 0.3};
    p.vote = {0.1, 0.6, 1.2, 2.9, 0.05, 0.07, 0.1, 0.12};
    m.poselets.push_back(p);
  }
  m.scorer = {detector::HypothesisScorer::Mode::Linear, {0.5, 0.25, 1.0 / 3.0}, -0.1};
  return m;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("AP examples") {
    CHECK(average_precision({true, false, true}, 2, ApMode::Continuous).ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(average_precision({true, true, true}, 3, ApMode::Continuous).ap == 1.0);
    CHECK(average_precision({}, 3, ApMode::Continuous).ap == 0.0);
    CHECK(average_precision({false, false}, 1, ApMode::Continuous).ap == 0.0);
    CHECK(code_of([] { average_precision({true}, 0, ApMode::Continuous); }) == Errc::NoTruths);
    // 11-point: precision 1 up to recall 0.5, then 2/3.
    CHECK(average_precision({true, false, true}, 2, ApMode::ElevenPoint).ap ==
          doctest::Approx((6 * 1.0 + 5 * (2.0 / 3.0)) / 11.0).epsilon(1e-12));
    CHECK(parse_ap_mode("11pt") == ApMode::ElevenPoint);
    CHECK(parse_ap_mode("cont") == ApMode::Continuous);
    CHECK_THROWS_AS(parse_ap_mode("voc"), Error);
  }

  TEST_CASE("AP agrees with the precision-envelope oracle") {
    std::mt19937_64 rng(109);
    std::bernoulli_distribution tp(0.5);
    for (int t = 0; t < 100; ++t) {
      std::vector<bool> flags(1 + rng() % 30);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < flags.size(); ++i) hits += flags[i] = tp(rng);
      const std::size_t truths = hits + rng() % 4 + (hits == 0);
      for (bool eleven : {false, true}) {
        const auto r = average_precision(flags, truths, eleven ? ApMode::ElevenPoint : ApMode::Continuous);
        CHECK(r.ap == doctest::Approx(oracle::ap_from_flags(flags, truths, eleven)).epsilon(1e-12));
        CHECK(r.ap >= 0.0);
        CHECK(r.ap <= 1.0);
        CHECK(r.curve.size() == flags.size());
      }
    }
  }

  TEST_CASE("matching examples and errors") {
    const TruthMap truths{{"a", {{0, 0, 10, 10}, {20, 0, 10, 10}}}, {"b", {{0, 0, 10, 10}}}};
    std::vector<Detection> dets{{"a", {0, 0, 10, 10}, 0.9}, {"a", {1, 0, 10, 10}, 0.8}, {"b", {0, 0, 10, 10}, 0.7},
                                {"c", {0, 0, 10, 10}, 0.6}};
    const auto m = match_detections(dets, truths, 0.5);
    CHECK(m.true_positive == std::vector<bool>{true, false, true, false});
    CHECK(m.truth_count == 3);
    // Envelope 1, 2/3, 2/3, 1/2; recall steps of 1/3 at ranks 1 and 3.
    CHECK(evaluate(dets, truths, 0.5, ApMode::Continuous).ap == doctest::Approx(5.0 / 9.0));

    std::swap(dets[0], dets[1]);
    CHECK(code_of([&] { match_detections(dets, truths, 0.5); }) == Errc::UnsortedInput);
    // evaluate sorts first.
    CHECK(evaluate(dets, truths, 0.5, ApMode::Continuous).ap == doctest::Approx(5.0 / 9.0));
  }

  TEST_CASE("greedy matching equals the exhaustive oracle") {
    std::mt19937_64 rng(113);
    std::uniform_real_distribution<double> pos(0, 60), size(15, 30), score(0, 1);
    int compared = 0;
    for (int t = 0; t < 60; ++t) {
      TruthMap truths;
      std::vector<Detection> dets;
      for (const std::string id : {"x", "y"}) {
        for (int k = 0; k < 3; ++k) truths[id].push_back({pos(rng), pos(rng), size(rng), size(rng)});
        for (int k = 0; k < 3; ++k) dets.push_back({id, {pos(rng), pos(rng), size(rng), size(rng)}, score(rng)});
      }
      sort_ranked(dets);
      const auto expect = oracle::exhaustive_greedy_match(dets, truths, 0.3);
      if (expect.empty()) continue;
      CHECK(match_detections(dets, truths, 0.3).true_positive == expect);
      ++compared;
    }
    CHECK(compared >= 20);
  }

  TEST_CASE("classifier AP breaks ties pessimistically") {
    const std::vector<double> scores{1.0, 1.0, 0.5};
    const std::vector<int> pos_first{1, 0, 1}, neg_first{0, 1, 1};
    CHECK(classifier_ap(scores, pos_first) == classifier_ap(scores, neg_first));
    // Ranked [FP, TP, TP]: the envelope lifts the first recall step to 2/3.
    CHECK(classifier_ap(scores, pos_first) == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("jitter schedule rows") {
    const auto rows = jitter_schedule({});
    const std::vector<std::pair<std::size_t, std::size_t>> expect{{375, 7500}, {187, 3750}, {93, 1875}, {46, 937},
                                                                  {23, 468},   {11, 234},   {5, 117},   {2, 58}};
    CHECK(rows == expect);
    PatchSets tiny;
    tiny.positives.assign(10, imaging::Image(61, 61, 3));
    tiny.negatives.assign(10, imaging::Image(61, 61, 3));
    CHECK(code_of([&] {
            experiment_jitter(tiny, features::Extractor::hog(), features::Extractor::hog(), JitterExperimentConfig{});
          }) == Errc::InsufficientData);
  }

  TEST_CASE("feature comparison needs enough seeds") {
    const std::vector<poselets::SeedWindow> seeds(2);
    CHECK(code_of([&] {
            experiment_feature_compare({}, seeds, features::Extractor::hog(), features::Extractor::hog(), {});
          }) == Errc::InsufficientData);
  }

  TEST_CASE("manifest records") {
    const auto rec = parse_manifest_record(
        R"({"image": "images/a.ppm", "id": "a", "persons": [{"bounds": [1, 2, 30, 60], "keypoints": {"nose": [5, 6, 1], "l_ankle": [7, 8, 0]}}]})",
        1, ".", false);
    CHECK(rec.id == "a");
    REQUIRE(rec.persons.size() == 1);
    CHECK(rec.persons[0].bounds.w == 30);
    CHECK(rec.persons[0].keypoints.size() == 2);
    const auto* nose = rec.persons[0].find(poselets::KeypointName::Nose);
    REQUIRE(nose);
    CHECK(nose->x == 5);

    try {
      parse_manifest_record(R"({"image": "x.ppm", "persons": [{"bounds": [1, 2, -3, 4]}]})", 7, ".", false);
      FAIL("expected MalformedRecord");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MalformedRecord);
      CHECK(std::string(e.what()).find("line 7") != std::string::npos);
    }
    CHECK(code_of([] { parse_manifest_record("{not json", 3, ".", false); }) == Errc::MalformedRecord);
  }

  TEST_CASE("manifest round trip") {
    const auto dir = scratch("manifest");
    poselets::AnnotatedImage img;
    img.id = "one";
    img.image = imaging::Image(70, 64, 3, 0.2f);
    img.persons.push_back({"one", {3, 4, 40, 50}, {{poselets::KeypointName::LShoulder, 10.5, 12.25, true}}});
    write_manifest({img}, dir / "m.jsonl");
    const auto back = read_manifest(dir / "m.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back[0].id == "one");
    CHECK(back[0].image.width() == 70);
    CHECK(back[0].persons[0].keypoints[0].x == 10.5);
  }

  TEST_CASE("model container round trip and corruption") {
    const auto m = sample_model(5);
    const std::string bytes = serialize_model(m);
    const auto back = deserialize_model(bytes);
    CHECK(serialize_model(back) == bytes);
    REQUIRE(back.poselets.size() == 3);
    CHECK(back.poselets[1].classifier.weights == m.poselets[1].classifier.weights);
    // Blobs are float32: doubles come back rounded, and a second trip is exact.
    CHECK(back.poselets[2].vote.sd_log_h == static_cast<double>(static_cast<float>(m.poselets[2].vote.sd_log_h)));
    CHECK(back.poselets[2].vote.sd_log_h != m.poselets[2].vote.sd_log_h);
    for (std::size_t k = 0; k < m.scorer.weights.size(); ++k) {
      CHECK(back.scorer.weights[k] == static_cast<double>(static_cast<float>(m.scorer.weights[k])));
    }
    const auto again = deserialize_model(serialize_model(back));
    CHECK(again.scorer.weights == back.scorer.weights);
    CHECK(again.poselets[2].vote.sd_log_h == back.poselets[2].vote.sd_log_h);

    std::string flipped = bytes;
    flipped[flipped.size() - 100] ^= 0x10;
    CHECK(code_of([&] { deserialize_model(flipped); }) == Errc::ChecksumMismatch);
    CHECK(code_of([&] { deserialize_model(bytes.substr(0, bytes.size() - 8)); }) == Errc::ChecksumMismatch);
    std::string version = bytes;
    version.replace(0, 5, "DPSL9");
    CHECK(code_of([&] { deserialize_model(version); }) == Errc::VersionMismatch);

    const auto dir = scratch("model");
    write_model(m, dir / "m.dpsl");
    CHECK(read_file(dir / "m.dpsl") == bytes);
    CHECK(serialize_model(read_model(dir / "m.dpsl")) == bytes);
  }

  TEST_CASE("network container round trip") {
    const auto spec = convnet::NetSpec::standard(3);
    detector::PoseletModel m;
    m.extractor = features::Extractor::pdf(
        std::make_shared<const convnet::PdfNetwork>(spec, convnet::NetParams<float>::he_init(spec, 3)));
    const std::string bytes = serialize_model(m);
    const auto back = deserialize_model(bytes);
    REQUIRE(back.extractor.network());
    CHECK(back.extractor.tag() == m.extractor.tag());
    CHECK(serialize_model(back) == bytes);
  }

  TEST_CASE("detections and tables") {
    const std::vector<Detection> dets{{"a", {0.1, 2.0 / 3.0, 10, 20}, 0.123456789}, {"b", {5, 6, 7, 8}, -1e-9}};
    const auto dir = scratch("dets");
    write_detections(dir / "d.tsv", dets);
    const auto back = read_detections(dir / "d.tsv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].box.y == dets[0].box.y);
    CHECK(back[0].score == dets[0].score);
    CHECK(back[1].image_id == "b");

    CHECK(parse_number(format_number(0.1)) == 0.1);
    CHECK(format_number(2.5) == "2.5");
    Table t;
    t.header = {"a", "b"};
    t.add({"1", "x"});
    CHECK(t.to_tsv() == "a\tb\n1\tx\n");
    CHECK_THROWS_AS(t.add({"only"}), Error);
  }

  TEST_CASE("patch store round trip") {
    std::mt19937_64 rng(127);
    std::uniform_int_distribution<int> byte(0, 255);
    std::vector<poselets::PatchSample> samples(3);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto& s = samples[i];
      s.pixels = imaging::Image(61, 61, 3);
      for (auto& v : s.pixels.data()) v = static_cast<float>(byte(rng)) / 255.0f;
      s.label = static_cast<int>(i) - 1;
      s.source = {1.25, 0.1, -3.5, 7.0};
      s.provenance = poselets::Provenance::BootstrappedWeak;
      s.image_id = "img" + std::to_string(i);
    }
    samples[1].person_bounds = Box{1, 2, 30, 60};
    const auto dir = scratch("patches");
    write_patch_store(dir, samples);
    const auto back = read_patch_store(dir);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back[i].pixels == samples[i].pixels);
      CHECK(back[i].label == samples[i].label);
      CHECK(back[i].source.rotation == samples[i].source.rotation);
      CHECK(back[i].image_id == samples[i].image_id);
    }
    CHECK_FALSE(back[0].person_bounds.has_value());
    REQUIRE(back[1].person_bounds.has_value());
    CHECK(back[1].person_bounds->h == 60);
  }
}
