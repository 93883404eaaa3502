// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. --only takes a comma-separated list of numbers.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <type_traits>

#include "CLI11.hpp"
#include "dposelets/harness/eval.hpp"
#include "dposelets/harness/experiments.hpp"
#include "dposelets/harness/io.hpp"
#include "dposelets/harness/pipeline.hpp"
#include "dposelets/harness/synth.hpp"
#include "oracles.hpp"

using namespace dposelets;
using namespace dposelets::harness;
namespace cn = dposelets::convnet;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

const auto t_start = Clock::now();

void progress(const std::string& msg) {
  const double t = std::chrono::duration<double>(Clock::now() - t_start).count();
  std::cerr << "[" << std::fixed << std::setprecision(1) << t << "s] " << msg << std::endl;
}

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// 1. Gradient check.

struct GradientDraw {
  oracle::KinkAwareCheck check;
  double literal_f32 = 0.0;  // differences of the f32 forward pass itself
};

template <class T>
GradientDraw gradient_draw(const cn::NetSpec& spec, std::uint64_t seed, double eps) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<T>> xs;
  std::vector<std::vector<double>> xd;
  std::vector<int> ys;
  for (int i = 0; i < 3; ++i) {
    std::vector<T> x(spec.input.size());
    for (auto& v : x) v = static_cast<T>(u(rng));
    xd.emplace_back(x.begin(), x.end());
    xs.push_back(std::move(x));
    ys.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(spec.class_count)));
  }
  auto params = cn::NetParams<T>::he_init(spec, seed);
  for (auto& b : params.biases) {
    for (auto& v : b) v = static_cast<T>(0.1 * u(rng));
  }
  const double decay = 1e-3;
  const auto lg = cn::loss_and_grad<T>(spec, params, xs, ys, decay);
  GradientDraw d;
  d.check = oracle::check_gradient_kink_aware<T>(spec, params, lg.grads, xd, ys, decay, eps, 10, rng);
  if constexpr (std::is_same_v<T, float>) {
    d.literal_f32 = oracle::check_gradient<T>(
                        spec, params, lg.grads,
                        [&](const cn::NetParams<T>& p) { return cn::loss_and_grad<T>(spec, p, xs, ys, decay).loss; },
                        eps, 10, rng)
                        .worst_relative;
  }
  return d;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::set<std::string> kinds;
  double worst32 = 0.0, worst64 = 0.0, literal32 = 0.0;
  std::size_t checked = 0, skipped = 0;
  const int nets = 16;
  for (int v = 0; v < nets; ++v) {
    const auto spec = oracle::random_spec(v, rng);
    spec.validate();
    for (const auto& l : spec.layers) {
      switch (l.kind) {
        case cn::LayerKind::Convolution: kinds.insert(l.stride > 1 ? "conv-strided" : "conv"); break;
        case cn::LayerKind::MaxPool: kinds.insert("pool"); break;
        case cn::LayerKind::Rectifier: kinds.insert("rect"); break;
        case cn::LayerKind::FullyConnected: kinds.insert("fc"); break;
        case cn::LayerKind::Softmax: kinds.insert("softmax"); break;
      }
    }
    const auto seed = 100 + static_cast<std::uint64_t>(v);
    const auto f32 = gradient_draw<float>(spec, seed, 1e-3);
    const auto f64 = gradient_draw<double>(spec, seed, 1e-6);
    worst32 = std::max(worst32, f32.check.worst_relative);
    worst64 = std::max(worst64, f64.check.worst_relative);
    literal32 = std::max(literal32, f32.literal_f32);
    checked += f32.check.checked + f64.check.checked;
    skipped += f32.check.skipped + f64.check.skipped;
  }
  Outcome o;
  o.seconds = seconds_since(t0);
  o.pass = worst32 < 1e-3 && worst64 < 1e-6 && kinds.size() == 6 && o.seconds < 60;
  o.detail = std::to_string(nets) + " nets, " + std::to_string(kinds.size()) + "/6 layer kinds, " +
             std::to_string(checked) + " coords (" + std::to_string(skipped) +
             " kink-crossing draws redrawn), worst rel f32 " + num(worst32) + " (< 1e-3), f64 " + num(worst64) +
             " (< 1e-6); f32 forward differenced in f32: " + num(literal32);
  return o;
}

// 2. SVM.

Outcome criterion_svm() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_ratio = 0.0;
  const double lambda = 0.01;
  for (int t = 0; t < 5; ++t) {
    std::vector<std::array<double, 2>> pts;
    std::vector<features::FeatureVector> xs;
    std::vector<int> ys;
    for (int i = 0; i < 40; ++i) {
      const int y = i % 2 ? 1 : -1;
      const float a = static_cast<float>(g(rng) + 0.8 * y), b = static_cast<float>(g(rng) - 0.4 * y);
      pts.push_back({a, b});
      xs.push_back({{a, b}, "svm"});
      ys.push_back(y);
    }
    learning::SvmConfig cfg;
    cfg.lambda = lambda;
    cfg.epochs = 500;
    cfg.seed = static_cast<std::uint64_t>(t + 1);
    const auto m = learning::train_svm(xs, ys, cfg);
    const double got = oracle::svm_objective_2d(pts, ys, m.weights[0], m.weights[1], m.bias, lambda);
    const auto opt = oracle::brute_force_svm_2d(pts, ys, lambda);
    worst_ratio = std::max(worst_ratio, got / opt.objective);
  }
  // Separable fixtures at the default lambda.
  int separable_ok = 0;
  for (int t = 0; t < 5; ++t) {
    std::vector<features::FeatureVector> xs;
    std::vector<int> ys;
    std::uniform_real_distribution<double> ang(0, 2 * std::numbers::pi);
    const double theta = ang(rng);
    for (int i = 0; i < 40; ++i) {
      const int y = i % 2 ? 1 : -1;
      const double along = g(rng) * 2.0, across = y * (0.5 + std::abs(g(rng)));
      xs.push_back({{static_cast<float>(along * std::cos(theta) - across * std::sin(theta) + 3.0),
                     static_cast<float>(along * std::sin(theta) + across * std::cos(theta) - 1.0)},
                    "svm"});
      ys.push_back(y);
    }
    const auto m = learning::train_svm(xs, ys, {});
    int correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) correct += ys[i] * learning::score(m, xs[i]) > 0;
    separable_ok += correct == 40;
  }
  Outcome o;
  o.seconds = seconds_since(t0);
  o.pass = worst_ratio <= 1.02 && separable_ok == 5 && o.seconds < 10;
  o.detail = "worst objective / brute force " + num(worst_ratio, 6) + " (<= 1.02), separable fixtures " +
             std::to_string(separable_ok) + "/5 at 100% accuracy";
  return o;
}

// 3. Average precision.

Outcome criterion_ap() {
  const auto t0 = Clock::now();
  using detector::Detection;
  const TruthMap truths{{"a", {{0, 0, 10, 10}, {50, 0, 10, 10}}}};
  const std::vector<Detection> tft{{"a", {0, 0, 10, 10}, 0.9}, {"a", {100, 0, 10, 10}, 0.8}, {"a", {50, 0, 10, 10}, 0.7}};
  const double ap = evaluate(tft, truths, 0.5, ApMode::Continuous).ap;
  const double all_tp =
      evaluate({{"a", {0, 0, 10, 10}, 0.9}, {"a", {50, 0, 10, 10}, 0.8}}, truths, 0.5, ApMode::Continuous).ap;
  const double empty = evaluate({}, truths, 0.5, ApMode::Continuous).ap;

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(0, 50), size(15, 30), score(0, 1);
  int compared = 0, agree = 0;
  while (compared < 20) {
    TruthMap tm;
    std::vector<Detection> dets;
    for (const std::string id : {"p", "q"}) {
      for (int k = 0; k < 3; ++k) tm[id].push_back({pos(rng), pos(rng), size(rng), size(rng)});
      for (int k = 0; k < 3; ++k) dets.push_back({id, {pos(rng), pos(rng), size(rng), size(rng)}, score(rng)});
    }
    sort_ranked(dets);
    const auto expect = oracle::exhaustive_greedy_match(dets, tm, 0.3);
    if (expect.empty()) continue;
    ++compared;
    agree += match_detections(dets, tm, 0.3).true_positive == expect;
  }
  Outcome o;
  o.seconds = seconds_since(t0);
  o.pass = std::abs(ap - 5.0 / 6.0) < 1e-12 && all_tp == 1.0 && empty == 0.0 && agree == 20;
  o.detail = "[TP,FP,TP]/2 truths = " + num(ap, 15) + ", all-TP = " + num(all_tp) + ", empty = " + num(empty) +
             ", greedy = oracle on " + std::to_string(agree) + "/20";
  return o;
}

// 4. Similarity fit.

Outcome criterion_similarity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> scale(0.5, 2.0), rot(-30.0, 30.0), shift(-10.0, 10.0), coord(0.0, 1.0);
  double worst_param = 0.0, worst_residual = 0.0;
  int recovered = 0;
  for (int t = 0; t < 100; ++t) {
    const imaging::SimilarityTransform truth{scale(rng), rot(rng) * std::numbers::pi / 180, shift(rng), shift(rng)};
    std::vector<poselets::Keypoint> src, dst;
    for (int k = 0; k < 8; ++k) {
      const Point p{coord(rng), coord(rng)};
      const Point q = truth.apply(p);
      src.push_back({static_cast<poselets::KeypointName>(k), p.x, p.y, true});
      dst.push_back({static_cast<poselets::KeypointName>(k), q.x, q.y, true});
    }
    const auto fit = poselets::fit_similarity(src, dst);
    const double err = std::max({std::abs(fit.transform.scale - truth.scale),
                                 std::abs(fit.transform.rotation - truth.rotation),
                                 std::abs(fit.transform.tx - truth.tx), std::abs(fit.transform.ty - truth.ty)});
    worst_param = std::max(worst_param, err);
    worst_residual = std::max(worst_residual, fit.residual);
    recovered += err < 1e-6 && fit.residual < 1e-9;
  }
  Outcome o;
  o.seconds = seconds_since(t0);
  o.pass = recovered == 100;
  o.detail = std::to_string(recovered) + "/100 recovered, worst parameter error " + num(worst_param) +
             " (< 1e-6), worst residual " + num(worst_residual) + " (< 1e-9)";
  return o;
}

// 5. HOG dense vs per patch.

Outcome criterion_hog() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> side(64, 160);
  const features::HogConfig cfg;
  std::size_t windows = 0, identical = 0;
  for (int t = 0; t < 10; ++t) {
    const auto img = oracle::random_image(side(rng), side(rng), 1, rng);
    const auto dense = features::hog_dense(img, cfg, cfg.cell);
    for (int wy = 0; wy < dense.windows_y; ++wy) {
      for (int wx = 0; wx < dense.windows_x; ++wx) {
        const auto crop = img.crop(dense.origin_x(wx), dense.origin_y(wy), cfg.resample_side, cfg.resample_side);
        ++windows;
        identical += features::hog_descriptor(crop, cfg).values == dense.at(wx, wy).values;
      }
    }
  }
  Outcome o;
  o.seconds = seconds_since(t0);
  o.pass = windows > 0 && identical == windows;
  o.detail = std::to_string(identical) + "/" + std::to_string(windows) + " window positions bit-identical over 10 images";
  return o;
}

// 6. Clustering.

Outcome criterion_clustering() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(19);
  std::size_t partition_ok = 0, hull_ok = 0;
  const std::size_t sets = 10000;
  for (std::size_t t = 0; t < sets; ++t) {
    auto acts = oracle::random_activations(1 + rng() % 12, rng);
    // Distinct windows make members identifiable.
    for (std::size_t i = 0; i < acts.size(); ++i) acts[i].window.y = 1000.0 * static_cast<double>(t) + static_cast<double>(i);
    const auto hyps = detector::cluster(acts, 0.4);
    std::multiset<double> seen;
    bool hull = true;
    for (const auto& h : hyps) {
      std::vector<Point> centres;
      double lw_min = 1e300, lw_max = -1e300, lh_min = 1e300, lh_max = -1e300;
      for (const auto& m : h.members) {
        seen.insert(m.window.y);
        centres.push_back({m.vote.cx(), m.vote.cy()});
        lw_min = std::min(lw_min, std::log(m.vote.w));
        lw_max = std::max(lw_max, std::log(m.vote.w));
        lh_min = std::min(lh_min, std::log(m.vote.h));
        lh_max = std::max(lh_max, std::log(m.vote.h));
      }
      const double lw = std::log(h.consensus.w), lh = std::log(h.consensus.h);
      hull = hull && !h.members.empty() && oracle::in_convex_hull({h.consensus.cx(), h.consensus.cy()}, centres, 1e-7) &&
             lw >= lw_min - 1e-12 && lw <= lw_max + 1e-12 && lh >= lh_min - 1e-12 && lh <= lh_max + 1e-12;
    }
    std::multiset<double> expect;
    for (const auto& a : acts) expect.insert(a.window.y);
    partition_ok += seen == expect;
    hull_ok += hull;
  }

  int small_cases = 0, small_agree = 0;
  for (int t = 0; t < 500; ++t) {
    const auto acts = oracle::random_activations(1 + static_cast<std::size_t>(t % 10), rng);
    if (acts.size() > 5) continue;
    ++small_cases;
    const auto expect = oracle::cluster(acts, 0.4);
    const auto got = detector::cluster(acts, 0.4);
    bool ok = got.size() == expect.members.size();
    for (std::size_t h = 0; ok && h < got.size(); ++h) {
      ok = got[h].members.size() == expect.members[h].size();
      for (std::size_t m = 0; ok && m < got[h].members.size(); ++m) {
        const auto& a = got[h].members[m];
        const auto& b = acts[expect.members[h][m]];
        ok = a.poselet_id == b.poselet_id && a.window.x == b.window.x && a.window.y == b.window.y &&
             a.probability == b.probability && a.vote.x == b.vote.x;
      }
      const Box& c = got[h].consensus;
      const Box& e = expect.consensus[h];
      ok = ok && std::abs(c.x - e.x) < 1e-9 && std::abs(c.y - e.y) < 1e-9 && std::abs(c.w - e.w) < 1e-9 &&
           std::abs(c.h - e.h) < 1e-9;
    }
    small_agree += ok;
  }
  Outcome o;
  o.seconds = seconds_since(t0);
  o.pass = partition_ok == sets && hull_ok == sets && small_agree == small_cases && small_cases > 0;
  o.detail = "partition " + std::to_string(partition_ok) + "/" + std::to_string(sets) + ", consensus hull " +
             std::to_string(hull_ok) + "/" + std::to_string(sets) + ", oracle agreement " +
             std::to_string(small_agree) + "/" + std::to_string(small_cases) + " cases with <= 5 activations";
  return o;
}

// 8. End-to-end pipeline.

struct PipelineRun {
  double seconds = 0.0;
  double train_accuracy = 0.0;
  double ap = 0.0;
  std::size_t detections = 0;
  std::size_t test_images = 0;
  std::string network_bytes;
  std::string hog_bytes;
  std::string pdf_bytes;
  std::string detections_tsv;
  std::shared_ptr<const cn::PdfNetwork> network;
};

PipelineRun run_pipeline(const fs::path& dir, std::uint64_t seed) {
  const auto t0 = Clock::now();
  PipelineRun r;
  Log log = [](const std::string& m) { progress("  " + m); };
  ToyCorpusConfig tc;
  tc.seed = seed;
  progress("gen-toy-corpus into " + dir.string());
  write_toy_corpus(generate_toy_corpus(tc), dir / "corpus");
  const auto train = read_manifest(dir / "corpus" / "train.jsonl");
  const auto test = read_manifest(dir / "corpus" / "test.jsonl");
  r.test_images = test.size();

  PipelineConfig cfg;
  cfg.reseed(seed);
  const auto specs = default_poselet_specs();
  const auto seeds = make_seeds(train, specs);
  progress("training " + std::to_string(seeds.size()) + " HOG poselets");
  const auto hog = train_poselet_model(train, seeds, features::Extractor::hog(), cfg, nullptr, log);
  r.hog_bytes = serialize_model(hog);

  progress("bootstrap");
  const auto harvest = bootstrap_harvest(train, hog, cfg, log);
  const auto entries = poselets::build_cnn_dataset(harvest, cfg.dataset);
  const auto samples = poselets::materialize(train, harvest, entries, cfg.dataset.jitter_copies, cfg.dataset.jitter);

  progress("train-cnn on " + std::to_string(samples.size()) + " patches");
  const auto cnn = train_cnn(samples, static_cast<int>(seeds.size()), cfg, log);
  r.train_accuracy = cnn.train_accuracy;
  r.network = cnn.network;
  detector::PoseletModel holder;
  holder.extractor = features::Extractor::pdf(cnn.network);
  r.network_bytes = serialize_model(holder);

  progress("training PDF poselets");
  const auto pdf = train_poselet_model(train, seeds, features::Extractor::pdf(cnn.network), cfg, nullptr, log);
  r.pdf_bytes = serialize_model(pdf);

  progress("detect on " + std::to_string(test.size()) + " held-out images");
  const auto dets = detect_corpus(test, pdf, cfg.detect, log);
  std::ostringstream os;
  write_detections(os, dets);
  r.detections_tsv = os.str();
  r.detections = dets.size();
  r.ap = evaluate(dets, truths_of(test), 0.5, ApMode::Continuous).ap;
  r.seconds = seconds_since(t0);
  progress("pipeline done: AP " + num(r.ap) + " in " + num(r.seconds) + " s");
  return r;
}

Outcome criterion_pipeline(const PipelineRun& a, const PipelineRun& b) {
  const bool deterministic = a.network_bytes == b.network_bytes && a.hog_bytes == b.hog_bytes &&
                             a.pdf_bytes == b.pdf_bytes && a.detections_tsv == b.detections_tsv;
  Outcome o;
  o.seconds = a.seconds;
  o.pass = a.train_accuracy >= 0.95 && a.ap >= 0.8 && a.test_images == 50 && deterministic && a.seconds < 600;
  o.detail = "CNN train accuracy " + num(a.train_accuracy) + " (>= 0.95), AP@0.5 " + num(a.ap) + " (>= 0.8) on " +
             std::to_string(a.test_images) + " held-out images, " + std::to_string(a.detections) +
             " detections, rerun " + (deterministic ? "identical" : "DIFFERS") + ", " + num(a.seconds) +
             " s (< 600)";
  return o;
}

// 7. Jitter experiment.

Outcome criterion_jitter(const fs::path& corpus_dir, const std::shared_ptr<const cn::PdfNetwork>& net,
                         std::uint64_t seed) {
  const auto t0 = Clock::now();
  JitterExperimentConfig cfg;
  cfg.seed = seed;
  cfg.svm.seed = seed;
  const auto schedule = jitter_schedule(cfg);
  const std::vector<std::pair<std::size_t, std::size_t>> expect{{375, 7500}, {187, 3750}, {93, 1875}, {46, 937},
                                                                {23, 468},   {11, 234},   {5, 117},   {2, 58}};
  const auto pool = read_manifest(corpus_dir / "pool.jsonl");
  std::vector<PoseletSpec> spec;
  for (const auto& s : default_poselet_specs()) {
    if (s.name == "head_shoulders") spec.push_back(s);
  }
  const auto seeds = make_seeds(pool, spec);
  imaging::JitterConfig jitter;
  jitter.rng_seed = seed;
  const auto data = collect_patches(pool, seeds.front(), cfg.test_positives + cfg.top_positives,
                                    cfg.test_negatives + cfg.top_negatives, jitter, seed);
  const auto rows = experiment_jitter(data, features::Extractor::hog(), features::Extractor::pdf(net), cfg,
                                      [](const std::string& m) { progress("  " + m); });
  Outcome o;
  o.seconds = seconds_since(t0);
  std::vector<std::pair<std::size_t, std::size_t>> got;
  int pdf_wins = 0;
  for (const auto& r : rows) {
    got.emplace_back(r.positives, r.negatives);
    pdf_wins += r.ap_pdf >= r.ap_hog;
  }
  std::cerr << jitter_table(rows).to_tsv();
  const double drop_pdf = rows.front().ap_pdf - rows.back().ap_pdf;
  const double drop_hog = rows.front().ap_hog - rows.back().ap_hog;
  o.pass = schedule == expect && got == expect && data.positives.size() >= 500 && data.negatives.size() >= 10000 &&
           pdf_wins >= 6 && drop_pdf <= drop_hog && o.seconds < 900;
  o.detail = "schedule " + std::string(got == expect ? "exact" : "WRONG") + ", " + std::to_string(data.positives.size()) +
             " positives / " + std::to_string(data.negatives.size()) + " negatives, AP_pdf >= AP_hog in " +
             std::to_string(pdf_wins) + "/8 rows (>= 6), drop pdf " + num(drop_pdf) + " <= hog " + num(drop_hog) +
             ", " + num(o.seconds) + " s (< 900)";
  return o;
}

// 9. Serialization.

Outcome criterion_serialization(const PipelineRun* run) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::string> blobs;
  {
    detector::PoseletModel m;
    for (int id = 0; id < 4; ++id) {
      poselets::PoseletType p;
      p.id = id;
      p.seed.name = "p" + std::to_string(id);
      p.seed.window = {g(rng), g(rng), 70, 70};
      for (int k = 0; k < 1764; ++k) p.classifier.weights.push_back(static_cast<float>(g(rng)));
      p.classifier.bias = g(rng);
      p.classifier.extractor_tag = m.extractor.tag();
      p.calibration = {-std::abs(g(rng)), g(rng)};
      p.vote = {g(rng), g(rng), 1.1, 2.3, 0.1, 0.2, 0.3, 0.4};
      m.poselets.push_back(p);
    }
    m.scorer = {detector::HypothesisScorer::Mode::Linear, {g(rng), g(rng), g(rng), g(rng)}, g(rng)};
    blobs.push_back(serialize_model(m));
  }
  {
    const auto spec = cn::NetSpec::standard(6);
    detector::PoseletModel holder;
    holder.extractor =
        features::Extractor::pdf(std::make_shared<const cn::PdfNetwork>(spec, cn::NetParams<float>::he_init(spec, 5)));
    blobs.push_back(serialize_model(holder));
  }
  if (run) {
    blobs.push_back(run->hog_bytes);
    blobs.push_back(run->network_bytes);
    blobs.push_back(run->pdf_bytes);
  }
  int identical = 0, detected = 0, corruptions = 0;
  for (const auto& bytes : blobs) {
    identical += serialize_model(deserialize_model(bytes)) == bytes;
    // Flip one byte at several payload offsets.
    const std::size_t header = bytes.find("\nend\n") + 5;
    for (int k = 0; k < 5; ++k) {
      std::string bad = bytes;
      const std::size_t at = header + (bytes.size() - header) * static_cast<std::size_t>(k + 1) / 6;
      bad[at] = static_cast<char>(bad[at] ^ 0x5a);
      ++corruptions;
      try {
        deserialize_model(bad);
      } catch (const Error& e) {
        detected += e.code() == Errc::ChecksumMismatch;
      }
    }
  }
  Outcome o;
  o.seconds = seconds_since(t0);
  o.pass = identical == static_cast<int>(blobs.size()) && detected == corruptions;
  o.detail = std::to_string(identical) + "/" + std::to_string(blobs.size()) + " models round-trip byte-identical, " +
             std::to_string(detected) + "/" + std::to_string(corruptions) + " corrupted payloads raise ChecksumMismatch";
  return o;
}

const char* kNames[] = {"",           "gradient-check", "svm",      "average-precision", "similarity-fit",
                        "hog-dense",  "clustering",     "jitter-experiment", "end-to-end", "serialization"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  std::uint64_t seed = 1;
  app.add_option("--work-dir", work, "Scratch directory for the pipeline runs");
  app.add_option("--only", only, "Criterion numbers to run")->delimiter(',');
  app.add_option("--seed", seed)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  std::map<int, Outcome> results;
  auto run = [&](int n, const std::function<Outcome()>& f) {
    if (!wanted(n)) return;
    progress("criterion " + std::to_string(n) + " (" + kNames[n] + ")");
    try {
      results[n] = f();
    } catch (const std::exception& e) {
      results[n] = {false, std::string("threw: ") + e.what(), 0.0};
    }
  };

  run(1, criterion_gradients);
  run(2, criterion_svm);
  run(3, criterion_ap);
  run(4, criterion_similarity);
  run(5, criterion_hog);
  run(6, criterion_clustering);

  std::optional<PipelineRun> first;
  if (wanted(7) || wanted(8)) {
    try {
      first = run_pipeline(fs::path(work) / "run1", seed);
    } catch (const std::exception& e) {
      results[8] = {false, std::string("pipeline threw: ") + e.what(), 0.0};
      results[7] = {false, "no network: pipeline failed", 0.0};
    }
  }
  if (first) {
    run(8, [&] { return criterion_pipeline(*first, run_pipeline(fs::path(work) / "run2", seed)); });
    run(7, [&] { return criterion_jitter(fs::path(work) / "run1" / "corpus", first->network, seed); });
  }
  run(9, [&] { return criterion_serialization(first ? &*first : nullptr); });

  bool all = true;
  for (const auto& [n, o] : results) {
    all = all && o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << n << " " << kNames[n] << ": " << o.detail << " ["
              << std::fixed << std::setprecision(1) << o.seconds << " s]" << std::defaultfloat << "\n";
  }
  return all ? 0 : 1;
}
