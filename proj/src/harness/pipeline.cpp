#include "dposelets/harness/pipeline.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <tuple>

namespace dposelets::harness {

using poselets::HarvestRecord;
using poselets::WeakLabelKind;

namespace {

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

bool scannable(const imaging::Image& img) {
  return std::min(img.width(), img.height()) >= imaging::kPatchSide;
}

}  // namespace

void PipelineConfig::reseed(std::uint64_t s) {
  seed = s;
  poselet.seed = s;
  poselet.svm.seed = s;
  dataset.seed = s;
  dataset.jitter.rng_seed = s ^ 0x6a177e4ULL;
  sgd.rng_seed = s;
}

detector::PoseletModel train_poselet_model(const poselets::Corpus& corpus, std::span<const poselets::SeedWindow> seeds,
                                           const features::Extractor& extractor, const PipelineConfig& cfg,
                                           std::vector<PoseletReport>* report, const Log& log) {
  if (seeds.empty()) throw Error(Errc::EmptyModel, "no poselet seeds");
  if (!extractor.ready()) throw Error(Errc::ExtractorNotReady, "PDF extractor has no trained network");
  say(log, "sampling " + std::to_string(cfg.negatives) + " negative patches");
  const auto neg_patches = poselets::sample_negative_patches(corpus, cfg.negatives, cfg.seed);
  const auto neg_features = features::extract_all(neg_patches, extractor);

  detector::PoseletModel model;
  model.extractor = extractor;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    auto pc = cfg.poselet;
    pc.seed = cfg.poselet.seed + k;
    auto res = poselets::train_poselet(static_cast<int>(k), seeds[k], corpus, extractor, neg_features, pc);
    const double ap = classifier_ap(res.test_scores, res.test_labels);
    say(log, "poselet " + seeds[k].name + ": " + std::to_string(res.train_positives) + " positives, " +
                 std::to_string(res.train_negatives) + " negatives, held-out AP " + fixed(ap));
    if (report) report->push_back({seeds[k].name, res.train_positives, res.train_negatives, ap});
    model.poselets.push_back(std::move(res.poselet));
  }

  if (cfg.train_scorer) {
    std::vector<std::vector<detector::PersonHypothesis>> hyps;
    std::vector<std::vector<Box>> truths;
    for (const auto& img : corpus) {
      if (!scannable(img.image)) continue;
      hyps.push_back(detector::hypotheses(img.image, model, cfg.detect, img.id));
      truths.emplace_back();
      for (const auto& p : img.persons) truths.back().push_back(p.bounds);
    }
    auto st = detector::train_scorer(hyps, truths, model.poselets.size());
    if (st.fallback) say(log, "warning: " + st.message);
    model.scorer = st.scorer;
  }
  return model;
}

std::vector<HarvestRecord> bootstrap_harvest(const poselets::Corpus& corpus, const detector::PoseletModel& model,
                                             const PipelineConfig& cfg, const Log& log) {
  auto dc = cfg.detect;
  dc.threshold = cfg.harvest_threshold;
  std::vector<HarvestRecord> out;
  std::size_t total_pos = 0, total_bg = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& img = corpus[i];
    if (!scannable(img.image)) continue;
    auto acts = detector::scan_image(img.image, model, dc, img.id);
    detector::assign_votes(acts, model);
    using Key = std::tuple<int, long long, long long>;
    std::map<Key, HarvestRecord> positive, background;
    for (const auto& a : acts) {
      const auto wl = poselets::weak_label(a, img.persons, cfg.weak);
      if (wl.kind == WeakLabelKind::Discard) continue;
      const Key key{a.level, std::llround(a.window.x * 1024), std::llround(a.window.y * 1024)};
      auto& slot = wl.kind == WeakLabelKind::Positive ? positive : background;
      const auto it = slot.find(key);
      if (it == slot.end() || a.probability > it->second.activation.probability) slot[key] = {a, wl};
    }
    for (auto& [key, rec] : positive) {
      // A window that is positive for some poselet never serves as background.
      background.erase(key);
      out.push_back(std::move(rec));
      ++total_pos;
    }
    std::vector<HarvestRecord> bg;
    for (auto& [key, rec] : background) bg.push_back(std::move(rec));
    std::stable_sort(bg.begin(), bg.end(), [](const HarvestRecord& a, const HarvestRecord& b) {
      return a.activation.probability > b.activation.probability;
    });
    const std::size_t hard = std::min(bg.size(), cfg.background_per_image / 2);
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(i)};
    std::mt19937_64 rng(seq);
    std::shuffle(bg.begin() + static_cast<std::ptrdiff_t>(hard), bg.end(), rng);
    bg.resize(std::min(bg.size(), cfg.background_per_image));
    total_bg += bg.size();
    for (auto& r : bg) out.push_back(std::move(r));
  }
  say(log, "harvested " + std::to_string(total_pos) + " weak positives and " + std::to_string(total_bg) +
               " background windows from " + std::to_string(corpus.size()) + " images");
  return out;
}

int cnn_class(int label, int poselet_count) {
  if (label == poselets::kBackground) return poselet_count;
  if (label < 0 || label >= poselet_count) {
    throw Error(Errc::LabelOutOfRange, "patch label " + std::to_string(label) + " outside the poselet range");
  }
  return label;
}

CnnTraining train_cnn(std::span<const poselets::PatchSample> samples, int poselet_count, const PipelineConfig& cfg,
                      const Log& log) {
  if (samples.empty()) throw Error(Errc::EmptyDataset, "no training patches");
  if (poselet_count < 1) throw Error(Errc::InvalidConfig, "need at least one poselet class");
  const auto spec = convnet::NetSpec::standard(poselet_count + 1);
  std::vector<std::vector<float>> inputs;
  std::vector<int> labels;
  inputs.reserve(samples.size());
  for (const auto& s : samples) {
    inputs.push_back(convnet::to_tensor<float>(s.pixels.with_channels(3)));
    labels.push_back(cnn_class(s.label, poselet_count));
  }
  say(log, "training on " + std::to_string(samples.size()) + " patches, " + std::to_string(poselet_count + 1) +
               " classes");
  CnnTraining out;
  auto params = convnet::train<float>(spec, inputs, labels, cfg.sgd, &out.report, [&](int epoch, double loss) {
    say(log, "epoch " + std::to_string(epoch + 1) + " loss " + fixed(loss));
  });
  auto net = std::make_shared<convnet::PdfNetwork>(spec, std::move(params));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += net->classify(samples[i].pixels) == labels[i];
  out.train_accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  out.samples = samples.size();
  out.network = std::move(net);
  say(log, "training accuracy " + fixed(out.train_accuracy));
  return out;
}

std::vector<detector::Detection> detect_corpus(const poselets::Corpus& corpus, const detector::PoseletModel& model,
                                               const detector::DetectConfig& cfg, const Log& log) {
  std::vector<detector::Detection> out;
  for (const auto& img : corpus) {
    auto d = detector::detect(img.image, model, cfg, img.id);
    out.insert(out.end(), d.begin(), d.end());
  }
  say(log, std::to_string(out.size()) + " detections on " + std::to_string(corpus.size()) + " images");
  return out;
}

TruthMap truths_of(const poselets::Corpus& corpus) {
  TruthMap t;
  for (const auto& img : corpus) {
    auto& boxes = t[img.id];
    for (const auto& p : img.persons) boxes.push_back(p.bounds);
  }
  return t;
}

}  // namespace dposelets::harness
