#include "dposelets/harness/experiments.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <unordered_map>

#include "dposelets/harness/eval.hpp"

namespace dposelets::harness {

using features::FeatureVector;
using imaging::Image;

namespace {

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

template <class T>
void shuffle_with(std::vector<T>& v, std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream};
  std::mt19937_64 rng(seq);
  std::shuffle(v.begin(), v.end(), rng);
}

}  // namespace

PatchSets collect_patches(const poselets::Corpus& corpus, const poselets::SeedWindow& seed, std::size_t positives,
                          std::size_t negatives, const std::optional<imaging::JitterConfig>& jitter,
                          std::uint64_t rng_seed) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus[i].id, i);
  PatchSets out;
  poselets::SelectConfig sel;
  sel.count = static_cast<int>(positives);
  std::uint64_t draw = 0;
  for (auto& s : poselets::select_examples(seed, corpus, sel)) {
    if (jitter) {
      const auto& img = corpus[index.at(s.image_id)].image;
      out.positives.push_back(imaging::jitter_sample(img, s.source, *jitter, draw).patch.to_rgb());
    } else {
      out.positives.push_back(std::move(s.pixels));
    }
    ++draw;
  }
  for (const auto& nw : poselets::sample_negative_windows(corpus, negatives, rng_seed)) {
    const auto t = imaging::SimilarityTransform::window_to_patch(nw.window);
    const auto& img = corpus[nw.image].image;
    out.negatives.push_back(jitter ? imaging::jitter_sample(img, t, *jitter, draw).patch.to_rgb()
                                   : imaging::warp_patch(img, t).to_rgb());
    ++draw;
  }
  return out;
}

double linear_probe_ap(std::span<const FeatureVector> train_pos, std::span<const FeatureVector> train_neg,
                       std::span<const FeatureVector> test_pos, std::span<const FeatureVector> test_neg,
                       const learning::SvmConfig& svm) {
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  xs.reserve(train_pos.size() + train_neg.size());
  for (const auto& f : train_pos) xs.push_back(f), ys.push_back(1);
  for (const auto& f : train_neg) xs.push_back(f), ys.push_back(-1);
  const auto model = learning::train_svm(xs, ys, svm);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& f : test_pos) scores.push_back(learning::score(model, f)), labels.push_back(1);
  for (const auto& f : test_neg) scores.push_back(learning::score(model, f)), labels.push_back(0);
  return classifier_ap(scores, labels);
}

std::vector<std::pair<std::size_t, std::size_t>> jitter_schedule(const JitterExperimentConfig& cfg) {
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  for (int k = 0; k < cfg.rows; ++k) rows.emplace_back(cfg.top_positives >> k, cfg.top_negatives >> k);
  return rows;
}

std::vector<JitterRow> experiment_jitter(const PatchSets& data, const features::Extractor& hog,
                                         const features::Extractor& pdf, const JitterExperimentConfig& cfg,
                                         const Log& log) {
  const std::size_t need_pos = cfg.test_positives + cfg.top_positives;
  const std::size_t need_neg = cfg.test_negatives + cfg.top_negatives;
  if (data.positives.size() < need_pos || data.negatives.size() < need_neg) {
    throw Error(Errc::InsufficientData, "jitter experiment needs " + std::to_string(need_pos) + " positives and " +
                                            std::to_string(need_neg) + " negatives, got " +
                                            std::to_string(data.positives.size()) + " and " +
                                            std::to_string(data.negatives.size()));
  }
  const auto schedule = jitter_schedule(cfg);
  for (const auto& [p, n] : schedule) {
    if (p < 1 || n < 1) throw Error(Errc::InsufficientData, "schedule row with an empty class");
  }
  std::vector<std::size_t> pos_idx(data.positives.size()), neg_idx(data.negatives.size());
  std::iota(pos_idx.begin(), pos_idx.end(), std::size_t{0});
  std::iota(neg_idx.begin(), neg_idx.end(), std::size_t{0});
  shuffle_with(pos_idx, cfg.seed, 1);
  shuffle_with(neg_idx, cfg.seed, 2);
  pos_idx.resize(need_pos);
  neg_idx.resize(need_neg);

  struct Features {
    std::vector<FeatureVector> test_pos, test_neg, train_pos, train_neg;
  };
  auto featurize = [&](const features::Extractor& ex) {
    Features f;
    for (std::size_t k = 0; k < pos_idx.size(); ++k) {
      (k < cfg.test_positives ? f.test_pos : f.train_pos).push_back(features::extract(data.positives[pos_idx[k]], ex));
    }
    for (std::size_t k = 0; k < neg_idx.size(); ++k) {
      (k < cfg.test_negatives ? f.test_neg : f.train_neg).push_back(features::extract(data.negatives[neg_idx[k]], ex));
    }
    return f;
  };
  say(log, "extracting HOG features");
  const Features fh = featurize(hog);
  say(log, "extracting PDF features");
  const Features fp = featurize(pdf);

  std::vector<JitterRow> rows;
  for (const auto& [p, n] : schedule) {
    JitterRow r{p, n, 0.0, 0.0};
    r.ap_hog = linear_probe_ap(std::span(fh.train_pos).first(p), std::span(fh.train_neg).first(n), fh.test_pos,
                               fh.test_neg, cfg.svm);
    r.ap_pdf = linear_probe_ap(std::span(fp.train_pos).first(p), std::span(fp.train_neg).first(n), fp.test_pos,
                               fp.test_neg, cfg.svm);
    say(log, "row " + std::to_string(p) + "/" + std::to_string(n) + ": hog " + fixed(r.ap_hog) + " pdf " +
                 fixed(r.ap_pdf));
    rows.push_back(r);
  }
  return rows;
}

Table jitter_table(std::span<const JitterRow> rows) {
  Table t;
  t.header = {"n_pos", "n_neg", "ap_hog", "ap_pdf"};
  for (const auto& r : rows) {
    t.add({std::to_string(r.positives), std::to_string(r.negatives), fixed(r.ap_hog, 6), fixed(r.ap_pdf, 6)});
  }
  return t;
}

std::vector<CompareRow> experiment_feature_compare(const poselets::Corpus& corpus,
                                                   std::span<const poselets::SeedWindow> seeds,
                                                   const features::Extractor& hog, const features::Extractor& pdf,
                                                   const CompareExperimentConfig& cfg, const Log& log) {
  if (seeds.size() < cfg.min_seeds) {
    throw Error(Errc::InsufficientData, "feature comparison needs at least " + std::to_string(cfg.min_seeds) +
                                            " poselet seeds, got " + std::to_string(seeds.size()));
  }
  if (cfg.fractions.empty()) throw Error(Errc::InvalidConfig, "no training fractions");
  const double min_fraction = *std::min_element(cfg.fractions.begin(), cfg.fractions.end());
  const std::size_t neg_total = cfg.max_positives * cfg.negative_ratio;
  say(log, "sampling " + std::to_string(neg_total) + " negatives");
  const auto neg_windows = poselets::sample_negative_windows(corpus, neg_total, cfg.seed);
  std::vector<FeatureVector> neg_hog, neg_pdf;
  for (const auto& nw : neg_windows) {
    const Image p =
        imaging::warp_patch(corpus[nw.image].image, imaging::SimilarityTransform::window_to_patch(nw.window)).to_rgb();
    neg_hog.push_back(features::extract(p, hog));
    neg_pdf.push_back(features::extract(p, pdf));
  }

  std::vector<CompareRow> rows;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& seed = seeds[s];
    poselets::SelectConfig sel;
    sel.count = static_cast<int>(cfg.max_positives);
    const auto samples = poselets::select_examples(seed, corpus, sel);
    const std::size_t n_pos = samples.size();
    const std::size_t n_neg = std::min(neg_hog.size(), n_pos * cfg.negative_ratio);
    const std::size_t pos_test = poselets::split_test_count(n_pos, cfg.test_fraction);
    const std::size_t neg_test = poselets::split_test_count(n_neg, cfg.test_fraction);
    const std::size_t pos_train = n_pos - pos_test, neg_train = n_neg - neg_test;
    if (static_cast<std::size_t>(min_fraction * static_cast<double>(pos_train)) < 1 || pos_test < 1 ||
        static_cast<std::size_t>(min_fraction * static_cast<double>(neg_train)) < 1 || neg_test < 1) {
      throw Error(Errc::InsufficientData, "poselet " + seed.name + " has only " + std::to_string(n_pos) +
                                              " positives and " + std::to_string(n_neg) + " negatives");
    }
    say(log, "poselet " + seed.name + ": " + std::to_string(n_pos) + " positives");
    std::vector<std::size_t> pi(n_pos), ni(neg_hog.size());
    std::iota(pi.begin(), pi.end(), std::size_t{0});
    std::iota(ni.begin(), ni.end(), std::size_t{0});
    shuffle_with(pi, cfg.seed, 2 * s + 1);
    shuffle_with(ni, cfg.seed, 2 * s + 2);
    ni.resize(n_neg);
    std::vector<FeatureVector> ph, pp, nh, np;
    for (std::size_t i : pi) {
      ph.push_back(features::extract(samples[i].pixels, hog));
      pp.push_back(features::extract(samples[i].pixels, pdf));
    }
    for (std::size_t i : ni) {
      nh.push_back(neg_hog[i]);
      np.push_back(neg_pdf[i]);
    }
    for (double f : cfg.fractions) {
      const auto tp = static_cast<std::size_t>(f * static_cast<double>(pos_train));
      const auto tn = static_cast<std::size_t>(f * static_cast<double>(neg_train));
      CompareRow r{seed.name, f, tp, tn, 0.0, 0.0};
      r.ap_hog = linear_probe_ap(std::span(ph).subspan(pos_test, tp), std::span(nh).subspan(neg_test, tn),
                                 std::span(ph).first(pos_test), std::span(nh).first(neg_test), cfg.svm);
      r.ap_pdf = linear_probe_ap(std::span(pp).subspan(pos_test, tp), std::span(np).subspan(neg_test, tn),
                                 std::span(pp).first(pos_test), std::span(np).first(neg_test), cfg.svm);
      rows.push_back(r);
    }
  }
  return rows;
}

Table compare_table(std::span<const CompareRow> rows) {
  Table t;
  t.header = {"poselet", "fraction", "n_pos", "n_neg", "ap_hog", "ap_pdf"};
  for (const auto& r : rows) {
    t.add({r.poselet, format_number(r.fraction), std::to_string(r.positives), std::to_string(r.negatives),
           fixed(r.ap_hog, 6), fixed(r.ap_pdf, 6)});
  }
  return t;
}

}  // namespace dposelets::harness
