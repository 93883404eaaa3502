#include "dposelets/learning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dposelets::learning {

using features::FeatureVector;

namespace {

double dot(const std::vector<double>& w, const std::vector<float>& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * static_cast<double>(x[i]);
  return s;
}

void check_training_set(std::span<const FeatureVector> xs, std::span<const int> ys) {
  if (xs.size() != ys.size()) throw Error(Errc::DimMismatch, "features and labels differ in length");
  bool pos = false, neg = false;
  for (int y : ys) {
    if (y == 1) pos = true;
    else if (y == -1) neg = true;
    else throw Error(Errc::LabelOutOfRange, "SVM labels must be -1 or +1");
  }
  if (!pos || !neg) throw Error(Errc::SingleClassData, "need both positive and negative samples");
  const std::size_t dim = xs.front().dim();
  const std::string& tag = xs.front().extractor_tag;
  for (const auto& x : xs) {
    if (x.extractor_tag != tag) throw Error(Errc::MixedExtractorTags, tag + " vs " + x.extractor_tag);
    if (x.dim() != dim) throw Error(Errc::DimMismatch, "feature dimensions differ");
    for (float v : x.values) {
      if (!std::isfinite(v)) throw Error(Errc::NonFiniteFeature, "non-finite feature value");
    }
  }
}

/// Midpoint of the minimising interval of sum_i max(0, 1 - y_i (m_i + b)).
double optimal_bias(std::span<const double> margins, std::span<const int> ys) {
  std::vector<double> kinks(margins.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < margins.size(); ++i) {
    kinks[i] = ys[i] - margins[i];
    if (ys[i] > 0) ++positives;
  }
  std::sort(kinks.begin(), kinks.end());
  // The slope starts at -positives and rises by one at every kink.
  return 0.5 * (kinks[positives - 1] + kinks[positives]);
}

}  // namespace

double Calibration::probability(double s) const {
  const double f = a * s + b;
  if (f >= 0) {
    const double e = std::exp(-f);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(f));
}

double svm_objective(const LinearModel& model, std::span<const FeatureVector> xs, std::span<const int> ys,
                     double lambda) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    hinge += std::max(0.0, 1.0 - ys[i] * (dot(model.weights, xs[i].values) + model.bias));
  }
  double sq = 0.0;
  for (double w : model.weights) sq += w * w;
  return 0.5 * lambda * sq + hinge / static_cast<double>(xs.size());
}

LinearModel train_svm(std::span<const FeatureVector> xs, std::span<const int> ys, const SvmConfig& cfg) {
  return train_svm(xs, ys, cfg, nullptr);
}

LinearModel train_svm(std::span<const FeatureVector> xs, std::span<const int> ys, const SvmConfig& cfg,
                      std::vector<double>* epoch_objective) {
  if (xs.empty()) throw Error(Errc::SingleClassData, "empty training set");
  check_training_set(xs, ys);
  if (!(cfg.lambda > 0) || cfg.epochs < 1) throw Error(Errc::InvalidConfig, "lambda > 0 and epochs >= 1 required");

  const std::size_t n = xs.size(), d = xs.front().dim();
  const double lambda = cfg.lambda;
  const double radius = 1.0 / std::sqrt(lambda);
  std::vector<double> sq_norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (float v : xs[i].values) s += static_cast<double>(v) * v;
    sq_norms[i] = s;
  }

  // w = scale * v, with |w|^2 tracked incrementally.
  std::vector<double> v(d, 0.0);
  double scale = 1.0, w_sq = 0.0, b = 0.0;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> margins(n);
  std::uint64_t t = 0;
  if (epoch_objective) epoch_objective->clear();

  LinearModel model;
  model.extractor_tag = xs.front().extractor_tag;
  model.lambda = lambda;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t k = pick(rng);
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double y = ys[k];
      const double wx = scale * dot(v, xs[k].values);
      const bool violated = y * (wx + b) < 1.0;

      const double shrink = 1.0 - 1.0 / static_cast<double>(t);
      if (shrink == 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        scale = 1.0;
        w_sq = 0.0;
      } else {
        scale *= shrink;
        w_sq *= shrink * shrink;
      }
      if (violated) {
        const double c = eta * y;
        const double wx_now = wx * shrink;
        const double coef = c / scale;
        for (std::size_t j = 0; j < d; ++j) v[j] += coef * static_cast<double>(xs[k].values[j]);
        w_sq += 2.0 * c * wx_now + c * c * sq_norms[k];
        b += y / static_cast<double>(t);
      }
      if (w_sq > radius * radius) {
        const double f = radius / std::sqrt(w_sq);
        scale *= f;
        w_sq = radius * radius;
      }
      if (scale < 1e-9) {
        for (double& x : v) x *= scale;
        scale = 1.0;
        w_sq = 0.0;
        for (double x : v) w_sq += x * x;
      }
    }
    // Fold the scale, resync |w|^2 and re-fit the bias exactly.
    for (double& x : v) x *= scale;
    scale = 1.0;
    w_sq = 0.0;
    for (double x : v) w_sq += x * x;
    for (std::size_t i = 0; i < n; ++i) margins[i] = dot(v, xs[i].values);
    b = optimal_bias(margins, ys);
    if (epoch_objective) {
      model.weights = v;
      model.bias = b;
      epoch_objective->push_back(svm_objective(model, xs, ys, lambda));
    }
  }
  model.weights = std::move(v);
  model.bias = b;
  return model;
}

double score(const LinearModel& model, const FeatureVector& x) {
  if (x.dim() != model.weights.size()) throw Error(Errc::DimMismatch, "feature dimension does not match the model");
  if (!model.extractor_tag.empty() && x.extractor_tag != model.extractor_tag) {
    throw Error(Errc::MixedExtractorTags, model.extractor_tag + " vs " + x.extractor_tag);
  }
  return dot(model.weights, x.values) + model.bias;
}

Calibration calibrate(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(Errc::DimMismatch, "scores and labels differ in length");
  std::size_t npos = 0, nneg = 0;
  for (int l : labels) {
    if (l == 1) ++npos;
    else if (l == 0) ++nneg;
    else throw Error(Errc::LabelOutOfRange, "calibration labels must be 0 or 1");
  }
  if (npos == 0 || nneg == 0) throw Error(Errc::SingleClassData, "calibration needs both labels");
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(Errc::NonFiniteFeature, "non-finite score");
  }
  const double hi = (npos + 1.0) / (npos + 2.0);
  const double lo = 1.0 / (nneg + 2.0);
  const double n = static_cast<double>(scores.size());

  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double t = labels[i] ? hi : lo;
      const double z = a * scores[i] + b;
      f += z >= 0 ? t * z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)) - (1.0 - t) * z;
    }
    return f / n;
  };

  double a = 0.0, b = std::log((nneg + 1.0) / (npos + 1.0));
  double fval = objective(a, b);
  for (int iter = 0; iter < 100; ++iter) {
    double ga = 0, gb = 0, h11 = 0, h22 = 0, h21 = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double t = labels[i] ? hi : lo;
      const double s = scores[i];
      const double z = a * s + b;
      double p, q;  // p = 1 / (1 + e^z), q = 1 - p
      if (z >= 0) {
        const double e = std::exp(-z);
        p = e / (1.0 + e);
        q = 1.0 / (1.0 + e);
      } else {
        const double e = std::exp(z);
        p = 1.0 / (1.0 + e);
        q = e / (1.0 + e);
      }
      const double d2 = p * q;
      h11 += s * s * d2;
      h22 += d2;
      h21 += s * d2;
      const double d1 = t - p;
      ga += s * d1;
      gb += d1;
    }
    ga /= n;
    gb /= n;
    h11 = h11 / n + 1e-12;
    h22 = h22 / n + 1e-12;
    h21 /= n;
    if (std::max(std::abs(ga), std::abs(gb)) < 1e-9) return {a, b};

    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * ga - h21 * gb) / det;
    const double db = -(-h21 * ga + h11 * gb) / det;
    const double gd = ga * da + gb * db;
    double step = 1.0;
    bool moved = false;
    while (step >= 1e-10) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      // No further decrease is representable; accept if stationary to working precision.
      if (std::max(std::abs(ga), std::abs(gb)) < 1e-7) return {a, b};
      throw Error(Errc::NoConvergence, "line search failed in sigmoid fit");
    }
  }
  throw Error(Errc::NoConvergence, "sigmoid fit did not converge in 100 Newton steps");
}

}  // namespace dposelets::learning
