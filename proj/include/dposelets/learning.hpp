#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dposelets/features.hpp"

namespace dposelets::learning {

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::string extractor_tag;
  double lambda = 0.0;
};

/// probability(s) = 1 / (1 + exp(a s + b)); a < 0 for a correctly oriented fit.
struct Calibration {
  double a = -1.0;
  double b = 0.0;

  double probability(double score) const;
};

struct SvmConfig {
  double lambda = 1e-4;
  int epochs = 20;
  std::uint64_t seed = 1;
};

/// lambda / 2 |w|^2 + mean_i max(0, 1 - y_i (w.x_i + b)).
double svm_objective(const LinearModel& model, std::span<const features::FeatureVector> xs,
                     std::span<const int> ys, double lambda);

/// Pegasos stochastic subgradient descent with step 1 / (lambda t) on w and
/// projection onto |w| <= 1 / sqrt(lambda). The unregularised bias takes steps
/// of 1 / t and is re-fitted exactly (1-D hinge minimisation) at the end of
/// every epoch. Labels are -1 / +1. Deterministic per seed.
LinearModel train_svm(std::span<const features::FeatureVector> xs, std::span<const int> ys,
                      const SvmConfig& cfg);

/// Also records the training objective after every epoch.
LinearModel train_svm(std::span<const features::FeatureVector> xs, std::span<const int> ys,
                      const SvmConfig& cfg, std::vector<double>* epoch_objective);

double score(const LinearModel& model, const features::FeatureVector& x);

/// Platt sigmoid fit on labels in {0, 1} with smoothed targets
/// t+ = (N+ + 1) / (N+ + 2), t- = 1 / (N- + 2), by damped Newton steps.
Calibration calibrate(std::span<const double> scores, std::span<const int> labels);

}  // namespace dposelets::learning
