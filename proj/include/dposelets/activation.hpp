#pragma once

#include <string>

#include "dposelets/common.hpp"

namespace dposelets::detector {

/// One above-threshold response of one poselet at one window and scale.
struct Activation {
  int poselet_id = 0;
  std::string image_id;
  Box window;              // square, original-image pixels
  double raw_score = 0.0;
  double probability = 0.0;
  Box vote;                // predicted person box, original-image pixels
  int level = 0;
};

}  // namespace dposelets::detector
