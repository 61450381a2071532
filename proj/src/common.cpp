#include "tricrlad/common.hpp"

#include <cmath>
#include <numbers>

namespace tricrlad {

// Box-Muller on uniform01 (one draw per call, the cosine branch only) keeps
// sequences identical across standard libraries.
double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace tricrlad
