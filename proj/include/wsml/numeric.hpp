#pragma once

#include "types.hpp"

#include <algorithm>
#include <cmath>

namespace wsml {

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  // Branches keep exp() from overflowing for large |z|.
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  Scalar const e = std::exp(z);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar clamp_probability(Scalar p) {
  return std::clamp(p, Scalar(kProbClamp), Scalar(1) - Scalar(kProbClamp));
}

/// floor(fraction * n), tolerant of representation error in decimal fractions
/// (0.29 * 100 must give 29, not 28).
inline Index floor_count(Real fraction, Index n) {
  return static_cast<Index>(std::floor(fraction * static_cast<Real>(n) + 1e-9));
}

} // namespace wsml
