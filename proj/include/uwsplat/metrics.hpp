#pragma once

#include <cmath>

#include "uwsplat/image.hpp"
#include "uwsplat/losses.hpp"

namespace uwsplat {

// Peak signal-to-noise ratio in dB against a unit peak, capped at 100 dB so
// identical images compare equal instead of diverging.
inline double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a.data[i] - b.data[i];
    mse += r * r;
  }
  mse /= static_cast<double>(a.size());
  if (mse <= 0.0) return 100.0;
  const double value = 10.0 * std::log10(1.0 / mse);
  return value > 100.0 ? 100.0 : value;
}

}  // namespace uwsplat
