#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace diffex {

// Sinusoidal step embedding; conditions the denoiser on t. Deterministic,
// norm is sqrt(dim/2) for every t.
struct TimeEmbedding {
  std::size_t dim = 16;
  double base = 10000.0;

  void write(std::size_t t, double* out) const {
    if (dim == 0 || dim % 2 != 0)
      throw std::invalid_argument("TimeEmbedding: dim must be positive and even");
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(base, -static_cast<double>(i) / static_cast<double>(half));
      const double angle = static_cast<double>(t) * freq;
      out[2 * i] = std::sin(angle);
      out[2 * i + 1] = std::cos(angle);
    }
  }

  std::vector<double> embed(std::size_t t) const {
    std::vector<double> e(dim);
    write(t, e.data());
    return e;
  }
};

}  // namespace diffex
