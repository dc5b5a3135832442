#include "support/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace dagl::testing {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (Real& v : t.data()) v = static_cast<Real>(d(rng));
  return t;
}

Tensor synthetic_image(std::uint64_t seed, std::size_t h, std::size_t w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img({1, h, w});
  const double gx = u(rng) - 0.5, gy = u(rng) - 0.5, base = 0.3 + 0.4 * u(rng);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      img.at(0, y, x) = static_cast<Real>(base + 0.4 * (gx * x / w + gy * y / h));

  const int shapes = 4 + static_cast<int>(u(rng) * 4);
  for (int s = 0; s < shapes; ++s) {
    const double cy = u(rng) * h, cx = u(rng) * w;
    const double ry = 3 + u(rng) * h / 4, rx = 3 + u(rng) * w / 4;
    const double level = u(rng), shade = (u(rng) - 0.5) * 0.3;
    const bool disc = u(rng) < 0.5;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside) img.at(0, y, x) = static_cast<Real>(level + shade * dy);
      }
  }

  const std::size_t sy = static_cast<std::size_t>(u(rng) * h / 2), sx = static_cast<std::size_t>(u(rng) * w / 2);
  const double period = 3 + u(rng) * 4, angle = u(rng) * 3.14159;
  for (std::size_t y = sy; y < std::min(h, sy + h / 3); ++y)
    for (std::size_t x = sx; x < std::min(w, sx + w / 3); ++x) {
      const double t = (std::cos(angle) * x + std::sin(angle) * y) * 2 * 3.14159 / period;
      img.at(0, y, x) = static_cast<Real>(0.5 + 0.35 * std::sin(t));
    }

  for (Real& v : img.data()) v = std::clamp(v, Real(0.05), Real(0.95));
  return img;
}

Tensor composite_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img({1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (x < w / 2) {
        img.at(0, y, x) = static_cast<Real>(0.4 + 0.2 * static_cast<double>(x) / static_cast<double>(w / 2));
      } else {
        img.at(0, y, x) = static_cast<Real>(u(rng));
      }
    }
  return img;
}

}  // namespace dagl::testing
