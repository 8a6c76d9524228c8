#pragma once

#include <algorithm>
#include <cmath>
#include <span>

namespace cdp::detail {

// f32 inputs, f64 accumulation. Every similarity in the library goes through
// these three helpers so that graph construction and direct pair queries
// produce bit-identical values. The four accumulation lanes fix the summation
// order.
inline double dot(std::span<const float> u, std::span<const float> v) noexcept {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t n = u.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    for (std::size_t l = 0; l < 4; ++l)
      lane[l] += static_cast<double>(u[i + l]) * static_cast<double>(v[i + l]);
  for (; i < n; ++i) lane[i % 4] += static_cast<double>(u[i]) * static_cast<double>(v[i]);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

inline double norm(std::span<const float> u) noexcept { return std::sqrt(dot(u, u)); }

inline double cosine_from(double dot_uv, double norm_u, double norm_v) noexcept {
  return std::clamp(dot_uv / (norm_u * norm_v), -1.0, 1.0);
}

}  // namespace cdp::detail
