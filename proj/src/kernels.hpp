#pragma once

#include <cmath>
#include <cstddef>

namespace wicl::kernels {

// Eight interleaved partial sums combined in a fixed tree. The order depends
// only on n, so results are bit-reproducible for a given build.
inline float dot(const float* a, const float* b, std::size_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail;
}

// y[r, o] = b[o] + W[o, :] . x[r, :]   for W stored [out, in].
inline void linear(const float* x, std::size_t rows, std::size_t in, const float* w, const float* b,
                   std::size_t out, float* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * in;
    float* yr = y + r * out;
    for (std::size_t o = 0; o < out; ++o) yr[o] = b[o] + dot(w + o * in, xr, in);
  }
}

inline void layer_norm(const float* x, std::size_t rows, std::size_t d, const float* gamma, const float* beta,
                       float eps, float* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = xr[i] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    float* yr = y + r * d;
    for (std::size_t i = 0; i < d; ++i)
      yr[i] = static_cast<float>((xr[i] - mean) * inv) * gamma[i] + beta[i];
  }
}

inline float gelu_tanh(float x) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

}  // namespace wicl::kernels
