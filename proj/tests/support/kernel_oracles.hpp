#pragma once

// Brute-force kernel oracles. Matmul and reduce combine in the kernels' fixed
// order: serial left folds over leaves of 256 elements, then a pairwise tree
// over the leaf partials where an odd tail passes through. Conv2d folds
// serially from zero in (dy, dx, c) order.

#include <algorithm>
#include <cstdint>
#include <vector>

namespace fjc::testing {

// Oracle pairwise combine: each level builds a fresh vector.
inline float pairwise(std::vector<float> level, bool max) {
  auto op = [&](float a, float b) { return max ? (a < b ? b : a) : a + b; };
  while (level.size() > 1) {
    std::vector<float> next;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(op(level[i], level[i + 1]));
    if (level.size() % 2) next.push_back(level.back());
    level = std::move(next);
  }
  return level.front();
}

inline float leaf_tree(const std::vector<float>& xs, bool max) {
  std::vector<float> partials;
  for (std::size_t s = 0; s < xs.size(); s += 256) {
    float acc = xs[s];
    for (std::size_t e = s + 1; e < std::min(xs.size(), s + 256); ++e) {
      acc = max ? (acc < xs[e] ? xs[e] : acc) : acc + xs[e];
    }
    partials.push_back(acc);
  }
  return pairwise(partials, max);
}

inline std::vector<float> matmul_oracle(const std::vector<float>& a, const std::vector<float>& b, std::int64_t m,
                                 std::int64_t k, std::int64_t n) {
  std::vector<float> c(static_cast<std::size_t>(m * n));
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      std::vector<float> products;
      for (std::int64_t l = 0; l < k; ++l) products.push_back(a[i * k + l] * b[l * n + j]);
      c[i * n + j] = leaf_tree(products, false);
    }
  }
  return c;
}

inline std::vector<float> conv_oracle(const std::vector<float>& x, const std::vector<float>& w, std::int64_t n,
                               std::int64_t h, std::int64_t wd, std::int64_t ci, std::int64_t kh, std::int64_t kw,
                               std::int64_t co, std::int64_t s) {
  const std::int64_t oh = (h - kh) / s + 1, ow = (wd - kw) / s + 1;
  std::vector<float> y(static_cast<std::size_t>(n * oh * ow * co));
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t r = 0; r < oh; ++r)
      for (std::int64_t q = 0; q < ow; ++q)
        for (std::int64_t o = 0; o < co; ++o) {
          float acc = 0.0f;
          for (std::int64_t dy = 0; dy < kh; ++dy)
            for (std::int64_t dx = 0; dx < kw; ++dx)
              for (std::int64_t c = 0; c < ci; ++c) {
                const float xv = x[((b * h + r * s + dy) * wd + q * s + dx) * ci + c];
                const float wv = w[((dy * kw + dx) * ci + c) * co + o];
                acc = acc + xv * wv;
              }
          y[((b * oh + r) * ow + q) * co + o] = acc;
        }
  return y;
}

inline std::vector<float> reduce_oracle(const std::vector<float>& x, std::int64_t outer, std::int64_t extent,
                                 std::int64_t inner, bool max) {
  std::vector<float> y(static_cast<std::size_t>(outer * inner));
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      std::vector<float> xs;
      for (std::int64_t e = 0; e < extent; ++e) xs.push_back(x[(o * extent + e) * inner + i]);
      y[o * inner + i] = leaf_tree(xs, max);
    }
  return y;
}

}  // namespace fjc::testing
