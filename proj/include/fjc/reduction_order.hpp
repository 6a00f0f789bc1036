#pragma once

// The one combining order used for every floating-point reduction in the
// system (Reduce, MatMul contractions). Kernels emit IR that follows it and the
// reference interpreter calls these helpers directly.
//
//  * The reduced extent E is cut into L = ceil(E / kLeafSize) leaves of
//    consecutive elements; the last leaf may be short.
//  * A leaf is folded serially left to right, seeded with its first element:
//      acc = x[s]; acc = acc (op) x[s+1]; ...
//  * Leaf partials p[0..L) are combined by a fixed pairwise tree, one level at
//    a time: p[i] = p[2i] (op) p[2i+1] for i < n/2; when n is odd the last
//    partial moves up unchanged to p[n/2]; n = ceil(n/2); repeat until n == 1.
//  * An empty reduction yields the identity (0 for Sum, -inf for Max).
//
// Conv2D is not a tree reduction: its accumulator starts at +0.0f and adds
// products serially in (kh, kw, ci) order.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "fjc/scalar_ops.hpp"

namespace fjc {

inline constexpr std::int64_t kLeafSize = 256;

enum class ReduceOp { Sum, Max };

inline float reduce_combine(ReduceOp op, float a, float b) {
  return op == ReduceOp::Sum ? scalar::add(a, b) : scalar::max(a, b);
}

inline float reduce_identity(ReduceOp op) {
  return op == ReduceOp::Sum ? 0.0f : -std::numeric_limits<float>::infinity();
}

inline std::int64_t leaf_count(std::int64_t extent) {
  return (extent + kLeafSize - 1) / kLeafSize;
}

/// Combines leaf partials in place with the fixed pairwise tree.
inline float combine_tree(ReduceOp op, std::vector<float>& partials) {
  std::size_t n = partials.size();
  if (n == 0) return reduce_identity(op);
  while (n > 1) {
    const std::size_t half = n / 2;
    for (std::size_t i = 0; i < half; ++i) {
      partials[i] = reduce_combine(op, partials[2 * i], partials[2 * i + 1]);
    }
    if (n % 2 == 1) partials[half] = partials[n - 1];
    n = (n + 1) / 2;
  }
  return partials[0];
}

/// Reduces `extent` values produced by `element(e)` in canonical order.
template <typename ElementFn>
float tree_reduce(ReduceOp op, std::int64_t extent, ElementFn&& element) {
  const std::int64_t leaves = leaf_count(extent);
  std::vector<float> partials(static_cast<std::size_t>(leaves));
  for (std::int64_t leaf = 0; leaf < leaves; ++leaf) {
    const std::int64_t start = leaf * kLeafSize;
    const std::int64_t end = std::min(start + kLeafSize, extent);
    float acc = element(start);
    for (std::int64_t e = start + 1; e < end; ++e) acc = reduce_combine(op, acc, element(e));
    partials[static_cast<std::size_t>(leaf)] = acc;
  }
  return combine_tree(op, partials);
}

}  // namespace fjc
