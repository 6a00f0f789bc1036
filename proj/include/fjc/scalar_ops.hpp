#pragma once

// Scalar semantics shared by the HLO reference interpreter, the FJ executor
// and constant folding. Every consumer must go through these functions so that
// results agree bit for bit.

#include <cmath>
#include <cstdint>
#include <limits>

namespace fjc::scalar {

inline float add(float a, float b) { return a + b; }
inline float sub(float a, float b) { return a - b; }
inline float mul(float a, float b) { return a * b; }
inline float div(float a, float b) { return a / b; }
inline float max(float a, float b) { return a < b ? b : a; }
inline float neg(float a) { return -a; }
inline float exp(float a) { return std::exp(a); }
inline float tanh(float a) { return std::tanh(a); }
inline float sigmoid(float a) { return 1.0f / (1.0f + std::exp(-a)); }
inline float relu(float a) { return max(a, 0.0f); }
inline float fma(float a, float b, float c) { return std::fma(a, b, c); }

// Index arithmetic wraps like two's complement; division by zero yields 0 so
// that folding and execution never trap on dead code.
inline std::int64_t iadd(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) +
                                   static_cast<std::uint64_t>(b));
}
inline std::int64_t isub(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) -
                                   static_cast<std::uint64_t>(b));
}
inline std::int64_t imul(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) *
                                   static_cast<std::uint64_t>(b));
}
inline std::int64_t idiv(std::int64_t a, std::int64_t b) {
  if (b == 0 || (a == std::numeric_limits<std::int64_t>::min() && b == -1)) return 0;
  return a / b;
}
inline std::int64_t irem(std::int64_t a, std::int64_t b) {
  if (b == 0 || b == -1) return 0;
  return a % b;
}
inline std::int64_t imin(std::int64_t a, std::int64_t b) { return a < b ? a : b; }
inline std::int64_t imax(std::int64_t a, std::int64_t b) { return a < b ? b : a; }
inline std::int64_t ilt(std::int64_t a, std::int64_t b) { return a < b ? 1 : 0; }
inline std::int64_t ieq(std::int64_t a, std::int64_t b) { return a == b ? 1 : 0; }

}  // namespace fjc::scalar
