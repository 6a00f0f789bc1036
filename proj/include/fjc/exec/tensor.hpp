#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fjc/graph/hlo.hpp"

namespace fjc::exec {

/// Concrete tensor value: dtype, shape and row-major storage. Only the vector
/// matching `dtype` is populated.
struct TensorBuffer {
  graph::DType dtype = graph::DType::F32;
  std::vector<std::int64_t> shape;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;

  static TensorBuffer zeros(const graph::TensorType& type);
  static TensorBuffer from_f32(std::vector<std::int64_t> shape, std::vector<float> data);

  graph::TensorType type() const { return graph::TensorType{dtype, shape}; }
  std::int64_t element_count() const;
  /// True when storage length matches the shape.
  bool consistent() const;

  friend bool operator==(const TensorBuffer& a, const TensorBuffer& b);
};

/// Seeded uniform values in [-1, 1) with a fixed bit-level recipe, so the same
/// seed gives the same tensor everywhere.
TensorBuffer random_uniform(const graph::TensorType& type, std::uint64_t seed);

/// Inputs for every parameter of `graph`, derived from one seed.
std::vector<TensorBuffer> random_inputs(const graph::HloGraph& graph, std::uint64_t seed);

// Binary container: u64 dtype (0 = f32, 1 = i32), u64 rank, rank x u64
// extents, then the row-major payload; everything little-endian.
void write_tensor(std::ostream& os, const TensorBuffer& t);
TensorBuffer read_tensor(std::istream& is);
void write_tensor_file(const std::string& path, const TensorBuffer& t);
TensorBuffer read_tensor_file(const std::string& path);

// JSON-lines debug form: one {"dtype","shape","data"} object per line.
std::string to_json_line(const TensorBuffer& t);
TensorBuffer from_json_line(const std::string& line);

/// FNV-1a over dtype, shape and payload bytes.
std::uint64_t digest(std::span<const TensorBuffer> tensors);

}  // namespace fjc::exec
