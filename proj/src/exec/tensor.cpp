#include "fjc/exec/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "fjc/splitmix.hpp"

namespace fjc::exec {

using graph::DType;

TensorBuffer TensorBuffer::zeros(const graph::TensorType& type) {
  TensorBuffer t;
  t.dtype = type.dtype;
  t.shape = type.shape;
  const auto n = static_cast<std::size_t>(type.element_count());
  if (type.dtype == DType::F32) {
    t.f32.assign(n, 0.0f);
  } else {
    t.i32.assign(n, 0);
  }
  return t;
}

TensorBuffer TensorBuffer::from_f32(std::vector<std::int64_t> shape, std::vector<float> data) {
  TensorBuffer t;
  t.shape = std::move(shape);
  t.f32 = std::move(data);
  return t;
}

std::int64_t TensorBuffer::element_count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

bool TensorBuffer::consistent() const {
  const auto n = static_cast<std::size_t>(element_count());
  return dtype == DType::F32 ? (f32.size() == n && i32.empty()) : (i32.size() == n && f32.empty());
}

bool operator==(const TensorBuffer& a, const TensorBuffer& b) {
  if (a.dtype != b.dtype || a.shape != b.shape || a.f32.size() != b.f32.size() || a.i32 != b.i32) {
    return false;
  }
  return a.f32.empty() ||
         std::memcmp(a.f32.data(), b.f32.data(), a.f32.size() * sizeof(float)) == 0;
}

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
    throw Error(ErrorKind::IoError, "truncated tensor header");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

TensorBuffer random_uniform(const graph::TensorType& type, std::uint64_t seed) {
  TensorBuffer t = TensorBuffer::zeros(type);
  std::uint64_t state = seed;
  for (auto& v : t.f32) {
    // 24 random bits -> k / 2^23 - 1, exact in f32.
    const auto bits = static_cast<std::int64_t>(splitmix64(state) >> 40);
    v = static_cast<float>(bits) * 0x1p-23f - 1.0f;
  }
  for (auto& v : t.i32) v = static_cast<std::int32_t>(splitmix64(state) % 17) - 8;
  return t;
}

std::vector<TensorBuffer> random_inputs(const graph::HloGraph& graph, std::uint64_t seed) {
  std::vector<TensorBuffer> inputs;
  std::uint64_t state = seed;
  for (int p : graph.parameters()) {
    inputs.push_back(random_uniform(graph.node(p).type, splitmix64(state)));
  }
  return inputs;
}

void write_tensor(std::ostream& os, const TensorBuffer& t) {
  put_u64(os, t.dtype == DType::F32 ? 0 : 1);
  put_u64(os, t.shape.size());
  for (auto d : t.shape) put_u64(os, static_cast<std::uint64_t>(d));
  static_assert(std::endian::native == std::endian::little, "payload is written natively");
  if (t.dtype == DType::F32) {
    os.write(reinterpret_cast<const char*>(t.f32.data()),
             static_cast<std::streamsize>(t.f32.size() * sizeof(float)));
  } else {
    os.write(reinterpret_cast<const char*>(t.i32.data()),
             static_cast<std::streamsize>(t.i32.size() * sizeof(std::int32_t)));
  }
  if (!os) throw Error(ErrorKind::IoError, "failed writing tensor");
}

TensorBuffer read_tensor(std::istream& is) {
  TensorBuffer t;
  const auto dtype = get_u64(is);
  if (dtype > 1) throw Error(ErrorKind::IoError, "unknown dtype code " + std::to_string(dtype));
  t.dtype = dtype == 0 ? DType::F32 : DType::I32;
  const auto rank = get_u64(is);
  if (rank > static_cast<std::uint64_t>(graph::kMaxRank)) {
    throw Error(ErrorKind::UnsupportedRank, "tensor rank " + std::to_string(rank));
  }
  for (std::uint64_t i = 0; i < rank; ++i) t.shape.push_back(static_cast<std::int64_t>(get_u64(is)));
  const auto n = static_cast<std::size_t>(t.element_count());
  if (t.dtype == DType::F32) {
    t.f32.resize(n);
    is.read(reinterpret_cast<char*>(t.f32.data()), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    t.i32.resize(n);
    is.read(reinterpret_cast<char*>(t.i32.data()),
            static_cast<std::streamsize>(n * sizeof(std::int32_t)));
  }
  if (!is) throw Error(ErrorKind::IoError, "truncated tensor payload");
  return t;
}

void write_tensor_file(const std::string& path, const TensorBuffer& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, "cannot open " + path);
  write_tensor(os, t);
}

TensorBuffer read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot open " + path);
  return read_tensor(is);
}

std::string to_json_line(const TensorBuffer& t) {
  nlohmann::json j;
  j["dtype"] = std::string(graph::to_string(t.dtype));
  j["shape"] = t.shape;
  if (t.dtype == DType::F32) {
    j["data"] = t.f32;
  } else {
    j["data"] = t.i32;
  }
  return j.dump();
}

TensorBuffer from_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  TensorBuffer t;
  t.dtype = j.at("dtype").get<std::string>() == "i32" ? DType::I32 : DType::F32;
  t.shape = j.at("shape").get<std::vector<std::int64_t>>();
  if (t.dtype == DType::F32) {
    t.f32 = j.at("data").get<std::vector<float>>();
  } else {
    t.i32 = j.at("data").get<std::vector<std::int32_t>>();
  }
  if (!t.consistent()) throw Error(ErrorKind::IoError, "payload length does not match shape");
  return t;
}

std::uint64_t digest(std::span<const TensorBuffer> tensors) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& t : tensors) {
    const auto code = static_cast<std::uint8_t>(t.dtype);
    mix(&code, 1);
    for (auto d : t.shape) mix(&d, sizeof d);
    mix(t.f32.data(), t.f32.size() * sizeof(float));
    mix(t.i32.data(), t.i32.size() * sizeof(std::int32_t));
  }
  return h;
}

}  // namespace fjc::exec
