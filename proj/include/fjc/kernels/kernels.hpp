#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fjc/ir/fj.hpp"
#include "fjc/reduction_order.hpp"

namespace fjc::kernels {

enum class Variant { InlineIR, OpaquePrecompiled };

enum class KernelKind { MatMul, Conv2D, Reduce };

/// Identifies one shape-specialised kernel.
///   MatMul: dims = {m, k, n}
///   Conv2D: dims = {n, h, w, ci, kh, kw, co, stride}
///   Reduce: dims = {outer, extent, inner}; reduces the middle axis of an
///           outer x extent x inner row-major buffer.
struct KernelSpec {
  KernelKind kind = KernelKind::MatMul;
  std::vector<std::int64_t> dims;
  ReduceOp reduce_op = ReduceOp::Sum;
  Variant variant = Variant::InlineIR;

  static KernelSpec matmul(std::int64_t m, std::int64_t k, std::int64_t n);
  static KernelSpec conv2d(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t ci, std::int64_t kh,
                           std::int64_t kw, std::int64_t co, std::int64_t stride);
  static KernelSpec reduce(std::int64_t outer, std::int64_t extent, std::int64_t inner, ReduceOp op);

  KernelSpec with_variant(Variant v) const;

  /// Symbol such as `kernel.matmul.13x7x5` (`.opaque` appended for the
  /// precompiled variant).
  std::string name() const;
  /// Parameter types in call order; the last parameter is the output.
  std::vector<ir::ValueType> signature() const;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/// Inverse of KernelSpec::name. Throws InvalidAttribute.
KernelSpec parse_kernel_name(const std::string& name);

/// C[i,j] = sum_l A[i,l] * B[l,j]: pfor over i, pfor over j, contraction in
/// the canonical leaf/tree order. Parameters (%a, %b, out %c).
ir::FjFunction build_matmul(std::int64_t m, std::int64_t k, std::int64_t n);

/// Valid-padding NHWC x HWIO convolution. pfor nest over (n, oh, ow, co);
/// each output accumulates from +0.0 in (kh, kw, ci) order.
/// Parameters (%x, %w, out %y).
ir::FjFunction build_conv2d(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t ci, std::int64_t kh,
                            std::int64_t kw, std::int64_t co, std::int64_t stride);

/// One-dimensional reduction: pfor over leaves writing partials, then the
/// serial pairwise tree. Parameters (%x, out %y) with %y: buf<1>.
ir::FjFunction build_reduce(std::int64_t extent, ReduceOp op);
ir::FjFunction build_reduce(std::int64_t outer, std::int64_t extent, std::int64_t inner, ReduceOp op);

/// Builder dispatch on spec.kind. Always produces the InlineIR body, marked
/// inline-candidate; the name follows spec.name() with the InlineIR variant.
ir::FjFunction build_kernel(const KernelSpec& spec);

using Pipeline = std::function<ir::FjModule(const ir::FjModule&)>;

/// Runs the InlineIR body through `pipeline` in a module of its own, then
/// marks the result opaque and not inlinable under the opaque name. Helper
/// functions the pipeline creates are returned alongside the kernel.
std::vector<ir::FjFunction> precompile_opaque(const KernelSpec& spec, const Pipeline& pipeline);

/// Shape-specialised kernels looked up by spec. A library loaded from a file
/// only knows what the file contains; with `build_missing` set, absent InlineIR
/// kernels are built on first request.
class KernelLibrary {
 public:
  explicit KernelLibrary(bool build_missing = true);
  /// Takes every function of `module` whose name parses as a kernel name.
  static std::shared_ptr<KernelLibrary> from_module(const ir::FjModule& module, bool build_missing);
  /// Reads an FJ text file. Throws IoError, ParseError or VerifyError.
  static std::shared_ptr<KernelLibrary> load(const std::string& path, bool build_missing = false);

  /// The InlineIR kernel for `spec`. Throws KernelMissing.
  ir::FjFunction inline_kernel(const KernelSpec& spec) const;
  bool contains(const KernelSpec& spec) const;
  bool build_missing() const { return build_missing_; }
  std::vector<std::string> names() const;

  /// Opaque variant plus helpers; precompiled once per (spec, pipeline key).
  std::vector<ir::FjFunction> opaque_kernel(const KernelSpec& spec, const std::string& pipeline_key,
                                            const Pipeline& pipeline) const;

 private:
  bool build_missing_;
  mutable std::mutex mu_;
  mutable std::map<std::string, ir::FjFunction> inline_;
  mutable std::map<std::string, std::vector<ir::FjFunction>> opaque_;
};

/// Module holding the InlineIR kernel for every spec, in spec order,
/// without duplicates. Used to generate the shipped kernel file.
ir::FjModule kernel_module(const std::vector<KernelSpec>& specs);

}  // namespace fjc::kernels
