#pragma once

// CDT1 container: "CDT1", u8 dtype (0=f32, 1=f64, 2=u8), u8 ndim, ndim x u32 LE dims,
// row-major little-endian payload.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

std::size_t dtype_size(DType d);
const char* dtype_name(DType d);

/// Raw decoded container; `payload` holds little-endian element bytes.
struct NdArray {
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t numel() const;

  static NdArray from_f32(std::vector<std::uint32_t> dims, const std::vector<float>& values);
  static NdArray from_f64(std::vector<std::uint32_t> dims, const std::vector<double>& values);
  static NdArray from_u8(std::vector<std::uint32_t> dims, std::vector<std::uint8_t> values);

  /// Converts f32/f64 payloads to double; u8 is widened.
  std::vector<double> to_f64() const;
  std::vector<std::uint8_t> to_u8() const;

  bool operator==(const NdArray&) const = default;
};

void write_cdt(std::ostream& out, const NdArray& array);
/// Throws IoError naming the byte offset for bad magic, bad dtype, or truncation.
NdArray read_cdt(std::istream& in);

void save_cdt(const std::filesystem::path& path, const NdArray& array);
NdArray load_cdt(const std::filesystem::path& path);

/// Serializes as a 4-D container in the tensor's own precision.
template <typename T>
NdArray tensor_to_cdt(const Tensor<T>& t);

/// Accepts 2-D (H,W), 3-D (C,H,W) or 4-D containers of f32/f64/u8.
template <typename T>
Tensor<T> tensor_from_cdt(const NdArray& array);

}  // namespace cdnet
