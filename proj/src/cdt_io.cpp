#include "cdnet/cdt_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cdnet {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'T', '1'};

template <typename V>
void append_le(std::vector<std::uint8_t>& bytes, V value) {
  std::uint8_t raw[sizeof(V)];
  std::memcpy(raw, &value, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(V));
  bytes.insert(bytes.end(), raw, raw + sizeof(V));
}

template <typename V>
V read_le(const std::uint8_t* p) {
  std::uint8_t raw[sizeof(V)];
  std::memcpy(raw, p, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(V));
  V v;
  std::memcpy(&v, raw, sizeof(V));
  return v;
}

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void read_exact(std::istream& in, char* dst, std::size_t n, std::size_t offset, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError(std::string("CDT1: truncated ") + what + " at byte offset " +
                  std::to_string(offset + static_cast<std::size_t>(in.gcount())));
  }
}

}  // namespace

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
  }
  throw IoError("CDT1: unknown dtype");
}

const char* dtype_name(DType d) {
  switch (d) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kU8: return "u8";
  }
  return "?";
}

std::size_t NdArray::numel() const { return product(dims); }

NdArray NdArray::from_f32(std::vector<std::uint32_t> dims, const std::vector<float>& values) {
  NdArray a{DType::kF32, std::move(dims), {}};
  a.payload.reserve(values.size() * 4);
  for (float v : values) append_le(a.payload, v);
  return a;
}

NdArray NdArray::from_f64(std::vector<std::uint32_t> dims, const std::vector<double>& values) {
  NdArray a{DType::kF64, std::move(dims), {}};
  a.payload.reserve(values.size() * 8);
  for (double v : values) append_le(a.payload, v);
  return a;
}

NdArray NdArray::from_u8(std::vector<std::uint32_t> dims, std::vector<std::uint8_t> values) {
  return NdArray{DType::kU8, std::move(dims), std::move(values)};
}

std::vector<double> NdArray::to_f64() const {
  const std::size_t n = numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (dtype) {
      case DType::kF32: out[i] = read_le<float>(payload.data() + 4 * i); break;
      case DType::kF64: out[i] = read_le<double>(payload.data() + 8 * i); break;
      case DType::kU8: out[i] = payload[i]; break;
    }
  }
  return out;
}

std::vector<std::uint8_t> NdArray::to_u8() const {
  if (dtype != DType::kU8) {
    throw IoError(std::string("CDT1: expected u8 payload, found ") + dtype_name(dtype));
  }
  return payload;
}

void write_cdt(std::ostream& out, const NdArray& array) {
  if (array.dims.size() > 255) throw IoError("CDT1: ndim exceeds 255");
  if (array.payload.size() != array.numel() * dtype_size(array.dtype)) {
    throw IoError("CDT1: payload length does not match dims");
  }
  std::vector<std::uint8_t> header(kMagic, kMagic + 4);
  header.push_back(static_cast<std::uint8_t>(array.dtype));
  header.push_back(static_cast<std::uint8_t>(array.dims.size()));
  for (auto d : array.dims) append_le(header, d);
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(array.payload.data()),
            static_cast<std::streamsize>(array.payload.size()));
  if (!out) throw IoError("CDT1: write failed");
}

NdArray read_cdt(std::istream& in) {
  char magic[4];
  read_exact(in, magic, 4, 0, "magic");
  if (!std::equal(magic, magic + 4, kMagic)) throw IoError("CDT1: bad magic at byte offset 0");
  std::uint8_t head[2];
  read_exact(in, reinterpret_cast<char*>(head), 2, 4, "header");
  if (head[0] > 2) {
    throw IoError("CDT1: unknown dtype code " + std::to_string(head[0]) + " at byte offset 4");
  }
  NdArray a;
  a.dtype = static_cast<DType>(head[0]);
  const std::size_t ndim = head[1];
  std::vector<std::uint8_t> dimbytes(ndim * 4);
  read_exact(in, reinterpret_cast<char*>(dimbytes.data()), dimbytes.size(), 6, "dims");
  for (std::size_t i = 0; i < ndim; ++i) a.dims.push_back(read_le<std::uint32_t>(&dimbytes[4 * i]));
  a.payload.resize(a.numel() * dtype_size(a.dtype));
  read_exact(in, reinterpret_cast<char*>(a.payload.data()), a.payload.size(), 6 + 4 * ndim,
             "payload");
  return a;
}

void save_cdt(const std::filesystem::path& path, const NdArray& array) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_cdt(out, array);
}

NdArray load_cdt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  try {
    return read_cdt(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

template <typename T>
NdArray tensor_to_cdt(const Tensor<T>& t) {
  const std::vector<std::uint32_t> dims = {
      static_cast<std::uint32_t>(t.n()), static_cast<std::uint32_t>(t.c()),
      static_cast<std::uint32_t>(t.h()), static_cast<std::uint32_t>(t.w())};
  if constexpr (std::is_same_v<T, float>) {
    return NdArray::from_f32(dims, t.vec());
  } else {
    return NdArray::from_f64(dims, t.vec());
  }
}

template <typename T>
Tensor<T> tensor_from_cdt(const NdArray& array) {
  Shape s;
  const auto& d = array.dims;
  switch (d.size()) {
    case 2: s = {1, 1, d[0], d[1]}; break;
    case 3: s = {1, d[0], d[1], d[2]}; break;
    case 4: s = {d[0], d[1], d[2], d[3]}; break;
    default:
      throw ShapeError("CDT1: expected 2-4 dims for a tensor, found " + std::to_string(d.size()));
  }
  const std::vector<double> v = array.to_f64();
  return Tensor<T>(s, std::vector<T>(v.begin(), v.end()));
}

template NdArray tensor_to_cdt(const Tensor<float>&);
template NdArray tensor_to_cdt(const Tensor<double>&);
template Tensor<float> tensor_from_cdt(const NdArray&);
template Tensor<double> tensor_from_cdt(const NdArray&);

}  // namespace cdnet
