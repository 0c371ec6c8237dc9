#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "sardiff/tensor.hpp"

namespace sardiff {

// Flat-binary tensor file: 8-byte magic, u32 version, u32 dtype code,
// u64 rank, u64 dims, then the row-major payload. All fields little-endian.
namespace tenfile {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts unsupported");

inline constexpr char kMagic[8] = {'S', 'D', 'T', 'E', 'N', 'S', 'R', '\0'};
inline constexpr uint32_t kVersion = 1;

template <typename T>
struct DtypeCode;
template <>
struct DtypeCode<float> { static constexpr uint32_t value = 1; };
template <>
struct DtypeCode<double> { static constexpr uint32_t value = 2; };
template <>
struct DtypeCode<int32_t> { static constexpr uint32_t value = 3; };

}  // namespace tenfile

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(tenfile::kMagic, 8);
  uint32_t version = tenfile::kVersion;
  uint32_t dtype = tenfile::DtypeCode<T>::value;
  os.write(reinterpret_cast<const char*>(&version), 4);
  os.write(reinterpret_cast<const char*>(&dtype), 4);
  uint64_t rank = static_cast<uint64_t>(t.rank());
  os.write(reinterpret_cast<const char*>(&rank), 8);
  for (int i = 0; i < t.rank(); ++i) {
    uint64_t d = static_cast<uint64_t>(t.dim(i));
    os.write(reinterpret_cast<const char*>(&d), 8);
  }
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(t.size())));
  ensure(os.good(), "write_tensor: stream failure");
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream f(path, std::ios::binary);
  ensure(f.is_open(), "save_tensor: cannot open " + path.string());
  write_tensor(f, t);
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  ensure(is.gcount() == 8 && std::memcmp(magic, tenfile::kMagic, 8) == 0,
         "read_tensor: bad magic");
  uint32_t version = 0, dtype = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  is.read(reinterpret_cast<char*>(&dtype), 4);
  ensure(is.good() && version == tenfile::kVersion,
         "read_tensor: unsupported version");
  ensure(dtype == tenfile::DtypeCode<T>::value,
         "read_tensor: dtype code mismatch");
  uint64_t rank = 0;
  is.read(reinterpret_cast<char*>(&rank), 8);
  ensure(is.good() && rank <= 8, "read_tensor: bad rank");
  Shape shape(rank);
  int64_t n = 1;
  for (uint64_t i = 0; i < rank; ++i) {
    uint64_t d = 0;
    is.read(reinterpret_cast<char*>(&d), 8);
    ensure(is.good(), "read_tensor: truncated header");
    shape[i] = static_cast<int64_t>(d);
    n *= shape[i];
  }
  Tensor<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(n)));
  ensure(is.gcount() == static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(n)),
         "read_tensor: truncated payload");
  return t;
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  ensure(f.is_open(), "load_tensor: cannot open " + path.string());
  return read_tensor<T>(f);
}

}  // namespace sardiff
