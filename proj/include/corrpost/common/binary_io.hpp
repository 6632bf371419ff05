#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corrpost/common/errors.hpp"

// Little-endian primitive readers/writers shared by every on-disk format.
namespace corrpost::binio {

template <typename U>
void write_le(std::ostream& out, U value) {
  static_assert(std::is_integral_v<U>);
  using Unsigned = std::make_unsigned_t<U>;
  auto v = static_cast<Unsigned>(value);
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

inline void write_f32(std::ostream& out, float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  write_le(out, bits);
}

inline void write_f64(std::ostream& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  write_le(out, bits);
}

inline void write_bytes(std::ostream& out, std::string_view bytes) {
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void read_exact(std::istream& in, void* dst, std::size_t n, std::string_view what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError("truncated " + std::string(what));
  }
}

template <typename U>
U read_le(std::istream& in, std::string_view what) {
  static_assert(std::is_integral_v<U>);
  unsigned char bytes[sizeof(U)];
  read_exact(in, bytes, sizeof(U), what);
  std::make_unsigned_t<U> v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::make_unsigned_t<U>>(bytes[i]) << (8 * i);
  return static_cast<U>(v);
}

inline float read_f32(std::istream& in, std::string_view what) {
  auto bits = read_le<std::uint32_t>(in, what);
  float value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

inline double read_f64(std::istream& in, std::string_view what) {
  auto bits = read_le<std::uint64_t>(in, what);
  double value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

/// Reads and checks a 4-byte magic tag.
void expect_magic(std::istream& in, std::string_view magic);

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace corrpost::binio
