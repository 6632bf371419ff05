#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "corrpost/common/binary_io.hpp"
#include "corrpost/imagefft/image.hpp"

namespace corrpost {
namespace {

// Skips whitespace and '#' comments between PGM header tokens.
std::size_t skip_separators(std::span<const char> bytes, std::size_t pos) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  return pos;
}

unsigned long read_header_number(std::span<const char> bytes, std::size_t& pos) {
  pos = skip_separators(bytes, pos);
  const std::size_t start = pos;
  unsigned long value = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + static_cast<unsigned long>(bytes[pos] - '0');
    ++pos;
  }
  if (pos == start) throw IoError("pgm: malformed header");
  return value;
}

}  // namespace

Image2D decode_pgm(std::span<const char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw IoError("pgm: not a binary P5 file");
  std::size_t pos = 2;
  const auto width = read_header_number(bytes, pos);
  const auto height = read_header_number(bytes, pos);
  const auto maxval = read_header_number(bytes, pos);
  if (maxval != 255 && maxval != 65535) throw IoError("pgm: unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw IoError("pgm: missing header terminator");
  }
  ++pos;
  const std::size_t bytes_per_sample = maxval == 255 ? 1 : 2;
  const std::size_t count = width * height;
  if (bytes.size() - pos < count * bytes_per_sample) throw IoError("pgm: truncated pixel data");
  std::vector<double> data(count);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned v = bytes_per_sample == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
    data[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return Image2D(width, height, std::move(data));
}

std::string encode_pgm(const Image2D& img, unsigned maxval) {
  if (maxval != 255 && maxval != 65535) throw IoError("pgm: unsupported maxval " + std::to_string(maxval));
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n" +
                    std::to_string(maxval) + "\n";
  out.reserve(out.size() + img.size() * (maxval == 255 ? 1 : 2));
  for (double v : img.data()) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
    if (maxval == 255) {
      out.push_back(static_cast<char>(q));
    } else {
      out.push_back(static_cast<char>(q >> 8));
      out.push_back(static_cast<char>(q & 0xFF));
    }
  }
  return out;
}

Image2D read_pgm(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  try {
    return decode_pgm(bytes);
  } catch (Error& e) {
    e.prepend(path.string());
    throw;
  }
}

void write_pgm(const std::filesystem::path& path, const Image2D& img, unsigned maxval) {
  binio::write_file(path, encode_pgm(img, maxval));
}

void write_img2(const std::filesystem::path& path, const Grid<double>& plane) {
  std::ostringstream out(std::ios::binary);
  binio::write_bytes(out, "IMG2");
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(plane.width()));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(plane.height()));
  binio::write_le<std::uint32_t>(out, 0);
  for (double v : plane.data()) binio::write_f32(out, static_cast<float>(v));
  binio::write_file(path, out.str());
}

Image2D read_img2(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  binio::expect_magic(in, "IMG2");
  const auto width = binio::read_le<std::uint32_t>(in, "IMG2 width");
  const auto height = binio::read_le<std::uint32_t>(in, "IMG2 height");
  binio::read_le<std::uint32_t>(in, "IMG2 reserved");
  std::vector<double> data(static_cast<std::size_t>(width) * height);
  for (auto& v : data) v = binio::read_f32(in, "IMG2 payload");
  return Image2D(width, height, std::move(data));
}

}  // namespace corrpost
