#pragma once

// Internal little-endian byte helpers shared by the SWGF, checkpoint and
// posterior writers. Not installed.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "moshead/error.hpp"

namespace moshead::wire {

inline void write_u16le(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_f64le(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool read_bytes(std::istream& is, void* dst, std::size_t n) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

inline std::uint16_t load_u16le(const unsigned char* b) {
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t load_u32le(const unsigned char* b) {
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double load_f64le(const unsigned char* b) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_f64_span(std::ostream& os, std::span<const double> v) {
  for (double x : v) write_f64le(os, x);
}

inline std::vector<double> read_f64_array(std::istream& is, std::size_t n,
                                          const std::string& what) {
  std::vector<unsigned char> buf(n * 8);
  if (n > 0 && !read_bytes(is, buf.data(), buf.size()))
    throw Error::data(what + ": truncated f64 payload");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = load_f64le(buf.data() + 8 * i);
  return out;
}

inline std::string read_json_line(std::istream& is, const std::string& what) {
  std::string line;
  if (!std::getline(is, line)) throw Error::data(what + ": missing JSON header line");
  return line;
}

}  // namespace moshead::wire
