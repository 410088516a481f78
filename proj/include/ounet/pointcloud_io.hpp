#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ounet/errors.hpp"
#include "ounet/geometry.hpp"

namespace ounet::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ASCII: one "x y z" per line, '#' comments and blank lines ignored.
inline PointCloud parse_xyz(const std::string& text) {
  PointCloud pc;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Point3 p;
    std::string extra;
    if (!(ls >> p.x >> p.y >> p.z) || (ls >> extra))
      throw ParseError("malformed point on line " + std::to_string(lineno) +
                       ": expected 3 numbers");
    if (!p.finite()) throw ParseError("non-finite coordinate on line " + std::to_string(lineno));
    pc.points.push_back(p);
  }
  return pc;
}

inline std::string format_xyz(const PointCloud& pc) {
  std::string out;
  out.reserve(pc.count() * 48);
  char buf[96];
  for (const auto& p : pc.points) {
    const int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p.x, p.y, p.z);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

inline PointCloud read_xyz(const std::filesystem::path& path) { return parse_xyz(read_file_bytes(path)); }

inline void write_xyz(const std::filesystem::path& path, const PointCloud& pc) {
  write_file_bytes(path, format_xyz(pc));
}

// Binary: "PCB1", u64 LE count, count x 3 f32 LE.
inline constexpr std::array<char, 4> kPcbMagic{'P', 'C', 'B', '1'};

inline std::string encode_pcb(const PointCloud& pc) {
  std::string out(4 + 8 + pc.count() * 12, '\0');
  std::memcpy(out.data(), kPcbMagic.data(), 4);
  const std::uint64_t n = pc.count();
  std::memcpy(out.data() + 4, &n, 8);
  char* dst = out.data() + 12;
  for (const auto& p : pc.points) {
    const float v[3] = {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z)};
    std::memcpy(dst, v, 12);
    dst += 12;
  }
  return out;
}

inline PointCloud decode_pcb(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kPcbMagic.data(), 4) != 0)
    throw FormatError("not a PCB1 point cloud (bad magic)");
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data() + 4, 8);
  if ((bytes.size() - 12) / 12 < n || bytes.size() != 12 + n * 12)
    throw FormatError("PCB1 payload size does not match its point count");
  PointCloud pc;
  pc.points.resize(n);
  const char* src = bytes.data() + 12;
  for (auto& p : pc.points) {
    float v[3];
    std::memcpy(v, src, 12);
    src += 12;
    p = {v[0], v[1], v[2]};
  }
  return pc;
}

inline PointCloud read_pcb(const std::filesystem::path& path) { return decode_pcb(read_file_bytes(path)); }

inline void write_pcb(const std::filesystem::path& path, const PointCloud& pc) {
  write_file_bytes(path, encode_pcb(pc));
}

// Dispatch on extension: ".pcb" is binary, anything else is ASCII xyz.
inline PointCloud read_cloud(const std::filesystem::path& path) {
  return path.extension() == ".pcb" ? read_pcb(path) : read_xyz(path);
}

inline void write_cloud(const std::filesystem::path& path, const PointCloud& pc) {
  if (path.extension() == ".pcb") write_pcb(path, pc);
  else write_xyz(path, pc);
}

// Round coordinates to what the binary format stores.
inline PointCloud quantize_f32(PointCloud pc) {
  // Two passes through a float buffer: GCC 11 at -O3 drops the in-place
  // double->float->double round trip on the loop remainder.
  std::vector<float> f(3 * pc.count());
  for (std::size_t i = 0; i < pc.count(); ++i)
    for (int k = 0; k < 3; ++k) f[3 * i + static_cast<std::size_t>(k)] = static_cast<float>(pc.points[i][k]);
  for (std::size_t i = 0; i < pc.count(); ++i)
    for (int k = 0; k < 3; ++k) pc.points[i][k] = f[3 * i + static_cast<std::size_t>(k)];
  return pc;
}

}  // namespace ounet::io
