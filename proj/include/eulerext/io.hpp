#pragma once
// Shared binary field container ("EEXT1") and CSV export.
//
// Layout (little-endian):
//   bytes "EEXT1" | u32 d | u32 n_1..n_d | u32 components c | u32 frames m |
//   f64 T | m*c*prod(n) f64 samples, row-major, last spatial axis fastest,
//   components outermost within a frame, frames outermost.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "core.hpp"
#include "field.hpp"

namespace eulerext {

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline double get_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
}  // namespace detail

inline void write_field_binary(std::ostream& os, const TimeDependentField& u) {
  os.write("EEXT1", 5);
  detail::put_u32(os, std::uint32_t(u.grid.d));
  for (int a = 0; a < u.grid.d; ++a) detail::put_u32(os, std::uint32_t(u.grid.n[a]));
  detail::put_u32(os, std::uint32_t(u.components));
  detail::put_u32(os, std::uint32_t(u.frames));
  detail::put_f64(os, u.T);
  os.write(reinterpret_cast<const char*>(u.data.data()), std::streamsize(u.data.size() * 8));
}

inline void save_field(const std::string& path, const TimeDependentField& u) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_field_binary(os, u);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline TimeDependentField read_field_binary(std::istream& is, const std::string& what) {
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "EEXT1", 5) != 0)
    throw std::runtime_error(what + ": bad magic (expected EEXT1)");
  std::uint32_t d = detail::get_u32(is);
  if (d < 1 || d > 8) throw std::runtime_error(what + ": unsupported dimension");
  std::vector<int> dims;
  for (std::uint32_t a = 0; a < d; ++a) dims.push_back(int(detail::get_u32(is)));
  std::uint32_t c = detail::get_u32(is);
  std::uint32_t m = detail::get_u32(is);
  double T = detail::get_f64(is);
  if (!is) throw std::runtime_error(what + ": truncated header");
  TimeDependentField u(PeriodicGrid(dims), int(c), int(m), T);
  is.read(reinterpret_cast<char*>(u.data.data()), std::streamsize(u.data.size() * 8));
  if (!is) throw std::runtime_error(what + ": truncated payload");
  return u;
}

inline TimeDependentField load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return read_field_binary(is, path);
}

// One row per (frame, node): t, x^1..x^d, then one column per component.
inline void export_csv(const std::string& path, const TimeDependentField& u) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "t";
  for (int a = 0; a < u.grid.d; ++a) os << ",x" << (a + 1);
  for (int c = 0; c < u.components; ++c) os << ",v" << (c + 1);
  os << "\n";
  os << std::setprecision(17);
  std::int64_t N = u.grid.size();
  double x[8];
  for (int f = 0; f < u.frames; ++f) {
    for (std::int64_t i = 0; i < N; ++i) {
      u.grid.node(i, x);
      os << u.time(f);
      for (int a = 0; a < u.grid.d; ++a) os << "," << x[a];
      for (int c = 0; c < u.components; ++c) os << "," << u.frame_component(f, c)[i];
      os << "\n";
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace eulerext
