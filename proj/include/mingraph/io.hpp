#pragma once

// Field serialization: a self-describing little-endian binary dump that
// round-trips bitwise (reports stay diff-friendly JSON/CSV; sampled fields
// must not lose a single ulp), plus small CSV sidecars for eyeballing.
//
// Layout of a dump:
//   16 bytes   magic "MINGRAPH-FIELD\0\0"
//   u32        version (currently 1)
//   u32        n, u32 m
//   n x u64    lattice dims
//   f64        h
//   n x f64    origin
//   --- payload ---
//   total_nodes bytes   node classification (0 interior, 1 band, 2 exterior)
//   m * inside_count f64   values, per component, nodes in row-major order
//   u64        cut point count
//   m * cuts f64           Dirichlet values at the cut points

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "mingraph/barriers.hpp"
#include "mingraph/domain.hpp"
#include "mingraph/errors.hpp"
#include "mingraph/field.hpp"

namespace mingraph {

inline constexpr char kFieldMagic[16] = {'M', 'I', 'N', 'G', 'R', 'A', 'P', 'H',
                                         '-', 'F', 'I', 'E', 'L', 'D', '\0', '\0'};
inline constexpr uint32_t kFieldVersion = 1;

namespace detail_io {

// RAII stdio handle; all writes funnel through here so a full disk or a
// bad path surfaces as IoFailure, never as silent truncation.
class File {
 public:
  File(const std::string& path, const char* fmode) : path_(path) {
    f_ = std::fopen(path.c_str(), fmode);
    if (!f_) throw Error("IoFailure", "cannot open " + path);
  }
  ~File() {
    if (f_) std::fclose(f_);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  void write(const void* data, size_t bytes) {
    if (std::fwrite(data, 1, bytes, f_) != bytes)
      throw Error("IoFailure", "short write to " + path_);
  }
  void read(void* data, size_t bytes) {
    if (std::fread(data, 1, bytes, f_) != bytes)
      throw Error("FormatError", "truncated file " + path_);
  }
  void print(const std::string& s) { write(s.data(), s.size()); }

 private:
  std::string path_;
  std::FILE* f_ = nullptr;
};

template <typename T>
void write_pod(File& f, const T& v) {
  f.write(&v, sizeof(T));
}

template <typename T>
T read_pod(File& f) {
  T v{};
  f.read(&v, sizeof(T));
  return v;
}

}  // namespace detail_io

inline void dump_field(const VectorField& field, const std::string& path) {
  if (!field.grid) throw Error("BadCondition", "field has no grid");
  const Grid& g = *field.grid;
  detail_io::File f(path, "wb");
  f.write(kFieldMagic, sizeof(kFieldMagic));
  detail_io::write_pod(f, kFieldVersion);
  detail_io::write_pod(f, static_cast<uint32_t>(g.n));
  detail_io::write_pod(f, static_cast<uint32_t>(field.m));
  for (int i = 0; i < g.n; ++i)
    detail_io::write_pod(f, static_cast<uint64_t>(g.dims[static_cast<size_t>(i)]));
  detail_io::write_pod(f, g.h);
  for (int i = 0; i < g.n; ++i) detail_io::write_pod(f, g.origin[i]);

  f.write(g.cls.data(), g.cls.size());
  f.write(field.values.data(), field.values.size() * sizeof(double));
  detail_io::write_pod(f, static_cast<uint64_t>(g.cut_points.size()));
  f.write(field.cut_values.data(), field.cut_values.size() * sizeof(double));
}

// Loads a dump back onto the grid it was written from.  Every header field
// and the classification bytes must match the grid exactly; anything else
// means the file belongs to a different discretization.
inline VectorField load_field(const Grid& grid, const std::string& path) {
  detail_io::File f(path, "rb");
  char magic[16];
  f.read(magic, sizeof(magic));
  if (std::memcmp(magic, kFieldMagic, sizeof(magic)) != 0)
    throw Error("FormatError", path + " is not a field dump (bad magic)");
  const auto version = detail_io::read_pod<uint32_t>(f);
  if (version != kFieldVersion)
    throw Error("FormatError", "unsupported dump version " + std::to_string(version));
  const auto n = detail_io::read_pod<uint32_t>(f);
  const auto m = detail_io::read_pod<uint32_t>(f);
  if (static_cast<int>(n) != grid.n)
    throw Error("FormatError", "dump dimension does not match the grid");
  if (m < 1 || m > 64) throw Error("FormatError", "implausible component count");
  for (int i = 0; i < grid.n; ++i)
    if (detail_io::read_pod<uint64_t>(f) != static_cast<uint64_t>(grid.dims[static_cast<size_t>(i)]))
      throw Error("FormatError", "dump lattice does not match the grid");
  if (detail_io::read_pod<double>(f) != grid.h)
    throw Error("FormatError", "dump spacing does not match the grid");
  for (int i = 0; i < grid.n; ++i)
    if (detail_io::read_pod<double>(f) != grid.origin[i])
      throw Error("FormatError", "dump origin does not match the grid");

  std::vector<uint8_t> cls(static_cast<size_t>(grid.total_nodes()));
  f.read(cls.data(), cls.size());
  for (size_t i = 0; i < cls.size(); ++i)
    if (cls[i] != static_cast<uint8_t>(grid.cls[i]))
      throw Error("FormatError", "dump node classification does not match the grid");

  VectorField field(grid, static_cast<int>(m));
  f.read(field.values.data(), field.values.size() * sizeof(double));
  if (detail_io::read_pod<uint64_t>(f) != grid.cut_points.size())
    throw Error("FormatError", "dump cut-point count does not match the grid");
  f.read(field.cut_values.data(), field.cut_values.size() * sizeof(double));
  return field;
}

namespace detail_io {

// %.17g reproduces a double exactly and prints the same bytes for the same
// bit pattern, which is what the report determinism contract needs.
inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail_io

// Human-readable sidecar: one row per inside node (coordinates, class,
// components), then one per cut point.  Meant for small grids only.
inline void dump_field_csv(const VectorField& field, const std::string& path) {
  if (!field.grid) throw Error("BadCondition", "field has no grid");
  const Grid& g = *field.grid;
  detail_io::File f(path, "wb");
  std::string head;
  for (int i = 0; i < g.n; ++i) head += "x" + std::to_string(i + 1) + ",";
  head += "class";
  for (int a = 0; a < field.m; ++a) head += ",u" + std::to_string(a + 1);
  f.print(head + "\n");
  for (int64_t ii = 0; ii < g.inside_count(); ++ii) {
    const Vec x = g.point(g.flat_of[static_cast<size_t>(ii)]);
    std::string row;
    for (int i = 0; i < g.n; ++i) row += detail_io::num(x[i]) + ",";
    row += g.cls[static_cast<size_t>(g.flat_of[static_cast<size_t>(ii)])] == NodeClass::kInterior
               ? "interior"
               : "band";
    for (int a = 0; a < field.m; ++a) row += "," + detail_io::num(field.at(ii, a));
    f.print(row + "\n");
  }
  for (size_t k = 0; k < g.cut_points.size(); ++k) {
    std::string row;
    for (int i = 0; i < g.n; ++i) row += detail_io::num(g.cut_points[k][i]) + ",";
    row += "cut";
    for (int a = 0; a < field.m; ++a)
      row += "," + detail_io::num(field.cut_at(static_cast<int64_t>(k), a));
    f.print(row + "\n");
  }
}

// Barrier profile as (d, phi, phi', phi'') rows for plotting.  A declared
// pole at the left endpoint shifts the first sample one step inward.
inline void dump_barrier_csv(const Barrier& b, const std::string& path, int samples = 256) {
  if (samples < 2) throw Error("BadCondition", "need samples >= 2");
  detail_io::File f(path, "wb");
  f.print("d,phi,dphi,d2phi\n");
  const double step = (b.hi - b.lo) / samples;
  for (int k = b.pole_at_lo ? 1 : 0; k <= samples; ++k) {
    const double d = b.lo + step * k;
    f.print(detail_io::num(d) + "," + detail_io::num(b.value(d)) + "," +
            detail_io::num(b.slope(d)) + "," + detail_io::num(b.curvature(d)) + "\n");
  }
}

}  // namespace mingraph
