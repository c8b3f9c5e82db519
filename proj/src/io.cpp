#include "dielinv/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dielinv::io {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::ostream& os, T v) {
  std::array<unsigned char, sizeof(T)> b{};
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> b{};
  is.read(reinterpret_cast<char*>(b.data()), sizeof(T));
  if (!is) throw IoError("unexpected end of trace container");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, mode);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw IoError("number formatting failed");
  return {buf.data(), ptr};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_structured_points(const std::filesystem::path& path, const ScalarField3& field,
                             const std::string& name) {
  auto os = open_out(path);
  const Grid3& g = field.grid();
  const auto& c = g.counts();
  os << "# vtk DataFile Version 3.0\n"
     << name << "\n"
     << "ASCII\n"
     << "DATASET STRUCTURED_POINTS\n"
     << "DIMENSIONS " << c[0] << ' ' << c[1] << ' ' << c[2] << "\n"
     << "ORIGIN " << format_double(g.origin()[0]) << ' ' << format_double(g.origin()[1]) << ' '
     << format_double(g.origin()[2]) << "\n"
     << "SPACING " << format_double(g.spacing()[0]) << ' ' << format_double(g.spacing()[1]) << ' '
     << format_double(g.spacing()[2]) << "\n"
     << "POINT_DATA " << g.size() << "\n"
     << "SCALARS " << name << " double 1\n"
     << "LOOKUP_TABLE default\n";
  // VTK wants x fastest.
  for (std::size_t k = 0; k < c[2]; ++k)
    for (std::size_t j = 0; j < c[1]; ++j)
      for (std::size_t i = 0; i < c[0]; ++i) os << format_double(field(i, j, k)) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

ScalarField3 read_structured_points(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  Index3 counts{};
  Vec3 origin{}, spacing{};
  std::size_t npts = 0;
  bool have_dims = false, have_origin = false, have_spacing = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "DIMENSIONS") {
      ls >> counts[0] >> counts[1] >> counts[2];
      have_dims = true;
    } else if (key == "ORIGIN") {
      ls >> origin[0] >> origin[1] >> origin[2];
      have_origin = true;
    } else if (key == "SPACING" || key == "ASPECT_RATIO") {
      ls >> spacing[0] >> spacing[1] >> spacing[2];
      have_spacing = true;
    } else if (key == "POINT_DATA") {
      ls >> npts;
    } else if (key == "LOOKUP_TABLE") {
      break;
    } else if (key == "DATASET") {
      std::string kind;
      ls >> kind;
      if (kind != "STRUCTURED_POINTS") throw IoError("unsupported VTK dataset " + kind);
    }
  }
  if (!have_dims || !have_origin || !have_spacing) throw IoError("incomplete VTK header in " + path.string());
  ScalarField3 field(Grid3(origin, spacing, counts));
  if (npts != field.size()) throw IoError("VTK POINT_DATA count mismatch");
  for (std::size_t k = 0; k < counts[2]; ++k)
    for (std::size_t j = 0; j < counts[1]; ++j)
      for (std::size_t i = 0; i < counts[0]; ++i) {
        std::string tok;
        if (!(is >> tok)) throw IoError("truncated VTK data in " + path.string());
        double v = 0.0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc()) throw IoError("bad VTK value '" + tok + "'");
        field(i, j, k) = v;
      }
  return field;
}

void write_field_csv(const std::filesystem::path& path, const ScalarField3& field) {
  auto os = open_out(path);
  const Grid3& g = field.grid();
  const auto& c = g.counts();
  os << "i,j,k,x,y,z,value\n";
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j)
      for (std::size_t k = 0; k < c[2]; ++k) {
        const Vec3 p = g.point_at(i, j, k);
        os << i << ',' << j << ',' << k << ',' << format_double(p[0]) << ',' << format_double(p[1]) << ','
           << format_double(p[2]) << ',' << format_double(field(i, j, k)) << '\n';
      }
}

void write_trace_cube(const std::filesystem::path& path, const TraceCube& cube) {
  auto os = open_out(path, std::ios::out | std::ios::binary);
  os.write("TRCB", 4);
  put_le<std::uint32_t>(os, kTraceCubeVersion);
  put_le<double>(os, cube.plane_z());
  const PlaneGrid& xy = cube.xy();
  put_le<double>(os, xy.x0);
  put_le<double>(os, xy.y0);
  put_le<double>(os, xy.dx);
  put_le<double>(os, xy.dy);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(xy.nx));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(xy.ny));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cube.n_samples()));
  put_le<double>(os, cube.dt());
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(cube.data().data()),
             static_cast<std::streamsize>(cube.data().size() * sizeof(double)));
  } else {
    for (double v : cube.data()) put_le<double>(os, v);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

TraceCube read_trace_cube(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TRCB", 4) != 0) throw IoError(path.string() + " is not a TRCB container");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kTraceCubeVersion) throw IoError("unsupported TRCB version " + std::to_string(version));
  const double plane_z = get_le<double>(is);
  PlaneGrid xy;
  xy.x0 = get_le<double>(is);
  xy.y0 = get_le<double>(is);
  xy.dx = get_le<double>(is);
  xy.dy = get_le<double>(is);
  xy.nx = get_le<std::uint32_t>(is);
  xy.ny = get_le<std::uint32_t>(is);
  const auto nt = get_le<std::uint32_t>(is);
  const double dt = get_le<double>(is);
  TraceCube cube(plane_z, xy, dt, nt);
  auto data = cube.data();
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw IoError("truncated TRCB payload in " + path.string());
  } else {
    for (double& v : data) v = get_le<double>(is);
  }
  return cube;
}

}  // namespace dielinv::io
