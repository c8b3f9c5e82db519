#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dielinv/grid.hpp"

namespace dielinv::io {

/// Legacy-ASCII VTK, DATASET STRUCTURED_POINTS, one scalar array.
void write_structured_points(const std::filesystem::path& path, const ScalarField3& field,
                             const std::string& name = "epsilon");
ScalarField3 read_structured_points(const std::filesystem::path& path);

/// Flat CSV with header i,j,k,x,y,z,value.
void write_field_csv(const std::filesystem::path& path, const ScalarField3& field);

/// Binary trace container: little-endian header
/// {"TRCB", u32 version, f64 plane_z, f64 x0, y0, dx, dy, u32 nx, ny, nt, f64 dt}
/// followed by nx*ny*nt float64 samples in (i, j, t) order.
inline constexpr std::uint32_t kTraceCubeVersion = 1;
void write_trace_cube(const std::filesystem::path& path, const TraceCube& cube);
TraceCube read_trace_cube(const std::filesystem::path& path);

/// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace dielinv::io
