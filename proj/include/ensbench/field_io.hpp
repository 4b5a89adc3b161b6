#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ensbench/grid.hpp"

namespace ensbench {

// Field record layout (little-endian):
//   "ENSF" | u16 version=1 | u16 dtype=1 (float32) | u32 nlat | u32 nlon |
//   f64 lat_start | f64 lat_step | f64 lon_start | f64 lon_step |
//   f32 values[nlat*nlon] (row-major, latitude outer)
// A file may hold several records back to back (a frame stack).

inline constexpr std::uint16_t kFieldFormatVersion = 1;
inline constexpr std::uint16_t kDtypeFloat32 = 1;

void write_field(std::ostream& os, const Field& field);

/// Reads one record; returns nullopt on clean end of stream.
std::optional<Field> read_field(std::istream& is);

void save_fields(const std::filesystem::path& path, const std::vector<Field>& fields);
std::vector<Field> load_fields(const std::filesystem::path& path);

/// lat,lon,value rows with a header line.
void write_field_csv(std::ostream& os, const Field& field);

}  // namespace ensbench
