#include "ensbench/field_io.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

#include "ensbench/binary_io.hpp"

namespace ensbench {

void write_field(std::ostream& os, const Field& field) {
  const GridSpec& g = field.grid();
  bin::put_magic(os, "ENSF");
  bin::put<std::uint16_t>(os, kFieldFormatVersion);
  bin::put<std::uint16_t>(os, kDtypeFloat32);
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.nlat));
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.nlon));
  bin::put<double>(os, g.lat_start);
  bin::put<double>(os, g.lat_step);
  bin::put<double>(os, g.lon_start);
  bin::put<double>(os, g.lon_step);
  for (double v : field.values()) bin::put<float>(os, static_cast<float>(v));
}

std::optional<Field> read_field(std::istream& is) {
  if (is.peek() == std::char_traits<char>::eof()) return std::nullopt;
  if (!bin::check_magic(is, "ENSF")) fail(ErrorKind::Data, "not a field record (bad magic)");
  const auto version = bin::get<std::uint16_t>(is, "field version");
  if (version != kFieldFormatVersion)
    fail(ErrorKind::Data, "unsupported field format version " + std::to_string(version));
  const auto dtype = bin::get<std::uint16_t>(is, "field dtype");
  if (dtype != kDtypeFloat32) fail(ErrorKind::Data, "unsupported field dtype " + std::to_string(dtype));
  GridSpec g;
  g.nlat = bin::get<std::uint32_t>(is, "nlat");
  g.nlon = bin::get<std::uint32_t>(is, "nlon");
  g.lat_start = bin::get<double>(is, "lat_start");
  g.lat_step = bin::get<double>(is, "lat_step");
  g.lon_start = bin::get<double>(is, "lon_start");
  g.lon_step = bin::get<double>(is, "lon_step");
  std::vector<double> values(g.size());
  for (double& v : values) v = bin::get<float>(is, "field values");
  try {
    return Field(g, std::move(values));
  } catch (const Error& e) {
    fail(ErrorKind::Data, std::string("invalid field record: ") + e.what());
  }
}

void save_fields(const std::filesystem::path& path, const std::vector<Field>& fields) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Data, "cannot open for writing: " + path.string());
  for (const auto& f : fields) write_field(os, f);
  if (!os) fail(ErrorKind::Data, "write failed: " + path.string());
}

std::vector<Field> load_fields(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Data, "cannot open field file: " + path.string());
  std::vector<Field> out;
  while (auto f = read_field(is)) out.push_back(std::move(*f));
  return out;
}

void write_field_csv(std::ostream& os, const Field& field) {
  const GridSpec& g = field.grid();
  os << "lat,lon,value\n" << std::setprecision(9);
  for (std::size_t i = 0; i < g.nlat; ++i)
    for (std::size_t j = 0; j < g.nlon; ++j) os << g.lat(i) << ',' << g.lon(j) << ',' << field.at(i, j) << '\n';
}

}  // namespace ensbench
