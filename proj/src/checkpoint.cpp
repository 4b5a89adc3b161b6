#include "ensbench/checkpoint.hpp"

#include <fstream>

#include "ensbench/binary_io.hpp"
#include "ensbench/error.hpp"

namespace ensbench {

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& a : ckpt.params.arrays)
    arrays.push_back({{"name", a.name}, {"shape", a.shape}, {"decay", a.decay}});
  const nlohmann::json h = {{"arch", ckpt.params.arch.to_json()},
                            {"standardization", ckpt.stats.to_json()},
                            {"config", ckpt.config},
                            {"seed", ckpt.seed},
                            {"config_hash", ckpt.config_hash},
                            {"arrays", arrays}};
  const std::string header = h.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Data, "cannot open for writing: " + path.string());
  bin::put_magic(os, "ENSC");
  bin::put<std::uint16_t>(os, 1);
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& a : ckpt.params.arrays)
    for (double v : a.data) bin::put<float>(os, static_cast<float>(v));
  if (!os) fail(ErrorKind::Data, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Data, "cannot open checkpoint: " + path.string());
  if (!bin::check_magic(is, "ENSC")) fail(ErrorKind::Data, path.string() + " is not a checkpoint (bad magic)");
  const auto version = bin::get<std::uint16_t>(is, "checkpoint version");
  if (version != 1) fail(ErrorKind::Data, "unsupported checkpoint version " + std::to_string(version));
  const auto len = bin::get<std::uint32_t>(is, "checkpoint header length");
  std::string header(len, '\0');
  is.read(header.data(), len);
  if (!is) fail(ErrorKind::Data, "truncated checkpoint header in " + path.string());

  Checkpoint ckpt;
  try {
    const auto h = nlohmann::json::parse(header);
    ckpt.params = init_params(ArchDescriptor::from_json(h.at("arch")), 0);
    ckpt.stats = Standardization::from_json(h.at("standardization"));
    ckpt.config = h.at("config");
    ckpt.seed = h.at("seed").get<std::uint64_t>();
    ckpt.config_hash = h.at("config_hash").get<std::string>();
    const auto& arrays = h.at("arrays");
    if (arrays.size() != ckpt.params.arrays.size())
      fail(ErrorKind::Data, "checkpoint array count does not match its architecture");
    for (std::size_t k = 0; k < arrays.size(); ++k) {
      auto& a = ckpt.params.arrays[k];
      if (arrays[k].at("name").get<std::string>() != a.name ||
          arrays[k].at("shape").get<std::vector<std::size_t>>() != a.shape)
        fail(ErrorKind::Data, "checkpoint array '" + arrays[k].at("name").get<std::string>() +
                                  "' does not match the architecture");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, std::string("malformed checkpoint header: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Data) throw;
    fail(ErrorKind::Data, std::string("invalid checkpoint header: ") + e.what());
  }
  for (auto& a : ckpt.params.arrays)
    for (double& v : a.data) v = bin::get<float>(is, "parameter " + a.name);
  if (!ckpt.params.all_finite()) fail(ErrorKind::Data, "checkpoint holds non-finite parameters");
  return ckpt;
}

}  // namespace ensbench
