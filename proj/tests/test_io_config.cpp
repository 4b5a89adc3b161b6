#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ensbench/checkpoint.hpp"
#include "ensbench/climatology.hpp"
#include "ensbench/config.hpp"
#include "ensbench/ensemble.hpp"
#include "ensbench/error.hpp"

using namespace ensbench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ensbench_unit";
  fs::create_directories(dir);
  return dir / name;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no ensbench::Error thrown");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("checkpoint round trip") {
  ArchDescriptor arch;
  arch.channels = 1;
  arch.height = 1;
  arch.width = 8;
  arch.patch_h = 1;
  arch.kernel_h = 1;
  arch.perturb_width = 4;
  arch.forecast_width = 5;
  Checkpoint ck{init_params(arch, 3), {{0.5}, {2.0}}, default_config(), 3, "abc"};
  ck.params.arrays[1].data[0] = 0.125;
  const auto path = scratch("ck.ensc");
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  CHECK(back.seed == 3);
  CHECK(back.config_hash == "abc");
  CHECK(back.config == ck.config);
  CHECK(back.stats.stddev[0] == 2.0);
  REQUIRE(back.params.arrays.size() == ck.params.arrays.size());
  for (std::size_t a = 0; a < ck.params.arrays.size(); ++a) {
    CHECK(back.params.arrays[a].name == ck.params.arrays[a].name);
    CHECK(back.params.arrays[a].decay == ck.params.arrays[a].decay);
    for (std::size_t k = 0; k < ck.params.arrays[a].data.size(); ++k)
      CHECK(back.params.arrays[a].data[k] == static_cast<double>(static_cast<float>(ck.params.arrays[a].data[k])));
  }
  std::ofstream(scratch("bad.ensc")) << "XXXX";
  CHECK_THROWS_AS(load_checkpoint(scratch("bad.ensc")), Error);
}

TEST_CASE("ensemble file round trip, concatenated records") {
  const GridSpec g{2, 3, 10.0, 1.0, 100.0, 1.0};
  std::vector<EnsembleForecast> cases;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  for (int c = 0; c < 3; ++c) {
    EnsembleForecast f(2, 4, {"a", "b"}, g, parse_time("2018-01-01T00:00:00Z") + std::chrono::hours{6 * c});
    for (auto& v : f.values) v = static_cast<float>(nd(rng));
    f.config_hash = "h";
    f.seed = 9;
    cases.push_back(f);
  }
  const auto path = scratch("fc.ense");
  save_ensembles(path, cases);
  const auto back = load_ensembles(path);
  REQUIRE(back.size() == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(back[c].values == cases[c].values);
    CHECK(back[c].init_time == cases[c].init_time);
    CHECK(back[c].variables == cases[c].variables);
    CHECK(back[c].seed == 9);
  }
  CHECK(back[1].valid_time(0) == cases[1].init_time + std::chrono::hours{6});
  std::istringstream empty;
  CHECK_FALSE(read_ensemble(empty).has_value());
}

TEST_CASE("climatology round trip") {
  const GridSpec g{1, 2, 0, 1, 0, 1};
  std::vector<ClimatologySample> hist;
  for (int d = 0; d < 6; ++d)
    hist.push_back({parse_time("2002-01-01T00:00:00Z") + std::chrono::hours{24 * d}, {{double(d), -double(d)}}});
  const auto clim = build_climatology(hist, {"x"}, g);
  const auto stem = scratch("clim");
  save_climatology(stem, clim, "h");
  const auto back = load_climatology(stem);
  const auto t = parse_time("2018-01-05T00:00:00Z");
  CHECK(back.mean(0, t)[0] == doctest::Approx(2.5));
  CHECK(back.percentile(0, 90, t)[1] == doctest::Approx(clim.percentile(0, 90, t)[1]));
  CHECK(kind_of([&] { back.stratum(parse_time("2018-01-05T06:00:00Z")); }) == ErrorKind::MissingClimatology);
}

TEST_CASE("config merging and validation") {
  const auto d = default_config();
  SUBCASE("partial document keeps defaults") {
    const auto m = merge_config(d, {{"train", {{"iterations", 12}}}});
    CHECK(m["train"]["iterations"] == 12);
    CHECK(m["train"]["lr"] == d["train"]["lr"]);
  }
  SUBCASE("unknown key names the dotted path") {
    try {
      merge_config(d, {{"train", {{"iteratoins", 12}}}});
      FAIL("expected Config error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
      CHECK(std::string(e.what()).find("train.iteratoins") != std::string::npos);
    }
  }
  SUBCASE("type mismatch") {
    CHECK(kind_of([&] { merge_config(d, {{"train", {{"lr", "fast"}}}}); }) == ErrorKind::Config);
    CHECK(kind_of([&] { merge_config(d, {{"train", {{"iterations", 2.5}}}}); }) == ErrorKind::Config);
    CHECK(merge_config(d, {{"train", {{"iterations", 2.0}}}})["train"]["iterations"] == 2);
  }
  SUBCASE("overrides") {
    auto doc = d;
    apply_override(doc, "train.loss=l1");
    apply_override(doc, "verify.members=3");
    CHECK(doc["train"]["loss"] == "l1");
    CHECK(doc["verify"]["members"] == 3);
    CHECK_THROWS_AS(apply_override(doc, "noequals"), Error);
  }
  SUBCASE("semantic validation") {
    auto doc = d;
    doc["train"]["lambda"] = -1.0;
    CHECK_THROWS_AS(ExperimentConfig{doc}, Error);
  }
  SUBCASE("hash is stable and sensitive") {
    const ExperimentConfig a, b;
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    auto doc = d;
    doc["seed"] = 43;
    CHECK(ExperimentConfig{doc}.hash() != a.hash());
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  }
  SUBCASE("load with seed and overrides") {
    const auto path = scratch("cfg.json");
    std::ofstream(path) << R"({"verify": {"cases": 5}})";
    const auto cfg = load_config(path, {"train.members=4"}, 99);
    CHECK(cfg.seed() == 99);
    CHECK(cfg.verify().cases == 5);
    CHECK(cfg.train().members == 4);
    CHECK(kind_of([&] { load_config(scratch("missing.json"), {}, std::nullopt); }) == ErrorKind::Config);
  }
}
