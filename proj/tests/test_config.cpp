#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lnf/config.hpp"

using namespace lnf;

namespace {

int error_line(const std::string& text, bool json = false, const std::vector<std::string>& o = {}) {
  try {
    parse_config(text, "t", json, o);
  } catch (const ConfigError& e) {
    return e.line;
  }
  return -1;
}

}  // namespace

TEST_CASE("defaults and explicit values") {
  const auto d = parse_config("");
  CHECK(d == ExperimentConfig{});
  const auto c = parse_config(
      "seed: 9\nlattice:\n  dim: 2\n  kappa: [0.25, 0]\n  k_enum: 5\n"
      "model:\n  kind: torus\n  coeffs: [1, -0.5]\nsimulate:\n  eps: 0.05\n");
  CHECK(c.seed == 9);
  CHECK(c.lattice.dim == 2);
  CHECK(c.lattice.kappa == std::vector<double>{0.25, 0.0});
  CHECK(c.model.kind == "torus");
  CHECK(c.model.coeffs == std::vector<double>{1.0, -0.5});
  CHECK(c.simulate.eps == std::vector<double>{0.05});
}

TEST_CASE("malformed input reports line and column") {
  CHECK(error_line("lattice:\n  dim: 1\n  bogus: 3\n") == 3);
  CHECK(error_line("lattice:\n  dim: one\n") == 2);
  CHECK(error_line("lattice:\n  dim: 4\n") == 2);
  CHECK(error_line("lattice:\n  kappa: [1.5]\n") == 2);
  CHECK(error_line("model:\n  kind: sphere\n") == 2);
  CHECK(error_line("simulate:\n  eps: [0.1, 1.5]\n") == 2);
  CHECK(error_line("nonsense: 1\n") == 1);
  CHECK(error_line("lattice: [1, 2\n") > 0);
  CHECK(error_line("{\"lattice\": {\"dim\": 1,\n \"k_enum\": }}", true) == 2);
  CHECK(error_line("model:\n  kind: beam\n  nonlinearity: nls\n") == 3);
}

TEST_CASE("overrides") {
  const auto c = parse_config("lattice:\n  dim: 1\n", "t", false,
                              {"lattice.k_enum=12", "simulate.eps=[0.1, 0.2]", "top.seed=4"});
  CHECK(c.lattice.k_enum == 12.0);
  CHECK(c.simulate.eps == std::vector<double>{0.1, 0.2});
  CHECK(c.seed == 4);
  CHECK_THROWS_AS(parse_config("", "t", false, {"lattice.nope=1"}), ConfigError);
  CHECK_THROWS_AS(parse_config("", "t", false, {"nosection.k=1"}), ConfigError);
  CHECK_THROWS_AS(parse_config("", "t", false, {"lattice.dim"}), ConfigError);
  CHECK_THROWS_AS(parse_config("", "t", false, {"lattice.dim=9"}), ConfigError);
}

TEST_CASE("echo round trip") {
  ExperimentConfig c;
  c.seed = 17;
  c.lattice.dim = 2;
  c.lattice.kappa = {0.5, 0.125};
  c.lattice.gram = {1.0, 0.25, 0.25, 2.0};
  c.model.multiplier_seed = 123456789012345ull;
  c.model.coeffs = {0.1, 1.0 / 3.0};
  c.resonance.gamma = 1e-7;
  c.simulate.eps = {0.1, 0.01, 1e-3};
  c.simulate.integrator = "rk4";
  c.output.dir = "some/where";
  const auto back = parse_config(config_json(c), "echo", true);
  CHECK(back == c);
  CHECK(config_json(back) == config_json(c));
  CHECK(parse_config(config_json(ExperimentConfig{}), "echo", true) == ExperimentConfig{});
}

TEST_CASE("derived seeds and builders") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));

  ExperimentConfig c;
  c.lattice.k_enum = 6;
  const auto s1 = build_setting(c);
  const auto s2 = build_setting(c);
  REQUIRE(s1.table.size() == s2.table.size());
  for (std::size_t i = 0; i < s1.table.size(); ++i) CHECK(s1.table[i].omega == s2.table[i].omega);
  c.seed = 1;
  const auto s3 = build_setting(c);
  bool differs = false;
  for (std::size_t i = 0; i < s1.table.size(); ++i) differs |= s1.table[i].omega != s3.table[i].omega;
  CHECK(differs);

  c.model.kind = "beam";
  c.model.nonlinearity = "beam";
  c.model.coeffs = {0.2};
  CHECK(build_nonlinearity(c).kind == Nonlinearity::Kind::Beam);
  CHECK(build_model(c).frequency(make_point({1})) == doctest::Approx(std::sqrt(2.0)));

  c = ExperimentConfig{};
  const auto sim = build_simulation(c, 0.1);
  CHECK(sim.t_end == doctest::Approx(100.0));
  CHECK(sim.integrator == IntegratorKind::Strang);
}

TEST_CASE("JSON files are accepted") {
  const auto dir = std::filesystem::temp_directory_path() / "lnf_config_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "c.json";
  std::ofstream(path) << "{\"seed\": 3, \"lattice\": {\"k_enum\": 5}}";
  const auto c = load_config(path.string());
  CHECK(c.seed == 3);
  CHECK(c.lattice.k_enum == 5.0);
  CHECK_THROWS_AS(load_config((dir / "missing.yaml").string()), ConfigError);
}
