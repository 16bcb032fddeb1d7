#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lnf/app.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kCli = LNF_CLI_PATH;
const std::string kConfigs = std::string(LNF_SOURCE_DIR) + "/configs/";

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("lnf_cli_" + name);
  fs::remove_all(p);
  return p;
}

int run(const std::string& args) {
  const int rc = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

}  // namespace

TEST_CASE("verify on the bundled config passes") {
  const auto out = scratch("verify");
  CHECK(run("verify --config " + kConfigs + "t1_cubic_nls.yaml --out-dir " + out.string()) == 0);
  const auto m = read_json(out / "manifest.json");
  CHECK(m["status"] == 0);
  CHECK(m["measured"]["failed"] == 0);
  CHECK(m["witness"].is_null());
}

TEST_CASE("usage errors exit 2") {
  CHECK(run("verify --config /nonexistent/config.yaml") == 2);
  CHECK(run("verify") == 2);
  CHECK(run("--config " + kConfigs + "t1_cubic_nls.yaml") == 2);
  CHECK(run("frobnicate --config " + kConfigs + "t1_cubic_nls.yaml") == 2);
  CHECK(run("spectrum --config " + kConfigs + "t1_cubic_nls.yaml --set lattice.bogus=1") == 2);
  CHECK(run("spectrum --config " + kConfigs + "t1_cubic_nls.yaml --jobs 0") == 2);
  const auto out = scratch("beam_nf");
  CHECK(run("normalform --config " + kConfigs + "t1_cubic_nls.yaml --set model.kind=beam --set model.nonlinearity=beam "
            "--out-dir " + out.string()) == 2);
}

TEST_CASE("resonances on the bare circle fail with the 3-4-5 witness") {
  const auto out = scratch("r4");
  CHECK(run("resonances --config " + kConfigs + "t1_torus_r4.yaml --out-dir " + out.string()) == 1);
  const auto m = read_json(out / "manifest.json");
  CHECK(m["status"] == 1);
  const auto w = m["witness"]["multi_index"];
  REQUIRE(w.size() == 4);
  std::vector<std::pair<int, int>> got;
  for (const auto& e : w) got.emplace_back(static_cast<int>(e[0][0].get<double>()), e[1].get<int>());
  CHECK(got == std::vector<std::pair<int, int>>{{5, 1}, {4, -1}, {3, -1}, {0, 1}});
  CHECK(m["witness"]["divisor"] == 0.0);
  CHECK(fs::exists(out / "certificate.json"));
}

TEST_CASE("manifests are deterministic modulo timestamps") {
  const auto out = scratch("det");
  const std::string args = " --config " + kConfigs + "t1_cubic_nls.yaml --out-dir " + out.string() +
                           " --set simulate.t_end=20 --set simulate.stride=50 --jobs 2";
  for (const std::string sub : {"normalform", "simulate", "measure"}) {
    REQUIRE(run(sub + args) == 0);
    auto first = read_json(out / "manifest.json");
    REQUIRE(run(sub + args) == 0);
    auto second = read_json(out / "manifest.json");
    CHECK(first.contains("timestamps"));
    first.erase("timestamps");
    second.erase("timestamps");
    CHECK(first.dump() == second.dump());
    CHECK(!first["files"].empty());
    for (const auto& f : first["files"]) CHECK(f["sha256"].get<std::string>().size() == 64);
  }
}

TEST_CASE("sweep results do not depend on the job count") {
  const auto a = scratch("jobs1"), b = scratch("jobs3");
  const std::string base = " --config " + kConfigs +
                           "t1_cubic_nls.yaml --set simulate.t_end=5 --set simulate.eps=[0.1,0.05,0.02] --out-dir ";
  REQUIRE(run("simulate" + base + a.string() + " --jobs 1") == 0);
  REQUIRE(run("simulate" + base + b.string() + " --jobs 3") == 0);
  auto ma = read_json(a / "manifest.json"), mb = read_json(b / "manifest.json");
  CHECK(ma["files"] == mb["files"]);
}

TEST_CASE("echoed config parses back to the resolved config") {
  const auto out = scratch("echo");
  REQUIRE(run("spectrum --config " + kConfigs + "t1_cubic_nls.yaml --seed 99 --set lattice.k_enum=6 --out-dir " +
              out.string()) == 0);
  const auto m = read_json(out / "manifest.json");
  const auto echoed = lnf::parse_config(m["config"].dump(), "manifest", true);
  auto expected = lnf::load_config(kConfigs + "t1_cubic_nls.yaml", {"lattice.k_enum=6"});
  expected.seed = 99;
  expected.output.dir = out.string();
  CHECK(echoed == expected);
  CHECK(m["seeds"]["master"] == 99);
}

TEST_CASE("every subcommand writes its artifacts") {
  const std::map<std::string, std::vector<std::string>> expected{
      {"spectrum", {"spectrum.csv", "bands.json"}},
      {"clusters", {"clusters.csv", "clusters.json"}},
      {"measure", {"measure.csv"}},
      {"normalform", {"normalform.json", "z0.jsonl", "zb.jsonl", "z2.jsonl", "zge3.jsonl", "ledger.jsonl"}},
  };
  for (const auto& [sub, files] : expected) {
    const auto out = scratch("art_" + sub);
    REQUIRE(run(sub + " --config " + kConfigs + "t1_cubic_nls.yaml --out-dir " + out.string()) == 0);
    for (const auto& f : files) CHECK_MESSAGE(fs::exists(out / f), sub << ": " << f);
  }
  const auto out = scratch("art_spectrum_header");
  REQUIRE(run("spectrum --config " + kConfigs + "t1_cubic_nls.yaml --out-dir " + out.string()) == 0);
  std::ifstream in(out / "spectrum.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "ax1,omega");
}
