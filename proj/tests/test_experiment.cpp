#include "everett/experiment.hpp"
#include "everett/hilbert.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace everett::lab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("everett_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig config(json doc, const fs::path& out) {
  auto c = parse_config(doc);
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("strict config parsing") {
  CHECK_THROWS_AS(parse_config(json::array()), UsageError);
  CHECK_THROWS_AS(parse_config(json{{"experiment", "nope"}}), UsageError);
  CHECK_THROWS_AS(parse_config(json{{"experiment", "chebyshev"}, {"extra", 1}}), UsageError);
  CHECK_THROWS_AS(parse_config(json{{"experiment", "chebyshev"}, {"parameters", {{"N", 10}, {"rho_u", 0.3}}}}),
                  UsageError);
  CHECK_THROWS_AS(parse_config(json{{"experiment", "frequency"}, {"parameters", {{"N", 10}, {"rho_u", 1.3}}}}),
                  UsageError);
  CHECK_THROWS_AS(parse_config(json{{"experiment", "frequency"}, {"parameters", {{"N", 1.5}, {"rho_u", 0.3}}}}),
                  UsageError);
  CHECK_THROWS_AS(parse_config(json{{"experiment", "wavepacket"}, {"parameters", {{"omega", 1.0}, {"force", 0.1}}}}),
                  UsageError);
  CHECK_THROWS_AS(parse_config(json{{"experiment", "envariance"}, {"seed", -1}}), UsageError);
  try {
    parse_config(json{{"experiment", "estimator"}, {"parameters", {{"N", 10}, {"rho_u", 0.3}, {"windw", 0.1}}}});
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("windw") != std::string::npos);
  }
}

TEST_CASE("defaults are filled in") {
  const auto c = parse_config(json{{"experiment", "wavepacket"}});
  CHECK(c.parameters["n_points"] == 512);
  CHECK(c.parameters["dt"] == 0.01);
  CHECK(c.experiment == ExperimentKind::wavepacket);
}

TEST_CASE("chebyshev run") {
  const auto dir = scratch("cheb");
  const auto r = run(config(json{{"experiment", "chebyshev"},
                                 {"parameters", {{"N", 1000}, {"rho_u", 0.3}, {"delta_z", 0.1}}}}, dir));
  CHECK(r.passed());
  CHECK(r.summary["holds"] == true);
  CHECK(r.summary["bound"].get<double>() == doctest::Approx(0.084));
  const auto rep = json::parse(slurp(dir / "report.json"));
  REQUIRE(rep["outputs"].size() == 1);
  const auto& f = rep["outputs"][0];
  CHECK(f["sha256"] == sha256_hex(slurp(dir / f["path"].get<std::string>())));
}

TEST_CASE("envariance run with equal amplitudes") {
  const auto r = run(config(json{{"experiment", "envariance"}, {"parameters", {{"phase", 0.9}}}, {"seed", 3}},
                            scratch("env")));
  CHECK(r.passed());
  CHECK(r.summary["max_distance"].get<double>() <= 1e-10);
}

TEST_CASE("same config and seed give byte-identical outputs") {
  const json doc{{"experiment", "measure_chain"}, {"parameters", {{"outcomes", 3}, {"env_qubits", 6}}}, {"seed", 42}};
  const auto a = scratch("det_a"), b = scratch("det_b");
  const auto ra = run(config(doc, a));
  const auto rb = run(config(doc, b));
  REQUIRE(ra.outputs.size() == rb.outputs.size());
  for (std::size_t i = 0; i < ra.outputs.size(); ++i) {
    CHECK(ra.outputs[i].sha256 == rb.outputs[i].sha256);
    CHECK(slurp(a / ra.outputs[i].path) == slurp(b / rb.outputs[i].path));
  }
  const auto rc = run(config(json{{"experiment", "measure_chain"}, {"parameters", {{"outcomes", 3}, {"env_qubits", 6}}},
                                  {"seed", 43}}, scratch("det_c")));
  CHECK(rc.outputs[0].sha256 != ra.outputs[0].sha256);
}

TEST_CASE("figure table") {
  const auto dir = scratch("fig");
  const auto path = emit_figure_table(config(json{{"experiment", "frequency"}, {"parameters", {{"N", 1000}, {"rho_u", 0.3}}}}, dir));
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  CHECK(line == "z,rho_z_u,rho_dz_z_u");
  double best_z = -1.0, best = -1.0, prev_z = 0.0, prev = 0.0, integral = 0.0;
  bool first = true;
  while (std::getline(in, line)) {
    double z, r, h;
    char c1, c2;
    std::istringstream row(line);
    row >> z >> c1 >> r >> c2 >> h;
    if (r > best) best = r, best_z = z;
    if (!first) integral += 0.5 * (r + prev) * (z - prev_z);
    first = false;
    prev_z = z;
    prev = r;
  }
  CHECK(best_z == doctest::Approx(0.3));
  CHECK(std::abs(integral - 1.0) < 1e-6);
  CHECK_THROWS_AS(emit_figure_table(parse_config(json{{"experiment", "chebyshev"},
                                                      {"parameters", {{"N", 10}, {"rho_u", 0.3}, {"delta_z", 0.1}}}})),
                  UsageError);
}

TEST_CASE("capacity errors surface from the core") {
  CHECK_THROWS_AS(run(config(json{{"experiment", "frequency"}, {"parameters", {{"N", 20000000}, {"rho_u", 0.3}}}},
                             scratch("cap"))),
                  everett::CapacityError);
}

TEST_CASE("atomic writes leave no temporary files") {
  const auto dir = scratch("atomic");
  fs::create_directories(dir);
  write_atomic(dir / "a.txt", "hello");
  CHECK(slurp(dir / "a.txt") == "hello");
  CHECK_FALSE(fs::exists(dir / "a.txt.tmp"));
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("cli exit codes") {
  const std::string cli = EVERETT_CLI_PATH;
  if (cli.empty()) return;
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  auto exit_code = [&](const json& doc, const std::string& extra = {}) {
    write_atomic(dir / "c.json", doc.dump());
    const auto cmd = cli + " run " + (dir / "c.json").string() + " --output-dir " + (dir / "out").string() + extra +
                     " > /dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };
  CHECK(exit_code(json{{"experiment", "chebyshev"}, {"parameters", {{"N", 1000}, {"rho_u", 0.3}, {"delta_z", 0.1}}}}) == 0);
  CHECK(exit_code(json{{"experiment", "chebyshev"}, {"parameters", {{"N", 1000}}}}) == 2);
  CHECK(exit_code(json{{"experiment", "frequency"}, {"parameters", {{"N", 20000000}, {"rho_u", 0.3}}}}) == 3);
  CHECK(exit_code(json{{"experiment", "estimator"},
                       {"parameters", {{"N", 10}, {"rho_u", 0.3}, {"min_window_mass", 0.99}}}}) == 1);
  CHECK(exit_code(json{{"experiment", "envariance"}}, " --seed 5") == 0);
  CHECK(fs::exists(dir / "out" / "report.json"));
}

}
