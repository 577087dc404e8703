// everett-lab: run one configured experiment and write its tables and report.
//
//   everett-lab run <config.json> [--output-dir D] [--seed S]
//
// Output directory precedence: --output-dir, EVERETT_LAB_OUTPUT_DIR, the
// config's output_dir, then ./everett-out.
// Exit codes: 0 all checks pass, 1 a check failed, 2 usage, 3 capacity.

#include "everett/experiment.hpp"
#include "everett/hilbert.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitPass = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCapacity = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for unitary measurement chains and branch statistics"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run_cmd->add_option("config", config_path, "Config file")->required();
  run_cmd->add_option("--output-dir", output_dir, "Output directory");
  run_cmd->add_option("--seed", seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    auto config = everett::lab::load_config(config_path);
    if (seed) config.seed = *seed;
    if (output_dir) {
      config.output_dir = *output_dir;
    } else if (const char* env = std::getenv("EVERETT_LAB_OUTPUT_DIR"); env && *env) {
      config.output_dir = env;
    }

    const auto report = everett::lab::run(config);
    for (const auto& c : report.checks)
      std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " value=" << c.value << " threshold=" << c.threshold
                << '\n';
    std::cout << "report: " << (config.output_dir / "report.json").string() << '\n';
    return report.passed() ? kExitPass : kExitCheckFailed;
  } catch (const everett::lab::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const everett::CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return kExitCapacity;
  } catch (const everett::ContractError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
}
