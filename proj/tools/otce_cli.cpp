#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "otce/scenario.hpp"

namespace fs = std::filesystem;
using namespace otce;

namespace {

ledger::Chain read_chain(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open " + path.string());
  return ledger::load_chain(in);
}

/// Seed recorded by a previous run, if metrics.txt sits next to the dump.
std::optional<std::uint64_t> recorded_seed(const fs::path& dir) {
  std::ifstream in(dir / "metrics.txt");
  for (std::string line; std::getline(in, line);)
    if (line.starts_with("run.seed=")) return std::stoull(line.substr(9));
  return std::nullopt;
}

int cmd_run(const fs::path& scenario_path, const fs::path& out, std::optional<std::uint64_t> seed,
            std::optional<Tick> max_ticks) {
  auto s = scenario::load_scenario(scenario_path);
  auto r = scenario::run_scenario(s, {seed, max_ticks});
  if (seed) s.seed = *seed;
  scenario::write_outputs(r, s, out);
  std::cout << r.metrics.to_text();
  return 0;
}

int cmd_verify(const fs::path& dump) {
  auto chain = read_chain(dump);
  if (auto bad = ledger::verify_chain(chain)) {
    std::cout << "chain invalid: first bad height " << *bad << '\n';
    return 1;
  }
  std::cout << "chain ok: " << chain.size() << " blocks, height " << chain.back().height << '\n';
  return 0;
}

int cmd_replay(const fs::path& dump, std::optional<fs::path> scenario_path, std::optional<std::uint64_t> seed) {
  const auto dir = dump.parent_path().empty() ? fs::path(".") : dump.parent_path();
  if (!scenario_path) {
    scenario_path = dir / "scenario.yaml";
    if (!fs::exists(*scenario_path))
      throw Error("missing-scenario", "no --scenario given and no scenario.yaml next to the dump");
    if (!seed) seed = recorded_seed(dir);
  }
  auto s = scenario::load_scenario(*scenario_path);
  if (seed) s.seed = *seed;
  auto chain = read_chain(dump);
  auto rep = scenario::replay_chain(chain, s);
  if (rep.bad_height) {
    std::cout << "chain invalid: first bad height " << *rep.bad_height << '\n';
    return 1;
  }
  if (rep.divergence) {
    std::cout << "replay diverged at height " << *rep.divergence << '\n';
    return 1;
  }
  std::cout << "replay ok: height " << chain.back().height << '\n' << rep.otce_dump << rep.did_dump;
  for (const auto& [name, text] : {std::pair{"otce.dump", rep.otce_dump}, std::pair{"did.dump", rep.did_dump}}) {
    std::ifstream in(dir / name);
    if (!in) continue;
    std::stringstream buf;
    buf << in.rdbuf();
    if (buf.str() != text) {
      std::cout << name << " differs from replayed state\n";
      return 1;
    }
    std::cout << name << " matches\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OTCE metaverse simulator"};
  app.require_subcommand(1);

  fs::path scenario_path, out_dir, dump;
  std::optional<std::uint64_t> seed;
  std::optional<Tick> max_ticks;
  std::optional<fs::path> replay_scenario;

  auto* run = app.add_subcommand("run", "Run a scenario and write its outputs");
  run->add_option("--scenario", scenario_path, "Scenario file")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed-override", seed, "Replace the scenario seed");
  run->add_option("--max-ticks", max_ticks, "Tick budget per simulated run");

  auto* verify = app.add_subcommand("verify-chain", "Check hash links and block hashes of a chain dump");
  verify->add_option("--dump", dump, "chain.dump file")->required();

  auto* replay = app.add_subcommand("replay", "Re-execute a chain dump and compare contract state");
  replay->add_option("--dump", dump, "chain.dump file")->required();
  replay->add_option("--scenario", replay_scenario, "Scenario (defaults to scenario.yaml next to the dump)");
  replay->add_option("--seed-override", seed, "Seed the run used");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scenario_path, out_dir, seed, max_ticks);
    if (*verify) return cmd_verify(dump);
    if (*replay) return cmd_replay(dump, replay_scenario, seed);
  } catch (const scenario::ScenarioError& e) {
    for (const auto& p : e.problems()) std::cerr << "error: " << p << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
