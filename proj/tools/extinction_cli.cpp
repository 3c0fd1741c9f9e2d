#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "extinction/extinction.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "TOML run configuration")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory (overrides output.dir)");
  sub->add_option("--seed", o.seed, "master seed (overrides sim.seed)");
  sub->add_option("--threads", o.threads, "worker threads (0: hardware concurrency)")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extinction-time bounds and Monte Carlo checks for singular stochastic diffusion"};
  app.set_version_flag("--version", extinction::kToolVersion);
  app.require_subcommand(1);
  Options o;
  auto* bounds = app.add_subcommand("bounds", "evaluate the analytic bounds");
  auto* simulate = app.add_subcommand("simulate", "run the Monte Carlo ensemble");
  auto* verify = app.add_subcommand("verify", "compare bounds with ensemble estimates");
  auto* propcheck = app.add_subcommand("propcheck", "run the invariant suite for this config");
  for (auto* sub : {bounds, simulate, verify, propcheck}) add_common(sub, o);
  CLI11_PARSE(app, argc, argv);

  const int threads = o.threads > 0 ? o.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  try {
    const auto d = extinction::derive_file(o.config, o.seed, o.out);
    if (bounds->parsed()) {
      std::cout << extinction::bounds_summary(extinction::cmd_bounds(d));
    } else if (simulate->parsed()) {
      std::cout << extinction::simulation_summary(extinction::cmd_simulate(d, threads));
    } else if (verify->parsed()) {
      const auto rep = extinction::cmd_verify(d, threads);
      std::cout << extinction::comparison_summary(rep);
      if (rep.any_violated()) return 3;
    } else {
      const auto rep = extinction::cmd_propcheck(d, threads);
      for (const auto& r : rep.results)
        std::cout << (r.pass ? "pass " : "FAIL ") << r.name << " = " << extinction::g17(r.value) << "\n";
      if (!rep.all_pass()) return 4;
    }
  } catch (const extinction::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const extinction::CaseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
