// safegp command line: runs one experiment and writes CSVs plus a manifest.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "safegp/config.hpp"
#include "safegp/errors.hpp"
#include "safegp/experiments.hpp"
#include "safegp/log.hpp"
#include "verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitCertificate = 2;
constexpr int kExitConfig = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> tau;
  std::optional<double> kdelta;
};

safegp::ExperimentConfig resolve(safegp::ExperimentKind kind, const Overrides& o) {
  safegp::ExperimentConfig cfg = o.config.empty() ? safegp::ExperimentConfig::defaults(kind)
                                                  : safegp::ExperimentConfig::load(o.config);
  if (cfg.experiment != kind) {
    throw safegp::ConfigError("config '" + o.config + "' describes experiment '" +
                              safegp::to_string(cfg.experiment) + "', not '" +
                              safegp::to_string(kind) + "'");
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.tau) cfg.set_tau(*o.tau);
  if (o.kdelta) cfg.k_delta = *o.kdelta;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "RNG seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--tau", o.tau, "grid spacing in z; zdot spacing is 2.5x");
  sub->add_option("--kdelta", o.kdelta, "confidence multiplier");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe learning with GP barrier certificates"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  Overrides o;
  CLI::App* tracking = app.add_subcommand("tracking", "GP-augmented flatness tracking");
  CLI::App* barrier = app.add_subcommand("barrier-learning", "certificate expansion loop");
  CLI::App* example1 = app.add_subcommand("example1", "two-state barrier vs Lyapunov check");
  CLI::App* verify = app.add_subcommand("verify", "run the invariant suites");
  for (CLI::App* sub : {tracking, barrier, example1, verify}) add_common(sub, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (verbose) safegp::log::set_min_level(safegp::log::Level::debug);

  try {
    if (verify->parsed()) {
      safegp::tools::VerifyInputs in;
      if (o.seed) in.seed = *o.seed;
      if (o.tau) in.tau = *o.tau;
      if (o.kdelta) in.k_delta = *o.kdelta;
      if (!o.config.empty()) in.config = o.config;
      return safegp::tools::run_invariant_suites(in, std::cout) ? kExitOk : kExitFailure;
    }
    safegp::ExperimentKind kind = safegp::ExperimentKind::tracking;
    if (barrier->parsed()) kind = safegp::ExperimentKind::barrier_learning;
    if (example1->parsed()) kind = safegp::ExperimentKind::example1;
    const safegp::ExperimentConfig cfg = resolve(kind, o);
    const nlohmann::json summary = safegp::run_and_emit(cfg);
    std::cout << summary.dump(2) << "\n";
    std::cerr << "wrote " << cfg.output_dir.string() << "\n";
    return kExitOk;
  } catch (const safegp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const safegp::CertificateAbort& e) {
    std::cerr << "certificate verification failed: " << e.what() << "\n";
    return kExitCertificate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
