#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace safegp::tools {

struct VerifyInputs {
  std::uint64_t seed = 7;
  std::optional<double> tau;
  std::optional<double> k_delta;
  std::optional<std::string> config;  // barrier-learning config for the certificate checks
};

/// Runs the invariant suites, one line per check. True when all pass.
bool run_invariant_suites(const VerifyInputs& in, std::ostream& out);

}  // namespace safegp::tools
