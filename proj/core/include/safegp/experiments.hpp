#pragma once

#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "safegp/barrier.hpp"
#include "safegp/config.hpp"
#include "safegp/emit.hpp"
#include "safegp/gp.hpp"

namespace safegp {

/// The initial certificate could not be verified; the run cannot start.
class CertificateAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Tracking

struct TrackingRun {
  RunRecord record;
  std::vector<GpModel> gps;  // empty without GP
  double rms_error = 0.0;             // over the whole run
  double rms_error_final_half = 0.0;  // over the second half
  std::vector<double> gp_step_ms;     // per-step GP inference + update wall time
  std::size_t max_gp_points = 0;
  std::size_t gp_adds = 0;
  std::size_t gp_evictions = 0;
};

struct TrackingResult {
  TrackingRun with_gp;
  TrackingRun without_gp;
};

TrackingRun run_tracking_once(const ExperimentConfig& cfg, bool use_gp);
TrackingResult run_tracking(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Barrier learning

/// Lattice enclosing {h_mu >= 0} for every mu >= mu_min.
StateGrid barrier_grid(const ExperimentConfig& cfg);

struct MuTraceEntry {
  int iteration = 0;
  std::size_t step = 0;
  double mu = 0.0;
  double volume = 0.0;
  int evaluations = 0;
  bool incumbent_failed = false;
};

struct Algorithm1Result {
  BarrierCertificate initial;
  BarrierCertificate final_cert;
  std::vector<MuTraceEntry> trace;
  RunRecord record;
  CoverageSet coverage;  // final certificate
  GpModel gp{KernelHyper{}, 1};
  bool converged = false;
  int iterations = 0;

  std::size_t steps = 0;
  std::size_t tube_violations = 0;
  std::size_t unsafe_steps = 0;          // h < -1e-3 with the residual inside the tube
  std::size_t unsafe_steps_any = 0;      // h < -1e-3 regardless of the tube
  std::size_t filter_active_steps = 0;
  std::size_t infeasible_steps = 0;
  double min_h = 0.0;
  double min_h_in_tube = 0.0;
};

Algorithm1Result run_algorithm1(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Example 1

QuadraticField example1_lyapunov();
QuadraticField example1_barrier();

struct Example1Result {
  std::size_t grid_cells = 0;
  std::size_t lyapunov_cells = 0;      // V* <= 1
  std::size_t barrier_cells = 0;       // h* >= 0
  std::size_t lyapunov_outside = 0;    // V* <= 1 but h* < 0
  double min_h_on_lyapunov_set = 0.0;  // min of h* over grid cells with V* <= 1
  int trajectories = 0;
  int crossings = 0;  // trajectories reaching h* < -1e-3
  double min_h = 0.0;
  RunRecord starts;   // per trajectory summary
  RunRecord traces;   // sampled h* traces of the first trajectories
};

Example1Result run_example1(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------

/// Runs the configured experiment and writes CSVs plus manifest into cfg.output_dir.
/// Returns the summary stored in the manifest.
nlohmann::json run_and_emit(const ExperimentConfig& cfg);

}  // namespace safegp
