#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mss/analysis.hpp"

namespace mss {

/// Everything one MSS run needs. Unset optionals take model defaults through the accessors.
struct ExperimentConfig {
  std::string name = "run";
  std::string model = "lorenz";  // lorenz | ks
  LorenzParameters lorenz{10.0, 40.0, 8.0 / 3.0};
  KsParameters ks{};
  std::string objective = "mean";  // ks: mean | mean_square

  std::optional<double> spinup;
  double window = 200.0;  // T
  double segment = 1.0;   // Delta T
  std::optional<double> step;

  SolveConfig solver{};
  std::optional<double> gamma;

  bool precondition = true;
  std::optional<Index> rank;
  int cycles = 2;

  std::string spectrum = "none";  // none | dense | lanczos | auto
  bool picard = false;
  bool truncated = false;
  Index dense_cap = 2000;

  std::uint64_t seed = 1;
  std::string output = "out";
  int workers = 1;

  double fd_delta = 0.0;  // 0: model default
  int fd_samples = 10;
  double fd_horizon = 2000.0;

  std::string sweep_axis;
  std::vector<double> sweep_values;

  /// Checks every invariant; throws ConfigError.
  void validate() const;

  double parameter() const { return model == "ks" ? ks.c : lorenz.rho; }
  Index segments() const;
  Index dimension() const { return model == "ks" ? ks.nodes : 3; }

  // Model defaults for the unset optionals.
  double step_size() const;
  double spinup_span() const;
  double regularization() const;
  Index retained_modes() const;
  double fd_step() const;
};

/// Parses the INI file, applies `overrides` ("section.key" -> value) and validates.
/// Unknown sections or keys are rejected.
ExperimentConfig load_config(const std::string& path, const std::map<std::string, std::string>& overrides = {});
ExperimentConfig config_from_text(const std::string& ini, const std::map<std::string, std::string>& overrides = {});

/// Maps a sweep axis name (T, N, gamma, l, c, rho) to its "section.key".
std::string axis_key(const std::string& axis);
/// Sets one sweep axis on an already parsed config.
void set_axis(ExperimentConfig& config, const std::string& axis, double value);

/// Worker count from MSS_WORKERS when set, else the configured value.
int effective_workers(int configured);

std::shared_ptr<const DynamicalSystem> make_system(const ExperimentConfig& config, double parameter);
std::shared_ptr<const DynamicalSystem> make_system(const ExperimentConfig& config);
std::unique_ptr<Objective> make_objective(const ExperimentConfig& config);
/// Seeded initial condition; lorenz: (1,1,1) plus a uniform perturbation in (-0.1, 0.1), ks: uniform (0, 1).
Vector initial_condition(const ExperimentConfig& config, std::uint64_t seed);

/// A failure tagged with the pipeline stage and the exit status it maps to.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what, int exit_code)
      : Error(stage + ": " + what), stage_(stage), exit_code_(exit_code) {}
  const std::string& stage() const { return stage_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int divergence = 3;
inline constexpr int not_converged = 4;
}  // namespace exit_code

/// The pieces every subcommand needs: spun-up trajectory, rhs and (optional) preconditioner.
struct Pipeline {
  ExperimentConfig config;
  std::shared_ptr<const DynamicalSystem> system;
  std::unique_ptr<Objective> objective;
  std::unique_ptr<Trajectory> trajectory;
  CostLedger ledger;
  SegmentStack b;
  std::unique_ptr<BlockDiagPreconditioner> preconditioner;
  LedgerSnapshot preconditioner_cost;
};

/// Spin-up, trajectory, rhs and preconditioner build.
std::unique_ptr<Pipeline> prepare_pipeline(const ExperimentConfig& config);

struct ExperimentSummary {
  std::string name;
  std::string model;
  double parameter = 0.0;
  double window = 0.0;
  double segment = 0.0;
  Index segments = 0;
  Index dimension = 0;
  double step = 0.0;
  double gamma = 0.0;
  std::string mode;
  Index rank = 0;
  int cycles = 0;

  double sensitivity = 0.0;
  double time_average = 0.0;
  int iterations = 0;
  bool converged = false;
  double final_residual = 1.0;
  double final_true_residual = 1.0;

  LedgerSnapshot preconditioner_cost;
  LedgerSnapshot solve_cost;
  std::int64_t recover_cost = 0;
  CostPrediction predicted;

  std::optional<double> kappa_schur;
  std::optional<double> kappa_preconditioned;
  std::optional<double> mu_max_schur;
  std::optional<double> mu_max_preconditioned;

  std::string status = "ok";
  double seconds = 0.0;  // printed, never written to CSV

  std::int64_t measured_total() const { return preconditioner_cost.total() + solve_cost.total(); }
};

struct ExperimentResult {
  ExperimentSummary summary;
  SolveReport report;
  CheckpointStack v;
};

/// Full MSS pipeline; writes <output>/<name>_*.csv and gnuplot scripts when write_files is set.
/// Non-convergence is reported in the summary, other failures throw StageError.
ExperimentResult run_experiment(const ExperimentConfig& config, bool write_files = true);

/// Spectra of S and (when preconditioned) of M S and gamma I + M S.
std::vector<SpectrumReport> run_spectrum(const ExperimentConfig& config, bool write_files = true);

struct PicardResult {
  PicardTable table;
  std::vector<double> sensitivity_by_rank;  // index l = number of retained modes
};

/// Dense Picard table and truncated-SVD sensitivity curve.
PicardResult run_picard(const ExperimentConfig& config, bool write_files = true);

struct FdEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::vector<double> samples;
  std::vector<std::string> failures;
};

using SystemFactory = std::function<std::shared_ptr<const DynamicalSystem>(double parameter)>;
using InitialStates = std::function<Vector(int sample)>;

/// Central differences of long-time averages, (Jbar(s + ds) - Jbar(s - ds)) / (2 ds), one per
/// sample, each from its own initial state and spun up separately at both parameter values.
/// Diverging samples are recorded in `failures`; throws if every sample fails.
FdEstimate finite_difference_reference(const SystemFactory& factory, const Objective& objective, double parameter,
                                       double delta, int samples, double spinup, double horizon, double step,
                                       const InitialStates& initial, int workers = 1);
FdEstimate finite_difference_reference(const ExperimentConfig& config, bool write_files = true);

struct SweepRow {
  double value = 0.0;
  std::optional<ExperimentSummary> summary;
  std::string error;
};

/// One run per value of `axis`; failures are recorded per row and the sweep continues.
std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::string& axis, const std::vector<double>& values,
                            bool write_files = true);

void write_summary_csv(const std::vector<ExperimentSummary>& rows, const std::string& path);
void write_sweep_csv(const std::string& axis, const std::vector<SweepRow>& rows, const std::string& path);
std::string summary_text(const ExperimentSummary& s);

}  // namespace mss
