#pragma once

#include "roughsync/sync.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace roughsync {

/// Thresholds applied by the verify command.
struct Tolerances {
    double inverse_jacobian = 1e-3;
    double frechet_min_order = 1.8;
    double consistency_min_order = 0.5;
};

/// Plain-text key-value configuration with sections. Defaults reproduce the
/// double-well experiment: H = 0.7, [0, 1] with 4096 steps, (Y^1_0, Y^2_0) = (1, 3),
/// kappa in {0, 10, 100, 1000}, seeds 1..10.
struct ExperimentConfig {
    double hurst = 0.7;
    double a = 0.0;
    double b = 1.0;
    std::size_t n_steps = 4096;
    std::string model = "double_well_sin";
    std::optional<double> c_sigma;  // overrides the model's declared C_sigma
    std::vector<double> y1{1.0};
    std::vector<double> y2{3.0};
    std::vector<double> kappas{0.0, 10.0, 100.0, 1000.0};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    double lambda = 0.5;
    double generic_c = 2.0;
    std::optional<double> p;  // driver norm exponent; derived from hurst when absent
    double window_fraction = 0.2;
    YoungScheme young_scheme = YoungScheme::Milstein;
    double blowup_cap = 1e8;
    Tolerances tolerances;
    std::string output_dir = "out";
    std::size_t jobs = 1;

    /// p = 1/(H - e): e = min(0.15, (H - 1/2)/2) in the Young regime (p < 2),
    /// e = min(0.05, (H - 1/3)/2) in the rough regime (p < 3).
    double effective_p() const;
    TimeGrid grid() const { return TimeGrid(a, b, n_steps); }
    /// Throws ValidationError on any invariant violation (unknown model, kappa < 0,
    /// repeated seeds, window fraction outside [0, 1), ...).
    void validate() const;
};

/// Parses the key-value format; unknown sections or keys are errors, a
/// [manifest] section is ignored. The result is validated.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical text form: every result-affecting field with shortest round-trip
/// numbers. The [output] settings (directory, jobs) are excluded, so the text and
/// its hash identify the results. parse_config of this text reproduces the config
/// up to those settings.
std::string to_config_text(const ExperimentConfig& config);
/// SHA-1 of "blob <size>\0<text>" over the canonical text, as git computes it.
std::string config_hash(const ExperimentConfig& config);

/// Model, driver settings and initial data of a config.
SweepSetup make_setup(const ExperimentConfig& config);

struct CommandResult {
    std::vector<std::filesystem::path> files;  // files written, in write order
    std::vector<CheckReport> reports;
    bool passed = true;
};

/// fBm path CSV per seed (plus the area CSV in the rough regime) and a manifest.
CommandResult cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out);
/// One coupled run per seed at `kappa`: trajectory CSV and report per run, a
/// summary table and a manifest.
CommandResult cmd_simulate(const ExperimentConfig& config, double kappa, const std::filesystem::path& out);
/// kappa x seed sweep: table, per-run artifacts, plot data and a manifest.
CommandResult cmd_sweep(const ExperimentConfig& config, const std::filesystem::path& out);
/// Runs every certificate on the config; writes verify_report.txt. passed is
/// false when any check fails.
CommandResult cmd_verify(const ExperimentConfig& config, const std::filesystem::path& out);

}  // namespace roughsync
