#pragma once

#include "roughsync/flows.hpp"
#include "roughsync/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace roughsync {

/// Transformed states z_i and physical states y_i = phi(t, z_i) at one time.
struct CoupledState {
    Vec z1;
    Vec z2;
    Vec y1;
    Vec y2;
    std::size_t index = 0;
};

/// Initial data (Y^1_a, Y^2_a).
struct InitialPair {
    Vec y1;
    Vec y2;
};

/// Solver and diagnostic settings shared by the sync pipeline.
struct SyncOptions {
    FlowOptions flow;
    BoundConstants constants;     // p of the driver norm and the generic constant C
    double lambda = 0.5;          // in (0, 1)
    double window_fraction = 0.2; // sync error over [a + w(b - a), b]
};

/// One coupled run. zbar = (z1 + z2) / 2 and ztilde = (z1 - z2) / 2 are the
/// integrated variables; z1 = zbar + ztilde and z2 = zbar - ztilde exactly.
struct SyncRunResult {
    SyncRunResult(double kappa, const TimeGrid& grid, std::size_t m);

    double kappa;
    GridPath y1, y2;
    GridPath z1, z2;
    GridPath zbar, ztilde;
    std::optional<GridPath> ybar;  // synchronized solution, filled by callers that solve it

    std::string driver_ref;
    std::size_t rk_substeps = 1;
    std::size_t n_greedy = 0;  // greedy count at gamma = lambda / (32 C_sigma C)
    double gamma = 0.0;
    double sync_error = 0.0;   // sup over the window of |Y^1 - Y^2|
    std::size_t window_start = 0;
    std::vector<CheckReport> reports;
};

/// Two independent solves: Euler drift followed by one flow step per grid step.
std::pair<GridPath, GridPath> solve_uncoupled(const DriftSpec& f, const DriftSpec& g,
                                              const VectorFieldSpec& sigma, const Driver& driver,
                                              const InitialPair& y0, const FlowOptions& options = {});

/// Right-hand side of the transformed random ODE for both subsystems:
///   F_1 = d psi/dh(a, phi(t, z1)) f(phi(t, z1)) + kappa (z2 - z1)
///   F_2 = d psi/dh(a, phi(t, z2)) g(phi(t, z2)) - kappa (z2 - z1)
/// at time t_index + theta steps; fresh flow solves on [a, t] each call.
class CoupledSystem {
public:
    CoupledSystem(DriftSpec f, DriftSpec g, VectorFieldSpec sigma, const Driver& driver, double kappa,
                  FlowOptions options = {});

    const FlowKernel& kernel() const noexcept { return kernel_; }
    double kappa() const noexcept { return kappa_; }

    /// Returns (F_1, F_2); y1 and y2 receive phi(t, z1) and phi(t, z2) when given.
    std::pair<Vec, Vec> rhs(const Vec& z1, const Vec& z2, std::size_t t_index, double theta,
                            Vec* y1 = nullptr, Vec* y2 = nullptr) const;
    /// phi(t_index + theta, z).
    Vec physical(const Vec& z, std::size_t t_index, double theta = 0.0) const;

private:
    Vec transformed_drift(const DriftSpec& drift, const Vec& z, std::size_t t_index, double theta,
                          Vec* y) const;

    DriftSpec f_;
    DriftSpec g_;
    double kappa_;
    FlowKernel kernel_;
};

/// coupled_rhs at a grid time (theta = 0); fills state.y1 and state.y2.
std::pair<Vec, Vec> coupled_rhs(CoupledState& state, const DriftSpec& f, const DriftSpec& g,
                                const VectorFieldSpec& sigma, const Driver& driver, double kappa,
                                const FlowOptions& options = {});

/// Classical RK4 on (zbar, ztilde) with max(1, ceil(2 kappa h)) substeps per grid
/// step; Y^i = phi(t, Z^i) at every grid point. Also fills the greedy count and
/// the sync error.
SyncRunResult solve_coupled(const ModelSpec& model, const Driver& driver, const InitialPair& y0,
                            double kappa, const SyncOptions& options = {});

/// dYbar = (f + g)/2 (Ybar) dt + sigma(Ybar) dB from (Y^1_a + Y^2_a)/2, same scheme
/// as solve_uncoupled.
GridPath solve_synchronized(const DriftSpec& f, const DriftSpec& g, const VectorFieldSpec& sigma,
                            const Driver& driver, const InitialPair& y0, const FlowOptions& options = {});

/// Greedy partition of the driver at gamma = lambda / (32 C_sigma C).
GreedyPartition sync_greedy_partition(const VectorFieldSpec& sigma, const Driver& driver,
                                      const SyncOptions& options);

/// sup over [a + w(b - a), b] of |Y^1 - Y^2|, and the first window index.
std::pair<double, std::size_t> window_sup_distance(const GridPath& y1, const GridPath& y2,
                                                   double window_fraction);

/// Fits |Y^i_t| <= e^{-delta (t - a)} |Y^i_a| + C (N + 1) for both subsystems.
/// C(delta) is the smallest admissible C for a given delta; the fit takes the
/// largest delta (capped at 1e3) with C(delta) <= 1.1 C(0) + 1e-9 |Y_a|.
/// PASS iff the fit is finite with delta > 0. Reports fitted_delta, fitted_C, radius
/// (R = max_i |Y^i_a| + C (N + 1)).
CheckReport absorbing_bound_check(const SyncRunResult& result, const SyncBoundParams& params);

/// Bound parameters for the decay check: fitted (delta, C), radius and C(f, g).
SyncBoundParams fitted_bound_params(const CheckReport& absorbing, const ModelSpec& model, double lambda);

/// |Ztilde_t| <= e^{-kappa (t - a)} |Y^1_a - Y^2_a| / 2 + (N + 1) (4 kappa)^{-1/2} (1 + lambda/2) C(f, g)
/// at every grid time. Skipped when kappa = 0. Reports min_slack and max_violation.
CheckReport ztilde_decay_check(const SyncRunResult& result, const SyncBoundParams& params);

/// One row of a sweep table.
struct SweepRow {
    double kappa = 0.0;
    std::uint64_t seed = 0;
    double sync_error = 0.0;
    double dist_to_sync_system = 0.0;
    std::size_t n_greedy = 0;
    double ztilde_bound_slack = 0.0;  // NaN when the decay check is skipped
    double fitted_delta = 0.0;
    double fitted_C = 0.0;
    bool bounds_passed = true;
};

/// Everything a sweep needs besides the (kappa, seed) lists.
struct SweepSetup {
    ModelSpec model;
    double hurst = 0.7;
    TimeGrid grid{0.0, 1.0, 4096};
    InitialPair y0;
    SyncOptions options;
};

/// Per-seed driver for a sweep: fBm with the setup's Hurst index, lifted in the rough regime.
Driver make_driver(double hurst, const TimeGrid& grid, std::size_t dim, std::uint64_t seed);

/// Callback receiving each finished run (called from worker threads).
using RunSink = std::function<void(const SyncRunResult&, std::uint64_t seed)>;

/// Runs solve_coupled and solve_synchronized for every (kappa, seed) on up to
/// `jobs` threads. Rows are ordered by (kappa, seed) as listed, independent of
/// scheduling.
std::vector<SweepRow> kappa_sweep(const SweepSetup& setup, const std::vector<double>& kappas,
                                  const std::vector<std::uint64_t>& seeds, std::size_t jobs = 1,
                                  const RunSink& sink = {});

/// Solves the coupled SDE in Y directly: Euler drift with coupling
/// kappa d phi/dy(t, Z^1) (Z^2 - Z^1), Z^i = psi(a, Y^i), followed by a flow step.
std::pair<GridPath, GridPath> solve_coupled_direct(const ModelSpec& model, const Driver& driver,
                                                   const InitialPair& y0, double kappa,
                                                   const FlowOptions& options = {});

/// Sup discrepancy between solve_coupled_direct and solve_coupled on grids of
/// n_steps in `levels` (same fBm realization, decimated from the finest grid).
/// PASS iff the fitted refinement order is > 0.5.
CheckReport doss_sussmann_consistency_check(const SweepSetup& setup, std::uint64_t seed, double kappa,
                                            const std::vector<std::size_t>& levels);

/// CSV "kappa,seed,sync_error,dist_to_sync_system,n_greedy,ztilde_bound_slack,fitted_delta,fitted_C".
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
/// CSV "t,y1_0..,y2_0..,z1_0..,z2_0..,zbar_0..,ztilde_0..[,ybar_0..]".
void write_run_csv(std::ostream& os, const SyncRunResult& result);

}  // namespace roughsync
