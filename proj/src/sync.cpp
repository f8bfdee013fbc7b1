#include "roughsync/sync.hpp"

#include "roughsync/fit.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>
#include <tuple>

namespace roughsync {

namespace {

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

void require_model_dims(const DriftSpec& f, const DriftSpec& g, const VectorFieldSpec& sigma,
                        const Driver& driver, const InitialPair& y0) {
    const std::size_t m = sigma.m();
    if (f.m() != m || g.m() != m)
        throw ValidationError(fmt::format("drift dimensions ({}, {}) differ from the field dimension {}",
                                          f.m(), g.m(), m));
    if (sigma.d() != driver.dim())
        throw ValidationError(fmt::format("field expects a {}-dimensional driver, got {}", sigma.d(),
                                          driver.dim()));
    if (y0.y1.size() != ix(m) || y0.y2.size() != ix(m))
        throw ValidationError("initial data has the wrong dimension");
    if (!y0.y1.allFinite() || !y0.y2.allFinite()) throw ValidationError("initial data must be finite");
}

void require_finite(const Vec& y, const Vec& last, std::size_t index, double cap, const char* what) {
    if (!y.allFinite() || y.norm() > cap)
        throw DivergenceError(fmt::format("{} diverged (|y| above {:g})", what, cap), index, last);
}

/// One drift-plus-flow step: y + h drift, then the flow step of grid step i.
Vec split_step(const FlowKernel& kernel, const Vec& y, const Vec& drift, std::size_t i, double h) {
    return kernel.step_forward(Vec(y + h * drift), i, 1.0, nullptr);
}

GridPath solve_split(const DriftSpec::Fn& drift, const VectorFieldSpec& sigma, const Driver& driver,
                     const Vec& y0, const FlowOptions& options, const char* what) {
    const FlowKernel kernel(sigma, driver, options);
    const TimeGrid& grid = driver.grid();
    const double h = grid.step();
    GridPath out(grid, sigma.m());
    Vec y = y0;
    out.set(0, y);
    for (std::size_t i = 0; i < grid.n_steps(); ++i) {
        const Vec next = split_step(kernel, y, drift(y), i, h);
        require_finite(next, y, i + 1, options.blowup_cap, what);
        y = next;
        out.set(i + 1, y);
    }
    return out;
}

/// Stage time (t_index + theta) normalised so that theta < 1.
std::pair<std::size_t, double> normalise(std::size_t t_index, double theta) {
    if (theta >= 1.0) return {t_index + 1, 0.0};
    return {t_index, theta};
}

double sup_distance(const GridPath& a, const GridPath& b, std::size_t from) {
    double worst = 0.0;
    for (std::size_t k = from; k < a.n_points(); ++k) worst = std::max(worst, (a.vec(k) - b.vec(k)).norm());
    return worst;
}

}  // namespace

SyncRunResult::SyncRunResult(double k, const TimeGrid& grid, std::size_t m)
    : kappa(k), y1(grid, m), y2(grid, m), z1(grid, m), z2(grid, m), zbar(grid, m), ztilde(grid, m) {}

std::pair<GridPath, GridPath> solve_uncoupled(const DriftSpec& f, const DriftSpec& g,
                                              const VectorFieldSpec& sigma, const Driver& driver,
                                              const InitialPair& y0, const FlowOptions& options) {
    require_model_dims(f, g, sigma, driver, y0);
    return {solve_split(f.function(), sigma, driver, y0.y1, options, "uncoupled solve (subsystem 1)"),
            solve_split(g.function(), sigma, driver, y0.y2, options, "uncoupled solve (subsystem 2)")};
}

GridPath solve_synchronized(const DriftSpec& f, const DriftSpec& g, const VectorFieldSpec& sigma,
                            const Driver& driver, const InitialPair& y0, const FlowOptions& options) {
    require_model_dims(f, g, sigma, driver, y0);
    const DriftSpec avg = averaged_drift(f, g);
    return solve_split(avg.function(), sigma, driver, Vec(0.5 * (y0.y1 + y0.y2)), options,
                       "synchronized solve");
}

// ---------------------------------------------------------------------------
// Coupled random ODE

CoupledSystem::CoupledSystem(DriftSpec f, DriftSpec g, VectorFieldSpec sigma, const Driver& driver,
                             double kappa, FlowOptions options)
    : f_(std::move(f)), g_(std::move(g)), kappa_(kappa), kernel_(std::move(sigma), driver, options) {
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
        throw ValidationError(fmt::format("coupling strength must be finite and >= 0, got {}", kappa));
    const std::size_t m = kernel_.field().m();
    if (f_.m() != m || g_.m() != m) throw ValidationError("drift dimensions differ from the field dimension");
}

Vec CoupledSystem::physical(const Vec& z, std::size_t t_index, double theta) const {
    const auto [i, th] = normalise(t_index, theta);
    return kernel_.forward(z, 0, i, th);
}

Vec CoupledSystem::transformed_drift(const DriftSpec& drift, const Vec& z, std::size_t t_index,
                                     double theta, Vec* y) const {
    const auto [i, th] = normalise(t_index, theta);
    const Vec phi = kernel_.forward(z, 0, i, th);
    Mat dpsi;
    kernel_.backward(phi, 0, i, th, &dpsi);
    if (y != nullptr) *y = phi;
    return dpsi * drift(phi);
}

std::pair<Vec, Vec> CoupledSystem::rhs(const Vec& z1, const Vec& z2, std::size_t t_index, double theta,
                                       Vec* y1, Vec* y2) const {
    const Vec coupling = kappa_ * (z2 - z1);
    return {transformed_drift(f_, z1, t_index, theta, y1) + coupling,
            transformed_drift(g_, z2, t_index, theta, y2) - coupling};
}

std::pair<Vec, Vec> coupled_rhs(CoupledState& state, const DriftSpec& f, const DriftSpec& g,
                                const VectorFieldSpec& sigma, const Driver& driver, double kappa,
                                const FlowOptions& options) {
    if (state.index > driver.n_steps()) throw ValidationError("state index outside the grid");
    const CoupledSystem sys(f, g, sigma, driver, kappa, options);
    return sys.rhs(state.z1, state.z2, state.index, 0.0, &state.y1, &state.y2);
}

GreedyPartition sync_greedy_partition(const VectorFieldSpec& sigma, const Driver& driver,
                                      const SyncOptions& options) {
    if (!(options.lambda > 0.0 && options.lambda < 1.0))
        throw ValidationError(fmt::format("lambda must lie in (0, 1), got {}", options.lambda));
    const double gamma = options.lambda / (32.0 * sigma.c_sigma() * options.constants.generic_c);
    return driver.greedy(gamma, options.constants.p);
}

std::pair<double, std::size_t> window_sup_distance(const GridPath& y1, const GridPath& y2,
                                                   double window_fraction) {
    if (!(window_fraction >= 0.0 && window_fraction < 1.0))
        throw ValidationError("window fraction must lie in [0, 1)");
    const TimeGrid& grid = y1.grid();
    const double start = grid.a() + window_fraction * (grid.b() - grid.a());
    std::size_t first = 0;
    while (first < grid.n_steps() && grid.time(first) < start - 1e-12 * (grid.b() - grid.a())) ++first;
    return {sup_distance(y1, y2, first), first};
}

SyncRunResult solve_coupled(const ModelSpec& model, const Driver& driver, const InitialPair& y0,
                            double kappa, const SyncOptions& options) {
    require_model_dims(model.f, model.g, model.sigma, driver, y0);
    const CoupledSystem sys(model.f, model.g, model.sigma, driver, kappa, options.flow);
    const TimeGrid& grid = driver.grid();
    const std::size_t n = grid.n_steps();
    const double h = grid.step();

    SyncRunResult res(kappa, grid, model.sigma.m());
    res.driver_ref = driver.id();
    res.rk_substeps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2.0 * kappa * h)));
    const std::size_t s = res.rk_substeps;
    const double dt = h / static_cast<double>(s);

    // Z_a = psi(a, Y_a) = Y_a.
    Vec zbar = 0.5 * (y0.y1 + y0.y2);
    Vec ztil = 0.5 * (y0.y1 - y0.y2);
    auto eval = [&](const Vec& zb, const Vec& zt, std::size_t i, double theta, Vec* ya, Vec* yb) {
        const auto [f1, f2] = sys.rhs(Vec(zb + zt), Vec(zb - zt), i, theta, ya, yb);
        return std::pair<Vec, Vec>{0.5 * (f1 + f2), 0.5 * (f1 - f2)};
    };
    auto record = [&](std::size_t k, const Vec& ya, const Vec& yb) {
        res.zbar.set(k, zbar);
        res.ztilde.set(k, ztil);
        res.z1.set(k, Vec(zbar + ztil));
        res.z2.set(k, Vec(zbar - ztil));
        res.y1.set(k, ya);
        res.y2.set(k, yb);
    };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t sub = 0; sub < s; ++sub) {
            const double th0 = static_cast<double>(sub) / static_cast<double>(s);
            const double thm = (static_cast<double>(sub) + 0.5) / static_cast<double>(s);
            const double th1 = static_cast<double>(sub + 1) / static_cast<double>(s);
            Vec ya, yb;
            const auto k1 = eval(zbar, ztil, i, th0, sub == 0 ? &ya : nullptr, sub == 0 ? &yb : nullptr);
            if (sub == 0) record(i, ya, yb);
            const auto k2 = eval(Vec(zbar + 0.5 * dt * k1.first), Vec(ztil + 0.5 * dt * k1.second), i, thm,
                                 nullptr, nullptr);
            const auto k3 = eval(Vec(zbar + 0.5 * dt * k2.first), Vec(ztil + 0.5 * dt * k2.second), i, thm,
                                 nullptr, nullptr);
            const auto k4 = eval(Vec(zbar + dt * k3.first), Vec(ztil + dt * k3.second), i, th1, nullptr,
                                 nullptr);
            const Vec last = zbar;
            zbar += dt / 6.0 * (k1.first + 2.0 * k2.first + 2.0 * k3.first + k4.first);
            ztil += dt / 6.0 * (k1.second + 2.0 * k2.second + 2.0 * k3.second + k4.second);
            require_finite(Vec(zbar + ztil), last, i + 1, options.flow.blowup_cap, "coupled solve");
            require_finite(Vec(zbar - ztil), last, i + 1, options.flow.blowup_cap, "coupled solve");
        }
    }
    record(n, sys.physical(Vec(zbar + ztil), n), sys.physical(Vec(zbar - ztil), n));

    const GreedyPartition part = sync_greedy_partition(model.sigma, driver, options);
    res.n_greedy = part.count();
    res.gamma = part.gamma;
    std::tie(res.sync_error, res.window_start) = window_sup_distance(res.y1, res.y2, options.window_fraction);
    return res;
}

// ---------------------------------------------------------------------------
// Bound certificates

CheckReport absorbing_bound_check(const SyncRunResult& result, const SyncBoundParams& params) {
    constexpr double kDeltaMax = 1e3;
    const TimeGrid& grid = result.y1.grid();
    const double n1 = static_cast<double>(result.n_greedy + 1);

    struct Series {
        std::vector<double> r;
        double r0;
    };
    std::vector<Series> series;
    for (const GridPath* y : {&result.y1, &result.y2}) {
        Series s;
        for (std::size_t k = 0; k < y->n_points(); ++k) s.r.push_back(y->vec(k).norm());
        s.r0 = s.r.front();
        series.push_back(std::move(s));
    }
    auto excess = [&](const Series& s, double delta) {
        double e = 0.0;
        for (std::size_t k = 0; k < s.r.size(); ++k)
            e = std::max(e, s.r[k] - std::exp(-delta * (grid.time(k) - grid.a())) * s.r0);
        return e;
    };

    double delta = kDeltaMax;
    for (const Series& s : series) {
        const double threshold = 1.1 * excess(s, 0.0) + 1e-9 * std::max(s.r0, 1.0);
        if (excess(s, kDeltaMax) <= threshold) continue;
        double lo = 0.0, hi = kDeltaMax;
        for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (excess(s, mid) <= threshold ? lo : hi) = mid;
        }
        delta = std::min(delta, lo);
    }
    double c = 0.0;
    double r0 = 0.0;
    for (const Series& s : series) {
        c = std::max(c, excess(s, delta) / n1);
        r0 = std::max(r0, s.r0);
    }

    CheckReport rep("absorbing_bound");
    rep.set("kappa", result.kappa).set("lambda", params.lambda).set("N", static_cast<double>(result.n_greedy));
    rep.set("fitted_delta", delta).set("fitted_C", c).set("radius", r0 + c * n1);
    rep.passed = std::isfinite(delta) && std::isfinite(c) && delta > 0.0;
    if (!rep.passed) rep.note("no decay rate delta > 0 fits the run");
    return rep;
}

SyncBoundParams fitted_bound_params(const CheckReport& absorbing, const ModelSpec& model, double lambda) {
    SyncBoundParams p;
    p.lambda = lambda;
    p.delta_lambda = absorbing.get("fitted_delta");
    p.cbar_lambda = absorbing.get("fitted_C");
    p.radius = absorbing.get("radius");
    p.c_fg_sup = estimate_sup_constant(model.f, model.g, p.radius);
    return p;
}

CheckReport ztilde_decay_check(const SyncRunResult& result, const SyncBoundParams& params) {
    CheckReport rep("ztilde_decay");
    rep.set("kappa", result.kappa).set("N", static_cast<double>(result.n_greedy));
    if (result.kappa == 0.0) {
        rep.skipped = true;
        rep.note("kappa = 0: the envelope is unbounded");
        return rep;
    }
    const TimeGrid& grid = result.ztilde.grid();
    const double sep0 = (result.y1.vec(0) - result.y2.vec(0)).norm();
    const double tail = static_cast<double>(result.n_greedy + 1) / std::sqrt(4.0 * result.kappa) *
                        (1.0 + 0.5 * params.lambda) * params.c_fg_sup;
    double min_slack = std::numeric_limits<double>::infinity();
    double max_violation = 0.0;
    std::size_t violations = 0;
    for (std::size_t k = 0; k < grid.n_points(); ++k) {
        const double lhs = result.ztilde.vec(k).norm();
        const double rhs = 0.5 * std::exp(-result.kappa * (grid.time(k) - grid.a())) * sep0 + tail;
        const double slack = rhs - lhs;
        min_slack = std::min(min_slack, slack);
        if (slack < -1e-12 * std::max(1.0, rhs)) {
            ++violations;
            max_violation = std::max(max_violation, -slack);
        }
    }
    rep.set("C_fg", params.c_fg_sup).set("tail", tail).set("min_slack", min_slack);
    rep.set("max_violation", max_violation).set("violations", static_cast<double>(violations));
    rep.passed = violations == 0;
    return rep;
}

// ---------------------------------------------------------------------------
// Sweeps

Driver make_driver(double hurst, const TimeGrid& grid, std::size_t dim, std::uint64_t seed) {
    const HurstParam hp(hurst);
    GridPath path = sample_fbm(hp, grid, dim, seed);
    if (hp.regime() == Regime::Rough) return Driver(lift_geometric(path));
    return Driver(std::move(path));
}

namespace {

/// Runs task(k) for k in [0, count) on up to `jobs` threads; rethrows the first failure.
void run_pool(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= count) return;
            try {
                task(k);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::vector<SweepRow> kappa_sweep(const SweepSetup& setup, const std::vector<double>& kappas,
                                  const std::vector<std::uint64_t>& seeds, std::size_t jobs,
                                  const RunSink& sink) {
    for (double k : kappas)
        if (!(k >= 0.0) || !std::isfinite(k)) throw ValidationError(fmt::format("invalid kappa {}", k));
    if (kappas.empty() || seeds.empty()) return {};
    const std::size_t d = setup.model.sigma.d();

    // Per-seed driver, greedy count and synchronized solution, shared read-only by the kappa runs.
    struct SeedData {
        std::optional<Driver> driver;
        std::optional<GridPath> ybar;
    };
    std::vector<SeedData> per_seed(seeds.size());
    run_pool(seeds.size(), jobs, [&](std::size_t s) {
        Driver drv = make_driver(setup.hurst, setup.grid, d, seeds[s]);
        per_seed[s].ybar = solve_synchronized(setup.model.f, setup.model.g, setup.model.sigma, drv, setup.y0,
                                              setup.options.flow);
        per_seed[s].driver.emplace(std::move(drv));
    });

    std::vector<SweepRow> rows(kappas.size() * seeds.size());
    run_pool(rows.size(), jobs, [&](std::size_t job) {
        const std::size_t ki = job / seeds.size();
        const std::size_t si = job % seeds.size();
        const SeedData& sd = per_seed[si];
        SyncRunResult res = solve_coupled(setup.model, *sd.driver, setup.y0, kappas[ki], setup.options);
        res.ybar = *sd.ybar;

        SyncBoundParams initial;
        initial.lambda = setup.options.lambda;
        const CheckReport absorbing = absorbing_bound_check(res, initial);
        const SyncBoundParams params = fitted_bound_params(absorbing, setup.model, setup.options.lambda);
        const CheckReport decay = ztilde_decay_check(res, params);

        SweepRow& row = rows[job];
        row.kappa = kappas[ki];
        row.seed = seeds[si];
        row.sync_error = res.sync_error;
        row.dist_to_sync_system = std::max(sup_distance(res.y1, *res.ybar, res.window_start),
                                           sup_distance(res.y2, *res.ybar, res.window_start));
        row.n_greedy = res.n_greedy;
        row.ztilde_bound_slack = decay.skipped ? std::numeric_limits<double>::quiet_NaN() : decay.get("min_slack");
        row.fitted_delta = absorbing.get("fitted_delta");
        row.fitted_C = absorbing.get("fitted_C");
        row.bounds_passed = absorbing.passed && decay.passed;
        res.reports = {absorbing, decay};
        if (sink) sink(res, seeds[si]);
    });
    return rows;
}

// ---------------------------------------------------------------------------
// Direct solve of the coupled SDE

std::pair<GridPath, GridPath> solve_coupled_direct(const ModelSpec& model, const Driver& driver,
                                                   const InitialPair& y0, double kappa,
                                                   const FlowOptions& options) {
    require_model_dims(model.f, model.g, model.sigma, driver, y0);
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ValidationError("coupling strength must be >= 0");
    const FlowKernel kernel(model.sigma, driver, options);
    const TimeGrid& grid = driver.grid();
    const double h = grid.step();
    GridPath y1(grid, model.sigma.m()), y2(grid, model.sigma.m());
    Vec a = y0.y1, b = y0.y2;
    y1.set(0, a);
    y2.set(0, b);
    for (std::size_t i = 0; i < grid.n_steps(); ++i) {
        const Vec za = kernel.backward(a, 0, i);
        const Vec zb = kernel.backward(b, 0, i);
        Mat ja, jb;
        kernel.forward(za, 0, i, 0.0, &ja);
        kernel.forward(zb, 0, i, 0.0, &jb);
        const Vec gap = zb - za;
        const Vec da = model.f(a) + kappa * (ja * gap);
        const Vec db = model.g(b) - kappa * (jb * gap);
        const Vec na = split_step(kernel, a, da, i, h);
        const Vec nb = split_step(kernel, b, db, i, h);
        require_finite(na, a, i + 1, options.blowup_cap, "direct coupled solve");
        require_finite(nb, b, i + 1, options.blowup_cap, "direct coupled solve");
        a = na;
        b = nb;
        y1.set(i + 1, a);
        y2.set(i + 1, b);
    }
    return {std::move(y1), std::move(y2)};
}

CheckReport doss_sussmann_consistency_check(const SweepSetup& setup, std::uint64_t seed, double kappa,
                                            const std::vector<std::size_t>& levels) {
    if (levels.size() < 2) throw ValidationError("consistency check needs at least two grid levels");
    std::vector<std::size_t> sorted = levels;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t finest = sorted.back();
    for (std::size_t n : sorted)
        if (n == 0 || finest % n != 0) throw ValidationError("grid levels must divide the finest level");
    const TimeGrid fine(setup.grid.a(), setup.grid.b(), finest);
    const HurstParam hp(setup.hurst);
    const GridPath base = sample_fbm(hp, fine, setup.model.sigma.d(), seed);

    CheckReport rep("doss_sussmann_consistency");
    rep.set("kappa", kappa).set("seed", static_cast<double>(seed));
    std::vector<double> steps, gaps;
    for (std::size_t n : sorted) {
        GridPath path = base.decimated(finest / n);
        const Driver drv = hp.regime() == Regime::Rough ? Driver(lift_geometric(path)) : Driver(std::move(path));
        const auto direct = solve_coupled_direct(setup.model, drv, setup.y0, kappa, setup.options.flow);
        const SyncRunResult ds = solve_coupled(setup.model, drv, setup.y0, kappa, setup.options);
        const double gap = std::max(sup_distance(direct.first, ds.y1, 0), sup_distance(direct.second, ds.y2, 0));
        steps.push_back(drv.grid().step());
        gaps.push_back(gap);
        rep.set(fmt::format("discrepancy_n{}", n), gap);
    }
    const double order = loglog_slope(steps, gaps);
    rep.set("fitted_order", order);
    rep.passed = std::isfinite(order) && order > 0.5;
    return rep;
}

// ---------------------------------------------------------------------------
// CSV

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "kappa,seed,sync_error,dist_to_sync_system,n_greedy,ztilde_bound_slack,fitted_delta,fitted_C\n";
    for (const SweepRow& r : rows)
        os << fmt::format("{},{},{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g}\n", r.kappa, r.seed, r.sync_error,
                          r.dist_to_sync_system, r.n_greedy, r.ztilde_bound_slack, r.fitted_delta, r.fitted_C);
}

void write_run_csv(std::ostream& os, const SyncRunResult& res) {
    const std::size_t m = res.y1.dim();
    std::vector<std::pair<std::string, const GridPath*>> cols{{"y1", &res.y1},     {"y2", &res.y2},
                                                              {"z1", &res.z1},     {"z2", &res.z2},
                                                              {"zbar", &res.zbar}, {"ztilde", &res.ztilde}};
    if (res.ybar) cols.emplace_back("ybar", &*res.ybar);
    os << "t";
    for (const auto& [name, path] : cols)
        for (std::size_t k = 0; k < m; ++k) os << ',' << name << '_' << k;
    os << '\n';
    const TimeGrid& grid = res.y1.grid();
    for (std::size_t i = 0; i < grid.n_points(); ++i) {
        os << fmt::format("{:.17g}", grid.time(i));
        for (const auto& [name, path] : cols)
            for (std::size_t k = 0; k < m; ++k) os << fmt::format(",{:.17g}", (*path)(i, k));
        os << '\n';
    }
}

}  // namespace roughsync
