#include "roughsync/model.hpp"

#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <random>

namespace roughsync {

namespace {

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

Vec unit_axis(std::size_t m, std::size_t k) {
    Vec e = Vec::Zero(ix(m));
    e[ix(k)] = 1.0;
    return e;
}

Vec random_direction(std::size_t m, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Vec v(ix(m));
    do {
        for (std::size_t k = 0; k < m; ++k) v[ix(k)] = normal(rng);
    } while (v.norm() == 0.0);
    return v / v.norm();
}

/// 0, +-axes at unit and full radius, n_probes/2 boundary points, and
/// n_probes uniform interior samples.
std::vector<Vec> probe_points(std::size_t m, double radius, std::size_t n_probes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Vec> pts;
    pts.push_back(Vec::Zero(ix(m)));
    for (std::size_t k = 0; k < m; ++k)
        for (double s : {1.0, -1.0})
            for (double r : {1.0, radius}) pts.push_back(s * r * unit_axis(m, k));
    for (std::size_t i = 0; i < n_probes / 2 + 1; ++i) pts.push_back(radius * random_direction(m, rng));
    for (std::size_t i = 0; i < n_probes; ++i) {
        const double u = std::generate_canonical<double, 53>(rng);
        pts.push_back(radius * std::pow(u, 1.0 / static_cast<double>(m)) * random_direction(m, rng));
    }
    return pts;
}

double spectral_norm(const Mat& a) {
    if (a.size() == 1) return std::abs(a(0, 0));
    Eigen::JacobiSVD<Mat> svd(a);
    return svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
}

double double_well_d1(double shift) {
    // max_r (2r - r^3) = (4/3) sqrt(2/3), attained at r = sqrt(2/3)
    return 4.0 / 3.0 * std::sqrt(2.0 / 3.0) + std::abs(shift);
}

}  // namespace

DriftSpec::DriftSpec(std::string name, std::size_t m, Fn f, double d1, double d2, double c_fg,
                     double probe_radius)
    : name_(std::move(name)), m_(m), f_(std::move(f)), d1_(d1), d2_(d2), c_fg_(c_fg),
      probe_radius_(probe_radius) {
    if (m < 1 || m > static_cast<std::size_t>(kMaxDim))
        throw ValidationError(fmt::format("drift dimension {} outside 1..{}", m, kMaxDim));
    if (!f_) throw ValidationError("drift needs a function");
    if (!(d2 > 0.0)) throw ValidationError(fmt::format("dissipativity constant D2 must be positive, got {}", d2));
    if (!(d1 >= 0.0)) throw ValidationError("dissipativity constant D1 must be nonnegative");
    if (!(c_fg >= 0.0)) throw ValidationError("perpendicular constant C_fg must be nonnegative");
    if (!(probe_radius > 0.0)) throw ValidationError("probe radius must be positive");
}

DriftSpec DriftSpec::double_well(double shift) {
    const std::string name = shift == 0.0 ? "x-x^3" : fmt::format("x-x^3-{:g}", shift);
    return DriftSpec(
        name, 1,
        [shift](const Vec& y) {
            Vec out(1);
            out[0] = y[0] - y[0] * y[0] * y[0] - shift;
            return out;
        },
        double_well_d1(shift), 1.0, 0.0);
}

DriftSpec DriftSpec::linear(double rate, std::size_t m) {
    if (!(rate > 0.0)) throw ValidationError("linear drift needs a positive rate");
    return DriftSpec(fmt::format("-{:g}y", rate), m, [rate](const Vec& y) { return Vec(-rate * y); }, 0.0, rate, 0.0);
}

CheckReport check_a1(const DriftSpec& drift, std::size_t n_probes, std::uint64_t seed) {
    const auto pts = probe_points(drift.m(), drift.probe_radius(), n_probes, seed);
    double worst_diss = std::numeric_limits<double>::infinity();
    double worst_perp = std::numeric_limits<double>::infinity();
    Vec arg_diss, arg_perp;
    for (const Vec& y : pts) {
        const Vec fy = drift(y);
        const double r = y.norm();
        const double inner = y.dot(fy);
        const double margin = r * (drift.d1() - drift.d2() * r) - inner;
        if (margin < worst_diss) {
            worst_diss = margin;
            arg_diss = y;
        }
        if (r == 0.0) continue;  // projector undefined at the origin
        const Vec perp = fy - (inner / (r * r)) * y;
        const double pm = drift.c_fg() * (r + 1.0) - perp.norm();
        if (pm < worst_perp) {
            worst_perp = pm;
            arg_perp = y;
        }
    }
    CheckReport rep("assumption_a1:" + drift.name());
    rep.set("probes", static_cast<double>(pts.size())).set("D1", drift.d1()).set("D2", drift.d2());
    rep.set("C_fg", drift.c_fg()).set("worst_dissipativity_margin", worst_diss);
    rep.set("worst_perpendicular_margin", worst_perp);
    rep.set("worst_dissipativity_at_norm", arg_diss.size() ? arg_diss.norm() : 0.0);
    rep.note("certificate over probe points only");
    rep.passed = worst_diss >= -1e-12 && worst_perp >= -1e-12;
    return rep;
}

CheckReport check_a2(const VectorFieldSpec& sigma, std::size_t n_probes, std::uint64_t seed,
                     double probe_radius) {
    const std::size_t m = sigma.m();
    const auto pts = probe_points(m, probe_radius, n_probes, seed);
    std::mt19937_64 rng(seed ^ 0x5bd1e995u);
    std::vector<Vec> dirs;
    for (std::size_t k = 0; k < m; ++k) dirs.push_back(unit_axis(m, k));
    if (m > 1)
        for (int i = 0; i < 16; ++i) dirs.push_back(random_direction(m, rng));

    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (const Vec& y : pts) {
        s0 = std::max(s0, spectral_norm(sigma.sigma(y)));
        for (const Vec& u : dirs) {
            s1 = std::max(s1, spectral_norm(sigma.dsigma(y, u)));
            for (const Vec& v : dirs) {
                s2 = std::max(s2, spectral_norm(sigma.d2sigma(y, u, v)));
                if (m == 1 || &u == &v) s3 = std::max(s3, spectral_norm(sigma.d3sigma(y, u, v, v)));
            }
        }
    }
    const double c = sigma.c_sigma();
    CheckReport rep("assumption_a2:" + sigma.name());
    rep.set("probes", static_cast<double>(pts.size())).set("C_sigma", c);
    rep.set("sup_sigma", s0).set("sup_d1", s1).set("sup_d2", s2).set("sup_d3", s3);
    rep.note("certificate over probe points and probe directions only");
    const double tol = c * (1.0 + 1e-12);
    rep.passed = s0 <= tol && s1 <= tol && s2 <= tol && s3 <= tol;
    return rep;
}

DriftSpec averaged_drift(const DriftSpec& f, const DriftSpec& g) {
    if (f.m() != g.m()) throw ValidationError("averaged drift needs drifts of equal dimension");
    auto ff = f.function();
    auto gf = g.function();
    return DriftSpec(
        "avg(" + f.name() + "," + g.name() + ")", f.m(),
        [ff, gf](const Vec& y) { return Vec(0.5 * (ff(y) + gf(y))); }, 0.5 * (f.d1() + g.d1()),
        0.5 * (f.d2() + g.d2()), 0.5 * (f.c_fg() + g.c_fg()), std::max(f.probe_radius(), g.probe_radius()));
}

double estimate_sup_constant(const DriftSpec& f, const DriftSpec& g, double radius,
                             std::size_t n_directions, std::uint64_t seed) {
    if (f.m() != g.m()) throw ValidationError("sup constant needs drifts of equal dimension");
    if (!(radius >= 0.0) || !std::isfinite(radius)) throw ValidationError("radius must be finite and >= 0");
    const std::size_t m = f.m();
    auto value = [&](const Vec& y) { return f(y).norm() + g(y).norm(); };
    const Vec origin = Vec::Zero(ix(m));
    double best = value(origin);
    if (radius == 0.0) return best;

    std::vector<Vec> dirs;
    for (std::size_t k = 0; k < m; ++k) {
        dirs.push_back(unit_axis(m, k));
        dirs.push_back(-unit_axis(m, k));
    }
    if (m > 1) {
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < n_directions; ++i) dirs.push_back(random_direction(m, rng));
    }
    constexpr std::size_t kGrid = 2000;
    for (const Vec& dir : dirs) {
        auto along = [&](double r) { return value(Vec(r * dir)); };
        std::vector<double> vals(kGrid + 1);
        for (std::size_t k = 0; k <= kGrid; ++k)
            vals[k] = along(radius * static_cast<double>(k) / static_cast<double>(kGrid));
        for (std::size_t k = 0; k <= kGrid; ++k) {
            best = std::max(best, vals[k]);
            const bool left = k == 0 || vals[k] >= vals[k - 1];
            const bool right = k == kGrid || vals[k] >= vals[k + 1];
            if (!(left && right)) continue;
            const double lo = radius * static_cast<double>(k == 0 ? 0 : k - 1) / kGrid;
            const double hi = radius * static_cast<double>(std::min(k + 1, kGrid)) / kGrid;
            const auto res = boost::math::tools::brent_find_minima(
                [&](double r) { return -along(r); }, lo, hi, 50);
            best = std::max(best, -res.second);
        }
    }
    return best;
}

namespace {

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

std::map<std::string, std::function<ModelSpec()>>& registry() {
    static std::map<std::string, std::function<ModelSpec()>> r{
        {"double_well_sin",
         [] {
             return ModelSpec{"double_well_sin", DriftSpec::double_well(), DriftSpec::double_well(),
                              VectorFieldSpec::sine()};
         }},
        {"double_well_asym_sin",
         [] {
             return ModelSpec{"double_well_asym_sin", DriftSpec::double_well(), DriftSpec::double_well(0.5),
                              VectorFieldSpec::sine()};
         }},
        {"linear",
         [] {
             return ModelSpec{"linear", DriftSpec::linear(), DriftSpec::linear(),
                              VectorFieldSpec::constant(Mat::Constant(1, 1, 0.5))};
         }},
    };
    return r;
}

std::vector<std::string> names_locked() {
    std::vector<std::string> out;
    for (const auto& kv : registry()) out.push_back(kv.first);
    return out;
}

}  // namespace

ModelSpec make_model(const std::string& name) {
    std::function<ModelSpec()> factory;
    {
        std::lock_guard lock(registry_mutex());
        const auto it = registry().find(name);
        if (it == registry().end())
            throw ValidationError(
                fmt::format("unknown model '{}' (known: {})", name, fmt::join(names_locked(), ", ")));
        factory = it->second;
    }
    return factory();
}

std::vector<std::string> model_names() {
    std::lock_guard lock(registry_mutex());
    return names_locked();
}

void register_model(const std::string& name, std::function<ModelSpec()> factory) {
    if (name.empty() || !factory) throw ValidationError("model registration needs a name and a factory");
    std::lock_guard lock(registry_mutex());
    registry()[name] = std::move(factory);
}

}  // namespace roughsync
