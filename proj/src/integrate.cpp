#include "roughsync/integrate.hpp"

#include "roughsync/fit.hpp"
#include "roughsync/variation.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace roughsync {

namespace {

void require_same_grid(const GridPath& a, const GridPath& b, const char* what) {
    if (!(a.grid() == b.grid())) throw ValidationError(fmt::format("{}: grids differ", what));
}

void validate_range(const GridPath& path, IndexRange range) {
    if (range.first > range.last || range.last >= path.n_points())
        throw ValidationError(fmt::format("index range [{}, {}] outside a grid of {} points",
                                          range.first, range.last, path.n_points()));
}

std::size_t output_dim(const GridPath& y, const GridPath& x) {
    if (y.dim() % x.dim() != 0)
        throw ValidationError(fmt::format("integrand dimension {} does not compose with driver dimension {}",
                                          y.dim(), x.dim()));
    return y.dim() / x.dim();
}

/// y_i x_{i,i+1} for one step, accumulated into out.
void add_young_step(const GridPath& y, const GridPath& x, std::size_t i, Eigen::VectorXd& out) {
    const std::size_t d = x.dim();
    const std::size_t m = out.size();
    for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += y(i, r * d + k) * (x(i + 1, k) - x(i, k));
        out[static_cast<Eigen::Index>(r)] += acc;
    }
}

void add_area_step(const ControlledPath& c, const Mat& area, std::size_t i, Eigen::VectorXd& out) {
    const std::size_t d = c.d();
    for (std::size_t r = 0; r < c.m(); ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t l = 0; l < d; ++l)
                acc += c.y_prime()(i, (r * d + k) * d + l) *
                       area(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
        out[static_cast<Eigen::Index>(r)] += acc;
    }
}

/// Prefix sums S[k] of the left-point integral from range.first to range.first + k.
std::vector<Eigen::VectorXd> young_prefix(const GridPath& y, const GridPath& x, IndexRange range) {
    const std::size_t m = output_dim(y, x);
    std::vector<Eigen::VectorXd> s(range.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)));
    for (std::size_t i = range.first; i < range.last; ++i) {
        s[i + 1 - range.first] = s[i - range.first];
        add_young_step(y, x, i, s[i + 1 - range.first]);
    }
    return s;
}

void check_driver(const ControlledPath& c, const RoughLift& lift) {
    const GridPath& base = lift.base();
    if (!(base.grid() == c.driver().grid()) || base.dim() != c.driver().dim() ||
        base.values() != c.driver().values())
        throw ValidationError("rough integral: lift is not built over the controlled path's driver");
}

}  // namespace

Eigen::VectorXd young_integral(const GridPath& y, const GridPath& x, IndexRange range) {
    require_same_grid(y, x, "young_integral");
    validate_range(x, range);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(output_dim(y, x)));
    for (std::size_t i = range.first; i < range.last; ++i) add_young_step(y, x, i, out);
    return out;
}

Eigen::VectorXd young_integral(const GridPath& y, const GridPath& x) {
    return young_integral(y, x, {0, x.n_points() - 1});
}

ControlledPath::ControlledPath(GridPath y, GridPath y_prime, GridPath driver, std::size_t m)
    : y_(std::move(y)), y_prime_(std::move(y_prime)), driver_(std::move(driver)), m_(m) {
    require_same_grid(y_, driver_, "controlled path");
    require_same_grid(y_prime_, driver_, "controlled path derivative");
    const std::size_t d = driver_.dim();
    if (m_ < 1 || y_.dim() != m_ * d || y_prime_.dim() != m_ * d * d)
        throw ValidationError(fmt::format(
            "controlled path dimensions (y {}, y' {}) do not match m = {}, d = {}", y_.dim(),
            y_prime_.dim(), m_, d));
    if (!y_.all_finite() || !y_prime_.all_finite())
        throw ValidationError("controlled path has non-finite values");
}

Eigen::VectorXd ControlledPath::remainder(std::size_t s, std::size_t t) const {
    const std::size_t d = driver_.dim();
    Eigen::VectorXd r(static_cast<Eigen::Index>(m_ * d));
    for (std::size_t rk = 0; rk < m_ * d; ++rk) {
        double v = y_(t, rk) - y_(s, rk);
        for (std::size_t l = 0; l < d; ++l) v -= y_prime_(s, rk * d + l) * (driver_(t, l) - driver_(s, l));
        r[static_cast<Eigen::Index>(rk)] = v;
    }
    return r;
}

ControlledPath ControlledPath::composed(const GridPath& x, const std::function<double(double)>& f,
                                        const std::function<double(double)>& df) {
    if (x.dim() != 1) throw ValidationError("composed controlled path needs a scalar driver");
    GridPath y(x.grid(), 1), yp(x.grid(), 1);
    for (std::size_t i = 0; i < x.n_points(); ++i) {
        y(i, 0) = f(x(i, 0));
        yp(i, 0) = df(x(i, 0));
    }
    return ControlledPath(std::move(y), std::move(yp), x, 1);
}

Eigen::VectorXd rough_integral(const ControlledPath& c, const RoughLift& lift, IndexRange range) {
    check_driver(c, lift);
    validate_range(c.driver(), range);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.m()));
    for (std::size_t i = range.first; i < range.last; ++i) {
        add_young_step(c.y(), c.driver(), i, out);
        add_area_step(c, lift.step_area(i), i, out);
    }
    return out;
}

Eigen::VectorXd rough_integral(const ControlledPath& c, const RoughLift& lift) {
    return rough_integral(c, lift, {0, c.driver().n_points() - 1});
}

CheckReport check_young_loeve(const GridPath& y, const GridPath& x, double p, double q,
                              IndexRange range) {
    require_same_grid(y, x, "young_loeve");
    validate_range(x, range);
    constexpr std::size_t kFactor = 4;
    if (range.size() < 2 * kFactor + 1)
        throw ValidationError("Young-Loeve check needs at least two coarse steps");
    const std::size_t m = output_dim(y, x);
    const auto prefix = young_prefix(y, x, range);

    double c_needed = 0.0;
    double worst_lhs = 0.0;
    std::size_t pairs = 0;
    for (std::size_t s = range.first; s + kFactor <= range.last; s += kFactor) {
        const auto wx = p_variation_powers_from(x, p, s, range.last);
        const auto wy = p_variation_powers_from(y, q, s, range.last);
        for (std::size_t t = s + kFactor; t <= range.last; t += kFactor) {
            Eigen::VectorXd lhs = prefix[t - range.first] - prefix[s - range.first];
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t k = 0; k < x.dim(); ++k)
                    lhs[static_cast<Eigen::Index>(r)] -= y(s, r * x.dim() + k) * (x(t, k) - x(s, k));
            const double l = lhs.norm();
            const double rhs = std::pow(wx[t - s], 1.0 / p) * std::pow(wy[t - s], 1.0 / q);
            worst_lhs = std::max(worst_lhs, l);
            ++pairs;
            if (l <= 1e-14 * std::max(1.0, prefix.back().norm())) continue;
            c_needed = std::max(c_needed, rhs > 0.0 ? l / rhs : std::numeric_limits<double>::infinity());
        }
    }
    const double c_admissible = std::max(1.0, c_needed);
    CheckReport r{"young_loeve"};
    r.set("p", p).set("q", q).set("exponent_sum", 1.0 / p + 1.0 / q).set("pairs", static_cast<double>(pairs));
    r.set("max_lhs", worst_lhs).set("C_admissible", c_admissible);
    r.passed = c_admissible <= 100.0;
    if (!r.passed) r.note("admissible constant above 100: the Young condition 1/p + 1/q > 1 fails in practice");
    if (1.0 / p + 1.0 / q <= 1.0) r.note("1/p + 1/q <= 1: outside the Young regime");
    return r;
}

CheckReport check_rough_remainder(const ControlledPath& c, const RoughLift& lift, double alpha,
                                  IndexRange range) {
    check_driver(c, lift);
    validate_range(c.driver(), range);
    const GridPath& x = c.driver();
    const double h = x.grid().step();
    const std::size_t d = c.d();
    const std::size_t m = c.m();

    std::vector<Eigen::VectorXd> prefix(range.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)));
    for (std::size_t i = range.first; i < range.last; ++i) {
        Eigen::VectorXd& next = prefix[i + 1 - range.first];
        next = prefix[i - range.first];
        add_young_step(c.y(), x, i, next);
        add_area_step(c, lift.step_area(i), i, next);
    }

    std::vector<double> scales, remainders;
    double c_ratio = 0.0;
    double scale_ref = 1e-300;
    for (std::size_t len = 2; len <= range.size() - 1; len *= 2) {
        double worst = 0.0;
        for (std::size_t s = range.first; s + len <= range.last; s += len) {
            const std::size_t t = s + len;
            Eigen::VectorXd rem = prefix[t - range.first] - prefix[s - range.first];
            scale_ref = std::max(scale_ref, rem.norm());
            const Mat area = lift.area(s, t);
            for (std::size_t r = 0; r < m; ++r) {
                double v = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    v += c.y()(s, r * d + k) * (x(t, k) - x(s, k));
                    for (std::size_t l = 0; l < d; ++l)
                        v += c.y_prime()(s, (r * d + k) * d + l) *
                             area(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
                }
                rem[static_cast<Eigen::Index>(r)] -= v;
            }
            worst = std::max(worst, rem.norm());
        }
        const double dt = static_cast<double>(len) * h;
        scales.push_back(dt);
        remainders.push_back(worst);
        c_ratio = std::max(c_ratio, worst / std::pow(dt, 3.0 * alpha));
    }

    double max_rem = 0.0;
    for (double v : remainders) max_rem = std::max(max_rem, v);
    const double slope = loglog_slope(scales, remainders);
    CheckReport r{"rough_remainder"};
    r.set("alpha", alpha).set("expected_min_exponent", 3.0 * alpha - 0.2);
    r.set("scales", static_cast<double>(scales.size())).set("max_remainder", max_rem);
    r.set("fitted_exponent", slope).set("C_ratio", c_ratio);
    if (max_rem <= 1e-13 * scale_ref) {
        r.note("remainder vanishes at every scale");
        r.passed = true;
    } else {
        r.passed = std::isfinite(slope) && slope >= 3.0 * alpha - 0.2;
    }
    return r;
}

}  // namespace roughsync
