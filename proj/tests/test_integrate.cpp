#include "roughsync/integrate.hpp"
#include "roughsync/fit.hpp"

#include <doctest.h>

#include <cmath>

using namespace roughsync;

namespace {

GridPath linear_path(std::size_t n, double slope = 1.0) {
    GridPath x(TimeGrid(0.0, 1.0, n), 1);
    for (std::size_t i = 0; i <= n; ++i) x(i, 0) = slope * x.grid().time(i);
    return x;
}

GridPath constant_like(const GridPath& x, double c) {
    GridPath y(x.grid(), x.dim());
    for (std::size_t i = 0; i < x.n_points(); ++i)
        for (std::size_t k = 0; k < x.dim(); ++k) y(i, k) = c;
    return y;
}

GridPath sin_of(const GridPath& x) {
    GridPath y(x.grid(), 1);
    for (std::size_t i = 0; i < x.n_points(); ++i) y(i, 0) = std::sin(x(i, 0));
    return y;
}

}  // namespace

TEST_CASE("constant integrand integrates to the increment") {
    const GridPath x = sample_fbm(HurstParam(0.7), TimeGrid(0.0, 1.0, 200), 1, 2);
    const Eigen::VectorXd v = young_integral(constant_like(x, 2.5), x);
    CHECK(v(0) == doctest::Approx(2.5 * x.increment(0, 200)(0)).epsilon(1e-12));
    CHECK(young_integral(x, constant_like(x, 4.0))(0) == 0.0);
}

TEST_CASE("left-point sum of x dx for x = t") {
    const GridPath x = linear_path(1024);
    // Exact left sum is (1 - h) / 2.
    const double v = young_integral(x, x)(0);
    CHECK(std::abs(v - 0.5) <= 2e-3);
    CHECK(v == doctest::Approx(0.5 * (1.0 - 1.0 / 1024)).epsilon(1e-12));
}

TEST_CASE("additivity and linearity of the discrete integral") {
    const GridPath x = sample_fbm(HurstParam(0.4), TimeGrid(0.0, 1.0, 300), 2, 9);
    GridPath y(x.grid(), 2), z(x.grid(), 2);
    for (std::size_t i = 0; i <= 300; ++i)
        for (int k = 0; k < 2; ++k) {
            y(i, k) = std::cos(x(i, k));
            z(i, k) = x(i, 1 - k) * x(i, k);
        }
    const Eigen::VectorXd whole = young_integral(y, x, {10, 250});
    const Eigen::VectorXd split = young_integral(y, x, {10, 111}) + young_integral(y, x, {111, 250});
    CHECK(std::abs(whole(0) - split(0)) <= 1e-13);

    GridPath comb(x.grid(), 2);
    for (std::size_t i = 0; i <= 300; ++i)
        for (int k = 0; k < 2; ++k) comb(i, k) = 2.0 * y(i, k) - 3.0 * z(i, k);
    const double lhs = young_integral(comb, x)(0);
    const double rhs = 2.0 * young_integral(y, x)(0) - 3.0 * young_integral(z, x)(0);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    CHECK_THROWS_AS(young_integral(y, x, {5, 400}), ValidationError);
}

TEST_CASE("integrand dimension must compose with the driver") {
    GridPath x2(TimeGrid(0.0, 1.0, 10), 2);
    GridPath y3(x2.grid(), 3);
    CHECK_THROWS_AS(young_integral(y3, x2), ValidationError);
    GridPath y6(x2.grid(), 6);
    CHECK(young_integral(y6, x2).size() == 3);
}

TEST_CASE("Young-Loeve estimate") {
    const GridPath x = sample_fbm(HurstParam(0.7), TimeGrid(0.0, 1.0, 512), 1, 3);
    const double p = 1.0 / 0.55;
    const CheckReport c = check_young_loeve(constant_like(x, 1.0), x, p, p, {0, 512});
    CHECK(c.passed);
    CHECK(c.get("max_lhs") <= 1e-12);
    const CheckReport r = check_young_loeve(sin_of(x), x, p, p, {0, 512});
    CHECK(r.passed);
    CHECK(r.get("C_admissible") <= 10.0);
    CHECK(r.get("exponent_sum") > 1.0);
}

TEST_CASE("rough integral closed forms") {
    SUBCASE("y = x against x = t is exactly one half") {
        const GridPath x = linear_path(257);
        const ControlledPath cp = ControlledPath::composed(x, [](double v) { return v; }, [](double) { return 1.0; });
        CHECK(std::abs(rough_integral(cp, lift_geometric(x))(0) - 0.5) <= 1e-14);
    }
    SUBCASE("vanishing Gubinelli derivative reduces to the left-point sum") {
        const GridPath x = sample_fbm(HurstParam(0.4), TimeGrid(0.0, 1.0, 128), 1, 1);
        const GridPath y = sin_of(x);
        const ControlledPath cp(y, GridPath(x.grid(), 1), x, 1);
        CHECK(rough_integral(cp, lift_geometric(x))(0) == doctest::Approx(young_integral(y, x)(0)).epsilon(1e-13));
    }
    SUBCASE("compensated sum of f(x) f'(x) dx telescopes towards (f(x_1)^2 - f(x_0)^2) / 2") {
        // For y = x the compensated sum is exactly sum (x_{i+1}^2 - x_i^2) / 2 on any path.
        const GridPath x = sample_fbm(HurstParam(0.4), TimeGrid(0.0, 1.0, 400), 1, 4);
        const ControlledPath cp = ControlledPath::composed(x, [](double v) { return v; }, [](double) { return 1.0; });
        const double exact = 0.5 * (x(400, 0) * x(400, 0) - x(0, 0) * x(0, 0));
        CHECK(rough_integral(cp, lift_geometric(x))(0) == doctest::Approx(exact).epsilon(1e-12));
    }
    SUBCASE("lift over another path is rejected") {
        const GridPath x = sample_fbm(HurstParam(0.4), TimeGrid(0.0, 1.0, 64), 1, 1);
        const GridPath other = sample_fbm(HurstParam(0.4), TimeGrid(0.0, 1.0, 64), 1, 2);
        const ControlledPath cp = ControlledPath::composed(x, [](double v) { return v; }, [](double) { return 1.0; });
        CHECK_THROWS_AS(rough_integral(cp, lift_geometric(other)), ValidationError);
    }
}

TEST_CASE("controlled path remainder") {
    SUBCASE("linear composition has zero remainder") {
        const GridPath x = sample_fbm(HurstParam(0.4), TimeGrid(0.0, 1.0, 256), 1, 5);
        const ControlledPath cp =
            ControlledPath::composed(x, [](double v) { return 3.0 * v + 1.0; }, [](double) { return 3.0; });
        CHECK(cp.remainder(3, 200).norm() <= 1e-12);
        const CheckReport r = check_rough_remainder(cp, lift_geometric(x), 0.35, {0, 256});
        CHECK(r.passed);
    }
    SUBCASE("sin(x) over fBm H = 0.4") {
        const GridPath x = sample_fbm(HurstParam(0.4), TimeGrid(0.0, 1.0, 1024), 1, 6);
        const ControlledPath cp = ControlledPath::composed(
            x, [](double v) { return std::sin(v); }, [](double v) { return std::cos(v); });
        const CheckReport r = check_rough_remainder(cp, lift_geometric(x), 0.35, {0, 1024});
        CHECK(r.passed);
        CHECK(r.get("fitted_exponent") >= 0.85);
    }
}

TEST_CASE("left-point refinement error of the fBm self-integral scales like h^{2H-1}") {
    // Left sum minus x_1^2/2 is -sum (dx)^2 / 2, whose mean is -N h^{2H} / 2.
    for (double h : {0.6, 0.7, 0.8}) {
        const GridPath fine = sample_fbm(HurstParam(h), TimeGrid(0.0, 1.0, 4096), 1, 7);
        const double exact = 0.5 * fine(4096, 0) * fine(4096, 0);
        std::vector<double> steps, errs;
        for (std::size_t f : {8, 4, 2, 1}) {
            const GridPath x = fine.decimated(f);
            steps.push_back(x.grid().step());
            errs.push_back(std::abs(young_integral(x, x)(0) - exact));
        }
        CHECK(std::abs(loglog_slope(steps, errs) - (2 * h - 1)) < 0.15);
    }
}
