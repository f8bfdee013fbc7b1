#include "roughsync/model.hpp"

#include <doctest.h>

#include <cmath>

using namespace roughsync;

namespace {

Vec vec1(double a) {
    Vec v(1);
    v << a;
    return v;
}

/// Grid-search oracle for the tightest D1 at D2 = 1 of x - x^3 - shift.
double d1_oracle(double shift) {
    double best = 0.0;
    for (int k = -200000; k <= 200000; ++k) {
        const double y = k * 1e-5 * 3.0;
        if (y == 0.0) continue;
        const double f = y - y * y * y - shift;
        best = std::max(best, (y * f) / std::abs(y) + std::abs(y));
    }
    return best;
}

}  // namespace

TEST_CASE("A1 certificate") {
    SUBCASE("linear drift passes") {
        const CheckReport r = check_a1(DriftSpec::linear(), 2000, 1);
        CHECK(r.passed);
        CHECK(r.get("C_fg") == 0.0);
    }
    SUBCASE("double well with the tightest D1") {
        const DriftSpec f = DriftSpec::double_well();
        CHECK(f.d1() == doctest::Approx(d1_oracle(0.0)).epsilon(1e-6));
        CHECK(f.d1() == doctest::Approx(1.0887).epsilon(1e-4));
        CHECK(check_a1(f, 2000, 1).passed);
        const DriftSpec g = DriftSpec::double_well(0.5);
        CHECK(g.d1() == doctest::Approx(d1_oracle(0.5)).epsilon(1e-6));
        CHECK(check_a1(g, 2000, 1).passed);
    }
    SUBCASE("rounded D1 passes") {
        CHECK(check_a1(DriftSpec("dw", 1, DriftSpec::double_well().function(), 1.0887, 1.0, 0.0), 2000, 1).passed);
    }
    SUBCASE("understated D1 fails") {
        const DriftSpec bad("double_well_bad", 1, DriftSpec::double_well().function(), 0.5, 1.0, 0.0);
        const CheckReport r = check_a1(bad, 2000, 1);
        CHECK_FALSE(r.passed);
        CHECK(r.get("worst_dissipativity_margin") < 0.0);
    }
    SUBCASE("rotation in the plane needs a positive C_fg") {
        const DriftSpec::Fn rot = [](const Vec& y) {
            Vec out(2);
            out << -y[0] - y[1], -y[1] + y[0];
            return out;
        };
        CHECK_FALSE(check_a1(DriftSpec("rot", 2, rot, 0.0, 1.0, 0.0), 2000, 2).passed);
        CHECK(check_a1(DriftSpec("rot", 2, rot, 0.0, 1.0, 1.0), 2000, 2).passed);
    }
    CHECK_THROWS_AS(DriftSpec("x", 1, DriftSpec::linear().function(), 0.0, 0.0, 0.0), ValidationError);
    CHECK_THROWS_AS(DriftSpec("x", 1, DriftSpec::linear().function(), 0.0, 1.0, -1.0), ValidationError);
}

TEST_CASE("A2 certificate") {
    CHECK(check_a2(VectorFieldSpec::sine(), 400, 1).passed);
    CHECK(check_a2(VectorFieldSpec::zero(1, 1), 400, 1).passed);
    CHECK(check_a2(VectorFieldSpec::sine(2), 400, 1).passed);
    const CheckReport lin = check_a2(VectorFieldSpec::linear_scalar(), 400, 1);
    CHECK_FALSE(lin.passed);
    CHECK(lin.get("sup_sigma") > 1.0);
    CHECK_FALSE(check_a2(VectorFieldSpec::sine().with_c_sigma(0.5), 400, 1).passed);
    CHECK_THROWS_AS(VectorFieldSpec::sine().with_c_sigma(0.0), ValidationError);
}

TEST_CASE("averaged drift") {
    const DriftSpec f = DriftSpec::linear(1.0);
    const DriftSpec g = DriftSpec::linear(3.0);
    const DriftSpec avg = averaged_drift(f, g);
    for (double y : {-2.0, 0.0, 0.7, 5.0}) CHECK(avg(vec1(y))[0] == doctest::Approx(-2.0 * y).epsilon(1e-15));
    const DriftSpec same = averaged_drift(DriftSpec::double_well(), DriftSpec::double_well());
    CHECK(same.d1() == DriftSpec::double_well().d1());
    CHECK(same.d2() == DriftSpec::double_well().d2());
    CHECK(same(vec1(1.3))[0] == DriftSpec::double_well()(vec1(1.3))[0]);
    CHECK(check_a1(averaged_drift(DriftSpec::double_well(), DriftSpec::double_well(0.5)), 2000, 3).passed);
    CHECK_THROWS_AS(averaged_drift(DriftSpec::linear(1.0, 1), DriftSpec::linear(1.0, 2)), ValidationError);
}

TEST_CASE("sup constant over a ball") {
    const DriftSpec f = DriftSpec::double_well();
    // |x - x^3| on [-2, 2] peaks at the boundary with value 6.
    CHECK(estimate_sup_constant(f, f, 2.0) == doctest::Approx(12.0).epsilon(1e-9));
    CHECK(estimate_sup_constant(f, f, 0.0) == 0.0);
    // Interior maximum of |x - x^3| on [-1, 1] is 2 / (3 sqrt 3).
    CHECK(estimate_sup_constant(f, f, 1.0) == doctest::Approx(4.0 / (3.0 * std::sqrt(3.0))).epsilon(1e-8));
    double prev = 0.0;
    for (double r : {0.5, 1.0, 1.5, 2.0, 3.0}) {
        const double c = estimate_sup_constant(f, DriftSpec::double_well(0.5), r);
        CHECK(c >= prev);
        prev = c;
    }
    CHECK(estimate_sup_constant(DriftSpec::linear(1.0, 2), DriftSpec::linear(2.0, 2), 1.5) ==
          doctest::Approx(4.5).epsilon(1e-9));
}

TEST_CASE("model registry") {
    const ModelSpec m = make_model("double_well_sin");
    CHECK(m.f.d1() == doctest::Approx(1.0887).epsilon(1e-4));
    CHECK(m.sigma.c_sigma() == 1.0);
    const ModelSpec a = make_model("double_well_asym_sin");
    CHECK(a.g(vec1(0.0))[0] == -0.5);
    CHECK(make_model("linear").sigma.sigma(vec1(4.0))(0, 0) == 0.5);
    CHECK_THROWS_AS(make_model("no_such_model"), ValidationError);

    register_model("test_linear_rate2", [] {
        return ModelSpec{"test_linear_rate2", DriftSpec::linear(2.0), DriftSpec::linear(2.0), VectorFieldSpec::sine()};
    });
    CHECK(make_model("test_linear_rate2").f.d2() == 2.0);
    const auto names = model_names();
    CHECK(std::find(names.begin(), names.end(), "test_linear_rate2") != names.end());
    CHECK(std::find(names.begin(), names.end(), "double_well_sin") != names.end());
}
