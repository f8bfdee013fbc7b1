#include "roughsync/variation.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace roughsync;

namespace {

GridPath random_walk(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    GridPath x(TimeGrid(0.0, 1.0, n), dim);
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t k = 0; k < dim; ++k) x(i, k) = x(i - 1, k) + nd(rng);
    return x;
}

/// Exhaustive oracle: every subset of interior points, endpoints fixed.
double brute_pvar(const GridPath& x, double p) {
    const std::size_t n = x.grid().n_steps();
    double best = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (n - 1)); ++mask) {
        double sum = 0.0;
        std::size_t prev = 0;
        for (std::size_t i = 1; i <= n; ++i) {
            if (i < n && !(mask & (std::uint64_t{1} << (i - 1)))) continue;
            sum += std::pow(x.increment(prev, i).norm(), p);
            prev = i;
        }
        best = std::max(best, sum);
    }
    return std::pow(best, 1.0 / p);
}

GridPath linear_path(std::size_t n) {
    GridPath x(TimeGrid(0.0, 1.0, n), 1);
    for (std::size_t i = 0; i <= n; ++i) x(i, 0) = x.grid().time(i);
    return x;
}

}  // namespace

TEST_CASE("p-variation of constant and monotone paths") {
    GridPath c(TimeGrid(0.0, 1.0, 20), 2);
    for (std::size_t i = 0; i <= 20; ++i) c(i, 0) = 3.0;
    CHECK(p_variation(c, 2.5) == 0.0);
    CHECK(holder_seminorm(c, 0.3) == 0.0);

    GridPath m(TimeGrid(0.0, 1.0, 20), 1);
    for (std::size_t i = 0; i <= 20; ++i) m(i, 0) = std::sqrt(static_cast<double>(i));
    CHECK(p_variation(m, 1.0) == doctest::Approx(m(20, 0) - m(0, 0)).epsilon(1e-12));
    CHECK(p_variation(m, 1.0, {0, 0}) == 0.0);
}

TEST_CASE("dynamic programming matches exhaustive search") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const GridPath x = random_walk(11, 1 + seed % 2, seed);
        for (double p : {1.0, 1.5, 2.0, 3.7})
            CHECK(p_variation(x, p) == doctest::Approx(brute_pvar(x, p)).epsilon(1e-12));
    }
}

TEST_CASE("Hölder seminorm of x = t") {
    const GridPath x = linear_path(64);
    CHECK(holder_seminorm(x, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    // |t-s|^{1/2} is maximal at the full interval.
    CHECK(holder_seminorm(x, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
    const GridPath w = random_walk(64, 1, 3);
    CHECK(holder_seminorm(w, 0.3) <= holder_seminorm(w, 0.6));
}

TEST_CASE("p-variation is translation invariant and monotone under inclusion") {
    const GridPath x = random_walk(80, 2, 17);
    GridPath y = x;
    for (std::size_t i = 0; i <= 80; ++i) y(i, 1) += 5.0;
    CHECK(p_variation(y, 2.2) == doctest::Approx(p_variation(x, 2.2)).epsilon(1e-13));
    CHECK(p_variation(x, 2.2, {10, 40}) <= p_variation(x, 2.2, {5, 60}));
    CHECK(p_variation(x, 2.2, {5, 60}) <= p_variation(x, 2.2));
    // Larger p gives a smaller norm.
    CHECK(p_variation(x, 3.0) <= p_variation(x, 2.0));
}

TEST_CASE("p-variation powers from a start agree with direct evaluation") {
    const GridPath x = random_walk(40, 1, 8);
    const auto powers = p_variation_powers_from(x, 2.5, 7, 33);
    REQUIRE(powers.size() == 27);
    for (std::size_t k = 0; k < powers.size(); ++k)
        CHECK(powers[k] == doctest::Approx(std::pow(p_variation(x, 2.5, {7, 7 + k}), 2.5)).epsilon(1e-12));
}

TEST_CASE("control superadditivity and the partition lemma") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const GridPath x = random_walk(16, 2, 100 + seed);
        CHECK(check_control_superadditivity(x, 2.0).passed);
        CHECK(check_partition_sandwich(x, 2.0, {0, 5, 9, 16}).passed);
        CHECK(check_partition_sandwich(x, 1.5, {0, 16}).passed);
    }
    const GridPath m = linear_path(12);
    const CheckReport r = check_partition_sandwich(m, 1.0, {0, 4, 12});
    CHECK(r.passed);
    CHECK_THROWS_AS(check_partition_sandwich(m, 1.0, {1, 12}), ValidationError);
}

TEST_CASE("greedy partition invariants") {
    const GridPath x = sample_fbm(HurstParam(0.7), TimeGrid(0.0, 1.0, 512), 1, 4);
    const double p = 1.0 / 0.55;

    SUBCASE("gamma above the total variation gives one interval") {
        const GreedyPartition part = greedy_times(x, 2.0 * p_variation(x, p), VariationFlavor::pvar(p));
        CHECK(part.count() == 1);
        GridPath c(TimeGrid(0.0, 1.0, 10), 1);
        CHECK(greedy_times(c, 0.1, VariationFlavor::pvar(2.0)).count() == 1);
    }
    SUBCASE("first crossing") {
        const double gamma = 0.25;
        const GreedyPartition part = greedy_times(x, gamma, VariationFlavor::pvar(p));
        REQUIRE(part.count() >= 2);
        CHECK(part.indices.front() == 0);
        CHECK(part.indices.back() == 512);
        for (std::size_t i = 0; i + 1 < part.indices.size(); ++i) {
            const std::size_t s = part.indices[i], t = part.indices[i + 1];
            CHECK(t > s);
            if (t - s > 1) CHECK(p_variation(x, p, {s, t - 1}) < gamma);
            if (i + 2 < part.indices.size()) CHECK(p_variation(x, p, {s, t}) >= gamma);
        }
        CHECK(check_greedy_count_bound(x, part).passed);
        // Regression constant for this seed, frozen after the first run.
        CHECK(part.count() == 8);
    }
    SUBCASE("last below") {
        const double gamma = 0.25;
        const GreedyPartition part = greedy_times(x, gamma, VariationFlavor::pvar(p), GreedyRule::LastBelow);
        for (std::size_t i = 0; i + 1 < part.indices.size(); ++i) {
            const std::size_t s = part.indices[i], t = part.indices[i + 1];
            if (!part.flagged[i]) CHECK(p_variation(x, p, {s, t}) < gamma);
            else CHECK(t == s + 1);
        }
        CHECK(part.count() >= greedy_times(x, gamma, VariationFlavor::pvar(p)).count());
    }
    SUBCASE("Hölder flavor") {
        const GreedyPartition part = greedy_times(x, 0.5, VariationFlavor::holder(0.5));
        CHECK(part.count() >= 2);
        CHECK(check_holder_count_bound(x, part, 0.6).passed);
        CHECK_THROWS_AS(greedy_times(x, 1.0, VariationFlavor::holder(0.5)), ValidationError);
    }
    CHECK_THROWS_AS(greedy_times(x, 0.0, VariationFlavor::pvar(p)), ValidationError);
}

TEST_CASE("greedy partition of a lift") {
    const RoughLift lift = lift_geometric(sample_fbm(HurstParam(0.4), TimeGrid(0.0, 1.0, 256), 2, 6));
    const double p = 2.7;
    CHECK(p_variation(lift, p) >= p_variation(lift.base(), p));
    const GreedyPartition part = greedy_times(lift, 0.5, p);
    CHECK(part.count() >= 2);
    CHECK(check_greedy_count_bound(lift, part).passed);
}

TEST_CASE("partition CSV layout") {
    const GreedyPartition part = greedy_times(linear_path(8), 0.3, VariationFlavor::pvar(1.0));
    std::ostringstream os;
    write_partition_csv(os, part);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "index,tau,interval_seminorm");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == part.indices.size());
}
