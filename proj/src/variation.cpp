#include "roughsync/variation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace roughsync {

namespace {

void validate_range(const GridPath& path, IndexRange range) {
    if (range.first > range.last || range.last >= path.n_points())
        throw ValidationError(fmt::format("index range [{}, {}] outside a grid of {} points",
                                          range.first, range.last, path.n_points()));
}

void validate_p(double p) {
    if (!(p >= 1.0) || !std::isfinite(p))
        throw ValidationError(fmt::format("p-variation needs p >= 1, got {}", p));
}

double increment_norm(const GridPath& path, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < path.dim(); ++k) {
        const double d = path(j, k) - path(i, k);
        s += d * d;
    }
    return std::sqrt(s);
}

double powered(double norm, double p) { return norm == 0.0 ? 0.0 : std::pow(norm, p); }

/// v[k] = sup over partitions of [start, start+k] of sum cost(u, v).
template <class Cost>
std::vector<double> dp_from(std::size_t start, std::size_t last, Cost cost) {
    std::vector<double> v(last - start + 1, 0.0);
    for (std::size_t j = start + 1; j <= last; ++j) {
        double best = 0.0;
        for (std::size_t i = start; i < j; ++i) best = std::max(best, v[i - start] + cost(i, j));
        v[j - start] = best;
    }
    return v;
}

/// Incremental DP used by the greedy scan: extend() appends the next grid point.
template <class Cost>
class IncrementalDp {
public:
    IncrementalDp(std::size_t start, Cost cost) : start_(start), cost_(cost), v_{0.0} {}

    double extend() {
        const std::size_t j = start_ + v_.size();
        double best = 0.0;
        for (std::size_t i = start_; i < j; ++i) best = std::max(best, v_[i - start_] + cost_(i, j));
        v_.push_back(best);
        return best;
    }
    double value_at(std::size_t t) const { return v_[t - start_]; }

private:
    std::size_t start_;
    Cost cost_;
    std::vector<double> v_;
};

/// Shared greedy driver. `make_functional(s)` returns a callable that, called
/// repeatedly, returns the functional on [s, s+1], [s, s+2], ... in order.
template <class Factory>
GreedyPartition run_greedy(const TimeGrid& grid, double threshold, GreedyRule rule,
                           Factory make_functional, double (*to_value)(double, double),
                           double value_param) {
    GreedyPartition out;
    const std::size_t n = grid.n_steps();
    std::size_t s = 0;
    out.indices.push_back(0);
    out.times.push_back(grid.time(0));
    while (s < n) {
        auto functional = make_functional(s);
        double prev = 0.0;
        std::size_t next = n;
        double value = 0.0;
        bool flag = false;
        for (std::size_t t = s + 1; t <= n; ++t) {
            const double f = functional();
            if (f >= threshold) {
                if (rule == GreedyRule::FirstCrossing || t == s + 1) {
                    next = t;
                    value = f;
                    flag = rule == GreedyRule::LastBelow;
                } else {
                    next = t - 1;
                    value = prev;
                }
                break;
            }
            prev = f;
            value = f;
        }
        out.indices.push_back(next);
        out.times.push_back(grid.time(next));
        out.interval_values.push_back(to_value(value, value_param));
        out.flagged.push_back(flag);
        s = next;
    }
    return out;
}

double root_value(double v, double p) { return v == 0.0 ? 0.0 : std::pow(v, 1.0 / p); }
double identity_value(double v, double) { return v; }

}  // namespace

std::vector<double> p_variation_powers_from(const GridPath& path, double p, std::size_t start,
                                            std::size_t last) {
    validate_p(p);
    validate_range(path, {start, last});
    return dp_from(start, last,
                   [&](std::size_t i, std::size_t j) { return powered(increment_norm(path, i, j), p); });
}

double p_variation(const GridPath& path, double p, IndexRange range) {
    const auto v = p_variation_powers_from(path, p, range.first, range.last);
    return root_value(v.back(), p);
}

double p_variation(const GridPath& path, double p) {
    return p_variation(path, p, {0, path.n_points() - 1});
}

double area_q_variation(const RoughLift& lift, double q, IndexRange range) {
    if (!(q > 0.0)) throw ValidationError("area variation needs q > 0");
    validate_range(lift.base(), range);
    const auto v = dp_from(range.first, range.last, [&](std::size_t i, std::size_t j) {
        return powered(lift.area(i, j).norm(), q);
    });
    return root_value(v.back(), q);
}

double p_variation(const RoughLift& lift, double p, IndexRange range) {
    validate_p(p);
    const double q = p / 2.0;
    const double x = p_variation(lift.base(), p, range);
    const double a = area_q_variation(lift, q, range);
    return root_value(powered(x, p) + powered(a, q), p);
}

double p_variation(const RoughLift& lift, double p) {
    return p_variation(lift, p, {0, lift.base().n_points() - 1});
}

double holder_seminorm(const GridPath& path, double alpha, IndexRange range) {
    validate_range(path, range);
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ValidationError(fmt::format("Holder exponent must lie in (0, 1], got {}", alpha));
    const TimeGrid& g = path.grid();
    double best = 0.0;
    for (std::size_t i = range.first; i <= range.last; ++i)
        for (std::size_t j = i + 1; j <= range.last; ++j)
            best = std::max(best, increment_norm(path, i, j) /
                                      std::pow(g.time(j) - g.time(i), alpha));
    return best;
}

double holder_seminorm(const GridPath& path, double alpha) {
    return holder_seminorm(path, alpha, {0, path.n_points() - 1});
}

CheckReport check_control_superadditivity(const GridPath& path, double p) {
    validate_p(p);
    const std::size_t n = path.n_points();
    if (n > 64) throw ValidationError("superadditivity check is limited to 64 grid points");
    std::vector<std::vector<double>> w(n);
    for (std::size_t s = 0; s < n; ++s) w[s] = p_variation_powers_from(path, p, s, n - 1);
    double worst = 0.0;
    std::size_t triples = 0;
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t u = s + 1; u < n; ++u)
            for (std::size_t t = u + 1; t < n; ++t) {
                const double lhs = w[s][u - s] + w[u][t - u];
                const double rhs = w[s][t - s];
                worst = std::max(worst, (lhs - rhs) / std::max(1.0, rhs));
                ++triples;
            }
    CheckReport r{"control_superadditivity"};
    r.set("p", p).set("triples", static_cast<double>(triples)).set("max_violation", worst);
    r.passed = worst <= 1e-12;
    return r;
}

CheckReport check_partition_sandwich(const GridPath& path, double p,
                          const std::vector<std::size_t>& partition) {
    validate_p(p);
    if (partition.size() < 2 || partition.front() != 0 ||
        partition.back() != path.n_points() - 1 ||
        !std::is_sorted(partition.begin(), partition.end()) ||
        std::adjacent_find(partition.begin(), partition.end()) != partition.end())
        throw ValidationError("partition must be strictly increasing from 0 to the last index");
    const double nblocks = static_cast<double>(partition.size() - 1);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < partition.size(); ++i)
        sum += p_variation_powers_from(path, p, partition[i], partition[i + 1]).back();
    const double total = p_variation_powers_from(path, p, 0, path.n_points() - 1).back();
    const double upper = std::pow(nblocks, p - 1.0) * sum;
    const double tol = 1e-12 * std::max(1.0, total);

    CheckReport r{"partition_sandwich"};
    r.set("p", p).set("blocks", nblocks).set("block_sum", sum).set("total", total).set("upper", upper);
    r.set("lower_margin", total - sum).set("upper_margin", upper - total);
    r.passed = sum <= total + tol && total <= upper + tol;
    return r;
}

GreedyPartition greedy_times(const GridPath& path, double gamma, VariationFlavor flavor,
                             GreedyRule rule) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw ValidationError(fmt::format("greedy threshold must be positive, got {}", gamma));
    GreedyPartition out;
    if (flavor.kind == VariationFlavor::Kind::PVar) {
        const double p = flavor.exponent;
        validate_p(p);
        out = run_greedy(
            path.grid(), std::pow(gamma, p), rule,
            [&](std::size_t s) {
                auto cost = [&path, p](std::size_t i, std::size_t j) {
                    return powered(increment_norm(path, i, j), p);
                };
                return [dp = IncrementalDp<decltype(cost)>(s, cost)]() mutable { return dp.extend(); };
            },
            root_value, p);
    } else {
        const double alpha = flavor.exponent;
        if (!(alpha > 0.0 && alpha <= 1.0))
            throw ValidationError(fmt::format("Holder exponent must lie in (0, 1], got {}", alpha));
        if (!(gamma < 1.0)) throw ValidationError("Holder greedy threshold must lie in (0, 1)");
        const TimeGrid& g = path.grid();
        out = run_greedy(
            g, gamma, rule,
            [&](std::size_t s) {
                return [&path, &g, alpha, s, t = s, semi = 0.0]() mutable {
                    ++t;
                    for (std::size_t u = s; u < t; ++u)
                        semi = std::max(semi, increment_norm(path, u, t) /
                                                  std::pow(g.time(t) - g.time(u), alpha));
                    return std::pow(g.time(t) - g.time(s), alpha) + semi;
                };
            },
            identity_value, 0.0);
    }
    out.gamma = gamma;
    out.flavor = flavor;
    out.rule = rule;
    return out;
}

GreedyPartition greedy_times(const RoughLift& lift, double gamma, double p, GreedyRule rule) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw ValidationError(fmt::format("greedy threshold must be positive, got {}", gamma));
    validate_p(p);
    const double q = p / 2.0;
    const GridPath& path = lift.base();
    GreedyPartition out = run_greedy(
        path.grid(), std::pow(gamma, p), rule,
        [&](std::size_t s) {
            auto xc = [&path, p](std::size_t i, std::size_t j) {
                return powered(increment_norm(path, i, j), p);
            };
            auto ac = [&lift, q](std::size_t i, std::size_t j) {
                return powered(lift.area(i, j).norm(), q);
            };
            return [dx = IncrementalDp<decltype(xc)>(s, xc),
                    da = IncrementalDp<decltype(ac)>(s, ac)]() mutable {
                return dx.extend() + da.extend();
            };
        },
        root_value, p);
    out.gamma = gamma;
    out.flavor = VariationFlavor::pvar(p);
    out.rule = rule;
    return out;
}

namespace {

CheckReport count_bound_report(const GreedyPartition& partition, double total, double p) {
    const double n = static_cast<double>(partition.count());
    const double bound = 1.0 + std::pow(partition.gamma, -p) * std::pow(total, p);
    CheckReport r{"greedy_count_bound"};
    r.set("count", n).set("bound", bound).set("slack", bound - n).set("gamma", partition.gamma);
    r.set("p", p).set("total_variation", total);
    r.passed = n <= bound * (1.0 + 1e-12);
    if (partition.rule == GreedyRule::LastBelow) r.note("partition built with the last-below rule");
    return r;
}

}  // namespace

CheckReport check_greedy_count_bound(const GridPath& path, const GreedyPartition& partition) {
    if (partition.flavor.kind != VariationFlavor::Kind::PVar)
        throw ValidationError("count bound applies to p-variation partitions");
    const double p = partition.flavor.exponent;
    return count_bound_report(partition, p_variation(path, p), p);
}

CheckReport check_greedy_count_bound(const RoughLift& lift, const GreedyPartition& partition) {
    if (partition.flavor.kind != VariationFlavor::Kind::PVar)
        throw ValidationError("count bound applies to p-variation partitions");
    const double p = partition.flavor.exponent;
    return count_bound_report(partition, p_variation(lift, p), p);
}

CheckReport check_holder_count_bound(const GridPath& path, const GreedyPartition& partition,
                                     double alpha_prime) {
    if (partition.flavor.kind != VariationFlavor::Kind::Holder)
        throw ValidationError("Holder count bound applies to Holder partitions");
    const double alpha = partition.flavor.exponent;
    if (!(alpha_prime > alpha && alpha_prime <= 1.0))
        throw ValidationError("alpha' must satisfy alpha < alpha' <= 1");
    const double e = 1.0 / (alpha_prime - alpha);
    const double semi = holder_seminorm(path, alpha_prime);
    const TimeGrid& g = path.grid();
    const double n = static_cast<double>(partition.count());
    const double bound = 1.0 + std::pow(partition.gamma, -e) * (g.b() - g.a()) * std::pow(1.0 + semi, e);
    CheckReport r{"holder_count_bound"};
    r.set("count", n).set("bound", bound).set("slack", bound - n).set("alpha", alpha);
    r.set("alpha_prime", alpha_prime).set("holder_seminorm", semi);
    r.passed = n <= bound * (1.0 + 1e-12);
    return r;
}

void write_partition_csv(std::ostream& os, const GreedyPartition& partition) {
    os << "index,tau,interval_seminorm\n";
    for (std::size_t i = 0; i < partition.indices.size(); ++i) {
        os << partition.indices[i] << fmt::format(",{:.17g},", partition.times[i]);
        if (i < partition.interval_values.size())
            os << fmt::format("{:.17g}", partition.interval_values[i]);
        os << '\n';
    }
}

}  // namespace roughsync
