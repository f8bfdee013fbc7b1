#pragma once

#include "roughsync/paths.hpp"
#include "roughsync/report.hpp"

#include <iosfwd>
#include <vector>

namespace roughsync {

/// Discrete p-variation over grid partitions of `range`: exact via dynamic programming.
/// Increments use the Euclidean norm. A single-point range has variation 0.
double p_variation(const GridPath& path, double p, IndexRange range);
double p_variation(const GridPath& path, double p);

/// p-th power of the p-variation on [start, t] for every t in [start, last];
/// entry k belongs to t = start + k. One O((last-start)^2) pass.
std::vector<double> p_variation_powers_from(const GridPath& path, double p, std::size_t start,
                                            std::size_t last);

/// Rough-path variation norm (|||x|||_p^p + |||X|||_q^q)^{1/p}, q = p/2, with the
/// Frobenius norm on area tensors.
double p_variation(const RoughLift& lift, double p, IndexRange range);
double p_variation(const RoughLift& lift, double p);

/// q-variation of the area tensors alone, (sup_P sum ||X_{u,v}||^q)^{1/q}.
double area_q_variation(const RoughLift& lift, double q, IndexRange range);

/// max over grid pairs of ||x_{s,t}|| / |t-s|^alpha.
double holder_seminorm(const GridPath& path, double alpha, IndexRange range);
double holder_seminorm(const GridPath& path, double alpha);

/// Superadditivity w(s,u) + w(u,t) <= w(s,t) of w = |||x|||_p^p over every grid
/// triple. Paths are limited to 64 points.
CheckReport check_control_superadditivity(const GridPath& path, double p);

/// sum_i w_i <= |||x|||^p_I <= N^{p-1} sum_i w_i for the partition given by grid
/// indices (first must be 0, last must be the final index).
CheckReport check_partition_sandwich(const GridPath& path, double p,
                          const std::vector<std::size_t>& partition);

struct VariationFlavor {
    enum class Kind { PVar, Holder };
    Kind kind = Kind::PVar;
    double exponent = 2.0;  // p for PVar, alpha for Holder

    static VariationFlavor pvar(double p) { return {Kind::PVar, p}; }
    static VariationFlavor holder(double alpha) { return {Kind::Holder, alpha}; }
};

/// How the continuous infimum is placed on the grid.
///  FirstCrossing: tau_{i+1} is the first grid point where the functional on
///    [tau_i, t] reaches gamma; [tau_i, tau_{i+1}) stays below gamma.
///  LastBelow: tau_{i+1} is the last grid point keeping the closed interval
///    strictly below gamma; a single step at or above gamma is accepted and flagged.
enum class GreedyRule { FirstCrossing, LastBelow };

struct GreedyPartition {
    std::vector<std::size_t> indices;  // tau_i as grid indices
    std::vector<double> times;
    std::vector<double> interval_values;  // functional on each closed [tau_i, tau_{i+1}]
    std::vector<bool> flagged;            // single step already at or above gamma
    double gamma = 0.0;
    VariationFlavor flavor;
    GreedyRule rule = GreedyRule::FirstCrossing;

    /// Number of intervals N.
    std::size_t count() const noexcept { return indices.empty() ? 0 : indices.size() - 1; }
};

/// Greedy stopping times over the whole grid. Holder flavor uses
/// (t - tau_i)^alpha + |||x|||_{alpha,[tau_i,t]} and requires gamma in (0, 1).
GreedyPartition greedy_times(const GridPath& path, double gamma, VariationFlavor flavor,
                             GreedyRule rule = GreedyRule::FirstCrossing);
/// Greedy stopping times for the rough-path variation norm of a lift.
GreedyPartition greedy_times(const RoughLift& lift, double gamma, double p,
                             GreedyRule rule = GreedyRule::FirstCrossing);

/// N <= 1 + gamma^{-p} |||x|||^p for a PVar partition of `path`.
CheckReport check_greedy_count_bound(const GridPath& path, const GreedyPartition& partition);
CheckReport check_greedy_count_bound(const RoughLift& lift, const GreedyPartition& partition);
/// N <= 1 + gamma^{-1/(a'-a)} (b-a) (1 + |||x|||_{a'})^{1/(a'-a)} for a Holder partition.
CheckReport check_holder_count_bound(const GridPath& path, const GreedyPartition& partition,
                                     double alpha_prime);

/// CSV: "index,tau,interval_seminorm" with one row per interval start, the last row is b.
void write_partition_csv(std::ostream& os, const GreedyPartition& partition);

}  // namespace roughsync
