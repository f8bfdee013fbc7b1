#pragma once

#include "roughsync/flows.hpp"
#include "roughsync/report.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace roughsync {

/// Drift f: R^m -> R^m with the dissipativity certificate
///   <y, f(y)> <= |y| (D1 - D2 |y|)   and   |f(y) - pi_y f(y)| <= C_fg (|y| + 1),
/// pi_y the projection onto span{y}.
class DriftSpec {
public:
    using Fn = std::function<Vec(const Vec&)>;

    DriftSpec(std::string name, std::size_t m, Fn f, double d1, double d2, double c_fg,
              double probe_radius = 10.0);

    /// x - x^3 - shift on R, with the tightest D1 for D2 = 1.
    static DriftSpec double_well(double shift = 0.0);
    /// -rate * y on R^m (D1 = 0, D2 = rate, C_fg = 0).
    static DriftSpec linear(double rate = 1.0, std::size_t m = 1);

    const std::string& name() const noexcept { return name_; }
    std::size_t m() const noexcept { return m_; }
    double d1() const noexcept { return d1_; }
    double d2() const noexcept { return d2_; }
    double c_fg() const noexcept { return c_fg_; }
    double probe_radius() const noexcept { return probe_radius_; }

    Vec operator()(const Vec& y) const { return f_(y); }
    const Fn& function() const noexcept { return f_; }

private:
    std::string name_;
    std::size_t m_;
    Fn f_;
    double d1_;
    double d2_;
    double c_fg_;
    double probe_radius_;
};

/// Constants entering the synchronization bounds.
struct SyncBoundParams {
    double lambda = 0.5;
    double delta_lambda = 0.0;  // fitted absorption rate
    double cbar_lambda = 0.0;   // fitted constant C of the absorbing bound
    double c_fg_sup = 0.0;      // sup of |f| + |g| over the absorbing ball
    double radius = 0.0;        // absorbing radius
};

/// Probe-based certificate of both A1 inequalities (0, axis points, boundary
/// points and uniform interior samples of the probe ball). PASS iff every
/// margin is >= -1e-12.
CheckReport check_a1(const DriftSpec& drift, std::size_t n_probes, std::uint64_t seed);

/// Probe-based sup norms of sigma and its first three derivatives (operator
/// norms estimated over probe directions) against the declared C_sigma.
CheckReport check_a2(const VectorFieldSpec& sigma, std::size_t n_probes, std::uint64_t seed,
                     double probe_radius = 10.0);

/// y -> (f(y) + g(y)) / 2 with averaged constants (identical to the inputs when
/// both drifts share them).
DriftSpec averaged_drift(const DriftSpec& f, const DriftSpec& g);

/// sup_{|y| <= radius} |f(y)| + |g(y)|: grid search along fixed rays followed by
/// bounded Brent refinement around every grid maximum.
double estimate_sup_constant(const DriftSpec& f, const DriftSpec& g, double radius,
                             std::size_t n_directions = 64, std::uint64_t seed = 0);

/// Drift pair plus diffusion field.
struct ModelSpec {
    std::string name;
    DriftSpec f;
    DriftSpec g;
    VectorFieldSpec sigma;
};

/// Built-ins: "double_well_sin" (f = g = x - x^3, sigma = sin),
/// "double_well_asym_sin" (g = x - x^3 - 1/2), "linear" (f = g = -y, sigma = 1/2),
/// plus anything added through register_model.
ModelSpec make_model(const std::string& name);
std::vector<std::string> model_names();
void register_model(const std::string& name, std::function<ModelSpec()> factory);

}  // namespace roughsync
