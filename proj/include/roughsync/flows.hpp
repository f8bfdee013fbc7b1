#pragma once

#include "roughsync/paths.hpp"
#include "roughsync/report.hpp"
#include "roughsync/variation.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace roughsync {

/// Diffusion field sigma: R^m -> L(R^d, R^m) with derivatives up to order 3.
/// Directional derivatives return m x d matrices:
///   dsigma(y, v)          = D sigma(y)[v]
///   d2sigma(y, u, v)      = D^2 sigma(y)[u, v]
///   d3sigma(y, u, v, w)   = D^3 sigma(y)[u, v, w]
/// Fields built from a scalar jet (m = d = 1) take an allocation-free fast path.
class VectorFieldSpec {
public:
    using SigmaFn = std::function<Mat(const Vec&)>;
    using D1Fn = std::function<Mat(const Vec&, const Vec&)>;
    using D2Fn = std::function<Mat(const Vec&, const Vec&, const Vec&)>;
    using D3Fn = std::function<Mat(const Vec&, const Vec&, const Vec&, const Vec&)>;
    /// (s, s', s'', s''') at a scalar point.
    using ScalarJet = std::function<std::array<double, 4>(double)>;

    VectorFieldSpec(std::string name, std::size_t m, std::size_t d, SigmaFn sigma, D1Fn d1, D2Fn d2,
                    D3Fn d3, double c_sigma);

    static VectorFieldSpec scalar(std::string name, ScalarJet jet, double c_sigma);
    /// sigma(y) = diag(sin y_1, ..., sin y_m), d = m. Scalar jet when m = 1.
    static VectorFieldSpec sine(std::size_t m = 1);
    /// sigma(y) = y on R (unbounded; declared bound 1).
    static VectorFieldSpec linear_scalar();
    static VectorFieldSpec zero(std::size_t m, std::size_t d);
    static VectorFieldSpec constant(const Mat& value);

    const std::string& name() const noexcept { return name_; }
    std::size_t m() const noexcept { return m_; }
    std::size_t d() const noexcept { return d_; }
    double c_sigma() const noexcept { return c_sigma_; }
    bool has_scalar_jet() const noexcept { return static_cast<bool>(jet_); }

    Mat sigma(const Vec& y) const { return sigma_(y); }
    Mat dsigma(const Vec& y, const Vec& v) const { return d1_(y, v); }
    Mat d2sigma(const Vec& y, const Vec& u, const Vec& v) const { return d2_(y, u, v); }
    Mat d3sigma(const Vec& y, const Vec& u, const Vec& v, const Vec& w) const { return d3_(y, u, v, w); }
    std::array<double, 4> jet(double y) const { return jet_(y); }

    /// Same field with a different declared bound C_sigma (> 0).
    VectorFieldSpec with_c_sigma(double c_sigma) const;

private:
    std::string name_;
    std::size_t m_;
    std::size_t d_;
    SigmaFn sigma_;
    D1Fn d1_;
    D2Fn d2_;
    D3Fn d3_;
    ScalarJet jet_;
    double c_sigma_;
};

/// Young branch step choice. Milstein adds the area term with X = dW (x) dW / 2.
enum class YoungScheme { Euler, Milstein };

/// Noise driver: a GridPath (Young branch) or a RoughLift (rough branch).
class Driver {
public:
    explicit Driver(GridPath path);
    explicit Driver(const RoughLift& lift);

    Regime regime() const noexcept { return regime_; }
    const GridPath& path() const noexcept { return path_; }
    const TimeGrid& grid() const noexcept { return path_.grid(); }
    std::size_t dim() const noexcept { return path_.dim(); }
    std::size_t n_steps() const noexcept { return path_.grid().n_steps(); }
    /// Content hash of the driver values, e.g. "young:9f0c...".
    const std::string& id() const noexcept { return id_; }

    /// The lift (rough branch only).
    const std::optional<RoughLift>& lift() const noexcept { return lift_; }

    Vec increment(std::size_t i) const { return path_.increment(i, i + 1); }
    /// Area tensor the scheme uses on step i.
    Mat step_area(std::size_t i, YoungScheme scheme) const;

    /// Variation norm of the driver on `range`: path p-variation (Young) or the
    /// rough-path variation norm of the lift (rough).
    double variation_norm(double p, IndexRange range) const;
    double variation_norm(double p) const;
    /// Greedy partition of the driver for the matching norm.
    GreedyPartition greedy(double gamma, double p) const;

private:
    Regime regime_;
    GridPath path_;
    std::optional<RoughLift> lift_;
    std::string id_;
};

struct FlowOptions {
    YoungScheme young_scheme = YoungScheme::Milstein;
    double blowup_cap = 1e8;
};

enum class FlowDirection { Forward, Backward };

struct FlowResult {
    explicit FlowResult(GridPath traj) : trajectory(std::move(traj)) {}

    GridPath trajectory;
    std::optional<GridPath> jacobian;  // m*m row-major per point
    FlowDirection direction = FlowDirection::Forward;
    std::string driver_ref;
    std::size_t from_index = 0;
    std::size_t to_index = 0;
    /// Points where |det J| fell below 1e-12.
    std::size_t near_singular = 0;

    Mat jacobian_at(std::size_t k) const;
};

/// Stepping engine for one (field, driver, options) triple. Precomputes
/// per-step increments and areas; every query is a fresh, reentrant solve.
class FlowKernel {
public:
    FlowKernel(VectorFieldSpec sigma, const Driver& driver, FlowOptions options = {});

    const VectorFieldSpec& field() const noexcept { return sigma_; }
    const Driver& driver() const noexcept { return *driver_; }
    const FlowOptions& options() const noexcept { return options_; }

    /// phi at time t_to + theta*h started from y0 at t_from (theta in [0, 1]).
    /// When jac is given it receives d phi / d y0.
    Vec forward(const Vec& y0, std::size_t from, std::size_t to, double theta = 0.0,
                Mat* jac = nullptr) const;
    /// psi at t_from for terminal data h at time t_to + theta*h. When jac is
    /// given it receives d psi / d h.
    Vec backward(const Vec& h, std::size_t from, std::size_t to, double theta = 0.0,
                 Mat* jac = nullptr) const;

    /// One forward step of size theta on grid step i (state and, optionally, Jacobian).
    Vec step_forward(const Vec& y, std::size_t i, double theta, Mat* jac) const;
    Vec step_backward(const Vec& y, std::size_t i, double theta, Mat* jac) const;

    FlowResult forward_path(const Vec& y0, std::size_t from, std::size_t to, bool with_jacobian) const;
    FlowResult backward_path(const Vec& h, std::size_t from, std::size_t to, bool with_jacobian) const;

private:
    Vec step(const Vec& y, const Vec& dw, const Mat& area, Mat* jac) const;
    double scalar_step(double y, double dw, double area, double* jac) const;
    void guard(const Vec& y, const Vec& last, std::size_t index) const;
    /// Area of the reversed step i: dW^2 - X (zero for the Euler scheme).
    double reversed_area1(std::size_t i) const {
        return use_area_ ? dw1_[i] * dw1_[i] - area1_[i] : 0.0;
    }

    VectorFieldSpec sigma_;
    const Driver* driver_;
    FlowOptions options_;
    bool scalar_;
    bool use_area_;
    std::vector<Vec> dw_;
    std::vector<Mat> area_;  // forward area per step
    std::vector<double> dw1_, area1_;
};

/// Forward flow y_t, t in [t_from, t_to], from y0 at t_from.
FlowResult solve_forward_flow(const VectorFieldSpec& sigma, const Driver& driver, const Vec& y0,
                              std::size_t from_index, std::size_t to_index, bool with_jacobian,
                              const FlowOptions& options = {});
/// Backward flow h_t, t in [t_from, t_to], with terminal data h at t_to.
/// The Jacobian d h_t / d h_terminal is the identity at t_to.
FlowResult solve_backward_flow(const VectorFieldSpec& sigma, const Driver& driver,
                               const Vec& h_terminal, std::size_t from_index,
                               std::size_t to_index, bool with_jacobian,
                               const FlowOptions& options = {});

/// CSV: "t,y0,...,j00,j01,..." (jacobian columns only when present).
void write_flow_csv(std::ostream& os, const FlowResult& result);

/// || d phi/dy(t, z) * d psi/dh(a, phi(t, z)) - Id ||_F, passing at <= 1e-3.
CheckReport flow_inverse_jacobian_check(const VectorFieldSpec& sigma, const Driver& driver,
                                        const Vec& z, std::size_t t_index,
                                        const FlowOptions& options = {});

/// r(D) = phi(y_a + D) - phi(y_a) - d phi/dy D for D, D/2, D/4 at t_index;
/// passes when the fitted order is >= 1.8.
CheckReport frechet_remainder_check(const VectorFieldSpec& sigma, const Driver& driver,
                                    const Vec& y_a, const Vec& delta, std::size_t t_index,
                                    const FlowOptions& options = {});

/// Constants shared by the variation-based flow certificates.
struct BoundConstants {
    double p = 2.0;          // variation exponent of the driver
    double generic_c = 2.0;  // Young-Loeve constant C
};

/// sup ||ybar - y|| <= (2^{N-1} N + 1) ||ybar_a - y_a||, N the greedy count of
/// the driver at gamma = 1/(2 M), M = 8 C_sigma C (|||ybar||| + |||y||| + 1).
CheckReport lipschitz_dependence_check(const VectorFieldSpec& sigma, const Driver& driver,
                                       const Vec& y_a, const Vec& ybar_a,
                                       const BoundConstants& constants,
                                       const FlowOptions& options = {});

/// |||y|||_{p-var,[a,b]} <= N_{gamma_1}(W) with gamma_1 = 1/(4 C_sigma C).
CheckReport solution_pvar_bound_check(const VectorFieldSpec& sigma, const Driver& driver,
                                      const Vec& y_a, const BoundConstants& constants,
                                      const FlowOptions& options = {});

/// On an interval with 32 C_sigma C |||W||| <= 1:
///   |||y||| <= 4 C_sigma |||W||| <= 1/2  and
///   |||ybar - y||| <= 16 C_sigma C |||W||| ||ybar_a - y_a||.
/// Throws ValidationError when the interval violates the precondition.
CheckReport small_interval_contraction_check(const VectorFieldSpec& sigma, const Driver& driver,
                                             const Vec& y_a, const Vec& ybar_a, IndexRange range,
                                             const BoundConstants& constants,
                                             const FlowOptions& options = {});

}  // namespace roughsync
