#pragma once

#include "roughsync/paths.hpp"
#include "roughsync/report.hpp"

#include <functional>

namespace roughsync {

/// Left-point sum  sum_i y_{t_i} x_{t_i,t_{i+1}}  over `range`.
/// y has dim m*d and is read as an m x d matrix (row-major) per grid point;
/// x has dim d. The result has dimension m.
Eigen::VectorXd young_integral(const GridPath& y, const GridPath& x, IndexRange range);
Eigen::VectorXd young_integral(const GridPath& y, const GridPath& x);

/// Path controlled by a reference driver x (dim d):
///   y    : dim m*d, entry (r, k) at r*d + k
///   y'   : dim m*d*d, entry (r, k, l) at (r*d + k)*d + l, so that
///          y_{s,t} = y'_s x_{s,t} + R^y_{s,t}  with (y'_s x)_{rk} = sum_l y'_{rkl} x^l.
class ControlledPath {
public:
    ControlledPath(GridPath y, GridPath y_prime, GridPath driver, std::size_t m);

    const GridPath& y() const noexcept { return y_; }
    const GridPath& y_prime() const noexcept { return y_prime_; }
    const GridPath& driver() const noexcept { return driver_; }
    std::size_t m() const noexcept { return m_; }
    std::size_t d() const noexcept { return driver_.dim(); }

    /// R^y_{s,t} = y_{s,t} - y'_s x_{s,t} (length m*d).
    Eigen::VectorXd remainder(std::size_t s, std::size_t t) const;

    /// Scalar pair y = f(x), y' = f'(x) for a one-dimensional driver.
    static ControlledPath composed(const GridPath& x, const std::function<double(double)>& f,
                                   const std::function<double(double)>& df);

private:
    GridPath y_;
    GridPath y_prime_;
    GridPath driver_;
    std::size_t m_;
};

/// Compensated sum  sum_i (y_{t_i} x_{t_i,t_{i+1}} + y'_{t_i} X_{t_i,t_{i+1}})  with
/// (y' X)_r = sum_{k,l} y'_{rkl} X^{lk}. The lift must be built over the
/// controlled path's driver.
Eigen::VectorXd rough_integral(const ControlledPath& controlled, const RoughLift& lift,
                               IndexRange range);
Eigen::VectorXd rough_integral(const ControlledPath& controlled, const RoughLift& lift);

/// Young-Loeve estimate on the grid decimated by 4 inside `range`:
///   ||int_s^t y dx - y_s x_{s,t}|| <= C |||x|||_{p,[s,t]} |||y|||_{q,[s,t]}
/// with the integral taken on the full grid. Reports the smallest admissible
/// C >= 1 and fails when it exceeds 100.
CheckReport check_young_loeve(const GridPath& y, const GridPath& x, double p, double q,
                              IndexRange range);

/// Remainder  ||int_s^t - y_s x_{s,t} - y'_s X_{s,t}||  on dyadic subintervals of
/// `range` (lengths of 2, 4, ... grid steps). Reports the fitted log-log
/// exponent against |t-s| and passes when it is >= 3 alpha - 0.2.
CheckReport check_rough_remainder(const ControlledPath& controlled, const RoughLift& lift,
                                  double alpha, IndexRange range);

}  // namespace roughsync
