#pragma once

#include "roughsync/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace roughsync {

/// Uniform grid t_i = a + i*h on [a, b] with h = (b - a) / n_steps.
class TimeGrid {
public:
    TimeGrid(double a, double b, std::size_t n_steps);

    double a() const noexcept { return a_; }
    double b() const noexcept { return b_; }
    std::size_t n_steps() const noexcept { return n_; }
    std::size_t n_points() const noexcept { return n_ + 1; }
    double step() const noexcept { return (b_ - a_) / static_cast<double>(n_); }
    /// Grid time; the last point is exactly b.
    double time(std::size_t i) const noexcept;

    /// Grid keeping every `factor`-th point; n_steps must be divisible by factor.
    TimeGrid coarsened(std::size_t factor) const;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    double a_;
    double b_;
    std::size_t n_;
};

enum class Regime { Young, Rough };

/// Hurst index in (1/3, 1). H = 1/2 belongs to the rough regime.
class HurstParam {
public:
    explicit HurstParam(double h);

    double value() const noexcept { return h_; }
    Regime regime() const noexcept { return h_ > 0.5 ? Regime::Young : Regime::Rough; }

private:
    double h_;
};

/// A dim-valued path sampled on every point of a TimeGrid (row-major storage).
class GridPath {
public:
    GridPath(TimeGrid grid, std::size_t dim);
    GridPath(TimeGrid grid, std::size_t dim, std::vector<double> values);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t n_points() const noexcept { return grid_.n_points(); }

    std::span<const double> at(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
    std::span<double> at(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
    double operator()(std::size_t i, std::size_t k) const { return values_[i * dim_ + k]; }
    double& operator()(std::size_t i, std::size_t k) { return values_[i * dim_ + k]; }

    /// Value at index i as a vector (dim must be <= kMaxDim).
    Vec vec(std::size_t i) const;
    /// Increment x_{i,j} = x_j - x_i.
    Vec increment(std::size_t i, std::size_t j) const;
    void set(std::size_t i, const Vec& v);

    const std::vector<double>& values() const noexcept { return values_; }

    /// Every `factor`-th point of this path on the coarsened grid.
    GridPath decimated(std::size_t factor) const;

    bool all_finite() const;

private:
    TimeGrid grid_;
    std::size_t dim_;
    std::vector<double> values_;
};

enum class FbmMethod { Auto, CirculantEmbedding, Cholesky };

/// Fractional Brownian motion with W_a = 0, dim independent components, exact
/// covariance R(s,t) = (|s-a|^{2H} + |t-a|^{2H} - |t-s|^{2H}) / 2 on the grid.
/// Deterministic in (hurst, grid, dim, seed). Auto uses circulant embedding and
/// falls back to a Cholesky factorisation (n_steps <= 1024) if the embedding
/// has negative eigenvalues.
GridPath sample_fbm(const HurstParam& hurst, const TimeGrid& grid, std::size_t dim,
                    std::uint64_t seed, FbmMethod method = FbmMethod::Auto);

/// Autocovariance of unit-step fractional Gaussian noise at lag k (times h^{2H}).
double fgn_autocovariance(double hurst, std::size_t lag);

/// Analytic fBm covariance R(s,t) for a path pinned at a.
double fbm_covariance(double hurst, double a, double s, double t);

/// Level-2 rough path over a GridPath: the base path plus the area tensors
/// X_{i,j} on grid pairs. Areas are d x d, X^{lk}_{s,t} = int_s^t x^l_{s,r} dx^k_r.
class RoughLift {
public:
    /// Dense all-pairs storage up to this many steps, per-step + prefix above.
    static constexpr std::size_t kDenseLimit = 1024;

    RoughLift(GridPath base, std::vector<Mat> step_areas);

    const GridPath& base() const noexcept { return base_; }
    std::size_t dim() const noexcept { return base_.dim(); }
    bool dense() const noexcept { return !dense_.empty(); }

    /// X_{i,j} for i <= j (zero when i == j).
    Mat area(std::size_t i, std::size_t j) const;
    const Mat& step_area(std::size_t i) const { return step_areas_[i]; }

private:
    std::size_t pair_index(std::size_t i, std::size_t j) const;

    GridPath base_;
    std::vector<Mat> step_areas_;
    std::vector<Mat> prefix_;  // X_{0,j}
    std::vector<double> dense_;  // X_{i,j} flattened, i < j, row-major upper triangle
};

/// Lift of the piecewise-linear interpolation: X_{i,i+1} = x_{i,i+1} (x) x_{i,i+1} / 2,
/// longer pairs by Chen extension.
RoughLift lift_geometric(const GridPath& path);

/// Worst Chen residual ||X_ik - X_ij - X_jk - x_ij (x) x_jk|| / max(1, scale)
/// over all grid triples (i < j < k) inside `range`.
double chen_residual(const RoughLift& lift, IndexRange range);
/// Worst ||Sym(X_ij) - x_ij (x) x_ij / 2|| relative residual over pairs in `range`.
double symmetric_part_residual(const RoughLift& lift, IndexRange range);

/// CSV: header "t,x0,x1,...", one row per grid point.
void write_path_csv(std::ostream& os, const GridPath& path);
/// CSV: header "i,j,a00,a01,...", one row per consecutive pair (i, i+1), or
/// every pair when all_pairs is set.
void write_area_csv(std::ostream& os, const RoughLift& lift, bool all_pairs = false);
GridPath read_path_csv(std::istream& is);

}  // namespace roughsync
