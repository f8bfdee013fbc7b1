#include "roughsync/paths.hpp"

#include <fftw3.h>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <istream>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace roughsync {

// ---------------------------------------------------------------------------
// TimeGrid / HurstParam / GridPath

TimeGrid::TimeGrid(double a, double b, std::size_t n_steps) : a_(a), b_(b), n_(n_steps) {
    if (!std::isfinite(a) || !std::isfinite(b) || !(a < b))
        throw ValidationError(fmt::format("time grid requires finite a < b (got [{}, {}])", a, b));
    if (n_steps < 1) throw ValidationError("time grid requires n_steps >= 1");
}

double TimeGrid::time(std::size_t i) const noexcept {
    if (i >= n_) return b_;
    return a_ + static_cast<double>(i) * step();
}

TimeGrid TimeGrid::coarsened(std::size_t factor) const {
    if (factor == 0 || n_ % factor != 0)
        throw ValidationError(fmt::format("cannot coarsen {} steps by {}", n_, factor));
    return TimeGrid(a_, b_, n_ / factor);
}

HurstParam::HurstParam(double h) : h_(h) {
    if (!(h > 1.0 / 3.0 && h < 1.0))
        throw ValidationError(fmt::format("Hurst index must lie in (1/3, 1), got {}", h));
}

GridPath::GridPath(TimeGrid grid, std::size_t dim)
    : grid_(grid), dim_(dim), values_(grid.n_points() * dim, 0.0) {
    if (dim < 1) throw ValidationError("path dimension must be >= 1");
}

GridPath::GridPath(TimeGrid grid, std::size_t dim, std::vector<double> values)
    : grid_(grid), dim_(dim), values_(std::move(values)) {
    if (dim < 1) throw ValidationError("path dimension must be >= 1");
    if (values_.size() != grid_.n_points() * dim_)
        throw ValidationError(fmt::format("path needs {} values, got {}", grid_.n_points() * dim_,
                                          values_.size()));
}

Vec GridPath::vec(std::size_t i) const {
    Vec v(static_cast<Eigen::Index>(dim_));
    for (std::size_t k = 0; k < dim_; ++k) v[static_cast<Eigen::Index>(k)] = (*this)(i, k);
    return v;
}

Vec GridPath::increment(std::size_t i, std::size_t j) const {
    Vec v(static_cast<Eigen::Index>(dim_));
    for (std::size_t k = 0; k < dim_; ++k)
        v[static_cast<Eigen::Index>(k)] = (*this)(j, k) - (*this)(i, k);
    return v;
}

void GridPath::set(std::size_t i, const Vec& v) {
    for (std::size_t k = 0; k < dim_; ++k) (*this)(i, k) = v[static_cast<Eigen::Index>(k)];
}

GridPath GridPath::decimated(std::size_t factor) const {
    GridPath out(grid_.coarsened(factor), dim_);
    for (std::size_t i = 0; i < out.n_points(); ++i)
        for (std::size_t k = 0; k < dim_; ++k) out(i, k) = (*this)(i * factor, k);
    return out;
}

bool GridPath::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// fBm sampling

double fgn_autocovariance(double hurst, std::size_t lag) {
    const double k = static_cast<double>(lag);
    const double e = 2.0 * hurst;
    return 0.5 * (std::pow(k + 1.0, e) - 2.0 * std::pow(k, e) + std::pow(std::abs(k - 1.0), e));
}

double fbm_covariance(double hurst, double a, double s, double t) {
    const double e = 2.0 * hurst;
    return 0.5 * (std::pow(std::abs(s - a), e) + std::pow(std::abs(t - a), e) -
                  std::pow(std::abs(t - s), e));
}

namespace {

// FFTW's planner is not reentrant.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

class FftwBuffer {
public:
    explicit FftwBuffer(std::size_t n)
        : n_(n), data_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
        if (data_ == nullptr) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(data_); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;

    fftw_complex* data() noexcept { return data_; }
    std::size_t size() const noexcept { return n_; }

private:
    std::size_t n_;
    fftw_complex* data_;
};

class FftwForwardPlan {
public:
    FftwForwardPlan(FftwBuffer& in, FftwBuffer& out) {
        std::lock_guard lock(fftw_planner_mutex());
        plan_ = fftw_plan_dft_1d(static_cast<int>(in.size()), in.data(), out.data(), FFTW_FORWARD,
                                 FFTW_ESTIMATE);
    }
    ~FftwForwardPlan() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
    }
    FftwForwardPlan(const FftwForwardPlan&) = delete;
    FftwForwardPlan& operator=(const FftwForwardPlan&) = delete;

    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_;
};

std::mt19937_64 component_rng(std::uint64_t seed, std::size_t component) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(component), 0x9e3779b9u};
    return std::mt19937_64(seq);
}

// Unit-variance standard normal; fixed algorithm so output does not depend on
// the standard library's normal_distribution.
double standard_normal(std::mt19937_64& rng, bool& has_spare, double& spare) {
    if (has_spare) {
        has_spare = false;
        return spare;
    }
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1 = 0.0;
    do {
        u1 = std::generate_canonical<double, 53>(rng);
    } while (u1 <= 0.0);
    const double u2 = std::generate_canonical<double, 53>(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare = r * std::sin(two_pi * u2);
    has_spare = true;
    return r * std::cos(two_pi * u2);
}

struct NormalStream {
    explicit NormalStream(std::mt19937_64 r) : rng(std::move(r)) {}
    double operator()() { return standard_normal(rng, has_spare, spare); }

    std::mt19937_64 rng;
    bool has_spare = false;
    double spare = 0.0;
};

// Returns false if the circulant embedding is not nonnegative definite.
bool circulant_increments(double hurst, std::size_t n, double scale, std::uint64_t seed,
                          std::size_t dim, std::vector<std::vector<double>>& out) {
    const std::size_t m = 2 * n;
    FftwBuffer in(m), freq(m);
    FftwForwardPlan plan(in, freq);

    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t lag = k <= n ? k : m - k;
        in.data()[k][0] = fgn_autocovariance(hurst, lag);
        in.data()[k][1] = 0.0;
    }
    plan.execute();
    std::vector<double> eig(m);
    double max_eig = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        eig[k] = freq.data()[k][0];
        max_eig = std::max(max_eig, eig[k]);
    }
    for (double& e : eig) {
        if (e < -1e-10 * max_eig) return false;
        e = std::max(e, 0.0);
    }

    const double md = static_cast<double>(m);
    out.assign(dim, std::vector<double>(n));
    for (std::size_t c = 0; c < dim; ++c) {
        NormalStream normal(component_rng(seed, c));
        in.data()[0][0] = std::sqrt(eig[0] / md) * normal();
        in.data()[0][1] = 0.0;
        in.data()[n][0] = std::sqrt(eig[n] / md) * normal();
        in.data()[n][1] = 0.0;
        for (std::size_t k = 1; k < n; ++k) {
            const double s = std::sqrt(eig[k] / (2.0 * md));
            const double re = s * normal();
            const double im = s * normal();
            in.data()[k][0] = re;
            in.data()[k][1] = im;
            in.data()[m - k][0] = re;
            in.data()[m - k][1] = -im;
        }
        plan.execute();
        for (std::size_t j = 0; j < n; ++j) out[c][j] = scale * freq.data()[j][0];
    }
    return true;
}

void cholesky_increments(double hurst, std::size_t n, double scale, std::uint64_t seed,
                         std::size_t dim, std::vector<std::vector<double>>& out) {
    Eigen::MatrixXd cov(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                fgn_autocovariance(hurst, i > j ? i - j : j - i);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw ValidationError(fmt::format(
            "covariance factorization failure for H = {} on {} steps", hurst, n));
    const Eigen::MatrixXd lower = llt.matrixL();
    out.assign(dim, std::vector<double>(n));
    for (std::size_t c = 0; c < dim; ++c) {
        NormalStream normal(component_rng(seed, c));
        Eigen::VectorXd z(static_cast<Eigen::Index>(n));
        for (std::size_t j = 0; j < n; ++j) z[static_cast<Eigen::Index>(j)] = normal();
        const Eigen::VectorXd x = lower * z;
        for (std::size_t j = 0; j < n; ++j) out[c][j] = scale * x[static_cast<Eigen::Index>(j)];
    }
}

}  // namespace

GridPath sample_fbm(const HurstParam& hurst, const TimeGrid& grid, std::size_t dim,
                    std::uint64_t seed, FbmMethod method) {
    if (dim < 1) throw ValidationError("fBm dimension must be >= 1");
    const std::size_t n = grid.n_steps();
    const double h = hurst.value();
    const double scale = std::pow(grid.step(), h);  // fGn of step dt has variance dt^{2H}

    std::vector<std::vector<double>> inc;
    switch (method) {
    case FbmMethod::CirculantEmbedding:
        if (!circulant_increments(h, n, scale, seed, dim, inc))
            throw ValidationError("circulant embedding has negative eigenvalues");
        break;
    case FbmMethod::Cholesky:
        cholesky_increments(h, n, scale, seed, dim, inc);
        break;
    case FbmMethod::Auto:
        if (!circulant_increments(h, n, scale, seed, dim, inc)) {
            if (n > 1024)
                throw ValidationError(
                    "covariance factorization failure: circulant embedding failed and the "
                    "grid is too large for the Cholesky fallback");
            cholesky_increments(h, n, scale, seed, dim, inc);
        }
        break;
    }

    GridPath path(grid, dim);
    for (std::size_t c = 0; c < dim; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += inc[c][j];
            path(j + 1, c) = acc;
        }
    }
    return path;
}

// ---------------------------------------------------------------------------
// Rough lift

namespace {

Mat outer(const Vec& u, const Vec& v) { return u * v.transpose(); }

Mat zero_area(std::size_t d) {
    return Mat::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
}

}  // namespace

RoughLift::RoughLift(GridPath base, std::vector<Mat> step_areas)
    : base_(std::move(base)), step_areas_(std::move(step_areas)) {
    const std::size_t n = base_.grid().n_steps();
    const std::size_t d = base_.dim();
    if (d > static_cast<std::size_t>(kMaxDim))
        throw ValidationError(fmt::format("lift dimension {} exceeds {}", d, kMaxDim));
    if (step_areas_.size() != n) throw ValidationError("one area tensor per grid step required");
    for (const auto& a : step_areas_)
        if (a.rows() != static_cast<Eigen::Index>(d) || a.cols() != static_cast<Eigen::Index>(d))
            throw ValidationError("area tensors must be d x d");
    if (!base_.all_finite()) throw ValidationError("cannot lift a path with non-finite values");

    prefix_.reserve(n + 1);
    prefix_.push_back(zero_area(d));
    for (std::size_t j = 0; j < n; ++j)
        prefix_.push_back(prefix_[j] + step_areas_[j] +
                          outer(base_.increment(0, j), base_.increment(j, j + 1)));

    if (n <= kDenseLimit) {
        dense_.resize(n * (n + 1) / 2 * d * d);
        for (std::size_t i = 0; i < n; ++i) {
            Mat acc = zero_area(d);
            for (std::size_t j = i + 1; j <= n; ++j) {
                acc += step_areas_[j - 1] +
                       outer(base_.increment(i, j - 1), base_.increment(j - 1, j));
                double* dst = dense_.data() + pair_index(i, j) * d * d;
                for (std::size_t r = 0; r < d; ++r)
                    for (std::size_t c = 0; c < d; ++c)
                        dst[r * d + c] =
                            acc(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            }
        }
    }
}

std::size_t RoughLift::pair_index(std::size_t i, std::size_t j) const {
    const std::size_t n = base_.grid().n_steps();
    return i * n - i * (i - 1) / 2 * (i > 0 ? 1 : 0) + (j - i - 1);
}

Mat RoughLift::area(std::size_t i, std::size_t j) const {
    const std::size_t d = base_.dim();
    if (i > j) throw ValidationError("area(i, j) requires i <= j");
    if (i == j) return zero_area(d);
    if (j == i + 1) return step_areas_[i];
    if (!dense_.empty()) {
        Mat out(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        const double* src = dense_.data() + pair_index(i, j) * d * d;
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c)
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = src[r * d + c];
        return out;
    }
    // Chen: X_{0,j} = X_{0,i} + X_{i,j} + x_{0,i} (x) x_{i,j}
    return prefix_[j] - prefix_[i] - outer(base_.increment(0, i), base_.increment(i, j));
}

RoughLift lift_geometric(const GridPath& path) {
    std::vector<Mat> steps;
    steps.reserve(path.grid().n_steps());
    for (std::size_t i = 0; i < path.grid().n_steps(); ++i) {
        const Vec dx = path.increment(i, i + 1);
        steps.push_back(0.5 * outer(dx, dx));
    }
    return RoughLift(path, std::move(steps));
}

double chen_residual(const RoughLift& lift, IndexRange range) {
    const GridPath& x = lift.base();
    double worst = 0.0;
    for (std::size_t i = range.first; i <= range.last; ++i)
        for (std::size_t j = i + 1; j <= range.last; ++j) {
            const Mat xij = lift.area(i, j);
            const Vec dij = x.increment(i, j);
            for (std::size_t k = j + 1; k <= range.last; ++k) {
                const Mat xik = lift.area(i, k);
                const Mat xjk = lift.area(j, k);
                const Mat cross = outer(dij, x.increment(j, k));
                const double scale =
                    std::max({xik.norm(), xij.norm() + xjk.norm() + cross.norm(), 1e-300});
                worst = std::max(worst, (xik - xij - xjk - cross).norm() / scale);
            }
        }
    return worst;
}

double symmetric_part_residual(const RoughLift& lift, IndexRange range) {
    const GridPath& x = lift.base();
    double worst = 0.0;
    for (std::size_t i = range.first; i <= range.last; ++i)
        for (std::size_t j = i + 1; j <= range.last; ++j) {
            const Mat a = lift.area(i, j);
            const Vec dx = x.increment(i, j);
            const Mat target = 0.5 * outer(dx, dx);
            const Mat sym = 0.5 * (a + a.transpose());
            const double scale = std::max({target.norm(), a.norm(), 1e-300});
            worst = std::max(worst, (sym - target).norm() / scale);
        }
    return worst;
}

// ---------------------------------------------------------------------------
// CSV

void write_path_csv(std::ostream& os, const GridPath& path) {
    os << 't';
    for (std::size_t k = 0; k < path.dim(); ++k) os << ",x" << k;
    os << '\n';
    for (std::size_t i = 0; i < path.n_points(); ++i) {
        os << fmt::format("{:.17g}", path.grid().time(i));
        for (std::size_t k = 0; k < path.dim(); ++k) os << fmt::format(",{:.17g}", path(i, k));
        os << '\n';
    }
}

void write_area_csv(std::ostream& os, const RoughLift& lift, bool all_pairs) {
    const std::size_t d = lift.dim();
    const std::size_t n = lift.base().grid().n_steps();
    os << "i,j";
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) os << ",a" << r << c;
    os << '\n';
    auto row = [&](std::size_t i, std::size_t j) {
        const Mat a = lift.area(i, j);
        os << i << ',' << j;
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c)
                os << fmt::format(",{:.17g}",
                                  a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        os << '\n';
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (all_pairs)
            for (std::size_t j = i + 1; j <= n; ++j) row(i, j);
        else
            row(i, i + 1);
    }
}

GridPath read_path_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ValidationError("empty path CSV");
    const auto dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (dim == 0) throw ValidationError("path CSV needs at least one component column");
    std::vector<double> times;
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(row, cell, ',')) {
            const double v = std::stod(cell);
            if (col == 0)
                times.push_back(v);
            else
                values.push_back(v);
            ++col;
        }
        if (col != dim + 1) throw ValidationError("ragged row in path CSV");
    }
    if (times.size() < 2) throw ValidationError("path CSV needs at least two rows");
    return GridPath(TimeGrid(times.front(), times.back(), times.size() - 1), dim,
                    std::move(values));
}

}  // namespace roughsync
