#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace roughsync {

/// Largest state (m) or driver (d) dimension supported by the fixed-capacity
/// vector and matrix types below. Keeps the flow kernels allocation-free.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// Bad input: invalid parameters, inconsistent grids, dimension mismatch.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical scheme produced non-finite or runaway values.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t index, Vec last_finite)
        : std::runtime_error(what + " (time index " + std::to_string(index) + ")"),
          index_(index), last_finite_(std::move(last_finite)) {}

    std::size_t index() const noexcept { return index_; }
    const Vec& last_finite_state() const noexcept { return last_finite_; }

private:
    std::size_t index_;
    Vec last_finite_;
};

/// Inclusive range of grid indices [first, last].
struct IndexRange {
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t size() const noexcept { return last - first + 1; }
};

}  // namespace roughsync
