#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cclv {

/// Uniform grid in log-moneyness.
struct UniformGrid {
    double start = 0.0;
    double step = 0.0;
    std::size_t size = 0;

    static UniformGrid covering(double lo, double hi, std::size_t nodes);
    double operator[](std::size_t i) const { return start + step * static_cast<double>(i); }
    double back() const { return (*this)[size - 1]; }
    std::vector<double> nodes() const;
};

/// Calibrated L_j(y, t_i) for one delivery.
///
/// Lookup is linear in y with flat extrapolation and piecewise constant in t:
/// slice i applies on [t_i, t_{i+1}), and the first slice also covers [0, t_1).
/// Slices are appended in time order and never modified afterwards.
class LeverageSurface {
public:
    LeverageSurface(std::size_t index, double delivery, UniformGrid grid);

    void commit_slice(double t, std::vector<double> values);

    double operator()(double y, double t) const { return at_slice(slice_index(t), y); }
    double at_slice(std::size_t slice, double y) const { return interpolate(values_[slice].data(), y); }
    /// Linear interpolation on this surface's grid over an arbitrary node array.
    double interpolate(const double* values, double y) const;

    std::size_t slice_index(double t) const;
    std::size_t index() const { return index_; }
    double delivery() const { return delivery_; }
    const UniformGrid& grid() const { return grid_; }
    const std::vector<double>& times() const { return times_; }
    std::span<const double> slice(std::size_t i) const { return values_[i]; }
    std::size_t slice_count() const { return times_.size(); }
    bool empty() const { return times_.empty(); }

private:
    std::size_t index_;
    double delivery_;
    UniformGrid grid_;
    double inv_step_;
    std::vector<double> times_;
    std::vector<std::vector<double>> values_;
};

}  // namespace cclv
