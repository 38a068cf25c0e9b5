#include "cclv/leverage_surface.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cclv {

UniformGrid UniformGrid::covering(double lo, double hi, std::size_t nodes) {
    if (nodes < 2 || !(hi > lo)) throw std::invalid_argument("grid needs lo < hi and at least 2 nodes");
    return {lo, (hi - lo) / static_cast<double>(nodes - 1), nodes};
}

std::vector<double> UniformGrid::nodes() const {
    std::vector<double> out(size);
    for (std::size_t i = 0; i < size; ++i) out[i] = (*this)[i];
    return out;
}

LeverageSurface::LeverageSurface(std::size_t index, double delivery, UniformGrid grid)
    : index_(index), delivery_(delivery), grid_(grid) {
    if (grid_.size < 2 || !(grid_.step > 0.0)) throw std::invalid_argument("leverage grid needs 2+ nodes");
    inv_step_ = 1.0 / grid_.step;
}

void LeverageSurface::commit_slice(double t, std::vector<double> values) {
    if (values.size() != grid_.size) throw std::invalid_argument("leverage slice size does not match grid");
    if (!times_.empty() && !(t > times_.back())) throw std::invalid_argument("leverage slices must be committed in time order");
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("leverage values must be positive and finite");
    }
    times_.push_back(t);
    values_.push_back(std::move(values));
}

double LeverageSurface::interpolate(const double* values, double y) const {
    const double u = (y - grid_.start) * inv_step_;
    if (!(u > 0.0)) return values[0];
    const double last = static_cast<double>(grid_.size - 1);
    if (u >= last) return values[grid_.size - 1];
    const auto i = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(i);
    return values[i] + frac * (values[i + 1] - values[i]);
}

std::size_t LeverageSurface::slice_index(double t) const {
    if (times_.empty()) throw std::logic_error("leverage surface has no slices");
    const auto it = std::upper_bound(times_.begin(), times_.end(), t + 1e-12);
    if (it == times_.begin()) return 0;
    return static_cast<std::size_t>(it - times_.begin()) - 1;
}

}  // namespace cclv
