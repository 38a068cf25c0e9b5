#include "cclv/spline.hpp"

#include <algorithm>
#include <stdexcept>

namespace cclv {

CubicSpline::CubicSpline(std::span<const double> x, std::span<const double> y)
    : x_(x.begin(), x.end()), y_(y.begin(), y.end()) {
    const std::size_t n = x_.size();
    if (n < 3 || y_.size() != n) throw std::invalid_argument("cubic spline needs at least 3 matching knots");
    for (std::size_t i = 1; i < n; ++i) {
        if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("spline knots must be strictly increasing");
    }

    // Natural boundary: m_0 = m_{n-1} = 0; Thomas algorithm on the interior.
    m_.assign(n, 0.0);
    std::vector<double> diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h0 = x_[i] - x_[i - 1];
        const double h1 = x_[i + 1] - x_[i];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    for (std::size_t i = 2; i + 1 < n; ++i) {
        const double lower = x_[i] - x_[i - 1];
        const double w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
        m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
        if (i == 1) break;
    }
    left_slope_ = end_slope_left();
    right_slope_ = end_slope_right();
}

double CubicSpline::end_slope_left() const {
    const double h = x_[1] - x_[0];
    return (y_[1] - y_[0]) / h - h * (2.0 * m_[0] + m_[1]) / 6.0;
}

double CubicSpline::end_slope_right() const {
    const std::size_t n = x_.size();
    const double h = x_[n - 1] - x_[n - 2];
    return (y_[n - 1] - y_[n - 2]) / h + h * (m_[n - 2] + 2.0 * m_[n - 1]) / 6.0;
}

void CubicSpline::set_extrapolation_slopes(double left, double right) {
    left_slope_ = left;
    right_slope_ = right;
}

CubicSpline CubicSpline::scaled(double factor) const {
    CubicSpline s = *this;
    for (auto& v : s.y_) v *= factor;
    for (auto& v : s.m_) v *= factor;
    s.left_slope_ *= factor;
    s.right_slope_ *= factor;
    return s;
}

CubicSpline::Point CubicSpline::eval(double x) const {
    if (x <= x_.front()) {
        if (x == x_.front()) return {y_.front(), end_slope_left(), m_.front()};
        return {y_.front() + left_slope_ * (x - x_.front()), left_slope_, 0.0};
    }
    if (x >= x_.back()) {
        if (x == x_.back()) return {y_.back(), end_slope_right(), m_.back()};
        return {y_.back() + right_slope_ * (x - x_.back()), right_slope_, 0.0};
    }
    const auto hi = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
    const std::size_t lo = hi - 1;
    const double h = x_[hi] - x_[lo];
    const double a = (x_[hi] - x) / h;
    const double b = (x - x_[lo]) / h;
    const double value = a * y_[lo] + b * y_[hi] + ((a * a * a - a) * m_[lo] + (b * b * b - b) * m_[hi]) * h * h / 6.0;
    const double d1 = (y_[hi] - y_[lo]) / h - (3.0 * a * a - 1.0) * h * m_[lo] / 6.0 + (3.0 * b * b - 1.0) * h * m_[hi] / 6.0;
    const double d2 = a * m_[lo] + b * m_[hi];
    return {value, d1, d2};
}

}  // namespace cclv
