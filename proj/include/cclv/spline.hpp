#pragma once

#include <span>
#include <vector>

namespace cclv {

/// Natural cubic spline with linear continuation outside the knot range.
///
/// The outer slopes default to the spline's end slopes and can be overridden
/// (the continuation is then only C0 at the boundary knots).
class CubicSpline {
public:
    struct Point {
        double value;
        double d1;
        double d2;
    };

    CubicSpline() = default;
    CubicSpline(std::span<const double> x, std::span<const double> y);

    Point eval(double x) const;
    double operator()(double x) const { return eval(x).value; }

    double front() const { return x_.front(); }
    double back() const { return x_.back(); }
    const std::vector<double>& knots() const { return x_; }
    const std::vector<double>& values() const { return y_; }

    /// Spline slope at the first/last knot.
    double end_slope_left() const;
    double end_slope_right() const;

    void set_extrapolation_slopes(double left, double right);
    double left_slope() const { return left_slope_; }
    double right_slope() const { return right_slope_; }

    /// Same spline with every ordinate multiplied by `factor`.
    CubicSpline scaled(double factor) const;

private:
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_;  // second derivatives at the knots
    double left_slope_ = 0.0;
    double right_slope_ = 0.0;
};

}  // namespace cclv
