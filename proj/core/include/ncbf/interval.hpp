#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace ncbf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Point in state space (SI units of the selected system).
using State = Eigen::VectorXd;
/// Control input, one entry per actuator.
using Input = Eigen::VectorXd;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    static Interval point(double v) { return {v, v}; }

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }

    Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }
    Interval operator-(const Interval& o) const { return {lo - o.hi, hi - o.lo}; }
    Interval operator*(double s) const { return s >= 0 ? Interval{lo * s, hi * s} : Interval{hi * s, lo * s}; }
    Interval operator*(const Interval& o) const {
        const double a = lo * o.lo, b = lo * o.hi, c = hi * o.lo, d = hi * o.hi;
        return {std::min(std::min(a, b), std::min(c, d)), std::max(std::max(a, b), std::max(c, d))};
    }
};

inline Interval operator*(double s, const Interval& i) { return i * s; }

/// Elementwise interval box; lo(i) <= hi(i).
struct IntervalVector {
    Vec lo;
    Vec hi;

    IntervalVector() = default;
    IntervalVector(Vec l, Vec h) : lo(std::move(l)), hi(std::move(h)) {
        if (lo.size() != hi.size()) throw std::invalid_argument("IntervalVector: size mismatch");
    }
    explicit IntervalVector(Eigen::Index n) : lo(Vec::Zero(n)), hi(Vec::Zero(n)) {}

    static IntervalVector point(const Vec& v) { return {v, v}; }

    Eigen::Index size() const { return lo.size(); }
    Interval operator[](Eigen::Index i) const { return {lo(i), hi(i)}; }
    void set(Eigen::Index i, Interval v) {
        lo(i) = v.lo;
        hi(i) = v.hi;
    }
    Vec width() const { return hi - lo; }
    bool contains(const Vec& v, double tol = 0.0) const {
        for (Eigen::Index i = 0; i < size(); ++i)
            if (v(i) < lo(i) - tol || v(i) > hi(i) + tol) return false;
        return true;
    }
};

/// Axis-aligned box given by center and per-dimension half-width.
struct HyperRect {
    Vec center;
    Vec radius;

    HyperRect() = default;
    HyperRect(Vec c, Vec r) : center(std::move(c)), radius(std::move(r)) {
        if (center.size() != radius.size()) throw std::invalid_argument("HyperRect: size mismatch");
        if ((radius.array() < 0.0).any()) throw std::invalid_argument("HyperRect: negative radius");
    }

    static HyperRect from_bounds(const Vec& lo, const Vec& hi) {
        return {0.5 * (lo + hi), 0.5 * (hi - lo)};
    }

    Eigen::Index dim() const { return center.size(); }
    Vec lower() const { return center - radius; }
    Vec upper() const { return center + radius; }
    IntervalVector bounds() const { return {lower(), upper()}; }
    double volume() const { return (2.0 * radius).prod(); }
    bool contains(const Vec& x, double tol = 0.0) const {
        return ((x - center).cwiseAbs().array() <= radius.array() + tol).all();
    }
};

}  // namespace ncbf
