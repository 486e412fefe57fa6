#pragma once

// Forward-mode dual numbers.
//
// A Dual carries a value and a vector of partial derivatives with respect to
// the active seed directions. A Dual with an empty partials vector is a
// constant and combines with Duals of any length. Two non-constant Duals with
// different partials lengths cannot be combined.

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "adctl/errors.hpp"

namespace adctl {

class Dual {
public:
    Dual() = default;
    Dual(double value) : value_(value) {}  // NOLINT(google-explicit-constructor)
    Dual(double value, std::vector<double> partials) : value_(value), partials_(std::move(partials)) {}

    /// Independent variable `index` of `directions` seeded with a unit partial.
    static Dual variable(double value, std::size_t index, std::size_t directions) {
        std::vector<double> p(directions, 0.0);
        p.at(index) = 1.0;
        return Dual(value, std::move(p));
    }

    double value() const noexcept { return value_; }
    const std::vector<double>& partials() const noexcept { return partials_; }
    std::size_t directions() const noexcept { return partials_.size(); }
    bool is_constant() const noexcept { return partials_.empty(); }

    /// Partial along `i`; constants report zero.
    double partial(std::size_t i) const { return partials_.empty() ? 0.0 : partials_.at(i); }

    Dual operator-() const {
        Dual r(-value_, partials_);
        for (double& d : r.partials_) d = -d;
        return r;
    }
    Dual operator+() const { return *this; }

    Dual& operator+=(const Dual& o) {
        axpy(1.0, o);
        value_ += o.value_;
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        axpy(-1.0, o);
        value_ -= o.value_;
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        // d(ab) = a db + b da
        scale(o.value_);
        axpy(value_, o);
        value_ *= o.value_;
        return *this;
    }
    Dual& operator/=(const Dual& o) {
        // d(a/b) = (da - (a/b) db) / b
        const double q = value_ / o.value_;
        axpy(-q, o);
        scale(1.0 / o.value_);
        value_ = q;
        return *this;
    }
    Dual& operator+=(double c) {
        value_ += c;
        return *this;
    }
    Dual& operator-=(double c) {
        value_ -= c;
        return *this;
    }
    Dual& operator*=(double c) {
        value_ *= c;
        scale(c);
        return *this;
    }
    Dual& operator/=(double c) {
        value_ /= c;
        scale(1.0 / c);
        return *this;
    }

    friend Dual operator+(Dual a, const Dual& b) { return a += b; }
    friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
    friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
    friend Dual operator/(Dual a, const Dual& b) { return a /= b; }
    friend Dual operator+(Dual a, double c) { return a += c; }
    friend Dual operator-(Dual a, double c) { return a -= c; }
    friend Dual operator*(Dual a, double c) { return a *= c; }
    friend Dual operator/(Dual a, double c) { return a /= c; }
    friend Dual operator+(double c, Dual a) { return a += c; }
    friend Dual operator-(double c, Dual a) {
        a = -std::move(a);
        return a += c;
    }
    friend Dual operator*(double c, Dual a) { return a *= c; }
    friend Dual operator/(double c, const Dual& a) {
        const double q = c / a.value_;
        return a.chain(q, -q / a.value_);
    }

    friend bool operator==(const Dual& a, const Dual& b) { return a.value_ == b.value_; }
    friend bool operator<(const Dual& a, const Dual& b) { return a.value_ < b.value_; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.value_ > b.value_; }
    friend bool operator<=(const Dual& a, const Dual& b) { return a.value_ <= b.value_; }
    friend bool operator>=(const Dual& a, const Dual& b) { return a.value_ >= b.value_; }

    /// Result of an elementary function with value `f` and derivative `df` at this point.
    Dual chain(double f, double df) const {
        Dual r(f, partials_);
        for (double& d : r.partials_) d *= df;
        return r;
    }

    friend std::ostream& operator<<(std::ostream& os, const Dual& d) {
        os << d.value_ << " [";
        for (std::size_t i = 0; i < d.partials_.size(); ++i) os << (i ? ", " : "") << d.partials_[i];
        return os << "]";
    }

private:
    void scale(double c) {
        for (double& d : partials_) d *= c;
    }

    // partials += c * o.partials
    void axpy(double c, const Dual& o) {
        if (o.partials_.empty()) return;
        if (partials_.empty()) {
            partials_.resize(o.partials_.size(), 0.0);
        } else if (partials_.size() != o.partials_.size()) {
            throw InvalidArgumentError("Dual partials length mismatch: " + std::to_string(partials_.size()) +
                                       " vs " + std::to_string(o.partials_.size()));
        }
        const double* src = o.partials_.data();
        double* dst = partials_.data();
        const std::size_t n = partials_.size();
        for (std::size_t i = 0; i < n; ++i) dst[i] += c * src[i];
    }

    double value_ = 0.0;
    std::vector<double> partials_;
};

// Elementary functions. Plain-double overloads live alongside so generic code
// in this namespace can call sin(x) for either scalar type.

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value(); }

inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double tan(double x) { return std::tan(x); }
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double abs(double x) { return std::fabs(x); }
inline double pow(double x, double y) { return std::pow(x, y); }
inline double pow(double x, int k) { return std::pow(x, k); }

inline Dual sin(const Dual& x) { return x.chain(std::sin(x.value()), std::cos(x.value())); }
inline Dual cos(const Dual& x) { return x.chain(std::cos(x.value()), -std::sin(x.value())); }
inline Dual tan(const Dual& x) {
    const double t = std::tan(x.value());
    return x.chain(t, 1.0 + t * t);
}
inline Dual exp(const Dual& x) {
    const double e = std::exp(x.value());
    return x.chain(e, e);
}
inline Dual log(const Dual& x) { return x.chain(std::log(x.value()), 1.0 / x.value()); }
inline Dual tanh(const Dual& x) {
    const double t = std::tanh(x.value());
    return x.chain(t, 1.0 - t * t);
}
inline Dual sqrt(const Dual& x) {
    const double s = std::sqrt(x.value());
    return x.chain(s, 0.5 / s);
}
/// Derivative of |x| at x = 0 is taken as 0.
inline Dual abs(const Dual& x) {
    const double v = x.value();
    return x.chain(std::fabs(v), v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
}
inline Dual pow(const Dual& x, int k) {
    if (k == 0) return Dual(1.0);
    return x.chain(std::pow(x.value(), k), k * std::pow(x.value(), k - 1));
}
inline Dual pow(const Dual& x, double y) {
    if (y == 0.0) return Dual(1.0);
    return x.chain(std::pow(x.value(), y), y * std::pow(x.value(), y - 1.0));
}
inline Dual pow(double x, const Dual& y) {
    const double p = std::pow(x, y.value());
    return y.chain(p, x > 0.0 ? p * std::log(x) : 0.0);
}
inline Dual pow(const Dual& x, const Dual& y) {
    if (y.is_constant()) return pow(x, y.value());
    if (x.is_constant()) return pow(x.value(), y);
    // d(x^y) = y x^(y-1) dx + x^y ln(x) dy
    const double p = std::pow(x.value(), y.value());
    Dual r = x.chain(p, y.value() * std::pow(x.value(), y.value() - 1.0));
    r += y.chain(0.0, x.value() > 0.0 ? p * std::log(x.value()) : 0.0);
    return r;
}

inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(const Dual& x) {
    if (!std::isfinite(x.value())) return false;
    for (double d : x.partials())
        if (!std::isfinite(d)) return false;
    return true;
}

/// Seeds `x` as independent variables over `x.size()` directions.
inline std::vector<Dual> seed(std::span<const double> x) {
    std::vector<Dual> out;
    out.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out.push_back(Dual::variable(x[i], i, x.size()));
    return out;
}

/// A single-direction tangent pair over an arbitrary scalar type. Used to
/// take a time derivative of a function that is itself evaluated with Duals.
template <class S>
struct Tangent {
    S v{};
    S d{};

    Tangent() = default;
    Tangent(S value) : v(std::move(value)), d(0.0) {}  // NOLINT(google-explicit-constructor)
    Tangent(S value, S tangent) : v(std::move(value)), d(std::move(tangent)) {}

    friend Tangent operator+(const Tangent& a, const Tangent& b) { return {a.v + b.v, a.d + b.d}; }
    friend Tangent operator-(const Tangent& a, const Tangent& b) { return {a.v - b.v, a.d - b.d}; }
    friend Tangent operator*(const Tangent& a, const Tangent& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
    friend Tangent operator/(const Tangent& a, const Tangent& b) {
        S q = a.v / b.v;
        return {q, (a.d - q * b.d) / b.v};
    }
    Tangent operator-() const { return {-v, -d}; }
};

template <class S>
Tangent<S> tanh(const Tangent<S>& x) {
    S t = tanh(x.v);
    S dt = 1.0 - t * t;
    return {t, dt * x.d};
}
template <class S>
Tangent<S> sin(const Tangent<S>& x) {
    return {sin(x.v), cos(x.v) * x.d};
}
template <class S>
Tangent<S> cos(const Tangent<S>& x) {
    return {cos(x.v), -(sin(x.v) * x.d)};
}

}  // namespace adctl
