#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "adctl/dual.hpp"
#include "adctl/linalg.hpp"

namespace adctl {

/// A vector field f: R^n x R^p -> R^m that can be evaluated with plain reals
/// and with Duals. Parameters are always plain reals.
class VectorFunction {
public:
    using RealFn = std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;
    using DualFn = std::function<std::vector<Dual>(std::span<const Dual>, std::span<const double>)>;

    VectorFunction() = default;

    /// Wraps a callable that is generic over the scalar type, i.e.
    /// `f(std::span<const S> x, std::span<const double> params) -> std::vector<S>`
    /// for S in {double, Dual}.
    template <class F>
    static VectorFunction generic(std::size_t n, std::size_t p, std::size_t m, F f) {
        return VectorFunction(
            n, p, m,
            [f](std::span<const double> x, std::span<const double> q) { return f(x, q); },
            [f](std::span<const Dual> x, std::span<const double> q) { return f(x, q); });
    }

    /// Separate evaluation paths. Leaving `dual` empty marks the function
    /// non-differentiable.
    VectorFunction(std::size_t n, std::size_t p, std::size_t m, RealFn real, DualFn dual)
        : n_(n), p_(p), m_(m), real_(std::move(real)), dual_(std::move(dual)) {}

    std::size_t input_dim() const noexcept { return n_; }
    std::size_t param_dim() const noexcept { return p_; }
    std::size_t output_dim() const noexcept { return m_; }
    bool differentiable() const noexcept { return static_cast<bool>(dual_); }

    std::vector<double> operator()(std::span<const double> x, std::span<const double> params = {}) const;
    std::vector<Dual> operator()(std::span<const Dual> x, std::span<const double> params = {}) const;

private:
    void check_dims(std::size_t x_size, std::size_t p_size) const;

    std::size_t n_ = 0;
    std::size_t p_ = 0;
    std::size_t m_ = 0;
    RealFn real_;
    DualFn dual_;
};

/// m x n Jacobian at `x` using a single forward pass with an identity seed.
Matrix jacobian(const VectorFunction& f, std::span<const double> x, std::span<const double> params = {});

/// Gradient of a scalar-valued function.
Vector gradient(const VectorFunction& g, std::span<const double> x, std::span<const double> params = {});

/// Jacobians at many points; identical to mapping `jacobian` over `points`.
std::vector<Matrix> batch_jacobian(const VectorFunction& f, const std::vector<std::vector<double>>& points,
                                   std::span<const double> params = {});

/// Central finite-difference Jacobian with step `h`.
Matrix fd_jacobian(const VectorFunction& f, std::span<const double> x, std::span<const double> params, double h);

/// Max |AD Jacobian - central-difference Jacobian| over all entries.
double check_fd(const VectorFunction& f, std::span<const double> x, std::span<const double> params, double h);

/// Value and Jacobian from one Dual pass over pre-seeded inputs. Throws
/// NonFiniteError naming the first offending output.
std::pair<Vector, Matrix> unpack(std::span<const Dual> y, std::size_t directions);

}  // namespace adctl
