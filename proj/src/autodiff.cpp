#include "adctl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace adctl {

void VectorFunction::check_dims(std::size_t x_size, std::size_t p_size) const {
    if (x_size != n_)
        throw InvalidArgumentError("input dimension " + std::to_string(x_size) + ", expected " + std::to_string(n_));
    if (p_size != p_)
        throw InvalidArgumentError("parameter dimension " + std::to_string(p_size) + ", expected " +
                                   std::to_string(p_));
}

std::vector<double> VectorFunction::operator()(std::span<const double> x, std::span<const double> params) const {
    check_dims(x.size(), params.size());
    auto y = real_(x, params);
    if (y.size() != m_)
        throw InvalidArgumentError("function returned " + std::to_string(y.size()) + " outputs, expected " +
                                   std::to_string(m_));
    return y;
}

std::vector<Dual> VectorFunction::operator()(std::span<const Dual> x, std::span<const double> params) const {
    check_dims(x.size(), params.size());
    if (!dual_) throw NotDifferentiableError("function has no Dual evaluation path");
    auto y = dual_(x, params);
    if (y.size() != m_)
        throw InvalidArgumentError("function returned " + std::to_string(y.size()) + " outputs, expected " +
                                   std::to_string(m_));
    return y;
}

std::pair<Vector, Matrix> unpack(std::span<const Dual> y, std::size_t directions) {
    Vector value(static_cast<Eigen::Index>(y.size()));
    Matrix jac = Matrix::Zero(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(directions));
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!is_finite(y[i])) throw NonFiniteError("non-finite result in output " + std::to_string(i), i);
        value(static_cast<Eigen::Index>(i)) = y[i].value();
        if (y[i].is_constant()) continue;
        if (y[i].directions() != directions)
            throw InvalidArgumentError("output " + std::to_string(i) + " carries " +
                                       std::to_string(y[i].directions()) + " partials, expected " +
                                       std::to_string(directions));
        for (std::size_t j = 0; j < directions; ++j)
            jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = y[i].partials()[j];
    }
    return {std::move(value), std::move(jac)};
}

Matrix jacobian(const VectorFunction& f, std::span<const double> x, std::span<const double> params) {
    if (x.size() != f.input_dim())
        throw InvalidArgumentError("jacobian: x has dimension " + std::to_string(x.size()) + ", expected " +
                                   std::to_string(f.input_dim()));
    const auto seeded = seed(x);
    const auto y = f(std::span<const Dual>(seeded), params);
    return unpack(y, x.size()).second;
}

Vector gradient(const VectorFunction& g, std::span<const double> x, std::span<const double> params) {
    if (g.output_dim() != 1) throw InvalidArgumentError("gradient: function must be scalar-valued");
    Matrix j = jacobian(g, x, params);
    return j.row(0).transpose();
}

std::vector<Matrix> batch_jacobian(const VectorFunction& f, const std::vector<std::vector<double>>& points,
                                   std::span<const double> params) {
    std::vector<Matrix> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        if (p.size() != f.input_dim())
            throw InvalidArgumentError("batch_jacobian: points must share dimension " +
                                       std::to_string(f.input_dim()));
    }
    for (const auto& p : points) out.push_back(jacobian(f, p, params));
    return out;
}

Matrix fd_jacobian(const VectorFunction& f, std::span<const double> x, std::span<const double> params, double h) {
    if (!(h > 0.0)) throw InvalidArgumentError("finite-difference step must be positive");
    const auto n = x.size();
    Matrix jac(static_cast<Eigen::Index>(f.output_dim()), static_cast<Eigen::Index>(n));
    std::vector<double> xp(x.begin(), x.end());
    for (std::size_t j = 0; j < n; ++j) {
        const double x0 = xp[j];
        xp[j] = x0 + h;
        const auto fp = f(std::span<const double>(xp), params);
        xp[j] = x0 - h;
        const auto fm = f(std::span<const double>(xp), params);
        xp[j] = x0;
        for (std::size_t i = 0; i < fp.size(); ++i)
            jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - fm[i]) / (2.0 * h);
    }
    return jac;
}

double check_fd(const VectorFunction& f, std::span<const double> x, std::span<const double> params, double h) {
    const Matrix ad = jacobian(f, x, params);
    const Matrix fd = fd_jacobian(f, x, params, h);
    if (ad.size() == 0) return 0.0;
    return (ad - fd).cwiseAbs().maxCoeff();
}

}  // namespace adctl
