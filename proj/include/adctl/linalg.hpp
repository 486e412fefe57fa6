#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace adctl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

inline Vector to_vector(std::span<const double> v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Numerical rank with threshold max(rows, cols) * eps * sigma_max.
int numerical_rank(const Matrix& m);

/// Eigenvalues of a real square matrix, sorted by (real, imag).
std::vector<std::complex<double>> eigenvalues(const Matrix& a);

/// Sorts complex numbers by real part, then imaginary part.
void sort_complex(std::vector<std::complex<double>>& v);

}  // namespace adctl
