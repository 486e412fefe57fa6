#include "adctl/linalg.hpp"

#include <algorithm>
#include <limits>

namespace adctl {

int numerical_rank(const Matrix& m) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double tol =
        static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon() * s(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++rank;
    return rank;
}

void sort_complex(std::vector<std::complex<double>>& v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
}

std::vector<std::complex<double>> eigenvalues(const Matrix& a) {
    Eigen::EigenSolver<Matrix> es(a, false);
    std::vector<std::complex<double>> out(es.eigenvalues().data(), es.eigenvalues().data() + a.rows());
    sort_complex(out);
    return out;
}

}  // namespace adctl
