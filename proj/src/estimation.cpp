#include "adctl/estimation.hpp"

#include <cmath>

#include "adctl/sim.hpp"

namespace adctl {

namespace {

void check_covariance(const Matrix& P) {
    if (!P.allFinite()) throw NonFiniteError("non-finite covariance", 0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(P, Eigen::EigenvaluesOnly);
    if (P.rows() > 0 && es.eigenvalues().minCoeff() < -1e-9)
        throw ConditioningError("covariance lost positive semidefiniteness");
}

}  // namespace

EkfState ekf_predict(const EkfState& s, const VectorFunction& f, std::span<const double> u, const Matrix& Q,
                     double dt) {
    if (!(dt > 0.0)) throw InvalidArgumentError("ekf_predict requires dt > 0");
    const auto n = s.x.size();
    if (s.P.rows() != n || s.P.cols() != n || Q.rows() != n || Q.cols() != n)
        throw InvalidArgumentError("ekf_predict: covariance dimensions do not match the state");
    std::vector<double> z = to_std(s.x);
    z.insert(z.end(), u.begin(), u.end());
    const Matrix A = jacobian(f, z).leftCols(n);
    const Matrix Phi = Matrix::Identity(n, n) + A * dt;

    EkfState out;
    const auto x = to_std(s.x);
    out.x = to_vector(rk4_step(f, x, u, dt));
    out.P = Phi * s.P * Phi.transpose() + Q * dt;
    out.P = 0.5 * (out.P + out.P.transpose()).eval();
    out.t = s.t + dt;
    check_covariance(out.P);
    return out;
}

EkfState ekf_update(const EkfState& s, const VectorFunction& h, std::span<const double> z, const Matrix& R) {
    const auto n = s.x.size();
    const auto p = static_cast<Eigen::Index>(z.size());
    if (R.rows() != p || R.cols() != p) throw InvalidArgumentError("ekf_update: R does not match the measurement");
    const auto x = to_std(s.x);
    const auto seeded = seed(x);
    const auto [hx, H] = unpack(h(std::span<const Dual>(seeded)), x.size());
    if (hx.size() != p) throw InvalidArgumentError("ekf_update: measurement dimension mismatch");

    const Vector y = to_vector(z) - hx;
    const Matrix S = H * s.P * H.transpose() + R;
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) throw ConditioningError("innovation covariance is not positive definite");
    // K = P H^T S^{-1}
    const Matrix K = llt.solve(H * s.P).transpose();
    const Matrix IKH = Matrix::Identity(n, n) - K * H;

    EkfState out;
    out.x = s.x + K * y;
    out.P = IKH * s.P * IKH.transpose() + K * R * K.transpose();
    out.P = 0.5 * (out.P + out.P.transpose()).eval();
    out.t = s.t;
    if (!out.x.allFinite()) throw NonFiniteError("non-finite state estimate", 0);
    check_covariance(out.P);
    return out;
}

}  // namespace adctl
