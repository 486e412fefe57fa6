#pragma once

// Extended Kalman filter with AD Jacobians at the current estimate.

#include "adctl/autodiff.hpp"
#include "adctl/linalg.hpp"

namespace adctl {

struct EkfState {
    Vector x;
    Matrix P;
    double t = 0.0;
};

/// x <- RK4 step of f([x; u]); P <- Phi P Phi^T + Q dt with Phi = I + A dt,
/// A = df/dx at the pre-step estimate.
EkfState ekf_predict(const EkfState& s, const VectorFunction& f, std::span<const double> u, const Matrix& Q,
                     double dt);

/// Measurement update with H = dh/dx at the estimate, Cholesky-solved
/// innovation covariance and the Joseph-form covariance update.
EkfState ekf_update(const EkfState& s, const VectorFunction& h, std::span<const double> z, const Matrix& R);

}  // namespace adctl
