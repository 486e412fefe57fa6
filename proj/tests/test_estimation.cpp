#include <doctest.h>

#include <random>

#include "adctl/estimation.hpp"
#include "adctl/models.hpp"
#include "adctl/sim.hpp"

using namespace adctl;

namespace {

VectorFunction linear_field(const Matrix& A, const Matrix& B) {
    const auto n = static_cast<std::size_t>(A.rows());
    const auto m = static_cast<std::size_t>(B.cols());
    return VectorFunction::generic(n + m, 0, n, [A, B, n, m](auto z, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(z)::value_type>;
        std::vector<S> out(n, S(0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) out[i] += A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * z[j];
            for (std::size_t j = 0; j < m; ++j) out[i] += B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * z[n + j];
        }
        return out;
    });
}

VectorFunction linear_measurement(const Matrix& C) {
    const auto n = static_cast<std::size_t>(C.cols());
    const auto p = static_cast<std::size_t>(C.rows());
    return VectorFunction::generic(n, 0, p, [C, n, p](auto x, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(x)::value_type>;
        std::vector<S> out(p, S(0.0));
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < n; ++j) out[i] += C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[j];
        return out;
    });
}

Matrix random_spd(std::mt19937_64& rng, Eigen::Index n, double floor) {
    std::normal_distribution<double> N(0, 1);
    Matrix L(n, n);
    for (auto i = 0; i < L.size(); ++i) L.data()[i] = N(rng);
    return L * L.transpose() + floor * Matrix::Identity(n, n);
}

}  // namespace

TEST_CASE("predict examples") {
    const auto zero = linear_field(Matrix::Zero(2, 2), Matrix::Zero(2, 1));
    EkfState s{(Vector(2) << 1, 2).finished(), Matrix::Identity(2, 2), 0.0};
    const std::vector<double> u{0.0};
    const auto p = ekf_predict(s, zero, u, Matrix::Zero(2, 2), 0.01);
    CHECK(p.x == s.x);
    CHECK(p.P == s.P);
    CHECK(p.t == doctest::Approx(0.01));

    const auto decay = linear_field(-Matrix::Identity(1, 1), Matrix::Zero(1, 0));
    EkfState one{Vector::Ones(1), Matrix::Identity(1, 1), 0.0};
    const auto q = ekf_predict(one, decay, {}, Matrix::Zero(1, 1), 0.01);
    CHECK(q.P(0, 0) == doctest::Approx(0.9801).epsilon(1e-14));
}

TEST_CASE("transition matrix matches finite differences of the flow") {
    const auto f = pendulum_field();
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> U(-1, 1);
    const double dt = 1e-3;
    for (int k = 0; k < 20; ++k) {
        const std::vector<double> x{U(rng), U(rng), 3 * U(rng), U(rng)};
        const std::vector<double> u{U(rng)};
        std::vector<double> z = x;
        z.push_back(u[0]);
        const Matrix Phi = Matrix::Identity(4, 4) + jacobian(f, z).leftCols(4) * dt;
        Matrix fd(4, 4);
        const double h = 1e-6;
        for (int j = 0; j < 4; ++j) {
            auto xp = x, xm = x;
            xp[static_cast<std::size_t>(j)] += h;
            xm[static_cast<std::size_t>(j)] -= h;
            fd.col(j) = (to_vector(rk4_step(f, xp, u, dt)) - to_vector(rk4_step(f, xm, u, dt))) / (2 * h);
        }
        CHECK((Phi - fd).cwiseAbs().maxCoeff() <= 50 * dt * dt);
    }
}

TEST_CASE("update examples") {
    const auto h = linear_measurement(Matrix::Identity(2, 2));
    EkfState s{(Vector(2) << 1, -1).finished(), Matrix::Identity(2, 2), 0.0};
    const std::vector<double> z{3.0, 4.0};
    const auto vague = ekf_update(s, h, z, 1e12 * Matrix::Identity(2, 2));
    const double bound = 1e-9 * (to_vector(z) - s.x).norm() * s.P.norm();
    CHECK((vague.x - s.x).norm() <= bound);

    const auto h1 = linear_measurement(Matrix::Identity(1, 1));
    EkfState s1{Vector::Constant(1, 2.0), Matrix::Identity(1, 1), 0.0};
    const std::vector<double> z1{4.0};
    CHECK(ekf_update(s1, h1, z1, Matrix::Identity(1, 1)).x(0) == doctest::Approx(3.0).epsilon(1e-15));

    CHECK_THROWS_AS(ekf_update(s1, h1, z1, -2.0 * Matrix::Identity(1, 1)), ConditioningError);
}

TEST_CASE("EKF equals an independently written linear KF") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> N(0, 1);
    const Eigen::Index n = 3, m = 1, p = 2;
    Matrix A(n, n), B(n, m), C(p, n);
    for (auto i = 0; i < A.size(); ++i) A.data()[i] = 0.3 * N(rng);
    A -= 1.5 * Matrix::Identity(n, n);
    for (auto i = 0; i < B.size(); ++i) B.data()[i] = N(rng);
    for (auto i = 0; i < C.size(); ++i) C.data()[i] = N(rng);
    const Matrix Q = random_spd(rng, n, 0.1) * 0.01;
    const Matrix R = random_spd(rng, p, 0.5) * 0.1;
    const double dt = 0.01;

    // RK4 of a linear system is the truncated exponential series
    const Matrix Ad = A * dt;
    const Matrix I = Matrix::Identity(n, n);
    const Matrix F = I + Ad + Ad * Ad / 2 + Ad * Ad * Ad / 6 + Ad * Ad * Ad * Ad / 24;
    const Matrix G = dt * (I + Ad / 2 + Ad * Ad / 6 + Ad * Ad * Ad / 24) * B;
    const Matrix Phi = I + Ad;

    const auto f = linear_field(A, B);
    const auto h = linear_measurement(C);
    EkfState ekf{Vector::Zero(n), Matrix::Identity(n, n), 0.0};
    Vector xk = Vector::Zero(n);
    Matrix Pk = Matrix::Identity(n, n);
    Vector truth = Vector::Ones(n);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const Vector u = Vector::Constant(m, std::sin(0.1 * k));
        truth = F * truth + G * u;
        Vector z = C * truth;
        for (Eigen::Index i = 0; i < p; ++i) z(i) += 0.1 * N(rng);

        ekf = ekf_predict(ekf, f, to_std(u), Q, dt);
        ekf = ekf_update(ekf, h, to_std(z), R);

        xk = F * xk + G * u;
        Pk = Phi * Pk * Phi.transpose() + Q * dt;
        const Matrix S = C * Pk * C.transpose() + R;
        const Matrix K = Pk * C.transpose() * S.inverse();
        xk = xk + K * (z - C * xk);
        Pk = (I - K * C) * Pk;
        Pk = 0.5 * (Pk + Pk.transpose()).eval();

        worst = std::max({worst, (ekf.x - xk).cwiseAbs().maxCoeff(), (ekf.P - Pk).cwiseAbs().maxCoeff()});
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("Joseph form keeps P positive semidefinite") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N(0, 1);
    const Eigen::Index n = 4;
    Matrix A(n, n), C(2, n);
    for (auto i = 0; i < A.size(); ++i) A.data()[i] = N(rng);
    for (auto i = 0; i < C.size(); ++i) C.data()[i] = N(rng);
    const auto f = linear_field(A, Matrix::Zero(n, 0));
    const auto h = linear_measurement(C);
    EkfState s{Vector::Zero(n), Matrix::Identity(n, n), 0.0};
    for (int k = 0; k < 1000; ++k) {
        s = ekf_predict(s, f, {}, random_spd(rng, n, 1e-3), 1e-3);
        const std::vector<double> z{N(rng), N(rng)};
        s = ekf_update(s, h, z, random_spd(rng, 2, 1e-6));
        Eigen::SelfAdjointEigenSolver<Matrix> es(s.P);
        CHECK(es.eigenvalues().minCoeff() >= -1e-9);
        CHECK(s.P == s.P.transpose());
        s.x.setZero();  // keep the unstable random system from growing without bound
    }
}

TEST_CASE("pendulum NEES consistency") {
    const auto f = pendulum_field();
    const Matrix C = (Matrix(2, 4) << 1, 0, 0, 0, 0, 0, 1, 0).finished();
    const auto h = linear_measurement(C);
    const double dt = 0.01;
    const Matrix Q = Vector::Constant(4, 1e-3).asDiagonal();
    const Matrix R = Vector::Constant(2, 1e-4).asDiagonal();
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> N(0, 1);
    const Eigen::LLT<Matrix> qd((Q * dt).eval());
    const int runs = 50, steps = 300;
    double total = 0.0;
    for (int r = 0; r < runs; ++r) {
        Vector truth(4);
        truth << 0, 0, 0.3, 0;
        EkfState s{truth, 0.01 * Matrix::Identity(4, 4), 0.0};
        for (int i = 0; i < 4; ++i) s.x(i) += 0.1 * N(rng);
        for (int k = 0; k < steps; ++k) {
            const std::vector<double> u{0.5 * std::sin(0.02 * k)};
            Vector w(4);
            for (int i = 0; i < 4; ++i) w(i) = N(rng);
            truth = to_vector(rk4_step(f, to_std(truth), u, dt)) + qd.matrixL() * w;
            Vector z = C * truth;
            for (int i = 0; i < 2; ++i) z(i) += 1e-2 * N(rng);
            s = ekf_predict(s, f, u, Q, dt);
            s = ekf_update(s, h, to_std(z), R);
            const Vector e = truth - s.x;
            total += e.dot(s.P.llt().solve(e));
        }
    }
    const double nees = total / (runs * steps);
    CHECK(nees >= 0.3 * 4);
    CHECK(nees <= 3.0 * 4);
}
