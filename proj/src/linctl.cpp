#include "adctl/linctl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace adctl {

std::size_t Plant::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < states.size(); ++i)
        if (states[i] == name) return i;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (inputs[i] == name) return states.size() + i;
    throw InvalidArgumentError("unknown state or input '" + name + "'");
}

Plant plant_of(const CausalModel& model) { return {causal_field(model), model.state_names(), model.input_names()}; }

// --- Equilibrium ------------------------------------------------------------

Equilibrium find_equilibrium(const Plant& plant, const std::map<std::string, double>& pinned,
                             std::vector<double> guess) {
    const std::size_t nz = plant.nx() + plant.nu();
    if (guess.size() != nz)
        throw InvalidArgumentError("equilibrium guess has " + std::to_string(guess.size()) + " entries, expected " +
                                   std::to_string(nz));
    std::vector<std::pair<std::size_t, double>> pins;
    for (const auto& [name, v] : pinned) {
        pins.emplace_back(plant.index_of(name), v);
        guess[pins.back().first] = v;
    }
    if (plant.nx() + pins.size() < nz)
        throw PreconditionError("equilibrium is under-determined: " + std::to_string(nz) + " unknowns, " +
                                std::to_string(plant.nx() + pins.size()) + " equations");

    const auto rows = static_cast<Eigen::Index>(plant.nx() + pins.size());
    Vector z = to_vector(guess);
    double norm = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 100; ++it) {
        const auto zs = to_std(z);
        const auto seeded = seed(zs);
        const auto y = plant.field(std::span<const Dual>(seeded));
        auto [fv, fj] = unpack(y, nz);
        Vector r(rows);
        Matrix J = Matrix::Zero(rows, static_cast<Eigen::Index>(nz));
        r.head(static_cast<Eigen::Index>(plant.nx())) = fv;
        J.topRows(static_cast<Eigen::Index>(plant.nx())) = fj;
        for (std::size_t p = 0; p < pins.size(); ++p) {
            const auto row = static_cast<Eigen::Index>(plant.nx() + p);
            r(row) = z(static_cast<Eigen::Index>(pins[p].first)) - pins[p].second;
            J(row, static_cast<Eigen::Index>(pins[p].first)) = 1.0;
        }
        norm = r.cwiseAbs().maxCoeff();
        if (norm <= 1e-12) break;
        Eigen::ColPivHouseholderQR<Matrix> qr(J);
        if (qr.rank() < static_cast<Eigen::Index>(nz))
            throw SingularBlockError("singular equilibrium Jacobian (pinning leaves " +
                                     std::to_string(nz - static_cast<std::size_t>(qr.rank())) + " direction(s) free)");
        z -= qr.solve(r);
        if (!z.allFinite()) throw NonFiniteError("equilibrium iteration produced non-finite values", 0);
    }
    for (const auto& [i, v] : pins) z(static_cast<Eigen::Index>(i)) = v;
    const auto zs = to_std(z);
    const auto f = plant.field(std::span<const double>(zs));
    double fnorm = 0.0;
    for (double v : f) fnorm = std::max(fnorm, std::abs(v));
    if (!(fnorm <= 1e-9))
        throw ConvergenceError("equilibrium search did not converge (|f| = " + std::to_string(fnorm) + ")", fnorm);
    Equilibrium eq;
    eq.x.assign(zs.begin(), zs.begin() + static_cast<std::ptrdiff_t>(plant.nx()));
    eq.u.assign(zs.begin() + static_cast<std::ptrdiff_t>(plant.nx()), zs.end());
    eq.pinned = pinned;
    return eq;
}

// --- Linearization ----------------------------------------------------------

LinearModel linearize(const Plant& plant, const Equilibrium& eq) {
    if (eq.x.size() != plant.nx() || eq.u.size() != plant.nu())
        throw InvalidArgumentError("equilibrium does not match the plant dimensions");
    std::vector<double> z = eq.x;
    z.insert(z.end(), eq.u.begin(), eq.u.end());
    const Matrix J = jacobian(plant.field, z);
    const auto n = static_cast<Eigen::Index>(plant.nx());
    return {J.leftCols(n), J.rightCols(static_cast<Eigen::Index>(plant.nu())), eq};
}

std::pair<Matrix, int> controllability(const LinearModel& lm) {
    const Eigen::Index n = lm.A.rows();
    const Eigen::Index m = lm.B.cols();
    Matrix C(n, n * m);
    Matrix block = lm.B;
    for (Eigen::Index k = 0; k < n; ++k) {
        C.middleCols(k * m, m) = block;
        block = lm.A * block;
    }
    return {C, n * m == 0 ? 0 : numerical_rank(C)};
}

// --- Pole placement ---------------------------------------------------------

double spectrum_distance(std::vector<std::complex<double>> a, std::vector<std::complex<double>> b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    sort_complex(a);
    double worst = 0.0;
    for (const auto& x : a) {
        auto best = std::min_element(b.begin(), b.end(), [&](const auto& p, const auto& q) {
            return std::abs(p - x) < std::abs(q - x);
        });
        worst = std::max(worst, std::abs(*best - x));
        b.erase(best);
    }
    return worst;
}

namespace {

constexpr double kPlacementTolerance = 1e-6;

void check_poles(const Matrix& A, const std::vector<std::complex<double>>& poles) {
    if (static_cast<Eigen::Index>(poles.size()) != A.rows())
        throw PreconditionError("need " + std::to_string(A.rows()) + " poles, got " + std::to_string(poles.size()));
    std::vector<char> used(poles.size(), 0);
    for (std::size_t i = 0; i < poles.size(); ++i) {
        const auto& p = poles[i];
        if (!std::isfinite(p.real()) || !std::isfinite(p.imag())) throw PreconditionError("non-finite pole");
        if (p.imag() == 0.0 || used[i]) continue;
        const double tol = 1e-12 * std::max(1.0, std::abs(p));
        bool found = false;
        for (std::size_t j = 0; j < poles.size(); ++j) {
            if (j == i || used[j]) continue;
            if (std::abs(poles[j] - std::conj(p)) <= tol) {
                used[i] = used[j] = 1;
                found = true;
                break;
            }
        }
        if (!found) throw PreconditionError("poles are not closed under conjugation");
    }
    for (const auto& ev : eigenvalues(A))
        for (const auto& p : poles)
            if (std::abs(ev - p) <= 1e-9 * std::max(1.0, std::abs(p)))
                throw PreconditionError("requested pole coincides with an open-loop eigenvalue");
}

/// Real block-diagonal matrix with the given (conjugate-closed) spectrum.
Matrix pole_matrix(const std::vector<std::complex<double>>& poles) {
    const auto n = static_cast<Eigen::Index>(poles.size());
    Matrix L = Matrix::Zero(n, n);
    Eigen::Index i = 0;
    for (const auto& p : poles) {
        if (p.imag() == 0.0) {
            L(i, i) = p.real();
            ++i;
        } else if (p.imag() > 0.0) {
            L(i, i) = L(i + 1, i + 1) = p.real();
            L(i, i + 1) = p.imag();
            L(i + 1, i) = -p.imag();
            i += 2;
        }
    }
    return L;
}

Matrix ackermann(const Matrix& A, const Matrix& B, const std::vector<std::complex<double>>& poles) {
    const Eigen::Index n = A.rows();
    const Matrix I = Matrix::Identity(n, n);
    Matrix phi = I;
    std::vector<char> done(poles.size(), 0);
    for (std::size_t i = 0; i < poles.size(); ++i) {
        if (done[i]) continue;
        const auto& p = poles[i];
        done[i] = 1;
        if (p.imag() == 0.0) {
            phi = phi * (A - p.real() * I);
            continue;
        }
        for (std::size_t j = i + 1; j < poles.size(); ++j)
            if (!done[j] && std::abs(poles[j] - std::conj(p)) <= 1e-12 * std::max(1.0, std::abs(p))) {
                done[j] = 1;
                break;
            }
        phi = phi * (A * A - 2.0 * p.real() * A + std::norm(p) * I);
    }
    Matrix C(n, n);
    Matrix col = B;
    for (Eigen::Index k = 0; k < n; ++k) {
        C.col(k) = col;
        col = A * col;
    }
    Eigen::FullPivLU<Matrix> lu(C.transpose());
    if (!lu.isInvertible()) throw UncontrollableError("controllability matrix is singular");
    Vector en = Vector::Zero(n);
    en(n - 1) = 1.0;
    // K = e_n^T C^{-1} phi(A)
    const Matrix row = lu.solve(en).transpose();
    return row * phi;
}

}  // namespace

FeedbackLaw pole_place(const LinearModel& lm, const std::vector<std::complex<double>>& poles) {
    const Matrix& A = lm.A;
    const Matrix& B = lm.B;
    const Eigen::Index n = A.rows();
    const Eigen::Index m = B.cols();
    if (A.cols() != n || B.rows() != n) throw InvalidArgumentError("pole_place: inconsistent A/B dimensions");
    check_poles(A, poles);
    if (controllability(lm).second < n) throw UncontrollableError("(A, B) is not controllable");

    auto verified = [&](const Matrix& K) {
        return K.allFinite() && spectrum_distance(eigenvalues(A - B * K), poles) <= kPlacementTolerance;
    };

    if (m == 1) {
        Matrix K = ackermann(A, B, poles);
        if (!verified(K)) throw PlacementError("Ackermann gain failed spectrum verification");
        return {K, lm.eq};
    }

    const Matrix L = pole_matrix(poles);
    const Matrix In = Matrix::Identity(n, n);
    // vec(A X - X L) = (I kron A - L^T kron I) vec(X)
    Matrix S = Matrix::Zero(n * n, n * n);
    for (Eigen::Index j = 0; j < n; ++j) {
        S.block(j * n, j * n, n, n) += A;
        for (Eigen::Index i = 0; i < n; ++i) S.block(j * n, i * n, n, n) -= L(i, j) * In;
    }
    Eigen::FullPivLU<Matrix> slu(S);
    if (!slu.isInvertible()) throw PreconditionError("Sylvester operator is singular (pole/eigenvalue overlap)");

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int attempt = 0; attempt <= 10; ++attempt) {
        Matrix G(m, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < m; ++i) G(i, j) = U(rng);
        const Matrix BG = B * G;
        const Vector x = slu.solve(Eigen::Map<const Vector>(BG.data(), n * n));
        const Matrix X = Eigen::Map<const Matrix>(x.data(), n, n);
        Eigen::FullPivLU<Matrix> xlu(X.transpose());
        if (!xlu.isInvertible()) continue;
        // K = G X^{-1}  <=>  X^T K^T = G^T
        const Matrix K = xlu.solve(G.transpose()).transpose();
        if (verified(K)) return {K, lm.eq};
    }
    throw PlacementError("pole placement failed verification after 10 retries");
}

std::vector<double> feedback_control(const FeedbackLaw& law, std::span<const double> x) {
    const auto n = static_cast<Eigen::Index>(law.eq.x.size());
    if (static_cast<Eigen::Index>(x.size()) != n || law.K.cols() != n ||
        law.K.rows() != static_cast<Eigen::Index>(law.eq.u.size()))
        throw InvalidArgumentError("feedback_control: dimension mismatch");
    const Vector dx = to_vector(x) - to_vector(law.eq.x);
    return to_std(to_vector(law.eq.u) - law.K * dx);
}

}  // namespace adctl
