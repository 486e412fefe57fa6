#include "adctl/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "adctl/models.hpp"

namespace adctl {

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class S>
struct Constraints {
    std::vector<S> eq;
    std::vector<S> ineq;
    std::vector<S> defects;
};

/// Mean-square (or per-sample) dynamics defects, boundary defects and input
/// bounds, in that order.
template <class S>
Constraints<S> evaluate(const MpcProblem& p, std::span<const S> w, std::span<const double> grid, bool bounds) {
    const std::size_t ns = p.state_net.param_count();
    const auto ws = w.subspan(0, ns);
    const auto wu = w.subspan(ns);
    const auto Z = net_eval<S>(p.state_net, ws, grid);
    const auto Zd = net_dt<S>(p.state_net, ws, grid);
    const auto U = net_eval<S>(p.input_net, wu, grid);

    const std::size_t nz = p.nz(), nu = p.nu();
    const double N = grid.size() > 1 ? static_cast<double>(grid.size() - 1) : 1.0;
    Constraints<S> c;
    S mean_square(0.0);
    std::vector<S> arg(nz + nu);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        std::copy(Z[k].begin(), Z[k].end(), arg.begin());
        std::copy(U[k].begin(), U[k].end(), arg.begin() + static_cast<std::ptrdiff_t>(nz));
        const std::vector<S> f = p.dynamics(std::span<const S>(arg));
        for (std::size_t i = 0; i < nz; ++i) {
            const S r = Zd[k][i] - f[i];
            if (p.per_sample)
                c.eq.push_back(r);
            else
                mean_square += r * r;
            c.defects.push_back(r);
        }
    }
    if (!p.per_sample) c.eq.push_back(mean_square * (1.0 / N));
    for (std::size_t i = 0; i < nz; ++i) c.eq.push_back(Z.front()[i] - p.z0[i]);
    for (std::size_t i = 0; i < nz; ++i) c.eq.push_back(Z.back()[i] - p.zN[i]);
    if (bounds) {
        for (std::size_t k = 0; k < grid.size(); ++k)
            for (std::size_t j = 0; j < nu; ++j) {
                c.ineq.push_back(p.u_max - U[k][j]);
                c.ineq.push_back(p.u_max + U[k][j]);
            }
    }
    return c;
}

double value_of(double v) { return v; }

template <class S>
void check_finite(const std::vector<S>& v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!std::isfinite(value_of(v[i])))
            throw NonFiniteError(std::string("nlp_constraints: non-finite ") + what + " constraint " +
                                     std::to_string(i),
                                 i);
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double violation_of(const Vector& eq, const Vector& ineq) {
    double v = max_abs(eq);
    for (Eigen::Index i = 0; i < ineq.size(); ++i) v = std::max(v, -ineq[i]);
    return v;
}

constexpr double kQpTolerance = 1e-8;
constexpr int kMaxLineSearch = 10;
constexpr int kMaxDampingTrials = 30;
constexpr std::size_t kMaxNotes = 50;
constexpr double kBoundPenalty = 1e3;
constexpr double kHardBoundSwitch = 1e-3;

}  // namespace

void MpcProblem::validate() const {
    if (z0.empty() || z0.size() != zN.size()) throw InvalidArgumentError("mpc: z0 and zN must have equal, nonzero size");
    if (!(u_max > 0.0)) throw InvalidArgumentError("mpc: u_max must be positive");
    if (grid.size() < 2) throw InvalidArgumentError("mpc: grid needs at least two samples");
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] > grid[k - 1])) throw InvalidArgumentError("mpc: grid must be strictly increasing");
    if (state_net.outputs != z0.size()) throw InvalidArgumentError("mpc: state net width must equal state size");
    if (dynamics.input_dim() != nz() + nu() || dynamics.output_dim() != nz())
        throw InvalidArgumentError("mpc: dynamics dimensions do not match the nets");
    if (!dynamics.differentiable()) throw NotDifferentiableError("mpc: dynamics have no derivative path");
}

MpcProblem make_problem(VectorFunction dynamics, std::vector<double> z0, std::vector<double> zN, double u_max,
                        double t0, double tN, std::size_t n, std::size_t hidden) {
    if (!(tN > t0)) throw InvalidArgumentError("mpc: horizon must satisfy t0 < tN");
    if (n == 0) throw InvalidArgumentError("mpc: need at least one interval");
    MpcProblem p;
    const std::size_t nu = dynamics.input_dim() >= z0.size() ? dynamics.input_dim() - z0.size() : 0;
    p.dynamics = std::move(dynamics);
    p.state_net = Mlp{hidden, z0.size(), t0, tN - t0};
    p.input_net = Mlp{hidden, nu, t0, tN - t0};
    p.z0 = std::move(z0);
    p.zN = std::move(zN);
    p.u_max = u_max;
    p.grid.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) p.grid[k] = t0 + (tN - t0) * static_cast<double>(k) / static_cast<double>(n);
    p.grid.back() = tN;
    p.validate();
    return p;
}

MpcProblem swing_up_problem(double horizon, std::size_t n, double u_max, std::size_t hidden) {
    auto p = make_problem(pendulum_field(), {0.0, 0.0, 0.0, 0.0}, {0.0, 0.0, M_PI, 0.0}, u_max, 0.0, horizon, n,
                          hidden);
    p.state_names = {"x", "dx", "theta", "dtheta"};
    p.input_names = {"F"};
    return p;
}

double dynamics_residual(const MpcProblem& p, std::span<const double> w) { return dynamics_residual(p, w, p.grid); }

double dynamics_residual(const MpcProblem& p, std::span<const double> w, std::span<const double> grid) {
    MpcProblem q = p;
    q.per_sample = false;
    return evaluate<double>(q, w, grid, false).eq.front();
}

double boundary_error(const MpcProblem& p, std::span<const double> w) {
    const auto c = evaluate<double>(p, w, p.grid, false);
    double e = 0.0;
    for (std::size_t i = c.eq.size() - 2 * p.nz(); i < c.eq.size(); ++i) e = std::max(e, std::abs(c.eq[i]));
    return e;
}

NlpValues nlp_constraints(const MpcProblem& p, std::span<const double> w) {
    if (w.size() != p.num_params()) throw InvalidArgumentError("nlp_constraints: wrong parameter count");
    auto c = evaluate<double>(p, w, p.grid, true);
    check_finite(c.eq, "equality");
    check_finite(c.ineq, "inequality");
    return {to_vector(c.eq), to_vector(c.ineq)};
}

NlpJacobians nlp_jacobians(const MpcProblem& p, std::span<const double> w) {
    const std::size_t n = p.num_params();
    if (w.size() != n) throw InvalidArgumentError("nlp_jacobians: wrong parameter count");
    std::vector<Dual> wd;
    wd.reserve(n);
    for (std::size_t i = 0; i < n; ++i) wd.push_back(Dual::variable(w[i], i, n));
    const auto c = evaluate<Dual>(p, std::span<const Dual>(wd), p.grid, true);
    NlpJacobians out;
    std::tie(out.values.eq, out.eq_jac) = unpack(c.eq, n);
    std::tie(out.values.ineq, out.ineq_jac) = unpack(c.ineq, n);
    std::tie(out.defects, out.defect_jac) = unpack(c.defects, n);
    return out;
}

VectorFunction constraint_function(const MpcProblem& p) {
    const std::size_t n = p.num_params();
    const std::size_t me = (p.per_sample ? p.grid.size() * p.nz() : 1) + 2 * p.nz();
    const std::size_t mi = 2 * p.grid.size() * p.nu();
    return VectorFunction::generic(n, 0, me + mi, [p](auto w, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(w)::value_type>;
        auto c = evaluate<S>(p, w, p.grid, true);
        c.eq.insert(c.eq.end(), c.ineq.begin(), c.ineq.end());
        return c.eq;
    });
}

void SqpConfig::validate() const {
    if (max_iterations <= 0) throw InvalidArgumentError("sqp: max_iterations must be positive");
    if (!(constraint_tol > 0.0) || !(step_tol > 0.0)) throw InvalidArgumentError("sqp: tolerances must be positive");
    if (!(penalty_growth > 1.0)) throw InvalidArgumentError("sqp: penalty growth must exceed 1");
    if (!(init_high > init_low)) throw InvalidArgumentError("sqp: empty initial-weight range");
}

// Dual active-set method in the style of Lawson-Hanson NNLS. With H = LL'
// and X = L^-1 A' the multipliers minimize 1/2 |X l|^2 - r'l over
// l_ineq >= 0, r = -c + X' L^-1 g, and the step is d = L^-T (X l - L^-1 g).
// Working-set systems are solved through a QR factor of the selected
// columns of X, which avoids squaring their condition number.
QpResult solve_qp(const Matrix& H, const Vector& g, const Matrix& Ae, const Vector& ce, const Matrix& Ai,
                  const Vector& ci) {
    const Eigen::Index n = g.size();
    const Eigen::Index me = Ae.rows(), mi = Ai.rows(), m = me + mi;
    if (H.rows() != n || H.cols() != n || Ae.cols() != n || Ai.cols() != n || ce.size() != me || ci.size() != mi)
        throw InvalidArgumentError("solve_qp: dimension mismatch");
    Eigen::LLT<Matrix> hl(H);
    if (hl.info() != Eigen::Success) throw InvalidArgumentError("solve_qp: Hessian is not positive definite");
    const auto L = hl.matrixL();

    Matrix At(n, m);
    At.leftCols(me) = Ae.transpose();
    At.rightCols(mi) = Ai.transpose();
    Vector c(m);
    c.head(me) = ce;
    c.tail(mi) = ci;
    const Matrix X = L.solve(At);
    const Vector gt = L.solve(g);

    QpResult res;
    std::vector<char> free(static_cast<std::size_t>(m), 0);
    for (Eigen::Index i = 0; i < me; ++i) free[static_cast<std::size_t>(i)] = 1;

    // Working-set solve in v = L'd: v = -(I - Q1 Q1')gt + Q1 y with
    // R11' y = -c_W, which stays accurate when the multipliers are large.
    // Rows dependent on the rest of the working set get zero multipliers.
    auto subsolve = [&](Vector& s, Vector& v) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < m; ++i)
            if (free[static_cast<std::size_t>(i)]) idx.push_back(i);
        s = Vector::Zero(m);
        v = -gt;
        if (idx.empty()) return;
        const auto k = static_cast<Eigen::Index>(idx.size());
        Matrix Xw(n, k);
        Vector cw(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            Xw.col(a) = X.col(idx[static_cast<std::size_t>(a)]);
            cw[a] = c[idx[static_cast<std::size_t>(a)]];
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(Xw);
        qr.setThreshold(1e-10);
        const Eigen::Index rk = qr.rank();
        if (rk < k) res.regularized = true;
        if (rk == 0) return;
        const Matrix Q1 = qr.householderQ() * Matrix::Identity(n, rk);
        const auto R11 = qr.matrixR().topLeftCorner(rk, rk).template triangularView<Eigen::Upper>();
        const Vector cp = (qr.colsPermutation().transpose() * cw).head(rk);
        Vector y = -cp;
        R11.transpose().solveInPlace(y);
        const Vector qg = Q1.transpose() * gt;
        v = -gt + Q1 * (qg + y);
        Vector l1 = qg + y;
        R11.solveInPlace(l1);
        Vector lp = Vector::Zero(k);
        lp.head(rk) = l1;
        const Vector lw = qr.colsPermutation() * lp;
        for (Eigen::Index a = 0; a < k; ++a) s[idx[static_cast<std::size_t>(a)]] = lw[a];
    };

    const double tol = 1e-11 * (1.0 + max_abs(c) + max_abs(gt));
    Vector lam, v;
    subsolve(lam, v);
    const int max_outer = static_cast<int>(3 * m + 10);
    int outer = 0;
    for (; outer < max_outer; ++outer) {
        const Vector sl = X.transpose() * v + c;
        Eigen::Index enter = -1;
        double worst = -tol;
        for (Eigen::Index i = me; i < m; ++i)
            if (!free[static_cast<std::size_t>(i)] && sl[i] < worst) {
                worst = sl[i];
                enter = i;
            }
        if (enter < 0) break;
        free[static_cast<std::size_t>(enter)] = 1;
        Vector s, vs;
        for (int inner = 0; inner <= max_outer; ++inner) {
            subsolve(s, vs);
            double alpha = 1.0;
            Eigen::Index leave = -1;
            for (Eigen::Index i = me; i < m; ++i) {
                if (!free[static_cast<std::size_t>(i)] || s[i] > 0.0) continue;
                const double denom = lam[i] - s[i];
                const double a = denom > 0.0 ? lam[i] / denom : 0.0;
                if (a < alpha) {
                    alpha = a;
                    leave = i;
                }
            }
            if (leave < 0) {
                lam = s;
                v = vs;
                break;
            }
            lam += alpha * (s - lam);
            v += alpha * (vs - v);
            for (Eigen::Index i = me; i < m; ++i)
                if (free[static_cast<std::size_t>(i)] && (i == leave || lam[i] <= 0.0)) {
                    free[static_cast<std::size_t>(i)] = 0;
                    lam[i] = 0.0;
                }
        }
        if (!lam.allFinite()) break;
    }
    if (outer == max_outer || !lam.allFinite()) res.converged = false;

    res.d = L.transpose().solve(v);
    res.lambda_eq = lam.head(me);
    res.lambda_ineq = lam.tail(mi);
    for (Eigen::Index i = me; i < m; ++i)
        if (free[static_cast<std::size_t>(i)]) ++res.active;

    // Stationarity holds by construction; report feasibility and
    // complementarity of the recovered step.
    const Vector ae = Ae * res.d + ce;
    const Vector ai = Ai * res.d + ci;
    double kkt = max_abs(ae);
    for (Eigen::Index i = 0; i < mi; ++i) {
        kkt = std::max(kkt, -ai[i]);
        kkt = std::max(kkt, std::abs(res.lambda_ineq[i] * ai[i]));
    }
    res.kkt_residual = kkt;
    if (!res.d.allFinite()) res.converged = false;
    return res;
}

std::string SqpReport::to_csv() const {
    std::ostringstream os;
    os << "iteration,merit,max_violation,step_norm,active_set\n";
    for (const auto& h : history)
        os << h.iteration << ',' << fmt17(h.merit) << ',' << fmt17(h.violation) << ',' << fmt17(h.step_norm) << ','
           << h.active << '\n';
    return os.str();
}

std::vector<double> initial_weights(const MpcProblem& p, const SqpConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> dist(cfg.init_low, cfg.init_high);
    std::vector<double> w(p.num_params());
    // Mirror [lo, hi) onto (lo, hi].
    for (double& v : w) v = cfg.init_low + cfg.init_high - dist(rng);
    return w;
}

SqpResult sqp_solve(const MpcProblem& p, const SqpConfig& cfg) { return sqp_solve(p, cfg, initial_weights(p, cfg)); }

namespace {

/// Dynamics and boundary defects stacked as [defects / sqrt(N); boundary], so
/// the squared norm is the mean-square defect plus the squared boundary
/// error. Far from feasibility the input bounds join F as min(0, slack) rows;
/// close to it they are kept apart and imposed as linearized constraints.
struct Feasibility {
    Vector F;
    Matrix J;
    Vector bounds;
    Matrix bounds_jac;

    double measure() const { return F.squaredNorm() + kBoundPenalty * (-bounds.cwiseMin(0.0)).sum(); }
};

Feasibility feasibility(const MpcProblem& p, const Vector& w, bool hard_bounds, bool with_jacobian) {
    const std::size_t n = p.num_params();
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(p.grid.size() - 1));
    const auto nb = static_cast<Eigen::Index>(2 * p.nz());
    Feasibility out;
    auto assemble = [&](const Vector& defects, const Vector& eq, const Vector& ineq) {
        const Eigen::Index soft = hard_bounds ? 0 : ineq.size();
        out.F.resize(defects.size() + nb + soft);
        out.F.head(defects.size()) = defects * inv_sqrt_n;
        out.F.segment(defects.size(), nb) = eq.tail(nb);
        if (hard_bounds)
            out.bounds = ineq;
        else
            out.F.tail(soft) = ineq.cwiseMin(0.0);
    };
    if (!with_jacobian) {
        const auto c = evaluate<double>(p, std::span<const double>(w.data(), n), p.grid, true);
        check_finite(c.defects, "dynamics");
        assemble(to_vector(c.defects), to_vector(c.eq), to_vector(c.ineq));
        return out;
    }
    NlpJacobians J = nlp_jacobians(p, std::vector<double>(w.data(), w.data() + w.size()));
    assemble(J.defects, J.values.eq, J.values.ineq);
    const auto nd = J.defects.size();
    out.J.resize(out.F.size(), static_cast<Eigen::Index>(n));
    out.J.topRows(nd) = J.defect_jac * inv_sqrt_n;
    out.J.middleRows(nd, nb) = J.eq_jac.bottomRows(nb);
    if (hard_bounds) {
        out.bounds_jac = std::move(J.ineq_jac);
    } else {
        for (Eigen::Index i = 0; i < J.values.ineq.size(); ++i) {
            if (J.values.ineq[i] < 0.0)
                out.J.row(nd + nb + i) = J.ineq_jac.row(i);
            else
                out.J.row(nd + nb + i).setZero();
        }
        out.bounds_jac.resize(0, static_cast<Eigen::Index>(n));
    }
    return out;
}

}  // namespace

SqpResult sqp_solve(const MpcProblem& p, const SqpConfig& cfg, std::vector<double> w0) {
    p.validate();
    cfg.validate();
    const auto n = static_cast<Eigen::Index>(p.num_params());
    if (w0.size() != static_cast<std::size_t>(n))
        throw InvalidArgumentError("sqp_solve: initial weights have the wrong size");

    SqpResult out;
    SqpReport& rep = out.report;
    Vector w = to_vector(w0);
    const Matrix I = Matrix::Identity(n, n);
    Matrix B = I;
    const bool bfgs = cfg.hessian == SqpHessian::Bfgs;

    auto jac_at = [&](const Vector& x) { return nlp_jacobians(p, std::vector<double>(x.data(), x.data() + x.size())); };
    NlpJacobians J = jac_at(w);
    const Eigen::Index me = J.values.eq.size(), mi = J.values.ineq.size();
    Vector mu_e = Vector::Zero(me), mu_i = Vector::Zero(mi);

    auto penalty = [&](const Vector& eq, const Vector& ineq) {
        double v = mu_e.dot(eq.cwiseAbs());
        for (Eigen::Index i = 0; i < mi; ++i) v += mu_i[i] * std::max(0.0, -ineq[i]);
        return v;
    };
    auto merit_at = [&](const Vector& x) {
        try {
            const auto v = nlp_constraints(p, std::vector<double>(x.data(), x.data() + x.size()));
            return 0.5 * x.squaredNorm() + penalty(v.eq, v.ineq);
        } catch (const NonFiniteError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    auto lagrangian_grad = [&](const Vector& x, const NlpJacobians& Jx, const QpResult& qp) -> Vector {
        return x - Jx.eq_jac.transpose() * qp.lambda_eq - Jx.ineq_jac.transpose() * qp.lambda_ineq;
    };
    auto note = [&](int iteration, const std::string& what) {
        if (rep.notes.size() < kMaxNotes) rep.notes.push_back("iteration " + std::to_string(iteration) + ": " + what);
    };

    Vector best = w;
    double best_violation = std::numeric_limits<double>::infinity();
    double best_objective = std::numeric_limits<double>::infinity();
    auto consider = [&](const Vector& x, double viol) {
        const double obj = 0.5 * x.squaredNorm();
        const bool better = viol <= cfg.constraint_tol
                                ? (best_violation > cfg.constraint_tol || obj < best_objective)
                                : viol < best_violation;
        if (better) {
            best = x;
            best_violation = viol;
            best_objective = obj;
        }
    };

    bool converged = false;
    bool noted_reg = false;
    bool restoring = false;
    double lm_damping = 1e-3;
    int it = 0;
    for (; it < cfg.max_iterations; ++it) {
        const Vector& eq = J.values.eq;
        const Vector& ineq = J.values.ineq;
        const double viol = violation_of(eq, ineq);
        consider(w, viol);
        SqpIteration rec;
        rec.iteration = it + 1;

        if (restoring) {
            // Levenberg step on the defects. Near feasibility the linearized
            // input bounds are imposed exactly.
            const bool hard = viol <= kHardBoundSwitch;
            const Feasibility fz = feasibility(p, w, hard, true);
            const double f0 = fz.measure();
            const Matrix A = fz.J.transpose() * fz.J;
            const Vector g = fz.J.transpose() * fz.F;
            const Matrix no_eq(0, n);
            bool moved = false;
            for (int k = 0; k < kMaxDampingTrials && !moved; ++k) {
                Matrix Al = A;
                Al.diagonal().array() += lm_damping;
                QpResult step;
                if (hard)
                    step = solve_qp(Al, g, no_eq, Vector(), fz.bounds_jac, fz.bounds);
                else
                    step.d = -Al.ldlt().solve(g);
                const Vector wn = w + step.d;
                double fn = std::numeric_limits<double>::infinity();
                try {
                    fn = feasibility(p, wn, hard, false).measure();
                } catch (const NonFiniteError&) {
                }
                if (step.converged && fn < f0) {
                    rec.step_norm = max_abs(step.d);
                    rec.active = step.active;
                    w = wn;
                    lm_damping = std::max(lm_damping / 3.0, 1e-15);
                    moved = true;
                } else {
                    lm_damping *= 4.0;
                }
            }
            if (!moved) {
                note(it + 1, "restoration made no progress");
                rec.restoration = true;
                rec.violation = viol;
                rec.merit = 0.5 * w.squaredNorm() + penalty(eq, ineq);
                rep.history.push_back(rec);
                ++it;
                break;
            }
            J = jac_at(w);
            rec.restoration = true;
            rec.step_length = 1.0;
            rec.violation = violation_of(J.values.eq, J.values.ineq);
            rec.merit = 0.5 * w.squaredNorm() + penalty(J.values.eq, J.values.ineq);
            rep.history.push_back(rec);
            if (cfg.verbose && (it % 50 == 0))
                std::fprintf(stderr, "restore %5d viol %.3e step %.3e damping %.1e\n", it + 1, rec.violation,
                             rec.step_norm, lm_damping);
            if (rec.violation <= cfg.constraint_tol) {
                restoring = false;
                B = I;
                note(it + 1, "feasible again, resuming SQP steps");
            }
            continue;
        }

        const double scale = 1.0 + std::max(max_abs(eq), max_abs(ineq));
        const QpResult qp = solve_qp(B, w, J.eq_jac, eq, J.ineq_jac, ineq);
        rec.active = qp.active;
        rec.kkt_residual = qp.kkt_residual;
        if (qp.regularized && !noted_reg) {
            note(it + 1, "rank-deficient working set in the QP subproblem");
            noted_reg = true;
        }
        if (!qp.converged || qp.kkt_residual > kQpTolerance * scale) {
            note(it + 1, "linearized constraints inconsistent, entering restoration");
            restoring = true;
            rec.merit = 0.5 * w.squaredNorm() + penalty(eq, ineq);
            rec.violation = viol;
            rep.history.push_back(rec);
            continue;
        }

        for (Eigen::Index i = 0; i < me; ++i)
            mu_e[i] = std::max(std::abs(qp.lambda_eq[i]), 0.5 * (mu_e[i] + std::abs(qp.lambda_eq[i])));
        for (Eigen::Index i = 0; i < mi; ++i)
            mu_i[i] = std::max(std::abs(qp.lambda_ineq[i]), 0.5 * (mu_i[i] + std::abs(qp.lambda_ineq[i])));
        rec.penalty = std::max(max_abs(mu_e), max_abs(mu_i));

        // Armijo search on the l1 merit; D bounds its directional derivative
        // along an exact QP step.
        const double phi0 = 0.5 * w.squaredNorm() + penalty(eq, ineq);
        const double D = w.dot(qp.d) - penalty(eq, ineq);
        double alpha = 1.0;
        double phi = merit_at(w + qp.d);
        bool accepted = D < 0.0 && phi <= phi0 + 0.1 * alpha * D;
        for (int ls = 0; !accepted && D < 0.0 && ls < kMaxLineSearch; ++ls) {
            const double curv = phi - phi0 - alpha * D;
            const double next = curv > 0.0 ? -D * alpha * alpha / (2.0 * curv) : 0.5 * alpha;
            alpha = std::clamp(next, 0.1 * alpha, 0.5 * alpha);
            phi = merit_at(w + alpha * qp.d);
            accepted = phi <= phi0 + 0.1 * alpha * D;
        }
        rec.merit_before = phi0;
        if (!accepted) {
            note(it + 1, "line search found no merit decrease, entering restoration");
            restoring = true;
            rec.merit = phi0;
            rec.violation = viol;
            rep.history.push_back(rec);
            continue;
        }

        const Vector w_new = w + alpha * qp.d;
        NlpJacobians J_new = jac_at(w_new);
        if (bfgs) {
            // Powell-damped BFGS on the Lagrangian with the new multipliers.
            const Vector s = w_new - w;
            Vector y = lagrangian_grad(w_new, J_new, qp) - lagrangian_grad(w, J, qp);
            const Vector Bs = B * s;
            const double sBs = s.dot(Bs);
            const double sy = s.dot(y);
            if (sy < 0.2 * sBs) {
                const double theta = 0.8 * sBs / (sBs - sy);
                y = theta * y + (1.0 - theta) * Bs;
            }
            const double sy2 = s.dot(y);
            if (sBs > 0.0 && sy2 > 0.0) B += (y * y.transpose()) / sy2 - (Bs * Bs.transpose()) / sBs;
            if (Eigen::LLT<Matrix>(B).info() != Eigen::Success) B = I;
        }
        w = w_new;
        J = std::move(J_new);

        rec.merit = phi;
        rec.violation = violation_of(J.values.eq, J.values.ineq);
        rec.step_norm = alpha * max_abs(qp.d);
        rec.step_length = alpha;
        rep.history.push_back(rec);
        if (cfg.verbose && (it % 50 == 0))
            std::fprintf(stderr, "sqp %5d merit %.6e viol %.3e step %.3e alpha %.3e active %zu\n", it + 1, rec.merit,
                         rec.violation, rec.step_norm, alpha, rec.active);
        if (rec.violation <= cfg.constraint_tol && rec.step_norm <= cfg.step_tol) {
            converged = true;
            ++it;
            break;
        }
    }
    consider(w, violation_of(J.values.eq, J.values.ineq));

    out.w.assign(best.data(), best.data() + best.size());
    rep.iterations = it;
    rep.violation = best_violation;
    rep.success = best_violation <= cfg.constraint_tol;
    rep.converged = converged;
    if (rep.success && !converged) rep.notes.push_back("feasible, step tolerance not reached within the budget");
    if (!rep.success) rep.notes.push_back("no feasible iterate within " + std::to_string(it) + " iterations");
    rep.dynamics_residual = dynamics_residual(p, out.w);
    rep.boundary_error = boundary_error(p, out.w);
    const std::size_t ns = p.state_net.param_count();
    for (const auto& u : net_eval(p.input_net, std::span<const double>(out.w).subspan(ns), std::span<const double>(p.grid)))
        for (double v : u) rep.max_input = std::max(rep.max_input, std::abs(v));
    return out;
}

namespace {

std::vector<std::string> labels_or(const std::vector<std::string>& names, std::size_t n, const char* prefix) {
    if (names.size() == n) return names;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
    return out;
}

std::vector<double> input_at(const MpcProblem& p, std::span<const double> wu, double t) {
    const double ts[1] = {t};
    return net_eval<double>(p.input_net, wu, std::span<const double>(ts)).front();
}

/// RK4 step with u(t) evaluated at each stage time.
std::vector<double> rk4_timed(const MpcProblem& p, std::span<const double> wu, std::span<const double> z, double t,
                              double h) {
    auto f = [&](const std::vector<double>& x, double s) {
        std::vector<double> a = x;
        const auto u = input_at(p, wu, s);
        a.insert(a.end(), u.begin(), u.end());
        return p.dynamics(std::span<const double>(a));
    };
    const std::vector<double> x(z.begin(), z.end());
    auto shift = [&](const std::vector<double>& k, double c) {
        std::vector<double> y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += c * k[i];
        return y;
    };
    const auto k1 = f(x, t);
    const auto k2 = f(shift(k1, h / 2), t + h / 2);
    const auto k3 = f(shift(k2, h / 2), t + h / 2);
    const auto k4 = f(shift(k3, h), t + h);
    std::vector<double> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return y;
}

}  // namespace

RolloutPair rollout_check(const MpcProblem& p, std::span<const double> w, double dt) {
    p.validate();
    if (!(dt > 0.0)) throw InvalidArgumentError("rollout_check: dt must be positive");
    if (w.size() != p.num_params()) throw InvalidArgumentError("rollout_check: wrong parameter count");
    const std::size_t ns = p.state_net.param_count();
    const auto ws = w.subspan(0, ns), wu = w.subspan(ns);
    const double t0 = p.grid.front(), tN = p.grid.back();

    std::vector<double> times{t0};
    while (times.back() < tN - 1e-12 * (tN - t0)) times.push_back(std::min(times.back() + dt, tN));

    RolloutPair out;
    for (Trajectory* tr : {&out.mpc, &out.ode}) {
        tr->state_labels = labels_or(p.state_names, p.nz(), "z");
        tr->input_labels = labels_or(p.input_names, p.nu(), "u");
        tr->times = times;
    }
    const auto U = net_eval<double>(p.input_net, wu, std::span<const double>(times));
    out.mpc.states = net_eval<double>(p.state_net, ws, std::span<const double>(times));
    out.mpc.inputs = U;
    out.ode.inputs = U;

    std::vector<double> z = p.z0;
    out.ode.states.push_back(z);
    for (std::size_t k = 1; k < times.size(); ++k) {
        z = rk4_timed(p, wu, z, times[k - 1], times[k] - times[k - 1]);
        bool finite = true;
        for (double v : z) finite = finite && std::isfinite(v);
        if (!finite) {
            out.ode.failed = true;
            out.ode.message = "non-finite state at t = " + fmt17(times[k]);
            out.ode.times.resize(k);
            out.ode.inputs.resize(k);
            break;
        }
        out.ode.states.push_back(z);
    }
    return out;
}

Trajectory receding_horizon(const MpcProblem& p, const SqpConfig& cfg, std::size_t steps, double dt) {
    if (!(dt > 0.0)) throw InvalidArgumentError("receding_horizon: dt must be positive");
    MpcProblem q = p;
    Trajectory tr;
    tr.state_labels = labels_or(p.state_names, p.nz(), "z");
    tr.input_labels = labels_or(p.input_names, p.nu(), "u");
    std::vector<double> z = p.z0;
    std::vector<double> w = initial_weights(p, cfg);
    const double t0 = p.grid.front();
    for (std::size_t s = 0; s < steps; ++s) {
        q.z0 = z;
        const SqpResult r = sqp_solve(q, cfg, w);
        w = r.w;
        const auto wu = std::span<const double>(w).subspan(q.state_net.param_count());
        tr.times.push_back(static_cast<double>(s) * dt);
        tr.states.push_back(z);
        tr.inputs.push_back(input_at(q, wu, t0));
        if (!r.report.success) {
            tr.failed = true;
            tr.message = "re-solve " + std::to_string(s) + " infeasible";
            return tr;
        }
        z = rk4_timed(q, wu, z, t0, dt);
    }
    tr.times.push_back(static_cast<double>(steps) * dt);
    tr.states.push_back(z);
    tr.inputs.push_back(tr.inputs.empty() ? std::vector<double>(p.nu(), 0.0) : tr.inputs.back());
    return tr;
}

std::string format_solution(const MpcProblem& p, std::span<const double> w) {
    if (w.size() != p.num_params()) throw InvalidArgumentError("format_solution: wrong parameter count");
    std::ostringstream os;
    os << "# state_net hidden=" << p.state_net.hidden << " outputs=" << p.state_net.outputs
       << " params=" << p.state_net.param_count() << '\n';
    os << "# input_net hidden=" << p.input_net.hidden << " outputs=" << p.input_net.outputs
       << " params=" << p.input_net.param_count() << '\n';
    for (double v : w) os << fmt17(v) << '\n';
    return os.str();
}

std::vector<double> parse_solution(const std::string& text, const MpcProblem& p) {
    std::istringstream is(text);
    std::string line;
    std::vector<double> w;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(line, &used);
        } catch (const std::exception&) {
            throw InvalidArgumentError("parse_solution: bad value '" + line + "'");
        }
        w.push_back(v);
    }
    if (w.size() != p.num_params())
        throw InvalidArgumentError("parse_solution: expected " + std::to_string(p.num_params()) + " values, got " +
                                   std::to_string(w.size()));
    return w;
}

}  // namespace adctl
