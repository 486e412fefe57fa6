#pragma once

// Trajectory-parameterized MPC: two small tanh networks map time to state and
// input, forward AD supplies their time derivatives, and an SQP solver drives
// the resulting constrained NLP.

#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "adctl/autodiff.hpp"
#include "adctl/sim.hpp"

namespace adctl {

/// One hidden tanh layer, scalar time input. Parameter layout:
/// [W1 (hidden), b1 (hidden), W2 (outputs x hidden, row-major), b2 (outputs)].
/// Time enters as tau = (t - t0) / span.
struct Mlp {
    std::size_t hidden = 30;
    std::size_t outputs = 1;
    double t0 = 0.0;
    double span = 1.0;

    std::size_t param_count() const { return 2 * hidden + hidden * outputs + outputs; }
};

namespace detail {
inline void check_net(const Mlp& net, std::size_t w_size) {
    if (w_size != net.param_count())
        throw InvalidArgumentError("mlp: expected " + std::to_string(net.param_count()) + " parameters, got " +
                                   std::to_string(w_size));
    if (!(net.span > 0.0)) throw InvalidArgumentError("mlp: time span must be positive");
}
}  // namespace detail

/// Outputs at each time, |ts| rows of `outputs` entries.
template <class S, class Tm = double>
auto net_eval(const Mlp& net, std::span<const S> w, std::span<const Tm> ts) {
    using R = std::common_type_t<S, Tm>;
    detail::check_net(net, w.size());
    const std::size_t H = net.hidden, d = net.outputs;
    std::vector<std::vector<R>> out;
    out.reserve(ts.size());
    std::vector<R> h(H);
    for (const Tm& t : ts) {
        const R tau = R((t - net.t0) * (1.0 / net.span));
        for (std::size_t j = 0; j < H; ++j) h[j] = tanh(w[j] * tau + w[H + j]);
        std::vector<R> y(d);
        for (std::size_t i = 0; i < d; ++i) {
            R acc = R(w[2 * H + H * d + i]);
            for (std::size_t j = 0; j < H; ++j) acc += w[2 * H + i * H + j] * h[j];
            y[i] = acc;
        }
        out.push_back(std::move(y));
    }
    return out;
}

/// d(output)/dt at each time, propagated with a tangent over S.
template <class S, class Tm = double>
auto net_dt(const Mlp& net, std::span<const S> w, std::span<const Tm> ts) {
    using R = std::common_type_t<S, Tm>;
    using T = Tangent<R>;
    detail::check_net(net, w.size());
    const std::size_t H = net.hidden, d = net.outputs;
    const double inv = 1.0 / net.span;
    std::vector<std::vector<R>> out;
    out.reserve(ts.size());
    std::vector<R> hd(H);
    for (const Tm& t : ts) {
        const T tau(R((t - net.t0) * inv), R(inv));
        for (std::size_t j = 0; j < H; ++j) hd[j] = tanh(T(R(w[j])) * tau + T(R(w[H + j]))).d;
        std::vector<R> y(d);
        for (std::size_t i = 0; i < d; ++i) {
            R acc(0.0);
            for (std::size_t j = 0; j < H; ++j) acc += w[2 * H + i * H + j] * hd[j];
            y[i] = acc;
        }
        out.push_back(std::move(y));
    }
    return out;
}

struct MpcProblem {
    VectorFunction dynamics;  // f([z; u]) -> dz/dt
    std::vector<double> z0;
    std::vector<double> zN;
    double u_max = 10.0;
    std::vector<double> grid;  // t0 < ... < tN
    Mlp state_net;
    Mlp input_net;
    bool per_sample = false;  // one equality per sample and state instead of the mean-square scalar
    std::vector<std::string> state_names;  // optional labels for trajectories
    std::vector<std::string> input_names;

    std::size_t nz() const { return z0.size(); }
    std::size_t nu() const { return input_net.outputs; }
    std::size_t num_params() const { return state_net.param_count() + input_net.param_count(); }

    /// Throws InvalidArgumentError on inconsistent fields.
    void validate() const;
};

/// Uniform grid of n+1 samples on [t0, tN] with both nets scaled to it.
MpcProblem make_problem(VectorFunction dynamics, std::vector<double> z0, std::vector<double> zN, double u_max,
                        double t0, double tN, std::size_t n, std::size_t hidden);

/// Pendulum swing-up from hanging to upright.
MpcProblem swing_up_problem(double horizon = 3.0, std::size_t n = 50, double u_max = 10.0,
                            std::size_t hidden = 30);

struct NlpValues {
    Vector eq;
    Vector ineq;
};

struct NlpJacobians {
    NlpValues values;
    Matrix eq_jac;
    Matrix ineq_jac;
    Vector defects;      // per-sample dynamics defects, sample-major
    Matrix defect_jac;
};

/// Mean-square dynamics defect over `grid` (or the problem grid).
double dynamics_residual(const MpcProblem& p, std::span<const double> w);
double dynamics_residual(const MpcProblem& p, std::span<const double> w, std::span<const double> grid);

/// Max-norm of the two boundary defects.
double boundary_error(const MpcProblem& p, std::span<const double> w);

NlpValues nlp_constraints(const MpcProblem& p, std::span<const double> w);
NlpJacobians nlp_jacobians(const MpcProblem& p, std::span<const double> w);

/// [eq; ineq] as a differentiable function of w.
VectorFunction constraint_function(const MpcProblem& p);

/// QP Hessian: the objective's identity throughout, or identity refined by
/// damped BFGS updates of the Lagrangian.
enum class SqpHessian { Identity, Bfgs };

struct SqpConfig {
    SqpHessian hessian = SqpHessian::Bfgs;
    int max_iterations = 2000;
    double constraint_tol = 1e-5;
    double step_tol = 1e-6;
    double penalty_growth = 10.0;
    double init_low = 1e-6;
    double init_high = 1e-2;
    std::uint64_t seed = 1;
    bool verbose = false;

    void validate() const;
};

/// Strictly convex QP  min 1/2 d'Hd + g'd  s.t.  Ae d + ce = 0,  Ai d + ci >= 0.
struct QpResult {
    Vector d;
    Vector lambda_eq;
    Vector lambda_ineq;  // >= 0
    std::size_t active = 0;
    double kkt_residual = 0.0;
    bool regularized = false;
    bool converged = true;
};

QpResult solve_qp(const Matrix& H, const Vector& g, const Matrix& Ae, const Vector& ce, const Matrix& Ai,
                  const Vector& ci);

struct SqpIteration {
    int iteration = 0;
    bool restoration = false;  // feasibility-restoration step instead of a QP step
    double merit_before = 0.0;
    double merit = 0.0;
    double violation = 0.0;
    double step_norm = 0.0;
    std::size_t active = 0;
    double kkt_residual = 0.0;
    double step_length = 0.0;
    double penalty = 0.0;
};

struct SqpReport {
    bool success = false;    // a feasible iterate was found
    bool converged = false;  // feasible and the step tolerance was met
    int iterations = 0;
    double violation = 0.0;
    double dynamics_residual = 0.0;
    double boundary_error = 0.0;
    double max_input = 0.0;  // max |u| over the grid samples
    std::vector<SqpIteration> history;
    std::vector<std::string> notes;

    std::string to_csv() const;
};

struct SqpResult {
    std::vector<double> w;
    SqpReport report;
};

/// Seeded initial weights, uniform in (init_low, init_high].
std::vector<double> initial_weights(const MpcProblem& p, const SqpConfig& cfg);

SqpResult sqp_solve(const MpcProblem& p, const SqpConfig& cfg);
SqpResult sqp_solve(const MpcProblem& p, const SqpConfig& cfg, std::vector<double> w0);

/// Net states every `dt` over the grid span, and an RK4 rollout of the
/// dynamics from z0 with u(t) taken from the input net at each stage.
struct RolloutPair {
    Trajectory mpc;
    Trajectory ode;
};
RolloutPair rollout_check(const MpcProblem& p, std::span<const double> w, double dt = 1e-3);

/// Re-solves from the current state after every applied step. Returns the
/// closed-loop trajectory of `steps` steps.
Trajectory receding_horizon(const MpcProblem& p, const SqpConfig& cfg, std::size_t steps, double dt);

/// Flattened w with a net shape header.
std::string format_solution(const MpcProblem& p, std::span<const double> w);
std::vector<double> parse_solution(const std::string& text, const MpcProblem& p);

}  // namespace adctl
