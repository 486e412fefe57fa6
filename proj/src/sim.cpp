#include "adctl/sim.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace adctl {

namespace {

std::vector<double> eval_field(const VectorFunction& f, std::span<const double> x, std::span<const double> u) {
    std::vector<double> z(x.begin(), x.end());
    z.insert(z.end(), u.begin(), u.end());
    return f(std::span<const double>(z));
}

std::vector<double> axpy(std::span<const double> x, double h, const std::vector<double>& k) {
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += h * k[i];
    return out;
}

}  // namespace

std::vector<double> rk4_step(const VectorFunction& f, std::span<const double> x, std::span<const double> u,
                             double dt) {
    if (!(dt > 0.0)) throw InvalidArgumentError("rk4_step requires dt > 0");
    if (x.size() != f.output_dim()) throw InvalidArgumentError("rk4_step: state dimension mismatch");
    const auto k1 = eval_field(f, x, u);
    const auto k2 = eval_field(f, axpy(x, dt / 2, k1), u);
    const auto k3 = eval_field(f, axpy(x, dt / 2, k2), u);
    const auto k4 = eval_field(f, axpy(x, dt, k3), u);
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (!std::isfinite(out[i])) throw NonFiniteError("non-finite state after RK4 step", i);
    }
    return out;
}

std::string Trajectory::to_csv() const {
    std::ostringstream os;
    os << 't';
    for (const auto& s : state_labels) os << ',' << s;
    for (const auto& s : input_labels) os << ',' << s;
    os << '\n';
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (std::size_t k = 0; k < times.size(); ++k) {
        put(times[k]);
        for (double v : states[k]) os << ',', put(v);
        for (double v : inputs[k]) os << ',', put(v);
        os << '\n';
    }
    if (failed) os << "# failed: " << message << '\n';
    return os.str();
}

Trajectory simulate(const Plant& plant, const Controller& controller, std::vector<double> x0, double T, double dt) {
    if (!(dt > 0.0) || !(T >= 0.0) || !std::isfinite(T)) throw InvalidArgumentError("simulate requires T >= 0 and dt > 0");
    if (x0.size() != plant.nx()) throw InvalidArgumentError("simulate: initial state has the wrong dimension");
    Trajectory traj;
    traj.state_labels = plant.states;
    traj.input_labels = plant.inputs;
    if (T == 0.0) return traj;

    const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    std::vector<double> x = std::move(x0);
    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = k == steps ? T : static_cast<double>(k) * dt;
        try {
            auto u = controller(t, x);
            if (u.size() != plant.nu()) throw InvalidArgumentError("controller returned the wrong input dimension");
            for (std::size_t i = 0; i < u.size(); ++i)
                if (!std::isfinite(u[i])) throw NonFiniteError("non-finite controller output", i);
            traj.times.push_back(t);
            traj.states.push_back(x);
            traj.inputs.push_back(u);
            if (k == steps) break;
            const double h = std::min(dt, T - t);
            x = rk4_step(plant.field, x, u, h);
        } catch (const Error& e) {
            traj.failed = true;
            std::ostringstream msg;
            msg << "t=" << t << ": " << e.what();
            traj.message = msg.str();
            break;
        }
    }
    return traj;
}

Trajectory simulate_linear(const LinearModel& lm, const FeedbackLaw& law, std::vector<double> x0, double T,
                           double dt) {
    const auto n = static_cast<std::size_t>(lm.A.rows());
    const auto m = static_cast<std::size_t>(lm.B.cols());
    const Matrix A = lm.A;
    const Matrix B = lm.B;
    const Vector xs = to_vector(lm.eq.x);
    const Vector us = to_vector(lm.eq.u);
    // absolute coordinates: x' = A (x - xs) + B (u - us)
    auto field = VectorFunction::generic(n + m, 0, n, [A, B, xs, us, n, m](auto z, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(z)::value_type>;
        std::vector<S> out(n, S(0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j)
                out[i] += A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (z[j] - xs(static_cast<Eigen::Index>(j)));
            for (std::size_t j = 0; j < m; ++j)
                out[i] += B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (z[n + j] - us(static_cast<Eigen::Index>(j)));
        }
        return out;
    });
    Plant plant{field, {}, {}};
    for (std::size_t i = 0; i < n; ++i) plant.states.push_back("x" + std::to_string(i + 1));
    for (std::size_t i = 0; i < m; ++i) plant.inputs.push_back("u" + std::to_string(i + 1));
    return simulate(plant, [&law](double, std::span<const double> x) { return feedback_control(law, x); },
                    std::move(x0), T, dt);
}

}  // namespace adctl
