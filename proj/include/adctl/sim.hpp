#pragma once

// Fixed-step RK4 integration with zero-order-hold inputs and closed-loop runs.

#include <functional>
#include <string>
#include <vector>

#include "adctl/autodiff.hpp"
#include "adctl/linctl.hpp"

namespace adctl {

/// One classical RK4 step of x' = f([x; u]) with u held over the step.
std::vector<double> rk4_step(const VectorFunction& f, std::span<const double> x, std::span<const double> u,
                             double dt);

using Controller = std::function<std::vector<double>(double t, std::span<const double> x)>;

struct Trajectory {
    std::vector<std::string> state_labels;
    std::vector<std::string> input_labels;
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> inputs;
    bool failed = false;
    std::string message;

    std::size_t size() const noexcept { return times.size(); }
    /// Header `t,<states>,<inputs>` then one row per sample at 17 significant
    /// digits. A failed run ends with a `# failed: ...` line.
    std::string to_csv() const;
};

/// Rollout from x0 over [0, T] with step dt. Rows k = 0..N hold the state at
/// t_k and the input applied from t_k. T = 0 yields an empty trajectory.
/// Non-finite states or evaluation errors stop the run with `failed` set.
Trajectory simulate(const Plant& plant, const Controller& controller, std::vector<double> x0, double T, double dt);

/// Linear closed loop in deviation coordinates, reported in absolute ones.
Trajectory simulate_linear(const LinearModel& lm, const FeedbackLaw& law, std::vector<double> x0, double T,
                           double dt);

}  // namespace adctl
