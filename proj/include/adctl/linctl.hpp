#pragma once

// Equilibria, linearization and state-feedback design for fields f([x; u]).

#include <complex>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "adctl/autodiff.hpp"
#include "adctl/linalg.hpp"
#include "adctl/structural.hpp"

namespace adctl {

/// A vector field on [x; u] with named coordinates.
struct Plant {
    VectorFunction field;
    std::vector<std::string> states;
    std::vector<std::string> inputs;

    std::size_t nx() const noexcept { return states.size(); }
    std::size_t nu() const noexcept { return inputs.size(); }
    /// Index into [x; u] of a state or input name.
    std::size_t index_of(const std::string& name) const;
};

Plant plant_of(const CausalModel& model);

struct Equilibrium {
    std::vector<double> x;
    std::vector<double> u;
    std::map<std::string, double> pinned;
};

/// Gauss-Newton on {f(x, u) = 0} plus the pinned coordinates, starting from
/// `guess` = [x; u]. Tolerance 1e-12, at most 100 iterations.
Equilibrium find_equilibrium(const Plant& plant, const std::map<std::string, double>& pinned,
                             std::vector<double> guess);

struct LinearModel {
    Matrix A;
    Matrix B;
    Equilibrium eq;
};

LinearModel linearize(const Plant& plant, const Equilibrium& eq);

/// [B, AB, ..., A^{n-1}B] and its numerical rank.
std::pair<Matrix, int> controllability(const LinearModel& lm);

struct FeedbackLaw {
    Matrix K;  // u = u_ss - K (x - x_ss)
    Equilibrium eq;
};

/// Places eig(A - BK) at `poles`. Ackermann for one input, Sylvester-equation
/// method otherwise.
FeedbackLaw pole_place(const LinearModel& lm, const std::vector<std::complex<double>>& poles);

std::vector<double> feedback_control(const FeedbackLaw& law, std::span<const double> x);

/// Greedy nearest matching distance between two spectra (max over pairs).
double spectrum_distance(std::vector<std::complex<double>> a, std::vector<std::complex<double>> b);

}  // namespace adctl
