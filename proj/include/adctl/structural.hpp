#pragma once

// Structural analysis of equation systems: matching, index reduction with
// dummy derivatives, BLT sorting and the causal sweep that evaluates a model.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adctl/autodiff.hpp"
#include "adctl/model_ir.hpp"

namespace adctl {

/// Equation -> unknown column (index into Incidence::unknowns).
struct Matching {
    std::vector<std::optional<std::size_t>> equation_to_unknown;

    bool complete() const;
    std::vector<std::size_t> unmatched_equations() const;
    std::size_t size() const;
};

/// Kuhn's augmenting-path algorithm. Equations are scanned in ascending
/// order and lower-index unknowns are preferred.
Matching maximum_matching(const Incidence& inc);

/// Equations visited by a failed augmenting search from `equation`.
std::vector<std::size_t> singular_subset(const Incidence& inc, const Matching& m, std::size_t equation);

struct DummyDerivative {
    int variable = -1;  // the dummy (former derivative) variable id
    int state = -1;     // the state demoted to an algebraic variable
};

struct IndexReduction {
    EquationSystem system;
    std::vector<DummyDerivative> dummies;
    int rounds = 0;  // differentiation rounds performed
};

inline constexpr int kMaxDifferentiationRounds = 5;

/// Pantelides-style reduction: differentiates structurally singular subsets
/// and demotes one state per differentiated equation.
IndexReduction index_reduce(const EquationSystem& sys);

enum class SolverTag { ExplicitAssignment, LinearSymbolic, Newton, Surrogate };
const char* to_string(SolverTag tag);

struct Block {
    std::vector<std::size_t> equations;
    std::vector<int> unknowns;  // variable ids, aligned with `equations` by matching
    SolverTag tag = SolverTag::Newton;
    std::optional<Expr> solution;  // closed form for 1x1 explicit/linear/surrogate blocks

    std::size_t size() const { return equations.size(); }
};

struct BltForm {
    std::vector<Block> blocks;
    std::size_t newton_blocks() const;
};

/// Tarjan SCCs of the equation dependency graph, dependencies first.
BltForm blt_sort(const EquationSystem& sys, const Matching& m);

/// Cached block solutions reused as Newton starting points.
struct NewtonWorkspace {
    std::vector<std::vector<double>> guesses;  // indexed by block
};

struct BlockSolveReport {
    int iterations = 0;
    double residual = 0.0;
};

/// Solves `block` in place: reads upstream values from `values` and writes
/// the block unknowns back. Newton uses absolute tolerance 1e-12 on the
/// max-norm residual and at most 50 iterations.
BlockSolveReport solve_block(const EquationSystem& sys, const Block& block, std::span<double> values,
                             std::vector<double>* warm_start = nullptr);

/// Dual-valued sweep of a single explicit/linear block.
void solve_block(const EquationSystem& sys, const Block& block, std::span<Dual> values);

/// A model reduced to an executable block schedule.
struct CausalModel {
    EquationSystem system;
    BltForm blt;
    std::vector<DummyDerivative> dummies;

    std::vector<int> states;  // integrated states, declaration order
    std::vector<int> inputs;

    std::vector<std::string> state_names() const;
    std::vector<std::string> input_names() const;

    /// Evaluates every variable at (x, u); returns the full variable vector.
    std::vector<double> sweep(std::span<const double> x, std::span<const double> u,
                              NewtonWorkspace* ws = nullptr) const;
    std::vector<Dual> sweep(std::span<const Dual> x, std::span<const Dual> u) const;
};

/// Index reduction, matching and BLT sort in one step.
CausalModel causalize(const EquationSystem& sys);

/// Rebuilds the schedule of `sys` (already index-reduced) keeping `dummies`.
CausalModel causalize_reduced(EquationSystem sys, std::vector<DummyDerivative> dummies);

/// State-derivative field f([x; u]) of a causal model. Differentiable only
/// when the schedule contains no Newton blocks. Each call uses its own
/// Newton workspace.
VectorFunction causal_field(const CausalModel& model);

/// One line per block: `block k: size s, unknowns [a, b], tag`.
std::string format_blt(const CausalModel& model);

}  // namespace adctl
