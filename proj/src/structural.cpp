#include "adctl/structural.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace adctl {

// --- Matching ---------------------------------------------------------------

bool Matching::complete() const {
    return std::all_of(equation_to_unknown.begin(), equation_to_unknown.end(),
                       [](const auto& m) { return m.has_value(); });
}

std::vector<std::size_t> Matching::unmatched_equations() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < equation_to_unknown.size(); ++i)
        if (!equation_to_unknown[i]) out.push_back(i);
    return out;
}

std::size_t Matching::size() const {
    return static_cast<std::size_t>(std::count_if(equation_to_unknown.begin(), equation_to_unknown.end(),
                                                  [](const auto& m) { return m.has_value(); }));
}

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct Augmenter {
    const Incidence& inc;
    std::vector<std::optional<std::size_t>>& eq_to_var;
    std::vector<std::size_t>& var_to_eq;
    std::vector<char> var_seen;
    std::vector<std::size_t> eq_visited;

    bool augment(std::size_t eq) {
        eq_visited.push_back(eq);
        for (std::size_t v : inc.rows[eq]) {
            if (var_seen[v]) continue;
            var_seen[v] = 1;
            if (var_to_eq[v] == kNone || augment(var_to_eq[v])) {
                var_to_eq[v] = eq;
                eq_to_var[eq] = v;
                return true;
            }
        }
        return false;
    }
};

}  // namespace

Matching maximum_matching(const Incidence& inc) {
    Matching m;
    m.equation_to_unknown.assign(inc.rows.size(), std::nullopt);
    std::vector<std::size_t> var_to_eq(inc.unknowns.size(), kNone);
    for (std::size_t eq = 0; eq < inc.rows.size(); ++eq) {
        Augmenter a{inc, m.equation_to_unknown, var_to_eq, std::vector<char>(inc.unknowns.size(), 0), {}};
        a.augment(eq);
    }
    return m;
}

std::vector<std::size_t> singular_subset(const Incidence& inc, const Matching& m, std::size_t equation) {
    auto eq_to_var = m.equation_to_unknown;
    std::vector<std::size_t> var_to_eq(inc.unknowns.size(), kNone);
    for (std::size_t e = 0; e < eq_to_var.size(); ++e)
        if (eq_to_var[e]) var_to_eq[*eq_to_var[e]] = e;
    Augmenter a{inc, eq_to_var, var_to_eq, std::vector<char>(inc.unknowns.size(), 0), {}};
    if (a.augment(equation)) return {};
    std::vector<std::size_t> out = a.eq_visited;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// --- Index reduction --------------------------------------------------------

namespace {

std::size_t incident_equation_count(const EquationSystem& sys, int var) {
    std::size_t n = 0;
    for (const auto& eq : sys.equations())
        if (eq.lhs.references(var) || eq.rhs.references(var)) ++n;
    return n;
}

}  // namespace

IndexReduction index_reduce(const EquationSystem& sys) {
    IndexReduction r{sys, {}, 0};
    for (;;) {
        const Incidence inc = incidence(r.system);
        const Matching m = maximum_matching(inc);
        if (m.complete()) return r;

        const auto unmatched = m.unmatched_equations();
        auto fail = [&](const std::string& why) {
            std::ostringstream os;
            os << "structurally singular system (" << why << "); unmatched equations:";
            for (auto e : unmatched) os << ' ' << e;
            throw StructuralSingularityError(os.str(), unmatched);
        };
        if (r.rounds >= kMaxDifferentiationRounds) fail("differentiation bound reached");

        std::set<std::size_t> to_diff;
        for (std::size_t e : unmatched)
            for (std::size_t s : singular_subset(inc, m, e)) to_diff.insert(s);
        if (to_diff.empty()) fail("no differentiable subset");

        std::vector<std::size_t> added;
        for (std::size_t e : to_diff) {
            const Equation src = r.system.equations()[e];
            const auto before = r.system.variables().size();
            TimeDerivative dl = diff_time(src.lhs, r.system);
            TimeDerivative dr = diff_time(src.rhs, dl.system);
            r.system = std::move(dr.system);
            // an algebraic whose derivative now appears is integrated like a state
            for (std::size_t id = before; id < r.system.variables().size(); ++id) {
                const auto& v = r.system.variables()[id];
                if (v.kind == VarKind::Derivative && v.derivative_of >= 0 &&
                    r.system.variable(v.derivative_of).kind == VarKind::Algebraic)
                    r.system.mutable_variable(v.derivative_of).kind = VarKind::State;
            }
            Equation d{dl.expr, dr.expr, static_cast<int>(e), "d/dt"};
            r.system.add_equation(std::move(d));
            added.push_back(r.system.equations().size() - 1);
        }

        for (std::size_t eq_index : added) {
            const Equation& eq = r.system.equations()[eq_index];
            int best = -1;
            std::size_t best_count = 0;
            for (int s : r.system.states()) {
                const int der = r.system.variable(s).derivative;
                if (der < 0 || r.system.variable(der).kind != VarKind::Derivative) continue;
                if (!eq.lhs.references(der) && !eq.rhs.references(der)) continue;
                const std::size_t count = incident_equation_count(r.system, s);
                if (best < 0 || count < best_count) {
                    best = s;
                    best_count = count;
                }
            }
            if (best < 0) continue;
            const int der = r.system.variable(best).derivative;
            r.system.mutable_variable(best).kind = VarKind::Algebraic;
            auto& dv = r.system.mutable_variable(der);
            dv.kind = VarKind::Algebraic;
            dv.dummy = true;
            r.dummies.push_back({der, best});
        }
        ++r.rounds;
    }
}

// --- BLT --------------------------------------------------------------------

const char* to_string(SolverTag tag) {
    switch (tag) {
        case SolverTag::ExplicitAssignment: return "explicit-assignment";
        case SolverTag::LinearSymbolic: return "linear-symbolic";
        case SolverTag::Newton: return "newton";
        case SolverTag::Surrogate: return "surrogate";
    }
    return "?";
}

std::size_t BltForm::newton_blocks() const {
    return static_cast<std::size_t>(
        std::count_if(blocks.begin(), blocks.end(), [](const Block& b) { return b.tag == SolverTag::Newton; }));
}

namespace {

void classify(const EquationSystem& sys, Block& b) {
    if (b.size() != 1) {
        b.tag = SolverTag::Newton;
        return;
    }
    const Equation& eq = sys.equations()[b.equations[0]];
    const int u = b.unknowns[0];
    auto is_var = [u](const Expr& e) { return e.op() == Op::Var && e.variable_id() == u; };
    if (is_var(eq.lhs) && !eq.rhs.references(u)) {
        b.tag = eq.origin == "surrogate" ? SolverTag::Surrogate : SolverTag::ExplicitAssignment;
        b.solution = eq.rhs;
        return;
    }
    if (is_var(eq.rhs) && !eq.lhs.references(u)) {
        b.tag = SolverTag::ExplicitAssignment;
        b.solution = eq.lhs;
        return;
    }
    const Expr r = eq.residual();
    const Expr slope = partial_derivative(r, u);
    if (!slope.references(u) && !slope.is_constant(0.0)) {
        // r = slope * u + r(u = 0)
        const Expr offset = substitute(r, u, Expr::constant(0.0));
        b.tag = SolverTag::LinearSymbolic;
        b.solution = -offset / slope;
        return;
    }
    b.tag = SolverTag::Newton;
}

}  // namespace

BltForm blt_sort(const EquationSystem& sys, const Matching& m) {
    if (!m.complete()) throw PreconditionError("blt_sort requires a complete matching");
    const Incidence inc = incidence(sys);
    const std::size_t n = inc.rows.size();
    if (m.equation_to_unknown.size() != n) throw InvalidArgumentError("matching does not fit the system");
    std::vector<std::size_t> var_to_eq(inc.unknowns.size(), kNone);
    for (std::size_t e = 0; e < n; ++e) var_to_eq[*m.equation_to_unknown[e]] = e;

    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t e = 0; e < n; ++e) {
        for (std::size_t c : inc.rows[e]) {
            if (c == *m.equation_to_unknown[e]) continue;
            if (var_to_eq[c] != kNone) adj[e].push_back(var_to_eq[c]);
        }
        std::sort(adj[e].begin(), adj[e].end());
        adj[e].erase(std::unique(adj[e].begin(), adj[e].end()), adj[e].end());
    }

    // Tarjan; an SCC is emitted after everything it depends on.
    BltForm blt;
    std::vector<std::size_t> index(n, kNone), low(n, 0);
    std::vector<char> on_stack(n, 0);
    std::vector<std::size_t> stack;
    std::size_t counter = 0;
    std::function<void(std::size_t)> visit = [&](std::size_t v) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = 1;
        for (std::size_t w : adj[v]) {
            if (index[w] == kNone) {
                visit(w);
                low[v] = std::min(low[v], low[w]);
            } else if (on_stack[w]) {
                low[v] = std::min(low[v], index[w]);
            }
        }
        if (low[v] == index[v]) {
            Block b;
            std::size_t w;
            do {
                w = stack.back();
                stack.pop_back();
                on_stack[w] = 0;
                b.equations.push_back(w);
            } while (w != v);
            std::sort(b.equations.begin(), b.equations.end());
            for (std::size_t e : b.equations) b.unknowns.push_back(inc.unknowns[*m.equation_to_unknown[e]]);
            classify(sys, b);
            blt.blocks.push_back(std::move(b));
        }
    };
    for (std::size_t e = 0; e < n; ++e)
        if (index[e] == kNone) visit(e);
    return blt;
}

// --- Block solving ----------------------------------------------------------

namespace {
constexpr double kNewtonTolerance = 1e-12;
constexpr int kNewtonMaxIterations = 50;
}  // namespace

BlockSolveReport solve_block(const EquationSystem& sys, const Block& block, std::span<double> values,
                             std::vector<double>* warm_start) {
    if (block.tag != SolverTag::Newton) {
        if (!block.solution) throw InvalidArgumentError("block has no closed-form solution");
        const double v = block.solution->eval<double>(values);
        if (!std::isfinite(v))
            throw NonFiniteError("non-finite value for '" + sys.variable(block.unknowns[0]).name + "'", 0);
        values[static_cast<std::size_t>(block.unknowns[0])] = v;
        return {0, 0.0};
    }

    const std::size_t n = block.size();
    Vector x = Vector::Zero(static_cast<Eigen::Index>(n));
    if (warm_start && warm_start->size() == n) x = to_vector(*warm_start);

    std::vector<Dual> dvals(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) dvals[i] = Dual(values[i]);

    bool perturbed = false;
    double res_norm = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= kNewtonMaxIterations; ++it) {
        for (std::size_t k = 0; k < n; ++k) {
            const auto id = static_cast<std::size_t>(block.unknowns[k]);
            values[id] = x(static_cast<Eigen::Index>(k));
            dvals[id] = Dual::variable(values[id], k, n);
        }
        std::vector<Dual> r;
        r.reserve(n);
        for (std::size_t e : block.equations) {
            const auto& eq = sys.equations()[e];
            r.push_back(eq.lhs.eval<Dual>(dvals) - eq.rhs.eval<Dual>(dvals));
        }
        auto [rv, jac] = unpack(r, n);
        res_norm = rv.cwiseAbs().maxCoeff();
        if (res_norm <= kNewtonTolerance) {
            for (std::size_t k = 0; k < n; ++k) dvals[static_cast<std::size_t>(block.unknowns[k])] = Dual(values[static_cast<std::size_t>(block.unknowns[k])]);
            if (warm_start) *warm_start = to_std(x);
            return {it, res_norm};
        }
        if (it == kNewtonMaxIterations) break;
        Eigen::FullPivLU<Matrix> lu(jac);
        if (lu.rank() < static_cast<Eigen::Index>(n)) {
            if (perturbed) throw SingularBlockError("singular Jacobian in block solving '" +
                                                    sys.variable(block.unknowns[0]).name + "'");
            perturbed = true;
            for (std::size_t k = 0; k < n; ++k) x(static_cast<Eigen::Index>(k)) += 1e-3 * static_cast<double>(k + 1);
            continue;
        }
        x -= lu.solve(rv);
        if (!x.allFinite()) break;
    }
    throw ConvergenceError("Newton did not converge for block solving '" + sys.variable(block.unknowns[0]).name +
                               "' (residual " + std::to_string(res_norm) + ")",
                           res_norm);
}

void solve_block(const EquationSystem& sys, const Block& block, std::span<Dual> values) {
    if (block.tag == SolverTag::Newton)
        throw NotDifferentiableError("a Newton block cannot be evaluated with Dual numbers");
    Dual v = block.solution->eval<Dual>(values);
    if (!is_finite(v))
        throw NonFiniteError("non-finite value for '" + sys.variable(block.unknowns[0]).name + "'", 0);
    values[static_cast<std::size_t>(block.unknowns[0])] = std::move(v);
}

// --- Causal model -----------------------------------------------------------

std::vector<std::string> CausalModel::state_names() const {
    std::vector<std::string> out;
    for (int s : states) out.push_back(system.variable(s).name);
    return out;
}

std::vector<std::string> CausalModel::input_names() const {
    std::vector<std::string> out;
    for (int u : inputs) out.push_back(system.variable(u).name);
    return out;
}

namespace {
template <class S>
std::vector<S> initial_values(const CausalModel& m, std::span<const S> x, std::span<const S> u) {
    if (x.size() != m.states.size() || u.size() != m.inputs.size())
        throw InvalidArgumentError("causal model expects " + std::to_string(m.states.size()) + " states and " +
                                   std::to_string(m.inputs.size()) + " inputs");
    const auto defaults = m.system.default_values();
    std::vector<S> values(defaults.begin(), defaults.end());
    for (std::size_t i = 0; i < x.size(); ++i) values[static_cast<std::size_t>(m.states[i])] = x[i];
    for (std::size_t i = 0; i < u.size(); ++i) values[static_cast<std::size_t>(m.inputs[i])] = u[i];
    return values;
}
}  // namespace

std::vector<double> CausalModel::sweep(std::span<const double> x, std::span<const double> u,
                                       NewtonWorkspace* ws) const {
    auto values = initial_values<double>(*this, x, u);
    if (ws && ws->guesses.size() != blt.blocks.size()) ws->guesses.assign(blt.blocks.size(), {});
    for (std::size_t b = 0; b < blt.blocks.size(); ++b)
        solve_block(system, blt.blocks[b], values, ws ? &ws->guesses[b] : nullptr);
    return values;
}

std::vector<Dual> CausalModel::sweep(std::span<const Dual> x, std::span<const Dual> u) const {
    auto values = initial_values<Dual>(*this, x, u);
    for (const auto& b : blt.blocks) solve_block(system, b, std::span<Dual>(values));
    return values;
}

CausalModel causalize_reduced(EquationSystem sys, std::vector<DummyDerivative> dummies) {
    CausalModel m;
    const Incidence inc = incidence(sys);
    const Matching match = maximum_matching(inc);
    if (!match.complete())
        throw StructuralSingularityError("system has no complete matching", match.unmatched_equations());
    m.blt = blt_sort(sys, match);
    m.states = sys.states();
    m.inputs = sys.inputs();
    m.system = std::move(sys);
    m.dummies = std::move(dummies);
    return m;
}

CausalModel causalize(const EquationSystem& sys) {
    IndexReduction r = index_reduce(sys);
    return causalize_reduced(std::move(r.system), std::move(r.dummies));
}

VectorFunction causal_field(const CausalModel& model) {
    const std::size_t ns = model.states.size();
    const std::size_t nu = model.inputs.size();
    std::vector<std::size_t> outputs;
    for (int s : model.states) {
        const int d = model.system.variable(s).derivative;
        if (d < 0) throw InvalidArgumentError("state '" + model.system.variable(s).name + "' has no derivative");
        outputs.push_back(static_cast<std::size_t>(d));
    }
    auto shared = std::make_shared<const CausalModel>(model);
    VectorFunction::RealFn real = [shared, outputs, ns](std::span<const double> z, std::span<const double>) {
        NewtonWorkspace ws;
        const auto values = shared->sweep(z.first(ns), z.subspan(ns), &ws);
        std::vector<double> out;
        out.reserve(outputs.size());
        for (auto o : outputs) out.push_back(values[o]);
        return out;
    };
    VectorFunction::DualFn dual;
    if (model.blt.newton_blocks() == 0) {
        dual = [shared, outputs, ns](std::span<const Dual> z, std::span<const double>) {
            const auto values = shared->sweep(z.first(ns), z.subspan(ns));
            std::vector<Dual> out;
            out.reserve(outputs.size());
            for (auto o : outputs) out.push_back(values[o]);
            return out;
        };
    }
    return VectorFunction(ns + nu, 0, ns, std::move(real), std::move(dual));
}

std::string format_blt(const CausalModel& model) {
    std::ostringstream os;
    for (std::size_t k = 0; k < model.blt.blocks.size(); ++k) {
        const Block& b = model.blt.blocks[k];
        os << "block " << k << ": size " << b.size() << ", unknowns [";
        for (std::size_t i = 0; i < b.unknowns.size(); ++i)
            os << (i ? ", " : "") << model.system.variable(b.unknowns[i]).name;
        os << "], " << to_string(b.tag) << '\n';
    }
    return os.str();
}

}  // namespace adctl
