#pragma once

// Equation-based model language: expression trees, the symbol table of a
// model, the text parser, residual evaluation and symbolic time derivatives.

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adctl/dual.hpp"
#include "adctl/errors.hpp"

namespace adctl {

enum class Op { Const, Var, Neg, Sin, Cos, Tan, Exp, Log, Sqrt, Tanh, Add, Sub, Mul, Div, Pow };

bool is_unary(Op op);
bool is_binary(Op op);
const char* function_name(Op op);

/// Immutable expression tree node handle. Copies share structure.
class Expr {
public:
    Expr();  // constant 0

    static Expr constant(double v);
    static Expr variable(int id);
    static Expr unary(Op op, Expr a);
    static Expr binary(Op op, Expr a, Expr b);

    Op op() const;
    double constant_value() const;
    int variable_id() const;
    Expr first() const;
    Expr second() const;

    bool is_constant() const { return op() == Op::Const; }
    bool is_constant(double v) const { return op() == Op::Const && constant_value() == v; }
    bool references(int id) const;
    void collect_variables(std::set<int>& out) const;
    bool structurally_equal(const Expr& other) const;

    /// Evaluates with `values[id]` supplying every variable.
    template <class S>
    S eval(std::span<const S> values) const {
        return eval_node(*node_, values);
    }

    struct Node;

private:
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

    template <class S>
    static S eval_node(const Node& n, std::span<const S> values);

    std::shared_ptr<const Node> node_;
};

struct Expr::Node {
    Op op = Op::Const;
    double value = 0.0;
    int var = -1;
    std::shared_ptr<const Node> a;
    std::shared_ptr<const Node> b;
};

// Simplifying builders: constant folding plus 0/1 identities.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& a, const Expr& b);
Expr apply(Op fn, const Expr& a);

enum class VarKind { State, Derivative, Algebraic, Input, Parameter };

const char* to_string(VarKind k);

struct ModelVariable {
    std::string name;
    VarKind kind = VarKind::Algebraic;
    std::optional<double> value;  // parameter value or initial condition
    int derivative_of = -1;       // for derivative variables (and dummies): the differentiated variable
    int derivative = -1;          // id of this variable's time derivative, if one exists
    bool dummy = false;           // dummy derivative introduced by index reduction
};

/// `lhs = rhs`, stored and evaluated as the residual lhs - rhs.
struct Equation {
    Expr lhs;
    Expr rhs;
    int differentiated_from = -1;  // source equation when produced by index reduction
    std::string origin;            // free-form provenance ("model", "d/dt", "surrogate", ...)

    Expr residual() const { return Expr::binary(Op::Sub, lhs, rhs); }
};

class EquationSystem {
public:
    const std::vector<ModelVariable>& variables() const noexcept { return vars_; }
    const std::vector<Equation>& equations() const noexcept { return eqs_; }
    const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

    const ModelVariable& variable(int id) const { return vars_.at(static_cast<std::size_t>(id)); }
    std::optional<int> find(std::string_view name) const;
    int id_of(std::string_view name) const;  // throws InvalidArgumentError when absent

    /// Unknowns of the structural problem: time derivatives of states plus
    /// algebraic variables, ordered by owning declaration.
    std::vector<int> unknowns() const;
    std::vector<int> states() const;
    std::vector<int> inputs() const;
    std::vector<int> parameters() const;

    /// Values of all variables with parameters filled from their bindings and
    /// everything else set to zero.
    std::vector<double> default_values() const;

    // Rebuild operations. Used by the parser and by analyses that return a
    // modified copy of a system.
    int add_variable(ModelVariable v);
    int ensure_derivative(int id);
    void add_equation(Equation eq) { eqs_.push_back(std::move(eq)); }
    void replace_equation(std::size_t i, Equation eq) { eqs_.at(i) = std::move(eq); }
    void remove_equations(const std::set<std::size_t>& indices);
    ModelVariable& mutable_variable(int id) { return vars_.at(static_cast<std::size_t>(id)); }
    void add_diagnostic(std::string d) { diagnostics_.push_back(std::move(d)); }

    /// Sort key placing a derivative at its variable's declaration slot.
    int declaration_key(int id) const;

private:
    std::vector<ModelVariable> vars_;
    std::vector<Equation> eqs_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> diagnostics_;
};

EquationSystem parse_model(std::string_view text);

/// Parses a standalone expression against the symbols of `sys`.
Expr parse_expression(std::string_view text, const EquationSystem& sys);

std::string to_string(const Expr& e, const EquationSystem& sys);
std::string print_model(const EquationSystem& sys);

/// Residuals lhs - rhs of every equation. `values` holds one entry per variable.
template <class S>
std::vector<S> eval_residuals(const EquationSystem& sys, std::span<const S> values);

/// Residuals with named bindings. Parameters default to their declared values;
/// every other variable referenced by an equation must be bound.
template <class S>
std::vector<S> eval_residuals(const EquationSystem& sys, const std::map<std::string, S>& bindings);

struct TimeDerivative {
    Expr expr;
    EquationSystem system;  // input system plus any derivative variables created
};

/// Symbolic d/dt. States map to their derivative, algebraics and inputs to
/// freshly registered derivative variables, parameters to zero.
TimeDerivative diff_time(const Expr& e, const EquationSystem& sys);

/// Symbolic partial derivative with respect to variable `id`.
Expr partial_derivative(const Expr& e, int id);

Expr substitute(const Expr& e, int id, const Expr& replacement);

struct Incidence {
    std::vector<int> unknowns;                  // variable ids, column order
    std::vector<std::vector<std::size_t>> rows;  // equation -> sorted unknown columns
};

Incidence incidence(const EquationSystem& sys);

// ---------------------------------------------------------------------------

template <class S>
S Expr::eval_node(const Node& n, std::span<const S> values) {
    switch (n.op) {
        case Op::Const: return S(n.value);
        case Op::Var: return values[static_cast<std::size_t>(n.var)];
        case Op::Neg: return -eval_node(*n.a, values);
        case Op::Sin: return sin(eval_node(*n.a, values));
        case Op::Cos: return cos(eval_node(*n.a, values));
        case Op::Tan: return tan(eval_node(*n.a, values));
        case Op::Exp: return exp(eval_node(*n.a, values));
        case Op::Log: return log(eval_node(*n.a, values));
        case Op::Sqrt: return sqrt(eval_node(*n.a, values));
        case Op::Tanh: return tanh(eval_node(*n.a, values));
        case Op::Add: return eval_node(*n.a, values) + eval_node(*n.b, values);
        case Op::Sub: return eval_node(*n.a, values) - eval_node(*n.b, values);
        case Op::Mul: return eval_node(*n.a, values) * eval_node(*n.b, values);
        case Op::Div: return eval_node(*n.a, values) / eval_node(*n.b, values);
        case Op::Pow: {
            if (n.b->op == Op::Const) {
                const double k = n.b->value;
                if (k == std::floor(k) && std::fabs(k) < 1e9) return pow(eval_node(*n.a, values), static_cast<int>(k));
                return pow(eval_node(*n.a, values), k);
            }
            return pow(eval_node(*n.a, values), eval_node(*n.b, values));
        }
    }
    return S(0.0);
}

template <class S>
std::vector<S> eval_residuals(const EquationSystem& sys, std::span<const S> values) {
    if (values.size() != sys.variables().size())
        throw InvalidArgumentError("eval_residuals: expected " + std::to_string(sys.variables().size()) +
                                   " values, got " + std::to_string(values.size()));
    std::vector<S> out;
    out.reserve(sys.equations().size());
    for (std::size_t i = 0; i < sys.equations().size(); ++i) {
        const auto& eq = sys.equations()[i];
        S r = eq.lhs.eval(values) - eq.rhs.eval(values);
        if (!is_finite(r)) throw NonFiniteError("non-finite residual in equation " + std::to_string(i), i);
        out.push_back(std::move(r));
    }
    return out;
}

template <class S>
std::vector<S> eval_residuals(const EquationSystem& sys, const std::map<std::string, S>& bindings) {
    std::vector<S> values(sys.variables().size(), S(0.0));
    std::vector<bool> bound(values.size(), false);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto& v = sys.variables()[i];
        if (v.kind == VarKind::Parameter && v.value) {
            values[i] = S(*v.value);
            bound[i] = true;
        }
    }
    for (const auto& [name, value] : bindings) {
        const int id = sys.id_of(name);
        values[static_cast<std::size_t>(id)] = value;
        bound[static_cast<std::size_t>(id)] = true;
    }
    std::set<int> used;
    for (const auto& eq : sys.equations()) {
        eq.lhs.collect_variables(used);
        eq.rhs.collect_variables(used);
    }
    for (int id : used)
        if (!bound[static_cast<std::size_t>(id)])
            throw MissingBindingError("no binding for variable '" + sys.variable(id).name + "'");
    return eval_residuals<S>(sys, std::span<const S>(values));
}

}  // namespace adctl
