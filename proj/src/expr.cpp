#include <cmath>

#include "adctl/model_ir.hpp"

namespace adctl {

bool is_unary(Op op) {
    switch (op) {
        case Op::Neg:
        case Op::Sin:
        case Op::Cos:
        case Op::Tan:
        case Op::Exp:
        case Op::Log:
        case Op::Sqrt:
        case Op::Tanh: return true;
        default: return false;
    }
}

bool is_binary(Op op) {
    switch (op) {
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
        case Op::Pow: return true;
        default: return false;
    }
}

const char* function_name(Op op) {
    switch (op) {
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Tan: return "tan";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sqrt: return "sqrt";
        case Op::Tanh: return "tanh";
        default: return "";
    }
}

namespace {
const std::shared_ptr<const Expr::Node>& zero_node() {
    static const auto z = std::make_shared<const Expr::Node>();
    return z;
}
}  // namespace

Expr::Expr() : node_(zero_node()) {}

Expr Expr::constant(double v) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = v;
    return Expr(std::move(n));
}

Expr Expr::variable(int id) {
    auto n = std::make_shared<Node>();
    n->op = Op::Var;
    n->var = id;
    return Expr(std::move(n));
}

Expr Expr::unary(Op op, Expr a) {
    if (!is_unary(op)) throw InvalidArgumentError("Expr::unary: not a unary operator");
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a.node_);
    return Expr(std::move(n));
}

Expr Expr::binary(Op op, Expr a, Expr b) {
    if (!is_binary(op)) throw InvalidArgumentError("Expr::binary: not a binary operator");
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a.node_);
    n->b = std::move(b.node_);
    return Expr(std::move(n));
}

Op Expr::op() const { return node_->op; }
double Expr::constant_value() const { return node_->value; }
int Expr::variable_id() const { return node_->var; }
Expr Expr::first() const { return Expr(node_->a); }
Expr Expr::second() const { return Expr(node_->b); }

bool Expr::references(int id) const {
    const Node& n = *node_;
    if (n.op == Op::Var) return n.var == id;
    if (n.a && Expr(n.a).references(id)) return true;
    return n.b && Expr(n.b).references(id);
}

void Expr::collect_variables(std::set<int>& out) const {
    const Node& n = *node_;
    if (n.op == Op::Var) {
        out.insert(n.var);
        return;
    }
    if (n.a) Expr(n.a).collect_variables(out);
    if (n.b) Expr(n.b).collect_variables(out);
}

bool Expr::structurally_equal(const Expr& other) const {
    const Node& x = *node_;
    const Node& y = *other.node_;
    if (x.op != y.op) return false;
    if (x.op == Op::Const) return x.value == y.value || (std::isnan(x.value) && std::isnan(y.value));
    if (x.op == Op::Var) return x.var == y.var;
    if (!Expr(x.a).structurally_equal(Expr(y.a))) return false;
    if (is_binary(x.op)) return Expr(x.b).structurally_equal(Expr(y.b));
    return true;
}

Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(a.constant_value() + b.constant_value());
    if (a.is_constant(0.0)) return b;
    if (b.is_constant(0.0)) return a;
    return Expr::binary(Op::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(a.constant_value() - b.constant_value());
    if (b.is_constant(0.0)) return a;
    if (a.is_constant(0.0)) return -b;
    return Expr::binary(Op::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(a.constant_value() * b.constant_value());
    if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0);
    if (a.is_constant(1.0)) return b;
    if (b.is_constant(1.0)) return a;
    return Expr::binary(Op::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant() && b.constant_value() != 0.0)
        return Expr::constant(a.constant_value() / b.constant_value());
    if (a.is_constant(0.0) && !b.is_constant(0.0)) return Expr::constant(0.0);
    if (b.is_constant(1.0)) return a;
    return Expr::binary(Op::Div, a, b);
}

Expr operator-(const Expr& a) {
    if (a.is_constant()) return Expr::constant(-a.constant_value());
    if (a.op() == Op::Neg) return a.first();
    return Expr::unary(Op::Neg, a);
}

Expr pow(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(std::pow(a.constant_value(), b.constant_value()));
    if (b.is_constant(0.0)) return Expr::constant(1.0);
    if (b.is_constant(1.0)) return a;
    return Expr::binary(Op::Pow, a, b);
}

Expr apply(Op fn, const Expr& a) {
    if (a.is_constant()) {
        const double v = a.constant_value();
        return Expr::constant(Expr::unary(fn, a).eval<double>(std::span<const double>(&v, 0)));
    }
    return Expr::unary(fn, a);
}

Expr partial_derivative(const Expr& e, int id) {
    const Expr zero = Expr::constant(0.0);
    switch (e.op()) {
        case Op::Const: return zero;
        case Op::Var: return Expr::constant(e.variable_id() == id ? 1.0 : 0.0);
        default: break;
    }
    const Expr a = e.first();
    const Expr da = partial_derivative(a, id);
    switch (e.op()) {
        case Op::Neg: return -da;
        case Op::Sin: return apply(Op::Cos, a) * da;
        case Op::Cos: return -(apply(Op::Sin, a) * da);
        case Op::Tan: {
            const Expr t = apply(Op::Tan, a);
            return (Expr::constant(1.0) + t * t) * da;
        }
        case Op::Exp: return apply(Op::Exp, a) * da;
        case Op::Log: return da / a;
        case Op::Sqrt: return da / (Expr::constant(2.0) * apply(Op::Sqrt, a));
        case Op::Tanh: {
            const Expr t = apply(Op::Tanh, a);
            return (Expr::constant(1.0) - t * t) * da;
        }
        default: break;
    }
    const Expr b = e.second();
    const Expr db = partial_derivative(b, id);
    switch (e.op()) {
        case Op::Add: return da + db;
        case Op::Sub: return da - db;
        case Op::Mul: return da * b + a * db;
        case Op::Div: return da / b - a * db / (b * b);
        case Op::Pow: {
            if (b.is_constant()) {
                const double k = b.constant_value();
                return Expr::constant(k) * pow(a, Expr::constant(k - 1.0)) * da;
            }
            // d(a^b) = a^b (db ln a + b da / a)
            return pow(a, b) * (db * apply(Op::Log, a) + b * da / a);
        }
        default: break;
    }
    return zero;
}

Expr substitute(const Expr& e, int id, const Expr& replacement) {
    switch (e.op()) {
        case Op::Const: return e;
        case Op::Var: return e.variable_id() == id ? replacement : e;
        default: break;
    }
    if (is_unary(e.op())) return Expr::unary(e.op(), substitute(e.first(), id, replacement));
    return Expr::binary(e.op(), substitute(e.first(), id, replacement), substitute(e.second(), id, replacement));
}

}  // namespace adctl
