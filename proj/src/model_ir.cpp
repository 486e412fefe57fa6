#include "adctl/model_ir.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>

namespace adctl {

const char* to_string(VarKind k) {
    switch (k) {
        case VarKind::State: return "state";
        case VarKind::Derivative: return "derivative";
        case VarKind::Algebraic: return "algebraic";
        case VarKind::Input: return "input";
        case VarKind::Parameter: return "parameter";
    }
    return "?";
}

// --- EquationSystem ---------------------------------------------------------

std::optional<int> EquationSystem::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int EquationSystem::id_of(std::string_view name) const {
    auto id = find(name);
    if (!id) throw InvalidArgumentError("unknown variable '" + std::string(name) + "'");
    return *id;
}

int EquationSystem::add_variable(ModelVariable v) {
    if (index_.count(v.name)) throw InvalidArgumentError("duplicate variable '" + v.name + "'");
    const int id = static_cast<int>(vars_.size());
    index_.emplace(v.name, id);
    vars_.push_back(std::move(v));
    return id;
}

int EquationSystem::ensure_derivative(int id) {
    auto& v = vars_.at(static_cast<std::size_t>(id));
    if (v.derivative >= 0) return v.derivative;
    ModelVariable d;
    d.name = "der(" + v.name + ")";
    d.derivative_of = id;
    // Inputs are held constant between samples, so their derivatives are known (zero).
    d.kind = v.kind == VarKind::Input ? VarKind::Input : VarKind::Derivative;
    if (d.kind == VarKind::Input) d.value = 0.0;
    const int did = add_variable(std::move(d));
    vars_[static_cast<std::size_t>(id)].derivative = did;
    return did;
}

void EquationSystem::remove_equations(const std::set<std::size_t>& indices) {
    std::vector<Equation> kept;
    for (std::size_t i = 0; i < eqs_.size(); ++i)
        if (!indices.count(i)) kept.push_back(std::move(eqs_[i]));
    eqs_ = std::move(kept);
}

int EquationSystem::declaration_key(int id) const {
    const auto& v = variable(id);
    if (v.derivative_of >= 0) return declaration_key(v.derivative_of);
    return id;
}

std::vector<int> EquationSystem::unknowns() const {
    std::vector<int> out;
    for (int id = 0; id < static_cast<int>(vars_.size()); ++id) {
        const auto& v = vars_[static_cast<std::size_t>(id)];
        const bool state_derivative =
            v.kind == VarKind::Derivative && v.derivative_of >= 0 && variable(v.derivative_of).kind == VarKind::State;
        if (state_derivative || v.kind == VarKind::Algebraic) out.push_back(id);
    }
    std::stable_sort(out.begin(), out.end(), [&](int a, int b) {
        const int ka = declaration_key(a), kb = declaration_key(b);
        if (ka != kb) return ka < kb;
        return a < b;
    });
    return out;
}

namespace {
std::vector<int> of_kind(const std::vector<ModelVariable>& vars, VarKind kind, bool skip_derivatives) {
    std::vector<int> out;
    for (int id = 0; id < static_cast<int>(vars.size()); ++id) {
        const auto& v = vars[static_cast<std::size_t>(id)];
        if (v.kind != kind) continue;
        if (skip_derivatives && v.derivative_of >= 0) continue;
        out.push_back(id);
    }
    return out;
}
}  // namespace

std::vector<int> EquationSystem::states() const { return of_kind(vars_, VarKind::State, false); }
std::vector<int> EquationSystem::inputs() const { return of_kind(vars_, VarKind::Input, true); }
std::vector<int> EquationSystem::parameters() const { return of_kind(vars_, VarKind::Parameter, false); }

std::vector<double> EquationSystem::default_values() const {
    std::vector<double> out(vars_.size(), 0.0);
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        const auto& v = vars_[i];
        if ((v.kind == VarKind::Parameter || (v.kind == VarKind::Input && v.derivative_of >= 0)) && v.value)
            out[i] = *v.value;
    }
    return out;
}

// --- Lexer / parser ---------------------------------------------------------

namespace {

enum class Tok { Ident, Number, Symbol, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    double number = 0.0;
    int line = 1;
    int column = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        skip_space();
        tok_ = Token{};
        tok_.line = line_;
        tok_.column = col_;
        if (pos_ >= src_.size()) {
            tok_.kind = Tok::End;
            return;
        }
        const char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                bump();
            tok_.kind = Tok::Ident;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            std::size_t start = pos_;
            while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
                bump();
            if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                std::size_t save = pos_;
                int sl = line_, sc = col_;
                bump();
                if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) bump();
                if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
                } else {
                    pos_ = save;
                    line_ = sl;
                    col_ = sc;
                }
            }
            tok_.kind = Tok::Number;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            const char* first = tok_.text.data();
            const char* last = first + tok_.text.size();
            auto [ptr, ec] = std::from_chars(first, last, tok_.number);
            if (ec != std::errc() || ptr != last)
                throw ParseError("malformed number '" + tok_.text + "'", tok_.line, tok_.column);
            return;
        }
        tok_.kind = Tok::Symbol;
        tok_.text = std::string(1, c);
        bump();
    }

    void bump() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                bump();
            } else if (c == '#' || (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/')) {
                while (pos_ < src_.size() && src_[pos_] != '\n') bump();
            } else {
                break;
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
    Token tok_;
};

std::optional<Op> function_op(const std::string& name) {
    static const std::pair<const char*, Op> fns[] = {{"sin", Op::Sin}, {"cos", Op::Cos},   {"tan", Op::Tan},
                                                     {"exp", Op::Exp}, {"log", Op::Log},   {"sqrt", Op::Sqrt},
                                                     {"tanh", Op::Tanh}};
    for (const auto& [n, op] : fns)
        if (name == n) return op;
    return std::nullopt;
}

bool is_keyword(const std::string& s) {
    return s == "parameter" || s == "state" || s == "input" || s == "algebraic" || s == "equation" || s == "der" ||
           function_op(s).has_value();
}

class Parser {
public:
    Parser(std::string_view text, EquationSystem& sys, bool allow_declarations)
        : lex_(text), sys_(sys), allow_decl_(allow_declarations) {}

    void parse_model() {
        while (lex_.peek().kind != Tok::End) statement();
    }

    Expr parse_standalone() {
        Expr e = expression();
        if (lex_.peek().kind != Tok::End) fail("unexpected trailing input '" + lex_.peek().text + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, lex_.peek().line, lex_.peek().column);
    }

    bool at_symbol(char c) const { return lex_.peek().kind == Tok::Symbol && lex_.peek().text[0] == c; }

    void expect_symbol(char c) {
        if (!at_symbol(c)) {
            const auto& t = lex_.peek();
            fail(std::string("expected '") + c + "' but found " + (t.kind == Tok::End ? "end of input" : "'" + t.text + "'"));
        }
        lex_.take();
    }

    Token expect_ident() {
        if (lex_.peek().kind != Tok::Ident) fail("expected identifier");
        return lex_.take();
    }

    double signed_number() {
        double sign = 1.0;
        if (at_symbol('-')) {
            lex_.take();
            sign = -1.0;
        } else if (at_symbol('+')) {
            lex_.take();
        }
        if (lex_.peek().kind != Tok::Number) fail("expected number");
        return sign * lex_.take().number;
    }

    void declare(const Token& name, VarKind kind, std::optional<double> value) {
        if (is_keyword(name.text))
            throw ParseError("reserved word '" + name.text + "' used as a name", name.line, name.column);
        if (sys_.find(name.text))
            throw DuplicateDeclarationError("duplicate declaration of '" + name.text + "'", name.line, name.column);
        ModelVariable v;
        v.name = name.text;
        v.kind = kind;
        v.value = value;
        sys_.add_variable(std::move(v));
    }

    void statement() {
        const Token kw = expect_ident();
        if (kw.text == "parameter") {
            const Token name = expect_ident();
            expect_symbol('=');
            declare(name, VarKind::Parameter, signed_number());
        } else if (kw.text == "state") {
            const Token name = expect_ident();
            std::optional<double> init;
            if (at_symbol('=')) {
                lex_.take();
                init = signed_number();
            }
            declare(name, VarKind::State, init);
        } else if (kw.text == "input") {
            declare(expect_ident(), VarKind::Input, std::nullopt);
        } else if (kw.text == "algebraic") {
            declare(expect_ident(), VarKind::Algebraic, std::nullopt);
        } else if (kw.text == "equation") {
            Equation eq;
            eq.lhs = expression();
            expect_symbol('=');
            eq.rhs = expression();
            eq.origin = "model";
            sys_.add_equation(std::move(eq));
        } else {
            throw ParseError("unknown statement '" + kw.text + "'", kw.line, kw.column);
        }
        expect_symbol(';');
    }

    Expr expression() {
        Expr e = term();
        while (at_symbol('+') || at_symbol('-')) {
            const char op = lex_.take().text[0];
            Expr r = term();
            e = Expr::binary(op == '+' ? Op::Add : Op::Sub, e, r);
        }
        return e;
    }

    Expr term() {
        Expr e = unary();
        while (at_symbol('*') || at_symbol('/')) {
            const char op = lex_.take().text[0];
            Expr r = unary();
            e = Expr::binary(op == '*' ? Op::Mul : Op::Div, e, r);
        }
        return e;
    }

    Expr unary() {
        if (at_symbol('-')) {
            lex_.take();
            // A negated literal not raised to a power is a negative constant.
            if (lex_.peek().kind == Tok::Number) {
                const double v = lex_.take().number;
                if (!at_symbol('^')) return Expr::constant(-v);
                lex_.take();
                Expr exponent = unary();
                return Expr::unary(Op::Neg, Expr::binary(Op::Pow, Expr::constant(v), exponent));
            }
            return Expr::unary(Op::Neg, unary());
        }
        if (at_symbol('+')) {
            lex_.take();
            return unary();
        }
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (at_symbol('^')) {
            lex_.take();
            Expr exponent = unary();
            return Expr::binary(Op::Pow, base, exponent);
        }
        return base;
    }

    Expr primary() {
        const Token& t = lex_.peek();
        if (t.kind == Tok::Number) return Expr::constant(lex_.take().number);
        if (at_symbol('(')) {
            lex_.take();
            Expr e = expression();
            expect_symbol(')');
            return e;
        }
        if (t.kind != Tok::Ident) {
            if (t.kind == Tok::End) fail("unexpected end of input");
            fail("unexpected '" + t.text + "'");
        }
        const Token id = lex_.take();
        if (id.text == "der") {
            expect_symbol('(');
            const Token target = expect_ident();
            expect_symbol(')');
            auto var = sys_.find(target.text);
            if (!var) throw UndeclaredIdentifierError(target.text, target.line, target.column);
            const auto kind = sys_.variable(*var).kind;
            if (kind != VarKind::State)
                throw ParseError("der() applied to non-state '" + target.text + "'", target.line, target.column);
            if (!allow_decl_ && sys_.variable(*var).derivative < 0)
                throw ParseError("der(" + target.text + ") does not exist in this model", target.line,
                                 target.column);
            return Expr::variable(sys_.ensure_derivative(*var));
        }
        if (auto fn = function_op(id.text)) {
            expect_symbol('(');
            Expr arg = expression();
            expect_symbol(')');
            return Expr::unary(*fn, arg);
        }
        auto var = sys_.find(id.text);
        if (!var) throw UndeclaredIdentifierError(id.text, id.line, id.column);
        return Expr::variable(*var);
    }

    Lexer lex_;
    EquationSystem& sys_;
    bool allow_decl_;
};

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s(buf);
    // keep it a number token on re-parse
    if (s == "inf" || s == "-inf" || s == "nan") return "(" + s + ")";
    return s;
}

int precedence(const Expr& e) {
    switch (e.op()) {
        case Op::Add:
        case Op::Sub: return 1;
        case Op::Mul:
        case Op::Div: return 2;
        case Op::Neg: return 3;
        case Op::Pow: return 4;
        case Op::Const: return e.constant_value() < 0.0 ? 3 : 5;
        default: return 5;
    }
}

void print_expr(std::ostream& os, const Expr& e, const EquationSystem& sys);

void print_child(std::ostream& os, const Expr& child, bool parens, const EquationSystem& sys) {
    if (parens) os << '(';
    print_expr(os, child, sys);
    if (parens) os << ')';
}

void print_expr(std::ostream& os, const Expr& e, const EquationSystem& sys) {
    switch (e.op()) {
        case Op::Const: os << format_number(e.constant_value()); return;
        case Op::Var: os << sys.variable(e.variable_id()).name; return;
        case Op::Neg: {
            os << '-';
            const Expr a = e.first();
            // "-3" would re-parse as a constant, "-x^2" binds as -(x^2)
            const bool parens = precedence(a) < 3 || a.op() == Op::Const || a.op() == Op::Neg;
            print_child(os, a, parens, sys);
            return;
        }
        default: break;
    }
    if (is_unary(e.op())) {
        os << function_name(e.op()) << '(';
        print_expr(os, e.first(), sys);
        os << ')';
        return;
    }
    const int p = precedence(e);
    const Expr a = e.first();
    const Expr b = e.second();
    const char* sym = e.op() == Op::Add ? " + " : e.op() == Op::Sub ? " - " : e.op() == Op::Mul ? "*" : e.op() == Op::Div ? "/" : "^";
    if (e.op() == Op::Pow) {
        // right associative: parenthesize a left operand of equal or lower precedence
        print_child(os, a, precedence(a) <= p, sys);
        os << sym;
        print_child(os, b, precedence(b) < p && !(b.op() == Op::Neg), sys);
        return;
    }
    print_child(os, a, precedence(a) < p, sys);
    os << sym;
    print_child(os, b, precedence(b) <= p, sys);
}

}  // namespace

EquationSystem parse_model(std::string_view text) {
    EquationSystem sys;
    Parser(text, sys, true).parse_model();
    const auto n_unknowns = sys.unknowns().size();
    if (n_unknowns != sys.equations().size()) {
        sys.add_diagnostic("system is not square: " + std::to_string(sys.equations().size()) + " equations, " +
                           std::to_string(n_unknowns) + " unknowns");
    }
    return sys;
}

Expr parse_expression(std::string_view text, const EquationSystem& sys) {
    EquationSystem copy = sys;
    return Parser(text, copy, false).parse_standalone();
}

std::string to_string(const Expr& e, const EquationSystem& sys) {
    std::ostringstream os;
    print_expr(os, e, sys);
    return os.str();
}

std::string print_model(const EquationSystem& sys) {
    std::ostringstream os;
    for (const auto& v : sys.variables()) {
        if (v.derivative_of >= 0) continue;
        switch (v.kind) {
            case VarKind::Parameter: os << "parameter " << v.name << " = " << format_number(v.value.value_or(0.0)); break;
            case VarKind::State:
                os << "state " << v.name;
                if (v.value) os << " = " << format_number(*v.value);
                break;
            case VarKind::Input: os << "input " << v.name; break;
            case VarKind::Algebraic: os << "algebraic " << v.name; break;
            case VarKind::Derivative: continue;
        }
        os << ";\n";
    }
    for (const auto& eq : sys.equations()) {
        os << "equation " << to_string(eq.lhs, sys) << " = " << to_string(eq.rhs, sys) << ";\n";
    }
    return os.str();
}

// --- diff_time / incidence --------------------------------------------------

namespace {

Expr diff_time_impl(const Expr& e, EquationSystem& sys) {
    switch (e.op()) {
        case Op::Const: return Expr::constant(0.0);
        case Op::Var: {
            const int id = e.variable_id();
            if (sys.variable(id).kind == VarKind::Parameter) return Expr::constant(0.0);
            return Expr::variable(sys.ensure_derivative(id));
        }
        default: break;
    }
    const Expr a = e.first();
    const Expr da = diff_time_impl(a, sys);
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
    const Expr db = diff_time_impl(b, sys);
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
            return pow(a, b) * (db * apply(Op::Log, a) + b * da / a);
        }
        default: break;
    }
    return Expr::constant(0.0);
}

}  // namespace

TimeDerivative diff_time(const Expr& e, const EquationSystem& sys) {
    TimeDerivative out{Expr(), sys};
    out.expr = diff_time_impl(e, out.system);
    return out;
}

Incidence incidence(const EquationSystem& sys) {
    Incidence inc;
    inc.unknowns = sys.unknowns();
    std::unordered_map<int, std::size_t> column;
    for (std::size_t c = 0; c < inc.unknowns.size(); ++c) column.emplace(inc.unknowns[c], c);
    inc.rows.reserve(sys.equations().size());
    for (const auto& eq : sys.equations()) {
        std::set<int> vars;
        eq.lhs.collect_variables(vars);
        eq.rhs.collect_variables(vars);
        std::vector<std::size_t> row;
        for (int v : vars) {
            auto it = column.find(v);
            if (it != column.end()) row.push_back(it->second);
        }
        std::sort(row.begin(), row.end());
        inc.rows.push_back(std::move(row));
    }
    return inc;
}

}  // namespace adctl
