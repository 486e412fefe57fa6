#include <doctest.h>

#include <random>

#include "adctl/model_ir.hpp"
#include "test_helpers.hpp"

using namespace adctl;
using testing_support::load_model;

namespace {

std::size_t count_kind(const EquationSystem& sys, VarKind k) {
    std::size_t n = 0;
    for (const auto& v : sys.variables())
        if (v.kind == k) ++n;
    return n;
}

}  // namespace

TEST_CASE("parse a one-state model") {
    const auto sys = parse_model("state x; equation der(x) = -x;");
    CHECK(sys.states().size() == 1);
    CHECK(sys.equations().size() == 1);
    CHECK(sys.diagnostics().empty());
    const int d = sys.id_of("der(x)");
    CHECK(sys.variable(d).kind == VarKind::Derivative);
    CHECK(sys.variable(d).derivative_of == sys.id_of("x"));
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_model("state x; equation der(y) = 1;"), UndeclaredIdentifierError);
    CHECK_THROWS_AS(parse_model("state x; state x; equation der(x) = 1;"), DuplicateDeclarationError);
    CHECK_THROWS_AS(parse_model("algebraic z; equation der(z) = 1;"), ParseError);
    try {
        parse_model("state x;\nequation der(x) = (x + ;");
        FAIL("expected a syntax error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.column() > 1);
    }
    // non-square systems parse, with a diagnostic
    const auto sys = parse_model("state x; algebraic y; equation der(x) = y;");
    CHECK_FALSE(sys.diagnostics().empty());
}

TEST_CASE("shipped reactor model") {
    const auto sys = load_model("reactor.mdl");
    CHECK(sys.states().size() == 4);
    CHECK(count_kind(sys, VarKind::Algebraic) == 2);
    CHECK(sys.equations().size() == 6);
    CHECK(sys.inputs().size() == 2);
    CHECK(sys.parameters().size() == 3);
}

TEST_CASE("shipped pendulum model") {
    const auto sys = load_model("pendulum.mdl");
    CHECK(sys.states().size() == 4);
    CHECK(sys.equations().size() == 4);
    CHECK(sys.inputs().size() == 1);
}

TEST_CASE("eval_residuals") {
    const auto reactor = load_model("reactor.mdl");
    std::map<std::string, double> b{{"V", 50},  {"C_A", 22}, {"C_B", 11}, {"C_C", 17}, {"F_i", 9.7},
                                    {"F", 9.7}, {"R_A", 0},  {"R_B", 0},  {"der(V)", 0}, {"der(C_A)", 0},
                                    {"der(C_B)", 0}, {"der(C_C)", 0}};
    const auto r = eval_residuals(reactor, b);
    CHECK(r[4] == 0.0);  // C_A - C_B/K_eq

    const auto sys = parse_model("state x; equation der(x) = -x;");
    CHECK(eval_residuals<double>(sys, {{"x", 2.0}, {"der(x)", -2.0}})[0] == 0.0);
    CHECK(eval_residuals<double>(sys, {{"x", 2.0}, {"der(x)", 0.0}})[0] == 2.0);
    CHECK_THROWS_AS(eval_residuals<double>(sys, {{"x", 2.0}}), MissingBindingError);
    CHECK_THROWS_AS(eval_residuals<double>(parse_model("state x; equation der(x) = log(x);"),
                                           {{"x", -1.0}, {"der(x)", 0.0}}),
                    NonFiniteError);
}

TEST_CASE("zero-seeded dual residuals equal real residuals") {
    const auto sys = load_model("pendulum.mdl");
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> U(-3, 3);
    for (int k = 0; k < 20; ++k) {
        auto vals = sys.default_values();
        for (auto& v : vals)
            if (v == 0.0) v = U(rng);
        std::vector<Dual> dv;
        for (double v : vals) dv.emplace_back(v, std::vector<double>(3, 0.0));
        const auto r = eval_residuals<double>(sys, std::span<const double>(vals));
        const auto rd = eval_residuals<Dual>(sys, std::span<const Dual>(dv));
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(rd[i].value() == r[i]);
    }
}

TEST_CASE("diff_time") {
    auto sys = load_model("reactor.mdl");
    const Expr constraint = sys.equations()[4].rhs;  // C_A - C_B/K_eq
    const auto d = diff_time(constraint, sys);
    CHECK(to_string(d.expr, d.system) == "der(C_A) - der(C_B)/K_eq");

    CHECK(diff_time(Expr::constant(4.0), sys).expr.is_constant(0.0));

    const auto two = parse_model("state x; state y; equation der(x) = 1; equation der(y) = x*y;");
    const Expr xy = two.equations()[1].rhs;
    CHECK(to_string(diff_time(xy, two).expr, two) == "der(x)*y + x*der(y)");

    // algebraics and inputs get fresh derivative variables
    const auto alg = parse_model("state x; algebraic z; input u; equation der(x) = z; equation z = u*x;");
    const auto dz = diff_time(alg.equations()[1].lhs, alg);
    CHECK(dz.system.find("der(z)").has_value());
    CHECK_FALSE(alg.find("der(z)").has_value());
    const auto du = diff_time(alg.equations()[1].rhs, alg);
    CHECK(du.system.variable(du.system.id_of("der(u)")).kind == VarKind::Input);
}

TEST_CASE("diff_time is linear") {
    const auto sys = parse_model(
        "parameter a = 2; state x; state y; equation der(x) = sin(x)*y; equation der(y) = exp(y) - x^3;");
    const Expr e1 = sys.equations()[0].rhs;
    const Expr e2 = sys.equations()[1].rhs;
    const double a = 1.3, b = -0.7;
    const Expr combo = Expr::constant(a) * e1 + Expr::constant(b) * e2;
    const auto dc = diff_time(combo, sys);
    const auto d1 = diff_time(e1, dc.system);
    const auto d2 = diff_time(e2, d1.system);
    const EquationSystem& s = d2.system;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int k = 0; k < 50; ++k) {
        auto vals = s.default_values();
        for (std::size_t i = 0; i < vals.size(); ++i)
            if (s.variables()[i].kind != VarKind::Parameter) vals[i] = U(rng);
        const std::span<const double> v(vals);
        CHECK(std::abs(dc.expr.eval(v) - (a * d1.expr.eval(v) + b * d2.expr.eval(v))) <= 1e-10);
    }
}

TEST_CASE("incidence") {
    const auto one = parse_model("state x; equation der(x) = -x;");
    const auto inc1 = incidence(one);
    REQUIRE(inc1.rows.size() == 1);
    REQUIRE(inc1.rows[0].size() == 1);
    CHECK(inc1.unknowns[inc1.rows[0][0]] == one.id_of("der(x)"));

    const auto sys = load_model("reactor.mdl");
    const auto inc = incidence(sys);
    CHECK(inc.rows[4].empty());  // the C_A constraint touches no unknown
    REQUIRE(inc.rows[5].size() == 1);
    CHECK(inc.unknowns[inc.rows[5][0]] == sys.id_of("R_B"));
}

TEST_CASE("print/parse round trip") {
    for (const char* name : {"reactor.mdl", "pendulum.mdl"}) {
        const auto sys = load_model(name);
        const auto again = parse_model(print_model(sys));
        REQUIRE(again.equations().size() == sys.equations().size());
        REQUIRE(again.variables().size() == sys.variables().size());
        for (std::size_t i = 0; i < sys.equations().size(); ++i) {
            CHECK(again.equations()[i].lhs.structurally_equal(sys.equations()[i].lhs));
            CHECK(again.equations()[i].rhs.structurally_equal(sys.equations()[i].rhs));
        }
        for (std::size_t i = 0; i < sys.variables().size(); ++i) {
            CHECK(again.variables()[i].name == sys.variables()[i].name);
            CHECK(again.variables()[i].value == sys.variables()[i].value);
        }
    }
    const auto tricky = parse_model("state x; equation der(x) = -x^2 - (x - (1 - x)) / (2 / x) + 2^-1*-x;");
    const auto re = parse_model(print_model(tricky));
    CHECK(re.equations()[0].rhs.structurally_equal(tricky.equations()[0].rhs));
}

TEST_CASE("parse_expression") {
    const auto sys = load_model("reactor.mdl");
    const Expr e = parse_expression("F_i/V", sys);
    auto vals = sys.default_values();
    vals[static_cast<std::size_t>(sys.id_of("F_i"))] = 10.0;
    vals[static_cast<std::size_t>(sys.id_of("V"))] = 40.0;
    CHECK(e.eval<double>(vals) == 0.25);
    CHECK_THROWS_AS(parse_expression("Q + 1", sys), UndeclaredIdentifierError);
}
