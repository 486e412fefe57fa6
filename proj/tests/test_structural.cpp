#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "adctl/structural.hpp"
#include "test_helpers.hpp"

using namespace adctl;
using testing_support::load_model;

namespace {

std::set<std::string> names(const EquationSystem& sys, const std::vector<int>& ids) {
    std::set<std::string> out;
    for (int id : ids) out.insert(sys.variable(id).name);
    return out;
}

const Block& block_with(const CausalModel& m, const std::string& unknown) {
    const int id = m.system.id_of(unknown);
    for (const auto& b : m.blt.blocks)
        if (std::find(b.unknowns.begin(), b.unknowns.end(), id) != b.unknowns.end()) return b;
    throw std::runtime_error("no block solves " + unknown);
}

/// Every unknown read by a block is solved earlier or is known.
void check_topological(const CausalModel& m) {
    std::set<int> known;
    for (const auto& v : m.system.variables())
        if (v.kind == VarKind::State || v.kind == VarKind::Input || v.kind == VarKind::Parameter)
            known.insert(static_cast<int>(&v - m.system.variables().data()));
    for (const auto& b : m.blt.blocks) {
        CHECK(b.equations.size() == b.unknowns.size());
        std::set<int> used;
        for (auto e : b.equations) {
            m.system.equations()[e].lhs.collect_variables(used);
            m.system.equations()[e].rhs.collect_variables(used);
        }
        for (int u : b.unknowns) known.insert(u);
        for (int v : used) CHECK_MESSAGE(known.count(v) == 1, m.system.variable(v).name);
    }
}

}  // namespace

TEST_CASE("matching on simple systems") {
    const auto sys = parse_model("state x; equation der(x) = -x;");
    const auto m = maximum_matching(incidence(sys));
    CHECK(m.complete());
    CHECK(m.size() == 1);

    const auto reactor = load_model("reactor.mdl");
    const auto mr = maximum_matching(incidence(reactor));
    CHECK_FALSE(mr.complete());
    CHECK(mr.unmatched_equations() == std::vector<std::size_t>{4});
}

TEST_CASE("matching is injective") {
    const auto sys = load_model("pendulum.mdl");
    const auto m = maximum_matching(incidence(sys));
    REQUIRE(m.complete());
    std::set<std::size_t> cols;
    for (const auto& c : m.equation_to_unknown) cols.insert(*c);
    CHECK(cols.size() == m.size());
}

TEST_CASE("reactor index reduction") {
    const auto reactor = load_model("reactor.mdl");
    const auto r = index_reduce(reactor);
    REQUIRE(r.dummies.size() == 1);
    CHECK(r.system.variable(r.dummies[0].variable).name == "der(C_A)");
    CHECK(r.system.variable(r.dummies[0].state).name == "C_A");
    CHECK(r.system.variable(r.dummies[0].variable).dummy);
    CHECK(r.system.equations().size() == 7);
    CHECK(incidence(r.system).unknowns.size() == 7);
    CHECK(maximum_matching(incidence(r.system)).complete());
    const auto& added = r.system.equations().back();
    CHECK(added.differentiated_from == 4);
    CHECK(to_string(added.rhs, r.system) == "der(C_A) - der(C_B)/K_eq");
    CHECK(names(r.system, r.system.states()) == std::set<std::string>{"V", "C_B", "C_C"});
}

TEST_CASE("structurally singular systems are rejected") {
    // y appears nowhere it can be solved and differentiating does not help
    const auto sys = parse_model("state x; algebraic y; equation der(x) = 1; equation 0 = x;");
    CHECK_THROWS_AS(index_reduce(sys), StructuralSingularityError);
    const auto over = parse_model("parameter a = 1; state x; equation der(x) = 1; equation 0 = a;");
    CHECK_THROWS_AS(index_reduce(over), StructuralSingularityError);
}

TEST_CASE("index reduction on random small DAEs") {
    // chains of ODEs with one algebraic coupling constraint between two states
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 4);
        std::string text = "input u;\n";
        for (int i = 0; i < n; ++i) text += "state x" + std::to_string(i) + ";\n";
        text += "algebraic z;\n";
        for (int i = 0; i < n; ++i) {
            const int j = (i + 1 + static_cast<int>(rng() % static_cast<unsigned>(n - 1))) % n;
            text += "equation der(x" + std::to_string(i) + ") = -x" + std::to_string(i) + " + 0.5*x" +
                    std::to_string(j) + (i == 0 ? " + z" : "") + (i == n - 1 ? " + u" : "") + ";\n";
        }
        // the constraint involves x0, whose equation carries z, so z is fixed by differentiation
        const int a = 0;
        const int b = 1 + static_cast<int>(rng() % static_cast<unsigned>(n - 1));
        text += "equation 0 = x" + std::to_string(a) + " - 2*x" + std::to_string(b) + ";\n";
        const auto sys = parse_model(text);
        const auto red = index_reduce(sys);
        CHECK(maximum_matching(incidence(red.system)).complete());
        CHECK(red.dummies.size() == 1);
        const auto cm = causalize(sys);
        check_topological(cm);
    }
}

TEST_CASE("reactor BLT") {
    const auto cm = causalize(load_model("reactor.mdl"));
    check_topological(cm);
    std::size_t three = 0, ones = 0;
    for (const auto& b : cm.blt.blocks) {
        if (b.size() == 3) {
            ++three;
            CHECK(names(cm.system, b.unknowns) == std::set<std::string>{"der(C_A)", "der(C_B)", "R_A"});
            CHECK(b.tag == SolverTag::Newton);
        } else {
            CHECK(b.size() == 1);
            ++ones;
        }
    }
    CHECK(three == 1);
    CHECK(ones == 4);
    CHECK(block_with(cm, "R_B").size() == 1);
    CHECK(block_with(cm, "der(V)").tag == SolverTag::ExplicitAssignment);
    CHECK(block_with(cm, "der(C_C)").size() == 1);
    CHECK(block_with(cm, "C_A").tag == SolverTag::LinearSymbolic);
    CHECK(cm.blt.newton_blocks() == 1);
    const std::string listing = format_blt(cm);
    CHECK(listing.find("size 3") != std::string::npos);
    CHECK(listing.find("size 3") == listing.rfind("size 3"));
}

TEST_CASE("pendulum BLT has only 1x1 blocks") {
    const auto cm = causalize(load_model("pendulum.mdl"));
    CHECK(cm.dummies.empty());
    for (const auto& b : cm.blt.blocks) CHECK(b.size() == 1);
    CHECK(cm.blt.newton_blocks() == 0);
    check_topological(cm);
}

TEST_CASE("solve the reactor 3x3 block") {
    const auto cm = causalize(load_model("reactor.mdl"));
    const Block& blk = block_with(cm, "R_A");
    auto vals = cm.system.default_values();
    auto set = [&](const char* n, double v) { vals[static_cast<std::size_t>(cm.system.id_of(n))] = v; };
    set("F_i", 9.705);
    set("F", 9.705);
    set("V", 50);
    set("C_A", 22);
    set("C_B", 11);
    set("R_B", 3.3);
    const auto rep = solve_block(cm.system, blk, vals);
    CHECK(rep.iterations == 1);  // linear block
    CHECK(rep.residual <= 1e-12);
    auto get = [&](const char* n) { return vals[static_cast<std::size_t>(cm.system.id_of(n))]; };
    for (auto e : blk.equations) {
        const auto& eq = cm.system.equations()[e];
        CHECK(std::abs(eq.lhs.eval<double>(vals) - eq.rhs.eval<double>(vals)) <= 1e-12);
    }
    CHECK(std::abs(get("der(C_A)")) < 1e-3);
    CHECK(std::abs(get("der(C_B)")) < 1e-3);
    CHECK(get("R_A") == doctest::Approx(5.434).epsilon(1e-3));

    // Duals cannot pass through a Newton block
    std::vector<Dual> dv(vals.begin(), vals.end());
    CHECK_THROWS_AS(solve_block(cm.system, blk, std::span<Dual>(dv)), NotDifferentiableError);
}

TEST_CASE("reactor causal field is zero at steady state") {
    const auto cm = causalize(load_model("reactor.mdl"));
    const double f = 3.3 / 17.0 * 50.0;
    std::vector<double> x{50, 11, 17};
    std::vector<double> u{f, f};
    REQUIRE(cm.state_names() == std::vector<std::string>{"V", "C_B", "C_C"});
    const auto field = causal_field(cm);
    CHECK_FALSE(field.differentiable());
    std::vector<double> z = x;
    z.insert(z.end(), u.begin(), u.end());
    for (double d : field(std::span<const double>(z))) CHECK(std::abs(d) <= 1e-9);
}

TEST_CASE("pendulum causal field") {
    const auto cm = causalize(load_model("pendulum.mdl"));
    const auto field = causal_field(cm);
    REQUIRE(field.differentiable());
    const std::vector<double> z{0, 0, 0, 0, 1};
    const auto d = field(std::span<const double>(z));
    // cart acceleration from a unit push with the pendulum hanging
    CHECK(d[1] == doctest::Approx(1.818).epsilon(1e-3));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-3, 3);
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> p{U(rng), U(rng), U(rng), U(rng), U(rng)};
        CHECK(check_fd(field, p, {}, 1e-6) <= 1e-5);
    }
}

TEST_CASE("Newton failures") {
    SUBCASE("no real root") {
        const auto sys = parse_model("state x; algebraic y; equation der(x) = y; equation y^2 + 1 = 0;");
        const auto cm = causalize(sys);
        const std::vector<double> x{0.0};
        CHECK_THROWS_AS(cm.sweep(x, {}), ConvergenceError);
    }
    SUBCASE("singular everywhere") {
        const auto sys = parse_model(
            "state x; algebraic y; algebraic w; equation der(x) = y; equation y + w = 1; equation (y + w)^2 = 1;");
        const auto cm = causalize(sys);
        const std::vector<double> x{0.0};
        CHECK_THROWS_AS(cm.sweep(x, {}), SingularBlockError);
    }
    SUBCASE("nonlinear scalar block converges") {
        const auto sys = parse_model("state x; algebraic y; equation der(x) = y; equation y^3 + y = x;");
        const auto cm = causalize(sys);
        const std::vector<double> x{10.0};
        const auto vals = cm.sweep(x, {});
        CHECK(vals[static_cast<std::size_t>(cm.system.id_of("y"))] == doctest::Approx(2.0));
    }
}

TEST_CASE("structural edge cases") {
    SUBCASE("empty system") {
        const auto sys = parse_model("parameter a = 1;");
        const auto m = maximum_matching(incidence(sys));
        CHECK(m.complete());
        CHECK(m.size() == 0);
        CHECK(causalize(sys).blt.blocks.empty());
    }
    SUBCASE("single linear algebraic equation") {
        const auto cm = causalize(parse_model("algebraic u; equation 2*u - 6 = 0;"));
        REQUIRE(cm.blt.blocks.size() == 1);
        CHECK(cm.blt.blocks[0].tag != SolverTag::Newton);
        const auto vals = cm.sweep(std::span<const double>{}, std::span<const double>{});
        CHECK(vals[static_cast<std::size_t>(cm.system.id_of("u"))] == doctest::Approx(3.0).epsilon(1e-14));
    }
    SUBCASE("pure algebraic chain is ordered by dependency") {
        const auto cm = causalize(parse_model("algebraic a; algebraic b; equation b = a + 1; equation a = 2;"));
        REQUIRE(cm.blt.blocks.size() == 2);
        CHECK(names(cm.system, cm.blt.blocks[0].unknowns) == std::set<std::string>{"a"});
        CHECK(names(cm.system, cm.blt.blocks[1].unknowns) == std::set<std::string>{"b"});
        const auto vals = cm.sweep(std::span<const double>{}, std::span<const double>{});
        CHECK(vals[static_cast<std::size_t>(cm.system.id_of("b"))] == 3.0);
    }
}

TEST_CASE("BLT is invariant under equation order") {
    const std::string text = testing_support::read_file(testing_support::model_path("reactor.mdl"));
    std::vector<std::string> decls, eqs;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("equation", 0) == 0)
            eqs.push_back(line);
        else
            decls.push_back(line);
    }
    auto block_sets = [](const CausalModel& cm) {
        std::multiset<std::set<std::string>> out;
        for (const auto& b : cm.blt.blocks) out.insert(names(cm.system, b.unknowns));
        return out;
    };
    const auto reference = causalize(parse_model(text));
    const std::vector<double> x{50, 11, 17}, u{9.705, 9.705};
    const auto ref_vals = reference.sweep(x, u);
    std::mt19937 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        std::shuffle(eqs.begin(), eqs.end(), rng);
        std::string shuffled;
        for (const auto& l : decls) shuffled += l + "\n";
        for (const auto& l : eqs) shuffled += l + "\n";
        const auto cm = causalize(parse_model(shuffled));
        check_topological(cm);
        CHECK(block_sets(cm) == block_sets(reference));
        CHECK(cm.state_names() == reference.state_names());
        const auto vals = cm.sweep(x, u);
        for (const auto& v : reference.system.variables()) {
            const auto a = static_cast<std::size_t>(reference.system.id_of(v.name));
            const auto b = static_cast<std::size_t>(cm.system.id_of(v.name));
            CHECK(vals[b] == doctest::Approx(ref_vals[a]).epsilon(1e-12));
        }
    }
}

TEST_CASE("causalization is deterministic") {
    const auto sys = load_model("reactor.mdl");
    CHECK(format_blt(causalize(sys)) == format_blt(causalize(sys)));
}
