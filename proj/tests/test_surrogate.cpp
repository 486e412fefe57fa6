#include <doctest.h>

#include <random>

#include "adctl/surrogate.hpp"
#include "reactor_fixture.hpp"

using namespace adctl;
using namespace testing_support;

namespace {

struct Reactor {
    CausalModel model = causalize(load_model("reactor.mdl"));
    std::size_t block = block_of(model, "R_A");
    FeatureMap fm = reactor_features(model.system);
};

double weight(const LinearSurrogate& s, const std::string& out, const std::string& feature) {
    const auto o = std::find(s.outputs.begin(), s.outputs.end(), out) - s.outputs.begin();
    const auto f = std::find(s.features.names().begin(), s.features.names().end(), feature) - s.features.names().begin();
    return s.weights(o, f);
}

}  // namespace

TEST_CASE("sampling the reactor block") {
    Reactor r;
    const auto ts = sample_block(r.model, r.block, reactor_ranges(), 1000, 42);
    REQUIRE(ts.size() == 1000);
    for (const auto& row : ts.values) {
        for (auto e : r.model.blt.blocks[r.block].equations) {
            const auto& eq = r.model.system.equations()[e];
            CHECK(std::abs(eq.lhs.eval<double>(row) - eq.rhs.eval<double>(row)) <= 1e-10);
        }
        const double v = row[static_cast<std::size_t>(r.model.system.id_of("V"))];
        CHECK(v >= 10.0);
        CHECK(v <= 100.0);
    }
    // sampled inputs stay as drawn: C_A is not recomputed from C_B
    const auto& first = ts.values[0];
    CHECK(first[static_cast<std::size_t>(r.model.system.id_of("C_A"))] !=
          2.0 * first[static_cast<std::size_t>(r.model.system.id_of("C_B"))]);
    // R_B comes from its upstream block
    CHECK(first[static_cast<std::size_t>(r.model.system.id_of("R_B"))] ==
          doctest::Approx(0.3 * first[static_cast<std::size_t>(r.model.system.id_of("C_B"))]));

    CHECK(sample_block(r.model, r.block, reactor_ranges(), 0, 42).size() == 0);

    const auto again = sample_block(r.model, r.block, reactor_ranges(), 1000, 42);
    CHECK(again.values == ts.values);
    CHECK(again.targets == ts.targets);
}

TEST_CASE("single steady-state sample") {
    Reactor r;
    const double f = 9.705;
    Ranges point{{"F_i", {f, f}}, {"F", {f, f}}, {"V", {50, 50}}, {"C_A", {22, 22}}, {"C_B", {11, 11}}};
    const auto ts = sample_block(r.model, r.block, point, 1, 1);
    REQUIRE(ts.size() == 1);
    const auto& v = ts.values[0];
    CHECK(std::abs(v[static_cast<std::size_t>(r.model.system.id_of("der(C_A)"))]) < 1e-3);
    CHECK(std::abs(v[static_cast<std::size_t>(r.model.system.id_of("der(C_B)"))]) < 1e-3);
    CHECK(v[static_cast<std::size_t>(r.model.system.id_of("R_A"))] == doctest::Approx(5.434).epsilon(1e-3));
}

TEST_CASE("reactor regression recovers the closed-form block solution") {
    Reactor r;
    const auto ts = sample_block(r.model, r.block, reactor_ranges(), 1000, 42);
    const auto s = fit(ts, r.fm, r.model.system);
    // Eliminating the block by hand with K_eq = 0.5, K_B = 0.3, C_Ai = 50:
    //   der(C_B) = (50 x1 - x1 x4 - x2 x3 - 0.3 x3) / 3,  der(C_A) = 2 der(C_B),
    //   R_A = (50 x1 - x1 x4 + 2 x2 x3 + 0.6 x3) / 3
    const std::map<std::string, std::vector<double>> expected{
        {"der(C_B)", {50.0 / 3, 0, -0.1, 0, -1.0 / 3, -1.0 / 3, 0, 0, 0, 0}},
        {"der(C_A)", {100.0 / 3, 0, -0.2, 0, -2.0 / 3, -2.0 / 3, 0, 0, 0, 0}},
        {"R_A", {50.0 / 3, 0, 0.2, 0, -1.0 / 3, 2.0 / 3, 0, 0, 0, 0}}};
    for (const auto& [out, w] : expected)
        for (std::size_t j = 0; j < w.size(); ++j)
            CHECK(std::abs(weight(s, out, r.fm.names()[j]) - w[j]) <= 1e-8);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(0.5, 20);
    for (int k = 0; k < 100; ++k) {
        auto vals = r.model.system.default_values();
        const double fi = U(rng), fo = U(rng), V = 5 * U(rng), ca = 2 * U(rng), cb = U(rng);
        auto set = [&](const char* n, double v) { vals[static_cast<std::size_t>(r.model.system.id_of(n))] = v; };
        set("F_i", fi);
        set("F", fo);
        set("V", V);
        set("C_A", ca);
        set("C_B", cb);
        const auto y = s.predict(vals);
        const auto o = std::find(s.outputs.begin(), s.outputs.end(), "der(C_B)") - s.outputs.begin();
        const double closed = (1.0 / (1.0 + 1.0 / 0.5)) * (fi / V * (50 - ca) - fo / V * cb - 0.3 * cb);
        CHECK(std::abs(y[static_cast<std::size_t>(o)] - closed) <= 1e-8);
    }

    CHECK(surrogate_residual(s, r.model, r.block, reactor_ranges(), 200, 7) <= 1e-8);
    LinearSurrogate zero = s;
    zero.weights.setZero();
    CHECK(surrogate_residual(zero, r.model, r.block, reactor_ranges(), 50, 7) > 0.0);

    const auto again = fit(sample_block(r.model, r.block, reactor_ranges(), 1000, 42), r.fm, r.model.system);
    CHECK(again.weights == s.weights);
}

TEST_CASE("fit on exactly linear data and rank deficiency") {
    const auto cm = causalize(parse_model("state x; input u; algebraic y; equation der(x) = y; equation y = 2*u;"));
    const auto b = block_of(cm, "y");
    const auto ts = sample_block(cm, b, {{"u", {-1, 1}}, {"x", {0, 1}}}, 50, 3);
    const FeatureMap fm(cm.system, {{"a", "u"}, {"c", "x"}}, {"a", "c", "a*c"});
    const auto s = fit(ts, fm, cm.system);
    CHECK(std::abs(s.weights(0, 0) - 2.0) <= 1e-10);
    CHECK(std::abs(s.weights(0, 1)) <= 1e-10);
    CHECK(std::abs(s.weights(0, 2)) <= 1e-10);

    const FeatureMap dup(cm.system, {{"a", "u"}, {"b", "u"}}, {"a", "b"});
    try {
        (void)fit(ts, dup, cm.system);
        FAIL("expected rank deficiency");
    } catch (const RankDeficiencyError& e) {
        CHECK(e.dependent_columns().size() == 1);
    }
    CHECK_THROWS_AS(FeatureMap(cm.system, {{"a", "u"}}, {"a*a*a"}), InvalidArgumentError);
    CHECK_THROWS_AS(FeatureMap(cm.system, {{"a", "u"}}, {"a", "a"}), InvalidArgumentError);
    CHECK_THROWS_AS(fit(sample_block(cm, b, {{"u", {-1, 1}}}, 2, 3), fm, cm.system), PreconditionError);
}

TEST_CASE("identity surrogate on an explicit block") {
    const auto cm = causalize(parse_model("state x; algebraic y; equation der(x) = -y; equation y = 2*x;"));
    const auto b = block_of(cm, "y");
    LinearSurrogate s;
    s.features = FeatureMap(cm.system, {{"b", "x"}}, {"b"});
    s.outputs = {"y"};
    s.weights = Matrix::Constant(1, 1, 2.0);
    const auto replaced = replace_block(cm, b, s);
    const auto f0 = causal_field(cm);
    const auto f1 = causal_field(replaced);
    for (double x : {-1.5, 0.0, 0.3, 7.0}) {
        const std::vector<double> z{x};
        CHECK(std::abs(f0(std::span<const double>(z))[0] - f1(std::span<const double>(z))[0]) <= 1e-12);
    }
    CHECK(surrogate_residual(s, cm, b, {{"x", {-1, 1}}}, 10, 1) == 0.0);
}

TEST_CASE("reactor conversion to a pure triangular ODE") {
    Reactor r;
    const auto s = fit(sample_block(r.model, r.block, reactor_ranges(), 1000, 42), r.fm, r.model.system);
    const auto ode = replace_block(r.model, r.block, s);
    CHECK(ode.blt.newton_blocks() == 0);
    CHECK(ode.state_names() == std::vector<std::string>{"V", "C_B", "C_C"});
    std::size_t surrogate_blocks = 0;
    for (const auto& b : ode.blt.blocks) {
        CHECK(b.size() == 1);
        if (b.tag == SolverTag::Surrogate) ++surrogate_blocks;
    }
    CHECK(surrogate_blocks == 3);

    const auto fode = causal_field(ode);
    const auto fdae = causal_field(r.model);
    REQUIRE(fode.differentiable());
    const double f = 3.3 / 17.0 * 50.0;
    const std::vector<double> ss{50, 11, 17, f, f};
    for (double d : fode(std::span<const double>(ss))) CHECK(std::abs(d) <= 1e-6);
    CHECK(check_fd(fode, ss, {}, 1e-6) <= 1e-5);

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(0, 1);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> z{10 + 90 * U(rng), 25 * U(rng), 30 * U(rng), 20 * U(rng), 20 * U(rng)};
        const auto a = fode(std::span<const double>(z));
        const auto b = fdae(std::span<const double>(z));
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("surrogate file round trip") {
    Reactor r;
    const auto s = fit(sample_block(r.model, r.block, reactor_ranges(), 200, 42), r.fm, r.model.system);
    const std::string text = write_surrogate(s);
    CHECK(text.rfind("features x1 x2 x3 x4 x1*x4", 0) == 0);
    const auto back = read_surrogate(text, r.model.system);
    CHECK(back.weights == s.weights);
    CHECK(back.outputs == s.outputs);
    CHECK(back.features.names() == s.features.names());
    CHECK(write_surrogate(back) == text);
    CHECK_THROWS_AS(read_surrogate("features x1\nbase x1 = F_i/V\nR_A 1 2\n", r.model.system), InvalidArgumentError);
}
