#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "adctl/autodiff.hpp"

using namespace adctl;

namespace {

VectorFunction identity2() {
    return VectorFunction::generic(2, 0, 2, [](auto x, std::span<const double>) {
        using S = typename decltype(x)::value_type;
        return std::vector<std::remove_const_t<S>>(x.begin(), x.end());
    });
}

// f(x) = [x0^2 x1 + 3 x1, adctl::sin(x0) x1^3]
template <class S>
std::vector<S> poly_f(std::span<const S> x) {
    return {x[0] * x[0] * x[1] + 3.0 * x[1], adctl::sin(x[0]) * adctl::pow(x[1], 3)};
}
// g(x) = [x0 - 2 x1^2, adctl::cos(x0 x1)]
template <class S>
std::vector<S> poly_g(std::span<const S> x) {
    return {x[0] - 2.0 * x[1] * x[1], adctl::cos(x[0] * x[1])};
}

}  // namespace

TEST_CASE("jacobian of the identity map is the identity") {
    const std::vector<double> x{3, 7};
    const Matrix j = jacobian(identity2(), x);
    CHECK(j.isApprox(Matrix::Identity(2, 2)));
    CHECK(j(0, 1) == 0.0);
}

TEST_CASE("jacobian of sin at zero") {
    auto f = VectorFunction::generic(1, 0, 1, [](auto x, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(x)::value_type>;
        return std::vector<S>{adctl::sin(x[0])};
    });
    const std::vector<double> x{0.0};
    CHECK(jacobian(f, x)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("gradient examples") {
    auto half_norm = VectorFunction::generic(3, 0, 1, [](auto x, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(x)::value_type>;
        S s = 0.0;
        for (const auto& xi : x) s += xi * xi;
        return std::vector<S>{0.5 * s};
    });
    const std::vector<double> x{1, 2, 3};
    const Vector g = gradient(half_norm, x);
    CHECK(g(0) == 1.0);
    CHECK(g(1) == 2.0);
    CHECK(g(2) == 3.0);

    auto prod = VectorFunction::generic(2, 0, 1, [](auto x, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(x)::value_type>;
        return std::vector<S>{x[0] * x[1]};
    });
    const std::vector<double> y{2, 5};
    const Vector gp = gradient(prod, y);
    CHECK(gp(0) == 5.0);
    CHECK(gp(1) == 2.0);

    CHECK_THROWS_AS(gradient(identity2(), y), InvalidArgumentError);
}

TEST_CASE("batch_jacobian equals mapped jacobian") {
    auto sinf = VectorFunction::generic(1, 0, 1, [](auto x, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(x)::value_type>;
        return std::vector<S>{adctl::sin(x[0])};
    });
    const std::vector<std::vector<double>> pts{{0.0}, {std::numbers::pi / 2}};
    const auto js = batch_jacobian(sinf, pts);
    REQUIRE(js.size() == 2);
    CHECK(js[0](0, 0) == 1.0);
    CHECK(std::abs(js[1](0, 0)) < 1e-15);

    auto f = VectorFunction::generic(2, 0, 2, [](auto x, std::span<const double>) { return poly_f(x); });
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-2, 2);
    std::vector<std::vector<double>> many;
    for (int i = 0; i < 20; ++i) many.push_back({U(rng), U(rng)});
    const auto batch = batch_jacobian(f, many);
    for (std::size_t i = 0; i < many.size(); ++i) CHECK(batch[i] == jacobian(f, many[i]));

    const std::vector<std::vector<double>> ones{{1.0}, {2.0}, {3.0}};
    auto id1 = VectorFunction::generic(1, 0, 1, [](auto x, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(x)::value_type>;
        return std::vector<S>{x[0]};
    });
    for (const auto& j : batch_jacobian(id1, ones)) CHECK(j(0, 0) == 1.0);
}

TEST_CASE("check_fd on a square") {
    auto sq = VectorFunction::generic(1, 0, 1, [](auto x, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(x)::value_type>;
        return std::vector<S>{x[0] * x[0]};
    });
    const std::vector<double> x{1.0};
    CHECK(check_fd(sq, x, {}, 1e-5) <= 1e-8);
}

TEST_CASE("linearity and chain rule") {
    auto f = VectorFunction::generic(2, 0, 2, [](auto x, std::span<const double>) { return poly_f(x); });
    auto g = VectorFunction::generic(2, 0, 2, [](auto x, std::span<const double>) { return poly_g(x); });
    const double a = 1.7, b = -0.4;
    auto combo = VectorFunction::generic(2, 0, 2, [a, b](auto x, std::span<const double>) {
        auto fx = poly_f(x);
        auto gx = poly_g(x);
        for (std::size_t i = 0; i < fx.size(); ++i) fx[i] = a * fx[i] + b * gx[i];
        return fx;
    });
    auto fog = VectorFunction::generic(2, 0, 2, [](auto x, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(x)::value_type>;
        auto gx = poly_g(x);
        return poly_f(std::span<const S>(gx));
    });
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    for (int k = 0; k < 50; ++k) {
        const std::vector<double> x{U(rng), U(rng)};
        const Matrix lin = a * jacobian(f, x) + b * jacobian(g, x);
        CHECK((jacobian(combo, x) - lin).cwiseAbs().maxCoeff() <= 1e-12);
        const auto gx = g(std::span<const double>(x));
        const Matrix chain = jacobian(f, gx) * jacobian(g, x);
        CHECK((jacobian(fog, x) - chain).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(check_fd(f, x, {}, 1e-6) <= 1e-5);
    }
}

TEST_CASE("zero-seeded duals reproduce plain arithmetic") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.1, 2.0);
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> x{U(rng), U(rng)};
        std::vector<Dual> d{Dual(x[0], {0.0, 0.0}), Dual(x[1], {0.0, 0.0})};
        const auto yr = poly_f(std::span<const double>(x));
        const auto yd = poly_f(std::span<const Dual>(d));
        for (std::size_t i = 0; i < yr.size(); ++i) {
            CHECK(yd[i].value() == yr[i]);
            CHECK(yd[i].partial(0) == 0.0);
        }
        CHECK(value_of(adctl::tanh(Dual(x[0])) / adctl::sqrt(Dual(x[1])) + adctl::log(Dual(x[0]))) ==
              std::tanh(x[0]) / std::sqrt(x[1]) + std::log(x[0]));
    }
}

TEST_CASE("elementary derivatives") {
    const Dual x = Dual::variable(0.7, 0, 1);
    CHECK(adctl::tan(x).partial(0) == doctest::Approx(1.0 / (std::cos(0.7) * std::cos(0.7))));
    CHECK(adctl::exp(x).partial(0) == doctest::Approx(std::exp(0.7)));
    CHECK(adctl::pow(x, 2.5).partial(0) == doctest::Approx(2.5 * std::pow(0.7, 1.5)));
    CHECK(adctl::pow(2.0, x).partial(0) == doctest::Approx(std::log(2.0) * std::pow(2.0, 0.7)));
    CHECK(adctl::pow(x, x).partial(0) == doctest::Approx(std::pow(0.7, 0.7) * (std::log(0.7) + 1.0)));
    CHECK(adctl::pow(x, 3).partial(0) == doctest::Approx(3 * 0.49));
    CHECK(adctl::abs(-x).partial(0) == doctest::Approx(1.0));
    // abs is non-differentiable at 0; the derivative is defined as 0 there
    CHECK(adctl::abs(Dual::variable(0.0, 0, 1)).partial(0) == 0.0);
    CHECK((1.0 / x).partial(0) == doctest::Approx(-1.0 / 0.49));
    CHECK((3.0 - x).partial(0) == -1.0);
}

TEST_CASE("error handling") {
    SUBCASE("mixing partial lengths") {
        const Dual a = Dual::variable(1.0, 0, 2);
        const Dual b = Dual::variable(1.0, 0, 3);
        CHECK_THROWS_AS(a + b, InvalidArgumentError);
        CHECK_NOTHROW(a + Dual(4.0));
    }
    SUBCASE("dimension mismatch") {
        const std::vector<double> x{1, 2, 3};
        CHECK_THROWS_AS(jacobian(identity2(), x), InvalidArgumentError);
    }
    SUBCASE("non-finite output names its index") {
        auto f = VectorFunction::generic(1, 0, 2, [](auto x, std::span<const double>) {
            using S = std::remove_const_t<typename decltype(x)::value_type>;
            return std::vector<S>{x[0], adctl::log(x[0] - 1.0)};
        });
        const std::vector<double> x{1.0};
        try {
            (void)jacobian(f, x);
            FAIL("expected NonFiniteError");
        } catch (const NonFiniteError& e) {
            CHECK(e.output_index() == 1);
        }
    }
    SUBCASE("real-only function is not differentiable") {
        VectorFunction f(1, 0, 1, [](std::span<const double> x, std::span<const double>) {
            return std::vector<double>{x[0]};
        }, {});
        const std::vector<double> x{1.0};
        CHECK_FALSE(f.differentiable());
        CHECK_THROWS_AS(jacobian(f, x), NotDifferentiableError);
    }
}
