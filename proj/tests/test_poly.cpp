#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "kcone/poly.hpp"

using namespace kcone;
using kcone::testing::example_map;

TEST_CASE("eval on the example map") {
    auto g = example_map<Rational>();
    // G[0, 1/2] = (1/2)^5
    auto v = eval(g, Vec<Rational>{Rational(0), Rational(1, 2)});
    CHECK(v[0] == Rational(1, 32));
    CHECK(to_double(v[0]) == Catch::Approx(0.03125));
    // no constant monomials: G[0] = 0
    CHECK(eval(g, zero_vec<Rational>(2))[0] == Rational(0));
    // hand evaluation: -2 + 32 + 1
    CHECK(eval(g, Vec<Rational>{Rational(2), Rational(1)})[0] == Rational(31));
    CHECK_THROWS_AS(eval(g, Vec<Rational>{Rational(1)}), DimensionMismatch);
}

TEST_CASE("jacobian rows match hand-computed partials") {
    auto g = example_map<Rational>();
    Rational e0(1, 2);
    // at (0, e0): [-e0^3, 5*e0^4]
    auto j = jacobian(g, Vec<Rational>{Rational(0), e0});
    CHECK(j.at(0, 0) == -e0 * e0 * e0);
    CHECK(j.at(0, 1) == Rational(5) * e0 * e0 * e0 * e0);
    // at (e0^3, e0^4): [4*e0^12, e0^11*(-3+5*e0^5)]
    Rational e3 = e0 * e0 * e0, e4 = e3 * e0, e5 = e4 * e0;
    auto j2 = jacobian(g, Vec<Rational>{e3, e4});
    Rational e11(1);
    for (int i = 0; i < 11; ++i) e11 *= e0;
    CHECK(j2.at(0, 0) == Rational(4) * e11 * e0);
    CHECK(j2.at(0, 1) == e11 * (Rational(-3) + Rational(5) * e5));

    PolyMap<Rational> constant(2, 2);
    constant.comp[0] = Poly<Rational>::constant(2, Rational(7));
    auto jc = jacobian(constant, Vec<Rational>{Rational(1), Rational(2)});
    for (const auto& x : jc.data) CHECK(x == Rational(0));
}

TEST_CASE("derivative tensor application") {
    auto g = example_map<Rational>();
    Vec<Rational> e1{Rational(1), Rational(0)};
    // G''[0] = 0 (no quadratic monomials)
    CHECK(deriv_apply(g, 2, zero_vec<Rational>(2), {e1, e1})[0] == Rational(0));
    // order 1 reduces to jacobian * d
    Vec<Rational> x{Rational(1, 3), Rational(2)};
    Vec<Rational> d{Rational(2), Rational(-1)};
    auto first = deriv_apply(g, 1, x, {d});
    auto via_jac = mul(jacobian(g, x), d);
    CHECK(first == via_jac);
    // d^3(x^2 y)[0] . (e1, e1, e2) = 2
    PolyMap<Rational> h(2, 1);
    h.comp[0].add_term({2, 1}, Rational(1));
    Vec<Rational> e2{Rational(0), Rational(1)};
    CHECK(deriv_apply(h, 3, zero_vec<Rational>(2), {e1, e1, e2})[0] == Rational(2));
}

TEST_CASE("deriv_apply is symmetric and multilinear") {
    auto g = example_map<Rational>();
    std::mt19937 rng(42);
    for (int order = 2; order <= 4; ++order) {
        std::vector<Vec<Rational>> dirs;
        for (int i = 0; i < order; ++i) dirs.push_back(kcone::testing::random_rational_vec(rng, 2));
        auto x = kcone::testing::random_rational_vec(rng, 2, 1);
        auto base = deriv_apply(g, order, x, dirs);
        auto perm = dirs;
        std::shuffle(perm.begin(), perm.end(), rng);
        CHECK(deriv_apply(g, order, x, perm) == base);
        // multilinearity in the first slot
        Rational c(3, 2);
        auto dirs_scaled = dirs;
        dirs_scaled[0] = scale(c, dirs[0]);
        CHECK(deriv_apply(g, order, x, dirs_scaled)[0] == c * base[0]);
    }
}

TEST_CASE("finite differences agree with the symbolic jacobian at order >= 1.9") {
    auto g = example_map<double>();
    Vec<double> x{0.3, 0.7};
    Vec<double> d{1.0, -0.5};
    auto exact = mul(jacobian(g, x), d)[0];
    auto fd = [&](double h) {
        auto xp = add(x, scale(h, d));
        auto xm = sub(x, scale(h, d));
        return (eval(g, xp)[0] - eval(g, xm)[0]) / (2 * h);
    };
    double e3 = std::abs(fd(1e-3) - exact);
    double e4 = std::abs(fd(1e-4) - exact);
    REQUIRE(e4 > 0);
    double order = std::log10(e3 / e4);
    CHECK(order >= 1.9);
}

TEST_CASE("finite Taylor expansion is exact for polynomials") {
    auto g = example_map<Rational>();
    std::mt19937 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        auto x = kcone::testing::random_rational_vec(rng, 2, 2);
        auto b = kcone::testing::random_rational_vec(rng, 2, 2);
        Rational direct = eval(g, add(x, b))[0];
        Rational acc = eval(g, x)[0];
        Rational fact(1);
        for (int j = 1; j <= deg_of_map(g); ++j) {
            fact *= Rational(j);
            std::vector<Vec<Rational>> dirs(j, b);
            acc += deriv_apply(g, j, x, dirs)[0] / fact;
        }
        CHECK(acc == direct);
    }
}

TEST_CASE("order of a map") {
    CHECK(ord_of_map(example_map<Rational>()) == 4);
    PolyMap<Rational> lin(2, 1);
    lin.comp[0].add_term({1, 0}, Rational(1));
    CHECK(ord_of_map(lin) == 1);
    PolyMap<Rational> cusp(2, 1);
    cusp.comp[0].add_term({2, 0}, Rational(1));
    cusp.comp[0].add_term({0, 3}, Rational(-1));
    CHECK(ord_of_map(cusp) == 2);
    CHECK_THROWS_AS(ord_of_map(PolyMap<Rational>(2, 1)), ZeroMapError);
}

TEST_CASE("map perturbation adds scaled monomial tensors") {
    auto g = example_map<Rational>();
    PolyMap<Rational> m5(2, 1);
    m5.comp[0].add_term({0, 5}, Rational(1));
    auto pert = perturb_map(g, Rational(1, 1000), {m5});
    CHECK(pert.comp[0].terms.at({0, 5}) == Rational(1001, 1000));
    // alpha = 0 and the zero tensor leave G unchanged
    auto same = perturb_map(g, Rational(0), {m5});
    CHECK(same.comp[0].terms == g.comp[0].terms);
    auto same2 = perturb_map(g, Rational(1, 2), {PolyMap<Rational>(2, 1)});
    CHECK(same2.comp[0].terms == g.comp[0].terms);
}

TEST_CASE("derivative vanishing query") {
    auto g = example_map<Rational>();  // ord 4
    CHECK(derivatives_vanish_through(g, 3));
    CHECK_FALSE(derivatives_vanish_through(g, 4));
}
