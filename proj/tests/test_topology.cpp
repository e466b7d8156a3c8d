#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "kcone/jordan.hpp"
#include "kcone/topology.hpp"

using namespace kcone;
using kcone::testing::example_map;
using kcone::testing::x_branch_curve;
using kcone::testing::y_axis_curve;

namespace {

/// Local-algebra oracle: dim K[x1..xn] / (dG + m^N), stabilized in N.
/// For an isolated singularity this is the Milnor number.
int milnor_local_algebra_oracle(const PolyMap<Rational>& g) {
    const int n = g.n_in;
    auto partials = jacobian_polys(g)[0];
    auto dim_at = [&](int nmod) {
        // basis: monomials of total degree < nmod
        std::vector<Exponents> basis;
        Exponents e(n, 0);
        auto rec = [&](auto&& self, int var, int left) -> void {
            if (var == n) {
                basis.push_back(e);
                return;
            }
            for (int d = 0; d <= left; ++d) {
                e[var] = d;
                self(self, var + 1, left - d);
            }
        };
        rec(rec, 0, nmod - 1);
        std::map<Exponents, int> index;
        for (std::size_t i = 0; i < basis.size(); ++i) index[basis[i]] = static_cast<int>(i);
        std::vector<Vec<Rational>> rows;
        for (const auto& p : partials) {
            for (const auto& mono : basis) {
                Vec<Rational> row(basis.size(), Rational(0));
                bool any = false;
                for (const auto& [pe, pc] : p.terms) {
                    Exponents prod = pe;
                    int deg = 0;
                    for (int i = 0; i < n; ++i) {
                        prod[i] += mono[i];
                        deg += static_cast<int>(prod[i]);
                    }
                    if (deg >= nmod) continue;  // truncated away by m^N
                    row[index.at(prod)] += pc;
                    any = true;
                }
                if (any) rows.push_back(std::move(row));
            }
        }
        if (rows.empty()) return static_cast<int>(basis.size());
        Mat<Rational> a(static_cast<int>(rows.size()), static_cast<int>(basis.size()));
        for (int i = 0; i < a.rows; ++i)
            for (int j = 0; j < a.cols; ++j) a.at(i, j) = rows[i][j];
        return static_cast<int>(basis.size()) - rank(a);
    };
    int prev = dim_at(4);
    for (int nmod = 5; nmod <= 14; ++nmod) {
        int cur = dim_at(nmod);
        if (cur == prev) return cur;
        prev = cur;
    }
    return prev;
}

}  // namespace

TEST_CASE("transversal determinant on the two example curves") {
    auto g = example_map<Rational>();
    // y-axis, transversal = x-axis: det = -eps^3
    auto z1 = y_axis_curve<Rational>(9);
    auto basis1 = default_transversal(z1, 1);
    CHECK(basis1.at(0, 0) == Rational(1));
    CHECK(basis1.at(1, 0) == Rational(0));
    auto td1 = transversal_determinant(g, z1, basis1, 7);
    CHECK(td1.chi == 3);
    CHECK(td1.r0 == Rational(-1));

    // (eps^3, eps^4), transversal = y-axis: det = eps^11 (-3 + 5 eps^5)
    auto z2 = x_branch_curve<Rational>(20);
    auto basis2 = default_transversal(z2, 1);
    CHECK(basis2.at(0, 0) == Rational(0));
    CHECK(basis2.at(1, 0) == Rational(1));
    auto td2 = transversal_determinant(g, z2, basis2, 17);
    CHECK(td2.chi == 11);
    CHECK(td2.r0 == Rational(-3));
    CHECK(td2.det.c[16] == Rational(5));

    // invertible constant part: chi = 0, r(0) = det L_0
    PolyMap<Rational> lin(2, 2);
    lin.comp[0].add_term({1, 0}, Rational(2));
    lin.comp[1].add_term({0, 1}, Rational(3));
    auto z0 = make_curve<Rational>(std::vector<Vec<Rational>>(4, zero_vec<Rational>(2)));
    auto td0 = transversal_determinant(lin, z0, Mat<Rational>::identity(2), 3);
    CHECK(td0.chi == 0);
    CHECK(td0.r0 == Rational(6));
}

TEST_CASE("degenerate determinant through T is an error") {
    PolyMap<Rational> g(2, 1);
    g.comp[0].add_term({0, 2}, Rational(1));  // G = y^2: dG/dx = 0
    auto z = y_axis_curve<Rational>(6);
    Mat<Rational> xaxis(2, 1);
    xaxis.at(0, 0) = Rational(1);
    CHECK_THROWS_AS(transversal_determinant(g, z, xaxis, 5), DegenerateThroughT);
}

TEST_CASE("half-cone degree signs") {
    auto g = example_map<Rational>();
    auto td1 = transversal_determinant(g, y_axis_curve<Rational>(9), default_transversal(y_axis_curve<Rational>(9), 1), 7);
    auto d1 = half_cone_degree(td1);
    CHECK(d1.sign_pos == -1);
    CHECK(d1.sign_neg == 1);

    auto z2 = x_branch_curve<Rational>(20);
    auto td2 = transversal_determinant(g, z2, default_transversal(z2, 1), 17);
    auto d2 = half_cone_degree(td2);
    CHECK(d2.sign_pos == -1);
    CHECK(d2.sign_neg == 1);

    // even chi: equal signs on both half cones
    TransversalDeterminant<Rational> even;
    even.chi = 2;
    even.r0 = Rational(5);
    CHECK(half_cone_degree(even).sign_pos == half_cone_degree(even).sign_neg);

    TransversalDeterminant<ComplexRational> cplx;
    cplx.chi = 1;
    cplx.r0 = ComplexRational{Rational(1), Rational(0)};
    CHECK_THROWS_AS(half_cone_degree(cplx), UndefinedDegree);
}

TEST_CASE("degree signs differ between half cones iff chi is odd") {
    for (int chi = 0; chi <= 5; ++chi) {
        TransversalDeterminant<Rational> td;
        td.chi = chi;
        td.r0 = Rational(-2);
        auto d = half_cone_degree(td);
        if (chi % 2 == 1)
            CHECK(d.sign_pos != d.sign_neg);
        else
            CHECK(d.sign_pos == d.sign_neg);
    }
}

TEST_CASE("transversal determinant is basis-covariant") {
    auto g = example_map<Rational>();
    auto z = y_axis_curve<Rational>(9);
    Mat<Rational> basis(2, 1);
    basis.at(0, 0) = Rational(-3);  // x-axis rescaled by -3 (det of the change = -3)
    auto td = transversal_determinant(g, z, basis, 7);
    CHECK(td.chi == 3);
    CHECK(td.r0 == Rational(3));  // -1 * (-3)
}

TEST_CASE("milnor number formula and oracle corpus") {
    CHECK(milnor_number({3, 11}, 4) == 11);
    CHECK(milnor_number({1, 1}, 2) == 1);   // node
    CHECK(milnor_number({3}, 2) == 2);      // cusp
    CHECK_THROWS_AS(milnor_number({1}, 3), NonPositiveMilnor);

    // Jacobian-ideal local-algebra oracle agrees on the corpus
    PolyMap<Rational> node(2, 1);
    node.comp[0].add_term({2, 0}, Rational(1));
    node.comp[0].add_term({0, 2}, Rational(-1));
    CHECK(milnor_local_algebra_oracle(node) == 1);

    PolyMap<Rational> cusp(2, 1);
    cusp.comp[0].add_term({2, 0}, Rational(1));
    cusp.comp[0].add_term({0, 3}, Rational(-1));
    CHECK(milnor_local_algebra_oracle(cusp) == 2);

    CHECK(milnor_local_algebra_oracle(example_map<Rational>()) == 11);
}

TEST_CASE("cusp k recomputed from its linearized family") {
    // cusp x^2 - y^3 along z = (eps^3, eps^2): L = [2 eps^3, -3 eps^4]
    PolyMap<Rational> cusp(2, 1);
    cusp.comp[0].add_term({2, 0}, Rational(1));
    cusp.comp[0].add_term({0, 3}, Rational(-1));
    std::vector<Vec<Rational>> c(10, zero_vec<Rational>(2));
    c[3][0] = Rational(1);
    c[2][1] = Rational(1);
    auto z = make_curve(std::move(c));
    auto l = linearize_along_curve(cusp, z, 8);
    CHECK(l.coeff[3].at(0, 0) == Rational(2));
    CHECK(l.coeff[4].at(0, 1) == Rational(-3));
    auto r = surjectivity_order(l, 6);
    REQUIRE(r.found());
    CHECK(*r.k == 3);
}

TEST_CASE("classical Newton condition fails on both example curves") {
    auto g = example_map<Rational>();
    auto z1 = y_axis_curve<Rational>(9);
    auto td1 = transversal_determinant(g, z1, default_transversal(z1, 1), 7);
    auto v1 = classical_newton_check(g, z1, td1, 8);
    CHECK_FALSE(v1.holds);
    CHECK(v1.q == 5);
    CHECK(v1.threshold == 7);

    auto z2 = x_branch_curve<Rational>(24);
    auto td2 = transversal_determinant(g, z2, default_transversal(z2, 1), 17);
    auto v2 = classical_newton_check(g, z2, td2, 22);
    CHECK_FALSE(v2.holds);
    CHECK(v2.q == 20);
    CHECK(v2.threshold == 23);

    // exact solution curve: composition vanishes through T, verdict holds
    PolyMap<Rational> cusp(2, 1);
    cusp.comp[0].add_term({2, 0}, Rational(1));
    cusp.comp[0].add_term({0, 3}, Rational(-1));
    std::vector<Vec<Rational>> c(10, zero_vec<Rational>(2));
    c[3][0] = Rational(1);
    c[2][1] = Rational(1);
    auto z3 = make_curve(std::move(c));
    auto td3 = transversal_determinant(cusp, z3, default_transversal(z3, 1), 8);
    auto v3 = classical_newton_check(cusp, z3, td3, 9);
    CHECK(v3.holds);
    CHECK_FALSE(v3.q_determined);
}

TEST_CASE("chi >= k on analyzed frames") {
    auto g = example_map<Rational>();
    auto z1 = y_axis_curve<Rational>(9);
    auto td1 = transversal_determinant(g, z1, default_transversal(z1, 1), 7);
    auto l1 = linearize_along_curve(g, z1, 7);
    CHECK(td1.chi >= *surjectivity_order(l1, 5).k);

    auto z2 = x_branch_curve<Rational>(26);
    auto td2 = transversal_determinant(g, z2, default_transversal(z2, 1), 23);
    auto l2 = linearize_along_curve(g, z2, 23);
    CHECK(td2.chi >= *surjectivity_order(l2, 12).k);
}
