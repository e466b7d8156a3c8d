#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "kcone/jordan.hpp"

using namespace kcone;
using kcone::testing::example_map;
using kcone::testing::x_branch_curve;
using kcone::testing::y_axis_curve;

namespace {

MatSeries<Rational> y_axis_family(int T) {
    return linearize_along_curve(example_map<Rational>(), y_axis_curve<Rational>(T), T);
}

MatSeries<Rational> diag_one_eps(int T) {
    MatSeries<Rational> l;
    l.trunc = T;
    l.coeff.assign(T + 1, Mat<Rational>(2, 2));
    l.coeff[0].at(0, 0) = Rational(1);
    l.coeff[1].at(1, 1) = Rational(1);
    return l;
}

/// Exhaustive-rank oracle: dim W_j = rank(T_j) - rank(A_j) on the stacked
/// block-Toeplitz systems; k = first j reaching m.
template <class S>
std::optional<int> toeplitz_rank_oracle(const MatSeries<S>& l, int max_k) {
    for (int j = 0; j <= max_k; ++j) {
        auto tj = kcone::detail::toeplitz_rows(l, j + 1, j + 1);
        auto aj = kcone::detail::toeplitz_rows(l, j, j + 1);
        if (rank(tj) - rank(aj) == l.rows()) return j;
    }
    return std::nullopt;
}

}  // namespace

TEST_CASE("filtration along the y-axis example") {
    auto l = y_axis_family(8);
    auto f = leading_filtration(l, 5);
    auto d = f.dims();
    REQUIRE(d.size() == 4);  // stops once W_3 spans
    CHECK(d[0] == 0);
    CHECK(d[1] == 0);
    CHECK(d[2] == 0);
    CHECK(d[3] == 1);
    REQUIRE(f.k.has_value());
    CHECK(*f.k == 3);
}

TEST_CASE("filtration trivial cases") {
    // invertible constant coefficient: W_0 is everything
    MatSeries<Rational> l;
    l.trunc = 2;
    l.coeff.assign(3, Mat<Rational>(2, 2));
    l.coeff[0] = Mat<Rational>::identity(2);
    auto f = leading_filtration(l, 2);
    CHECK(f.dims()[0] == 2);
    CHECK(*f.k == 0);

    // diag(1, eps): W_0 = span(e1), W_1 = K^2
    auto f2 = leading_filtration(diag_one_eps(3), 3);
    CHECK(f2.dims() == std::vector<int>{1, 2});
    CHECK(*f2.k == 1);
}

TEST_CASE("surjectivity order on the two example curves") {
    CHECK(*surjectivity_order(y_axis_family(8), 6).k == 3);

    auto l2 = linearize_along_curve(example_map<Rational>(), x_branch_curve<Rational>(26), 23);
    auto r2 = surjectivity_order(l2, 14);
    REQUIRE(r2.found());
    CHECK(*r2.k == 11);
}

TEST_CASE("zero family is reported as stabilized, not guessed") {
    MatSeries<Rational> l;
    l.trunc = 5;
    l.coeff.assign(6, Mat<Rational>(1, 2));
    auto r = surjectivity_order(l, 5);
    CHECK_FALSE(r.found());
    CHECK(r.status == SurjectivityResult<Rational>::Status::Stabilized);
    for (int dim : r.filtration.dims()) CHECK(dim == 0);
}

TEST_CASE("default max_k guard") {
    auto l = diag_one_eps(8);
    CHECK(default_max_k(l) == std::min(8, 2 * 2 + 2));
}

TEST_CASE("decomposition of the y-axis family") {
    auto l = y_axis_family(8);
    auto d = cone_decomposition(l, 3);
    CHECK(d.class_dims() == std::vector<int>{0, 0, 0, 1});
    CHECK(d.dim_null() == 1);
    // N_4^c = span{(1,0)}, N_4 = span{(0,1)} exactly
    CHECK(d.classes[3].roots.at(0, 0) == Rational(1));
    CHECK(d.classes[3].roots.at(1, 0) == Rational(0));
    CHECK(d.null_k1.at(0, 0) == Rational(0));
    CHECK(d.null_k1.at(1, 0) == Rational(1));
    // S_4 maps the root to the order-3 leading coefficient -1
    CHECK(d.classes[3].leads.at(0, 0) == Rational(-1));
    // P_4 is the identity on K^1
    CHECK(d.projection(3).at(0, 0) == Rational(1));
    CHECK(verify_decomposition(l, d).ok);
}

TEST_CASE("decomposition trivial cases") {
    // k = 0 with a kernel: L = [1, eps]
    MatSeries<Rational> l;
    l.trunc = 2;
    l.coeff.assign(3, Mat<Rational>(1, 2));
    l.coeff[0].at(0, 0) = Rational(1);
    l.coeff[1].at(0, 1) = Rational(1);
    auto d = cone_decomposition(l, 0);
    CHECK(d.class_dims() == std::vector<int>{1});
    CHECK(d.dim_null() == 1);
    CHECK(d.phi.empty());
    // N_1 = N[L_0] = span(e2)
    CHECK(d.null_k1.at(0, 0) == Rational(0));
    CHECK(d.null_k1.at(1, 0) == Rational(1));
    CHECK(verify_decomposition(l, d).ok);

    // diag(1, eps): k = 1, N_2 = {0}, S_1 = S_2 = [1] on the axes
    auto d2 = cone_decomposition(diag_one_eps(3), 1);
    CHECK(d2.class_dims() == std::vector<int>{1, 1});
    CHECK(d2.dim_null() == 0);
    CHECK(d2.classes[0].roots.at(0, 0) == Rational(1));
    CHECK(d2.classes[1].roots.at(1, 0) == Rational(1));
    for (const auto& f : d2.phi)
        for (const auto& x : f.data) CHECK(x == Rational(0));
    CHECK(verify_decomposition(diag_one_eps(3), d2).ok);
}

TEST_CASE("decomposition with a nontrivial near-identity polynomial") {
    // L(eps) = [[1, eps, 0], [0, eps, eps]]: the third direction must be
    // corrected by an eps-dependent chain continuation into N_1^c.
    MatSeries<Rational> l;
    l.trunc = 4;
    l.coeff.assign(5, Mat<Rational>(2, 3));
    l.coeff[0].at(0, 0) = Rational(1);
    l.coeff[1].at(0, 1) = Rational(1);
    l.coeff[1].at(1, 1) = Rational(1);
    l.coeff[1].at(1, 2) = Rational(1);
    auto r = surjectivity_order(l, 3);
    REQUIRE(r.found());
    CHECK(*r.k == 1);
    auto d = cone_decomposition(l, 1);
    CHECK(d.class_dims() == std::vector<int>{1, 1});
    CHECK(d.dim_null() == 1);
    REQUIRE(d.phi.size() == 1);
    bool phi_nonzero = false;
    for (const auto& x : d.phi[0].data)
        if (x != Rational(0)) phi_nonzero = true;
    CHECK(phi_nonzero);
    CHECK(verify_decomposition(l, d).ok);
}

TEST_CASE("inconsistent k is rejected") {
    auto l = y_axis_family(8);
    CHECK_THROWS_AS(cone_decomposition(l, 2), InconsistentK);  // too small
    CHECK_THROWS_AS(cone_decomposition(diag_one_eps(9), 3), InconsistentK);  // too large
}

TEST_CASE("surjectivity witness residuals") {
    // diag(1, eps), bbar = (1, 1): b(eps) = (eps, 1), L b = (eps, eps)
    auto d = cone_decomposition(diag_one_eps(3), 1);
    auto b = surjectivity_witness(d, Vec<Rational>{Rational(1), Rational(1)});
    REQUIRE(b.size() >= 2);
    CHECK(b[0] == Vec<Rational>{Rational(0), Rational(1)});
    CHECK(b[1] == Vec<Rational>{Rational(1), Rational(0)});

    // bbar = 0 gives the zero witness
    auto b0 = surjectivity_witness(d, zero_vec<Rational>(2));
    for (const auto& c : b0) CHECK(is_zero_vec(c));

    // y-axis example: multiple of (1,0) with residual valuation >= 4
    auto l = y_axis_family(8);
    auto dy = cone_decomposition(l, 3);
    auto by = surjectivity_witness(dy, Vec<Rational>{Rational(1)});
    CHECK(by[0][1] == Rational(0));
    CHECK(by[0][0] != Rational(0));
    auto res = mul_series_poly(l, by);
    for (int j = 0; j <= res.trunc; ++j) {
        if (j == 3)
            CHECK(res.coeff[j] == Vec<Rational>{Rational(1)});
        else if (j <= 4)
            CHECK(is_zero_vec(res.coeff[j]));
    }
}

TEST_CASE("witness definition check on random targets") {
    std::mt19937 rng(2024);
    std::vector<MatSeries<Rational>> families = {y_axis_family(8), diag_one_eps(5)};
    std::vector<int> ks = {3, 1};
    for (std::size_t fam = 0; fam < families.size(); ++fam) {
        const auto& l = families[fam];
        auto d = cone_decomposition(l, ks[fam]);
        for (int trial = 0; trial < 20; ++trial) {
            auto bbar = kcone::testing::random_rational_vec(rng, l.rows());
            auto b = surjectivity_witness(d, bbar);
            auto res = mul_series_poly(l, b);
            for (int j = 0; j < d.k && j <= res.trunc; ++j) CHECK(is_zero_vec(res.coeff[j]));
            CHECK(res.coeff[d.k] == bbar);
        }
    }
}

TEST_CASE("minimality: the filtration is strict below k") {
    auto l = y_axis_family(8);
    auto f = leading_filtration(l, 3);
    REQUIRE(f.k.has_value());
    CHECK(f.steps[*f.k - 1].basis.cols < l.rows());
    CHECK(f.steps[*f.k].basis.cols == l.rows());
}

TEST_CASE("scaling invariance of the order and subspaces") {
    auto l = y_axis_family(8);
    auto scaled = l;
    for (auto& c : scaled.coeff)
        for (auto& x : c.data) x *= Rational(-7, 3);
    CHECK(*surjectivity_order(scaled, 5).k == 3);
    auto d1 = cone_decomposition(l, 3);
    auto d2 = cone_decomposition(scaled, 3);
    CHECK(d1.class_dims() == d2.class_dims());
    for (int t = 0; t < d1.null_k1.cols; ++t) CHECK(in_span(d2.null_k1, col(d1.null_k1, t)));
    for (std::size_t i = 0; i < d1.classes.size(); ++i)
        for (int t = 0; t < d1.classes[i].roots.cols; ++t)
            CHECK(in_span(d2.classes[i].roots, col(d1.classes[i].roots, t)));
}

TEST_CASE("brute-force oracle equivalence on random rational families") {
    std::mt19937 rng(99);
    std::uniform_int_distribution<int> rank_pick(0, 2);
    int agreements = 0;
    for (int inst = 0; inst < 25; ++inst) {
        MatSeries<Rational> l;
        l.trunc = 6;
        l.coeff.assign(7, Mat<Rational>(3, 3));
        // low-rank constant term so that interesting k values appear
        int r0 = rank_pick(rng);
        for (int t = 0; t < r0; ++t) {
            auto u = kcone::testing::random_rational_vec(rng, 3, 1);
            auto v = kcone::testing::random_rational_vec(rng, 3, 1);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) l.coeff[0].at(i, j) += u[i] * v[j];
        }
        for (int c = 1; c <= 6; ++c)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    l.coeff[c].at(i, j) = kcone::testing::random_rational(rng, 1);
        auto mine = surjectivity_order(l, 5);
        auto oracle = toeplitz_rank_oracle(l, 5);
        if (mine.found()) {
            REQUIRE(oracle.has_value());
            CHECK(*mine.k == *oracle);
        } else {
            CHECK_FALSE(oracle.has_value());
        }
        ++agreements;
    }
    CHECK(agreements == 25);
}

TEST_CASE("float-mode order decisions tolerate roundoff noise") {
    MatSeries<double> l;
    l.trunc = 4;
    l.coeff.assign(5, Mat<double>(2, 2));
    l.coeff[0].at(0, 0) = 1.0;
    l.coeff[1].at(1, 1) = 1.0;
    l.coeff[0].at(1, 0) = 3e-13;  // below the relative rank tolerance
    l.coeff[2].at(0, 1) = -1e-13;
    auto r = surjectivity_order(l, 4);
    REQUIRE(r.found());
    CHECK(*r.k == 1);
    auto d = cone_decomposition(l, 1);
    CHECK(d.class_dims() == std::vector<int>{1, 1});
    CHECK(verify_decomposition(l, d).ok);
}
