#pragma once

#include <random>
#include <vector>

#include "kcone/poly.hpp"
#include "kcone/series.hpp"

namespace kcone::testing {

/// G[x, y] = -x*y^3 + x^5 + alpha*y^5, the running example map.
template <class S>
PolyMap<S> example_map(S alpha = S(1)) {
    PolyMap<S> g(2, 1);
    g.comp[0].add_term({1, 3}, S(-1));
    g.comp[0].add_term({5, 0}, S(1));
    g.comp[0].add_term({0, 5}, alpha);
    return g;
}

/// z(eps) = (0, eps) padded with zeros through eps^T.
template <class S>
CurveSeries<S> y_axis_curve(int T) {
    std::vector<Vec<S>> c(T + 1, zero_vec<S>(2));
    c[1][1] = S(1);
    return make_curve(std::move(c));
}

/// z(eps) = (eps^3, eps^4) padded with zeros through eps^T.
template <class S>
CurveSeries<S> x_branch_curve(int T) {
    std::vector<Vec<S>> c(T + 1, zero_vec<S>(2));
    c[3][0] = S(1);
    c[4][1] = S(1);
    return make_curve(std::move(c));
}

inline Rational random_rational(std::mt19937& rng, int num_range = 3, int den_max = 3) {
    std::uniform_int_distribution<int> num(-num_range, num_range);
    std::uniform_int_distribution<int> den(1, den_max);
    return Rational(num(rng), den(rng));
}

inline Vec<Rational> random_rational_vec(std::mt19937& rng, int n, int num_range = 3) {
    Vec<Rational> v(n);
    for (auto& x : v) x = random_rational(rng, num_range);
    return v;
}

inline Poly<Rational> random_homogeneous_poly(std::mt19937& rng, int nvars, int degree) {
    Poly<Rational> p(nvars);
    // enumerate exponent tuples of the given total degree (nvars <= 3 here)
    std::vector<Exponents> exps;
    Exponents e(nvars, 0);
    auto rec = [&](auto&& self, int var, int left) -> void {
        if (var == nvars - 1) {
            e[var] = left;
            exps.push_back(e);
            return;
        }
        for (int d = 0; d <= left; ++d) {
            e[var] = d;
            self(self, var + 1, left - d);
        }
    };
    rec(rec, 0, degree);
    for (const auto& ex : exps) p.add_term(ex, random_rational(rng));
    return p;
}

}  // namespace kcone::testing
