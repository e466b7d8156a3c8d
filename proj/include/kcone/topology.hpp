#pragma once

#include <numeric>
#include <vector>

#include "kcone/series.hpp"

namespace kcone {

struct DegenerateThroughT : Error {
    using Error::Error;
};
struct UndefinedDegree : Error {
    using Error::Error;
};
struct NonPositiveMilnor : Error {
    using Error::Error;
};

/// det of L(eps) restricted to a transversal subspace: eps^chi * r(eps)
/// with r(0) != 0.
template <class S>
struct TransversalDeterminant {
    int chi = 0;
    SSeries<S> det;  // the full determinant series
    S r0{};          // r(0), the unit part at eps^chi
    Mat<S> basis;    // transversal columns used
};

/// Default transversal: the coordinate complement of the curve's leading
/// direction (drop the n-m coordinates with largest |component| of z_l,
/// deterministically lowest-index-first on ties).
template <class S>
Mat<S> default_transversal(const CurveSeries<S>& z, int m) {
    const int n = z.dim();
    if (m > n) throw DimensionMismatch("transversal wider than the domain");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto l = leading_index(z);
    Vec<S> zl = l ? z.coeff[*l] : zero_vec<S>(n);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scalar_traits<S>::magnitude(zl[a]) > scalar_traits<S>::magnitude(zl[b]);
    });
    std::vector<int> keep(order.begin() + (n - m), order.end());
    std::sort(keep.begin(), keep.end());
    Mat<S> basis(n, m);
    for (int j = 0; j < m; ++j) basis.at(keep[j], j) = S(1);
    return basis;
}

template <class S>
TransversalDeterminant<S> transversal_determinant(const PolyMap<S>& g, const CurveSeries<S>& z,
                                                  const Mat<S>& basis, int T, double tol = kRankTol) {
    if (basis.cols != g.m_out) throw DimensionMismatch("transversal must give a square restricted Jacobian");
    auto l = linearize_along_curve(g, z, T);
    TransversalDeterminant<S> td;
    td.basis = basis;
    td.det = series_determinant(l, basis);
    auto v = valuation(td.det, tol);
    if (!v.determined) throw DegenerateThroughT("restricted determinant vanishes through the truncation");
    td.chi = v.q;
    td.r0 = td.det.c[td.chi];
    return td;
}

/// Topological-degree signs of r(0) * eps^chi on the two half cones; they
/// differ exactly when chi is odd. Real scalars only.
struct HalfConeDegree {
    int sign_pos = 0;  // eps > 0
    int sign_neg = 0;  // eps < 0
};

template <class S>
HalfConeDegree half_cone_degree(const TransversalDeterminant<S>& td) {
    if constexpr (scalar_traits<S>::is_complex) {
        throw UndefinedDegree("topological degree is undefined over the complex field");
    } else {
        double r = to_double(td.r0);
        int s = r > 0 ? 1 : -1;
        HalfConeDegree d;
        d.sign_pos = s;
        d.sign_neg = td.chi % 2 == 0 ? s : -s;
        return d;
    }
}

/// mu = k_1 + ... + k_tau - ord(G) + 1 from per-curve surjectivity orders.
inline int milnor_number(const std::vector<int>& k_values, int ord_g) {
    int mu = std::accumulate(k_values.begin(), k_values.end(), 0) - ord_g + 1;
    if (mu <= 0)
        throw NonPositiveMilnor("mu = " + std::to_string(mu) + " <= 0: suspicious k values or order");
    return mu;
}

/// The classical desingularization condition q >= 2*chi + 1; an exactly
/// vanishing composition through T counts as holding.
struct ClassicalNewtonVerdict {
    bool holds = false;
    bool q_determined = false;
    int q = 0;  // when determined
    int threshold = 0;
};

template <class S>
ClassicalNewtonVerdict classical_newton_check(const PolyMap<S>& g, const CurveSeries<S>& z,
                                              const TransversalDeterminant<S>& td, int T,
                                              double tol = kRankTol) {
    auto comp = compose_map_with_curve(g, z, T);
    auto v = valuation(comp, tol);
    ClassicalNewtonVerdict verdict;
    verdict.threshold = 2 * td.chi + 1;
    verdict.q_determined = v.determined;
    if (!v.determined) {
        verdict.holds = true;  // no zero coefficient observed through T
        return verdict;
    }
    verdict.q = v.q;
    verdict.holds = v.q >= verdict.threshold;
    return verdict;
}

}  // namespace kcone
