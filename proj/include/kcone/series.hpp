#pragma once

#include <optional>
#include <vector>

#include "kcone/linalg.hpp"
#include "kcone/poly.hpp"
#include "kcone/scalar.hpp"

namespace kcone {

struct InsufficientTruncation : Error {
    using Error::Error;
};

/// Truncated scalar power series in eps; coefficients for eps^0..eps^trunc.
template <class S>
struct SSeries {
    int trunc = 0;
    std::vector<S> c;

    explicit SSeries(int t = 0) : trunc(t), c(t + 1, S{}) {}

    static SSeries constant(int t, S v) {
        SSeries s(t);
        s.c[0] = std::move(v);
        return s;
    }

    friend SSeries operator+(const SSeries& a, const SSeries& b) {
        SSeries r(std::min(a.trunc, b.trunc));
        for (int i = 0; i <= r.trunc; ++i) r.c[i] = a.c[i] + b.c[i];
        return r;
    }
    friend SSeries operator-(const SSeries& a, const SSeries& b) {
        SSeries r(std::min(a.trunc, b.trunc));
        for (int i = 0; i <= r.trunc; ++i) r.c[i] = a.c[i] - b.c[i];
        return r;
    }
    friend SSeries operator*(const SSeries& a, const SSeries& b) {
        SSeries r(std::min(a.trunc, b.trunc));
        for (int i = 0; i <= r.trunc; ++i)
            for (int j = 0; i + j <= r.trunc; ++j) {
                if (j > b.trunc) break;
                r.c[i + j] += a.c[i] * b.c[j];
            }
        return r;
    }
    friend SSeries operator*(const S& k, const SSeries& a) {
        SSeries r = a;
        for (auto& x : r.c) x *= k;
        return r;
    }
};

/// A curve z(eps) in K^n with z(0) = 0, truncated at eps^trunc.
template <class S>
struct CurveSeries {
    int trunc = 0;
    std::vector<Vec<S>> coeff;  // size trunc+1

    int dim() const { return coeff.empty() ? 0 : static_cast<int>(coeff[0].size()); }
};

template <class S>
CurveSeries<S> make_curve(std::vector<Vec<S>> coeff) {
    if (coeff.empty()) throw Error("curve needs at least the eps^0 coefficient");
    if (!is_zero_vec(coeff[0])) throw Error("curve must satisfy z(0) = 0");
    for (const auto& c : coeff)
        if (c.size() != coeff[0].size()) throw DimensionMismatch("curve: ragged coefficients");
    CurveSeries<S> z;
    z.trunc = static_cast<int>(coeff.size()) - 1;
    z.coeff = std::move(coeff);
    return z;
}

template <class S>
struct VecSeries {
    int trunc = 0;
    std::vector<Vec<S>> coeff;

    int dim() const { return coeff.empty() ? 0 : static_cast<int>(coeff[0].size()); }
};

template <class S>
struct MatSeries {
    int trunc = 0;
    std::vector<Mat<S>> coeff;

    int rows() const { return coeff.empty() ? 0 : coeff[0].rows; }
    int cols() const { return coeff.empty() ? 0 : coeff[0].cols; }
};

/// Valuation of a truncated series: smallest index with a nonzero stored
/// coefficient, or indeterminate (all stored coefficients vanish; the true
/// valuation is at least trunc+1 and is never guessed).
struct Valuation {
    bool determined = false;
    int q = 0;  // valid when determined; otherwise first unknown index (trunc+1)
};

namespace detail {

template <class S>
double coeff_magnitude(const Vec<S>& v) {
    return max_magnitude(v);
}
template <class S>
double coeff_magnitude(const Mat<S>& m) {
    return max_magnitude(m);
}
inline double coeff_magnitude(const Rational& x) { return scalar_traits<Rational>::magnitude(x); }
inline double coeff_magnitude(double x) { return std::abs(x); }
inline double coeff_magnitude(const ComplexRational& x) { return scalar_traits<ComplexRational>::magnitude(x); }
inline double coeff_magnitude(const std::complex<double>& x) { return std::abs(x); }

template <class S>
bool coeff_is_zero(const Vec<S>& v) {
    return is_zero_vec(v);
}
template <class S>
bool coeff_is_zero(const Mat<S>& m) {
    for (const auto& x : m.data)
        if (!scalar_traits<S>::is_zero(x)) return false;
    return true;
}
template <class S>
bool coeff_is_zero(const S& x) {
    return scalar_traits<S>::is_zero(x);
}

template <class Series>
Valuation series_valuation(const Series& s, bool exact, double tol) {
    Valuation v;
    v.q = s.trunc + 1;
    if (exact) {
        for (int i = 0; i <= s.trunc; ++i)
            if (!coeff_is_zero(s.coeff[i])) {
                v.determined = true;
                v.q = i;
                return v;
            }
        return v;
    }
    double scale = 0;
    for (int i = 0; i <= s.trunc; ++i) scale = std::max(scale, coeff_magnitude(s.coeff[i]));
    for (int i = 0; i <= s.trunc; ++i)
        if (coeff_magnitude(s.coeff[i]) > tol * scale && scale > 0) {
            v.determined = true;
            v.q = i;
            return v;
        }
    return v;
}

}  // namespace detail

template <class S>
Valuation valuation(const VecSeries<S>& s, double tol = kRankTol) {
    return detail::series_valuation(s, scalar_traits<S>::is_exact, tol);
}

template <class S>
Valuation valuation(const MatSeries<S>& s, double tol = kRankTol) {
    return detail::series_valuation(s, scalar_traits<S>::is_exact, tol);
}

template <class S>
Valuation valuation(const CurveSeries<S>& s, double tol = kRankTol) {
    return detail::series_valuation(s, scalar_traits<S>::is_exact, tol);
}

template <class S>
Valuation valuation(const SSeries<S>& s, double tol = kRankTol) {
    struct View {
        int trunc;
        const std::vector<S>& coeff;
    } view{s.trunc, s.c};
    return detail::series_valuation(view, scalar_traits<S>::is_exact, tol);
}

/// Leading index of a nonzero curve (min j >= 1 with z_j != 0).
template <class S>
std::optional<int> leading_index(const CurveSeries<S>& z) {
    auto v = valuation(z);
    if (!v.determined) return std::nullopt;
    return v.q;
}

// ---- composition ----

namespace detail {

/// Largest output order fully determined when substituting z into polynomials
/// whose minimal non-constant total degree is d_min. Unknown curve
/// coefficients start at z.trunc+1; every non-constant monomial of degree d
/// first touches them at (z.trunc+1) + (d-1)*val(z).
template <class S>
int feasible_trunc(int d_min, const CurveSeries<S>& z) {
    if (d_min < 1) return std::numeric_limits<int>::max();
    auto l = leading_index(z);
    int lv = l ? *l : z.trunc + 1;
    long first_unknown = static_cast<long>(z.trunc) + 1 + static_cast<long>(d_min - 1) * lv;
    long t = first_unknown - 1;
    return t > std::numeric_limits<int>::max() ? std::numeric_limits<int>::max() : static_cast<int>(t);
}

template <class S>
int min_nonconstant_degree(const std::vector<const Poly<S>*>& polys) {
    int d = -1;
    for (const auto* p : polys)
        for (const auto& [e, c] : p->terms) {
            int td = static_cast<int>(total_degree(e));
            if (td >= 1 && (d < 0 || td < d)) d = td;
        }
    return d;
}

/// Exact coefficients of p(z(eps)) through eps^T by polynomial substitution
/// and collection; powers of curve components are memoized in `pows`.
template <class S>
SSeries<S> compose_poly(const Poly<S>& p, const CurveSeries<S>& z, int T,
                        std::vector<std::vector<SSeries<S>>>& pows) {
    const int n = z.dim();
    auto power = [&](int i, std::uint32_t e) -> const SSeries<S>& {
        auto& tab = pows[i];
        if (tab.empty()) {
            tab.push_back(SSeries<S>::constant(T, S(1)));
        }
        while (tab.size() <= e) {
            if (tab.size() == 1) {
                SSeries<S> zi(T);
                for (int j = 0; j <= std::min(T, z.trunc); ++j) zi.c[j] = z.coeff[j][i];
                tab.push_back(std::move(zi));
            } else {
                tab.push_back(tab.back() * tab[1]);
            }
        }
        return tab[e];
    };
    SSeries<S> acc(T);
    for (const auto& [e, c] : p.terms) {
        SSeries<S> t = SSeries<S>::constant(T, c);
        for (int i = 0; i < n; ++i)
            if (e[i] > 0) t = t * power(i, e[i]);
        acc = acc + t;
    }
    return acc;
}

}  // namespace detail

/// Exact Taylor coefficients of eps -> G[z(eps)] through eps^T.
template <class S>
VecSeries<S> compose_map_with_curve(const PolyMap<S>& g, const CurveSeries<S>& z, int T) {
    if (z.dim() != g.n_in) throw DimensionMismatch("compose: curve/map dimensions");
    std::vector<const Poly<S>*> ps;
    for (const auto& p : g.comp) ps.push_back(&p);
    int d_min = detail::min_nonconstant_degree(ps);
    if (T > detail::feasible_trunc(d_min, z))
        throw InsufficientTruncation("curve truncation too small to determine composition through requested order");
    std::vector<std::vector<SSeries<S>>> pows(g.n_in);
    VecSeries<S> out;
    out.trunc = T;
    out.coeff.assign(T + 1, zero_vec<S>(g.m_out));
    for (int i = 0; i < g.m_out; ++i) {
        auto s = detail::compose_poly(g.comp[i], z, T, pows);
        for (int j = 0; j <= T; ++j) out.coeff[j][i] = s.c[j];
    }
    return out;
}

/// The linearized family L(eps) = G'[z(eps)] as an exact matrix series.
template <class S>
MatSeries<S> linearize_along_curve(const PolyMap<S>& g, const CurveSeries<S>& z, int T) {
    if (z.dim() != g.n_in) throw DimensionMismatch("linearize: curve/map dimensions");
    auto jp = jacobian_polys(g);
    std::vector<const Poly<S>*> ps;
    for (const auto& row : jp)
        for (const auto& p : row) ps.push_back(&p);
    int d_min = detail::min_nonconstant_degree(ps);
    if (T > detail::feasible_trunc(d_min, z))
        throw InsufficientTruncation("curve truncation too small to determine linearization through requested order");
    std::vector<std::vector<SSeries<S>>> pows(g.n_in);
    MatSeries<S> out;
    out.trunc = T;
    out.coeff.assign(T + 1, Mat<S>(g.m_out, g.n_in));
    for (int i = 0; i < g.m_out; ++i)
        for (int v = 0; v < g.n_in; ++v) {
            auto s = detail::compose_poly(jp[i][v], z, T, pows);
            for (int j = 0; j <= T; ++j) out.coeff[j].at(i, v) = s.c[j];
        }
    return out;
}

// ---- evaluation ----

template <class S>
Vec<S> series_eval(const VecSeries<S>& s, const S& eps) {
    Vec<S> acc = zero_vec<S>(s.dim());
    for (int j = s.trunc; j >= 0; --j) {
        for (auto& x : acc) x *= eps;
        acc = add(acc, s.coeff[j]);
    }
    return acc;
}

template <class S>
Vec<S> series_eval(const CurveSeries<S>& s, const S& eps) {
    Vec<S> acc = zero_vec<S>(s.dim());
    for (int j = s.trunc; j >= 0; --j) {
        for (auto& x : acc) x *= eps;
        acc = add(acc, s.coeff[j]);
    }
    return acc;
}

template <class S>
Mat<S> series_eval(const MatSeries<S>& s, const S& eps) {
    Mat<S> acc(s.rows(), s.cols());
    for (int j = s.trunc; j >= 0; --j) {
        for (auto& x : acc.data) x *= eps;
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += s.coeff[j].data[i];
    }
    return acc;
}

template <class S>
S series_eval(const SSeries<S>& s, const S& eps) {
    S acc{};
    for (int j = s.trunc; j >= 0; --j) acc = acc * eps + s.c[j];
    return acc;
}

// ---- small series utilities ----

template <class S>
VecSeries<S> derivative(const CurveSeries<S>& z) {
    VecSeries<S> d;
    d.trunc = std::max(z.trunc - 1, 0);
    d.coeff.assign(d.trunc + 1, zero_vec<S>(z.dim()));
    for (int j = 0; j + 1 <= z.trunc; ++j) d.coeff[j] = scale(S(j + 1), z.coeff[j + 1]);
    return d;
}

template <class S>
VecSeries<S> derivative(const VecSeries<S>& z) {
    VecSeries<S> d;
    d.trunc = std::max(z.trunc - 1, 0);
    d.coeff.assign(d.trunc + 1, zero_vec<S>(z.dim()));
    for (int j = 0; j + 1 <= z.trunc; ++j) d.coeff[j] = scale(S(j + 1), z.coeff[j + 1]);
    return d;
}

/// L(eps) * v(eps) for an exactly known polynomial v (coefficients beyond
/// v's degree are zero, not unknown); valid through L.trunc + val(v).
template <class S>
VecSeries<S> mul_series_poly(const MatSeries<S>& l, const std::vector<Vec<S>>& v_coeff) {
    int vval = 0;
    while (vval < static_cast<int>(v_coeff.size()) && is_zero_vec(v_coeff[vval])) ++vval;
    if (vval == static_cast<int>(v_coeff.size())) vval = 0;  // zero polynomial
    VecSeries<S> out;
    out.trunc = l.trunc + vval;
    out.coeff.assign(out.trunc + 1, zero_vec<S>(l.rows()));
    for (int a = 0; a <= l.trunc; ++a)
        for (int b = 0; b < static_cast<int>(v_coeff.size()); ++b) {
            if (a + b > out.trunc) break;
            out.coeff[a + b] = add(out.coeff[a + b], mul(l.coeff[a], v_coeff[b]));
        }
    return out;
}

/// Determinant of L(eps) restricted to the column subspace spanned by
/// `basis` (must give a square matrix), as a truncated scalar series.
template <class S>
SSeries<S> series_determinant(const MatSeries<S>& l, const Mat<S>& basis) {
    if (basis.rows != l.cols()) throw DimensionMismatch("series_determinant basis rows");
    if (basis.cols != l.rows()) throw DimensionMismatch("restricted Jacobian must be square");
    const int m = l.rows();
    const int T = l.trunc;
    // restricted series entries
    std::vector<std::vector<SSeries<S>>> a(m, std::vector<SSeries<S>>(m, SSeries<S>(T)));
    for (int t = 0; t <= T; ++t) {
        Mat<S> r = mul(l.coeff[t], basis);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) a[i][j].c[t] = r.at(i, j);
    }
    // cofactor expansion over the first row, recursively on index sets
    std::vector<int> cols(m);
    for (int j = 0; j < m; ++j) cols[j] = j;
    auto det = [&](auto&& self, int row, std::vector<int> cs) -> SSeries<S> {
        if (cs.size() == 1) return a[row][cs[0]];
        SSeries<S> acc(T);
        S sign(1);
        for (std::size_t j = 0; j < cs.size(); ++j) {
            std::vector<int> rest;
            for (std::size_t t = 0; t < cs.size(); ++t)
                if (t != j) rest.push_back(cs[t]);
            acc = acc + sign * (a[row][cs[j]] * self(self, row + 1, rest));
            sign = -sign;
        }
        return acc;
    };
    return det(det, 0, cols);
}

/// Largest composition order fully determined by the stored curve coefficients.
template <class S>
int max_compose_trunc(const PolyMap<S>& g, const CurveSeries<S>& z) {
    std::vector<const Poly<S>*> ps;
    for (const auto& p : g.comp) ps.push_back(&p);
    int d = detail::min_nonconstant_degree(ps);
    return detail::feasible_trunc(d, z);
}

/// Same bound for the Jacobian family along the curve.
template <class S>
int max_linearize_trunc(const PolyMap<S>& g, const CurveSeries<S>& z) {
    auto jp = jacobian_polys(g);
    std::vector<const Poly<S>*> ps;
    for (const auto& row : jp)
        for (const auto& p : row) ps.push_back(&p);
    int d = detail::min_nonconstant_degree(ps);
    return detail::feasible_trunc(d, z);
}

template <class S>
CurveSeries<float_of<S>> to_float_curve(const CurveSeries<S>& z) {
    CurveSeries<float_of<S>> f;
    f.trunc = z.trunc;
    for (const auto& c : z.coeff) f.coeff.push_back(to_float_vec(c));
    return f;
}

template <class S>
VecSeries<float_of<S>> to_float_series(const VecSeries<S>& z) {
    VecSeries<float_of<S>> f;
    f.trunc = z.trunc;
    for (const auto& c : z.coeff) f.coeff.push_back(to_float_vec(c));
    return f;
}

}  // namespace kcone
