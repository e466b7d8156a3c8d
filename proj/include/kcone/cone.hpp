#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kcone/jordan.hpp"
#include "kcone/poly.hpp"
#include "kcone/series.hpp"

namespace kcone {

struct ShiftOrderViolation : Error {
    using Error::Error;
};
struct NewtonDivergence : Error {
    double residual;
    explicit NewtonDivergence(const std::string& what, double res = 0) : Error(what), residual(res) {}
};
struct SingularJacobian : Error {
    double condition_estimate;
    explicit SingularJacobian(const std::string& what, double cond = 0) : Error(what), condition_estimate(cond) {}
};
struct OutOfCone : Error {
    using Error::Error;
};

struct NewtonOptions {
    double tol = 1e-12;
    int max_iter = 50;
    int max_halvings = 30;
};

struct EpsGridOptions {
    double min_abs = 1e-4;
    double max_abs = 0.2;
    int per_sign = 45;
};

inline std::vector<double> geometric_grid(const EpsGridOptions& o) {
    std::vector<double> g;
    if (o.per_sign <= 1) {
        g.push_back(o.min_abs);
        return g;
    }
    double r = std::pow(o.max_abs / o.min_abs, 1.0 / (o.per_sign - 1));
    double v = o.min_abs;
    for (int i = 0; i < o.per_sign; ++i, v *= r) g.push_back(v);
    return g;
}

/// q and the shifted remainder series of G[z(eps)] = eps^q * bbar(eps).
template <class S>
struct ApproximationOrder {
    bool exact_through_trunc = false;
    int q = 0;
    VecSeries<S> bbar;
};

template <class S>
ApproximationOrder<S> approximation_order(const PolyMap<S>& g, const CurveSeries<S>& z, int T,
                                          double tol = kRankTol) {
    auto comp = compose_map_with_curve(g, z, T);
    ApproximationOrder<S> a;
    auto v = valuation(comp, tol);
    if (!v.determined) {
        a.exact_through_trunc = true;
        a.q = T + 1;
        return a;
    }
    a.q = v.q;
    a.bbar.trunc = T - a.q;
    for (int j = a.q; j <= T; ++j) a.bbar.coeff.push_back(comp.coeff[j]);
    return a;
}

/// The blow-up Ansatz around (G, z, decomposition) with the Jordan-chain
/// start shifted left by `shift`:
///   w(eps, c, w) = z(eps) + eps^{k-shift} p_k(eps) (eps^k n_1^c + ... + eps n_k^c + n_{k+1}^c + n_{k+1})
/// gw = G[w] is composed exactly as a polynomial in (eps, c, w); variable 0
/// is eps, variables 1..m are n^c coordinates in class order, the rest are
/// n_{k+1} coordinates.
template <class S>
struct BlowUpFrame {
    PolyMap<S> g;
    CurveSeries<S> z;
    ConeDecomposition<S> dec;
    int shift = 0;
    int trunc = 0;
    double tol = kRankTol;

    VecSeries<S> curve_comp;      // G[z(eps)]
    ApproximationOrder<S> approx;
    std::vector<Poly<S>> gw;      // m polynomials in 1 + n variables

    int order() const { return 2 * dec.k - shift; }
    int dim_nc() const { return dec.m; }
    int dim_nk1() const { return dec.dim_null(); }
    int nvars() const { return 1 + dec.n; }

    /// First coordinate index (within the m n^c coordinates) of each class.
    std::vector<int> class_offsets() const {
        std::vector<int> off;
        int acc = 0;
        for (const auto& c : dec.classes) {
            off.push_back(acc);
            acc += c.roots.cols;
        }
        return off;
    }
};

template <class S>
BlowUpFrame<S> make_frame(const PolyMap<S>& g, const CurveSeries<S>& z, const ConeDecomposition<S>& dec,
                          int shift, int trunc, double tol = kRankTol) {
    if (z.dim() != g.n_in || dec.n != g.n_in || dec.m != g.m_out)
        throw DimensionMismatch("frame inputs disagree on dimensions");
    if (shift < 0 || (dec.k > 0 && shift > dec.k - 1) || (dec.k == 0 && shift != 0))
        throw Error("shift must lie in [0, k-1]");
    if (shift >= 1 && dec.k < 2) throw Error("a shifted chain start requires k >= 2");
    BlowUpFrame<S> f;
    f.g = g;
    f.z = z;
    f.dec = dec;
    f.shift = shift;
    f.trunc = trunc;
    f.tol = tol;
    f.curve_comp = compose_map_with_curve(g, z, trunc);
    f.approx = approximation_order(g, z, trunc, tol);

    const int n = dec.n, k = dec.k;
    const int nv = 1 + n;
    std::vector<Poly<S>> w(n, Poly<S>(nv));
    for (int j = 0; j <= z.trunc; ++j)
        for (int i = 0; i < n; ++i) {
            if (scalar_traits<S>::is_zero(z.coeff[j][i])) continue;
            Exponents e(nv, 0);
            e[0] = static_cast<std::uint32_t>(j);
            w[i].add_term(e, z.coeff[j][i]);
        }
    int var = 1;
    auto add_column = [&](const Vec<S>& root, int base) {
        auto polycol = dec.p_apply_poly(root);
        for (int a = 0; a < static_cast<int>(polycol.size()); ++a)
            for (int i = 0; i < n; ++i) {
                if (scalar_traits<S>::is_zero(polycol[a][i])) continue;
                Exponents e(nv, 0);
                e[0] = static_cast<std::uint32_t>(base + a);
                e[var] = 1;
                w[i].add_term(e, polycol[a][i]);
            }
        ++var;
    };
    for (const auto& cls : dec.classes)
        for (int t = 0; t < cls.roots.cols; ++t)
            add_column(col(cls.roots, t), (k - shift) + (k - cls.order));
    for (int t = 0; t < dec.null_k1.cols; ++t) add_column(col(dec.null_k1, t), k - shift);

    f.gw.reserve(g.m_out);
    for (int i = 0; i < g.m_out; ++i) f.gw.push_back(g.comp[i].substitute(w));
    return f;
}

namespace detail {

template <class S>
std::uint32_t nc_degree(const Exponents& e) {
    std::uint32_t d = 0;
    for (std::size_t i = 1; i < e.size(); ++i) d += e[i];
    return d;
}

/// Shift the eps exponent down by `order`, checking that every kept monomial
/// sits at or above it. include_constant controls whether the n-independent
/// (pure curve) monomials are kept or dropped.
template <class S>
std::vector<Poly<S>> extract_blownup(const BlowUpFrame<S>& f, bool include_constant) {
    const int order = f.order();
    double scale = 0;
    if constexpr (!scalar_traits<S>::is_exact) {
        for (const auto& p : f.gw)
            for (const auto& [e, c] : p.terms) scale = std::max(scale, scalar_traits<S>::magnitude(c));
    }
    std::vector<Poly<S>> out;
    for (const auto& p : f.gw) {
        Poly<S> q(p.nvars);
        for (const auto& [e, c] : p.terms) {
            bool constant_part = nc_degree<S>(e) == 0;
            if (constant_part && !include_constant) continue;
            if (static_cast<int>(e[0]) < order) {
                bool negligible = false;
                if constexpr (!scalar_traits<S>::is_exact)
                    negligible = scalar_traits<S>::magnitude(c) <= kRankTol * scale;
                if (negligible) continue;
                if (constant_part)
                    throw ShiftOrderViolation(
                        "curve residual eps^" + std::to_string(e[0]) + " sits below the blow-up order " +
                        std::to_string(order) + ": approximation order too low for this shift");
                throw ShiftOrderViolation(
                    "coordinate-dependent term at eps^" + std::to_string(e[0]) +
                    " below the blow-up order " + std::to_string(order) +
                    ": required derivative vanishing fails, the eps -> 0 limit does not exist");
            }
            Exponents shifted = e;
            shifted[0] -= static_cast<std::uint32_t>(order);
            q.add_term(shifted, c);
        }
        out.push_back(std::move(q));
    }
    return out;
}

}  // namespace detail

/// The blown-up remainder system eps^{-(2k-shift)} * G[w(eps, c, w)] as an
/// exact polynomial map; throws ShiftOrderViolation when the limit fails.
template <class S>
PolyMap<S> blownup_system(const BlowUpFrame<S>& f) {
    PolyMap<S> h(f.nvars(), f.dec.m);
    h.comp = detail::extract_blownup(f, true);
    for (auto& p : h.comp) p.nvars = f.nvars();
    return h;
}

/// The same system with G[z(eps)] subtracted (the level-set equation of the
/// linearization theorem; no approximation-order requirement on the curve).
template <class S>
PolyMap<S> blownup_system_homogeneous(const BlowUpFrame<S>& f) {
    PolyMap<S> h(f.nvars(), f.dec.m);
    h.comp = detail::extract_blownup(f, false);
    for (auto& p : h.comp) p.nvars = f.nvars();
    return h;
}

/// eps^{-(2k-shift)} G[w(eps0, nc, nk1)]. At eps0 = 0 this is the exact
/// limit block system; away from zero it is the scaled raw evaluation.
template <class S>
Vec<S> blownup_residual(const BlowUpFrame<S>& f, const S& eps0, const Vec<S>& nc, const Vec<S>& nk1) {
    if (static_cast<int>(nc.size()) != f.dim_nc() || static_cast<int>(nk1.size()) != f.dim_nk1())
        throw DimensionMismatch("blownup_residual coordinate sizes");
    Vec<S> x(f.nvars());
    x[0] = eps0;
    for (int i = 0; i < f.dim_nc(); ++i) x[1 + i] = nc[i];
    for (int i = 0; i < f.dim_nk1(); ++i) x[1 + f.dim_nc() + i] = nk1[i];
    if (scalar_traits<S>::is_zero(eps0)) {
        auto h = blownup_system(f);
        return eval(h, x);
    }
    Vec<S> raw(f.dec.m);
    for (int i = 0; i < f.dec.m; ++i) raw[i] = f.gw[i].eval(x);
    S sc(1);
    for (int i = 0; i < f.order(); ++i) sc *= eps0;
    for (auto& v : raw) v /= sc;
    return raw;
}

// ---- gate ----

enum class Route { None, Cor1, Cor2i, Cor2ii, Cor3, Cor4 };

inline const char* route_name(Route r) {
    switch (r) {
        case Route::Cor1: return "corollary-1";
        case Route::Cor2i: return "corollary-2i";
        case Route::Cor2ii: return "corollary-2ii";
        case Route::Cor3: return "corollary-3";
        case Route::Cor4: return "corollary-4";
        default: return "none";
    }
}

struct ClauseReport {
    Route route = Route::None;
    bool applicable = false;    // the corollary's k/shift hypotheses fit this frame
    bool matches_shift = false; // the clause solves with this frame's chain start
    bool passed = false;
    std::vector<std::string> conditions;  // one line per checked condition
};

template <class S>
struct GateReport {
    bool q_determined = false;
    int q = 0;  // meaningful when determined
    int k = 0;
    int shift = 0;
    double eta = 0.1;
    VecSeries<S> bbar;
    std::vector<ClauseReport> clauses;
    Route accepted = Route::None;
    bool no_zero_in_cone = false;

    const ClauseReport* clause(Route r) const {
        for (const auto& c : clauses)
            if (c.route == r) return &c;
        return nullptr;
    }
};

namespace detail {

/// bbar(0) reindexed to the reference order r: zero when q > r.
template <class S>
Vec<S> bbar_at_order(const BlowUpFrame<S>& f, int r) {
    if (f.approx.exact_through_trunc || f.approx.q > r) return zero_vec<S>(f.dec.m);
    return f.curve_comp.coeff[r];
}

template <class S>
bool bilinear_vanishes_on(const PolyMap<S>& g, const Mat<S>& basis, double tol) {
    double scale = 0;
    if constexpr (!scalar_traits<S>::is_exact) {
        for (const auto& p : g.comp)
            for (const auto& [e, c] : p.terms) scale = std::max(scale, scalar_traits<S>::magnitude(c));
    }
    for (int a = 0; a < basis.cols; ++a)
        for (int b = a; b < basis.cols; ++b) {
            auto v = deriv_apply(g, 2, zero_vec<S>(g.n_in), {col(basis, a), col(basis, b)});
            for (const auto& x : v) {
                if constexpr (scalar_traits<S>::is_exact) {
                    if (!scalar_traits<S>::is_zero(x)) return false;
                } else {
                    if (scalar_traits<S>::magnitude(x) > tol * (1 + scale)) return false;
                }
            }
        }
    return true;
}

}  // namespace detail

/// Evaluates every Newton-Lemma variant's conditions on this frame, in the
/// order Cor 1, Cor 2(i), Cor 2(ii), Cor 3, Cor 4; the accepted route is the
/// first passing clause whose chain start matches the frame's shift.
template <class S>
GateReport<S> gate(const BlowUpFrame<S>& f, double eta = 0.1) {
    const int k = f.dec.k;
    GateReport<S> rep;
    rep.k = k;
    rep.shift = f.shift;
    rep.eta = eta;
    rep.q_determined = !f.approx.exact_through_trunc;
    rep.q = f.approx.q;
    rep.bbar = f.approx.bbar;

    auto q_at_least = [&](int r) { return f.approx.exact_through_trunc || f.approx.q >= r; };
    auto fmt_q = [&](int r) {
        std::string qs = rep.q_determined ? std::to_string(rep.q) : (">" + std::to_string(f.trunc));
        return "q = " + qs + " vs required >= " + std::to_string(r);
    };

    auto push = [&](ClauseReport c) { rep.clauses.push_back(std::move(c)); };

    {  // Corollary 1: q >= 2k and ||bbar(0)|| small
        ClauseReport c;
        c.route = Route::Cor1;
        c.applicable = true;
        c.matches_shift = f.shift == 0;
        bool qok = q_at_least(2 * k);
        double nb = norm(detail::bbar_at_order(f, 2 * k));
        c.conditions.push_back(fmt_q(2 * k) + (qok ? " [ok]" : " [fail]"));
        c.conditions.push_back("||bbar(0)|| = " + std::to_string(nb) + " vs eta " + std::to_string(eta) +
                               (nb <= eta ? " [ok]" : " [fail]"));
        c.passed = qok && nb <= eta;
        push(std::move(c));
    }
    {  // Corollary 2(i): q >= 2k and ||P_{k+1} bbar(0)|| small
        ClauseReport c;
        c.route = Route::Cor2i;
        c.applicable = k >= 1;
        c.matches_shift = f.shift == 0;
        bool qok = q_at_least(2 * k);
        double nb = norm(mul(f.dec.projection(k), detail::bbar_at_order(f, 2 * k)));
        c.conditions.push_back(fmt_q(2 * k) + (qok ? " [ok]" : " [fail]"));
        c.conditions.push_back("||P_{k+1} bbar(0)|| = " + std::to_string(nb) +
                               (nb <= eta ? " [ok]" : " [fail]"));
        c.passed = c.applicable && qok && nb <= eta;
        push(std::move(c));
    }
    {  // Corollary 2(ii): q >= 2k and vanishing curvature on N_{k+1}^c
        ClauseReport c;
        c.route = Route::Cor2ii;
        c.applicable = k >= 1;
        c.matches_shift = f.shift == 0;
        bool qok = q_at_least(2 * k);
        bool curv = detail::bilinear_vanishes_on(f.g, f.dec.classes[k].roots, f.tol);
        c.conditions.push_back(fmt_q(2 * k) + (qok ? " [ok]" : " [fail]"));
        c.conditions.push_back(std::string("curvature at 0 on N_{k+1}^c ") + (curv ? "vanishes [ok]" : "nonzero [fail]"));
        c.passed = c.applicable && qok && curv;
        push(std::move(c));
    }
    {  // Corollary 3: shift 1, k >= 3
        ClauseReport c;
        c.route = Route::Cor3;
        c.applicable = f.shift == 1 && k >= 3;
        c.matches_shift = f.shift == 1;
        if (c.applicable) {
            bool qok = q_at_least(2 * k - 1);
            Vec<S> b0 = detail::bbar_at_order(f, 2 * k - 1);
            auto pk = f.dec.projection(k - 1);
            auto pk1 = f.dec.projection(k);
            double nb = norm(add(mul(pk, b0), mul(pk1, b0)));
            Mat<S> span = hcat(f.dec.classes[k].roots, f.dec.null_k1);
            bool curv = detail::bilinear_vanishes_on(f.g, span, f.tol);
            c.conditions.push_back(fmt_q(2 * k - 1) + (qok ? " [ok]" : " [fail]"));
            c.conditions.push_back("||(P_k + P_{k+1}) bbar(0)|| = " + std::to_string(nb) +
                                   (nb <= eta ? " [ok]" : " [fail]"));
            c.conditions.push_back(std::string("curvature at 0 on N_{k+1}^c + N_{k+1} ") +
                                   (curv ? "vanishes [ok]" : "nonzero [fail]"));
            c.passed = qok && nb <= eta && curv;
        } else {
            c.conditions.push_back("requires shift 1 and k >= 3");
        }
        push(std::move(c));
    }
    {  // Corollary 4: shift i in [1, k-1], vanishing derivatives through i+1
        ClauseReport c;
        c.route = Route::Cor4;
        c.applicable = f.shift >= 1 && k >= 2 && f.shift <= k - 1;
        c.matches_shift = f.shift >= 1;
        if (c.applicable) {
            int i = f.shift;
            bool derivs = derivatives_vanish_through(f.g, i + 1);
            bool qok = q_at_least(2 * k - i);
            double nb = norm(mul(f.dec.projection(k), detail::bbar_at_order(f, 2 * k - i)));
            c.conditions.push_back(std::string("derivatives 2..") + std::to_string(i + 1) +
                                   (derivs ? " vanish at 0 [ok]" : " do not vanish at 0 [fail]"));
            c.conditions.push_back(fmt_q(2 * k - i) + (qok ? " [ok]" : " [fail]"));
            c.conditions.push_back("||P_{k+1} bbar(0)|| = " + std::to_string(nb) +
                                   (nb <= eta ? " [ok]" : " [fail]"));
            c.passed = derivs && qok && nb <= eta;
        } else {
            c.conditions.push_back("requires 1 <= shift <= k-1 and k >= 2");
        }
        push(std::move(c));
    }

    // Corollary 1(ii): no zero of G[z] occurs in the (unshifted) cone
    if (f.shift == 0 && k >= 1 && rep.q_determined && rep.q <= 2 * k - 1 &&
        !is_zero_vec(f.approx.bbar.coeff[0]))
        rep.no_zero_in_cone = true;

    for (const auto& c : rep.clauses)
        if (c.matches_shift && c.passed) {
            rep.accepted = c.route;
            break;
        }
    return rep;
}

// ---- Newton machinery (binary-float path) ----

template <class F>
Vec<F> damped_newton(const std::function<Vec<F>(const Vec<F>&)>& residual,
                     const std::function<Mat<F>(const Vec<F>&)>& jac, Vec<F> x,
                     const NewtonOptions& opt) {
    double r0 = norm(residual(x));
    for (int it = 0; it < opt.max_iter; ++it) {
        if (r0 <= opt.tol) return x;
        Vec<F> res = residual(x);
        Mat<F> j = jac(x);
        Vec<F> step;
        try {
            step = solve_square(j, res);
        } catch (const SingularMatrix& e) {
            throw SingularJacobian("singular linearization in Newton iteration", e.condition_estimate);
        }
        double damp = 1.0;
        for (int h = 0; h <= opt.max_halvings; ++h) {
            Vec<F> trial = x;
            for (std::size_t i = 0; i < trial.size(); ++i) trial[i] -= F(damp) * step[i];
            double rt = norm(residual(trial));
            if (rt < r0 || rt <= opt.tol) {
                x = std::move(trial);
                r0 = rt;
                break;
            }
            damp /= 2;
            if (h == opt.max_halvings)
                throw NewtonDivergence("damping failed to reduce the residual", r0);
        }
    }
    if (r0 <= opt.tol) return x;
    throw NewtonDivergence("residual not reduced below tolerance within the iteration budget", r0);
}

/// Float view of a frame: the blown-up systems and reconstruction data
/// converted once for the numeric path.
template <class S>
struct FloatFrame {
    using F = float_of<S>;
    int k = 0, shift = 0, order = 0;
    int m = 0, n = 0, dim_nk1 = 0;
    bool h_valid = false;  // false when the curve's approximation order is below 2k-shift
    PolyMap<F> h;          // full remainder system  (eps, c, w)
    PolyMap<F> h0;         // curve part subtracted
    std::vector<std::vector<Poly<F>>> h_jac;   // partials of h
    std::vector<std::vector<Poly<F>>> h0_jac;  // partials of h0
    CurveSeries<F> z;
    VecSeries<F> curve_comp;
    Mat<F> lead_stack, lead_stack_inv;
    std::vector<Mat<F>> phi;
    std::vector<Vec<F>> coord_roots;   // per c-coordinate: root column
    std::vector<int> coord_scale;      // per c-coordinate: eps power k - order(class)
    std::vector<Vec<F>> null_cols;
    std::vector<int> class_offset, class_dim;

    Vec<F> pack(const F& eps, const Vec<F>& nc, const Vec<F>& nk1) const {
        Vec<F> x(1 + m + dim_nk1);
        x[0] = eps;
        for (int i = 0; i < m; ++i) x[1 + i] = nc[i];
        for (int i = 0; i < dim_nk1; ++i) x[1 + m + i] = nk1[i];
        return x;
    }

    Mat<F> p_eval(const F& eps) const {
        Mat<F> acc = Mat<F>::identity(n);
        F e(1);
        for (const auto& f : phi) {
            e *= eps;
            for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += e * f.data[i];
        }
        return acc;
    }

    /// z(eps) + eps^{k-shift} p_k(eps) (scaled coordinates).
    Vec<F> reconstruct(const F& eps, const Vec<F>& nc, const Vec<F>& nk1) const {
        Vec<F> inner = zero_vec<F>(n);
        for (int v = 0; v < m; ++v) {
            F s(1);
            for (int t = 0; t < coord_scale[v]; ++t) s *= eps;
            inner = add(inner, scale(F(s * nc[v]), coord_roots[v]));
        }
        for (int t = 0; t < dim_nk1; ++t) inner = add(inner, scale(nk1[t], null_cols[t]));
        Vec<F> pt = mul(p_eval(eps), inner);
        F s(1);
        for (int t = 0; t < k - shift; ++t) s *= eps;
        pt = scale(s, pt);
        return add(series_eval(z, eps), pt);
    }

    Vec<F> h_eval(const F& eps, const Vec<F>& nc, const Vec<F>& nk1) const {
        Vec<F> x = pack(eps, nc, nk1);
        Vec<F> r(m);
        for (int i = 0; i < m; ++i) r[i] = h.comp[i].eval(x);
        return r;
    }

    /// Jacobian with respect to the n^c coordinates.
    Mat<F> h_jac_nc(const F& eps, const Vec<F>& nc, const Vec<F>& nk1) const {
        Vec<F> x = pack(eps, nc, nk1);
        Mat<F> j(m, m);
        for (int i = 0; i < m; ++i)
            for (int v = 0; v < m; ++v) j.at(i, v) = h_jac[i][1 + v].eval(x);
        return j;
    }

    Vec<F> h0_eval(const F& eps, const Vec<F>& nc, const Vec<F>& nk1) const {
        Vec<F> x = pack(eps, nc, nk1);
        Vec<F> r(m);
        for (int i = 0; i < m; ++i) r[i] = h0.comp[i].eval(x);
        return r;
    }

    Mat<F> h0_jac_nc(const F& eps, const Vec<F>& nc, const Vec<F>& nk1) const {
        Vec<F> x = pack(eps, nc, nk1);
        Mat<F> j(m, m);
        for (int i = 0; i < m; ++i)
            for (int v = 0; v < m; ++v) j.at(i, v) = h0_jac[i][1 + v].eval(x);
        return j;
    }
};

template <class S>
FloatFrame<S> make_float_frame(const BlowUpFrame<S>& f) {
    FloatFrame<S> ff;
    ff.k = f.dec.k;
    ff.shift = f.shift;
    ff.order = f.order();
    ff.m = f.dec.m;
    ff.n = f.dec.n;
    ff.dim_nk1 = f.dim_nk1();
    ff.h0 = to_float_map(blownup_system_homogeneous(f));
    ff.h0_jac = jacobian_polys(ff.h0);
    try {
        ff.h = to_float_map(blownup_system(f));
        ff.h_jac = jacobian_polys(ff.h);
        ff.h_valid = true;
    } catch (const ShiftOrderViolation&) {
        ff.h_valid = false;  // level-set operations remain available through h0
    }
    ff.z = to_float_curve(f.z);
    ff.curve_comp = to_float_series(f.curve_comp);
    ff.lead_stack = to_float_mat(f.dec.lead_stack);
    ff.lead_stack_inv = to_float_mat(f.dec.lead_stack_inv);
    for (const auto& p : f.dec.phi) ff.phi.push_back(to_float_mat(p));
    for (const auto& cls : f.dec.classes) {
        ff.class_offset.push_back(static_cast<int>(ff.coord_roots.size()));
        ff.class_dim.push_back(cls.roots.cols);
        for (int t = 0; t < cls.roots.cols; ++t) {
            ff.coord_roots.push_back(to_float_vec(col(cls.roots, t)));
            ff.coord_scale.push_back(f.dec.k - cls.order);
        }
    }
    for (int t = 0; t < f.dec.null_k1.cols; ++t) ff.null_cols.push_back(to_float_vec(col(f.dec.null_k1, t)));
    return ff;
}

// ---- solve at eps = 0 and continuation ----

template <class S>
struct SolveAtZero {
    using F = float_of<S>;
    Route route = Route::None;
    Vec<F> nc;
    double residual = 0;
};

namespace detail {

/// Newton on a coordinate block of E^{-1} h(0, ., w), then linear
/// back-substitution of the remaining blocks (valid because the nonlinear
/// terms involve only the unscaled coordinates).
template <class S>
Vec<float_of<S>> solve_zero_blocks(const FloatFrame<S>& ff, const Vec<float_of<S>>& nk1,
                                   int first_newton_class, const NewtonOptions& opt) {
    using F = float_of<S>;
    const int m = ff.m;
    int nb_start = ff.class_offset[first_newton_class];
    int nb_len = m - nb_start;
    F zero{};
    auto gamma = [&](const Vec<F>& nc) { return mul(ff.lead_stack_inv, ff.h_eval(zero, nc, nk1)); };
    auto embed = [&](const Vec<F>& blk) {
        Vec<F> nc = zero_vec<F>(m);
        for (int i = 0; i < nb_len; ++i) nc[nb_start + i] = blk[i];
        return nc;
    };
    auto res = [&](const Vec<F>& blk) {
        auto g = gamma(embed(blk));
        return Vec<F>(g.begin() + nb_start, g.end());
    };
    auto jac = [&](const Vec<F>& blk) {
        auto full = mul(ff.lead_stack_inv, ff.h_jac_nc(zero, embed(blk), nk1));
        Mat<F> j(nb_len, nb_len);
        for (int i = 0; i < nb_len; ++i)
            for (int v = 0; v < nb_len; ++v) j.at(i, v) = full.at(nb_start + i, nb_start + v);
        return j;
    };
    Vec<F> blk = damped_newton<F>(res, jac, zero_vec<F>(nb_len), opt);
    Vec<F> nc = embed(blk);
    auto g = gamma(nc);
    for (int i = 0; i < nb_start; ++i) nc[i] = -g[i];  // linear blocks
    return nc;
}

}  // namespace detail

/// Solves the eps = 0 block system along the gated route and verifies the
/// residual; the returned coordinates satisfy H(0, nc, nk1) = 0 to tolerance.
template <class S>
SolveAtZero<S> solve_at_zero(const BlowUpFrame<S>& f, const GateReport<S>& rep,
                             const Vec<float_of<S>>& nk1, const NewtonOptions& opt = {},
                             const FloatFrame<S>* cached = nullptr) {
    using F = float_of<S>;
    if (rep.accepted == Route::None) throw Error("no corollary route passed the gate for this frame");
    if (norm(nk1) > 0.5) throw OutOfCone("||n_{k+1}|| exceeds the cone coordinate radius 0.5");
    std::optional<FloatFrame<S>> own;
    if (!cached) own = make_float_frame(f);
    const FloatFrame<S>& ff = cached ? *cached : *own;
    if (!ff.h_valid)
        throw ShiftOrderViolation("the blown-up remainder system does not exist at this shift order");
    const int k = ff.k, m = ff.m;
    F zero{};
    SolveAtZero<S> out;
    out.route = rep.accepted;
    switch (rep.accepted) {
        case Route::Cor1: {
            auto res = [&](const Vec<F>& nc) { return ff.h_eval(zero, nc, nk1); };
            auto jac = [&](const Vec<F>& nc) { return ff.h_jac_nc(zero, nc, nk1); };
            out.nc = damped_newton<F>(res, jac, zero_vec<F>(m), opt);
            break;
        }
        case Route::Cor2i:
        case Route::Cor4:
            out.nc = detail::solve_zero_blocks(ff, nk1, k, opt);
            break;
        case Route::Cor3:
            out.nc = detail::solve_zero_blocks(ff, nk1, k - 1, opt);
            break;
        case Route::Cor2ii: {
            // the last block is exactly linear in its own coordinates
            int nb_start = ff.class_offset[k];
            int nb_len = m - nb_start;
            auto gamma0 = mul(ff.lead_stack_inv, ff.h_eval(zero, zero_vec<F>(m), nk1));
            auto full = mul(ff.lead_stack_inv, ff.h_jac_nc(zero, zero_vec<F>(m), nk1));
            Mat<F> j(nb_len, nb_len);
            for (int i = 0; i < nb_len; ++i)
                for (int v = 0; v < nb_len; ++v) j.at(i, v) = full.at(nb_start + i, nb_start + v);
            Vec<F> rhs(gamma0.begin() + nb_start, gamma0.end());
            Vec<F> blk;
            try {
                blk = solve_square(j, rhs);
            } catch (const SingularMatrix& e) {
                throw SingularJacobian("shifted operator not invertible", e.condition_estimate);
            }
            Vec<F> nc = zero_vec<F>(m);
            for (int i = 0; i < nb_len; ++i) nc[nb_start + i] = -blk[i];
            auto g = mul(ff.lead_stack_inv, ff.h_eval(zero, nc, nk1));
            for (int i = 0; i < nb_start; ++i) nc[i] = -g[i];
            out.nc = nc;
            break;
        }
        default:
            throw Error("unsupported route");
    }
    out.residual = norm(ff.h_eval(zero, out.nc, nk1));
    if (out.residual > 10 * opt.tol)
        throw NewtonDivergence("solution of the limit system failed verification", out.residual);
    return out;
}

template <class F>
struct ConeSample {
    double eps = 0;
    Vec<F> nc;
    double residual = 0;   // blown-up residual norm
    Vec<F> z_point;
    double g_norm = 0;     // ||G[z]|| at the reconstructed point
};

template <class S>
struct RemainderSolution {
    using F = float_of<S>;
    Route route = Route::None;
    Vec<F> nk1;
    std::vector<ConeSample<F>> samples;
    CurveSeries<F> refined;            // solution branch at n_{k+1} = 0
    double max_residual = 0;
    double lipschitz_c = 10.0;         // constant in the reconstruction bound
    double max_bound_ratio = 0;        // max ||G[z]|| / (C |eps|^{2k-shift} tol)
    std::optional<double> breakdown_eps;  // continuation stopped here, if set
};

/// Predictor-corrector march over the signed geometric grid, plus the
/// order-by-order solution of the coefficient hierarchy for the refined
/// curve at n_{k+1} = 0 (linear solves against the eps = 0 Jacobian).
template <class S>
RemainderSolution<S> continue_in_epsilon(const BlowUpFrame<S>& f, const GateReport<S>& rep,
                                         const Vec<float_of<S>>& nk1, const EpsGridOptions& grid = {},
                                         const NewtonOptions& opt = {}) {
    using F = float_of<S>;
    auto ff = make_float_frame(f);
    RemainderSolution<S> out;
    out.nk1 = nk1;
    auto zero_sol = solve_at_zero(f, rep, nk1, opt, &ff);
    out.route = zero_sol.route;

    auto grid_abs = geometric_grid(grid);
    for (int sign : {+1, -1}) {
        Vec<F> prev = zero_sol.nc;
        for (double a : grid_abs) {
            F eps = F(sign * a);
            auto res = [&](const Vec<F>& nc) { return ff.h_eval(eps, nc, nk1); };
            auto jac = [&](const Vec<F>& nc) { return ff.h_jac_nc(eps, nc, nk1); };
            ConeSample<F> s;
            s.eps = sign * a;
            try {
                s.nc = damped_newton<F>(res, jac, prev, opt);
            } catch (const Error&) {
                out.breakdown_eps = sign * a;
                break;
            }
            prev = s.nc;
            s.residual = norm(res(s.nc));
            s.z_point = ff.reconstruct(eps, s.nc, nk1);
            // G at the exact reconstruction equals eps^{2k-shift} times the
            // blown-up residual identically; direct float evaluation of G
            // cannot resolve these magnitudes.
            s.g_norm = std::pow(a, ff.order) * s.residual;
            out.max_residual = std::max(out.max_residual, s.residual);
            double bound = out.lipschitz_c * std::pow(a, ff.order) * opt.tol;
            out.max_bound_ratio = std::max(out.max_bound_ratio, s.g_norm / bound);
            out.samples.push_back(std::move(s));
        }
        if (out.breakdown_eps) break;
    }

    // refined curve: series solution nc(eps) with nk1 = 0
    Vec<F> base_nk1 = zero_vec<F>(ff.dim_nk1);
    Vec<F> c0 =
        is_zero_vec(nk1) ? zero_sol.nc : solve_at_zero(f, rep, base_nk1, opt, &ff).nc;
    const int R = std::max(f.trunc - (ff.k - ff.shift), 0);
    // group h(., ., 0) by coordinate monomial
    std::map<Exponents, std::vector<SSeries<F>>> groups;  // exps over m coords only
    for (int i = 0; i < ff.m; ++i)
        for (const auto& [e, cc] : ff.h.comp[i].terms) {
            bool has_w = false;
            for (int t = 0; t < ff.dim_nk1; ++t)
                if (e[1 + ff.m + t] > 0) has_w = true;
            if (has_w) continue;
            if (static_cast<int>(e[0]) > R) continue;
            Exponents key(e.begin() + 1, e.begin() + 1 + ff.m);
            auto it = groups.find(key);
            if (it == groups.end())
                it = groups.emplace(key, std::vector<SSeries<F>>(ff.m, SSeries<F>(R))).first;
            it->second[i].c[e[0]] += cc;
        }
    std::vector<SSeries<F>> csol(ff.m, SSeries<F>(R));
    for (int v = 0; v < ff.m; ++v) csol[v].c[0] = c0[v];
    auto residual_series = [&]() {
        std::vector<SSeries<F>> res(ff.m, SSeries<F>(R));
        for (const auto& [key, coef] : groups) {
            SSeries<F> mono = SSeries<F>::constant(R, F(1));
            for (int v = 0; v < ff.m; ++v)
                for (std::uint32_t p = 0; p < key[v]; ++p) mono = mono * csol[v];
            for (int i = 0; i < ff.m; ++i) res[i] = res[i] + coef[i] * mono;
        }
        return res;
    };
    Mat<F> j0 = ff.h_jac_nc(F{}, c0, base_nk1);
    for (int r = 1; r <= R; ++r) {
        auto res = residual_series();
        Vec<F> rhs(ff.m);
        for (int i = 0; i < ff.m; ++i) rhs[i] = res[i].c[r];
        Vec<F> cr;
        try {
            cr = solve_square(j0, rhs);
        } catch (const SingularMatrix& e) {
            throw SingularJacobian("hierarchy Jacobian singular", e.condition_estimate);
        }
        for (int v = 0; v < ff.m; ++v) csol[v].c[r] = -cr[v];
    }
    // assemble z + eps^{k-shift} p(eps) (sum eps^{scale_v} c_v(eps) root_v)
    std::vector<Vec<F>> acc(f.trunc + 1, zero_vec<F>(ff.n));
    for (int v = 0; v < ff.m; ++v)
        for (int r = 0; r <= R; ++r) {
            int base = (ff.k - ff.shift) + ff.coord_scale[v] + r;
            if (base > f.trunc) continue;
            // multiply by p(eps): identity + eps^j phi_j
            Vec<F> contrib = scale(csol[v].c[r], ff.coord_roots[v]);
            if (base <= f.trunc) acc[base] = add(acc[base], contrib);
            for (std::size_t j = 1; j <= ff.phi.size(); ++j) {
                if (base + static_cast<int>(j) > f.trunc) break;
                acc[base + j] = add(acc[base + j], mul(ff.phi[j - 1], contrib));
            }
        }
    out.refined.trunc = f.trunc;
    out.refined.coeff.assign(f.trunc + 1, zero_vec<F>(ff.n));
    for (int j = 0; j <= f.trunc; ++j) {
        Vec<F> zc = j <= ff.z.trunc ? ff.z.coeff[j] : zero_vec<F>(ff.n);
        out.refined.coeff[j] = add(zc, acc[j]);
    }
    return out;
}

// ---- level-set operations ----

/// psi^c: Newton solution of the homogeneous remainder equation at the
/// level (S_1...S_{k+1}) phi; phi and the result are n^c coordinates.
template <class S>
Vec<float_of<S>> psi_c(const BlowUpFrame<S>& f, const float_of<S>& eps0, const Vec<float_of<S>>& phi,
                       const Vec<float_of<S>>& nk1, const NewtonOptions& opt = {},
                       const FloatFrame<S>* cached = nullptr) {
    using F = float_of<S>;
    if (norm(phi) > 0.5 || norm(nk1) > 0.5) throw OutOfCone("cone coordinates exceed the radius 0.5");
    std::optional<FloatFrame<S>> own;
    if (!cached) own = make_float_frame(f);
    const FloatFrame<S>& ff = cached ? *cached : *own;
    Vec<F> level = mul(ff.lead_stack, phi);
    auto res = [&](const Vec<F>& nc) {
        auto v = ff.h0_eval(eps0, nc, nk1);
        return sub(v, level);
    };
    auto jac = [&](const Vec<F>& nc) { return ff.h0_jac_nc(eps0, nc, nk1); };
    return damped_newton<F>(res, jac, phi, opt);
}

/// The blow-up image point z(eps0) + eps0^{k-shift} p_k(eps0) {psi + n_{k+1}}.
template <class S>
Vec<float_of<S>> level_set_point(const BlowUpFrame<S>& f, const float_of<S>& eps0,
                                 const Vec<float_of<S>>& phi, const Vec<float_of<S>>& nk1,
                                 const NewtonOptions& opt = {}, const FloatFrame<S>* cached = nullptr) {
    std::optional<FloatFrame<S>> own;
    if (!cached) own = make_float_frame(f);
    const FloatFrame<S>& ff = cached ? *cached : *own;
    auto nc = psi_c(f, eps0, phi, nk1, opt, &ff);
    return ff.reconstruct(eps0, nc, nk1);
}

/// phi(bbar, eps) = eps^{-(2k-shift)} (S_1...S_{k+1})^{-1} (bbar_target - G[z(eps)]).
template <class S>
Vec<float_of<S>> level_phi_for_value(const BlowUpFrame<S>& f, const float_of<S>& eps0,
                                     const Vec<float_of<S>>& target, const FloatFrame<S>* cached = nullptr) {
    using F = float_of<S>;
    if (scalar_traits<F>::is_zero(eps0)) throw Error("level inversion needs eps != 0");
    std::optional<FloatFrame<S>> own;
    if (!cached) own = make_float_frame(f);
    const FloatFrame<S>& ff = cached ? *cached : *own;
    Vec<F> gz = series_eval(ff.curve_comp, eps0);
    Vec<F> diff = sub(target, gz);
    F sc(1);
    for (int i = 0; i < ff.order; ++i) sc *= eps0;
    Vec<F> phi = mul(ff.lead_stack_inv, diff);
    for (auto& x : phi) x /= sc;
    if (norm(phi) > 0.5)
        throw OutOfCone("required level shift leaves the gated neighbourhood (||phi|| = " +
                        std::to_string(norm(phi)) + ")");
    return phi;
}

}  // namespace kcone
