#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "kcone/linalg.hpp"
#include "kcone/scalar.hpp"

namespace kcone {

struct ZeroMapError : Error {
    using Error::Error;
};

using Exponents = std::vector<std::uint32_t>;

inline std::uint32_t total_degree(const Exponents& e) {
    return std::accumulate(e.begin(), e.end(), std::uint32_t{0});
}

/// Sparse multivariate polynomial, normalized: no zero coefficients stored,
/// one entry per exponent tuple (lexicographically ordered map).
template <class S>
struct Poly {
    int nvars = 0;
    std::map<Exponents, S> terms;

    explicit Poly(int n = 0) : nvars(n) {}

    static Poly monomial(int nvars, Exponents e, S c) {
        Poly p(nvars);
        if (static_cast<int>(e.size()) != nvars) throw DimensionMismatch("monomial exponent arity");
        if (!scalar_traits<S>::is_zero(c)) p.terms.emplace(std::move(e), std::move(c));
        return p;
    }

    static Poly constant(int nvars, S c) { return monomial(nvars, Exponents(nvars, 0), std::move(c)); }

    static Poly variable(int nvars, int i) {
        Exponents e(nvars, 0);
        e[i] = 1;
        return monomial(nvars, std::move(e), S(1));
    }

    bool is_zero() const { return terms.empty(); }

    void add_term(const Exponents& e, const S& c) {
        auto it = terms.find(e);
        if (it == terms.end()) {
            if (!scalar_traits<S>::is_zero(c)) terms.emplace(e, c);
        } else {
            it->second += c;
            if (scalar_traits<S>::is_zero(it->second)) terms.erase(it);
        }
    }

    friend Poly operator+(const Poly& a, const Poly& b) {
        Poly r = a;
        for (const auto& [e, c] : b.terms) r.add_term(e, c);
        return r;
    }
    friend Poly operator-(const Poly& a, const Poly& b) {
        Poly r = a;
        for (const auto& [e, c] : b.terms) r.add_term(e, -c);
        return r;
    }
    friend Poly operator*(const Poly& a, const Poly& b) {
        Poly r(a.nvars);
        for (const auto& [ea, ca] : a.terms)
            for (const auto& [eb, cb] : b.terms) {
                Exponents e = ea;
                for (int i = 0; i < r.nvars; ++i) e[i] += eb[i];
                r.add_term(e, ca * cb);
            }
        return r;
    }
    friend Poly operator*(const S& c, const Poly& a) {
        Poly r(a.nvars);
        for (const auto& [e, x] : a.terms) r.add_term(e, c * x);
        return r;
    }
    friend Poly operator-(const Poly& a) { return S(-1) * a; }

    S eval(const Vec<S>& x) const {
        if (static_cast<int>(x.size()) != nvars) throw DimensionMismatch("poly eval arity");
        S acc{};
        for (const auto& [e, c] : terms) {
            S t = c;
            for (int i = 0; i < nvars; ++i)
                for (std::uint32_t p = 0; p < e[i]; ++p) t *= x[i];
            acc += t;
        }
        return acc;
    }

    Poly derivative(int var) const {
        Poly r(nvars);
        for (const auto& [e, c] : terms) {
            if (e[var] == 0) continue;
            Exponents d = e;
            d[var] -= 1;
            r.add_term(d, S(static_cast<int>(e[var])) * c);
        }
        return r;
    }

    /// Directional-derivative contraction: sum_i dir[i] * d/dx_i.
    Poly contract(const Vec<S>& dir) const {
        if (static_cast<int>(dir.size()) != nvars) throw DimensionMismatch("contract arity");
        Poly r(nvars);
        for (int i = 0; i < nvars; ++i) {
            if (scalar_traits<S>::is_zero(dir[i])) continue;
            r = r + dir[i] * derivative(i);
        }
        return r;
    }

    /// Minimal total degree of stored monomials; -1 on the zero polynomial.
    int min_degree() const {
        int m = -1;
        for (const auto& [e, c] : terms) {
            int d = static_cast<int>(total_degree(e));
            if (m < 0 || d < m) m = d;
        }
        return m;
    }

    int max_degree() const {
        int m = -1;
        for (const auto& [e, c] : terms) m = std::max(m, static_cast<int>(total_degree(e)));
        return m;
    }

    /// Substitute args[i] for variable i; all args share one variable set.
    Poly substitute(const std::vector<Poly>& args) const {
        if (static_cast<int>(args.size()) != nvars) throw DimensionMismatch("substitute arity");
        int n_new = args.empty() ? 0 : args[0].nvars;
        // memoized powers of each argument
        std::vector<std::vector<Poly>> pow(nvars, {Poly::constant(n_new, S(1))});
        auto power = [&](int i, std::uint32_t p) -> const Poly& {
            auto& tab = pow[i];
            while (tab.size() <= p) tab.push_back(tab.back() * args[i]);
            return tab[p];
        };
        Poly r(n_new);
        for (const auto& [e, c] : terms) {
            Poly t = Poly::constant(n_new, c);
            for (int i = 0; i < nvars; ++i)
                if (e[i] > 0) t = t * power(i, e[i]);
            r = r + t;
        }
        return r;
    }

    template <class F>
    Poly<std::invoke_result_t<F, S>> map_coeffs(F&& f) const {
        Poly<std::invoke_result_t<F, S>> r(nvars);
        for (const auto& [e, c] : terms) r.add_term(e, f(c));
        return r;
    }
};

/// A polynomial map G: K^n -> K^m held as exact monomial lists per component.
template <class S>
struct PolyMap {
    int n_in = 0;
    int m_out = 0;
    std::vector<Poly<S>> comp;

    PolyMap() = default;
    PolyMap(int n, int m) : n_in(n), m_out(m), comp(m, Poly<S>(n)) {}

    bool is_zero() const {
        for (const auto& p : comp)
            if (!p.is_zero()) return false;
        return true;
    }
};

template <class S>
Vec<S> eval(const PolyMap<S>& g, const Vec<S>& x) {
    if (static_cast<int>(x.size()) != g.n_in) throw DimensionMismatch("eval: point dimension");
    Vec<S> r(g.m_out);
    for (int i = 0; i < g.m_out; ++i) r[i] = g.comp[i].eval(x);
    return r;
}

/// The m x n matrix of first-partial polynomials.
template <class S>
std::vector<std::vector<Poly<S>>> jacobian_polys(const PolyMap<S>& g) {
    std::vector<std::vector<Poly<S>>> j(g.m_out, std::vector<Poly<S>>(g.n_in, Poly<S>(g.n_in)));
    for (int i = 0; i < g.m_out; ++i)
        for (int v = 0; v < g.n_in; ++v) j[i][v] = g.comp[i].derivative(v);
    return j;
}

template <class S>
Mat<S> jacobian(const PolyMap<S>& g, const Vec<S>& x) {
    if (static_cast<int>(x.size()) != g.n_in) throw DimensionMismatch("jacobian: point dimension");
    Mat<S> m(g.m_out, g.n_in);
    for (int i = 0; i < g.m_out; ++i)
        for (int v = 0; v < g.n_in; ++v) m.at(i, v) = g.comp[i].derivative(v).eval(x);
    return m;
}

/// Handle for order-th derivative tensors of a map at a point; apply() gives
/// the raw symmetric application D^order G[x].(d1,...,d_order) without any
/// factorial normalization.
template <class S>
struct DerivTensor {
    const PolyMap<S>* base;
    int order;
    Vec<S> point;

    DerivTensor(const PolyMap<S>& g, int ord, Vec<S> x) : base(&g), order(ord), point(std::move(x)) {
        if (ord < 1) throw Error("derivative order must be >= 1");
        if (static_cast<int>(point.size()) != g.n_in) throw DimensionMismatch("deriv point dimension");
    }

    Vec<S> apply(const std::vector<Vec<S>>& dirs) const {
        if (static_cast<int>(dirs.size()) != order) throw DimensionMismatch("deriv_apply: direction count");
        Vec<S> r(base->m_out);
        for (int i = 0; i < base->m_out; ++i) {
            Poly<S> p = base->comp[i];
            for (const auto& d : dirs) p = p.contract(d);
            r[i] = p.eval(point);
        }
        return r;
    }
};

template <class S>
Vec<S> deriv_apply(const PolyMap<S>& g, int order, const Vec<S>& x, const std::vector<Vec<S>>& dirs) {
    return DerivTensor<S>(g, order, x).apply(dirs);
}

/// ord(G): minimal total degree over all stored monomials.
template <class S>
int ord_of_map(const PolyMap<S>& g) {
    int m = -1;
    for (const auto& p : g.comp) {
        int d = p.min_degree();
        if (d >= 0 && (m < 0 || d < m)) m = d;
    }
    if (m < 0) throw ZeroMapError("ord of the zero map");
    return m;
}

template <class S>
int deg_of_map(const PolyMap<S>& g) {
    int m = 0;
    for (const auto& p : g.comp) m = std::max(m, p.max_degree());
    return m;
}

/// Whether all derivative tensors G^(2)[0],...,G^(tau)[0] vanish, i.e. the
/// map carries no monomials of total degree in [2, tau].
template <class S>
bool derivatives_vanish_through(const PolyMap<S>& g, int tau) {
    for (const auto& p : g.comp)
        for (const auto& [e, c] : p.terms) {
            int d = static_cast<int>(total_degree(e));
            if (d >= 2 && d <= tau) return false;
        }
    return true;
}

/// G + alpha * sum of tau-linear perturbation tensors, each given as a
/// homogeneous polynomial map of degree tau.
template <class S>
PolyMap<S> perturb_map(const PolyMap<S>& g, const S& alpha, const std::vector<PolyMap<S>>& tensors) {
    PolyMap<S> r = g;
    for (const auto& t : tensors) {
        if (t.n_in != g.n_in || t.m_out != g.m_out) throw DimensionMismatch("perturb tensor shape");
        for (int i = 0; i < g.m_out; ++i)
            for (const auto& [e, c] : t.comp[i].terms) r.comp[i].add_term(e, alpha * c);
    }
    return r;
}

template <class S>
PolyMap<float_of<S>> to_float_map(const PolyMap<S>& g) {
    PolyMap<float_of<S>> r(g.n_in, g.m_out);
    for (int i = 0; i < g.m_out; ++i)
        r.comp[i] = g.comp[i].map_coeffs([](const S& c) { return to_float_scalar(c); });
    return r;
}

}  // namespace kcone
