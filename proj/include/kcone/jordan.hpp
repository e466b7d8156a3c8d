#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kcone/linalg.hpp"
#include "kcone/series.hpp"

namespace kcone {

struct InconsistentK : Error {
    using Error::Error;
};

/// A chain (b_0,...,b_j) annihilating L(eps)*b(eps) through order j-1 and
/// producing `leading` as the order-j coefficient.
template <class S>
struct JordanChain {
    int order = 0;
    std::vector<Vec<S>> elems;
    Vec<S> leading;
};

template <class S>
struct FiltrationStep {
    Mat<S> basis;  // accumulated leading-coefficient space W_j
    std::vector<JordanChain<S>> new_chains;
};

/// The monotone filtration W_0 <= W_1 <= ... of achievable leading
/// coefficients, with witnessing chains for each new direction.
template <class S>
struct LeadingFiltration {
    int m = 0;
    std::vector<FiltrationStep<S>> steps;  // index = order j
    std::optional<int> k;                  // first j with W_j = K^m, if reached

    std::vector<int> dims() const {
        std::vector<int> d;
        for (const auto& s : steps) d.push_back(s.basis.cols);
        return d;
    }
};

namespace detail {

/// Block rows l = 0..rows-1 of the lower-triangular block-Toeplitz system in
/// the unknowns (b_0;...;b_cols-1): row block l, column block j holds L_{l-j}.
template <class S>
Mat<S> toeplitz_rows(const MatSeries<S>& l, int row_blocks, int col_blocks) {
    const int m = l.rows(), n = l.cols();
    Mat<S> a(row_blocks * m, col_blocks * n);
    for (int rb = 0; rb < row_blocks; ++rb)
        for (int cb = 0; cb <= rb && cb < col_blocks; ++cb) {
            int idx = rb - cb;
            if (idx > l.trunc) continue;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) a.at(rb * m + i, cb * n + j) = l.coeff[idx].at(i, j);
        }
    return a;
}

template <class S>
Mat<S> sub_mat(const Mat<S>& a, const Mat<S>& b) {
    Mat<S> r = a;
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
    return r;
}

}  // namespace detail

/// Brute-force characterization of W_j: image of the order-j block row of
/// the Toeplitz system restricted to chains annihilating all lower orders.
template <class S>
LeadingFiltration<S> leading_filtration(const MatSeries<S>& l, int max_k, double tol = kRankTol) {
    if (max_k > l.trunc) throw Error("leading_filtration: max_k exceeds series truncation");
    const int m = l.rows(), n = l.cols();
    LeadingFiltration<S> f;
    f.m = m;
    Mat<S> w(m, 0);
    for (int j = 0; j <= max_k; ++j) {
        Mat<S> lower = detail::toeplitz_rows(l, j, j + 1);
        Mat<S> ns = nullspace(lower, tol);
        // order-j row applied to the annihilating chains
        Mat<S> row(m, (j + 1) * n);
        for (int cb = 0; cb <= j; ++cb) {
            int idx = j - cb;
            if (idx > l.trunc) continue;
            for (int i = 0; i < m; ++i)
                for (int c = 0; c < n; ++c) row.at(i, cb * n + c) = l.coeff[idx].at(i, c);
        }
        Mat<S> cand = mul(row, ns);
        FiltrationStep<S> step;
        auto chosen = extend_basis(w, cand, tol);
        for (int t : chosen) {
            JordanChain<S> ch;
            ch.order = j;
            ch.leading = col(cand, t);
            Vec<S> v = col(ns, t);
            for (int cb = 0; cb <= j; ++cb)
                ch.elems.emplace_back(v.begin() + cb * n, v.begin() + (cb + 1) * n);
            w = hcat(w, from_cols<S>({ch.leading}, m));
            step.new_chains.push_back(std::move(ch));
        }
        step.basis = w;
        f.steps.push_back(std::move(step));
        if (w.cols == m) {
            f.k = j;
            break;
        }
    }
    return f;
}

/// Outcome of the surjectivity-order search.
template <class S>
struct SurjectivityResult {
    enum class Status { Found, Stabilized, Exhausted } status = Status::Exhausted;
    std::optional<int> k;
    LeadingFiltration<S> filtration;

    bool found() const { return status == Status::Found; }
};

template <class S>
int default_max_k(const MatSeries<S>& l) {
    return std::min(l.trunc, l.rows() * l.cols() + 2);
}

/// Minimal k with W_k = K^m; otherwise reports whether the filtration
/// stopped growing strictly below K^m or was still growing at max_k.
template <class S>
SurjectivityResult<S> surjectivity_order(const MatSeries<S>& l, int max_k, double tol = kRankTol) {
    SurjectivityResult<S> r;
    r.filtration = leading_filtration(l, max_k, tol);
    if (r.filtration.k) {
        r.status = SurjectivityResult<S>::Status::Found;
        r.k = r.filtration.k;
        return r;
    }
    auto d = r.filtration.dims();
    if (d.size() >= 2 && d[d.size() - 1] == d[d.size() - 2])
        r.status = SurjectivityResult<S>::Status::Stabilized;
    else
        r.status = SurjectivityResult<S>::Status::Exhausted;
    return r;
}

/// One rank class of the decomposition: roots span N_{order+1}^c and leads
/// span R_{order+1}; the leads matrix is the literal matrix of S_{order+1}
/// on root coordinates.
template <class S>
struct ConeClass {
    int order = 0;
    Mat<S> roots;  // n x d
    Mat<S> leads;  // m x d
};

template <class S>
struct ConeDecomposition {
    int k = 0;
    int n = 0, m = 0;
    std::vector<ConeClass<S>> classes;  // indexed by order 0..k (possibly zero-dim)
    Mat<S> null_k1;                     // N_{k+1} basis, n x (n-m)
    std::vector<Mat<S>> phi;            // phi[j-1] = coefficient of eps^j in p_k, j = 1..k
    Mat<S> lead_stack;                  // E = [R_1 | ... | R_{k+1}] columns, m x m
    Mat<S> lead_stack_inv;
    Mat<S> root_stack;                  // Z = [N_1^c | ... | N_{k+1}^c | N_{k+1}], n x n
    Mat<S> root_stack_inv;

    std::vector<int> class_dims() const {
        std::vector<int> d;
        for (const auto& c : classes) d.push_back(c.roots.cols);
        return d;
    }

    int dim_null() const { return null_k1.cols; }

    /// Projection onto R_{order+1} along the complementary sum.
    Mat<S> projection(int order) const {
        Mat<S> sel(m, m);
        int off = 0;
        for (const auto& c : classes) {
            for (int t = 0; t < c.leads.cols; ++t, ++off)
                if (c.order == order) sel.at(off, off) = S(1);
        }
        return mul(lead_stack, mul(sel, lead_stack_inv));
    }

    /// p_k(eps) evaluated at a point.
    Mat<S> p_eval(const S& eps) const {
        Mat<S> acc = Mat<S>::identity(n);
        S e(1);
        for (const auto& f : phi) {
            e *= eps;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) acc.at(i, j) += e * f.at(i, j);
        }
        return acc;
    }

    /// p_k(eps) * v as polynomial coefficients in eps (degree <= k).
    std::vector<Vec<S>> p_apply_poly(const Vec<S>& v) const {
        std::vector<Vec<S>> out;
        out.push_back(v);
        for (const auto& f : phi) out.push_back(mul(f, v));
        return out;
    }
};

template <class S>
struct DecompositionCheck {
    bool ok = true;
    std::vector<std::string> failures;

    void fail(std::string why) {
        ok = false;
        failures.push_back(std::move(why));
    }
};

/// Standalone re-check of every decomposition invariant directly from (L, d),
/// independent of the construction path.
template <class S>
DecompositionCheck<S> verify_decomposition(const MatSeries<S>& l, const ConeDecomposition<S>& d,
                                           double tol = kRankTol) {
    DecompositionCheck<S> chk;
    const int n = d.n, m = d.m;
    auto near_zero = [&](double x, double scale) {
        if constexpr (scalar_traits<S>::is_exact)
            return x == 0.0;
        else
            return x <= tol * std::max(scale, 1.0);
    };

    int sum_c = 0, sum_r = 0;
    for (const auto& c : d.classes) {
        sum_c += c.roots.cols;
        sum_r += c.leads.cols;
        if (c.roots.cols != c.leads.cols) chk.fail("class rank mismatch between roots and leads");
    }
    if (sum_c + d.null_k1.cols != n) chk.fail("domain dimensions do not sum to n");
    if (sum_r != m) chk.fail("image dimensions do not sum to m");
    if (rank(d.root_stack, tol) != n) chk.fail("domain basis is not a direct sum");
    if (rank(d.lead_stack, tol) != m) chk.fail("image basis is not a direct sum");
    for (const auto& c : d.classes)
        if (c.leads.cols > 0 && rank(c.leads, tol) != c.leads.cols)
            chk.fail("S_" + std::to_string(c.order + 1) + " is not invertible onto its range");

    // projections: idempotent, mutually annihilating, summing to the identity
    std::vector<Mat<S>> projs;
    for (const auto& c : d.classes) projs.push_back(d.projection(c.order));
    Mat<S> sum(m, m);
    for (std::size_t a = 0; a < projs.size(); ++a) {
        Mat<S> diff = detail::sub_mat(mul(projs[a], projs[a]), projs[a]);
        if (!near_zero(max_magnitude(diff), max_magnitude(projs[a]))) chk.fail("projection not idempotent");
        for (std::size_t b = 0; b < projs.size(); ++b) {
            if (a == b) continue;
            if (!near_zero(max_magnitude(mul(projs[a], projs[b])), max_magnitude(projs[a])))
                chk.fail("projections not mutually annihilating");
        }
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) sum.at(i, j) += projs[a].at(i, j);
    }
    {
        Mat<S> diff = detail::sub_mat(sum, Mat<S>::identity(m));
        if (!near_zero(max_magnitude(diff), 1.0)) chk.fail("projections do not sum to the identity");
    }

    // phi_j range condition: image inside N_1^c + ... + N_{k+1-j}^c
    for (int j = 1; j <= static_cast<int>(d.phi.size()); ++j) {
        Mat<S> coords = mul(d.root_stack_inv, d.phi[j - 1]);
        double scale = max_magnitude(d.phi[j - 1]);
        int off = 0;
        for (const auto& c : d.classes) {
            for (int t = 0; t < c.roots.cols; ++t, ++off) {
                bool allowed = c.order <= d.k - j;  // class N_{c.order+1}^c, allowed through N_{k+1-j}^c
                if (allowed) continue;
                for (int col_i = 0; col_i < n; ++col_i)
                    if (!near_zero(scalar_traits<S>::magnitude(coords.at(off, col_i)), scale))
                        chk.fail("phi_" + std::to_string(j) + " leaves the allowed subspace");
            }
        }
        for (int t = 0; t < d.null_k1.cols; ++t) {
            int row = sum_c + t;
            for (int col_i = 0; col_i < n; ++col_i)
                if (!near_zero(scalar_traits<S>::magnitude(coords.at(row, col_i)), scale))
                    chk.fail("phi_" + std::to_string(j) + " maps into N_{k+1}");
        }
    }

    // residual valuations (2.6) and (2.7) through the truncation
    for (const auto& c : d.classes) {
        for (int t = 0; t < c.roots.cols; ++t) {
            auto poly = d.p_apply_poly(col(c.roots, t));
            auto g = mul_series_poly(l, poly);
            double scale = 0;
            for (int a = 0; a <= g.trunc; ++a) scale = std::max(scale, max_magnitude(g.coeff[a]));
            for (int a = 0; a < c.order && a <= g.trunc; ++a)
                if (!near_zero(max_magnitude(g.coeff[a]), scale))
                    chk.fail("chain residual below the class order for class " + std::to_string(c.order));
            if (c.order <= g.trunc) {
                Vec<S> diff = sub(g.coeff[c.order], col(c.leads, t));
                if (!near_zero(max_magnitude(diff), scale))
                    chk.fail("leading coefficient mismatch in class " + std::to_string(c.order));
            }
        }
    }
    for (int t = 0; t < d.null_k1.cols; ++t) {
        auto poly = d.p_apply_poly(col(d.null_k1, t));
        auto g = mul_series_poly(l, poly);
        double scale = 0;
        for (int a = 0; a <= g.trunc; ++a) scale = std::max(scale, max_magnitude(g.coeff[a]));
        for (int a = 0; a <= d.k && a <= g.trunc; ++a)
            if (!near_zero(max_magnitude(g.coeff[a]), scale))
                chk.fail("N_{k+1} element not annihilated through order k");
    }
    return chk;
}

/// Constructs the full decomposition (1.10): bases, S_i, N_{k+1}, and the
/// near-identity polynomial p_k, by column reduction of L(eps) over the
/// local ring at eps = 0 followed by normalization of the chain elements.
template <class S>
ConeDecomposition<S> cone_decomposition(const MatSeries<S>& l, int k, double tol = kRankTol) {
    const int m = l.rows(), n = l.cols();
    if (l.trunc < 2 * k + 1) throw Error("cone_decomposition: series must be truncated at >= 2k+1");
    if (k < 0) throw Error("cone_decomposition: negative k");

    // polynomial columns of P(eps), P(0) = I
    std::vector<std::vector<Vec<S>>> pcol(n);
    for (int c = 0; c < n; ++c) {
        Vec<S> e = zero_vec<S>(n);
        e[c] = S(1);
        pcol[c] = {e};
    }
    auto image = [&](int c) { return mul_series_poly(l, pcol[c]); };
    std::vector<VecSeries<S>> g(n);
    for (int c = 0; c < n; ++c) g[c] = image(c);

    auto col_val = [&](int c) -> int {  // capped at k+1 (residual class)
        auto v = valuation(g[c], tol);
        if (!v.determined || v.q > k) return k + 1;
        return v.q;
    };
    std::vector<int> val(n);
    for (int c = 0; c < n; ++c) val[c] = col_val(c);

    // subtract coeff * eps^shift * column c2 from column c1
    auto col_op = [&](int c1, const S& coeff, int shift, int c2) {
        auto& a = pcol[c1];
        const auto& b = pcol[c2];
        if (a.size() < b.size() + shift) a.resize(b.size() + shift, zero_vec<S>(n));
        for (std::size_t j = 0; j < b.size(); ++j) a[j + shift] = sub(a[j + shift], scale(coeff, b[j]));
        g[c1] = image(c1);
        val[c1] = col_val(c1);
    };

    // reduce until leading vectors of all columns with valuation <= k are independent
    const int max_ops = n * (k + 2) + 4;
    for (int ops = 0; ops <= max_ops; ++ops) {
        std::vector<int> order;
        for (int c = 0; c < n; ++c)
            if (val[c] <= k) order.push_back(c);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return val[a] != val[b] ? val[a] < val[b] : a < b;
        });
        bool reduced = false;
        Mat<S> pivots(m, 0);
        std::vector<int> pivot_cols;
        for (int c : order) {
            Vec<S> lead = g[c].coeff[val[c]];
            auto coords = coords_in_basis(pivots, lead, tol);
            if (!coords) {
                pivots = hcat(pivots, from_cols<S>({lead}, m));
                pivot_cols.push_back(c);
                continue;
            }
            for (std::size_t p = 0; p < coords->size(); ++p) {
                if (scalar_traits<S>::is_zero((*coords)[p])) continue;
                col_op(c, (*coords)[p], val[c] - val[pivot_cols[p]], pivot_cols[p]);
            }
            reduced = true;
            break;
        }
        if (!reduced) break;
        if (ops == max_ops) throw InconsistentK("column reduction did not terminate");
    }

    // classes by final valuation
    std::vector<std::vector<int>> by_val(k + 2);
    for (int c = 0; c < n; ++c) by_val[val[c]].push_back(c);
    int active = 0;
    for (int i = 0; i <= k; ++i) active += static_cast<int>(by_val[i].size());
    if (active != m)
        throw InconsistentK("reduction found " + std::to_string(active) +
                            " finite-order directions, expected m = " + std::to_string(m));
    if (by_val[k].empty())
        throw InconsistentK("no chain of rank k: the claimed surjectivity order is too large");

    // truncate columns to polynomial degree k (higher orders never constrain (2.6)/(2.7))
    for (int c = 0; c < n; ++c) {
        if (static_cast<int>(pcol[c].size()) > k + 1) pcol[c].resize(k + 1);
        g[c] = image(c);
    }

    // column order: classes ascending, then the residual group
    std::vector<int> colorder;
    for (int i = 0; i <= k + 1; ++i)
        for (int c : by_val[i]) colorder.push_back(c);

    Mat<S> z(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) z.at(i, j) = pcol[colorder[j]][0][i];
    Mat<S> zinv = inverse(z, tol);

    // normalize chain continuations: coefficient j of every column must lie
    // in the span of roots of rank <= k - j (the range condition on phi_j)
    for (int j = 1; j <= k; ++j) {
        for (int c = 0; c < n; ++c) {
            if (static_cast<int>(pcol[c].size()) <= j) continue;
            Vec<S> coords = mul(zinv, pcol[c][j]);
            for (int t = 0; t < n; ++t) {
                int src = colorder[t];
                if (val[src] <= k - j) continue;  // allowed component
                if (scalar_traits<S>::is_zero(coords[t])) continue;
                col_op(c, coords[t], j, src);
                if (static_cast<int>(pcol[c].size()) > k + 1) pcol[c].resize(k + 1);
            }
        }
    }
    for (int c = 0; c < n; ++c) g[c] = image(c);

    ConeDecomposition<S> d;
    d.k = k;
    d.n = n;
    d.m = m;
    for (int i = 0; i <= k; ++i) {
        ConeClass<S> cls;
        cls.order = i;
        cls.roots = Mat<S>(n, static_cast<int>(by_val[i].size()));
        cls.leads = Mat<S>(m, static_cast<int>(by_val[i].size()));
        for (int t = 0; t < static_cast<int>(by_val[i].size()); ++t) {
            int c = by_val[i][t];
            for (int r = 0; r < n; ++r) cls.roots.at(r, t) = pcol[c][0][r];
            for (int r = 0; r < m; ++r) cls.leads.at(r, t) = g[c].coeff[i][r];
        }
        d.classes.push_back(std::move(cls));
    }
    d.null_k1 = Mat<S>(n, static_cast<int>(by_val[k + 1].size()));
    for (int t = 0; t < d.null_k1.cols; ++t)
        for (int r = 0; r < n; ++r) d.null_k1.at(r, t) = pcol[by_val[k + 1][t]][0][r];

    // stacks and p_k = P * P(0)^{-1}
    Mat<S> zfinal(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) zfinal.at(i, j) = pcol[colorder[j]][0][i];
    d.root_stack = zfinal;
    d.root_stack_inv = inverse(zfinal, tol);
    Mat<S> e(m, m);
    {
        int off = 0;
        for (const auto& cls : d.classes)
            for (int t = 0; t < cls.leads.cols; ++t, ++off)
                for (int r = 0; r < m; ++r) e.at(r, off) = cls.leads.at(r, t);
    }
    d.lead_stack = e;
    try {
        d.lead_stack_inv = inverse(e, tol);
    } catch (const SingularMatrix&) {
        throw InconsistentK("leading coefficients do not span the image space");
    }
    for (int j = 1; j <= k; ++j) {
        Mat<S> pj(n, n);
        for (int c = 0; c < n; ++c) {
            if (static_cast<int>(pcol[colorder[c]].size()) <= j) continue;
            for (int i = 0; i < n; ++i) pj.at(i, c) = pcol[colorder[c]][j][i];
        }
        d.phi.push_back(mul(pj, d.root_stack_inv));
    }

    auto chk = verify_decomposition(l, d, tol);
    if (!chk.ok) {
        std::string msg = "decomposition failed re-verification:";
        for (const auto& f : chk.failures) msg += " " + f + ";";
        throw InconsistentK(msg);
    }
    return d;
}

/// b(eps) = p_k(eps) * (eps^k n_1^c + ... + eps n_k^c + n_{k+1}^c) with
/// n_i^c = S_i^{-1} P_i bbar; satisfies L(eps) b(eps) = eps^k bbar + O(eps^{k+1}).
/// Returned as exact polynomial coefficients of degree <= 2k.
template <class S>
std::vector<Vec<S>> surjectivity_witness(const ConeDecomposition<S>& d, const Vec<S>& bbar) {
    if (static_cast<int>(bbar.size()) != d.m) throw DimensionMismatch("witness target dimension");
    Vec<S> gamma = mul(d.lead_stack_inv, bbar);
    // inner polynomial: class of order i scaled by eps^{k-i}
    std::vector<Vec<S>> inner(d.k + 1, zero_vec<S>(d.n));
    int off = 0;
    for (const auto& cls : d.classes)
        for (int t = 0; t < cls.roots.cols; ++t, ++off)
            inner[d.k - cls.order] = add(inner[d.k - cls.order], scale(gamma[off], col(cls.roots, t)));
    // multiply by p_k(eps)
    std::vector<Vec<S>> out(2 * d.k + 1, zero_vec<S>(d.n));
    for (int a = 0; a <= d.k; ++a) {
        const Mat<S> pa = a == 0 ? Mat<S>::identity(d.n) : d.phi[a - 1];
        for (int b = 0; b <= d.k; ++b) out[a + b] = add(out[a + b], mul(pa, inner[b]));
    }
    return out;
}

}  // namespace kcone
