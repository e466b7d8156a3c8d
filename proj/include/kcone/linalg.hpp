#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

#include "kcone/scalar.hpp"

namespace kcone {

/// Relative rank tolerance for binary-float scalars (largest-singular-value-relative).
inline constexpr double kRankTol = 1e-9;

template <class S>
using Vec = std::vector<S>;

template <class S>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<S> data;  // row-major

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, S{}) {}

    S& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    const S& at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = S(1);
        return m;
    }

    bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && data == o.data; }
};

// ---- small vector helpers ----

template <class S>
Vec<S> zero_vec(int n) {
    return Vec<S>(static_cast<std::size_t>(n), S{});
}

template <class S>
bool is_zero_vec(const Vec<S>& v) {
    for (const auto& x : v)
        if (!scalar_traits<S>::is_zero(x)) return false;
    return true;
}

template <class S>
Vec<S> add(const Vec<S>& a, const Vec<S>& b) {
    Vec<S> r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += b[i];
    return r;
}

template <class S>
Vec<S> sub(const Vec<S>& a, const Vec<S>& b) {
    Vec<S> r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
    return r;
}

template <class S>
Vec<S> scale(const S& c, const Vec<S>& v) {
    Vec<S> r = v;
    for (auto& x : r) x *= c;
    return r;
}

/// Euclidean (Hermitian) norm, reported as double.
template <class S>
double norm(const Vec<S>& v) {
    double s = 0;
    for (const auto& x : v) {
        double m = scalar_traits<S>::magnitude(x);
        s += m * m;
    }
    return std::sqrt(s);
}

template <class S>
double max_magnitude(const Vec<S>& v) {
    double s = 0;
    for (const auto& x : v) s = std::max(s, scalar_traits<S>::magnitude(x));
    return s;
}

template <class S>
Mat<S> from_cols(const std::vector<Vec<S>>& cols, int rows) {
    Mat<S> m(rows, static_cast<int>(cols.size()));
    for (int j = 0; j < m.cols; ++j) {
        if (static_cast<int>(cols[j].size()) != rows) throw DimensionMismatch("from_cols: ragged columns");
        for (int i = 0; i < rows; ++i) m.at(i, j) = cols[j][i];
    }
    return m;
}

template <class S>
Vec<S> col(const Mat<S>& m, int j) {
    Vec<S> v(m.rows);
    for (int i = 0; i < m.rows; ++i) v[i] = m.at(i, j);
    return v;
}

template <class S>
Mat<S> hcat(const Mat<S>& a, const Mat<S>& b) {
    if (a.rows != b.rows) throw DimensionMismatch("hcat: row mismatch");
    Mat<S> m(a.rows, a.cols + b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < a.cols; ++j) m.at(i, j) = a.at(i, j);
        for (int j = 0; j < b.cols; ++j) m.at(i, a.cols + j) = b.at(i, j);
    }
    return m;
}

template <class S>
Mat<S> mul(const Mat<S>& a, const Mat<S>& b) {
    if (a.cols != b.rows) throw DimensionMismatch("mat mul");
    Mat<S> m(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int l = 0; l < a.cols; ++l) {
            if (scalar_traits<S>::is_zero(a.at(i, l))) continue;
            for (int j = 0; j < b.cols; ++j) m.at(i, j) += a.at(i, l) * b.at(l, j);
        }
    return m;
}

template <class S>
Vec<S> mul(const Mat<S>& a, const Vec<S>& v) {
    if (a.cols != static_cast<int>(v.size())) throw DimensionMismatch("mat*vec");
    Vec<S> r(a.rows, S{});
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) r[i] += a.at(i, j) * v[j];
    return r;
}

template <class S>
Mat<S> transpose(const Mat<S>& a) {
    Mat<S> m(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) m.at(j, i) = a.at(i, j);
    return m;
}

template <class S>
double max_magnitude(const Mat<S>& m) {
    double s = 0;
    for (const auto& x : m.data) s = std::max(s, scalar_traits<S>::magnitude(x));
    return s;
}

// ---- elimination ----

/// Reduced row echelon form. Exact scalars pivot on the first nonzero entry
/// (lowest row index); float scalars pivot greedily on the largest magnitude,
/// zeroing entries below tol * initial max magnitude.
template <class S>
struct Echelon {
    Mat<S> r;
    std::vector<int> pivot_cols;
    int rank = 0;
};

template <class S>
Echelon<S> echelon(Mat<S> a, double tol = kRankTol) {
    Echelon<S> e;
    double cut = 0;
    if constexpr (!scalar_traits<S>::is_exact) {
        cut = tol * max_magnitude(a);
    }
    int row = 0;
    for (int c = 0; c < a.cols && row < a.rows; ++c) {
        int piv = -1;
        if constexpr (scalar_traits<S>::is_exact) {
            for (int i = row; i < a.rows; ++i)
                if (!scalar_traits<S>::is_zero(a.at(i, c))) {
                    piv = i;
                    break;
                }
        } else {
            double best = cut;
            for (int i = row; i < a.rows; ++i) {
                double m = scalar_traits<S>::magnitude(a.at(i, c));
                if (m > best) {
                    best = m;
                    piv = i;
                }
            }
        }
        if (piv < 0) continue;
        if (piv != row)
            for (int j = 0; j < a.cols; ++j) std::swap(a.at(piv, j), a.at(row, j));
        S p = a.at(row, c);
        for (int j = c; j < a.cols; ++j) a.at(row, j) /= p;
        for (int i = 0; i < a.rows; ++i) {
            if (i == row) continue;
            S f = a.at(i, c);
            if (scalar_traits<S>::is_zero(f)) continue;
            for (int j = c; j < a.cols; ++j) a.at(i, j) -= f * a.at(row, j);
            a.at(i, c) = S{};
        }
        e.pivot_cols.push_back(c);
        ++row;
    }
    e.rank = row;
    e.r = std::move(a);
    return e;
}

/// Rank with a spectral-gap report. Exact mode: elimination, gap infinite.
/// Float mode: singular values, threshold tol relative to sigma_max; gap is
/// sigma[rank-1]/sigma[rank] around the cut (infinite when clean).
struct RankReport {
    int rank = 0;
    double gap = std::numeric_limits<double>::infinity();
};

namespace detail {

template <class S>
auto to_eigen(const Mat<S>& m) {
    using F = float_of<S>;
    Eigen::Matrix<F, Eigen::Dynamic, Eigen::Dynamic> e(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) e(i, j) = to_float_scalar(m.at(i, j));
    return e;
}

}  // namespace detail

template <class S>
RankReport rank_report(const Mat<S>& m, double tol = kRankTol) {
    RankReport rep;
    if (m.rows == 0 || m.cols == 0) return rep;
    if constexpr (scalar_traits<S>::is_exact) {
        rep.rank = echelon(m).rank;
    } else {
        auto e = detail::to_eigen(m);
        Eigen::JacobiSVD<decltype(e)> svd(e);
        auto sv = svd.singularValues();
        double smax = sv.size() ? sv(0) : 0.0;
        double cut = tol * smax;
        int r = 0;
        while (r < sv.size() && sv(r) > cut) ++r;
        rep.rank = r;
        if (r > 0 && r < sv.size() && sv(r) > 0) rep.gap = sv(r - 1) / sv(r);
    }
    return rep;
}

template <class S>
int rank(const Mat<S>& m, double tol = kRankTol) {
    return rank_report(m, tol).rank;
}

/// Nullspace basis as matrix columns (exact: exact; float: from rref at tol).
template <class S>
Mat<S> nullspace(const Mat<S>& a, double tol = kRankTol) {
    auto e = echelon(a, tol);
    std::vector<int> free_cols;
    for (int c = 0, p = 0; c < a.cols; ++c) {
        if (p < static_cast<int>(e.pivot_cols.size()) && e.pivot_cols[p] == c)
            ++p;
        else
            free_cols.push_back(c);
    }
    Mat<S> n(a.cols, static_cast<int>(free_cols.size()));
    for (int j = 0; j < static_cast<int>(free_cols.size()); ++j) {
        int fc = free_cols[j];
        n.at(fc, j) = S(1);
        for (int p = 0; p < static_cast<int>(e.pivot_cols.size()); ++p)
            n.at(e.pivot_cols[p], j) = -e.r.at(p, fc);
    }
    return n;
}

struct SingularMatrix : Error {
    double condition_estimate;
    explicit SingularMatrix(const std::string& what, double cond = std::numeric_limits<double>::infinity())
        : Error(what), condition_estimate(cond) {}
};

/// Solve a square system exactly / with partial pivoting.
template <class S>
Vec<S> solve_square(const Mat<S>& a, const Vec<S>& b, double tol = kRankTol) {
    if (a.rows != a.cols || a.rows != static_cast<int>(b.size())) throw DimensionMismatch("solve_square");
    Mat<S> ab = hcat(a, from_cols<S>({b}, a.rows));
    auto e = echelon(ab, tol);
    if (e.rank < a.rows || (e.rank > 0 && e.pivot_cols.back() >= a.cols)) {
        double cond = std::numeric_limits<double>::infinity();
        if constexpr (!scalar_traits<S>::is_exact) {
            auto eg = detail::to_eigen(a);
            Eigen::JacobiSVD<decltype(eg)> svd(eg);
            auto sv = svd.singularValues();
            if (sv.size() && sv(sv.size() - 1) > 0) cond = sv(0) / sv(sv.size() - 1);
        }
        throw SingularMatrix("singular linear system", cond);
    }
    Vec<S> x(a.cols, S{});
    for (int p = 0; p < e.rank; ++p) x[e.pivot_cols[p]] = e.r.at(p, a.cols);
    return x;
}

template <class S>
Mat<S> inverse(const Mat<S>& a, double tol = kRankTol) {
    if (a.rows != a.cols) throw DimensionMismatch("inverse of non-square matrix");
    Mat<S> ab = hcat(a, Mat<S>::identity(a.rows));
    auto e = echelon(ab, tol);
    if (e.rank < a.rows || (e.rank > 0 && e.pivot_cols.back() >= a.cols))
        throw SingularMatrix("matrix not invertible");
    Mat<S> inv(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) inv.at(i, j) = e.r.at(i, a.cols + j);
    return inv;
}

template <class S>
S determinant(Mat<S> a, double tol = kRankTol) {
    if (a.rows != a.cols) throw DimensionMismatch("determinant of non-square matrix");
    S det(1);
    double cut = 0;
    if constexpr (!scalar_traits<S>::is_exact) cut = tol * max_magnitude(a);
    for (int c = 0; c < a.cols; ++c) {
        int piv = -1;
        if constexpr (scalar_traits<S>::is_exact) {
            for (int i = c; i < a.rows; ++i)
                if (!scalar_traits<S>::is_zero(a.at(i, c))) {
                    piv = i;
                    break;
                }
        } else {
            double best = cut;
            for (int i = c; i < a.rows; ++i) {
                double m = scalar_traits<S>::magnitude(a.at(i, c));
                if (m > best) {
                    best = m;
                    piv = i;
                }
            }
        }
        if (piv < 0) return S{};
        if (piv != c) {
            for (int j = 0; j < a.cols; ++j) std::swap(a.at(piv, j), a.at(c, j));
            det = -det;
        }
        det *= a.at(c, c);
        for (int i = c + 1; i < a.rows; ++i) {
            S f = a.at(i, c) / a.at(c, c);
            if (scalar_traits<S>::is_zero(f)) continue;
            for (int j = c; j < a.cols; ++j) a.at(i, j) -= f * a.at(c, j);
        }
    }
    return det;
}

template <class S>
bool in_span(const Mat<S>& basis, const Vec<S>& v, double tol = kRankTol) {
    if (basis.cols == 0) return is_zero_vec(v) || (!scalar_traits<S>::is_exact && norm(v) <= tol);
    int r0 = rank(basis, tol);
    return rank(hcat(basis, from_cols<S>({v}, basis.rows)), tol) == r0;
}

/// Coordinates of v in the (independent-column) basis, if representable.
template <class S>
std::optional<Vec<S>> coords_in_basis(const Mat<S>& basis, const Vec<S>& v, double tol = kRankTol) {
    Mat<S> ab = hcat(basis, from_cols<S>({v}, basis.rows));
    auto e = echelon(ab, tol);
    for (int p = 0; p < e.rank; ++p)
        if (e.pivot_cols[p] >= basis.cols) return std::nullopt;
    Vec<S> x(basis.cols, S{});
    for (int p = 0; p < e.rank; ++p) x[e.pivot_cols[p]] = e.r.at(p, basis.cols);
    return x;
}

/// Greedy lowest-index-first selection of candidate columns extending the
/// span of `current`; returns the chosen candidate indices.
template <class S>
std::vector<int> extend_basis(const Mat<S>& current, const Mat<S>& candidates, double tol = kRankTol) {
    std::vector<int> chosen;
    Mat<S> acc = current;
    int r = acc.cols == 0 ? 0 : rank(acc, tol);
    for (int j = 0; j < candidates.cols; ++j) {
        Mat<S> trial = hcat(acc, from_cols<S>({col(candidates, j)}, candidates.rows));
        int rt = rank(trial, tol);
        if (rt > r) {
            chosen.push_back(j);
            acc = std::move(trial);
            r = rt;
        }
    }
    return chosen;
}

template <class S>
Mat<float_of<S>> to_float_mat(const Mat<S>& m) {
    Mat<float_of<S>> f(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) f.data[i] = to_float_scalar(m.data[i]);
    return f;
}

template <class S>
Vec<float_of<S>> to_float_vec(const Vec<S>& v) {
    Vec<float_of<S>> f(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) f[i] = to_float_scalar(v[i]);
    return f;
}

}  // namespace kcone
