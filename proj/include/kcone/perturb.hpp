#pragma once

#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "kcone/cone.hpp"

namespace kcone {

/// Working truncation once k is known: every formula reads coefficients up
/// to eps^{2k} plus a remainder margin, capped by what the stored curve
/// determines.
template <class S>
int f_trunc_for(const PolyMap<S>& g, const CurveSeries<S>& z, int k) {
    int cap = max_compose_trunc(g, z);
    int want = 2 * k + 4;
    auto a = approximation_order(g, z, std::min(want, cap));
    if (!a.exact_through_trunc) want = std::max(want, a.q + 2);
    return std::min(want, cap);
}

/// Perturbation of the data: tau-linear tensors added to the map between
/// orders i+1 and k+1, curve bumps between eps^i and eps^k, or the joint
/// order-2k variant.
template <class S>
struct PerturbSpec {
    enum class Kind { MapOrder, CurveOrder, Joint } kind = Kind::MapOrder;
    int order = 1;                                    // i
    std::vector<PolyMap<S>> tensors;                  // homogeneous monomial data
    std::vector<std::pair<int, Vec<S>>> curve_bumps;  // (eps power, direction)
    S alpha2{};                                       // second magnitude for Joint
};

template <class S>
struct PerturbationOutcome {
    std::optional<int> k_before, k_after;
    std::optional<GateReport<S>> gate_before, gate_after;
    bool contract_ok = true;
    std::vector<std::string> notes;

    void flag(bool ok, std::string what) {
        if (!ok) contract_ok = false;
        notes.push_back((ok ? "[ok] " : "[violated] ") + std::move(what));
    }
};

namespace detail {

template <class S>
CurveSeries<S> bump_curve(const CurveSeries<S>& z, const S& alpha,
                          const std::vector<std::pair<int, Vec<S>>>& bumps) {
    CurveSeries<S> out = z;
    for (const auto& [p, b] : bumps) {
        if (p < 1) throw Error("curve perturbations start at eps^1");
        if (p > out.trunc) continue;  // beyond the stored truncation
        out.coeff[p] = add(out.coeff[p], scale(alpha, b));
    }
    return out;
}

}  // namespace detail

/// Recomputes the surjectivity order and gate verdicts on perturbed data;
/// the semicontinuity contract is evaluated and reported, never thrown.
template <class S>
PerturbationOutcome<S> perturbation_experiment(const PolyMap<S>& g, const CurveSeries<S>& z,
                                               const PerturbSpec<S>& spec, const S& alpha, int max_k,
                                               int T, int shift, double eta = 0.1,
                                               double tol = kRankTol) {
    PerturbationOutcome<S> out;
    PolyMap<S> g2 = g;
    CurveSeries<S> z2 = z;
    switch (spec.kind) {
        case PerturbSpec<S>::Kind::MapOrder:
            g2 = perturb_map(g, alpha, spec.tensors);
            break;
        case PerturbSpec<S>::Kind::CurveOrder:
            z2 = detail::bump_curve(z, alpha, spec.curve_bumps);
            break;
        case PerturbSpec<S>::Kind::Joint:
            g2 = perturb_map(g, alpha, spec.tensors);
            z2 = detail::bump_curve(z, spec.alpha2, spec.curve_bumps);
            break;
    }

    auto analyze = [&](const PolyMap<S>& gg, const CurveSeries<S>& zz)
        -> std::pair<std::optional<int>, std::optional<GateReport<S>>> {
        auto l = linearize_along_curve(gg, zz, T);
        auto r = surjectivity_order(l, max_k, tol);
        if (!r.found()) return {std::nullopt, std::nullopt};
        int k = *r.k;
        std::optional<GateReport<S>> gr;
        if (l.trunc >= 2 * k + 1 && (shift == 0 || k >= 2) && shift <= std::max(k - 1, 0)) {
            try {
                auto dec = cone_decomposition(l, k, tol);
                auto frame = make_frame(gg, zz, dec, shift, f_trunc_for(gg, zz, k), tol);
                gr = gate(frame, eta);
            } catch (const Error&) {
                gr = std::nullopt;
            }
        }
        return {k, gr};
    };
    std::tie(out.k_before, out.gate_before) = analyze(g, z);
    std::tie(out.k_after, out.gate_after) = analyze(g2, z2);

    bool zero_alpha = scalar_traits<S>::is_zero(alpha) &&
                      (spec.kind != PerturbSpec<S>::Kind::Joint || scalar_traits<S>::is_zero(spec.alpha2));
    if (zero_alpha) {
        out.flag(out.k_before == out.k_after, "alpha = 0 keeps the surjectivity order");
    } else if (spec.kind != PerturbSpec<S>::Kind::Joint) {
        bool ok = out.k_before && out.k_after && spec.order <= *out.k_after && *out.k_after <= *out.k_before;
        out.flag(ok, "i <= k_after <= k_before under an order-i perturbation");
    } else {
        out.flag(out.k_before == out.k_after, "order-2k joint perturbation keeps the surjectivity order");
        if (out.gate_before && out.gate_before->accepted != Route::None) {
            bool ok = out.gate_after.has_value();
            if (ok) {
                const auto* after = out.gate_after->clause(out.gate_before->accepted);
                ok = after && after->passed;
            }
            out.flag(ok, "the accepted approximation gate survives the joint perturbation");
        }
    }
    return out;
}

/// Random smooth in-cone curves and the orders they inherit from the cone.
template <class S>
struct HomogeneityProbe {
    struct Entry {
        std::optional<int> k_found;
        bool k_matches = false;
        bool approx_ok = false;  // approximation order >= 2k - shift
    };
    std::vector<Entry> entries;
    bool center_is_approximate = false;
    bool all_k_equal = true;
    bool approx_preserved = true;
};

template <class S>
HomogeneityProbe<S> cone_curve_homogeneity_check(const BlowUpFrame<S>& f, int samples,
                                                 unsigned seed = 1234) {
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> num(-2, 2);
    HomogeneityProbe<S> probe;
    const int k = f.dec.k, n = f.dec.n;
    const int order = f.order();
    probe.center_is_approximate = f.approx.exact_through_trunc || f.approx.q >= order;
    for (int t = 0; t < samples; ++t) {
        // small coordinate path: w(eps) of degree <= 2 with entries in [-1/4, 1/4]
        std::vector<Vec<S>> path(3, zero_vec<S>(n));
        for (auto& c : path)
            for (auto& x : c) x = S(num(rng)) / S(8);
        // correction eps^{k-shift} p_k(eps) w(eps)
        CurveSeries<S> zc = f.z;
        for (int a = 0; a <= k; ++a) {
            const Mat<S> pa = a == 0 ? Mat<S>::identity(n) : f.dec.phi[a - 1];
            for (int b = 0; b < static_cast<int>(path.size()); ++b) {
                int at = (k - f.shift) + a + b;
                if (at > zc.trunc) continue;
                zc.coeff[at] = add(zc.coeff[at], mul(pa, path[b]));
            }
        }
        typename HomogeneityProbe<S>::Entry e;
        int tl = std::min(2 * k + 1, max_linearize_trunc(f.g, zc));
        auto r = surjectivity_order(linearize_along_curve(f.g, zc, tl), std::min(k + 2, tl), f.tol);
        e.k_found = r.k;
        e.k_matches = r.found() && *r.k == k;
        auto aq = approximation_order(f.g, zc, std::min(order + 2, max_compose_trunc(f.g, zc)), f.tol);
        e.approx_ok = aq.exact_through_trunc || aq.q >= order;
        probe.all_k_equal = probe.all_k_equal && e.k_matches;
        probe.approx_preserved = probe.approx_preserved && e.approx_ok;
        probe.entries.push_back(e);
    }
    return probe;
}

}  // namespace kcone
