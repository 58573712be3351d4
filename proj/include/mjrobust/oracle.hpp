#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mjrobust/decomposable.hpp"
#include "mjrobust/graph.hpp"
#include "mjrobust/loss.hpp"

namespace mjrobust {

struct OracleOptions {
    bool deflate_consensus = false;  // project out span(ones (x) I_nx) first
    double tol_fp = 1e-12;           // max-norm tolerance of the fixed point
    int max_iter = 100000;
    double eps_osc = 1e-6;           // dead band around 1 for the verdict
    int mode_cap = kDefaultModeCap;
    bool refine_estimate = false;    // keep iterating for a tight radius value
};

enum class StabilityVerdict { stable, unstable, inconclusive };

inline const char* to_string(StabilityVerdict v) {
    switch (v) {
        case StabilityVerdict::stable: return "stable";
        case StabilityVerdict::unstable: return "unstable";
        case StabilityVerdict::inconclusive: return "inconclusive";
    }
    return "unknown";
}

struct StabilityResult {
    StabilityVerdict verdict = StabilityVerdict::inconclusive;
    double spectral_estimate = 0.0;  // spectral radius of the Lyapunov map
    int iterations = 0;
};

struct OracleResult {
    bool stable = false;
    std::optional<double> h2;
    int iterations = 0;
    double residual = 0.0;
    StabilityResult stability;
};

/// Orthonormal basis of the complement of the all-ones direction, built from
/// one Householder reflection (deterministic).
inline Mat ones_complement_basis(int n) {
    if (n < 2) return Mat::Zero(n, 0);
    Vec u = Vec::Ones(n) / std::sqrt(static_cast<double>(n));
    Vec v = u - Vec::Unit(n, 0);
    v /= v.norm();
    Mat h = Mat::Identity(n, n) - 2.0 * v * v.transpose();
    return h.rightCols(n - 1);
}

/// Per-mode system matrices of the enumerated joint chain, optionally
/// restricted to the consensus-orthogonal subspace. The restriction is exact
/// because symmetric Laplacians leave both subspaces invariant.
struct ModeMatrices {
    std::vector<Mat> A, B, C, D;
    int state_dim = 0;
};

inline ModeMatrices build_mode_matrices(const DecomposableSystem& sys,
                                        const UndirectedGraph& g, bool deflate,
                                        int mode_cap = kDefaultModeCap) {
    if (g.edge_count() > mode_cap)
        throw std::runtime_error("oracle intractable: |E| = " +
                                 std::to_string(g.edge_count()) +
                                 " exceeds mode cap " + std::to_string(mode_cap));
    const std::uint32_t m = 1u << g.edge_count();
    Mat u;
    if (deflate)
        u = kron(ones_complement_basis(g.vertex_count), Mat::Identity(sys.nx, sys.nx));
    ModeMatrices out;
    out.A.reserve(m); out.B.reserve(m); out.C.reserve(m); out.D.reserve(m);
    for (std::uint32_t j = 0; j < m; ++j) {
        FullModeSystem f = assemble(sys, g, ModeIndex{j});
        if (deflate) {
            out.A.push_back(u.transpose() * f.A * u);
            out.B.push_back(u.transpose() * f.B);
            out.C.push_back(f.C * u);
        } else {
            out.A.push_back(std::move(f.A));
            out.B.push_back(std::move(f.B));
            out.C.push_back(std::move(f.C));
        }
        out.D.push_back(std::move(f.D));
    }
    out.state_dim = static_cast<int>(out.A[0].rows());
    return out;
}

namespace detail {

// In-place application of S_i <- sum_j t_ij S_j, using the product structure
// of the joint chain: one 2x2 stochastic contraction per edge bit.
inline void mix_modes(std::vector<Mat>& s, const LossModel& model) {
    const int ne = model.graph.edge_count();
    const auto m = static_cast<std::uint32_t>(s.size());
    Mat tmp;
    for (int e = 0; e < ne; ++e) {
        const double p = model.chains[static_cast<size_t>(e)].p;
        const double q = model.chains[static_cast<size_t>(e)].q;
        const std::uint32_t bit = 1u << e;
        for (std::uint32_t i = 0; i < m; ++i) {
            if (i & bit) continue;
            Mat& s0 = s[i];
            Mat& s1 = s[i | bit];
            tmp = (1.0 - q) * s0 + q * s1;
            s1 = (1.0 - p) * s0 + p * s1;
            s0.swap(tmp);
        }
    }
}

inline Vec initial_distribution(const LossModel& model) {
    const int ne = model.graph.edge_count();
    const std::uint32_t m = 1u << ne;
    Vec mu(m);
    for (std::uint32_t i = 0; i < m; ++i) {
        double pi = 1.0;
        for (int e = 0; e < ne; ++e) {
            const double eta = model.chains[static_cast<size_t>(e)].eta;
            pi *= (i >> e) & 1u ? eta : 1.0 - eta;
        }
        mu(i) = pi;
    }
    return mu;
}

inline double ensemble_norm(const std::vector<Mat>& s) {
    double sq = 0.0;
    for (const auto& x : s) sq += x.squaredNorm();
    return std::sqrt(sq);
}

}  // namespace detail

/// Mean-square stability via the spectral radius of the coupled Lyapunov map
/// T(X)_i = sum_j t_ij A_j^T X_j A_j, estimated by power iteration from
/// X_i = I. Two estimators run side by side: Aitken-smoothed norm ratios
/// (fast and sharp when the peripheral eigenvalue is simple) and a
/// half-window geometric mean of the ratios, which stays correct when
/// complex peripheral eigenvalues make the ratio oscillate persistently.
/// Near-critical systems report `inconclusive` rather than guessing.
inline StabilityResult ms_stable_exact(const DecomposableSystem& sys,
                                       const UndirectedGraph& g,
                                       const LossModel& model,
                                       const OracleOptions& opts = {}) {
    const auto mm = build_mode_matrices(sys, g, opts.deflate_consensus, opts.mode_cap);
    const auto m = static_cast<std::uint32_t>(mm.A.size());
    const int n = mm.state_dim;
    StabilityResult res;
    if (n == 0) {
        res.verdict = StabilityVerdict::stable;
        return res;
    }
    std::vector<Mat> x(m, Mat::Identity(n, n));
    {
        const double n0 = detail::ensemble_norm(x);
        for (auto& xs : x) xs /= n0;
    }
    std::vector<Mat> s(m);
    std::vector<double> cumlog;
    cumlog.reserve(static_cast<size_t>(std::min(opts.max_iter, 1 << 20)) + 1);
    cumlog.push_back(0.0);
    double r_hist[3] = {0, 0, 0};
    double est_prev = std::numeric_limits<double>::infinity();
    int settled = 0;
    double est = 0.0, geo_err = std::numeric_limits<double>::infinity();

    auto verdict_of = [&](double e) {
        return e < 1.0 - opts.eps_osc   ? StabilityVerdict::stable
               : e > 1.0 + opts.eps_osc ? StabilityVerdict::unstable
                                        : StabilityVerdict::inconclusive;
    };

    for (int k = 1; k <= opts.max_iter; ++k) {
        for (std::uint32_t j = 0; j < m; ++j)
            s[j].noalias() = mm.A[j].transpose() * x[j] * mm.A[j];
        detail::mix_modes(s, model);
        const double nrm = detail::ensemble_norm(s);
        res.iterations = k;
        if (nrm == 0.0) {
            res.verdict = StabilityVerdict::stable;
            res.spectral_estimate = 0.0;
            return res;
        }
        for (auto& xs : s) xs /= nrm;
        x.swap(s);
        cumlog.push_back(cumlog.back() + std::log(nrm));
        r_hist[0] = r_hist[1];
        r_hist[1] = r_hist[2];
        r_hist[2] = nrm;

        // clean path: raw ratios converge, Aitken sharpens the limit
        if (k >= 12 &&
            std::abs(r_hist[2] - r_hist[1]) <= 1e-11 * std::max(1.0, r_hist[2])) {
            double cand = r_hist[2];
            const double d1 = r_hist[2] - r_hist[1];
            const double d2 = r_hist[2] - 2.0 * r_hist[1] + r_hist[0];
            if (std::abs(d2) > 1e-14 * std::max(1.0, std::abs(r_hist[2]))) {
                const double aitken = r_hist[2] - d1 * d1 / d2;
                if (std::isfinite(aitken) && aitken > 0.0 &&
                    std::abs(aitken - cand) < 0.5 * std::max(1.0, cand))
                    cand = aitken;
            }
            if (std::abs(cand - est_prev) <= 1e-10 * std::max(1.0, cand)) {
                if (++settled >= 4) {
                    res.spectral_estimate = cand;
                    res.verdict = verdict_of(cand);
                    if (res.verdict != StabilityVerdict::inconclusive) return res;
                }
            } else {
                settled = 0;
            }
            est_prev = cand;
            est = cand;
        } else {
            settled = 0;
            est_prev = std::numeric_limits<double>::infinity();
        }

        // oscillation-robust path: geometric means over disjoint windows
        if (k >= 32) {
            const int half = k / 2;
            const int quarter = k / 4;
            const double geo =
                std::exp((cumlog[static_cast<size_t>(k)] -
                          cumlog[static_cast<size_t>(half)]) /
                         (k - half));
            const double geo_prev =
                std::exp((cumlog[static_cast<size_t>(half)] -
                          cumlog[static_cast<size_t>(quarter)]) /
                         (half - quarter));
            geo_err = std::abs(geo - geo_prev);
            est = geo;
            const bool verdict_safe = 5.0 * geo_err < std::abs(geo - 1.0);
            const bool tight = geo_err <= std::max(1e-9, 5e-4 * geo);
            if (verdict_safe && (tight || !opts.refine_estimate)) {
                res.spectral_estimate = geo;
                res.verdict = verdict_of(geo);
                if (res.verdict != StabilityVerdict::inconclusive) return res;
            }
        }
    }
    res.spectral_estimate = est;
    res.verdict = StabilityVerdict::inconclusive;
    if (geo_err < 0.1 * std::abs(est - 1.0)) res.verdict = verdict_of(est);
    return res;
}

/// Exact MJLS H2 norm: solves the fixed point
///   X_i = sum_j t_ij (A_j^T X_j A_j + C_j^T C_j)
/// by iteration and evaluates h2^2 = sum_j mu_j tr(B_j^T X_j B_j + D_j^T D_j).
inline OracleResult h2_exact(const DecomposableSystem& sys, const UndirectedGraph& g,
                             const LossModel& model, const OracleOptions& opts = {}) {
    OracleResult out;
    out.stability = ms_stable_exact(sys, g, model, opts);
    out.stable = out.stability.verdict == StabilityVerdict::stable;
    if (!out.stable) return out;

    const auto mm = build_mode_matrices(sys, g, opts.deflate_consensus, opts.mode_cap);
    const auto m = static_cast<std::uint32_t>(mm.A.size());
    const int n = mm.state_dim;

    // constant part Q_i = sum_j t_ij C_j^T C_j
    std::vector<Mat> q(m);
    for (std::uint32_t j = 0; j < m; ++j)
        q[j].noalias() = mm.C[j].transpose() * mm.C[j];
    detail::mix_modes(q, model);

    std::vector<Mat> x(m, Mat::Zero(n, n)), s(m);
    double residual = std::numeric_limits<double>::infinity();
    int k = 0;
    while (k < opts.max_iter) {
        ++k;
        for (std::uint32_t j = 0; j < m; ++j)
            s[j].noalias() = mm.A[j].transpose() * x[j] * mm.A[j];
        detail::mix_modes(s, model);
        residual = 0.0;
        for (std::uint32_t j = 0; j < m; ++j) {
            s[j] += q[j];
            residual = std::max(residual, (s[j] - x[j]).cwiseAbs().maxCoeff());
        }
        x.swap(s);
        if (residual <= opts.tol_fp) break;
    }
    out.iterations = k;
    out.residual = residual;
    if (residual > opts.tol_fp)
        throw std::runtime_error(
            "h2_exact: fixed point did not converge in " + std::to_string(k) +
            " iterations (residual " + std::to_string(residual) + ")");

    const Vec mu = detail::initial_distribution(model);
    double h2sq = 0.0;
    for (std::uint32_t j = 0; j < m; ++j)
        h2sq += mu(j) * ((mm.B[j].transpose() * x[j] * mm.B[j]).trace() +
                         (mm.D[j].transpose() * mm.D[j]).trace());
    out.h2 = std::sqrt(std::max(0.0, h2sq));
    return out;
}

}  // namespace mjrobust
