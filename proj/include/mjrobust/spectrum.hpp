#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mjrobust/graph.hpp"

namespace mjrobust {

/// Sorted eigenvalue list of a symmetric matrix together with a
/// tolerance-based deduplication into (representative, multiplicity) groups.
/// The groups drive the per-eigenvalue LMI loop, so merging numerically
/// equal eigenvalues directly reduces solver work.
struct SpectralData {
    struct Group {
        double value;       // group representative (mean of members)
        int multiplicity;   // number of merged eigenvalues
    };

    std::vector<double> eigenvalues;  // nondecreasing
    int zero_count = 0;               // |lambda| <= dedup_tol * max(1, lambda_max)
    std::vector<Group> groups;        // multiplicities sum to N
    double zero_scale = 0.0;          // the absolute threshold used for zero_count
};

namespace detail {

// Householder reduction of a symmetric matrix to tridiagonal form without
// accumulating the transformation (eigenvalues-only path for large N).
inline void tridiagonalize(Mat a, std::vector<double>& d, std::vector<double>& e) {
    const int n = static_cast<int>(a.rows());
    d.assign(n, 0.0);
    e.assign(std::max(n - 1, 0), 0.0);
    for (int k = 0; k + 2 < n; ++k) {
        const int m = n - k - 1;  // trailing dimension
        Vec x = a.col(k).tail(m);
        const double xnorm = x.norm();
        if (xnorm == 0.0) {
            e[k] = 0.0;
            continue;
        }
        const double alpha = x(0) >= 0.0 ? -xnorm : xnorm;
        Vec v = x;
        v(0) -= alpha;
        const double vnorm = v.norm();
        if (vnorm == 0.0) {
            e[k] = alpha;
            continue;
        }
        v /= vnorm;
        auto b = a.block(k + 1, k + 1, m, m);
        Vec u = 2.0 * (b.selfadjointView<Eigen::Lower>() * v);
        const double gamma = v.dot(u);
        Vec p = u - gamma * v;
        b.noalias() -= v * p.transpose();
        b.noalias() -= p * v.transpose();
        a.col(k).tail(m).setZero();
        a(k + 1, k) = alpha;
        e[k] = alpha;
    }
    if (n >= 2) e[n - 2] = a(n - 1, n - 2);
    for (int i = 0; i < n; ++i) d[i] = a(i, i);
}

// Implicit-shift QL iteration on a tridiagonal matrix, eigenvalues only.
// e[i] couples d[i] and d[i+1].
inline void tridiagonal_eigenvalues(std::vector<double>& d, std::vector<double>& e) {
    const int n = static_cast<int>(d.size());
    if (n == 0) return;
    e.push_back(0.0);
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd)
                    break;
            }
            if (m != l) {
                if (iter++ == 64)
                    throw std::runtime_error(
                        "spectrum: QL iteration failed to converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                int i;
                for (i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if (r == 0.0 && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
    e.pop_back();
    std::sort(d.begin(), d.end());
}

}  // namespace detail

/// Eigenvalues of a symmetric matrix with deduplication. Uses Eigen's dense
/// solver up to `dense_threshold` and a memory-light Householder
/// tridiagonalization + QL path above it.
inline SpectralData spectrum(const Mat& l, double dedup_tol = 1e-9,
                             int dense_threshold = 4096) {
    if (l.rows() != l.cols())
        throw std::invalid_argument("spectrum: matrix not square");
    if (dedup_tol <= 0.0)
        throw std::invalid_argument("spectrum: dedup_tol must be positive");
    const double sym_err = (l - l.transpose()).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, l.cwiseAbs().maxCoeff());
    if (sym_err > 1e-12 * scale)
        throw std::invalid_argument("spectrum: matrix not symmetric");

    const int n = static_cast<int>(l.rows());
    std::vector<double> vals(n);
    if (n <= dense_threshold) {
        Eigen::SelfAdjointEigenSolver<Mat> es(l, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success)
            throw std::runtime_error("spectrum: dense eigensolver did not converge");
        for (int i = 0; i < n; ++i) vals[i] = es.eigenvalues()(i);
    } else {
        std::vector<double> e;
        detail::tridiagonalize(l, vals, e);
        detail::tridiagonal_eigenvalues(vals, e);
    }

    SpectralData out;
    out.eigenvalues = vals;
    const double lam_max = n > 0 ? std::abs(vals.back()) : 0.0;
    out.zero_scale = dedup_tol * std::max(1.0, lam_max);
    for (double v : vals)
        if (std::abs(v) <= out.zero_scale) ++out.zero_count;

    int i = 0;
    while (i < n) {
        const double anchor = vals[i];
        int j = i;
        double sum = 0.0;
        while (j < n && std::abs(vals[j] - anchor) <= out.zero_scale) {
            sum += vals[j];
            ++j;
        }
        out.groups.push_back({sum / (j - i), j - i});
        i = j;
    }
    return out;
}

inline SpectralData spectrum(const UndirectedGraph& g, double dedup_tol = 1e-9,
                             int dense_threshold = 4096) {
    return spectrum(laplacian(g).cast<double>(), dedup_tol, dense_threshold);
}

}  // namespace mjrobust
