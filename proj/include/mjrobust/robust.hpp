#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mjrobust/decomposable.hpp"
#include "mjrobust/graph.hpp"
#include "mjrobust/lmi.hpp"
#include "mjrobust/loss.hpp"
#include "mjrobust/spectrum.hpp"

namespace mjrobust {

struct UncertaintyBox {
    double rho_l = 0.0;
    double rho_u = 1.0;
};

inline void check_box(const UncertaintyBox& box) {
    if (!(0.0 <= box.rho_l && box.rho_l <= box.rho_u && box.rho_u <= 1.0))
        throw std::invalid_argument("uncertainty box: need 0 <= rho_l <= rho_u <= 1");
}

/// Polygonal outer approximation of the uncertainty arc
///   { (a, b) : a^2 in [rho_l, rho_u], b = sqrt(1 - a^2) }.
/// Vertices come from a fixed global angular grid over the quarter circle
/// (inflated radially so chords stay outside the circle) plus the exact arc
/// endpoints and the grid-polyline points clipped at the endpoint rays.
/// Anchoring the grid globally makes hulls nest when boxes nest, which in
/// turn makes the certified bound monotone in the box.
struct DeltaVertexSet {
    std::vector<std::pair<double, double>> ab;  // (a, b) vertices
    int grid_points = 0;                        // K of the global grid
    double inflation = 1.0;                     // 1 / cos(step / 2)
    double coverage_margin = 0.0;  // min signed hull distance over arc samples
    bool covered = false;
};

namespace detail {

// Convex hull (monotone chain) and signed interior distance of a point.
inline std::vector<std::pair<double, double>> convex_hull(
    std::vector<std::pair<double, double>> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const int n = static_cast<int>(pts.size());
    if (n <= 2) return pts;
    auto cross = [](const auto& o, const auto& a, const auto& b) {
        return (a.first - o.first) * (b.second - o.second) -
               (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(static_cast<size_t>(2 * n));
    int k = 0;
    for (int i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[static_cast<size_t>(k - 2)],
                               hull[static_cast<size_t>(k - 1)],
                               pts[static_cast<size_t>(i)]) <= 0)
            --k;
        hull[static_cast<size_t>(k++)] = pts[static_cast<size_t>(i)];
    }
    for (int i = n - 2, t = k + 1; i >= 0; --i) {
        while (k >= t && cross(hull[static_cast<size_t>(k - 2)],
                               hull[static_cast<size_t>(k - 1)],
                               pts[static_cast<size_t>(i)]) <= 0)
            --k;
        hull[static_cast<size_t>(k++)] = pts[static_cast<size_t>(i)];
    }
    hull.resize(static_cast<size_t>(k - 1));
    return hull;  // counter-clockwise
}

inline double hull_signed_distance(
    const std::vector<std::pair<double, double>>& hull, double px, double py) {
    const int n = static_cast<int>(hull.size());
    if (n == 0) return -std::numeric_limits<double>::infinity();
    if (n == 1)
        return -std::hypot(px - hull[0].first, py - hull[0].second);
    double margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const auto& a = hull[static_cast<size_t>(i)];
        const auto& b = hull[static_cast<size_t>((i + 1) % n)];
        const double ex = b.first - a.first, ey = b.second - a.second;
        const double len = std::hypot(ex, ey);
        if (len == 0.0) continue;
        // positive inside a counter-clockwise polygon
        margin = std::min(margin,
                          (ex * (py - a.second) - ey * (px - a.first)) / len);
    }
    return margin;
}

}  // namespace detail

inline DeltaVertexSet delta_vertices(const UncertaintyBox& box, int k = 17) {
    check_box(box);
    if (k < 2) throw std::invalid_argument("delta_vertices: need K >= 2");
    const double a_hi = std::sqrt(box.rho_u);
    const double a_lo = std::sqrt(box.rho_l);
    const double t_lo = std::acos(std::min(1.0, a_hi));
    const double t_hi = std::acos(std::min(1.0, a_lo));
    DeltaVertexSet vs;
    vs.grid_points = k;
    auto clamp0 = [](double x) { return x < 0.0 ? 0.0 : x; };
    if (t_hi - t_lo < 1e-14) {
        const double a = a_hi;
        vs.ab.emplace_back(a, std::sqrt(clamp0(1.0 - a * a)));
        vs.inflation = 1.0;
        vs.coverage_margin = 0.0;
        vs.covered = true;
        return vs;
    }
    const double step = (M_PI / 2.0) / (k - 1);
    const double r = 1.0 / std::cos(step / 2.0);
    vs.inflation = r;
    auto grid_angle = [&](int j) { return j * step; };
    auto grid_point = [&](int j) {
        return std::pair{r * std::cos(grid_angle(j)), r * std::sin(grid_angle(j))};
    };
    // clip the grid polyline at an endpoint ray
    auto clip_at = [&](double t) -> std::pair<double, double> {
        int j = std::min(k - 2, static_cast<int>(t / step));
        const double tj = grid_angle(j);
        if (std::abs(t - tj) < 1e-13) return grid_point(j);
        if (std::abs(t - grid_angle(j + 1)) < 1e-13) return grid_point(j + 1);
        auto p = grid_point(j);
        auto q = grid_point(j + 1);
        const double ux = std::cos(t), uy = std::sin(t);
        // p + s (q - p) = rho * (ux, uy)
        const double dx = q.first - p.first, dy = q.second - p.second;
        const double det = dx * uy - dy * ux;
        if (std::abs(det) < 1e-15) return p;
        const double s = (p.second * ux - p.first * uy) / det;
        return {p.first + s * dx, p.second + s * dy};
    };
    vs.ab.emplace_back(clamp0(std::cos(t_lo)), clamp0(std::sin(t_lo)));
    vs.ab.emplace_back(clamp0(std::cos(t_hi)), clamp0(std::sin(t_hi)));
    auto lo_clip = clip_at(t_lo);
    auto hi_clip = clip_at(t_hi);
    vs.ab.emplace_back(clamp0(lo_clip.first), clamp0(lo_clip.second));
    vs.ab.emplace_back(clamp0(hi_clip.first), clamp0(hi_clip.second));
    for (int j = 0; j < k; ++j) {
        const double t = grid_angle(j);
        if (t > t_lo + 1e-13 && t < t_hi - 1e-13) {
            auto p = grid_point(j);
            vs.ab.emplace_back(clamp0(p.first), clamp0(p.second));
        }
    }
    // coverage certificate: sample the arc and test hull membership
    auto hull = detail::convex_hull(vs.ab);
    double margin = std::numeric_limits<double>::infinity();
    const int samples = 1000;
    for (int s = 0; s <= samples; ++s) {
        const double rho =
            box.rho_l + (box.rho_u - box.rho_l) * s / static_cast<double>(samples);
        const double a = std::sqrt(rho);
        const double b = std::sqrt(clamp0(1.0 - rho));
        margin = std::min(margin, detail::hull_signed_distance(hull, a, b));
    }
    vs.coverage_margin = margin;
    vs.covered = margin >= -1e-12;
    return vs;
}

inline Mat delta_matrix(double a, double b) {
    Mat d(3, 2);
    d << a, 0.0, b, 0.0, 0.0, a;
    return d;
}

/// [Delta (x) I_alpha ; I_{2 alpha}], the test factor of the multiplier set.
inline Mat multiplier_test_factor(double a, double b, int alpha) {
    Mat f = Mat::Zero(5 * alpha, 2 * alpha);
    f.block(0, 0, alpha, alpha) = a * Mat::Identity(alpha, alpha);
    f.block(alpha, 0, alpha, alpha) = b * Mat::Identity(alpha, alpha);
    f.block(2 * alpha, alpha, alpha, alpha) = a * Mat::Identity(alpha, alpha);
    f.block(3 * alpha, 0, 2 * alpha, 2 * alpha) =
        Mat::Identity(2 * alpha, 2 * alpha);
    return f;
}

enum class MultiplierMode {
    vertex_certified,       // Q <= 0 plus vertex positivity: sound
    gridding_experimental,  // plain arc gridding, not a certificate
};

/// Emits the multiplier-set membership constraints for variable `pvar`
/// (symmetric, dimension 5*alpha) into the program. In the certified mode
/// the quadratic form is made concave in Delta (Q <= 0), so positivity at
/// the hull vertices implies positivity on the whole covered arc.
inline void add_multiplier_constraints(lmi::LmiProgram& prog, int pvar, int alpha,
                                       const DeltaVertexSet& vertices,
                                       double eps_vertex,
                                       MultiplierMode mode =
                                           MultiplierMode::vertex_certified,
                                       double magnitude_bound = 1e6) {
    if (mode == MultiplierMode::vertex_certified) {
        Mat rq = Mat::Zero(5 * alpha, 3 * alpha);
        rq.topRows(3 * alpha) = Mat::Identity(3 * alpha, 3 * alpha);
        const int qblk = prog.add_block(Mat::Zero(3 * alpha, 3 * alpha));
        prog.add_term(qblk, pvar, rq, -1.0);  // -Q >= 0
    }
    for (const auto& [a, b] : vertices.ab) {
        const int blk = prog.add_block(-eps_vertex *
                                       Mat::Identity(2 * alpha, 2 * alpha));
        prog.add_term(blk, pvar, multiplier_test_factor(a, b, alpha), 1.0);
    }
    if (magnitude_bound > 0.0) {
        const Mat bound = magnitude_bound * Mat::Identity(5 * alpha, 5 * alpha);
        const int hi = prog.add_block(bound);
        prog.add_term(hi, pvar, Mat::Identity(5 * alpha, 5 * alpha), -1.0);
        const int lo = prog.add_block(bound);
        prog.add_term(lo, pvar, Mat::Identity(5 * alpha, 5 * alpha), 1.0);
    }
}

inline double multiplier_vertex_margin(const Mat& p, int alpha,
                                       const DeltaVertexSet& vertices) {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : vertices.ab) {
        const Mat f = multiplier_test_factor(a, b, alpha);
        Eigen::SelfAdjointEigenSolver<Mat> es(f.transpose() * p * f,
                                              Eigen::EigenvaluesOnly);
        margin = std::min(margin, es.eigenvalues()(0));
    }
    return margin;
}

/// Smallest eigenvalue of the multiplier form over a dense sample of the
/// uncertainty arc itself (the set the theorem actually quantifies over).
inline double multiplier_arc_margin(const Mat& p, int alpha,
                                    const UncertaintyBox& box,
                                    int samples = 1000) {
    double margin = std::numeric_limits<double>::infinity();
    for (int s = 0; s <= samples; ++s) {
        const double rho =
            box.rho_l + (box.rho_u - box.rho_l) * s / static_cast<double>(samples);
        const double a = std::sqrt(rho);
        const double b = std::sqrt(std::max(0.0, 1.0 - rho));
        const Mat f = multiplier_test_factor(a, b, alpha);
        Eigen::SelfAdjointEigenSolver<Mat> es(f.transpose() * p * f,
                                              Eigen::EigenvaluesOnly);
        margin = std::min(margin, es.eigenvalues()(0));
    }
    return margin;
}

// ---------------------------------------------------------------------------
// Robust analysis (per-eigenvalue LMI families)
// ---------------------------------------------------------------------------

struct RobustOptions {
    int vertex_count = 17;
    bool consensus_deflation = false;  // skip the lambda = 0 constraints
    double eps_lmi = 1e-7;             // strictness shift, scaled per block
    double eps_vertex = 1e-6;          // multiplier vertex positivity margin
    // magnitude cap on the multiplier entries: the barrier otherwise inflates
    // their free directions until roundoff eats the certificate margins
    double multiplier_bound = 1e6;
    MultiplierMode multiplier_mode = MultiplierMode::vertex_certified;
    lmi::SolveSettings solver;
    bool gamma_by_bisection = false;  // fallback path instead of trace objective
    double bisection_rel_tol = 1e-3;
    // Optional warm start with "Y", "P1", "P2" from a related instance (the
    // certificates vary continuously in the eigenvalues, so neighbouring
    // graphs in a family share them); Z blocks are lifted automatically.
    std::map<std::string, Mat> warm_start;
};

struct RobustStabilityResult {
    lmi::Status status = lmi::Status::numerical_error;
    bool feasible = false;
    Mat y, p;
    std::vector<double> eigenvalues_used;
    DeltaVertexSet vertices;
    std::string diagnostic;
    lmi::SolveReport report;
};

struct RobustCertificate {
    lmi::Status status = lmi::Status::numerical_error;
    double gamma = std::numeric_limits<double>::quiet_NaN();
    Mat y, p1, p2;
    std::vector<Mat> z_blocks;
    std::vector<std::pair<double, int>> eigenvalue_groups;  // (lambda, mult)
    int modal_block_count = 0;
    DeltaVertexSet vertices;
    std::string diagnostic;
    lmi::SolveReport report;
};

namespace detail {

inline std::vector<SpectralData::Group> nonzero_groups(const SpectralData& sp) {
    std::vector<SpectralData::Group> out;
    for (const auto& g : sp.groups) {
        if (std::abs(g.value) <= sp.zero_scale) continue;
        if (g.value < 0.0)
            throw std::invalid_argument(
                "robust analysis: negative Laplacian eigenvalue");
        out.push_back(g);
    }
    return out;
}

inline bool ad_is_schur(const Mat& ad) {
    Eigen::EigenSolver<Mat> es(ad);
    return es.eigenvalues().cwiseAbs().maxCoeff() < 1.0;
}

inline double block_scale(const Mat& constant) {
    return std::max(1.0, constant.cwiseAbs().maxCoeff());
}

// P-channel factor shared by the stability and performance LMIs:
//   [0 I; 0 B3; sqrt(lambda) * coupled 0], sized 5*alpha x (lead + 3*alpha).
inline Mat p_channel(const Mat& coupled, double sqrt_lambda, int alpha, int lead) {
    Mat g = Mat::Zero(5 * alpha, lead + 3 * alpha);
    g.block(0, lead, 3 * alpha, 3 * alpha) =
        Mat::Identity(3 * alpha, 3 * alpha);
    g.block(3 * alpha, lead + 2 * alpha, alpha, alpha) =
        Mat::Identity(alpha, alpha);
    g.block(4 * alpha, 0, coupled.rows(), lead) = sqrt_lambda * coupled;
    return g;
}

}  // namespace detail

/// Theorem-style robust mean-square stability test: one nominal LMI plus one
/// modal LMI per deduplicated non-zero Laplacian eigenvalue, with a shared
/// Lyapunov block Y and a shared full-block multiplier P over the box.
/// Feasibility certifies stability for every admissible chain assignment;
/// infeasibility certifies nothing (the test is sufficient only).
inline RobustStabilityResult robust_stability(const DecomposableSystem& sys,
                                              const SpectralData& spectral,
                                              const UncertaintyBox& box,
                                              const RobustOptions& opts = {}) {
    check_dims(sys);
    check_box(box);
    RobustStabilityResult res;
    res.vertices = delta_vertices(box, opts.vertex_count);
    const auto groups = detail::nonzero_groups(spectral);
    for (const auto& g : groups) res.eigenvalues_used.push_back(g.value);

    if (!opts.consensus_deflation && !detail::ad_is_schur(sys.Ad)) {
        res.status = lmi::Status::infeasible;
        res.feasible = false;
        res.diagnostic =
            "Ad is not Schur, so the nominal LMI cannot hold; enable the "
            "consensus flag to restrict the test to non-zero eigenvalues";
        return res;
    }

    const int nx = sys.nx;
    lmi::LmiProgram prog;
    const int yvar = prog.add_sym_var("Y", nx);
    int pvar = -1;
    if (!groups.empty()) {
        pvar = prog.add_sym_var("P", 5 * nx);
        add_multiplier_constraints(prog, pvar, nx, res.vertices, opts.eps_vertex,
                                   opts.multiplier_mode, opts.multiplier_bound);
    }
    {
        const int pd = prog.add_block(-opts.eps_lmi * Mat::Identity(nx, nx));
        prog.add_term(pd, yvar, Mat::Identity(nx, nx), 1.0);
    }
    if (!opts.consensus_deflation) {
        const int nominal = prog.add_block(-opts.eps_lmi * Mat::Identity(nx, nx));
        prog.add_term(nominal, yvar, sys.Ad, -1.0);
        prog.add_term(nominal, yvar, Mat::Identity(nx, nx), 1.0);
    }
    const Mat b1 = Mat::Identity(nx, nx), zero13 = Mat::Zero(nx, 3 * nx);
    for (const auto& g : groups) {
        const double lam = g.value;
        const double sq = std::sqrt(lam);
        const int dim = 4 * nx;
        Mat r1(nx, dim), r2(nx, dim), r3(nx, dim);
        r1 << Mat::Identity(nx, nx), zero13;
        Mat b1sel = Mat::Zero(nx, 3 * nx);
        b1sel.leftCols(nx) = sq * b1;
        r2 << sys.Ad + lam * sys.Ap, b1sel;
        Mat b2sel = Mat::Zero(nx, 3 * nx);
        b2sel.middleCols(nx, nx) = b1;
        r3 << Mat::Zero(nx, nx), b2sel;
        const Mat gp = detail::p_channel(sys.Ac, sq, nx, nx);
        const int blk = prog.add_block(-opts.eps_lmi * Mat::Identity(dim, dim));
        prog.add_term(blk, yvar, r1, 1.0);
        prog.add_term(blk, yvar, r2, -1.0);
        prog.add_term(blk, yvar, r3, -2.0);
        prog.add_term(blk, pvar, gp, -1.0);
    }

    res.report = prog.solve(opts.solver);
    res.status = res.report.status;
    res.feasible = res.status == lmi::Status::feasible ||
                   res.status == lmi::Status::optimal;
    if (res.feasible) {
        res.y = res.report.values.at("Y");
        if (pvar >= 0) res.p = res.report.values.at("P");
    }
    res.diagnostic = res.report.message;
    return res;
}

/// Theorem-style robust H2 bound: minimizes the multiplicity-weighted trace
/// of the per-eigenvalue Z blocks subject to the gramian and trace modal
/// LMIs (multipliers P1, P2 over the box) plus the nominal zero-eigenvalue
/// LMIs, and returns gamma = sqrt(optimal trace). Any feasible iterate
/// already certifies its own gamma, so the reported bound is sound even
/// when the solve stops early.
inline RobustCertificate robust_h2(const DecomposableSystem& sys,
                                   const SpectralData& spectral,
                                   const UncertaintyBox& box,
                                   const RobustOptions& opts = {}) {
    check_dims(sys);
    check_box(box);
    RobustCertificate cert;
    cert.vertices = delta_vertices(box, opts.vertex_count);
    const auto groups = detail::nonzero_groups(spectral);
    cert.modal_block_count = static_cast<int>(groups.size());
    for (const auto& g : groups)
        cert.eigenvalue_groups.emplace_back(g.value, g.multiplicity);

    if (!opts.consensus_deflation && !detail::ad_is_schur(sys.Ad)) {
        cert.status = lmi::Status::infeasible;
        cert.diagnostic =
            "Ad is not Schur, so the nominal gramian LMI cannot hold; enable "
            "the consensus flag to restrict the test to non-zero eigenvalues";
        return cert;
    }

    const int nx = sys.nx, nw = sys.nw, nz = sys.nz;
    const int alpha = nx + nz;
    const bool with_zero = !opts.consensus_deflation && spectral.zero_count > 0;
    if (groups.empty() && !with_zero) {
        cert.status = lmi::Status::optimal;
        cert.gamma = 0.0;
        return cert;
    }

    lmi::LmiProgram prog;
    const int yvar = prog.add_sym_var("Y", nx);
    int p1 = -1, p2 = -1;
    if (!groups.empty()) {
        p1 = prog.add_sym_var("P1", 5 * alpha);
        p2 = prog.add_sym_var("P2", 5 * alpha);
        add_multiplier_constraints(prog, p1, alpha, cert.vertices, opts.eps_vertex,
                                   opts.multiplier_mode, opts.multiplier_bound);
        add_multiplier_constraints(prog, p2, alpha, cert.vertices, opts.eps_vertex,
                                   opts.multiplier_mode, opts.multiplier_bound);
    }
    {
        const int pd = prog.add_block(-opts.eps_lmi * Mat::Identity(nx, nx));
        prog.add_term(pd, yvar, Mat::Identity(nx, nx), 1.0);
    }

    // the bisection budget row couples every Z, so that path keeps them in
    // the shared group; the trace-objective path gives each Z its own group
    std::vector<int> zvars;
    std::vector<double> zweights;
    std::vector<int> zblocks;  // the trace block each Z must clear
    int group_id = 0;
    auto zgroup = [&] { return opts.gamma_by_bisection ? 0 : group_id; };
    if (with_zero) {
        ++group_id;
        const int z0 = prog.add_sym_var("Z0", nw, zgroup());
        zvars.push_back(z0);
        zweights.push_back(spectral.zero_count);
        // nominal gramian LMI
        Mat c18a = -sys.Cd.transpose() * sys.Cd;
        c18a.diagonal().array() -= opts.eps_lmi * detail::block_scale(c18a);
        const int blk_a = prog.add_block(c18a);
        prog.add_term(blk_a, yvar, sys.Ad, -1.0);
        prog.add_term(blk_a, yvar, Mat::Identity(nx, nx), 1.0);
        // nominal trace LMI
        Mat c18b = -sys.Dd.transpose() * sys.Dd;
        c18b.diagonal().array() -= opts.eps_lmi * detail::block_scale(c18b);
        const int blk_b = prog.add_block(c18b);
        prog.add_term(blk_b, yvar, sys.Bd, -1.0);
        prog.add_term(blk_b, z0, Mat::Identity(nw, nw), 1.0);
        zblocks.push_back(blk_b);
    }

    // alpha-row block selectors split into state and output sub-rows
    auto selector = [&](int which, int top) {
        // rows `top ? nx : nz` of block-row `which` of I_3 (x) I_alpha
        Mat s = Mat::Zero(top ? nx : nz, 3 * alpha);
        const int row0 = top ? 0 : nx;
        for (int i = 0; i < (top ? nx : nz); ++i)
            s(i, which * alpha + row0 + i) = 1.0;
        return s;
    };
    const Mat b1_top = selector(0, 1), b1_bot = selector(0, 0);
    const Mat b2_top = selector(1, 1), b2_bot = selector(1, 0);

    for (const auto& g : groups) {
        ++group_id;
        const double lam = g.value;
        const double sq = std::sqrt(lam);
        const int zv = prog.add_sym_var("Z" + std::to_string(group_id), nw, zgroup());
        zvars.push_back(zv);
        zweights.push_back(g.multiplicity);

        // gramian modal LMI, dimension nx + 3 alpha
        {
            const int dim = nx + 3 * alpha;
            Mat u_c(nz, dim), u_2i(nz, dim);
            u_c << sys.Cd + lam * sys.Cp, sq * b1_bot;
            u_2i << Mat::Zero(nz, nx), b2_bot;
            Mat constant = -(u_c.transpose() * u_c) -
                           2.0 * (u_2i.transpose() * u_2i);
            constant.diagonal().array() -=
                opts.eps_lmi * detail::block_scale(constant);
            const int blk = prog.add_block(constant);
            Mat r1(nx, dim), u_a(nx, dim), u_2y(nx, dim);
            r1 << Mat::Identity(nx, nx), Mat::Zero(nx, 3 * alpha);
            u_a << sys.Ad + lam * sys.Ap, sq * b1_top;
            u_2y << Mat::Zero(nx, nx), b2_top;
            prog.add_term(blk, yvar, r1, 1.0);
            prog.add_term(blk, yvar, u_a, -1.0);
            prog.add_term(blk, yvar, u_2y, -2.0);
            Mat coupled(alpha, nx);
            coupled << sys.Ac, sys.Cc;
            prog.add_term(blk, p1, detail::p_channel(coupled, sq, alpha, nx), -1.0);
        }
        // trace modal LMI, dimension nw + 3 alpha
        {
            const int dim = nw + 3 * alpha;
            Mat u_d(nz, dim), u_2i(nz, dim);
            u_d << sys.Dd + lam * sys.Dp, sq * b1_bot;
            u_2i << Mat::Zero(nz, nw), b2_bot;
            Mat constant = -(u_d.transpose() * u_d) -
                           2.0 * (u_2i.transpose() * u_2i);
            constant.diagonal().array() -=
                opts.eps_lmi * detail::block_scale(constant);
            const int blk = prog.add_block(constant);
            Mat rz(nw, dim), u_b(nx, dim), u_2y(nx, dim);
            rz << Mat::Identity(nw, nw), Mat::Zero(nw, 3 * alpha);
            u_b << sys.Bd + lam * sys.Bp, sq * b1_top;
            u_2y << Mat::Zero(nx, nw), b2_top;
            prog.add_term(blk, zvars.back(), rz, 1.0);
            prog.add_term(blk, yvar, u_b, -1.0);
            prog.add_term(blk, yvar, u_2y, -2.0);
            Mat coupled(alpha, nw);
            coupled << sys.Bc, sys.Dc;
            prog.add_term(blk, p2, detail::p_channel(coupled, sq, alpha, nw), -1.0);
            zblocks.push_back(blk);
        }
    }

    // Warm start: seed Y/P1/P2 from a related instance and lift every Z
    // isotropically until its trace block clears, so phase 1 starts at (or
    // next to) a strictly interior point.
    std::map<std::string, Mat> warm_values;
    const bool use_warm = opts.warm_start.count("Y") != 0 && p1 >= 0 &&
                          opts.warm_start.count("P1") != 0 &&
                          opts.warm_start.count("P2") != 0;
    if (use_warm) {
        warm_values["Y"] = opts.warm_start.at("Y");
        warm_values["P1"] = opts.warm_start.at("P1");
        warm_values["P2"] = opts.warm_start.at("P2");
        for (int zv : zvars)
            warm_values[prog.var_name(zv)] = Mat::Zero(nw, nw);
        for (int lift = 0; lift < 48; ++lift) {
            const auto margins = prog.verify(warm_values);
            bool ok = true;
            for (size_t i = 0; i < zblocks.size(); ++i) {
                const double m = margins[static_cast<size_t>(zblocks[i])];
                if (m < 0.5) {
                    warm_values[prog.var_name(zvars[i])] +=
                        (2.0 * std::abs(m) + 1.0) * Mat::Identity(nw, nw);
                    ok = false;
                }
            }
            if (ok) break;
        }
    }

    if (!opts.gamma_by_bisection) {
        for (size_t i = 0; i < zvars.size(); ++i)
            prog.add_trace_objective(zvars[i], zweights[i]);
        cert.report = prog.solve(opts.solver, use_warm ? &warm_values : nullptr);
        cert.status = cert.report.status;
        if (cert.status == lmi::Status::optimal ||
            cert.status == lmi::Status::feasible) {
            cert.gamma = std::sqrt(std::max(0.0, *cert.report.objective_value));
        }
    } else {
        // feasibility-only fallback: bisect gamma over an added trace budget
        auto with_budget = [&](double gamma) {
            lmi::LmiProgram trial = prog;
            const int budget = trial.add_block(Mat{{gamma * gamma}});
            for (size_t i = 0; i < zvars.size(); ++i)
                for (int d = 0; d < nw; ++d) {
                    Mat sel = Mat::Zero(nw, 1);
                    sel(d, 0) = 1.0;
                    trial.add_term(budget, zvars[i], sel, -zweights[i]);
                }
            return trial;
        };
        lmi::SolveReport last_good;
        auto feasible_at = [&](double gamma) {
            auto rep = with_budget(gamma).solve(opts.solver);
            const bool ok = rep.status == lmi::Status::feasible ||
                            rep.status == lmi::Status::optimal;
            if (ok) last_good = std::move(rep);
            return ok;
        };
        double lo = 0.0, hi = 1.0;
        int expand = 0;
        while (!feasible_at(hi) && expand++ < 60) {
            lo = hi;
            hi *= 2.0;
        }
        if (expand >= 60) {
            cert.status = lmi::Status::infeasible;
            cert.diagnostic = "bisection: no feasible gamma found";
            return cert;
        }
        while (hi - lo > opts.bisection_rel_tol * std::max(1.0, hi)) {
            const double mid = 0.5 * (lo + hi);
            (feasible_at(mid) ? hi : lo) = mid;
        }
        cert.gamma = hi;
        cert.status = lmi::Status::optimal;
        cert.report = std::move(last_good);  // certificate at the final bracket
    }

    if (cert.status == lmi::Status::optimal || cert.status == lmi::Status::feasible) {
        cert.y = cert.report.values.count("Y") ? cert.report.values.at("Y") : Mat();
        if (p1 >= 0) {
            cert.p1 = cert.report.values.at("P1");
            cert.p2 = cert.report.values.at("P2");
        }
        for (size_t i = 0; i < zvars.size(); ++i) {
            const std::string name = prog.var_name(zvars[i]);
            if (cert.report.values.count(name))
                cert.z_blocks.push_back(cert.report.values.at(name));
        }
    }
    if (cert.diagnostic.empty()) cert.diagnostic = cert.report.message;
    return cert;
}

/// Generic monotone bisection: finds the smallest gamma accepted by the
/// callback within the given relative tolerance. Throws if no feasible
/// gamma exists within the expansion budget.
inline double bisection_gamma(const std::function<bool(double)>& feasible,
                              double rel_tol = 1e-3, double hi0 = 1.0,
                              int max_steps = 200) {
    double lo = 0.0, hi = hi0;
    int expand = 0;
    while (!feasible(hi)) {
        lo = hi;
        hi *= 2.0;
        if (++expand > 60)
            throw std::runtime_error("bisection_gamma: empty bracket, no feasible "
                                     "gamma up to " + std::to_string(hi));
    }
    if (feasible(lo) && lo == 0.0) return 0.0;
    int steps = 0;
    while (hi - lo > rel_tol * std::max(1.0, hi) && steps++ < max_steps)
        (feasible(0.5 * (lo + hi)) ? hi : lo) = 0.5 * (lo + hi);
    return hi;
}

inline nlohmann::json to_json(const RobustCertificate& cert) {
    nlohmann::json j;
    j["status"] = lmi::to_string(cert.status);
    j["gamma"] = cert.gamma;
    j["modal_block_count"] = cert.modal_block_count;
    j["diagnostic"] = cert.diagnostic;
    auto to_rows = [](const Mat& m) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> r;
            for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
            rows.push_back(std::move(r));
        }
        return rows;
    };
    for (const auto& [lam, mult] : cert.eigenvalue_groups)
        j["eigenvalues"].push_back({{"lambda", lam}, {"multiplicity", mult}});
    if (cert.y.size() > 0) j["Y"] = to_rows(cert.y);
    if (cert.p1.size() > 0) j["P1"] = to_rows(cert.p1);
    if (cert.p2.size() > 0) j["P2"] = to_rows(cert.p2);
    for (const auto& z : cert.z_blocks) j["Z"].push_back(to_rows(z));
    j["vertices"] = {{"count", cert.vertices.ab.size()},
                     {"grid_points", cert.vertices.grid_points},
                     {"inflation", cert.vertices.inflation},
                     {"coverage_margin", cert.vertices.coverage_margin},
                     {"covered", cert.vertices.covered}};
    j["solver"] = {{"newton_iterations", cert.report.newton_iterations},
                   {"message", cert.report.message}};
    return j;
}

}  // namespace mjrobust
