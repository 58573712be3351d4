#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "mjrobust/graph.hpp"

namespace mjrobust::lmi {

enum class Status { optimal, feasible, infeasible, numerical_error, iteration_limit };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::optimal: return "optimal";
        case Status::feasible: return "feasible";
        case Status::infeasible: return "infeasible";
        case Status::numerical_error: return "numerical-error";
        case Status::iteration_limit: return "iteration-limit";
    }
    return "unknown";
}

struct SolveSettings {
    double gap_tol_rel = 1e-8;      // phase-II duality-gap target (relative)
    double feas_margin_goal = 1e-6; // phase-I early-exit margin (absolute)
    int max_newton_total = 4000;    // Newton iteration budget per phase
    int max_inner = 60;             // Newton iterations per centering step
    double newton_tol = 1e-8;       // decrement threshold for centering
    double tau_growth = 10.0;
    int max_outer = 40;
    double variable_bound = 1e12;   // |V_ij| box keeping the iterates compact
};

struct SolveReport {
    Status status = Status::numerical_error;
    std::map<std::string, Mat> values;  // symmetric variable assignments
    std::optional<double> objective_value;
    std::vector<double> margins;  // per-block smallest eigenvalue at solution
    int newton_iterations = 0;
    std::string message;
};

/// Linear SDP in inequality form. Variables are symmetric matrices; every
/// constraint block is an affine expression
///     F(x) = constant + sum_t  w_t * R_t^T V_t R_t   required PSD,
/// and the optional objective minimizes a weighted sum of variable traces.
/// Strictness is the caller's business (shift the constants); the solver
/// deals only in non-strict cones.
///
/// Variables carry a group tag. Group 0 is shared; variables of a nonzero
/// group may only meet group-0 variables inside a block. The Newton systems
/// then have block-arrow structure and are eliminated group by group, which
/// keeps per-eigenvalue LMI families linear-time in the group count.
class LmiProgram {
  public:
    int add_sym_var(const std::string& name, int dim, int group = 0) {
        if (dim <= 0) throw std::invalid_argument("lmi: variable dim must be positive");
        if (group < 0) throw std::invalid_argument("lmi: negative group");
        vars_.push_back({name, dim, group, dim * (dim + 1) / 2});
        return static_cast<int>(vars_.size()) - 1;
    }

    /// Adds weight * trace(V) to the minimized objective.
    void add_trace_objective(int var, double weight) {
        objective_.emplace_back(var, weight);
    }

    int add_block(Mat constant) {
        if (constant.rows() != constant.cols())
            throw std::invalid_argument("lmi: block constant not square");
        blocks_.push_back({std::move(constant), {}});
        return static_cast<int>(blocks_.size()) - 1;
    }

    /// Appends w * R^T V R to block `blk`; R maps block space to V space,
    /// i.e. R is dim(V) x dim(blk).
    void add_term(int blk, int var, Mat r, double weight) {
        auto& b = blocks_.at(static_cast<size_t>(blk));
        const auto& v = vars_.at(static_cast<size_t>(var));
        if (r.rows() != v.dim || r.cols() != b.constant.rows())
            throw std::invalid_argument("lmi: term factor has wrong shape for " +
                                        v.name);
        b.terms.push_back({var, std::move(r), weight});
    }

    int block_count() const { return static_cast<int>(blocks_.size()); }
    int var_count() const { return static_cast<int>(vars_.size()); }
    bool has_objective() const { return !objective_.empty(); }
    const std::string& var_name(int v) const {
        return vars_.at(static_cast<size_t>(v)).name;
    }

    /// `warm` seeds named variables with initial values (others start at
    /// zero); when the seeded point is already strictly interior, phase 1
    /// reduces to a margin check.
    SolveReport solve(const SolveSettings& settings = {},
                      const std::map<std::string, Mat>* warm = nullptr) const;

    /// Recomputes every block's smallest eigenvalue at the given assignment
    /// by a direct symmetric eigensolve, independent of the solver path.
    std::vector<double> verify(const std::map<std::string, Mat>& values) const {
        std::vector<double> margins;
        margins.reserve(blocks_.size());
        for (const auto& b : blocks_) {
            Mat f = b.constant;
            for (const auto& t : b.terms) {
                auto it = values.find(vars_[static_cast<size_t>(t.var)].name);
                if (it == values.end())
                    throw std::invalid_argument("lmi::verify: missing value for " +
                                                vars_[static_cast<size_t>(t.var)].name);
                f.noalias() += t.weight * t.r.transpose() * it->second * t.r;
            }
            if (f.rows() == 0) {
                margins.push_back(0.0);
                continue;
            }
            Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (f + f.transpose()),
                                                  Eigen::EigenvaluesOnly);
            margins.push_back(es.eigenvalues()(0));
        }
        return margins;
    }

    /// Debug dump in the sparse SDPA input format (F(x) = sum x_i F_i - F0),
    /// upper-triangle entries only. Intended for external cross-checks.
    void dump_sdpa(std::ostream& os) const;

  private:
    struct Var {
        std::string name;
        int dim;
        int group;
        int packed;  // number of scalars d(d+1)/2
    };
    struct Term {
        int var;
        Mat r;
        double weight;
    };
    struct Block {
        Mat constant;
        std::vector<Term> terms;
    };

    std::vector<Var> vars_;
    std::vector<Block> blocks_;
    std::vector<std::pair<int, double>> objective_;

    friend class BarrierSolver;
};

// ---------------------------------------------------------------------------
// Embedded barrier interior-point solver (path following on the log-det
// barrier with a phase-1 feasibility stage).
// ---------------------------------------------------------------------------

namespace testhook {
struct BarrierProbe;
}

class BarrierSolver {
    friend struct testhook::BarrierProbe;

  public:
    BarrierSolver(const LmiProgram& prog, const SolveSettings& settings)
        : p_(prog), s_(settings) {
        layout();
    }

    SolveReport run(const std::map<std::string, Mat>* warm = nullptr) {
        SolveReport rep;
        rep.status = Status::numerical_error;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(total_);
        if (warm) {
            for (size_t v = 0; v < p_.vars_.size(); ++v) {
                auto it = warm->find(p_.vars_[v].name);
                if (it == warm->end()) continue;
                const Mat& m = it->second;
                if (m.rows() != p_.vars_[v].dim || m.cols() != p_.vars_[v].dim)
                    continue;
                for (int j = 0; j < p_.vars_[v].dim; ++j)
                    for (int i = 0; i <= j; ++i)
                        x(xindex(static_cast<int>(v), i, j)) =
                            0.5 * (m(i, j) + m(j, i));
            }
        }
        const Status st1 = phase1(x, rep);
        if (st1 != Status::feasible) {
            rep.status = st1;
            return rep;
        }
        rep.status = Status::feasible;
        if (!p_.objective_.empty()) {
            rep.status = phase2(x, rep);
            if (rep.status == Status::optimal || rep.status == Status::feasible)
                rep.objective_value = objective_at(x);
        }
        if (rep.status == Status::optimal || rep.status == Status::feasible) {
            rep.values = unpack(x);
            rep.margins = p_.verify(rep.values);
        }
        return rep;
    }

  private:
    const LmiProgram& p_;
    SolveSettings s_;

    // Scalar layout: shared group first, then each local group, then (during
    // phase 1 only) the auxiliary margin variable t at index total_.
    std::vector<int> voffset_;      // offset of each var within its group
    std::vector<int> group_base_;   // base of each group in x (group 0 -> 0)
    std::vector<int> group_dim_;
    std::vector<int> block_group_;  // nonzero group of each block (0 if none)
    std::vector<double> block_scale_;  // 1 / max(1, |constant|): equalizes blocks
    int shared_dim_ = 0;
    int total_ = 0;
    int n_groups_ = 0;
    double total_cone_dim_ = 0.0;
    bool phase1_active_ = false;

    void layout() {
        int max_group = 0;
        for (const auto& v : p_.vars_) max_group = std::max(max_group, v.group);
        n_groups_ = max_group + 1;
        group_dim_.assign(static_cast<size_t>(n_groups_), 0);
        voffset_.assign(p_.vars_.size(), 0);
        for (size_t i = 0; i < p_.vars_.size(); ++i) {
            const auto& v = p_.vars_[i];
            voffset_[i] = group_dim_[static_cast<size_t>(v.group)];
            group_dim_[static_cast<size_t>(v.group)] += v.packed;
        }
        shared_dim_ = group_dim_[0];
        group_base_.assign(static_cast<size_t>(n_groups_), 0);
        int acc = shared_dim_;
        for (int g = 1; g < n_groups_; ++g) {
            group_base_[static_cast<size_t>(g)] = acc;
            acc += group_dim_[static_cast<size_t>(g)];
        }
        total_ = acc;
        block_group_.assign(p_.blocks_.size(), 0);
        block_scale_.assign(p_.blocks_.size(), 1.0);
        total_cone_dim_ = 0.0;
        for (size_t b = 0; b < p_.blocks_.size(); ++b) {
            total_cone_dim_ += static_cast<double>(p_.blocks_[b].constant.rows());
            if (p_.blocks_[b].constant.size() > 0)
                block_scale_[b] =
                    1.0 / std::max(1.0, p_.blocks_[b].constant.cwiseAbs().maxCoeff());
            int bg = 0;
            for (const auto& t : p_.blocks_[b].terms) {
                const int g = p_.vars_[static_cast<size_t>(t.var)].group;
                if (g == 0) continue;
                if (bg != 0 && bg != g)
                    throw std::invalid_argument(
                        "lmi: block mixes two local variable groups");
                bg = g;
            }
            block_group_[b] = bg;
        }
    }

    int total_full() const { return total_ + (phase1_active_ ? 1 : 0); }
    int sfull() const { return shared_dim_ + (phase1_active_ ? 1 : 0); }

    int xindex(int vi, int i, int j) const {  // packed upper triangle, i <= j
        const auto& v = p_.vars_[static_cast<size_t>(vi)];
        const int base = v.group == 0 ? 0 : group_base_[static_cast<size_t>(v.group)];
        return base + voffset_[static_cast<size_t>(vi)] + j * (j + 1) / 2 + i;
    }

    double objective_at(const Eigen::VectorXd& x) const {
        double obj = 0.0;
        for (auto [vi, w] : p_.objective_) {
            const auto& v = p_.vars_[static_cast<size_t>(vi)];
            for (int d = 0; d < v.dim; ++d) obj += w * x(xindex(vi, d, d));
        }
        return obj;
    }

    Eigen::VectorXd objective_gradient(int size) const {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(size);
        for (auto [vi, w] : p_.objective_) {
            const auto& v = p_.vars_[static_cast<size_t>(vi)];
            for (int d = 0; d < v.dim; ++d) c(xindex(vi, d, d)) += w;
        }
        return c;
    }

    Mat value_of(const Eigen::VectorXd& x, int vi) const {
        const auto& v = p_.vars_[static_cast<size_t>(vi)];
        Mat m(v.dim, v.dim);
        for (int j = 0; j < v.dim; ++j)
            for (int i = 0; i <= j; ++i) {
                const double val = x(xindex(vi, i, j));
                m(i, j) = val;
                m(j, i) = val;
            }
        return m;
    }

    std::map<std::string, Mat> unpack(const Eigen::VectorXd& x) const {
        std::map<std::string, Mat> out;
        for (size_t i = 0; i < p_.vars_.size(); ++i)
            out[p_.vars_[i].name] = value_of(x, static_cast<int>(i));
        return out;
    }

    // Block value in the solver's normalized scale (original F times
    // block_scale_); the auxiliary phase-1 margin t applies uniformly here.
    Mat block_value(size_t bi, const Eigen::VectorXd& x) const {
        const auto& b = p_.blocks_[bi];
        const double s = block_scale_[bi];
        Mat f = s * b.constant;
        if (phase1_active_) f.diagonal().array() += x(total_);
        for (const auto& term : b.terms)
            f.noalias() += (s * term.weight) * term.r.transpose() *
                           value_of(x, term.var) * term.r;
        return 0.5 * (f + f.transpose());
    }

    // Barrier value; +inf when x is not strictly interior.
    double barrier(const Eigen::VectorXd& x) const {
        double sum = 0.0;
        for (size_t bi = 0; bi < p_.blocks_.size(); ++bi) {
            if (p_.blocks_[bi].constant.rows() == 0) continue;
            Mat f = block_value(bi, x);
            Eigen::LLT<Mat> llt(f);
            if (llt.info() != Eigen::Success)
                return std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < f.rows(); ++i) {
                const double d = llt.matrixL()(i, i);
                if (!(d > 0.0)) return std::numeric_limits<double>::infinity();
                sum -= 2.0 * std::log(d);
            }
        }
        return sum;
    }

    struct NewtonSystem {
        Mat hss;                 // (shared [+ t]) square
        std::vector<Mat> hloc;   // per local group
        std::vector<Mat> hcross; // (shared [+ t]) x group_dim
        Eigen::VectorXd grad;
    };

    // Gradient and Hessian of  tau * c^T x - sum_j log det F_j(x).
    bool assemble(const Eigen::VectorXd& x, double tau,
                  const Eigen::VectorXd& c, NewtonSystem& ns) const {
        const int sf = sfull();
        ns.hss = Mat::Zero(sf, sf);
        ns.hloc.assign(static_cast<size_t>(n_groups_), Mat());
        ns.hcross.assign(static_cast<size_t>(n_groups_), Mat());
        for (int g = 1; g < n_groups_; ++g) {
            const int dg = group_dim_[static_cast<size_t>(g)];
            ns.hloc[static_cast<size_t>(g)] = Mat::Zero(dg, dg);
            ns.hcross[static_cast<size_t>(g)] = Mat::Zero(sf, dg);
        }
        ns.grad = tau * c;

        for (size_t bi = 0; bi < p_.blocks_.size(); ++bi) {
            const auto& b = p_.blocks_[bi];
            if (b.constant.rows() == 0) continue;
            const double bsc = block_scale_[bi];
            Mat f = block_value(bi, x);
            Eigen::LLT<Mat> llt(f);
            if (llt.info() != Eigen::Success) return false;
            Mat finv = llt.solve(Mat::Identity(f.rows(), f.cols()));

            const int nterm = static_cast<int>(b.terms.size());
            std::vector<Mat> rfinv(static_cast<size_t>(nterm));
            for (int a = 0; a < nterm; ++a)
                rfinv[static_cast<size_t>(a)].noalias() =
                    b.terms[static_cast<size_t>(a)].r * finv;

            for (int a = 0; a < nterm; ++a) {
                const auto& ta = b.terms[static_cast<size_t>(a)];
                const auto& va = p_.vars_[static_cast<size_t>(ta.var)];
                Mat g = rfinv[static_cast<size_t>(a)] * ta.r.transpose();
                const double w = bsc * ta.weight;
                for (int j = 0; j < va.dim; ++j)
                    for (int i = 0; i <= j; ++i)
                        ns.grad(xindex(ta.var, i, j)) -=
                            w * (i == j ? g(i, i) : 2.0 * g(i, j));
            }
            if (phase1_active_) ns.grad(total_) -= finv.trace();

            for (int a = 0; a < nterm; ++a) {
                const auto& ta = b.terms[static_cast<size_t>(a)];
                const auto& va = p_.vars_[static_cast<size_t>(ta.var)];
                for (int bb = a; bb < nterm; ++bb) {
                    const auto& tb = b.terms[static_cast<size_t>(bb)];
                    const auto& vb = p_.vars_[static_cast<size_t>(tb.var)];
                    Mat k = rfinv[static_cast<size_t>(a)] * tb.r.transpose();
                    Mat m(va.packed, vb.packed);
                    const double w = bsc * ta.weight * bsc * tb.weight;
                    for (int j = 0; j < va.dim; ++j)
                        for (int i = 0; i <= j; ++i) {
                            const int row = j * (j + 1) / 2 + i;
                            for (int l = 0; l < vb.dim; ++l)
                                for (int kk = 0; kk <= l; ++kk) {
                                    const int col = l * (l + 1) / 2 + kk;
                                    double h;
                                    if (i == j && kk == l)
                                        h = k(i, kk) * k(i, kk);
                                    else if (i == j)
                                        h = 2.0 * k(i, kk) * k(i, l);
                                    else if (kk == l)
                                        h = 2.0 * k(i, kk) * k(j, kk);
                                    else
                                        h = 2.0 * (k(i, kk) * k(j, l) +
                                                   k(i, l) * k(j, kk));
                                    m(row, col) = w * h;
                                }
                        }
                    accumulate(ns, ta.var, tb.var, m);
                    if (bb != a) accumulate(ns, tb.var, ta.var, m.transpose());
                }
                if (phase1_active_) {
                    // cross terms with the auxiliary t (coefficient matrix I)
                    Mat g2 = rfinv[static_cast<size_t>(a)] *
                             rfinv[static_cast<size_t>(a)].transpose();
                    Eigen::VectorXd col(va.packed);
                    for (int j = 0; j < va.dim; ++j)
                        for (int i = 0; i <= j; ++i)
                            col(j * (j + 1) / 2 + i) =
                                bsc * ta.weight *
                                (i == j ? g2(i, i) : 2.0 * g2(i, j));
                    add_t_cross(ns, ta.var, col);
                }
            }
            if (phase1_active_)
                ns.hss(sf - 1, sf - 1) += (finv * finv).trace();
        }
        return ns.grad.allFinite();
    }

    // Adds the Hessian block H[u, v] += m. hss and hloc hold both triangles,
    // so mirrored ordered pairs land once each; hcross stores only the
    // (shared, local) orientation, so the (local, shared) call is dropped --
    // its mirror arrives through the opposite ordered pair.
    void accumulate(NewtonSystem& ns, int ui, int vi, const Mat& m) const {
        const auto& u = p_.vars_[static_cast<size_t>(ui)];
        const auto& v = p_.vars_[static_cast<size_t>(vi)];
        const int uo = voffset_[static_cast<size_t>(ui)];
        const int vo = voffset_[static_cast<size_t>(vi)];
        if (u.group == 0 && v.group == 0) {
            ns.hss.block(uo, vo, u.packed, v.packed) += m;
        } else if (u.group == 0) {
            ns.hcross[static_cast<size_t>(v.group)].block(uo, vo, u.packed,
                                                          v.packed) += m;
        } else if (v.group == 0) {
            // implicit via the mirrored (shared, local) pair
        } else {
            ns.hloc[static_cast<size_t>(u.group)].block(uo, vo, u.packed,
                                                        v.packed) += m;
        }
    }

    void add_t_cross(NewtonSystem& ns, int vi, const Eigen::VectorXd& col) const {
        const auto& v = p_.vars_[static_cast<size_t>(vi)];
        const int vo = voffset_[static_cast<size_t>(vi)];
        const int sf = sfull();
        if (v.group == 0) {
            ns.hss.block(vo, sf - 1, v.packed, 1) += col;
            ns.hss.block(sf - 1, vo, 1, v.packed) += col.transpose();
        } else {
            ns.hcross[static_cast<size_t>(v.group)]
                .block(sf - 1, vo, 1, v.packed) += col.transpose();
        }
    }

    static bool factor_with_reg(const Mat& h, Eigen::LLT<Mat>& llt) {
        const double base =
            std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
        double reg = 0.0;
        for (int attempt = 0; attempt < 6; ++attempt) {
            Mat hr = h;
            if (reg > 0.0) hr.diagonal().array() += reg;
            llt.compute(hr);
            if (llt.info() == Eigen::Success) return true;
            reg = reg == 0.0 ? 1e-12 * base : reg * 100.0;
        }
        return false;
    }

    // Solves H d = -grad with block-arrow elimination over the local groups.
    bool newton_direction(const NewtonSystem& ns, Eigen::VectorXd& dir) const {
        const int sf = sfull();
        Mat schur = ns.hss;
        Eigen::VectorXd rshared(sf);
        rshared.head(shared_dim_) = -ns.grad.head(shared_dim_);
        if (phase1_active_) rshared(sf - 1) = -ns.grad(total_);
        std::vector<Eigen::LLT<Mat>> lfac(static_cast<size_t>(n_groups_));
        std::vector<Mat> y(static_cast<size_t>(n_groups_));
        std::vector<Eigen::VectorXd> z(static_cast<size_t>(n_groups_));
        for (int g = 1; g < n_groups_; ++g) {
            const int dg = group_dim_[static_cast<size_t>(g)];
            if (dg == 0) continue;
            if (!factor_with_reg(ns.hloc[static_cast<size_t>(g)],
                                 lfac[static_cast<size_t>(g)]))
                return false;
            y[static_cast<size_t>(g)] = lfac[static_cast<size_t>(g)].solve(
                ns.hcross[static_cast<size_t>(g)].transpose());
            z[static_cast<size_t>(g)] = lfac[static_cast<size_t>(g)].solve(
                -ns.grad.segment(group_base_[static_cast<size_t>(g)], dg));
            schur.noalias() -=
                ns.hcross[static_cast<size_t>(g)] * y[static_cast<size_t>(g)];
            rshared.noalias() -=
                ns.hcross[static_cast<size_t>(g)] * z[static_cast<size_t>(g)];
        }
        Eigen::LLT<Mat> sfac;
        if (!factor_with_reg(schur, sfac)) return false;
        Eigen::VectorXd dshared = sfac.solve(rshared);
        dir = Eigen::VectorXd::Zero(total_full());
        dir.head(shared_dim_) = dshared.head(shared_dim_);
        if (phase1_active_) dir(total_) = dshared(sf - 1);
        for (int g = 1; g < n_groups_; ++g) {
            const int dg = group_dim_[static_cast<size_t>(g)];
            if (dg == 0) continue;
            dir.segment(group_base_[static_cast<size_t>(g)], dg) =
                z[static_cast<size_t>(g)] - y[static_cast<size_t>(g)] * dshared;
        }
        return dir.allFinite();
    }

    struct CenterResult {
        double decrement = std::numeric_limits<double>::infinity();
        bool failed = false;   // no descent direction / non-finite data
        bool stalled = false;  // progress below the floating-point floor
    };

    // One centering run for fixed tau down to the given decrement tolerance.
    // The early_stop callback aborts centering as soon as its condition holds.
    CenterResult center(Eigen::VectorXd& x, double tau, const Eigen::VectorXd& c,
                        int& newton_used, double tol,
                        const std::function<bool(const Eigen::VectorXd&)>&
                            early_stop = {}) const {
        NewtonSystem ns;
        CenterResult res;
        double& decrement = res.decrement;
        for (int it = 0; it < s_.max_inner; ++it) {
            if (newton_used >= s_.max_newton_total) return res;
            if (!assemble(x, tau, c, ns)) {
                res.failed = true;
                return res;
            }
            Eigen::VectorXd dir;
            if (!newton_direction(ns, dir)) {
                res.failed = true;
                return res;
            }
            decrement = -ns.grad.dot(dir);
            if (decrement < 0.0) {
                // scale-free test: a tiny negative product is roundoff at a
                // (numerically) centered point, not a failed direction
                const double noise =
                    1e-12 * (1.0 + ns.grad.norm() * dir.norm());
                if (decrement > -noise) {
                    decrement = 0.0;
                    return res;
                }
                res.failed = true;
                return res;
            }
            if (decrement / 2.0 <= tol) return res;
            const double phi0 = tau * c.dot(x) + barrier(x);
            // Trial ladder: the full Newton step doubles as the path
            // predictor right after a tau boost, the damped step
            // 1/(1+lambda) of the self-concordant barrier guarantees
            // progress when the full step leaves the cone, and halving
            // handles the rest.
            const double lambda = std::sqrt(decrement);
            double step = 1.0;
            bool accepted = false;
            double phin = phi0;
            for (int ls = 0; ls < 60; ++ls) {
                Eigen::VectorXd xn = x + step * dir;
                phin = tau * c.dot(xn) + barrier(xn);
                if (std::isfinite(phin) && phin <= phi0 - 0.01 * step * decrement) {
                    x = xn;
                    accepted = true;
                    break;
                }
                if (ls == 0 && lambda > 0.25)
                    step = std::min(0.99, 1.0 / (1.0 + lambda));
                else
                    step *= 0.5;
            }
            ++newton_used;
#ifdef MJROBUST_TRACE_IPM
            std::fprintf(stderr, "    tau=%.2e it=%d dec=%.3e step=%.3e\n", tau,
                         it, decrement, step);
#endif
            if (!accepted) {
                res.stalled = true;  // even tiny steps rejected
                return res;
            }
            // realized progress at the floating-point resolution of phi means
            // the stage is as centered as arithmetic allows (near-null
            // multiplier directions can keep the reported decrement inflated)
            if (phi0 - phin <= 1e-12 * (1.0 + std::abs(phi0))) {
                res.stalled = true;
                return res;
            }
            if (early_stop && early_stop(x)) {
                res.decrement = 0.0;
                return res;
            }
        }
        return res;
    }

    Status phase1(Eigen::VectorXd& x, SolveReport& rep) {
        phase1_active_ = true;
        Eigen::VectorXd xt = Eigen::VectorXd::Zero(total_full());
        xt.head(total_) = x;
        // start strictly inside the augmented cone: t0 above the worst
        // violation of the (possibly warm-started) initial point
        double tmin = 0.0;
        for (size_t bi = 0; bi < p_.blocks_.size(); ++bi) {
            const auto& b = p_.blocks_[bi];
            if (b.constant.rows() == 0) continue;
            Mat f = block_value(bi, xt);  // xt's t slot is still zero
            Eigen::SelfAdjointEigenSolver<Mat> es(f, Eigen::EigenvaluesOnly);
            tmin = std::max(tmin, -es.eigenvalues()(0));
        }
        xt(total_) = tmin + std::max(0.1, 0.01 * tmin);

        Eigen::VectorXd c = Eigen::VectorXd::Zero(total_full());
        c(total_) = 1.0;
        // pure feasibility questions certify the requested margin; when an
        // objective phase follows, any strictly interior point will do and
        // the final margins are set by the phase-2 central path
        const double goal = p_.objective_.empty()
                                ? s_.feas_margin_goal
                                : std::min(s_.feas_margin_goal, 1e-9);
        auto reached = [&](const Eigen::VectorXd& xcur) {
            return xcur(total_) <= -goal;
        };

        double tau = 1.0;
        int newton_used = 0;
        int advances = 0, holds = 0;
        Status out = Status::iteration_limit;
        if (reached(xt)) out = Status::feasible;
        const double stage_tol = std::max(s_.newton_tol, 1e-5);
        while (out == Status::iteration_limit) {
            const auto cr = center(xt, tau, c, newton_used, stage_tol, reached);
            if (cr.failed) {
                out = Status::numerical_error;
                rep.message = "phase-1 numerical failure";
                break;
            }
            if (reached(xt)) {
                out = Status::feasible;
                break;
            }
            // the centered-point bound t* >= t - m/tau only holds near the
            // central path; certify from approximately centered points with
            // a slack that absorbs the residual centering error (a stalled
            // stage is NOT centered and must never certify)
            const double t_now = xt(total_);
            const bool centered =
                cr.decrement / 2.0 <= 1e-3 * std::max(1.0, std::abs(t_now));
            const double gap = total_cone_dim_ / tau;
            if (centered && t_now - 2.0 * gap - 0.05 * std::abs(t_now) > 0.0) {
                out = Status::infeasible;
                rep.message = "phase-1 margin lower bound above zero";
                break;
            }
            if (gap <= std::max(1e-12, 1e-3 * goal)) {
                // the gap floor is finer than the requested margin; growing
                // tau further cannot help, so decide now
                out = centered ? Status::infeasible : Status::iteration_limit;
                rep.message = centered
                                  ? "phase-1 margin provably below feasibility goal"
                                  : "phase-1 stalled at the gap floor "
                                    "(marginal problem)";
                break;
            }
            if (newton_used >= s_.max_newton_total) {
                rep.message = "phase-1 Newton budget exhausted";
                break;
            }
            // advance the ladder once the stage is adequately centered, from
            // a floating-point stall, or after a bounded number of holds
            if (cr.stalled || cr.decrement / 2.0 <= 10.0 * stage_tol ||
                ++holds > 4) {
                holds = 0;
                if (++advances >= s_.max_outer) {
                    rep.message = "phase-1 stage limit reached";
                    break;
                }
                tau *= s_.tau_growth;
            }
        }
        rep.newton_iterations += newton_used;
        phase1_active_ = false;
        x = xt.head(total_);
        return out;
    }

    Status phase2(Eigen::VectorXd& x, SolveReport& rep) {
        const Eigen::VectorXd c = objective_gradient(total_);
        double tau = std::max(1.0, total_cone_dim_ / (1.0 + std::abs(c.dot(x))));
        int newton_used = 0;
        int advances = 0, holds = 0;
        Status out = Status::iteration_limit;
        const double stage_tol = std::max(s_.newton_tol, 1e-4);
        while (true) {
            // loose centering while following the path, tight polish at the
            // final stage where the reported solution lives
            const auto cr = center(x, tau, c, newton_used, stage_tol);
            if (cr.failed) {
                out = Status::feasible;
                rep.message = "phase-2 numerical stall; interior point returned";
                break;
            }
            const double gap = total_cone_dim_ / tau;
            if (gap <= s_.gap_tol_rel * (1.0 + std::abs(c.dot(x)))) {
                center(x, tau, c, newton_used, s_.newton_tol);
                out = Status::optimal;
                break;
            }
            if (newton_used >= s_.max_newton_total) {
                out = Status::feasible;
                rep.message = "phase-2 Newton budget exhausted";
                break;
            }
            // advance once adequately centered, on a floating-point stall,
            // or after a bounded number of holds
            if (cr.stalled || cr.decrement / 2.0 <= 10.0 * stage_tol ||
                ++holds > 4) {
                holds = 0;
                if (++advances >= s_.max_outer) {
                    out = Status::feasible;
                    rep.message = "phase-2 stage limit reached";
                    break;
                }
                tau *= s_.tau_growth;
            }
        }
        rep.newton_iterations += newton_used;
        return out;
    }
};

inline SolveReport LmiProgram::solve(const SolveSettings& settings,
                                     const std::map<std::string, Mat>* warm) const {
    try {
        // Augment with per-variable boxes so phase 1 minimizes over a compact
        // set (otherwise infeasible instances can chase their infimum out to
        // infinity). The boxes stay inside each variable's group, reported
        // margins are truncated back to the caller's blocks.
        LmiProgram aug = *this;
        for (int v = 0; v < aug.var_count(); ++v) {
            const int dim = aug.vars_[static_cast<size_t>(v)].dim;
            const Mat bound = settings.variable_bound * Mat::Identity(dim, dim);
            const int hi = aug.add_block(bound);
            aug.add_term(hi, v, Mat::Identity(dim, dim), -1.0);
            const int lo = aug.add_block(bound);
            aug.add_term(lo, v, Mat::Identity(dim, dim), 1.0);
        }
        BarrierSolver solver(aug, settings);
        SolveReport rep = solver.run(warm);
        if (rep.margins.size() > blocks_.size()) rep.margins.resize(blocks_.size());
        return rep;
    } catch (const std::exception& e) {
        SolveReport rep;
        rep.status = Status::numerical_error;
        rep.message = e.what();
        return rep;
    }
}

inline void LmiProgram::dump_sdpa(std::ostream& os) const {
    std::vector<int> offset(vars_.size(), 0);
    int max_group = 0;
    for (const auto& v : vars_) max_group = std::max(max_group, v.group);
    int acc = 0;
    for (int g = 0; g <= max_group; ++g)
        for (size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i].group == g) {
                offset[i] = acc;
                acc += vars_[i].packed;
            }
    os << "* mjrobust LmiProgram; minimize c^T x s.t. F(x) = sum x_i F_i - F0 >= 0\n";
    os << acc << " = mdim\n";
    os << blocks_.size() << " = nblocks\n";
    for (size_t b = 0; b < blocks_.size(); ++b)
        os << blocks_[b].constant.rows() << (b + 1 < blocks_.size() ? " " : "");
    os << '\n';
    std::vector<double> c(static_cast<size_t>(acc), 0.0);
    for (auto [vi, w] : objective_) {
        const auto& v = vars_[static_cast<size_t>(vi)];
        for (int d = 0; d < v.dim; ++d)
            c[static_cast<size_t>(offset[static_cast<size_t>(vi)] +
                                  d * (d + 1) / 2 + d)] += w;
    }
    for (size_t i = 0; i < c.size(); ++i) os << c[i] << (i + 1 < c.size() ? " " : "");
    os << '\n';
    os.precision(17);
    for (size_t b = 0; b < blocks_.size(); ++b) {
        const Mat& f0 = blocks_[b].constant;
        for (Eigen::Index i = 0; i < f0.rows(); ++i)
            for (Eigen::Index j = i; j < f0.cols(); ++j)
                if (f0(i, j) != 0.0)
                    os << "0 " << b + 1 << ' ' << i + 1 << ' ' << j + 1 << ' '
                       << -f0(i, j) << '\n';
        for (const auto& t : blocks_[b].terms) {
            const auto& v = vars_[static_cast<size_t>(t.var)];
            for (int jj = 0; jj < v.dim; ++jj)
                for (int ii = 0; ii <= jj; ++ii) {
                    Mat e = Mat::Zero(v.dim, v.dim);
                    e(ii, jj) = e(jj, ii) = 1.0;
                    Mat a = t.weight * t.r.transpose() * e * t.r;
                    const int scalar =
                        offset[static_cast<size_t>(t.var)] + jj * (jj + 1) / 2 + ii;
                    for (Eigen::Index i = 0; i < a.rows(); ++i)
                        for (Eigen::Index j = i; j < a.cols(); ++j)
                            if (std::abs(a(i, j)) > 0.0)
                                os << scalar + 1 << ' ' << b + 1 << ' ' << i + 1
                                   << ' ' << j + 1 << ' ' << a(i, j) << '\n';
                }
        }
    }
}

}  // namespace mjrobust::lmi
