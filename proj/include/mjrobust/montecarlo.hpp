#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "mjrobust/decomposable.hpp"
#include "mjrobust/graph.hpp"
#include "mjrobust/loss.hpp"

namespace mjrobust {

/// Counter-based generator (splitmix64 finalizer chain). Every draw is a
/// pure function of (seed, trial, edge, step), so parallel trials reproduce
/// bit-identically regardless of scheduling.
struct CounterRng {
    std::uint64_t seed = 0;

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t trial_stream(std::uint64_t trial) const {
        return mix(mix(seed ^ 0x6a09e667f3bcc909ULL) ^ trial);
    }

    static double u01_from(std::uint64_t stream, std::uint32_t edge,
                           std::uint32_t step) {
        const std::uint64_t h =
            mix(stream ^ ((static_cast<std::uint64_t>(edge) << 32) | step));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    }

    double u01(std::uint64_t trial, std::uint32_t edge, std::uint32_t step) const {
        return u01_from(trial_stream(trial), edge, step);
    }
};

struct SimConfig {
    int horizon = 500;
    long trials = 10000;
    std::uint64_t seed = 0;
    int sampled_inputs = 0;  // 0 = excite every input; k > 0 = uniform subsample
    int threads = 0;         // 0 = use hardware concurrency
    std::string dump_path;   // optional per-step energy trace CSV
};

struct SimEstimate {
    double h2 = 0.0;
    double ci95 = 0.0;        // half width on the h2 estimate (delta method)
    double mean_energy = 0.0; // mean per-trial squared impulse-response energy
    double tail_fraction = 0.0;
    bool tail_warning = false;
    long trials = 0;
    bool subsampled = false;
    double reweight = 1.0;
};

namespace detail {

// Channel descriptor in the transposed layout: the stacked network state
// x in R^(N*rows) is held as a rows x (N*cols) matrix whose column block a
// carries agent a. The decoupled part then becomes one dense product and
// the Laplacian parts act by column-block differences along the edges.
struct Channel {
    const Mat* md;
    const Mat* mc;
    const Mat* mp;
    bool use_d, use_c, use_p;

    Channel(const Mat& d, const Mat& c, const Mat& p)
        : md(&d), mc(&c), mp(&p),
          use_d(!d.isZero(0.0)), use_c(!c.isZero(0.0)), use_p(!p.isZero(0.0)) {}
};

// out = (I (x) Md + L_theta (x) Mc + L0 (x) Mp) applied to x (transposed
// layout, `cols` columns per agent).
inline void apply_channel(const Channel& ch, const UndirectedGraph& g,
                          const std::vector<std::uint8_t>& bits, const Mat& x,
                          Eigen::Index cols, Mat& out, Mat& scratch) {
    out.resize(ch.md->rows(), x.cols());
    if (ch.use_d)
        out.noalias() = *ch.md * x;
    else
        out.setZero();
    for (int pass = 0; pass < 2; ++pass) {
        const bool masked = pass == 0;
        if (masked ? !ch.use_c : !ch.use_p) continue;
        scratch.resize(x.rows(), x.cols());
        scratch.setZero();
        for (int e = 0; e < g.edge_count(); ++e) {
            if (masked && !bits[static_cast<size_t>(e)]) continue;
            const auto i =
                static_cast<Eigen::Index>(g.edges[static_cast<size_t>(e)].first - 1);
            const auto j = static_cast<Eigen::Index>(
                g.edges[static_cast<size_t>(e)].second - 1);
            auto xi = x.middleCols(i * cols, cols);
            auto xj = x.middleCols(j * cols, cols);
            scratch.middleCols(i * cols, cols) += xi - xj;
            scratch.middleCols(j * cols, cols) += xj - xi;
        }
        out.noalias() += (masked ? *ch.mc : *ch.mp) * scratch;
    }
}

}  // namespace detail

/// Single simulator step x+ = A_sigma x + B_sigma w, z = C_sigma x + D_sigma w
/// for the joint mode given by the per-edge transmission bits.
struct StepResult {
    Vec next_state;
    Vec output;
};

inline StepResult sim_step(const DecomposableSystem& sys, const UndirectedGraph& g,
                           const std::vector<std::uint8_t>& bits, const Vec& x,
                           const Vec& w) {
    check_dims(sys);
    if (static_cast<int>(bits.size()) != g.edge_count())
        throw std::invalid_argument("sim_step: bit vector does not match edges");
    if (x.size() != g.vertex_count * sys.nx || w.size() != g.vertex_count * sys.nw)
        throw std::invalid_argument("sim_step: state or input size mismatch");
    // agent-stacked vectors reinterpret as the transposed layout for free
    Eigen::Map<const Mat> xm(x.data(), sys.nx, g.vertex_count);
    Eigen::Map<const Mat> wm(w.data(), sys.nw, g.vertex_count);
    const detail::Channel a_ch(sys.Ad, sys.Ac, sys.Ap);
    const detail::Channel b_ch(sys.Bd, sys.Bc, sys.Bp);
    const detail::Channel c_ch(sys.Cd, sys.Cc, sys.Cp);
    const detail::Channel d_ch(sys.Dd, sys.Dc, sys.Dp);
    Mat out, tmp, scratch;
    StepResult r;
    detail::apply_channel(a_ch, g, bits, xm, 1, out, scratch);
    detail::apply_channel(b_ch, g, bits, wm, 1, tmp, scratch);
    out += tmp;
    r.next_state = Eigen::Map<Vec>(out.data(), out.size());
    detail::apply_channel(c_ch, g, bits, xm, 1, out, scratch);
    detail::apply_channel(d_ch, g, bits, wm, 1, tmp, scratch);
    out += tmp;
    r.output = Eigen::Map<Vec>(out.data(), out.size());
    return r;
}

/// Monte Carlo estimate of the MJLS H2 norm per its impulse-response
/// definition: average of squared output energies over initial modes drawn
/// from eta, per-edge Markov loss paths, and impulse input positions.
/// Divergence (sustained energy growth across dyadic checkpoints) aborts.
inline SimEstimate estimate_h2(const DecomposableSystem& sys,
                               const UndirectedGraph& g, const LossModel& model,
                               const SimConfig& cfg) {
    check_dims(sys);
    if (cfg.horizon < 1 || cfg.trials < 1)
        throw std::invalid_argument("estimate_h2: need horizon >= 1, trials >= 1");
    const int ne = g.edge_count();
    const int n_inputs = g.vertex_count * sys.nw;
    const int k_inputs =
        cfg.sampled_inputs > 0 ? std::min(cfg.sampled_inputs, n_inputs) : n_inputs;
    const double reweight =
        static_cast<double>(n_inputs) / static_cast<double>(k_inputs);
    const CounterRng rng{CounterRng::mix(cfg.seed)};
    constexpr std::uint32_t kInputStream = 0xffffffffu;

    const long chunk_size = 1024;
    const long n_chunks = (cfg.trials + chunk_size - 1) / chunk_size;
    struct ChunkStat {
        double sum = 0.0, sumsq = 0.0, tail = 0.0;
        bool diverged = false;
    };
    std::vector<ChunkStat> stats(static_cast<size_t>(n_chunks));

    const long dump_limit = std::min<long>(cfg.trials, 64);
    std::vector<std::string> dump_rows(
        cfg.dump_path.empty() ? 0 : static_cast<size_t>(dump_limit));

    const detail::Channel a_ch(sys.Ad, sys.Ac, sys.Ap);
    const detail::Channel b_ch(sys.Bd, sys.Bc, sys.Bp);
    const detail::Channel c_ch(sys.Cd, sys.Cc, sys.Cp);
    const detail::Channel d_ch(sys.Dd, sys.Dc, sys.Dp);

    // impulse experiments in the transposed layout: column a*k + s excites
    // experiment s, and rows are the per-agent input channels
    Mat impulses = Mat::Zero(sys.nw, static_cast<Eigen::Index>(g.vertex_count) *
                                         k_inputs);
    const bool fixed_inputs = k_inputs == n_inputs;
    if (fixed_inputs)
        for (int s = 0; s < n_inputs; ++s)
            impulses(s % sys.nw, static_cast<Eigen::Index>(s / sys.nw) * k_inputs +
                                     s) = 1.0;

    auto run_trial = [&](long trial, std::string* dump) -> std::pair<double, double> {
        const std::uint64_t stream =
            rng.trial_stream(static_cast<std::uint64_t>(trial));
        std::vector<std::uint8_t> bits(static_cast<size_t>(ne));
        for (int e = 0; e < ne; ++e)
            bits[static_cast<size_t>(e)] =
                CounterRng::u01_from(stream, static_cast<std::uint32_t>(e), 0) <
                model.chains[static_cast<size_t>(e)].eta;

        Mat w = impulses;
        if (!fixed_inputs) {
            w.setZero();
            for (int s = 0; s < k_inputs; ++s) {
                const double u = CounterRng::u01_from(
                    stream, kInputStream, static_cast<std::uint32_t>(s));
                const int pick =
                    std::min(n_inputs - 1, static_cast<int>(u * n_inputs));
                w(pick % sys.nw,
                  static_cast<Eigen::Index>(pick / sys.nw) * k_inputs + s) = 1.0;
            }
        }

        Mat x, z, scratch, tmp;
        detail::apply_channel(b_ch, g, bits, w, k_inputs, x, scratch);
        detail::apply_channel(d_ch, g, bits, w, k_inputs, tmp, scratch);
        double energy = tmp.squaredNorm();
        double tail_energy = 0.0;
        double window = energy, prev_window = 0.0;
        int next_checkpoint = 32, grow_count = 0;
        const int tail_start = cfg.horizon - std::max(1, cfg.horizon / 10);
        if (dump) *dump += "0," + std::to_string(trial) + "," +
                           std::to_string(energy) + "\n";
        for (int k = 1; k <= cfg.horizon; ++k) {
            for (int e = 0; e < ne; ++e) {
                const auto& ch = model.chains[static_cast<size_t>(e)];
                const double stay = bits[static_cast<size_t>(e)] ? ch.p : ch.q;
                bits[static_cast<size_t>(e)] =
                    CounterRng::u01_from(stream, static_cast<std::uint32_t>(e),
                                         static_cast<std::uint32_t>(k)) < stay;
            }
            detail::apply_channel(c_ch, g, bits, x, k_inputs, z, scratch);
            const double ez = z.squaredNorm();
            energy += ez;
            window += ez;
            if (k > tail_start) tail_energy += ez;
            detail::apply_channel(a_ch, g, bits, x, k_inputs, tmp, scratch);
            x.swap(tmp);
            if (dump) *dump += std::to_string(k) + "," + std::to_string(trial) +
                               "," + std::to_string(energy) + "\n";
            if (k == next_checkpoint) {
                if (window > 2.0 * prev_window && prev_window > 0.0)
                    ++grow_count;
                else
                    grow_count = 0;
                if (grow_count >= 3 || !std::isfinite(energy))
                    throw std::runtime_error(
                        "estimate_h2: trajectory energy diverges (trial " +
                        std::to_string(trial) + ")");
                prev_window = window;
                window = 0.0;
                next_checkpoint *= 2;
            }
        }
        if (!std::isfinite(energy))
            throw std::runtime_error("estimate_h2: non-finite trajectory energy");
        const double y = energy * reweight;
        const double tail_frac = energy > 0.0 ? tail_energy / energy : 0.0;
        return {y, tail_frac};
    };

    std::atomic<long> next_chunk{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const long c = next_chunk.fetch_add(1);
            if (c >= n_chunks || failed.load()) return;
            const long lo = c * chunk_size;
            const long hi = std::min(cfg.trials, lo + chunk_size);
            ChunkStat st;
            double comp_sum = 0.0, comp_sq = 0.0;  // Kahan compensation
            try {
                for (long t = lo; t < hi; ++t) {
                    std::string* dump = nullptr;
                    if (!cfg.dump_path.empty() && t < dump_limit)
                        dump = &dump_rows[static_cast<size_t>(t)];
                    auto [y, tail] = run_trial(t, dump);
                    double v = y - comp_sum;
                    double s = st.sum + v;
                    comp_sum = (s - st.sum) - v;
                    st.sum = s;
                    v = y * y - comp_sq;
                    s = st.sumsq + v;
                    comp_sq = (s - st.sumsq) - v;
                    st.sumsq = s;
                    st.tail = std::max(st.tail, tail);
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                failed.store(true);
                if (failure.empty()) failure = e.what();
                return;
            }
            stats[static_cast<size_t>(c)] = st;
        }
    };

    int nthreads = cfg.threads > 0
                       ? cfg.threads
                       : static_cast<int>(std::thread::hardware_concurrency());
    nthreads = std::max(1, static_cast<int>(std::min<long>(nthreads, n_chunks)));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed.load()) throw std::runtime_error(failure);

    // deterministic reduction in chunk order
    double sum = 0.0, sumsq = 0.0, tail = 0.0, comp = 0.0;
    for (const auto& st : stats) {
        const double v = st.sum - comp;
        const double s = sum + v;
        comp = (s - sum) - v;
        sum = s;
        sumsq += st.sumsq;
        tail = std::max(tail, st.tail);
    }
    const auto n = static_cast<double>(cfg.trials);
    const double mean = sum / n;
    SimEstimate est;
    est.trials = cfg.trials;
    est.mean_energy = mean;
    est.h2 = std::sqrt(std::max(0.0, mean));
    est.subsampled = k_inputs < n_inputs;
    est.reweight = reweight;
    est.tail_fraction = tail;
    est.tail_warning = tail > 1e-6;
    if (cfg.trials > 1 && mean > 0.0) {
        const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
        est.ci95 = 1.96 * std::sqrt(var / n) / (2.0 * std::sqrt(mean));
    }
    if (!cfg.dump_path.empty()) {
        std::ofstream f(cfg.dump_path);
        if (!f) throw std::runtime_error("estimate_h2: cannot open dump path");
        f << "k,trial,energy\n";
        if (dump_limit < cfg.trials)
            f << "# traces truncated to the first " << dump_limit << " trials\n";
        for (const auto& row : dump_rows) f << row;
    }
    return est;
}

}  // namespace mjrobust
