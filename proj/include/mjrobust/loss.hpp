#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mjrobust/graph.hpp"

namespace mjrobust {

/// Two-state Markov chain of one communication link. p is the probability of
/// staying in the transmitting state, q the probability of recovering from a
/// loss, eta the probability that the link starts out transmitting.
struct EdgeChain {
    double p = 1.0;
    double q = 1.0;
    double eta = 1.0;
};

enum class Correlation {
    symmetric_markov,      // one shared chain per undirected edge
    independent_bernoulli  // p == q on every edge, no correlation in time
};

inline const char* to_string(Correlation c) {
    return c == Correlation::symmetric_markov ? "symmetric-markov"
                                              : "independent-bernoulli";
}

/// Packet-loss model: one chain per undirected edge of the nominal graph,
/// plus the probability box that all chain parameters are assumed to live in.
struct LossModel {
    UndirectedGraph graph;
    std::vector<EdgeChain> chains;  // aligned with graph.edges
    Correlation correlation = Correlation::symmetric_markov;
    double rho_l = 0.0;
    double rho_u = 1.0;
};

/// Joint mode index over all edges. Bit b (least-significant first) carries
/// the transmit state of edge b in the graph's stored edge order.
struct ModeIndex {
    std::uint32_t index = 0;

    int bit(int edge) const { return static_cast<int>((index >> edge) & 1u); }
};

inline constexpr int kDefaultModeCap = 14;

/// Conditional success probability of one link given its previous state.
inline double alpha(const EdgeChain& chain, int prev_bit) {
    return prev_bit ? chain.p : chain.q;
}

/// Enumerated joint Markov chain over all 2^|E| edge-state combinations.
struct JointChain {
    Mat t;   // m x m transition matrix
    Vec mu;  // initial distribution
};

inline std::size_t mode_count(const LossModel& model, int mode_cap = kDefaultModeCap) {
    const int m = model.graph.edge_count();
    if (m > mode_cap)
        throw std::runtime_error(
            "loss model: oracle intractable, |E| = " + std::to_string(m) +
            " exceeds mode cap " + std::to_string(mode_cap));
    return std::size_t{1} << m;
}

inline JointChain joint_chain(const LossModel& model, int mode_cap = kDefaultModeCap) {
    const std::size_t m = mode_count(model, mode_cap);
    const int ne = model.graph.edge_count();
    JointChain jc;
    jc.t = Mat::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    jc.mu = Vec::Zero(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        double pi = 1.0;
        for (int e = 0; e < ne; ++e) {
            const double eta = model.chains[e].eta;
            pi *= ((i >> e) & 1u) ? eta : 1.0 - eta;
        }
        jc.mu(static_cast<Eigen::Index>(i)) = pi;
        for (std::size_t j = 0; j < m; ++j) {
            double tij = 1.0;
            for (int e = 0; e < ne; ++e) {
                const double a = alpha(model.chains[e], (i >> e) & 1u);
                tij *= ((j >> e) & 1u) ? a : 1.0 - a;
            }
            jc.t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tij;
        }
    }
    return jc;
}

/// Laplacian of the subgraph keeping exactly the edges whose mode bit is 1.
inline Eigen::MatrixXi mode_laplacian(const UndirectedGraph& g, ModeIndex mode) {
    Eigen::MatrixXi l = Eigen::MatrixXi::Zero(g.vertex_count, g.vertex_count);
    for (int e = 0; e < g.edge_count(); ++e) {
        if (!mode.bit(e)) continue;
        const auto& [i, j] = g.edges[e];
        l(i - 1, j - 1) -= 1;
        l(j - 1, i - 1) -= 1;
        l(i - 1, i - 1) += 1;
        l(j - 1, j - 1) += 1;
    }
    return l;
}

/// Conditional first and second moments of the stochastic Laplacian given the
/// previous joint mode, factorized through the incidence matrix.
struct LaplacianMoments {
    Mat expectation;       // Phi diag(alpha_e) Phi^T
    Mat variance;          // Phi diag(alpha_e (1 - alpha_e)) Phi^T
    Mat expected_product;  // E^T E + 2 V under symmetric loss
};

inline LaplacianMoments conditional_moments(const LossModel& model, ModeIndex prev) {
    const int ne = model.graph.edge_count();
    Vec a(ne), v(ne);
    for (int e = 0; e < ne; ++e) {
        const double ae = alpha(model.chains[e], prev.bit(e));
        a(e) = ae;
        v(e) = ae * (1.0 - ae);
    }
    const Mat phi = incidence(model.graph).cast<double>();
    LaplacianMoments m;
    m.expectation = phi * a.asDiagonal() * phi.transpose();
    m.variance = phi * v.asDiagonal() * phi.transpose();
    m.expected_product =
        m.expectation.transpose() * m.expectation + 2.0 * m.variance;
    return m;
}

/// Checks the modelling assumptions. Returns one human-readable violation per
/// failed bound, naming the offending edge; empty means compliant.
inline std::vector<std::string> validate(const LossModel& model) {
    std::vector<std::string> out;
    auto edge_name = [&](int e) {
        return "{" + std::to_string(model.graph.edges[e].first) + "," +
               std::to_string(model.graph.edges[e].second) + "}";
    };
    if (model.chains.size() != static_cast<std::size_t>(model.graph.edge_count())) {
        out.push_back("chain count does not match edge count");
        return out;
    }
    if (!(0.0 <= model.rho_l && model.rho_l <= model.rho_u && model.rho_u <= 1.0))
        out.push_back("box: need 0 <= rho_l <= rho_u <= 1");
    for (int e = 0; e < model.graph.edge_count(); ++e) {
        const EdgeChain& c = model.chains[e];
        auto in_unit = [](double x) { return 0.0 <= x && x <= 1.0; };
        if (!in_unit(c.p) || !in_unit(c.q) || !in_unit(c.eta))
            out.push_back("edge " + edge_name(e) + ": probability outside [0,1]");
        if (model.correlation == Correlation::independent_bernoulli && c.p != c.q)
            out.push_back("edge " + edge_name(e) +
                          ": independent-bernoulli requires p = q");
        for (auto [val, name] : {std::pair{c.p, "p"}, {c.q, "q"}, {c.eta, "eta"}}) {
            if (val < model.rho_l || val > model.rho_u)
                out.push_back("edge " + edge_name(e) + ": " + name + " = " +
                              std::to_string(val) + " outside box [" +
                              std::to_string(model.rho_l) + ", " +
                              std::to_string(model.rho_u) + "]");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model constructors
// ---------------------------------------------------------------------------

/// Bernoulli loss with the same success probability on every edge.
inline LossModel uniform_loss(const UndirectedGraph& g, double p) {
    if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("uniform_loss: p outside [0,1]");
    LossModel m;
    m.graph = g;
    m.chains.assign(g.edges.size(), EdgeChain{p, p, p});
    m.correlation = Correlation::independent_bernoulli;
    m.rho_l = p;
    m.rho_u = p;
    return m;
}

/// Heterogeneous chains drawn uniformly from the box (p = q in the
/// Bernoulli case so that the draw satisfies the correlation assumption).
inline LossModel random_loss(const UndirectedGraph& g, double rho_l, double rho_u,
                             std::uint64_t seed,
                             Correlation corr = Correlation::symmetric_markov) {
    if (!(0.0 <= rho_l && rho_l <= rho_u && rho_u <= 1.0))
        throw std::invalid_argument("random_loss: bad box");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(rho_l, rho_u);
    LossModel m;
    m.graph = g;
    m.correlation = corr;
    m.rho_l = rho_l;
    m.rho_u = rho_u;
    m.chains.reserve(g.edges.size());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        EdgeChain c;
        c.p = u(rng);
        c.q = corr == Correlation::independent_bernoulli ? c.p : u(rng);
        c.eta = u(rng);
        m.chains.push_back(c);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Serialization: header lines declaring correlation and box, then one line
// "i j p q eta" per edge.
// ---------------------------------------------------------------------------

inline void write_loss_model(std::ostream& os, const LossModel& m) {
    os << "correlation " << to_string(m.correlation) << '\n';
    os << "box " << m.rho_l << ' ' << m.rho_u << '\n';
    for (int e = 0; e < m.graph.edge_count(); ++e)
        os << m.graph.edges[e].first << ' ' << m.graph.edges[e].second << ' '
           << m.chains[e].p << ' ' << m.chains[e].q << ' ' << m.chains[e].eta
           << '\n';
}

/// Parses a loss model for a known graph; edges may appear in any order but
/// must match the graph's edge set exactly.
inline LossModel read_loss_model(std::istream& is, const UndirectedGraph& g) {
    LossModel m;
    m.graph = g;
    m.chains.assign(g.edges.size(), EdgeChain{});
    std::vector<bool> seen(g.edges.size(), false);
    std::string key;
    if (!(is >> key) || key != "correlation")
        throw std::runtime_error("loss model: expected 'correlation'");
    std::string mode;
    is >> mode;
    if (mode == "symmetric-markov")
        m.correlation = Correlation::symmetric_markov;
    else if (mode == "independent-bernoulli")
        m.correlation = Correlation::independent_bernoulli;
    else
        throw std::runtime_error("loss model: unknown correlation '" + mode + "'");
    if (!(is >> key) || key != "box" || !(is >> m.rho_l >> m.rho_u))
        throw std::runtime_error("loss model: expected 'box rho_l rho_u'");
    int i, j;
    while (is >> i >> j) {
        EdgeChain c;
        if (!(is >> c.p >> c.q >> c.eta))
            throw std::runtime_error("loss model: truncated edge line");
        if (i > j) std::swap(i, j);
        bool found = false;
        for (int e = 0; e < g.edge_count(); ++e) {
            if (g.edges[e] == std::pair{i, j}) {
                if (seen[e]) throw std::runtime_error("loss model: duplicate edge");
                m.chains[e] = c;
                seen[e] = true;
                found = true;
                break;
            }
        }
        if (!found)
            throw std::runtime_error("loss model: edge {" + std::to_string(i) +
                                     "," + std::to_string(j) + "} not in graph");
    }
    for (int e = 0; e < g.edge_count(); ++e)
        if (!seen[e])
            throw std::runtime_error("loss model: missing chain for an edge");
    return m;
}

inline std::string to_loss_string(const LossModel& m) {
    std::ostringstream os;
    os.precision(17);
    write_loss_model(os, m);
    return os.str();
}

inline LossModel loss_from_string(const std::string& s, const UndirectedGraph& g) {
    std::istringstream is(s);
    return read_loss_model(is, g);
}

}  // namespace mjrobust
