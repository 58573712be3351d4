#pragma once

#include <random>
#include <vector>

#include "mjrobust/graph.hpp"
#include "mjrobust/loss.hpp"

namespace mjtest {

// Random connected-ish graph with at most max_edges edges (spanning chain
// plus random extras), deterministic per seed.
inline mjrobust::UndirectedGraph random_graph(int n, int max_edges,
                                              std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::pair<int, int>> edges;
    for (int i = 1; i < n; ++i) edges.emplace_back(i, i + 1);
    std::uniform_int_distribution<int> pick(1, n);
    int guard = 0;
    while (static_cast<int>(edges.size()) < max_edges && guard++ < 200) {
        int a = pick(rng), b = pick(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        bool dup = false;
        for (auto& e : edges) dup |= e == std::pair{a, b};
        if (!dup) edges.emplace_back(a, b);
    }
    if (static_cast<int>(edges.size()) > max_edges) edges.resize(max_edges);
    return mjrobust::make_graph(n, edges);
}

inline mjrobust::LossModel random_chains(const mjrobust::UndirectedGraph& g,
                                         std::uint64_t seed,
                                         mjrobust::Correlation corr) {
    // full-range heterogeneous parameters, box set to the hull of the draws
    auto m = mjrobust::random_loss(g, 0.0, 1.0, seed, corr);
    double lo = 1.0, hi = 0.0;
    for (auto& c : m.chains) {
        lo = std::min({lo, c.p, c.q, c.eta});
        hi = std::max({hi, c.p, c.q, c.eta});
    }
    m.rho_l = lo;
    m.rho_u = hi;
    return m;
}

}  // namespace mjtest
