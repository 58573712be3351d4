#pragma once

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mjrobust {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Undirected communication graph. Vertices are 1-indexed, edges are stored
/// as normalized pairs (i, j) with i < j in insertion order. The stored edge
/// order is load-bearing: it fixes the columns of the incidence matrix and
/// the bit positions of the joint loss modes.
struct UndirectedGraph {
    int vertex_count = 0;
    std::vector<std::pair<int, int>> edges;

    int edge_count() const { return static_cast<int>(edges.size()); }
};

inline UndirectedGraph make_graph(int vertex_count,
                                  std::vector<std::pair<int, int>> edges) {
    if (vertex_count <= 0)
        throw std::invalid_argument("graph: vertex_count must be positive");
    std::set<std::pair<int, int>> seen;
    for (auto& e : edges) {
        if (e.first == e.second)
            throw std::invalid_argument("graph: self-loop on vertex " +
                                        std::to_string(e.first));
        if (e.first > e.second) std::swap(e.first, e.second);
        if (e.first < 1 || e.second > vertex_count)
            throw std::invalid_argument("graph: edge endpoint out of range");
        if (!seen.insert(e).second)
            throw std::invalid_argument("graph: duplicate edge {" +
                                        std::to_string(e.first) + "," +
                                        std::to_string(e.second) + "}");
    }
    return UndirectedGraph{vertex_count, std::move(edges)};
}

/// N-cycle: edges {i, i+1} for i < N plus the closing edge {1, N}.
inline UndirectedGraph build_cycle(int n) {
    if (n < 3) throw std::invalid_argument("build_cycle: need N >= 3");
    std::vector<std::pair<int, int>> edges;
    edges.reserve(n);
    for (int i = 1; i < n; ++i) edges.emplace_back(i, i + 1);
    edges.emplace_back(1, n);
    return make_graph(n, std::move(edges));
}

/// Triangle-shaped lattice with `rows` rows; row r holds r vertices, so
/// N = rows(rows+1)/2. Vertices are numbered row by row. Each vertex is
/// connected to its horizontal neighbour and to the one or two vertices
/// directly below it in the next row.
inline UndirectedGraph build_triangle(int rows) {
    if (rows < 1) throw std::invalid_argument("build_triangle: need rows >= 1");
    auto id = [](int r, int k) { return r * (r - 1) / 2 + k; };  // 1-indexed
    std::vector<std::pair<int, int>> edges;
    for (int r = 1; r <= rows; ++r) {
        for (int k = 1; k <= r; ++k) {
            if (k < r) edges.emplace_back(id(r, k), id(r, k + 1));
            if (r < rows) {
                edges.emplace_back(id(r, k), id(r + 1, k));
                edges.emplace_back(id(r, k), id(r + 1, k + 1));
            }
        }
    }
    return make_graph(rows * (rows + 1) / 2, std::move(edges));
}

/// Incidence matrix with one column per edge: +1 at the smaller vertex
/// index, -1 at the larger one. Phi * Phi^T equals the nominal Laplacian.
inline Eigen::MatrixXi incidence(const UndirectedGraph& g) {
    Eigen::MatrixXi phi = Eigen::MatrixXi::Zero(g.vertex_count, g.edge_count());
    for (int e = 0; e < g.edge_count(); ++e) {
        phi(g.edges[e].first - 1, e) = 1;
        phi(g.edges[e].second - 1, e) = -1;
    }
    return phi;
}

/// Integer graph Laplacian: degree on the diagonal, -1 per edge off it.
inline Eigen::MatrixXi laplacian(const UndirectedGraph& g) {
    Eigen::MatrixXi l = Eigen::MatrixXi::Zero(g.vertex_count, g.vertex_count);
    for (const auto& [i, j] : g.edges) {
        l(i - 1, j - 1) -= 1;
        l(j - 1, i - 1) -= 1;
        l(i - 1, i - 1) += 1;
        l(j - 1, j - 1) += 1;
    }
    return l;
}

// ---------------------------------------------------------------------------
// Edge-list serialization: first line "N M", then M lines "i j" (1-indexed).
// ---------------------------------------------------------------------------

inline void write_edge_list(std::ostream& os, const UndirectedGraph& g) {
    os << g.vertex_count << ' ' << g.edge_count() << '\n';
    for (const auto& [i, j] : g.edges) os << i << ' ' << j << '\n';
}

inline UndirectedGraph read_edge_list(std::istream& is) {
    int n = 0, m = 0;
    if (!(is >> n >> m)) throw std::runtime_error("edge list: bad header");
    std::vector<std::pair<int, int>> edges(static_cast<size_t>(std::max(m, 0)));
    for (auto& [i, j] : edges)
        if (!(is >> i >> j)) throw std::runtime_error("edge list: truncated");
    return make_graph(n, std::move(edges));
}

inline std::string to_edge_list_string(const UndirectedGraph& g) {
    std::ostringstream os;
    write_edge_list(os, g);
    return os.str();
}

inline UndirectedGraph graph_from_edge_list_string(const std::string& s) {
    std::istringstream is(s);
    return read_edge_list(is);
}

}  // namespace mjrobust
