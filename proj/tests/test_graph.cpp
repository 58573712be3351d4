#include <catch2/catch.hpp>

#include "mjrobust/graph.hpp"
#include "test_util.hpp"

using namespace mjrobust;

TEST_CASE("cycle generator") {
    auto g = build_cycle(4);
    REQUIRE(g.vertex_count == 4);
    REQUIRE(g.edges == std::vector<std::pair<int, int>>{{1, 2}, {2, 3}, {3, 4}, {1, 4}});
    REQUIRE(build_cycle(3).edge_count() == 3);
    REQUIRE(build_cycle(17).edge_count() == 17);
    REQUIRE_THROWS_AS(build_cycle(2), std::invalid_argument);
}

TEST_CASE("triangle generator") {
    auto g2 = build_triangle(2);
    REQUIRE(g2.vertex_count == 3);
    REQUIRE(g2.edges == std::vector<std::pair<int, int>>{{1, 2}, {1, 3}, {2, 3}});

    auto g1 = build_triangle(1);
    REQUIRE(g1.vertex_count == 1);
    REQUIRE(g1.edge_count() == 0);

    auto g3 = build_triangle(3);
    REQUIRE(g3.vertex_count == 6);
    REQUIRE(g3.edge_count() == 9);
    // edges named in the lattice figure
    for (auto e : {std::pair{1, 2}, {1, 3}, {2, 3}, {2, 4}, {2, 5},
                   {3, 5}, {3, 6}, {4, 5}, {5, 6}})
        REQUIRE(std::count(g3.edges.begin(), g3.edges.end(), e) == 1);

    REQUIRE_THROWS_AS(build_triangle(0), std::invalid_argument);
}

TEST_CASE("graph validation") {
    REQUIRE_THROWS_AS(make_graph(3, {{1, 1}}), std::invalid_argument);
    REQUIRE_THROWS_AS(make_graph(3, {{1, 4}}), std::invalid_argument);
    REQUIRE_THROWS_AS(make_graph(3, {{1, 2}, {2, 1}}), std::invalid_argument);
}

TEST_CASE("incidence matrix") {
    auto g = make_graph(2, {{1, 2}});
    auto phi = incidence(g);
    REQUIRE(phi(0, 0) == 1);
    REQUIRE(phi(1, 0) == -1);
    REQUIRE((phi * phi.transpose()).eval() == laplacian(g));

    auto c4 = build_cycle(4);
    auto l = (incidence(c4) * incidence(c4).transpose()).eval();
    for (int i = 0; i < 4; ++i) REQUIRE(l(i, i) == 2);
}

TEST_CASE("laplacian") {
    auto g = make_graph(2, {{1, 2}});
    Eigen::MatrixXi expect(2, 2);
    expect << 1, -1, -1, 1;
    REQUIRE(laplacian(g) == expect);

    REQUIRE(laplacian(make_graph(3, {})).isZero());

    Eigen::MatrixXi k3(3, 3);
    k3 << 2, -1, -1, -1, 2, -1, -1, -1, 2;
    REQUIRE(laplacian(build_triangle(2)) == k3);
}

TEST_CASE("incidence factorization and row sums hold on random graphs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto g = mjtest::random_graph(3 + static_cast<int>(seed % 6), 9, seed);
        auto phi = incidence(g);
        REQUIRE((phi * phi.transpose()).eval() == laplacian(g));
        REQUIRE(laplacian(g).rowwise().sum().isZero());
    }
}

TEST_CASE("edge list round trip") {
    auto g = build_triangle(3);
    auto back = graph_from_edge_list_string(to_edge_list_string(g));
    REQUIRE(back.vertex_count == g.vertex_count);
    REQUIRE(back.edges == g.edges);
    REQUIRE_THROWS(graph_from_edge_list_string("not a graph"));
}
