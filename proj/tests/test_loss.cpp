#include <catch2/catch.hpp>

#include "mjrobust/loss.hpp"
#include "mjrobust/spectrum.hpp"
#include "test_util.hpp"

using namespace mjrobust;

namespace {

// Mode-enumeration oracle for the conditional Laplacian moments: averages
// L_j and L_j^T L_j over the joint transition row of prev, fully independent
// of the factorized implementation. The variance-weighted Laplacian is
// recovered from the covariance identity
//   E[L^T L] - E[L]^T E[L] = 2 * Phi Var(Theta) Phi^T,
// which exercises exactly the case analysis behind the expectation lemma.
struct EnumeratedMoments {
    Mat expectation, variance, expected_product;
};

EnumeratedMoments enumerate_moments(const LossModel& model, ModeIndex prev) {
    const auto jc = joint_chain(model);
    const int n = model.graph.vertex_count;
    const auto m = static_cast<std::uint32_t>(jc.t.rows());
    EnumeratedMoments out{Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n)};
    for (std::uint32_t j = 0; j < m; ++j) {
        const double w = jc.t(prev.index, j);
        const Mat lj = mode_laplacian(model.graph, ModeIndex{j}).cast<double>();
        out.expectation += w * lj;
        out.expected_product += w * lj.transpose() * lj;
    }
    out.variance = 0.5 * (out.expected_product -
                          out.expectation.transpose() * out.expectation);
    return out;
}

}  // namespace

TEST_CASE("alpha is the conditional success probability") {
    EdgeChain c{0.9, 0.3, 0.5};
    REQUIRE(alpha(c, 1) == 0.9);
    REQUIRE(alpha(c, 0) == 0.3);
    EdgeChain b{0.5, 0.5, 0.5};
    REQUIRE(alpha(b, 0) == alpha(b, 1));
}

TEST_CASE("joint chain of a single edge") {
    auto g = make_graph(2, {{1, 2}});
    LossModel m{g, {EdgeChain{0.9, 0.3, 0.25}}, Correlation::symmetric_markov, 0, 1};
    auto jc = joint_chain(m);
    // state order (theta = 0, theta = 1)
    REQUIRE(jc.t(0, 0) == Approx(0.7));
    REQUIRE(jc.t(0, 1) == Approx(0.3));
    REQUIRE(jc.t(1, 0) == Approx(0.1).margin(1e-15));
    REQUIRE(jc.t(1, 1) == Approx(0.9));
    REQUIRE(jc.mu(0) == Approx(0.75));
    REQUIRE(jc.mu(1) == Approx(0.25));
}

TEST_CASE("joint chain of independent fair edges is uniform") {
    auto g = make_graph(3, {{1, 2}, {2, 3}});
    LossModel m{g,
                {EdgeChain{0.5, 0.5, 0.5}, EdgeChain{0.5, 0.5, 0.5}},
                Correlation::independent_bernoulli,
                0,
                1};
    auto jc = joint_chain(m);
    REQUIRE(jc.t.isApproxToConstant(0.25, 1e-15));
    REQUIRE(jc.mu.isApproxToConstant(0.25, 1e-15));
}

TEST_CASE("joint chain rows and initial distribution are stochastic") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto g = mjtest::random_graph(5, 6, seed);
        auto m = mjtest::random_chains(g, seed + 100,
                                       seed % 2 ? Correlation::symmetric_markov
                                                : Correlation::independent_bernoulli);
        auto jc = joint_chain(m);
        REQUIRE((jc.t.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
        REQUIRE(jc.mu.sum() == Approx(1.0).margin(1e-12));
        REQUIRE(jc.t.minCoeff() >= 0.0);
    }
}

TEST_CASE("mode cap guards the oracle-scale enumeration") {
    auto g = build_triangle(6);  // 45 edges
    LossModel m{g, std::vector<EdgeChain>(static_cast<size_t>(g.edge_count())),
                Correlation::symmetric_markov, 0, 1};
    REQUIRE_THROWS_WITH(joint_chain(m), Catch::Contains("intractable"));
}

TEST_CASE("mode laplacian selects the transmitting edges") {
    auto g = build_cycle(4);
    const auto all = ModeIndex{(1u << 4) - 1};
    REQUIRE(mode_laplacian(g, all) == laplacian(g));
    REQUIRE(mode_laplacian(g, ModeIndex{0}).isZero());

    Eigen::MatrixXi first(4, 4);
    first << 1, -1, 0, 0, -1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0;
    REQUIRE(mode_laplacian(g, ModeIndex{1}) == first);  // bit 0 = edge {1,2}

    // Phi Theta Phi^T identity on random modes
    Mat phi = incidence(g).cast<double>();
    for (std::uint32_t mode = 0; mode < 16; ++mode) {
        Vec th(4);
        for (int e = 0; e < 4; ++e) th(e) = (mode >> e) & 1u;
        Mat viaphi = phi * th.asDiagonal() * phi.transpose();
        REQUIRE((viaphi - mode_laplacian(g, ModeIndex{mode}).cast<double>())
                    .cwiseAbs()
                    .maxCoeff() < 1e-14);
    }
}

TEST_CASE("single-edge conditional moments match the two-mode average") {
    auto g = make_graph(2, {{1, 2}});
    LossModel m{g, {EdgeChain{0.5, 0.5, 0.5}}, Correlation::independent_bernoulli, 0, 1};
    auto mom = conditional_moments(m, ModeIndex{0});
    Mat l0 = laplacian(g).cast<double>();
    REQUIRE((mom.expectation - 0.5 * l0).cwiseAbs().maxCoeff() < 1e-15);
    // E[L^T L] = 0.5 * L0^T L0 = L0 for the single edge
    REQUIRE((mom.expected_product - l0).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("deterministic edges have zero variance") {
    auto g = build_cycle(5);
    LossModel m{g, std::vector<EdgeChain>(5, EdgeChain{1.0, 1.0, 1.0}),
                Correlation::independent_bernoulli, 1, 1};
    auto mom = conditional_moments(m, ModeIndex{7});
    Mat l0 = laplacian(g).cast<double>();
    REQUIRE((mom.expectation - l0).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE(mom.variance.cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE((mom.expected_product - l0.transpose() * l0).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("analytic moments equal brute-force enumeration") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        auto g = mjtest::random_graph(4 + static_cast<int>(seed % 3), 6, seed * 3 + 1);
        const auto corr = seed % 2 ? Correlation::symmetric_markov
                                   : Correlation::independent_bernoulli;
        auto m = mjtest::random_chains(g, seed * 7 + 5, corr);
        const std::uint32_t nmodes = 1u << g.edge_count();
        for (std::uint32_t prev : {0u, nmodes - 1, nmodes / 3}) {
            auto analytic = conditional_moments(m, ModeIndex{prev});
            auto brute = enumerate_moments(m, ModeIndex{prev});
            REQUIRE((analytic.expectation - brute.expectation).cwiseAbs().maxCoeff() <
                    1e-12);
            REQUIRE((analytic.variance - brute.variance).cwiseAbs().maxCoeff() < 1e-12);
            REQUIRE((analytic.expected_product - brute.expected_product)
                        .cwiseAbs()
                        .maxCoeff() < 1e-12);
            // weighted-Laplacian structure: rows sum to zero
            REQUIRE(analytic.expectation.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
            REQUIRE(analytic.variance.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("bernoulli moments do not depend on the previous mode") {
    auto g = build_cycle(4);
    auto m = mjtest::random_chains(g, 99, Correlation::independent_bernoulli);
    auto a = conditional_moments(m, ModeIndex{0});
    for (std::uint32_t prev = 1; prev < 16; ++prev) {
        auto b = conditional_moments(m, ModeIndex{prev});
        REQUIRE((a.expectation - b.expectation).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((a.variance - b.variance).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("validate reports assumption violations by edge") {
    auto g = build_cycle(3);
    LossModel m{g,
                {EdgeChain{0.5, 0.5, 0.5}, EdgeChain{0.6, 0.4, 0.5},
                 EdgeChain{0.5, 0.5, 0.5}},
                Correlation::independent_bernoulli,
                0.4,
                0.6};
    auto violations = validate(m);
    REQUIRE(violations.size() == 1);
    REQUIRE(violations[0].find("{2,3}") != std::string::npos);

    m.correlation = Correlation::symmetric_markov;
    REQUIRE(validate(m).empty());

    m.chains[0].p = 0.7;  // outside the box
    auto v2 = validate(m);
    REQUIRE(v2.size() == 1);
    REQUIRE(v2[0].find("{1,2}") != std::string::npos);
    REQUIRE(v2[0].find("outside box") != std::string::npos);
}

TEST_CASE("loss model round trip") {
    auto g = build_cycle(4);
    auto m = mjtest::random_chains(g, 5, Correlation::symmetric_markov);
    auto back = loss_from_string(to_loss_string(m), g);
    REQUIRE(back.correlation == m.correlation);
    REQUIRE(back.rho_l == m.rho_l);
    REQUIRE(back.rho_u == m.rho_u);
    for (int e = 0; e < 4; ++e) {
        REQUIRE(back.chains[static_cast<size_t>(e)].p ==
                m.chains[static_cast<size_t>(e)].p);
        REQUIRE(back.chains[static_cast<size_t>(e)].eta ==
                m.chains[static_cast<size_t>(e)].eta);
    }
    REQUIRE_THROWS(loss_from_string("correlation nonsense\nbox 0 1\n", g));
}
