#include <catch2/catch.hpp>

#include <random>

#include "mjrobust/decomposable.hpp"
#include "test_util.hpp"

using namespace mjrobust;

namespace {

DecomposableSystem random_system(std::uint64_t seed, int nx = 2, int nw = 1,
                                 int nz = 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    auto rnd = [&](int r, int c) {
        Mat m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = n01(rng);
        return m;
    };
    DecomposableSystem s;
    s.nx = nx; s.nw = nw; s.nz = nz;
    s.Ad = rnd(nx, nx); s.Ac = rnd(nx, nx); s.Ap = rnd(nx, nx);
    s.Bd = rnd(nx, nw); s.Bc = rnd(nx, nw); s.Bp = rnd(nx, nw);
    s.Cd = rnd(nz, nx); s.Cc = rnd(nz, nx); s.Cp = rnd(nz, nx);
    s.Dd = rnd(nz, nw); s.Dc = rnd(nz, nw); s.Dp = rnd(nz, nw);
    return s;
}

}  // namespace

TEST_CASE("consensus example blocks") {
    auto s = consensus_example(0.1);
    REQUIRE(s.Ad(0, 0) == 1.0);
    REQUIRE(s.Ad(0, 1) == 1.0);
    REQUIRE(s.Ad(1, 1) == 0.1);
    REQUIRE(s.Ac(1, 0) == Approx(-0.1));
    REQUIRE(s.Ac(0, 0) == 0.0);
    REQUIRE(s.Ap.isZero());
    REQUIRE(s.Cp(0, 0) == 1.0);
    REQUIRE(s.Cp(0, 1) == 0.0);
    REQUIRE(s.Cd.isZero());
    REQUIRE(s.Dd.isZero());
    REQUIRE_THROWS_AS(consensus_example(0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(consensus_example(-1.0), std::invalid_argument);

    // kappa -> 0 decouples the agents
    REQUIRE(consensus_example(1e-12).Ac.cwiseAbs().maxCoeff() == Approx(1e-12));
}

TEST_CASE("assembled consensus pair matches the hand expansion") {
    auto g = make_graph(2, {{1, 2}});
    auto s = consensus_example(0.1);
    auto f = assemble(s, g, ModeIndex{1});
    Mat want(4, 4);
    want << 1, 1, 0, 0,
            -0.1, 0.1, 0.1, 0,
            0, 0, 1, 1,
            0.1, 0, -0.1, 0.1;
    REQUIRE((f.A - want).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("assemble degenerate structures") {
    auto g = build_cycle(4);
    auto s = random_system(1);
    s.Ac.setZero();
    s.Ap.setZero();
    auto f = assemble(s, g, ModeIndex{5});
    REQUIRE((f.A - kron(Mat::Identity(4, 4), s.Ad)).cwiseAbs().maxCoeff() == 0.0);

    auto s2 = random_system(2);
    s2.Ap.setZero();
    auto f2 = assemble(s2, g, ModeIndex{(1u << 4) - 1});
    Mat l0 = laplacian(g).cast<double>();
    REQUIRE((f2.A - (kron(Mat::Identity(4, 4), s2.Ad) + kron(l0, s2.Ac)))
                .cwiseAbs()
                .maxCoeff() < 1e-14);
}

TEST_CASE("assembly is linear in each block") {
    auto g = build_cycle(4);
    const ModeIndex mode{9};
    auto sys_x = random_system(3);
    auto sys_y = sys_x;
    sys_y.Ad = random_system(4).Ad;
    auto sys_sum = sys_x;
    sys_sum.Ad = sys_x.Ad + sys_y.Ad;
    auto sys_zero = sys_x;
    sys_zero.Ad = Mat::Zero(2, 2);
    Mat lhs = assemble(sys_sum, g, mode).A;
    Mat rhs = assemble(sys_x, g, mode).A + assemble(sys_y, g, mode).A -
              assemble(sys_zero, g, mode).A;
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("B, C, D are mode independent when their coupled parts vanish") {
    auto g = build_cycle(4);
    auto s = random_system(5);
    s.Bc.setZero();
    s.Cc.setZero();
    s.Dc.setZero();
    auto f0 = assemble(s, g, ModeIndex{0});
    for (std::uint32_t mode = 1; mode < 16; ++mode) {
        auto f = assemble(s, g, ModeIndex{mode});
        REQUIRE((f.B - f0.B).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((f.C - f0.C).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((f.D - f0.D).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("kronecker commutation identity") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 5; ++rep) {
        Mat m1(3, 3), m2(2, 2);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m1(i, j) = n01(rng);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) m2(i, j) = n01(rng);
        Mat lhs = kron(m1, Mat::Identity(2, 2)) * kron(Mat::Identity(3, 3), m2);
        Mat rhs = kron(Mat::Identity(3, 3), m2) * kron(m1, Mat::Identity(2, 2));
        REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("system text round trip") {
    auto s = consensus_example(0.37);
    auto back = system_from_string(to_system_string(s));
    REQUIRE(back.nx == 2);
    REQUIRE((back.Ad - s.Ad).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((back.Ac - s.Ac).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((back.Cp - s.Cp).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.Dp.isZero());
    REQUIRE_THROWS(system_from_string("dims 0 1 1\n"));
    REQUIRE_THROWS(system_from_string("dims 2 1 1\nXx\n1 2\n"));
}
