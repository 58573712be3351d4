#include <catch2/catch.hpp>

#include <random>
#include <sstream>

#include "mjrobust/lmi.hpp"

using namespace mjrobust;
using namespace mjrobust::lmi;

TEST_CASE("minimize the largest eigenvalue") {
    // minimize t s.t. t*I - diag(2,3) >= 0
    LmiProgram prog;
    int t = prog.add_sym_var("t", 1);
    Mat c(2, 2);
    c << -2, 0, 0, -3;
    int blk = prog.add_block(c);
    // t * I via two rank-one selectors
    prog.add_term(blk, t, Mat{{1.0, 0.0}}, 1.0);
    prog.add_term(blk, t, Mat{{0.0, 1.0}}, 1.0);
    prog.add_trace_objective(t, 1.0);
    auto rep = prog.solve();
    REQUIRE(rep.status == Status::optimal);
    REQUIRE(rep.objective_value.has_value());
    REQUIRE(*rep.objective_value == Approx(3.0).margin(1e-5));
    REQUIRE(rep.values.at("t")(0, 0) == Approx(3.0).margin(1e-5));
}

TEST_CASE("schur stability feasibility") {
    auto build = [](double a) {
        LmiProgram prog;
        int y = prog.add_sym_var("Y", 2);
        // Y - eps I >= 0
        int pd = prog.add_block(-1e-6 * Mat::Identity(2, 2));
        prog.add_term(pd, y, Mat::Identity(2, 2), 1.0);
        // -(A^T Y A - Y) - eps I >= 0
        int ly = prog.add_block(-1e-7 * Mat::Identity(2, 2));
        prog.add_term(ly, y, a * Mat::Identity(2, 2), -1.0);
        prog.add_term(ly, y, Mat::Identity(2, 2), 1.0);
        return prog;
    };
    REQUIRE(build(0.5).solve().status == Status::feasible);
    REQUIRE(build(2.0).solve().status == Status::infeasible);
}

TEST_CASE("verify recomputes margins and flags constructed violations") {
    LmiProgram prog;
    int y = prog.add_sym_var("Y", 2);
    int pd = prog.add_block(-0.5 * Mat::Identity(2, 2));  // Y - 0.5 I >= 0
    prog.add_term(pd, y, Mat::Identity(2, 2), 1.0);
    auto rep = prog.solve();
    REQUIRE(rep.status == Status::feasible);
    REQUIRE(rep.margins.size() == 1);
    REQUIRE(rep.margins[0] >= 0.0);

    auto margins = prog.verify(rep.values);
    REQUIRE(margins[0] == Approx(rep.margins[0]).margin(1e-6));

    // pushing Y inward along its smallest eigendirection by more than the
    // margin must produce a violation
    Mat yv = rep.values.at("Y");
    Eigen::SelfAdjointEigenSolver<Mat> es(yv - 0.5 * Mat::Identity(2, 2));
    Vec v = es.eigenvectors().col(0);
    Mat worse = yv - (es.eigenvalues()(0) + 1e-3) * (v * v.transpose());
    auto m2 = prog.verify({{"Y", worse}});
    REQUIRE(m2[0] < 0.0);
}

TEST_CASE("empty program verifies to empty margins") {
    LmiProgram prog;
    REQUIRE(prog.verify({}).empty());
}

TEST_CASE("mixed shared and grouped variables solve to optimality") {
    LmiProgram prog;
    int a = prog.add_sym_var("A", 2);
    int b = prog.add_sym_var("B", 2, 1);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    Mat r1(2, 3), r2(2, 3);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) {
            r1(i, j) = n01(rng);
            r2(i, j) = n01(rng);
        }
    int blk = prog.add_block(Mat::Identity(3, 3));
    prog.add_term(blk, a, r1, 0.5);
    prog.add_term(blk, b, r2, -0.25);
    int pa = prog.add_block(Mat::Identity(2, 2));
    prog.add_term(pa, a, Mat::Identity(2, 2), 1.0);
    int pb = prog.add_block(Mat::Identity(2, 2));
    prog.add_term(pb, b, Mat::Identity(2, 2), 1.0);
    prog.add_trace_objective(a, 1.0);
    prog.add_trace_objective(b, 0.5);
    auto rep = prog.solve();
    REQUIRE(rep.status == Status::optimal);
    // at the optimum every block is still PSD
    for (double m : rep.margins) REQUIRE(m >= -1e-9);
}

TEST_CASE("objective never decreases when constraints are added") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 4; ++rep) {
        auto make = [&](int extra_blocks, std::uint64_t seed) {
            std::mt19937_64 r2(seed);
            std::normal_distribution<double> g;
            LmiProgram prog;
            int x = prog.add_sym_var("X", 2);
            int pd = prog.add_block(-Mat::Identity(2, 2));
            prog.add_term(pd, x, Mat::Identity(2, 2), 1.0);  // X >= I
            for (int k = 0; k < extra_blocks; ++k) {
                Mat rr(2, 2);
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) rr(i, j) = g(r2);
                // X >= R^T R  (tightens as blocks accumulate)
                int blk = prog.add_block(-rr.transpose() * rr);
                prog.add_term(blk, x, Mat::Identity(2, 2), 1.0);
            }
            prog.add_trace_objective(x, 1.0);
            return prog;
        };
        const std::uint64_t seed = rng();
        auto r0 = make(1, seed).solve();
        auto r1 = make(3, seed).solve();
        REQUIRE(r0.status == Status::optimal);
        REQUIRE(r1.status == Status::optimal);
        REQUIRE(*r1.objective_value >= *r0.objective_value - 1e-6);
    }
}

TEST_CASE("grouped variables give the same answer as shared ones") {
    auto make = [](bool grouped) {
        LmiProgram prog;
        int y = prog.add_sym_var("Y", 2, 0);
        int pd = prog.add_block(-Mat::Identity(2, 2));
        prog.add_term(pd, y, Mat::Identity(2, 2), 1.0);
        double off = 1.0;
        for (int g = 1; g <= 3; ++g) {
            int z = prog.add_sym_var("Z" + std::to_string(g), 2, grouped ? g : 0);
            // Z_g >= off * Y  (couples each group to the shared variable)
            int blk = prog.add_block(Mat::Zero(2, 2));
            prog.add_term(blk, z, Mat::Identity(2, 2), 1.0);
            prog.add_term(blk, y, Mat::Identity(2, 2), -off);
            prog.add_trace_objective(z, 1.0);
            off += 0.5;
        }
        return prog;
    };
    auto rg = make(true).solve();
    auto rs = make(false).solve();
    REQUIRE(rg.status == Status::optimal);
    REQUIRE(rs.status == Status::optimal);
    REQUIRE(*rg.objective_value == Approx(*rs.objective_value).margin(1e-5));
    // optimum: Y ~ I (pushed by Z cost), Z_g ~ off_g * Y, sum of traces ~ 2*(1+1.5+2)
    REQUIRE(*rg.objective_value == Approx(9.0).margin(1e-3));
}

TEST_CASE("mixing two local groups in one block is rejected") {
    LmiProgram prog;
    int a = prog.add_sym_var("A", 1, 1);
    int b = prog.add_sym_var("B", 1, 2);
    int blk = prog.add_block(Mat::Identity(1, 1));
    prog.add_term(blk, a, Mat::Identity(1, 1), 1.0);
    prog.add_term(blk, b, Mat::Identity(1, 1), 1.0);
    auto rep = prog.solve();
    REQUIRE(rep.status == Status::numerical_error);
    REQUIRE(rep.message.find("group") != std::string::npos);
}

TEST_CASE("sdpa dump is well formed") {
    LmiProgram prog;
    int y = prog.add_sym_var("Y", 2);
    int blk = prog.add_block(-Mat::Identity(2, 2));
    prog.add_term(blk, y, Mat::Identity(2, 2), 1.0);
    prog.add_trace_objective(y, 1.0);
    std::ostringstream os;
    prog.dump_sdpa(os);
    auto s = os.str();
    REQUIRE(s.find("3 = mdim") != std::string::npos);
    REQUIRE(s.find("1 = nblocks") != std::string::npos);
}
