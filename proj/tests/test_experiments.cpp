#include <catch2/catch.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mjrobust/experiments.hpp"

using namespace mjrobust;
using namespace mjrobust::experiments;

TEST_CASE("spec parsers") {
    REQUIRE(parse_graph_spec("cycle:5").vertex_count == 5);
    REQUIRE(parse_graph_spec("triangle:3").edge_count() == 9);
    {
        std::ofstream f("parse_test_graph.txt");
        write_edge_list(f, build_cycle(4));
    }
    REQUIRE(parse_graph_spec("file:parse_test_graph.txt").vertex_count == 4);
    std::remove("parse_test_graph.txt");
    REQUIRE_THROWS(parse_graph_spec("hexagon:4"));

    REQUIRE(parse_system_spec("consensus", 0.2).Ac(1, 0) == Approx(-0.2));
    REQUIRE(parse_system_spec("consensus:0.3", 0.2).Ac(1, 0) == Approx(-0.3));
    REQUIRE_THROWS(parse_system_spec("lqr:1", 0.1));

    auto g = build_cycle(4);
    auto uni = parse_loss_spec("uniform:0.8", g, Correlation::symmetric_markov);
    REQUIRE(uni.chains[0].p == 0.8);
    REQUIRE(uni.correlation == Correlation::independent_bernoulli);
    auto box = parse_loss_spec("box:0.4,0.6,7", g, Correlation::symmetric_markov);
    REQUIRE(box.rho_l == 0.4);
    REQUIRE(validate(box).empty());
    REQUIRE_THROWS(parse_loss_spec("gauss:0.1", g, Correlation::symmetric_markov));
}

TEST_CASE("sweep csv: schema, bound dominance, determinism") {
    SweepConfig cfg;
    cfg.graphs = {"cycle:4"};
    cfg.consensus = true;
    cfg.rho_start = 0.8;
    cfg.rho_step = 0.1;
    cfg.rho_end = 1.0;
    const auto csv = run_sweep(cfg);
    REQUIRE(csv.find("rho_l,N,gamma_robust,h2_corner_max,solver_status") !=
            std::string::npos);
    REQUIRE(csv.find("# command=sweep") != std::string::npos);
    REQUIRE(csv.find("# kappa=0.1") != std::string::npos);

    // parse the data rows
    std::istringstream is(csv);
    std::vector<double> gamma, corner;
    for (std::string line; std::getline(is, line);) {
        if (line.empty() || line[0] == '#' || line[0] == 'r') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        double rho, n, g, c;
        std::string status;
        row >> rho >> n >> g >> c >> status;
        gamma.push_back(g);
        corner.push_back(c);
        REQUIRE(status == "optimal");
        REQUIRE(g >= c);  // certified bound dominates the exact reference
    }
    REQUIRE(gamma.size() == 3);
    REQUIRE(gamma[0] >= gamma[1]);
    REQUIRE(gamma[1] >= gamma[2]);

    REQUIRE(run_sweep(cfg) == csv);  // byte-identical on rerun
}

TEST_CASE("corner references agree at the deterministic end") {
    SweepConfig cfg;
    cfg.consensus = true;
    auto sys = consensus_example(0.1);
    auto g = build_cycle(4);
    const double ind = experiments::detail::corner_max_independent(sys, g, 1.0, cfg);
    const double shared = experiments::detail::corner_max_shared_x(sys, g, 1.0, cfg);
    REQUIRE(ind == Approx(shared).epsilon(1e-4));

    // with real corners the shared-X restriction can only increase the value
    const double ind_lo = experiments::detail::corner_max_independent(sys, g, 0.8, cfg);
    const double shared_lo = experiments::detail::corner_max_shared_x(sys, g, 0.8, cfg);
    REQUIRE(shared_lo >= ind_lo * (1.0 - 1e-6));
}

TEST_CASE("scaling csv: schema and structural bound") {
    ScalingConfig cfg;
    cfg.rows_list = {2, 3};
    cfg.consensus = true;
    std::vector<ScalingRow> rows;
    const auto csv = run_scaling(cfg, &rows);
    REQUIRE(csv.find("N,edge_count,gamma_robust,wall_time_s,lmi_block_count,"
                     "solver_status") != std::string::npos);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        REQUIRE(r.status == lmi::Status::optimal);
        REQUIRE(r.lmi_block_count <= r.n - 1);
        REQUIRE(r.gamma > 0.0);
        REQUIRE(r.wall_time_s > 0.0);
    }
    REQUIRE(rows[0].n == 3);
    REQUIRE(rows[1].n == 6);
}

TEST_CASE("default scaling sequence stays within bounds") {
    auto rows = default_row_sequence(500);
    REQUIRE(!rows.empty());
    for (size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(rows[i] * (rows[i] + 1) / 2 <= 500);
        if (i) REQUIRE(rows[i] > rows[i - 1]);
    }
}

TEST_CASE("validate passes on the default instance and is deterministic") {
    ValidateConfig cfg;
    cfg.trials = 4000;
    cfg.horizon = 250;
    cfg.soundness_samples = 4;
    auto a = run_validate(cfg);
    REQUIRE(a.pass);
    REQUIRE(a.report.find("check=oracle_vs_montecarlo status=pass") !=
            std::string::npos);
    auto b = run_validate(cfg);
    REQUIRE(a.report == b.report);
}

TEST_CASE("validate flags an injected box violation with the edge name") {
    auto g = build_cycle(4);
    auto model = uniform_loss(g, 0.8);
    model.rho_l = 0.4;
    model.rho_u = 0.6;  // p = 0.8 now sits outside the declared box
    {
        std::ofstream f("validate_bad_loss.txt");
        write_loss_model(f, model);
    }
    ValidateConfig cfg;
    cfg.loss = "file:validate_bad_loss.txt";
    cfg.trials = 2000;
    cfg.horizon = 200;
    cfg.soundness_samples = 2;
    auto out = run_validate(cfg);
    std::remove("validate_bad_loss.txt");
    REQUIRE_FALSE(out.pass);
    REQUIRE(out.report.find("check=loss_model_assumptions status=fail") !=
            std::string::npos);
    REQUIRE(out.report.find("{1,2}") != std::string::npos);
}
