// Command-line front end: certified H2 bounds and validation suites for
// multi-agent consensus under stochastic packet loss.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mjrobust/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPropertyFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitSolverFailure = 3;

void write_output(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open output path: " + path);
    f << content;
}

bool parse_rho_grid(const std::string& grid, mjrobust::experiments::SweepConfig& cfg) {
    double a, b, c;
    char c1, c2;
    std::istringstream is(grid);
    if (!(is >> a >> c1 >> b >> c2 >> c) || c1 != ':' || c2 != ':') return false;
    cfg.rho_start = a;
    cfg.rho_step = b;
    cfg.rho_end = c;
    return cfg.rho_step > 0 && cfg.rho_start <= cfg.rho_end;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"robust mean-square stability and H2 analysis of multi-agent "
                 "systems with stochastic packet loss"};
    app.require_subcommand(1);

    // shared option state
    std::vector<std::string> graphs;
    std::string system_spec = "consensus";
    std::string loss_spec = "uniform:0.8";
    std::string box_spec;
    std::string out_path;
    std::string corner_mode = "independent";
    std::string correlation = "markov";
    double kappa = 0.1;
    int vertices = 17;
    std::uint64_t seed = 1;
    bool consensus = false;

    auto add_shared = [&](CLI::App* cmd) {
        cmd->add_option("--graph", graphs,
                        "graph spec: cycle:N, triangle:ROWS or file:PATH");
        cmd->add_option("--system", system_spec,
                        "system spec: consensus[:KAPPA] or file:PATH");
        cmd->add_option("--kappa", kappa, "consensus gain when not given in spec");
        cmd->add_option("--vertices", vertices,
                        "global grid resolution of the multiplier vertex set");
        cmd->add_option("--seed", seed, "seed for randomized checks");
        cmd->add_option("--out", out_path, "output path (default stdout)");
        cmd->add_flag("--consensus", consensus,
                      "skip the zero-eigenvalue LMIs (single integrator per agent)");
    };

    auto* sweep = app.add_subcommand(
        "sweep", "bound vs corner estimate over transition-probability boxes");
    std::string rho_grid = "0:0.05:1";
    add_shared(sweep);
    sweep->add_option("--rho-grid", rho_grid, "rho_l grid as start:step:end");
    sweep->add_option("--corner-mode", corner_mode,
                      "corner reference: independent or shared-x")
        ->check(CLI::IsMember({"independent", "shared-x"}));

    auto* scaling = app.add_subcommand(
        "scaling", "bound and solve time on growing triangle lattices");
    int max_n = 10000;
    int repeats = 1;
    std::string rows_spec;
    add_shared(scaling);
    scaling->add_option("--max-n", max_n, "largest agent count");
    scaling->add_option("--rows", rows_spec, "comma-separated lattice row counts");
    scaling->add_option("--repeats", repeats, "solve repetitions per point");
    scaling->add_option("--box", box_spec, "probability box as lo,hi");

    auto* validate = app.add_subcommand(
        "validate", "cross-module property suite (exit 1 on any failure)");
    long trials = 20000;
    int horizon = 400;
    int samples = 10;
    std::string dump_traces, cert_path;
    add_shared(validate);
    validate->add_option("--loss", loss_spec,
                         "loss spec: uniform:P, box:LO,HI,SEED or file:PATH");
    validate->add_option("--correlation", correlation,
                         "chain correlation for box sampling: markov or bernoulli")
        ->check(CLI::IsMember({"markov", "bernoulli"}));
    validate->add_option("--trials", trials, "Monte Carlo trials");
    validate->add_option("--horizon", horizon, "Monte Carlo horizon");
    validate->add_option("--samples", samples, "soundness sample count");
    validate->add_option("--dump-traces", dump_traces, "per-step energy CSV");
    validate->add_option("--cert", cert_path, "write the robust certificate JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sweep->parsed()) {
            mjrobust::experiments::SweepConfig cfg;
            if (!graphs.empty()) cfg.graphs = graphs;
            cfg.system = system_spec;
            cfg.kappa = kappa;
            cfg.vertices = vertices;
            cfg.seed = seed;
            cfg.consensus = consensus;
            cfg.corner_mode = corner_mode;
            if (!parse_rho_grid(rho_grid, cfg)) {
                std::cerr << "bad --rho-grid '" << rho_grid << "'\n";
                return kExitUsage;
            }
            const auto csv = mjrobust::experiments::run_sweep(cfg);
            write_output(out_path, csv);
            return csv.find("# solver_trouble=1") == std::string::npos
                       ? kExitOk
                       : kExitSolverFailure;
        }
        if (scaling->parsed()) {
            mjrobust::experiments::ScalingConfig cfg;
            cfg.max_n = max_n;
            cfg.system = system_spec;
            cfg.kappa = kappa;
            cfg.vertices = vertices;
            cfg.seed = seed;
            cfg.consensus = consensus;
            cfg.repeats = repeats;
            if (!box_spec.empty()) {
                std::istringstream is(box_spec);
                char comma;
                if (!(is >> cfg.box_lo >> comma >> cfg.box_hi)) {
                    std::cerr << "bad --box '" << box_spec << "'\n";
                    return kExitUsage;
                }
            }
            if (!rows_spec.empty()) {
                std::istringstream is(rows_spec);
                for (std::string tok; std::getline(is, tok, ',');)
                    cfg.rows_list.push_back(std::stoi(tok));
            }
            std::vector<mjrobust::experiments::ScalingRow> rows;
            const auto csv = mjrobust::experiments::run_scaling(cfg, &rows);
            write_output(out_path, csv);
            for (const auto& r : rows)
                if (r.status != mjrobust::lmi::Status::optimal &&
                    r.status != mjrobust::lmi::Status::feasible &&
                    r.status != mjrobust::lmi::Status::infeasible)
                    return kExitSolverFailure;
            return kExitOk;
        }
        // validate
        mjrobust::experiments::ValidateConfig cfg;
        if (!graphs.empty()) cfg.graph = graphs.front();
        cfg.system = system_spec;
        cfg.kappa = kappa;
        cfg.loss = loss_spec;
        cfg.vertices = vertices;
        cfg.seed = seed;
        cfg.consensus = consensus;
        cfg.trials = trials;
        cfg.horizon = horizon;
        cfg.soundness_samples = samples;
        cfg.dump_traces = dump_traces;
        auto outcome = mjrobust::experiments::run_validate(cfg);
        write_output(out_path, outcome.report);
        if (!cert_path.empty()) {
            const auto g = mjrobust::experiments::parse_graph_spec(cfg.graph);
            const auto sys =
                mjrobust::experiments::parse_system_spec(cfg.system, cfg.kappa);
            const auto model = mjrobust::experiments::parse_loss_spec(
                cfg.loss, g,
                correlation == "markov"
                    ? mjrobust::Correlation::symmetric_markov
                    : mjrobust::Correlation::independent_bernoulli);
            mjrobust::RobustOptions ropts;
            ropts.vertex_count = cfg.vertices;
            ropts.consensus_deflation = cfg.consensus;
            auto cert = mjrobust::robust_h2(sys, mjrobust::spectrum(g),
                                            {model.rho_l, model.rho_u}, ropts);
            std::ofstream f(cert_path);
            f << mjrobust::to_json(cert).dump(2) << '\n';
        }
        return outcome.pass ? kExitOk : kExitPropertyFailure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSolverFailure;
    }
}
