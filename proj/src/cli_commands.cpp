#include "mfe/cli.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mfe/common.hpp"
#include "mfe/distribution_analyzer.hpp"
#include "mfe/equilibrium_solver.hpp"
#include "mfe/finite_agent_sim.hpp"
#include "mfe/market_model.hpp"
#include "mfe/scenario_json.hpp"

namespace mfe {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.12g", v);
    return {b};
}

std::string hash_hex(std::uint64_t h) {
    char b[24];
    std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(h));
    return {b};
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cli.io", "cannot open " + path.string() + " for writing");
    out << body;
    if (!out) throw Error("cli.io", "failed writing " + path.string());
}

int effective_threads(const CliOptions& opt) {
    if (opt.threads > 0) return opt.threads;
    if (const char* env = std::getenv("MFE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw Error("cli.threads",
                        std::string("MFE_THREADS must be a positive integer, got '") +
                            env + "'");
        return static_cast<int>(v);
    }
    return 0;
}

void apply_overrides(MarketScenario& sc, const CliOptions& opt) {
    if (opt.seed_set) sc.analysis.seed = opt.seed;
    if (opt.percentile_convention == "node-index")
        sc.analysis.percentile_convention = PercentileConvention::NODE_INDEX;
    else if (opt.percentile_convention == "probability")
        sc.analysis.percentile_convention = PercentileConvention::PROBABILITY;
    if (opt.path_mode) sc.analysis.path_mode = true;
    validate_scenario_or_throw(sc);
}

EquilibriumSolution solve_scenario(const MarketScenario& sc, const CliOptions& opt,
                                   bool keep_diagnostics = false) {
    SolverOptions so;
    so.threads = effective_threads(opt);
    so.keep_diagnostics = keep_diagnostics;
    return sc.analysis.path_mode ? path_dependent_solve(sc, so)
                                 : backward_solve(sc, so);
}

// Report steps actually materialized by build_report (defaults resolved).
std::vector<int> resolved_steps(const ReportBundle& rep) {
    std::vector<int> steps;
    steps.reserve(rep.step_dists.size());
    for (const auto& sd : rep.step_dists) steps.push_back(sd.n);
    return steps;
}

constexpr const char* kMeasureP = "P";
constexpr const char* kMeasureQ = "Q";
constexpr const char* kMeasureTop = "P|Ytop";
constexpr const char* kMeasureBottom = "P|Ybottom";

json lattice_json(const LatticeSpec& lat) {
    json j;
    j["N"] = lat.N;
    j["T"] = lat.T;
    j["r"] = lat.r;
    j["s0"] = lat.s0;
    j["u_tilde"] = lat.u_tilde;
    j["d_tilde"] = lat.d_tilde;
    return j;
}

json effective_json(const MarketScenario& sc) {
    json j;
    j["path_mode"] = sc.analysis.path_mode;
    j["percentile_convention"] =
        sc.analysis.percentile_convention == PercentileConvention::NODE_INDEX
            ? "node-index"
            : "probability";
    j["excess_return_convention"] =
        sc.analysis.excess_return_convention == ReturnConvention::LOG ? "log"
                                                                      : "simple";
    j["seed"] = sc.analysis.seed;
    j["percentiles"] = sc.analysis.percentiles;
    return j;
}

// Node-level marginal stock distribution (paths aggregated by up-move count).
std::pair<std::vector<double>, std::vector<double>> node_marginal(
    const ForwardLaw& law, const LatticeSpec& lat, int n) {
    std::vector<double> prices(n + 1);
    for (int k = 0; k <= n; ++k) prices[k] = lat.node_price(n, k);
    std::vector<double> mass(n + 1, 0.0);
    for (int k = 0; k < law.stock_counts[n]; ++k) {
        const int node =
            law.path_mode ? std::popcount(static_cast<unsigned>(k)) : k;
        for (int y = 0; y < law.y_counts[n]; ++y)
            mass[node] += law.joint[n][law.index(n, k, y)];
    }
    double total = 0.0;
    for (double v : mass) total += v;
    for (double& v : mass) v /= total;
    return {std::move(prices), std::move(mass)};
}

}  // namespace

int cmd_solve(const CliOptions& opt) {
    MarketScenario sc = load_scenario_file(opt.scenario_path);
    apply_overrides(sc, opt);
    const EquilibriumSolution sol = solve_scenario(sc, opt);
    const std::string hash_line = "# scenario_hash=" + hash_hex(sc.content_hash) + "\n";

    fs::create_directories(opt.out_dir);
    const fs::path out(opt.out_dir);

    std::string p_csv = hash_line + "n,stock_idx,y_idx,p_up\n";
    double p_min = 1.0, p_max = 0.0;
    for (int n = 0; n < sol.steps(); ++n) {
        for (int k = 0; k < sol.stock_counts[n]; ++k) {
            for (int y = 0; y < sol.y_counts[n]; ++y) {
                const double p = sol.p[n][sol.cell_index(n, k, y)];
                p_min = std::min(p_min, p);
                p_max = std::max(p_max, p);
                p_csv += std::to_string(n) + ',' + std::to_string(k) + ',' +
                         std::to_string(y) + ',' + fmt(p) + '\n';
            }
        }
    }
    write_text(out / "p.csv", p_csv);

    // Positions are large; emit them at the report steps (plus step 0) only.
    const ForwardLaw law = forward_joint_law(sol, sc.y_chain);
    const ReportBundle rep = build_report(sc, sol, law);
    std::vector<int> phi_steps{0};
    for (int n : resolved_steps(rep))
        if (n < sol.steps()) phi_steps.push_back(n);
    std::sort(phi_steps.begin(), phi_steps.end());
    phi_steps.erase(std::unique(phi_steps.begin(), phi_steps.end()),
                    phi_steps.end());

    std::string phi_csv =
        hash_line + "n,population,stock_idx,y_idx,z_idx,type_idx,phi\n";
    for (int n : phi_steps) {
        for (int k = 0; k < sol.stock_counts[n]; ++k) {
            for (int y = 0; y < sol.y_counts[n]; ++y) {
                for (std::size_t p = 0; p < sc.populations.size(); ++p) {
                    const int Z = sol.z_counts[p][n];
                    const int T = sol.type_counts[p];
                    for (int z = 0; z < Z; ++z) {
                        for (int t = 0; t < T; ++t) {
                            phi_csv += std::to_string(n) + ',' +
                                       std::to_string(p) + ',' +
                                       std::to_string(k) + ',' +
                                       std::to_string(y) + ',' +
                                       std::to_string(z) + ',' +
                                       std::to_string(t) + ',' +
                                       fmt(sol.phi[n][p][sol.agent_index(
                                           n, k, y, z, t, static_cast<int>(p))]) +
                                       '\n';
                        }
                    }
                }
            }
        }
    }
    write_text(out / "phi.csv", phi_csv);

    json manifest;
    manifest["command"] = "solve";
    manifest["scenario_hash"] = hash_hex(sc.content_hash);
    manifest["lattice"] = lattice_json(sol.lattice);
    manifest["effective"] = effective_json(sc);
    manifest["phi_steps"] = phi_steps;
    json inv;
    inv["clearing_max_residual"] = sol.max_clearing_residual;
    inv["clearing_ok"] = sol.max_clearing_residual < 1e-10;
    inv["p_min"] = p_min;
    inv["p_max"] = p_max;
    inv["p_in_open_unit_interval"] = p_min > 0.0 && p_max < 1.0;
    manifest["invariants"] = inv;
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    return 0;
}

int cmd_analyze(const CliOptions& opt) {
    MarketScenario sc = load_scenario_file(opt.scenario_path);
    apply_overrides(sc, opt);
    const EquilibriumSolution sol = solve_scenario(sc, opt);
    const ForwardLaw law = forward_joint_law(sol, sc.y_chain);
    const ReportBundle rep = build_report(sc, sol, law);
    const std::string hash_line = "# scenario_hash=" + hash_hex(sc.content_hash) + "\n";

    fs::create_directories(opt.out_dir);
    const fs::path out(opt.out_dir);

    const bool has_cond = !rep.percentiles.empty();
    const std::size_t j_bottom = 0;
    const std::size_t j_top = has_cond ? rep.percentiles.size() - 1 : 0;

    std::string dist_csv = hash_line + "n,s,prob,measure\n";
    for (const auto& sd : rep.step_dists) {
        const auto emit = [&](const std::vector<double>& mass, const char* label) {
            for (std::size_t k = 0; k < sd.prices.size(); ++k)
                dist_csv += std::to_string(sd.n) + ',' + fmt(sd.prices[k]) + ',' +
                            fmt(mass[k]) + ',' + label + '\n';
        };
        emit(sd.p, kMeasureP);
        emit(sd.q, kMeasureQ);
        if (has_cond) {
            emit(sd.cond[j_top], kMeasureTop);
            emit(sd.cond[j_bottom], kMeasureBottom);
        }
    }
    write_text(out / "distributions.csv", dist_csv);

    std::string path_csv = hash_line + "n,t,mean,measure\n";
    for (int n = 0; n <= sol.lattice.N; ++n) {
        const auto emit = [&](double mean, const char* label) {
            path_csv += std::to_string(n) + ',' + fmt(rep.times[n]) + ',' +
                        fmt(mean) + ',' + label + '\n';
        };
        emit(rep.mean_p[n], kMeasureP);
        emit(rep.mean_q[n], kMeasureQ);
        if (has_cond) {
            emit(rep.mean_cond[j_top][n], kMeasureTop);
            emit(rep.mean_cond[j_bottom][n], kMeasureBottom);
        }
    }
    write_text(out / "expected_path.csv", path_csv);

    std::string er_csv = hash_line + "n,t,excess_return,measure\n";
    for (int n = 1; n <= sol.lattice.N; ++n) {
        const auto emit = [&](double er, const char* label) {
            er_csv += std::to_string(n) + ',' + fmt(rep.times[n]) + ',' + fmt(er) +
                      ',' + label + '\n';
        };
        emit(rep.er_p[n], kMeasureP);
        emit(rep.er_q[n], kMeasureQ);
        if (has_cond) {
            emit(rep.er_cond[j_top][n], kMeasureTop);
            emit(rep.er_cond[j_bottom][n], kMeasureBottom);
        }
    }
    write_text(out / "excess_return.csv", er_csv);

    std::string vol_csv = hash_line + "n,t,volume,measure\n";
    for (int n = 0; n < sol.steps(); ++n) {
        const auto emit = [&](double v, const char* label) {
            vol_csv += std::to_string(n) + ',' + fmt(rep.times[n]) + ',' + fmt(v) +
                       ',' + label + '\n';
        };
        emit(rep.volume[n], kMeasureP);
        if (has_cond) {
            emit(rep.volume_cond[j_top][n], kMeasureTop);
            emit(rep.volume_cond[j_bottom][n], kMeasureBottom);
        }
    }
    write_text(out / "volume.csv", vol_csv);

    json manifest;
    manifest["command"] = "analyze";
    manifest["scenario_hash"] = hash_hex(sc.content_hash);
    manifest["lattice"] = lattice_json(sol.lattice);
    manifest["effective"] = effective_json(sc);
    manifest["report_steps"] = resolved_steps(rep);
    json inv;
    inv["clearing_max_residual"] = sol.max_clearing_residual;
    inv["clearing_ok"] = sol.max_clearing_residual < 1e-10;
    manifest["invariants"] = inv;
    json summary;
    const int N = sol.lattice.N;
    summary["mean_final"] = {{kMeasureP, rep.mean_p[N]}, {kMeasureQ, rep.mean_q[N]}};
    summary["excess_return_final"] = {{kMeasureP, rep.er_p[N]},
                                      {kMeasureQ, rep.er_q[N]}};
    if (has_cond) {
        summary["mean_final"][kMeasureTop] = rep.mean_cond[j_top][N];
        summary["mean_final"][kMeasureBottom] = rep.mean_cond[j_bottom][N];
        summary["excess_return_final"][kMeasureTop] = rep.er_cond[j_top][N];
        summary["excess_return_final"][kMeasureBottom] = rep.er_cond[j_bottom][N];
    }
    manifest["summary"] = summary;
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    return 0;
}

int cmd_converge(const CliOptions& opt) {
    MarketScenario sc = load_scenario_file(opt.scenario_path);
    apply_overrides(sc, opt);
    SolverOptions so;
    so.threads = effective_threads(opt);
    const std::uint64_t seed = opt.seed_set ? opt.seed : sc.analysis.seed;
    const ConvergenceReport rep =
        convergence_study(sc, opt.np_list, opt.replications, seed, so);
    const std::string hash_line = "# scenario_hash=" + hash_hex(sc.content_hash) + "\n";

    fs::create_directories(opt.out_dir);
    const fs::path out(opt.out_dir);

    std::string csv = hash_line + "n_p,replication,mse\n";
    for (std::size_t si = 0; si < rep.n_p.size(); ++si)
        for (int r = 0; r < rep.replications; ++r)
            csv += std::to_string(rep.n_p[si]) + ',' + std::to_string(r) + ',' +
                   fmt(rep.mse[si][r]) + '\n';
    write_text(out / "convergence.csv", csv);

    json j;
    j["command"] = "converge";
    j["scenario_hash"] = hash_hex(sc.content_hash);
    j["seed"] = rep.seed;
    j["replications"] = rep.replications;
    j["n_p"] = rep.n_p;
    j["mse_mean"] = rep.mse_mean;
    j["degenerate"] = rep.degenerate;
    if (rep.degenerate) {
        j["slope"] = nullptr;
    } else {
        j["slope"] = rep.slope;
        j["slope_stderr"] = rep.slope_stderr;
        j["slope_ci95"] = {rep.slope - 1.96 * rep.slope_stderr,
                           rep.slope + 1.96 * rep.slope_stderr};
    }
    write_text(out / "convergence.json", j.dump(2) + "\n");
    return 0;
}

int cmd_compare(const CliOptions& opt) {
    MarketScenario a = load_scenario_file(opt.scenario_path);
    MarketScenario b = load_scenario_file(opt.baseline_path);
    apply_overrides(a, opt);
    apply_overrides(b, opt);
    const LatticeSpec &la = a.lattice, &lb = b.lattice;
    if (la.N != lb.N || la.T != lb.T || la.r != lb.r || la.s0 != lb.s0 ||
        la.u_tilde != lb.u_tilde || la.d_tilde != lb.d_tilde)
        throw Error("compare.lattice",
                    "scenarios use different lattices and cannot be compared");

    const EquilibriumSolution sol_a = solve_scenario(a, opt);
    const EquilibriumSolution sol_b = solve_scenario(b, opt);
    const ForwardLaw law_a = forward_joint_law(sol_a, a.y_chain);
    const ForwardLaw law_b = forward_joint_law(sol_b, b.y_chain);
    const ReportBundle rep_a = build_report(a, sol_a, law_a);
    const std::vector<int> steps = resolved_steps(rep_a);

    fs::create_directories(opt.out_dir);
    const fs::path out(opt.out_dir);
    const std::string hash_lines = "# scenario_hash=" + hash_hex(a.content_hash) +
                                   "\n# baseline_hash=" + hash_hex(b.content_hash) +
                                   "\n";

    std::string dist_csv = hash_lines + "n,s,prob_a,prob_b,diff\n";
    std::string mom_csv = hash_lines +
                          "n,t,mean_a,mean_b,mean_diff,var_a,var_b,var_diff,"
                          "upper_tail_a,upper_tail_b,upper_tail_diff,"
                          "lower_tail_a,lower_tail_b,lower_tail_diff\n";

    for (int n : steps) {
        const auto [prices, ma] = node_marginal(law_a, la, n);
        const auto mb = node_marginal(law_b, lb, n).second;
        for (std::size_t k = 0; k < prices.size(); ++k)
            dist_csv += std::to_string(n) + ',' + fmt(prices[k]) + ',' +
                        fmt(ma[k]) + ',' + fmt(mb[k]) + ',' +
                        fmt(ma[k] - mb[k]) + '\n';

        const auto stats = [&](const std::vector<double>& m) {
            double mean = 0.0, second = 0.0, upper = 0.0, lower = 0.0;
            for (std::size_t k = 0; k < prices.size(); ++k) {
                mean += m[k] * prices[k];
                second += m[k] * prices[k] * prices[k];
                if (prices[k] > opt.tail_upper) upper += m[k];
                if (prices[k] < opt.tail_lower) lower += m[k];
            }
            return std::array<double, 4>{mean, second - mean * mean, upper, lower};
        };
        const auto sa = stats(ma);
        const auto sb = stats(mb);
        mom_csv += std::to_string(n) + ',' + fmt(n * la.dt());
        for (int i = 0; i < 4; ++i)
            mom_csv += ',' + fmt(sa[i]) + ',' + fmt(sb[i]) + ',' + fmt(sa[i] - sb[i]);
        mom_csv += '\n';
    }
    write_text(out / "compare_distributions.csv", dist_csv);
    write_text(out / "compare_moments.csv", mom_csv);

    json manifest;
    manifest["command"] = "compare";
    manifest["scenario_hash"] = hash_hex(a.content_hash);
    manifest["baseline_hash"] = hash_hex(b.content_hash);
    manifest["lattice"] = lattice_json(la);
    manifest["report_steps"] = steps;
    manifest["tail_upper"] = opt.tail_upper;
    manifest["tail_lower"] = opt.tail_lower;
    write_text(out / "compare_manifest.json", manifest.dump(2) + "\n");
    return 0;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Mean-field market-clearing equilibrium on a binomial lattice"};
    app.require_subcommand(1);

    CliOptions opt;
    int rc = 0;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--scenario", opt.scenario_path, "Scenario JSON file")
            ->required();
        cmd->add_option("--out", opt.out_dir, "Output directory")->required();
        cmd->add_option("--seed", opt.seed, "Override the scenario's seed");
        cmd->add_option("--threads", opt.threads,
                        "Worker threads (fallback: MFE_THREADS, then all cores)");
        cmd->add_option("--percentile-convention", opt.percentile_convention,
                        "Percentile convention for conditional reports")
            ->check(CLI::IsMember({"node-index", "probability"}));
        cmd->add_flag("--path-mode", opt.path_mode,
                      "Solve on the non-recombining move-sequence tree");
    };

    CLI::App* solve = app.add_subcommand(
        "solve", "Solve for equilibrium transition probabilities and positions");
    add_common(solve);
    solve->callback([&] {
        opt.seed_set = solve->count("--seed") > 0;
        rc = cmd_solve(opt);
    });

    CLI::App* analyze = app.add_subcommand(
        "analyze", "Emit price distributions, excess returns, and volumes");
    add_common(analyze);
    analyze->callback([&] {
        opt.seed_set = analyze->count("--seed") > 0;
        rc = cmd_analyze(opt);
    });

    CLI::App* converge = app.add_subcommand(
        "converge", "Estimate the finite-population convergence rate");
    add_common(converge);
    converge->add_option("--np", opt.np_list, "Population sizes to sample")
        ->delimiter(',');
    converge->add_option("--replications", opt.replications,
                         "Monte Carlo replications per population size");
    converge->callback([&] {
        opt.seed_set = converge->count("--seed") > 0;
        rc = cmd_converge(opt);
    });

    CLI::App* compare = app.add_subcommand(
        "compare", "Compare equilibrium distributions of two scenarios");
    add_common(compare);
    compare->add_option("--baseline", opt.baseline_path, "Baseline scenario JSON")
        ->required();
    compare->add_option("--tail-upper", opt.tail_upper,
                        "Upper tail threshold for moment comparison");
    compare->add_option("--tail-lower", opt.tail_lower,
                        "Lower tail threshold for moment comparison");
    compare->callback([&] {
        opt.seed_set = compare->count("--seed") > 0;
        rc = cmd_compare(opt);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error [" << e.code() << "]: " << e.what() << std::endl;
        return e.is_numeric() ? 3 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return rc;
}

}  // namespace mfe
