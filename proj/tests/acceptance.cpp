// Acceptance gate: runs every checked guarantee of the library end-to-end and
// prints one verdict line per criterion, with the measured numbers inline.
// Exits nonzero if any criterion fails.
#include <sys/wait.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mfe/common.hpp"
#include "mfe/distribution_analyzer.hpp"
#include "mfe/equilibrium_solver.hpp"
#include "mfe/finite_agent_sim.hpp"
#include "mfe/lattice.hpp"
#include "mfe/market_model.hpp"
#include "mfe/scenario_json.hpp"

using namespace mfe;
namespace fs = std::filesystem;

namespace {

std::string sfmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return {buf};
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double s() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

struct Outcome {
    bool ok = false;
    std::vector<std::string> details;
};

std::string scenario_path(const char* name) {
    return std::string(MFE_SCENARIO_DIR) + "/" + name;
}

MarketScenario load(const char* name) {
    return load_scenario_file(scenario_path(name));
}

double binomial_pmf(int n, int k, double p) {
    const double lg = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                      std::lgamma(n - k + 1.0);
    return std::exp(lg + k * std::log(p) + (n - k) * std::log1p(-p));
}

// Marginal stock mass per lattice node at step n (node-indexed law).
std::vector<double> stock_marginal(const ForwardLaw& law, int n) {
    std::vector<double> mass(law.stock_counts[n], 0.0);
    for (int k = 0; k < law.stock_counts[n]; ++k)
        for (int y = 0; y < law.y_counts[n]; ++y)
            mass[k] += law.joint[n][law.index(n, k, y)];
    return mass;
}

double mass_above(const LatticeSpec& lat, const std::vector<double>& mass, int n,
                  double threshold) {
    double total = 0.0;
    for (int k = 0; k < static_cast<int>(mass.size()); ++k)
        if (lat.node_price(n, k) > threshold) total += mass[k];
    return total;
}

double mass_below(const LatticeSpec& lat, const std::vector<double>& mass, int n,
                  double threshold) {
    double total = 0.0;
    for (int k = 0; k < static_cast<int>(mass.size()); ++k)
        if (lat.node_price(n, k) < threshold) total += mass[k];
    return total;
}

double price_variance(const LatticeSpec& lat, const std::vector<double>& mass,
                      int n) {
    double mean = 0.0, second = 0.0;
    for (int k = 0; k < static_cast<int>(mass.size()); ++k) {
        const double s = lat.node_price(n, k);
        mean += mass[k] * s;
        second += mass[k] * s * s;
    }
    return second - mean * mean;
}

// The eighteen study scenarios: every liability, endowment, order-flow, and
// bias variant that the reports in this repository are built from.
const char* kStudyScenarios[] = {
    "table1_f1.json",        "table1_f2.json",        "table1_f1_flow_up.json",
    "table1_f1_flow_down.json", "table2_azeta090.json", "table2_azeta095.json",
    "table2_azeta100.json",  "table2_azeta105.json",  "flow2sided.json",
    "flow2sided_base.json",  "bias_rational.json",    "bias_contrarian.json",
    "bias_momentum.json",    "table3_sz00.json",      "table3_sz05.json",
    "table3_sz10.json",      "table3_sz15.json",      "table3_sz20.json",
};

// 1. Population-weighted mean position equals the order flow at every node.
Outcome c1_market_clearing() {
    Outcome o;
    double worst = 0.0, slowest = 0.0;
    std::string worst_name, slow_name;
    bool ok = true;
    for (const char* name : kStudyScenarios) {
        const MarketScenario sc = load(name);
        Timer t;
        const EquilibriumSolution sol = backward_solve(sc);
        const double secs = t.s();
        if (sol.max_clearing_residual > worst) {
            worst = sol.max_clearing_residual;
            worst_name = name;
        }
        if (secs > slowest) {
            slowest = secs;
            slow_name = name;
        }
        ok = ok && sol.max_clearing_residual < 1e-10 && secs < 30.0;
    }
    o.ok = ok;
    o.details.push_back(sfmt("18 scenarios; worst residual %.3g (%s), bound 1e-10",
                             worst, worst_name.c_str()));
    o.details.push_back(
        sfmt("slowest solve %.2f s (%s), bound 30 s", slowest, slow_name.c_str()));
    return o;
}

// 2. No liability, no endowment, no flow: the equilibrium is risk-neutral.
Outcome c2_risk_neutral_degeneracy() {
    Outcome o;
    const MarketScenario sc = load("rn_degenerate.json");
    const EquilibriumSolution sol = backward_solve(sc);
    const LatticeSpec& lat = sol.lattice;
    const double p_q = -lat.d() / (lat.u() - lat.d());

    double dp = 0.0, dphi = 0.0;
    for (int n = 0; n < sol.steps(); ++n) {
        for (double v : sol.p[n]) dp = std::max(dp, std::fabs(v - p_q));
        for (const auto& pop : sol.phi[n])
            for (double v : pop) dphi = std::max(dphi, std::fabs(v));
    }

    const ForwardLaw law = forward_joint_law(sol, sc.y_chain);
    double dlaw = 0.0;
    for (int n = 0; n <= lat.N; ++n) {
        const std::vector<double> mass = stock_marginal(law, n);
        for (int k = 0; k <= n; ++k)
            dlaw = std::max(dlaw, std::fabs(mass[k] - binomial_pmf(n, k, p_q)));
    }

    o.ok = dp <= 1e-12 && dphi <= 1e-12 && dlaw <= 1e-10;
    o.details.push_back(sfmt("max |p - p_q| = %.3g (bound 1e-12)", dp));
    o.details.push_back(sfmt("max |phi| = %.3g (bound 1e-12)", dphi));
    o.details.push_back(
        sfmt("max forward-law gap to binomial Q = %.3g (bound 1e-10)", dlaw));
    return o;
}

// 3. Annualized log excess returns at the 3-year horizon, marginal and
//    conditioned on the common factor's top/bottom quartile.
Outcome c3_excess_return_levels() {
    Outcome o;
    Timer t;
    const MarketScenario sc = load("table1_f1.json");
    const EquilibriumSolution sol = backward_solve(sc);
    const ForwardLaw law = forward_joint_law(sol, sc.y_chain);
    const ReportBundle rep = build_report(sc, sol, law);
    const double secs = t.s();

    const int N = sol.lattice.N;
    const std::size_t top = rep.percentiles.size() - 1, bottom = 0;
    const double er_m = rep.er_p[N];
    const double er_t = rep.er_cond[top][N];
    const double er_b = rep.er_cond[bottom][N];

    const bool ok_m = er_m >= 0.065 && er_m <= 0.095;
    const bool ok_t = er_t >= 0.110 && er_t <= 0.150;
    const bool ok_b = er_b >= 0.035 && er_b <= 0.065;
    o.ok = ok_m && ok_t && ok_b && secs < 60.0;

    o.details.push_back(sfmt("marginal          %.4f in [0.065, 0.095] %s", er_m,
                             ok_m ? "ok" : "FAIL"));
    o.details.push_back(sfmt("top-quartile Y    %.4f in [0.110, 0.150] %s", er_t,
                             ok_t ? "ok" : "FAIL"));
    o.details.push_back(sfmt("bottom-quartile Y %.4f in [0.035, 0.065] %s", er_b,
                             ok_b ? "ok" : "FAIL"));

    // The same three statistics under the other measurement conventions, for
    // the record: the target bands appear to be calibrated to the annualized
    // mean-price gap, which lands inside all three.
    const double horizon = rep.times[N];
    const double s0 = sol.lattice.s0;
    const double r = sol.lattice.r;
    const auto simple = [&](double mean) {
        return std::pow(mean / s0, 1.0 / horizon) - 1.0 - std::expm1(r);
    };
    const auto gap = [&](double mean) { return (mean - rep.mean_q[N]) / horizon; };
    o.details.push_back(sfmt(
        "simple-rate convention: %.4f / %.4f / %.4f", simple(rep.mean_p[N]),
        simple(rep.mean_cond[top][N]), simple(rep.mean_cond[bottom][N])));
    o.details.push_back(sfmt(
        "annualized mean gap (E_P[S]-E_Q[S])/t: %.4f / %.4f / %.4f",
        gap(rep.mean_p[N]), gap(rep.mean_cond[top][N]),
        gap(rep.mean_cond[bottom][N])));
    o.details.push_back(sfmt("runtime %.2f s (bound 60 s)", secs));
    return o;
}

// 4. Flipping the liability's stock exposure makes the premium negative at
//    every horizon of a quarter year or more.
Outcome c4_sign_reversal() {
    Outcome o;
    const MarketScenario sc = load("table1_f2.json");
    const EquilibriumSolution sol = backward_solve(sc);
    const ReportBundle rep = build_report(sc, sol, forward_joint_law(sol, sc.y_chain));

    const double dt = sol.lattice.dt();
    int first = sol.lattice.N;
    double max_er = -1.0;
    int horizons = 0;
    for (int n = 1; n <= sol.lattice.N; ++n) {
        if (n * dt < 0.25) continue;
        first = std::min(first, n);
        ++horizons;
        max_er = std::max(max_er, rep.er_p[n]);
    }
    o.ok = max_er < 0.0;
    o.details.push_back(sfmt(
        "max excess return over steps %d..%d (%d horizons >= 0.25y) = %.4g%s",
        first, sol.lattice.N, horizons, max_er, max_er < 0.0 ? " < 0" : ""));
    return o;
}

// 5. Buy-side flow fattens the upper price tail, sell-side thins it, and the
//    two-sided ramp fattens both tails relative to its no-flow baseline.
Outcome c5_flow_tails() {
    Outcome o;
    const auto tail_at = [](const char* name, double up_thr, double lo_thr) {
        const MarketScenario sc = load(name);
        const EquilibriumSolution sol = backward_solve(sc);
        const ForwardLaw law = forward_joint_law(sol, sc.y_chain);
        const int N = sol.lattice.N;
        const std::vector<double> mass = stock_marginal(law, N);
        return std::pair<double, double>{mass_above(sol.lattice, mass, N, up_thr),
                                         mass_below(sol.lattice, mass, N, lo_thr)};
    };

    const auto [base_up, base_lo] = tail_at("table1_f1.json", 2.0, 0.5);
    const auto [up_up, up_lo] = tail_at("table1_f1_flow_up.json", 2.0, 0.5);
    const auto [down_up, down_lo] = tail_at("table1_f1_flow_down.json", 2.0, 0.5);
    const bool ok_up = up_up > base_up;
    const bool ok_down = down_up < base_up;

    const auto [ts_base_up, ts_base_lo] = tail_at("flow2sided_base.json", 1.6, 0.625);
    const auto [ts_up, ts_lo] = tail_at("flow2sided.json", 1.6, 0.625);
    const bool ok_two = ts_up > ts_base_up && ts_lo > ts_base_lo;

    o.ok = ok_up && ok_down && ok_two;
    o.details.push_back(sfmt(
        "mass above 2.0 at 3y: baseline %.4g, buy-side flow %.4g (up %s), "
        "sell-side flow %.4g (down %s)",
        base_up, up_up, ok_up ? "ok" : "FAIL", down_up, ok_down ? "ok" : "FAIL"));
    o.details.push_back(sfmt(
        "two-sided flow tails (s>1.6 / s<0.625): baseline %.4g / %.4g, "
        "with flow %.4g / %.4g %s",
        ts_base_up, ts_base_lo, ts_up, ts_lo, ok_two ? "ok" : "FAIL"));
    return o;
}

// 6. Lower spending weight => lower expected prices; the lowest-weight economy
//    hugs the risk-neutral path closest at the 1-year mark.
Outcome c6_spending_weight_monotonicity() {
    Outcome o;
    const char* names[] = {"table2_azeta090.json", "table2_azeta095.json",
                           "table2_azeta100.json", "table2_azeta105.json"};
    std::vector<double> mean3(4), dist1(4);
    int n1 = 0, n3 = 0;
    for (int i = 0; i < 4; ++i) {
        const MarketScenario sc = load(names[i]);
        const EquilibriumSolution sol = backward_solve(sc);
        const ReportBundle rep =
            build_report(sc, sol, forward_joint_law(sol, sc.y_chain));
        n3 = sol.lattice.N;
        n1 = static_cast<int>(std::lround(1.0 / sol.lattice.dt()));
        mean3[i] = rep.mean_p[n3];
        dist1[i] = std::fabs(rep.mean_p[n1] - rep.mean_q[n1]);
    }
    bool increasing = true;
    for (int i = 1; i < 4; ++i) increasing = increasing && mean3[i] > mean3[i - 1];
    const bool closest =
        std::min_element(dist1.begin(), dist1.end()) == dist1.begin();
    o.ok = increasing && closest;
    o.details.push_back(sfmt(
        "E[S(3y)] over spending weights {0.90,0.95,1.00,1.05}: "
        "%.5f, %.5f, %.5f, %.5f (%s)",
        mean3[0], mean3[1], mean3[2], mean3[3],
        increasing ? "strictly increasing" : "NOT increasing"));
    o.details.push_back(sfmt(
        "|E_P[S(1y)] - E_Q[S(1y)]|: %.3g, %.3g, %.3g, %.3g (%s)", dist1[0],
        dist1[1], dist1[2], dist1[3],
        closest ? "0.90 closest to the Q-path" : "0.90 NOT closest"));
    return o;
}

// 7. More idiosyncratic volatility means more trading but (almost) the same
//    premium.
Outcome c7_volume_monotonicity() {
    Outcome o;
    const char* names[] = {"table3_sz00.json", "table3_sz05.json",
                           "table3_sz10.json", "table3_sz15.json",
                           "table3_sz20.json"};
    std::vector<double> vol(5), er(5);
    for (int i = 0; i < 5; ++i) {
        const MarketScenario sc = load(names[i]);
        const EquilibriumSolution sol = backward_solve(sc);
        const ReportBundle rep =
            build_report(sc, sol, forward_joint_law(sol, sc.y_chain));
        const int n15 = static_cast<int>(std::lround(1.5 / sol.lattice.dt()));
        vol[i] = rep.volume[n15];
        er[i] = rep.er_p[sol.lattice.N];
    }
    bool increasing = true;
    for (int i = 1; i < 5; ++i) increasing = increasing && vol[i] > vol[i - 1];
    double max_er_shift = 0.0;
    for (int i = 1; i < 5; ++i)
        max_er_shift = std::max(max_er_shift, std::fabs(er[i] - er[0]));
    o.ok = increasing && max_er_shift < 0.01;
    o.details.push_back(sfmt(
        "volume at 1.5y over sigma_z {0,5,10,15,20}%%: %.4f, %.4f, %.4f, %.4f, "
        "%.4f (%s)",
        vol[0], vol[1], vol[2], vol[3], vol[4],
        increasing ? "strictly increasing" : "NOT increasing"));
    o.details.push_back(
        sfmt("max |excess return shift| at 3y = %.4g (bound 0.01)", max_er_shift));
    return o;
}

// 8. Contrarian belief bias widens the 3-year price distribution, momentum
//    bias narrows it.
Outcome c8_bias_tails() {
    Outcome o;
    const auto shape = [](const char* name) {
        const MarketScenario sc = load(name);
        const EquilibriumSolution sol = backward_solve(sc);
        const ForwardLaw law = forward_joint_law(sol, sc.y_chain);
        const int N = sol.lattice.N;
        const std::vector<double> mass = stock_marginal(law, N);
        return std::array<double, 3>{price_variance(sol.lattice, mass, N),
                                     mass_above(sol.lattice, mass, N, 1.6),
                                     mass_below(sol.lattice, mass, N, 0.625)};
    };
    const auto rat = shape("bias_rational.json");
    const auto con = shape("bias_contrarian.json");
    const auto mom = shape("bias_momentum.json");
    const bool ok_con =
        con[0] > rat[0] && con[1] > rat[1] && con[2] > rat[2];
    const bool ok_mom =
        mom[0] < rat[0] && mom[1] < rat[1] && mom[2] < rat[2];
    o.ok = ok_con && ok_mom;
    o.details.push_back(sfmt(
        "3y variance / upper tail / lower tail: rational %.4g / %.4g / %.4g",
        rat[0], rat[1], rat[2]));
    o.details.push_back(
        sfmt("contrarian %.4g / %.4g / %.4g (all larger: %s)", con[0], con[1],
             con[2], ok_con ? "ok" : "FAIL"));
    o.details.push_back(
        sfmt("momentum   %.4g / %.4g / %.4g (all smaller: %s)", mom[0], mom[1],
             mom[2], ok_mom ? "ok" : "FAIL"));
    return o;
}

// 9. Finite-population excess demand decays like 1/N, and the two-type hand
//    case matches its exact constant.
Outcome c9_convergence_rate() {
    Outcome o;
    Timer t;
    const MarketScenario sc = load("twotype_handcase.json");

    const ConvergenceReport rate = convergence_study(sc, {100, 1000, 10000}, 200, 42u);
    const bool ok_slope =
        !rate.degenerate && rate.slope >= -1.15 && rate.slope <= -0.85;

    // The exact mean squared excess demand is 0.25/N_p; check it at a
    // replication count whose Monte Carlo noise sits well inside the 5% band.
    const ConvergenceReport level = convergence_study(sc, {100, 400}, 20000, 42u);
    bool ok_level = true;
    std::string level_txt;
    for (std::size_t i = 0; i < level.n_p.size(); ++i) {
        const double want = 0.25 / level.n_p[i];
        const double rel = std::fabs(level.mse_mean[i] - want) / want;
        ok_level = ok_level && rel <= 0.05;
        level_txt += sfmt("%sN_p=%d: %.6g vs %.6g (off %.2f%%)",
                          i == 0 ? "" : ";  ", level.n_p[i], level.mse_mean[i],
                          want, 100.0 * rel);
    }
    const double secs = t.s();
    o.ok = ok_slope && ok_level && secs < 300.0;
    o.details.push_back(sfmt(
        "log-log slope over N_p {1e2,1e3,1e4} x 200 reps = %.4f +- %.4f "
        "(band [-1.15, -0.85]) %s",
        rate.slope, rate.slope_stderr, ok_slope ? "ok" : "FAIL"));
    o.details.push_back("MSE vs 0.25/N_p at 20000 reps: " + level_txt);
    o.details.push_back(sfmt("runtime %.1f s (bound 300 s)", secs));
    return o;
}

// 10. The solver's closed-form position/consumption rules agree with a
//     brute-force one-step optimizer, and the path-tree solver agrees with the
//     recombining solver when payoffs are path-independent.
Outcome c10_oracle_equivalence() {
    Outcome o;
    const LatticeSpec spec = LatticeSpec::from_factors(1, 1.0, 0.0, 1.0, 1.1, 0.9);
    const auto uniform = [](SplitMix64& rng, double lo, double hi) {
        return lo + (hi - lo) * rng.next_double();
    };

    int nodes = 0;
    double worst_phi = 0.0, worst_c = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
        const bool recursive = pass == 1;
        SplitMix64 rng(20240811u, recursive ? 2u : 1u);
        for (int i = 0; i < 750; ++i, ++nodes) {
            OracleNode node;
            node.recursive = recursive;
            node.p_up = uniform(rng, 0.2, 0.8);
            node.log_a_up = uniform(rng, -0.7, 0.7);
            node.log_a_down = uniform(rng, -0.7, 0.7);
            node.gamma = uniform(rng, 0.8, 2.5);
            node.D = uniform(rng, 0.7, 1.4);
            if (recursive) {
                node.x = uniform(rng, -1.0, 1.0);
                node.zeta = uniform(rng, 0.5, 1.5);
                node.psi = uniform(rng, 0.5, 1.5);
                node.delta = uniform(rng, 0.8, 1.0);
                node.beta = uniform(rng, 1.0, 1.01);
                node.dt = uniform(rng, 0.05, 1.0);
            }
            const OracleResult got = brute_force_node_oracle(node, spec);
            const double phi =
                optimal_position(node.p_up, 1.0 - node.p_up,
                                 node.log_a_up - node.log_a_down, node.gamma,
                                 node.D, spec);
            worst_phi = std::max(worst_phi, std::fabs(got.phi - phi));
            if (recursive) {
                const double scale = node.gamma * node.D * phi;
                const double log_v = log_sum_exp2(
                    std::log(node.p_up) - scale * spec.u() + node.log_a_up,
                    std::log(1.0 - node.p_up) - scale * spec.d() + node.log_a_down);
                const double w = node.psi * node.D * node.beta;
                const double c =
                    (w * node.x - std::log(node.delta * w / node.zeta) -
                     (node.psi / node.gamma) * log_v) /
                    (node.zeta + node.dt * w);
                worst_c = std::max(worst_c, std::fabs(got.c - c));
            }
        }
    }
    const bool ok_oracle = worst_phi <= 1e-6 && worst_c <= 1e-6;

    // Path-tree vs recombining solver on a path-independent scenario (N = 6).
    const MarketScenario sc = load("small_mixed.json");
    const EquilibriumSolution node_sol = backward_solve(sc);
    MarketScenario psc = sc;
    psc.analysis.path_mode = true;
    const EquilibriumSolution path_sol = path_dependent_solve(psc);
    double dp = 0.0, dphi = 0.0;
    for (int n = 0; n < path_sol.steps(); ++n) {
        const int Y = path_sol.y_counts[n];
        for (int kp = 0; kp < path_sol.stock_counts[n]; ++kp) {
            const int kn = std::popcount(static_cast<unsigned>(kp));
            for (int y = 0; y < Y; ++y) {
                dp = std::max(dp, std::fabs(
                                      path_sol.p[n][path_sol.cell_index(n, kp, y)] -
                                      node_sol.p[n][node_sol.cell_index(n, kn, y)]));
                for (std::size_t p = 0; p < sc.populations.size(); ++p) {
                    const int Z = path_sol.z_counts[p][n];
                    const int T = path_sol.type_counts[p];
                    for (int z = 0; z < Z; ++z)
                        for (int tt = 0; tt < T; ++tt)
                            dphi = std::max(
                                dphi,
                                std::fabs(path_sol.phi[n][p][path_sol.agent_index(
                                              n, kp, y, z, tt, static_cast<int>(p))] -
                                          node_sol.phi[n][p][node_sol.agent_index(
                                              n, kn, y, z, tt, static_cast<int>(p))]));
                }
            }
        }
    }
    const bool ok_path = dp <= 1e-12 && dphi <= 1e-12;

    o.ok = ok_oracle && ok_path;
    o.details.push_back(sfmt(
        "%d seeded nodes: worst position gap %.3g, worst consumption gap %.3g "
        "(bound 1e-6)",
        nodes, worst_phi, worst_c));
    o.details.push_back(sfmt(
        "path tree vs recombining at N=6: max |dp| %.3g, max |dphi| %.3g "
        "(bound 1e-12)",
        dp, dphi));
    return o;
}

// 11. Adding constants to the liability and the endowment stream shifts
//     consumption but leaves prices and positions untouched.
Outcome c11_shift_invariance() {
    Outcome o;
    const MarketScenario base = load("small_mixed.json");
    MarketScenario shifted = base;
    for (PopulationSpec& pop : shifted.populations) {
        pop.F.a += 10.0;
        pop.g.a += 3.0;
    }
    SolverOptions opt;
    opt.keep_diagnostics = true;
    const EquilibriumSolution a = backward_solve(base, opt);
    const EquilibriumSolution b = backward_solve(shifted, opt);

    double dp = 0.0, dphi = 0.0;
    for (int n = 0; n < a.steps(); ++n) {
        for (std::size_t i = 0; i < a.p[n].size(); ++i)
            dp = std::max(dp, std::fabs(a.p[n][i] - b.p[n][i]));
        for (std::size_t p = 0; p < a.phi[n].size(); ++p)
            for (std::size_t i = 0; i < a.phi[n][p].size(); ++i)
                dphi = std::max(dphi, std::fabs(a.phi[n][p][i] - b.phi[n][p][i]));
    }
    const double ca = consumption_policy(1.0, 0, 0, 0, 0, 1, 0, base, a);
    const double cb = consumption_policy(1.0, 0, 0, 0, 0, 1, 0, shifted, b);
    o.ok = dp <= 1e-12 && dphi <= 1e-12 && std::fabs(ca - cb) > 1e-6;
    o.details.push_back(
        sfmt("F+10, g+3: max |dp| %.3g, max |dphi| %.3g (bound 1e-12)", dp, dphi));
    o.details.push_back(
        sfmt("root consumption moves from %.6f to %.6f", ca, cb));
    return o;
}

// 12. Re-running any subcommand with identical inputs and seed reproduces
//     every output byte for byte.
Outcome c12_byte_identical_reruns() {
    Outcome o;
    const fs::path work = fs::temp_directory_path() / "mfe_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    const auto read_file = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const auto run = [&](const std::string& args) {
        const std::string cmd = std::string(MFE_CLI_PATH) + " " + args +
                                " >/dev/null 2>" + (work / "err.txt").string();
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };

    const std::string small = scenario_path("small_mixed.json");
    const std::string twotype = scenario_path("twotype_handcase.json");
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"solve", "solve --scenario " + small},
        {"analyze", "analyze --scenario " + small},
        {"converge",
         "converge --scenario " + twotype + " --np 50,100 --replications 20 --seed 9"},
        {"compare", "compare --scenario " + small + " --baseline " + small},
    };

    bool ok = true;
    std::string summary;
    for (const auto& [name, args] : commands) {
        const fs::path out_a = work / (name + "_a"), out_b = work / (name + "_b");
        const int rc_a = run(args + " --out " + out_a.string());
        const int rc_b = run(args + " --out " + out_b.string());
        bool same = rc_a == 0 && rc_b == 0;
        int files = 0;
        if (same) {
            for (const auto& entry : fs::directory_iterator(out_a)) {
                ++files;
                const fs::path twin = out_b / entry.path().filename();
                same = same && fs::exists(twin) &&
                       read_file(entry.path()) == read_file(twin);
            }
            same = same && files > 0;
        }
        ok = ok && same;
        summary += sfmt("%s%s %s(%d files)", summary.empty() ? "" : ", ",
                        name.c_str(), same ? "ok " : "DIFFERS ", files);
    }
    o.ok = ok;
    o.details.push_back(summary);
    fs::remove_all(work);
    return o;
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)();
};

}  // namespace

int main() {
    const Criterion criteria[] = {
        {1, "market clearing across all study scenarios", c1_market_clearing},
        {2, "risk-neutral degeneracy without liabilities or flow",
         c2_risk_neutral_degeneracy},
        {3, "conditional excess-return levels at the 3-year horizon",
         c3_excess_return_levels},
        {4, "negative premium under the reversed liability", c4_sign_reversal},
        {5, "order flow fattens the targeted price tails", c5_flow_tails},
        {6, "spending-weight monotonicity of expected prices",
         c6_spending_weight_monotonicity},
        {7, "idiosyncratic volatility drives volume but not returns",
         c7_volume_monotonicity},
        {8, "belief bias widens or narrows the price distribution", c8_bias_tails},
        {9, "finite-population excess demand decays at rate 1/N",
         c9_convergence_rate},
        {10, "closed-form policies match the brute-force oracle",
         c10_oracle_equivalence},
        {11, "constant wealth shifts leave prices and positions unchanged",
         c11_shift_invariance},
        {12, "reruns with identical inputs are byte-identical",
         c12_byte_identical_reruns},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.ok = false;
            o.details.push_back(std::string("unexpected exception: ") + e.what());
        }
        std::printf("[%s] %2d. %s\n", o.ok ? "PASS" : "FAIL", c.id, c.name);
        for (const std::string& d : o.details) std::printf("          %s\n", d.c_str());
        std::fflush(stdout);
        if (!o.ok) ++failures;
    }

    std::printf("%d/12 criteria passed\n", 12 - failures);
    return failures == 0 ? 0 : 1;
}
