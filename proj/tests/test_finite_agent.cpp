#include "mfe/finite_agent_sim.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "mfe/common.hpp"
#include "mfe/distribution_analyzer.hpp"
#include "mfe/equilibrium_solver.hpp"
#include "mfe/market_model.hpp"
#include "mfe/scenario_json.hpp"
#include "test_util.hpp"

using namespace mfe;

namespace {

// One-period, single-type market with unit sell pressure: every sampled agent
// holds exactly phi* = L, so finite-sample excess demand vanishes identically.
const char* kSingleType = R"({
    "lattice": {"N": 1, "T": 1.0, "r": 0.0, "s0": 1.0, "u_tilde": 1.1, "d_tilde": 0.9},
    "y_chain": {"y0": 1.0, "sigma_y": 0.0},
    "populations": [{
        "weight": 1.0,
        "mode": "exponential",
        "agent_grid": {"gamma_min": 1.0, "gamma_max": 1.0, "n_gamma": 0},
        "z_chain": {"z0": 1.0, "sigma_z": 0.0},
        "F": {"family": "zero"}
    }],
    "order_flow": {"family": "custom", "entries": [[0, 0, 0, 1.0]]},
    "analysis": {"seed": 3}
})";

void test_population_counts() {
    MarketScenario sc = load_scenario_file(testutil::scenario_path("small_mixed.json"));

    // Weights 0.45/0.55: quotas are integral at n = 20.
    const FiniteSample s20 = sample_population(sc, 20, 7u);
    int counts[2] = {0, 0};
    for (const SampledAgent& a : s20.agents) ++counts[a.population];
    REQUIRE(counts[0] == 9);
    REQUIRE(counts[1] == 11);
    REQUIRE(s20.scenario_hash == sc.content_hash);

    // Fractional quotas get largest-remainder correction and still sum to n.
    for (int n : {1, 3, 7, 10, 101}) {
        const FiniteSample s = sample_population(sc, n, 7u);
        REQUIRE(static_cast<int>(s.agents.size()) == n);
        int c[2] = {0, 0};
        for (const SampledAgent& a : s.agents) ++c[a.population];
        REQUIRE(c[0] + c[1] == n);
        REQUIRE(std::fabs(c[0] - 0.45 * n) <= 1.0);
        REQUIRE(std::fabs(c[1] - 0.55 * n) <= 1.0);
    }

    REQUIRE_THROWS_CODE(sample_population(sc, 0, 7u), "sim.population_size");

    testutil::pass("population counts");
}

void test_sampling_determinism() {
    MarketScenario sc = load_scenario_file(testutil::scenario_path("small_mixed.json"));

    const FiniteSample a = sample_population(sc, 64, 11u, 5u);
    const FiniteSample b = sample_population(sc, 64, 11u, 5u);
    REQUIRE(a.agents.size() == b.agents.size());
    for (std::size_t i = 0; i < a.agents.size(); ++i) {
        REQUIRE(a.agents[i].population == b.agents[i].population);
        REQUIRE(a.agents[i].type == b.agents[i].type);
        REQUIRE(a.agents[i].z_idx == b.agents[i].z_idx);
    }

    // A different replication index re-draws types and z paths.
    const FiniteSample c = sample_population(sc, 64, 11u, 6u);
    bool differs = false;
    for (std::size_t i = 0; i < a.agents.size() && !differs; ++i)
        differs = a.agents[i].type != c.agents[i].type ||
                  a.agents[i].z_idx != c.agents[i].z_idx;
    REQUIRE(differs);

    // Z paths respect the chain's step extents.
    for (const SampledAgent& ag : a.agents) {
        REQUIRE(static_cast<int>(ag.z_idx.size()) == sc.lattice.N + 1);
        for (int n = 0; n <= sc.lattice.N; ++n) {
            REQUIRE(ag.z_idx[n] >= 0);
            REQUIRE(ag.z_idx[n] <
                    sc.populations[ag.population].z_chain.state_count(n));
        }
    }

    testutil::pass("sampling determinism");
}

void test_type_frequencies() {
    MarketScenario sc = load_scenario_file(testutil::scenario_path("twotype_handcase.json"));
    const FiniteSample s = sample_population(sc, 100000, 123u);
    int low = 0;
    for (const SampledAgent& a : s.agents) low += a.type == 0 ? 1 : 0;
    // Equal type weights: the draw frequency sits near 1/2 (5 sigma ~ 0.008).
    REQUIRE_CLOSE(low / 100000.0, 0.5, 0.01);

    testutil::pass("type draw frequencies");
}

void test_zero_excess_demand() {
    MarketScenario sc = parse_scenario_text(kSingleType);
    const EquilibriumSolution sol = backward_solve(sc);
    const ForwardLaw law = forward_joint_law(sol, sc.y_chain);

    for (int n_agents : {1, 7, 50}) {
        const FiniteSample s = sample_population(sc, n_agents, 99u);
        REQUIRE(excess_demand_mse(sc, sol, law, s, 0) < 1e-28);
    }

    testutil::pass("zero excess demand for a single type");
}

void test_mse_by_hand() {
    MarketScenario sc = load_scenario_file(testutil::scenario_path("twotype_handcase.json"));
    const EquilibriumSolution sol = backward_solve(sc);
    const ForwardLaw law = forward_joint_law(sol, sc.y_chain);

    const FiniteSample s = sample_population(sc, 5, 2024u);
    // Recompute the estimator by hand: one node, unit mass, positions are
    // phi(type 0) = 1.5 and phi(type 1) = 0.5 against flow L = 1.
    double mean = 0.0;
    for (const SampledAgent& a : s.agents) mean += a.type == 0 ? 1.5 : 0.5;
    mean /= 5.0;
    const double want = (mean - 1.0) * (mean - 1.0);
    REQUIRE_CLOSE(excess_demand_mse(sc, sol, law, s, 0), want, 1e-15);

    // Mismatched scenario/sample pairs are rejected.
    MarketScenario other = load_scenario_file(testutil::scenario_path("small_mixed.json"));
    const EquilibriumSolution osol = backward_solve(other);
    const ForwardLaw olaw = forward_joint_law(osol, other.y_chain);
    REQUIRE_THROWS_CODE(excess_demand_mse(other, osol, olaw, s, 0),
                        "sim.scenario_mismatch");
    REQUIRE_THROWS_CODE(excess_demand_mse(sc, sol, law, s, 1), "sim.step");
    REQUIRE_THROWS_CODE(excess_demand_mse(sc, sol, law, s, -1), "sim.step");

    testutil::pass("excess-demand estimator by hand");
}

void test_convergence_hand_case() {
    // Two equal-mass types trading 1.5 and 0.5 against unit flow: the exact
    // mean squared excess demand is Var(mean) = 0.25/N_p.
    MarketScenario sc = load_scenario_file(testutil::scenario_path("twotype_handcase.json"));
    const ConvergenceReport rep = convergence_study(sc, {400, 100}, 6000, 42u);

    REQUIRE(rep.n_p.size() == 2);
    REQUIRE(rep.n_p[0] == 100);  // input order is normalized to ascending
    REQUIRE(rep.n_p[1] == 400);
    REQUIRE(rep.replications == 6000);
    REQUIRE(rep.mse.size() == 2);
    REQUIRE(rep.mse[0].size() == 6000);
    REQUIRE(!rep.degenerate);
    REQUIRE(rep.scenario_hash == sc.content_hash);

    const double want0 = 0.25 / 100.0, want1 = 0.25 / 400.0;
    REQUIRE_MSG(std::fabs(rep.mse_mean[0] - want0) <= 0.05 * want0,
                "mse(100) = %.6g vs 0.0025", rep.mse_mean[0]);
    REQUIRE_MSG(std::fabs(rep.mse_mean[1] - want1) <= 0.05 * want1,
                "mse(400) = %.6g vs 0.000625", rep.mse_mean[1]);

    // Quadrupling the population divides the MSE by about four (slope -1).
    const double ratio = rep.mse_mean[0] / rep.mse_mean[1];
    REQUIRE_MSG(std::fabs(ratio - 4.0) <= 0.3, "ratio %.4g", ratio);
    REQUIRE_MSG(std::fabs(rep.slope + 1.0) <= 0.15, "slope %.4g", rep.slope);
    REQUIRE(rep.slope_stderr >= 0.0);

    testutil::pass("convergence hand case");
}

void test_study_determinism_and_errors() {
    MarketScenario sc = load_scenario_file(testutil::scenario_path("twotype_handcase.json"));

    const ConvergenceReport a = convergence_study(sc, {50, 100}, 40, 7u);
    const ConvergenceReport b = convergence_study(sc, {50, 100}, 40, 7u);
    REQUIRE(a.mse == b.mse);
    REQUIRE(a.slope == b.slope);

    const ConvergenceReport c = convergence_study(sc, {50, 100}, 40, 8u);
    REQUIRE(a.mse != c.mse);

    REQUIRE_THROWS_CODE(convergence_study(sc, {100}, 10, 1u), "convergence.np_list");
    REQUIRE_THROWS_CODE(convergence_study(sc, {}, 10, 1u), "convergence.np_list");
    REQUIRE_THROWS_CODE(convergence_study(sc, {50, 100}, 0, 1u),
                        "convergence.replications");

    testutil::pass("study determinism and input errors");
}

void test_degenerate_study() {
    // A single agent state produces exactly zero MSE at every size; the slope
    // of log(0) is undefined and must be flagged instead of fabricated.
    MarketScenario sc = parse_scenario_text(kSingleType);
    const ConvergenceReport rep = convergence_study(sc, {10, 20}, 5, 1u);
    REQUIRE(rep.degenerate);
    for (const auto& row : rep.mse)
        for (double v : row) REQUIRE(v == 0.0);

    testutil::pass("degenerate study flag");
}

}  // namespace

int main() {
    test_population_counts();
    test_sampling_determinism();
    test_type_frequencies();
    test_zero_excess_demand();
    test_mse_by_hand();
    test_convergence_hand_case();
    test_study_determinism_and_errors();
    test_degenerate_study();
    std::printf("finite_agent: all checks passed\n");
    return 0;
}
