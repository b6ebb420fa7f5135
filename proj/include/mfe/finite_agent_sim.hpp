#pragma once

#include <cstdint>
#include <vector>

#include "mfe/distribution_analyzer.hpp"
#include "mfe/equilibrium_solver.hpp"
#include "mfe/market_model.hpp"

namespace mfe {

/// One sampled agent: population membership, preference type, and Z-state path.
struct SampledAgent {
    int population = 0;
    int type = 0;
    std::vector<int> z_idx;  // state index per step 0..N
};

/// A finite draw of agents from a scenario's cross-sectional law.
struct FiniteSample {
    std::uint64_t scenario_hash = 0;
    std::vector<SampledAgent> agents;
};

/// Draws `n_agents` agents deterministically from the scenario's cross-sectional
/// law. Population counts are round(weight * n_agents) with largest-remainder
/// correction so they sum exactly to n_agents; within a population, agents draw
/// (initial Z state, type) from the joint law (or the product law when no joint
/// matrix is given) and then roll the Z chain forward. Each agent owns the RNG
/// stream mix(seed, replication, agent ordinal), so samples are reproducible
/// under any parallel schedule.
FiniteSample sample_population(const MarketScenario& scenario, int n_agents,
                               std::uint64_t seed, std::uint64_t replication = 0);

/// Mean squared excess demand at step n when the sampled agents trade their
/// mean-field optimal positions: the squared gap between the empirical average
/// position and the aggregate demand of the full cross-sectional law (equal to
/// the exogenous order flow by market clearing), averaged over (stock, y)
/// nodes with forward-law weights. Exactly zero whenever the sample reproduces
/// the law, so degenerate single-atom populations report zero rather than
/// solver round-off. Throws when the sample was drawn from a different
/// scenario than the solution.
double excess_demand_mse(const MarketScenario& scenario,
                         const EquilibriumSolution& solution,
                         const ForwardLaw& law, const FiniteSample& sample, int n);

/// Monte Carlo summary of how fast finite-agent excess demand vanishes.
struct ConvergenceReport {
    std::uint64_t scenario_hash = 0;
    std::uint64_t seed = 0;
    int replications = 0;
    std::vector<int> n_p;                  // sampled population sizes (ascending)
    std::vector<std::vector<double>> mse;  // [n_p index][replication]
    std::vector<double> mse_mean;          // [n_p index]
    double slope = 0.0;                    // log-log OLS slope of mse_mean vs n_p
    double slope_stderr = 0.0;             // leave-one-replication-out jackknife
    bool degenerate = false;               // some mse_mean is zero; slope undefined
};

/// Solves the scenario once, then for each population size and replication
/// draws a fresh finite sample and records its mean squared excess demand
/// (averaged uniformly over decision steps). Replications run in parallel;
/// every result lands in a preassigned slot, so output is schedule-independent.
ConvergenceReport convergence_study(const MarketScenario& scenario,
                                    std::vector<int> n_p_list, int replications,
                                    std::uint64_t seed,
                                    const SolverOptions& options = {});

}  // namespace mfe
