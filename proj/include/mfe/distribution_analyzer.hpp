#pragma once

#include <cstdint>
#include <vector>

#include "mfe/equilibrium_solver.hpp"
#include "mfe/market_model.hpp"

namespace mfe {

// Joint law of (stock state, Y) at every step under the equilibrium
// transition probabilities.  Stock states are node levels, or paths when the
// solution was produced in path mode.
struct ForwardLaw {
    bool path_mode = false;
    std::vector<int> stock_counts;  // per step
    std::vector<int> y_counts;
    std::vector<std::vector<double>> joint;  // [n][k*y_counts[n] + y]

    std::size_t index(int n, int k, int y) const {
        return static_cast<std::size_t>(k) * y_counts[n] + y;
    }
};

// Forward Kolmogorov propagation of the delta mass at (s0, Y_0):
//   mass(n+1, k', y') += mass(n, k, y) * [p 1{up} + (1-p) 1{down}] * P_Y(y->y').
// Each step is renormalized; cumulative drift beyond 1e-8 aborts.
ForwardLaw forward_joint_law(const EquilibriumSolution& solution,
                             const FiniteMarkovChain& y_chain);

// Row sums over y; normalized distribution over the stock states of step n.
std::vector<double> marginal_price_distribution(const ForwardLaw& law, int n);

// Conditional distribution over stock states given Y_n = y_node; throws
// Error("analyzer.conditioning") when the y marginal carries no mass there.
std::vector<double> conditional_price_distribution(const ForwardLaw& law, int n,
                                                   int y_node);

// Y state marking percentile q at step n.  NODE_INDEX picks the state at
// index floor(q * (count-1)) among the ordered states; PROBABILITY inverts
// the marginal CDF (smallest index with CDF >= q).
int percentile_y_node(const FiniteMarkovChain& y_chain, int n, double q,
                      PercentileConvention convention);

// Annualized excess return of an expected price over horizon t:
//   LOG:    (1/t) * log(E[S_t]/s0) - r
//   SIMPLE: (E[S_t]/s0)^(1/t) - 1 - (exp(r) - 1)
double annualized_excess_return(double expected_price, double s0, double t, double r,
                                ReturnConvention convention);

// Per-capita RMS stock position at step n:
//   sqrt( sum_{k,y} mass(k,y) * sum_p w_p sum_{z,t} law_p(z,t) * phi*(...)^2 ),
// optionally conditioning the (k,y) mass on Y_n = y_node.
double trading_volume(const MarketScenario& scenario,
                      const EquilibriumSolution& solution, const ForwardLaw& law,
                      int n, int y_node = -1);

// Everything the report files need, computed once from a solved scenario.
struct ReportBundle {
    std::uint64_t scenario_hash = 0;
    ReturnConvention return_convention = ReturnConvention::LOG;
    PercentileConvention percentile_convention = PercentileConvention::NODE_INDEX;
    std::vector<double> percentiles;  // sorted copy of the analysis percentiles

    std::vector<double> times;   // t_n for n = 0..N
    std::vector<double> mean_p;  // E[S_n] under the equilibrium law
    std::vector<double> mean_q;  // E[S_n] under the risk-neutral law (= s0*beta^n)
    std::vector<std::vector<double>> mean_cond;      // [percentile][n]
    std::vector<std::vector<int>> percentile_nodes;  // [percentile][n]

    std::vector<double> er_p;                    // [n], 0 at n = 0
    std::vector<double> er_q;
    std::vector<std::vector<double>> er_cond;    // [percentile][n]

    std::vector<double> volume;                  // [n] for n = 0..N-1
    std::vector<std::vector<double>> volume_cond;

    struct StepDistributions {
        int n = 0;
        std::vector<double> prices;            // node prices, ascending
        std::vector<double> p;                 // equilibrium marginal
        std::vector<double> q;                 // risk-neutral marginal
        std::vector<std::vector<double>> cond; // [percentile]
    };
    std::vector<StepDistributions> step_dists;  // at the report steps
};

// Builds the full bundle.  Steps listed in analysis.report_steps get
// distribution tables; an empty list defaults to whole-year horizons plus N.
// Path-mode laws are aggregated back to price nodes for all reported tables.
ReportBundle build_report(const MarketScenario& scenario,
                          const EquilibriumSolution& solution,
                          const ForwardLaw& law);

// One simulated market path with the cross-section of sampled agents on it.
struct AgentPath {
    int population = 0;
    int type = 0;
    std::vector<int> z_idx;           // per step 0..N
    std::vector<double> wealth;       // per step 0..N
    std::vector<double> position;     // per step 0..N-1
    std::vector<double> consumption;  // per step 0..N-1; empty for terminal-utility agents
};

struct SimulatedPaths {
    std::vector<std::vector<int>> stock_idx;  // [path][step 0..N]
    std::vector<std::vector<int>> y_idx;      // [path][step 0..N]
    std::vector<std::vector<AgentPath>> agents;  // [path][agent]
};

// Samples n_paths market trajectories from the equilibrium law and n_agents
// agents per path (types and Z paths drawn per population proportions), then
// rolls wealth forward:
//   X_{n+1} = beta*(X_n - c_n*dt) + phi_n*R_{n+1} + g_{n+1},  R in {u, d}.
// Streams are derived from the seed by a fixed counter scheme (market path j
// uses stream (seed, j, 0); agent i on it uses (seed, j, i+1)), so results
// are reproducible under any scheduling.  Consumption for recursive agents
// requires a solution built with keep_diagnostics.
SimulatedPaths simulate_agent_paths(const MarketScenario& scenario,
                                    const EquilibriumSolution& solution,
                                    int n_agents, int n_paths, std::uint64_t seed);

}  // namespace mfe
