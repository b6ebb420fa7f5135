#pragma once

#include <cstdint>
#include <vector>

#include "mfe/common.hpp"
#include "mfe/lattice.hpp"
#include "mfe/market_model.hpp"

namespace mfe {

// Per-type marginal-utility-of-wealth schedule eta_0..eta_N with eta_N = 1 and
//   eta_{n-1} = psi*eta_n*beta / (zeta + dt*psi*eta_n*beta).
// In the terminal-utility model the same slot is filled by beta^(N-n), so a
// single solver core covers both discount structures.
using EtaSchedule = std::vector<double>;

EtaSchedule eta_schedule(const AgentType& type, const LatticeSpec& spec);

struct SolverOptions {
    int threads = 0;              // 0 = library default
    bool keep_diagnostics = false;  // retain log f and (recursive) log Vtilde tables
};

// Complete equilibrium description on the lattice.  Tables are indexed by
// step n, then a flattened (stock index, y) cell, then (z, type) within each
// population; the *_count vectors give the per-step extents.  In path mode the
// stock index enumerates move sequences (2^n of them) instead of node levels.
struct EquilibriumSolution {
    LatticeSpec lattice;
    bool path_mode = false;
    bool biased = false;
    bool multi_population = false;

    std::vector<int> stock_counts;               // per step n = 0..N
    std::vector<int> y_counts;                   // per step n = 0..N
    std::vector<std::vector<int>> z_counts;      // [pop][n]
    std::vector<int> type_counts;                // [pop]
    std::vector<UtilityMode> modes;              // [pop]

    // p[n][k*y_counts[n] + y] for n = 0..N-1: equilibrium up-probability.
    std::vector<std::vector<double>> p;
    // phi[n][pop][((k*Y + y)*Z + z)*T + t]: optimal position of each agent state.
    std::vector<std::vector<std::vector<double>>> phi;
    // eta[pop][type]: discount schedule (eta in recursive mode, beta powers in
    // terminal mode), length N+1.
    std::vector<std::vector<EtaSchedule>> eta;
    // Cross-sectional law over (z at n, type), already weighted by type mass:
    // law[pop][n][z*T + t]; sums to 1 over (z, t) for each (pop, n).
    std::vector<std::vector<std::vector<double>>> agent_law;

    // Diagnostics, retained when SolverOptions::keep_diagnostics is set:
    // log f^pi per agent state, shaped like phi; in recursive populations
    // log Vtilde_n (the pre-transform continuation value at the decision step),
    // needed by consumption_policy.
    std::vector<std::vector<std::vector<double>>> log_f;
    std::vector<std::vector<std::vector<double>>> log_vtilde;

    double max_clearing_residual = 0.0;

    int steps() const { return static_cast<int>(p.size()); }
    std::size_t cell_index(int n, int k, int y) const {
        return static_cast<std::size_t>(k) * y_counts[n] + y;
    }
    std::size_t agent_index(int n, int k, int y, int z, int t, int pop) const {
        return (cell_index(n, k, y) * z_counts[pop][n] + z) * type_counts[pop] + t;
    }
};

struct ClearingResult {
    double p;
    double q;  // 1 - p computed in the same stable form
    double G;  // log-odds tilt relative to the risk-neutral split
};

// Solves the market-clearing condition at one node given discount-inclusive
// cross-sectional aggregates
//   agg_logf = sum_p w_p E_p[ log f^pi / (gamma*D_n) ],
//   agg_inv  = sum_p w_p E_p[ 1 / (gamma*D_n) ],
// where D_n = beta^(N-n) for terminal-utility populations and eta_n for
// recursive ones.  The order-flow term enters as (u-d)*L against these
// aggregates (the mode-dependent discount on L is already carried inside
// them).  G = (agg_logf - (u-d)*L)/agg_inv and p = (-d)/(u*exp(G) - d),
// which lies in (0,1) automatically.  |G| > 700 would overflow exp and is
// rejected as infeasible.
ClearingResult equilibrium_prob(double agg_logf, double agg_inv, double L,
                                const LatticeSpec& spec);

// Optimal stock position of one agent state given the equilibrium p:
//   phi* = [ log(-p*u/((1-p)*d)) + log f^pi ] / (gamma*D_n*(u-d)).
double optimal_position(double p, double q, double log_f_pi, double gamma, double D_n,
                        const LatticeSpec& spec);

// Backward-induction solver over node-indexed states (F, g, L, bias may
// depend on the current price, Y, Z, and type, but not on the price path).
// Throws Error("numeric.infeasible") / Error("numeric.overflow") naming the
// offending node, and Error("solver.clearing") if the analytic clearing
// identity fails beyond 1e-10 (internal-consistency trap).
EquilibriumSolution backward_solve(const MarketScenario& scenario,
                                   const SolverOptions& options = {});

// Identical recursion with path-indexed stock states; requires N <= path_cap.
EquilibriumSolution path_dependent_solve(const MarketScenario& scenario,
                                         const SolverOptions& options = {});

// Serial reference implementation of backward_solve: straightforward loops,
// plain summation, no shared workspaces.  Kept as an independent check and as
// the baseline for the benchmark target.
EquilibriumSolution reference_backward_solve(const MarketScenario& scenario);

// Optimal consumption at decision step n (0..N-1) for wealth x:
//   c* = (psi*eta_{n+1}*beta / (zeta + dt*psi*eta_{n+1}*beta)) * x
//        - (1/(zeta + dt*psi*eta_{n+1}*beta)) * log[(delta*psi*eta_{n+1}*beta/zeta)
//                                                   * exp((psi/gamma)*log Vtilde_n)].
// The slope in x equals eta_n exactly.  Requires a recursive population and a
// solution built with keep_diagnostics.
double consumption_policy(double x, int n, int stock_idx, int y_idx, int z_idx,
                          int pop, int type, const MarketScenario& scenario,
                          const EquilibriumSolution& solution);

// One-node subproblem handed to the brute-force optimizer.  p_up is the
// probability the agent plugs into its objective (the subjective one under a
// bias).  D multiplies phi in the exponent (beta^(N-n) or eta_n).  The
// recursive block adds the consumption search.
struct OracleNode {
    double p_up = 0.5;
    double log_a_up = 0.0;
    double log_a_down = 0.0;
    double gamma = 1.0;
    double D = 1.0;
    bool recursive = false;
    double x = 0.0;
    double zeta = 1.0;
    double psi = 1.0;
    double delta = 1.0;
    double beta = 1.0;
    double dt = 0.0;
};

struct OracleResult {
    double phi = 0.0;
    double c = 0.0;  // meaningful only for recursive nodes
};

// Minimizes the one-step certainty-equivalent objective directly by
// golden-section search on [-50, 50] (phi, then c in recursive mode), without
// using any closed-form expression.  Throws Error("oracle.bracket") when the
// optimum sits at the bracket edge.
OracleResult brute_force_node_oracle(const OracleNode& node, const LatticeSpec& spec);

}  // namespace mfe
