#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mfe/common.hpp"
#include "mfe/lattice.hpp"

namespace mfe {

// One point of the agent-characteristics distribution: risk coefficients,
// initial wealth, and the probability mass this point carries within its
// population.  gamma prices terminal-wealth risk, zeta prices per-period
// spending, psi weights the continuation certainty equivalent, delta is the
// per-period time-preference factor.  The terminal-utility model only uses
// gamma; the recursive model uses all four.
struct AgentType {
    double gamma = 1.0;
    double zeta = 1.0;
    double psi = 1.0;
    double delta = 1.0;
    double xi = 0.0;
    double weight = 1.0;
};

// Finite grid of agent types with weights summing to one.
struct AgentTypeGrid {
    std::vector<AgentType> types;

    // Uniform product grid: gamma(k) = gamma_min + (gamma_max-gamma_min)*k/n_gamma
    // for k = 0..n_gamma (single point gamma_min when n_gamma = 0), same pattern
    // for psi; zeta is tied to psi by zeta = psi/a_zeta; delta = exp(-rho*dt) is
    // common across the grid, as is the initial wealth xi.
    static AgentTypeGrid uniform(double gamma_min, double gamma_max, int n_gamma,
                                 double psi_min, double psi_max, int n_psi,
                                 double a_zeta, double rho, double xi, double dt);

    void validate(std::vector<Violation>& out, const std::string& prefix) const;
};

// Packs a (step, stock index, y index, z index, type index) tuple into the
// lookup key used by table-driven CUSTOM fields.  Widths: 8/16/8/8/8 bits;
// the stock index gets 16 bits so small path-indexed instances fit too.
std::uint64_t field_key(int n, int stock_idx, int y_idx, int z_idx = 0, int type_idx = 0);

// Terminal liability / incremental endowment families.
//   ZERO               : 0 everywhere
//   AFFINE_PRODUCT     : a + b*s*y*z
//   AFFINE_PRODUCT_DT  : a + b*dt*s*y*z   (endowment form; dt bound at validation)
//   CUSTOM             : explicit table over (step, stock index, y index, z index)
enum class PayoffFamily { ZERO, AFFINE_PRODUCT, AFFINE_PRODUCT_DT, CUSTOM };

struct PayoffField {
    PayoffFamily family = PayoffFamily::ZERO;
    double a = 0.0;
    double b = 0.0;
    double dt = 0.0;  // stamped by validate_scenario; only AFFINE_PRODUCT_DT reads it
    std::unordered_map<std::uint64_t, double> table;
};

// External order flow families.
//   ZERO     : no external supply
//   RAMP_SUM : L(s) = sum_k a_k*max(s-c_k,0) + sum_j b_j*max(c_j-s,0)
//   CUSTOM   : explicit table over (step, stock index, y index)
enum class FlowFamily { ZERO, RAMP_SUM, CUSTOM };

struct OrderFlowField {
    FlowFamily family = FlowFamily::ZERO;
    std::vector<std::pair<double, double>> up_ramps;    // (a_k, c_k)
    std::vector<std::pair<double, double>> down_ramps;  // (b_j, c_j)
    std::unordered_map<std::uint64_t, double> table;
};

// Belief-bias families tilting the odds ratio of up vs down moves.
//   NONE       : bias identically 1 (rational expectations)
//   CONTRARIAN : clamp((s0*beta^n/s)*(z0/z), lo, hi)  — pessimistic when the
//                market runs above its funded trend, optimistic below it
//   MOMENTUM   : clamp((s/(s0*beta^n))*(z/z0), lo, hi)
//   CUSTOM     : explicit table over (step, stock index, y index, z index, type index)
enum class BiasFamily { NONE, CONTRARIAN, MOMENTUM, CUSTOM };

struct BiasField {
    BiasFamily family = BiasFamily::NONE;
    double lo = 1.0;
    double hi = 1.0;
    std::unordered_map<std::uint64_t, double> table;
};

enum class UtilityMode { EXPONENTIAL_TERMINAL, RECURSIVE };

// One population: a relative size, a type grid, liability/endowment fields,
// a private idiosyncratic chain, a belief bias, and the utility mode.
struct PopulationSpec {
    double weight = 1.0;
    UtilityMode mode = UtilityMode::RECURSIVE;
    AgentTypeGrid grid;
    PayoffField F;
    PayoffField g;                      // applied at every step 1..N
    std::vector<PayoffField> g_steps;   // optional per-step override, size N (entry n-1 = step n)
    FiniteMarkovChain z_chain;
    BiasField bias;
    // Optional joint law over (step-0 z state, type).  Row r = z state r,
    // column t = type t; row sums must match the z-chain initial law and
    // column sums the type weights.  Empty means the product law.
    std::vector<std::vector<double>> joint_z0_type;

    // Endowment field in force at step n (1-based).
    const PayoffField& g_at(int n) const {
        return g_steps.empty() ? g : g_steps.at(static_cast<std::size_t>(n - 1));
    }
};

enum class PercentileConvention { NODE_INDEX, PROBABILITY };
enum class ReturnConvention { LOG, SIMPLE };

// Reporting knobs: which steps get distribution/position dumps, which Y
// percentiles split the conditional laws, and the conventions used for
// percentile selection and excess-return annualization.
struct AnalysisConfig {
    std::vector<int> report_steps;
    std::vector<double> percentiles{0.25, 0.75};
    PercentileConvention percentile_convention = PercentileConvention::NODE_INDEX;
    ReturnConvention excess_return_convention = ReturnConvention::LOG;
    bool path_mode = false;
    int path_cap = 16;
    std::uint64_t seed = 0;
};

// A complete, self-contained market description.
struct MarketScenario {
    LatticeSpec lattice;
    FiniteMarkovChain y_chain;
    std::vector<PopulationSpec> populations;
    OrderFlowField order_flow;
    AnalysisConfig analysis;
    std::uint64_t content_hash = 0;  // hash of the canonical scenario document
};

// Evaluates a terminal liability or endowment field at a point.  The trailing
// indices are only consulted by CUSTOM tables; analytic families ignore them.
double eval_F(const PayoffField& field, double s, double y, double z,
              int n = -1, int stock_idx = -1, int y_idx = -1, int z_idx = -1);

// Evaluates the per-capita external order flow at a node.
double eval_L(const OrderFlowField& field, double s, double y,
              int n = -1, int stock_idx = -1, int y_idx = -1);

// Evaluates the belief bias at a point; NONE returns exactly 1.
double eval_bias(const BiasField& field, int n, double s, double z,
                 const LatticeSpec& spec, double z0,
                 int stock_idx = -1, int y_idx = -1, int z_idx = -1, int type_idx = -1);

// Checks every structural invariant of the scenario (lattice ordering, chain
// stochasticity, weight sums, clamp bounds, joint-law marginals, analysis
// ranges) and binds derived quantities (field dt stamps).  Appends one entry
// per violation; an empty result means the scenario is ready to solve.
void validate_scenario(MarketScenario& scenario, std::vector<Violation>& out);

// Convenience wrapper: throws Error("validation") listing all violations.
void validate_scenario_or_throw(MarketScenario& scenario);

}  // namespace mfe
