#include <cmath>

#include "mfe/equilibrium_solver.hpp"

// Direct numerical minimization of the one-step certainty-equivalent
// objectives.  This file intentionally avoids every closed-form expression
// used by the solver: positions (and consumption) come out of golden-section
// searches on the raw objectives, so agreement with the solver is a real
// cross-check of the first-order conditions.

namespace mfe {

namespace {

constexpr double kBracket = 50.0;

template <class F>
double golden_min(const F& f, double lo, double hi) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int i = 0; i < 200 && b - a > 1e-13; ++i) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

OracleResult brute_force_node_oracle(const OracleNode& node, const LatticeSpec& spec) {
    const double u = spec.u();
    const double d = spec.d();
    const double lp = std::log(node.p_up);
    const double lq = std::log(1.0 - node.p_up);

    // Position search: minimize the log of
    //   p * exp(-gamma*D*phi*u) * A_up + q * exp(-gamma*D*phi*d) * A_down.
    auto position_objective = [&](double phi) {
        const double scale = node.gamma * node.D * phi;
        return log_sum_exp2(lp - scale * u + node.log_a_up,
                            lq - scale * d + node.log_a_down);
    };
    OracleResult result;
    result.phi = golden_min(position_objective, -kBracket, kBracket);
    if (std::abs(result.phi) > kBracket - 1e-3)
        throw Error("oracle.bracket",
                    "position optimum sits at the search bracket edge");

    if (!node.recursive) return result;

    // Consumption search: minimize
    //   exp(-zeta*c)*dt + delta * exp(-psi*eta*beta*(x - c*dt) + (psi/gamma)*log Vtilde),
    // where eta = node.D and log Vtilde is the position objective at its optimum.
    const double log_vtilde = position_objective(result.phi);
    auto consumption_objective = [&](double c) {
        return std::exp(-node.zeta * c) * node.dt +
               node.delta * std::exp(-node.psi * node.D * node.beta * (node.x - c * node.dt) +
                                     (node.psi / node.gamma) * log_vtilde);
    };
    result.c = golden_min(consumption_objective, -kBracket, kBracket);
    if (std::abs(result.c) > kBracket - 1e-3)
        throw Error("oracle.bracket",
                    "consumption optimum sits at the search bracket edge");
    return result;
}

}  // namespace mfe
