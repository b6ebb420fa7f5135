#include "mfe/market_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfe {

namespace {

bool finite(double x) { return std::isfinite(x); }

void check_weight_sum(const std::vector<double>& weights, double tol,
                      const std::string& code, const std::string& what,
                      std::vector<Violation>& out) {
    double sum = pairwise_sum(weights.data(), weights.size());
    if (std::abs(sum - 1.0) > tol) {
        std::ostringstream msg;
        msg << what << " sum to " << sum << ", expected 1 within " << tol;
        out.push_back({code, msg.str()});
    }
}

}  // namespace

AgentTypeGrid AgentTypeGrid::uniform(double gamma_min, double gamma_max, int n_gamma,
                                     double psi_min, double psi_max, int n_psi,
                                     double a_zeta, double rho, double xi, double dt) {
    if (n_gamma < 0 || n_psi < 0)
        throw Error("grid.size", "grid subdivision counts must be non-negative");
    if (a_zeta <= 0.0)
        throw Error("grid.a_zeta", "a_zeta must be strictly positive");
    const int kg = n_gamma + 1;
    const int kp = n_psi + 1;
    const double delta = std::exp(-rho * dt);
    const double w = 1.0 / (static_cast<double>(kg) * kp);
    AgentTypeGrid grid;
    grid.types.reserve(static_cast<std::size_t>(kg) * kp);
    for (int i = 0; i < kg; ++i) {
        const double gamma =
            n_gamma == 0 ? gamma_min
                         : gamma_min + (gamma_max - gamma_min) * i / n_gamma;
        for (int j = 0; j < kp; ++j) {
            const double psi =
                n_psi == 0 ? psi_min : psi_min + (psi_max - psi_min) * j / n_psi;
            grid.types.push_back({gamma, psi / a_zeta, psi, delta, xi, w});
        }
    }
    return grid;
}

void AgentTypeGrid::validate(std::vector<Violation>& out, const std::string& prefix) const {
    if (types.empty()) {
        out.push_back({"grid.empty", prefix + ": agent type grid is empty"});
        return;
    }
    std::vector<double> weights;
    weights.reserve(types.size());
    for (std::size_t t = 0; t < types.size(); ++t) {
        const AgentType& a = types[t];
        if (!(a.gamma > 0.0) || !(a.zeta > 0.0) || !(a.psi > 0.0) || !(a.delta > 0.0) ||
            !finite(a.gamma) || !finite(a.zeta) || !finite(a.psi) || !finite(a.delta)) {
            std::ostringstream msg;
            msg << prefix << ": type " << t
                << " needs strictly positive finite gamma/zeta/psi/delta";
            out.push_back({"grid.positivity", msg.str()});
        }
        if (!finite(a.xi))
            out.push_back({"grid.xi", prefix + ": initial wealth must be finite"});
        if (!(a.weight > 0.0) || !finite(a.weight)) {
            std::ostringstream msg;
            msg << prefix << ": type " << t << " weight must be strictly positive";
            out.push_back({"grid.weight", msg.str()});
        }
        weights.push_back(a.weight);
    }
    check_weight_sum(weights, 1e-12, "grid.weight_sum", prefix + ": type weights", out);
}

std::uint64_t field_key(int n, int stock_idx, int y_idx, int z_idx, int type_idx) {
    auto part = [](int v, int bits, const char* what) -> std::uint64_t {
        if (v < 0 || v >= (1 << bits))
            throw Error("field.key_range",
                        std::string("custom-table index out of range: ") + what);
        return static_cast<std::uint64_t>(v);
    };
    return (part(n, 8, "step") << 40) | (part(stock_idx, 16, "stock") << 24) |
           (part(y_idx, 8, "y") << 16) | (part(z_idx, 8, "z") << 8) |
           part(type_idx, 8, "type");
}

namespace {

double custom_lookup(const std::unordered_map<std::uint64_t, double>& table,
                     int n, int stock_idx, int y_idx, int z_idx, int type_idx,
                     const char* what) {
    if (n < 0 || stock_idx < 0 || y_idx < 0)
        throw Error("field.custom_missing",
                    std::string(what) + ": custom table requires indexed evaluation");
    auto it = table.find(field_key(n, stock_idx, y_idx, std::max(z_idx, 0),
                                   std::max(type_idx, 0)));
    if (it == table.end()) {
        std::ostringstream msg;
        msg << what << ": no table entry at (n=" << n << ", stock=" << stock_idx
            << ", y=" << y_idx << ", z=" << z_idx << ", type=" << type_idx << ")";
        throw Error("field.custom_missing", msg.str());
    }
    return it->second;
}

}  // namespace

double eval_F(const PayoffField& field, double s, double y, double z,
              int n, int stock_idx, int y_idx, int z_idx) {
    switch (field.family) {
        case PayoffFamily::ZERO:
            return 0.0;
        case PayoffFamily::AFFINE_PRODUCT:
            return field.a + field.b * s * y * z;
        case PayoffFamily::AFFINE_PRODUCT_DT:
            return field.a + field.b * field.dt * s * y * z;
        case PayoffFamily::CUSTOM:
            return custom_lookup(field.table, n, stock_idx, y_idx, z_idx, 0, "payoff");
    }
    throw Error("field.family", "unknown payoff family");
}

double eval_L(const OrderFlowField& field, double s, double y,
              int n, int stock_idx, int y_idx) {
    (void)y;
    switch (field.family) {
        case FlowFamily::ZERO:
            return 0.0;
        case FlowFamily::RAMP_SUM: {
            double value = 0.0;
            for (const auto& [a, c] : field.up_ramps) value += a * std::max(s - c, 0.0);
            for (const auto& [b, c] : field.down_ramps) value += b * std::max(c - s, 0.0);
            return value;
        }
        case FlowFamily::CUSTOM:
            return custom_lookup(field.table, n, stock_idx, y_idx, 0, 0, "order flow");
    }
    throw Error("field.family", "unknown order-flow family");
}

double eval_bias(const BiasField& field, int n, double s, double z,
                 const LatticeSpec& spec, double z0,
                 int stock_idx, int y_idx, int z_idx, int type_idx) {
    switch (field.family) {
        case BiasFamily::NONE:
            return 1.0;
        case BiasFamily::CONTRARIAN: {
            const double trend = spec.s0 * std::pow(spec.beta(), n);
            return std::clamp((trend / s) * (z0 / z), field.lo, field.hi);
        }
        case BiasFamily::MOMENTUM: {
            const double trend = spec.s0 * std::pow(spec.beta(), n);
            return std::clamp((s / trend) * (z / z0), field.lo, field.hi);
        }
        case BiasFamily::CUSTOM:
            return custom_lookup(field.table, n, stock_idx, y_idx, z_idx, type_idx, "bias");
    }
    throw Error("field.family", "unknown bias family");
}

void validate_scenario(MarketScenario& scenario, std::vector<Violation>& out) {
    scenario.lattice.validate(out);
    const int N = scenario.lattice.N;
    const double dt = scenario.lattice.N > 0 && scenario.lattice.T > 0.0
                          ? scenario.lattice.dt()
                          : 0.0;

    scenario.y_chain.validate(out, "y_chain");
    if (scenario.y_chain.steps() < N)
        out.push_back({"chain.steps", "y_chain covers fewer steps than the lattice"});

    if (scenario.populations.empty())
        out.push_back({"population.empty", "scenario declares no populations"});

    std::vector<double> pop_weights;
    for (std::size_t p = 0; p < scenario.populations.size(); ++p) {
        PopulationSpec& pop = scenario.populations[p];
        const std::string prefix = "populations[" + std::to_string(p) + "]";
        if (!(pop.weight > 0.0) || pop.weight > 1.0 || !finite(pop.weight))
            out.push_back({"population.weight", prefix + ": weight must lie in (0,1]"});
        pop_weights.push_back(pop.weight);

        pop.grid.validate(out, prefix + ".grid");
        pop.z_chain.validate(out, prefix + ".z_chain");
        if (pop.z_chain.steps() < N)
            out.push_back({"chain.steps", prefix + ".z_chain covers fewer steps than the lattice"});

        if (!(pop.bias.lo > 0.0) || !finite(pop.bias.lo))
            out.push_back({"bias.lo", prefix + ": bias lower clamp must be strictly positive"});
        if (!(pop.bias.hi >= pop.bias.lo) || !finite(pop.bias.hi))
            out.push_back({"bias.hi", prefix + ": bias upper clamp must be finite and >= lo"});

        if (!pop.g_steps.empty() && static_cast<int>(pop.g_steps.size()) != N)
            out.push_back({"population.g_steps",
                           prefix + ": per-step endowment list must have one entry per step"});

        pop.F.dt = dt;
        pop.g.dt = dt;
        for (auto& field : pop.g_steps) field.dt = dt;

        if (!pop.joint_z0_type.empty()) {
            const std::size_t rows = pop.z_chain.state_count(0);
            const std::size_t cols = pop.grid.types.size();
            if (pop.joint_z0_type.size() != rows) {
                out.push_back({"population.joint_shape",
                               prefix + ": joint law row count must equal step-0 z states"});
            } else {
                bool shape_ok = true;
                for (const auto& row : pop.joint_z0_type)
                    if (row.size() != cols) shape_ok = false;
                if (!shape_ok) {
                    out.push_back({"population.joint_shape",
                                   prefix + ": joint law column count must equal type count"});
                } else {
                    for (std::size_t r = 0; r < rows; ++r) {
                        double row_sum = pairwise_sum(pop.joint_z0_type[r].data(), cols);
                        for (double v : pop.joint_z0_type[r])
                            if (v < 0.0 || !finite(v)) {
                                out.push_back({"population.joint_range",
                                               prefix + ": joint law entries must be >= 0"});
                                break;
                            }
                        if (std::abs(row_sum - pop.z_chain.initial_law[r]) > 1e-12)
                            out.push_back({"population.joint_rows",
                                           prefix + ": joint law row sums must match the z initial law"});
                    }
                    for (std::size_t t = 0; t < cols; ++t) {
                        double col_sum = 0.0;
                        for (std::size_t r = 0; r < rows; ++r) col_sum += pop.joint_z0_type[r][t];
                        if (std::abs(col_sum - pop.grid.types[t].weight) > 1e-12)
                            out.push_back({"population.joint_cols",
                                           prefix + ": joint law column sums must match type weights"});
                    }
                }
            }
        }
    }
    if (!scenario.populations.empty())
        check_weight_sum(pop_weights, 1e-12, "population.weight_sum",
                         "population weights", out);

    for (const auto& [a, c] : scenario.order_flow.up_ramps)
        if (!finite(a) || !finite(c))
            out.push_back({"flow.param", "order-flow ramp parameters must be finite"});
    for (const auto& [b, c] : scenario.order_flow.down_ramps)
        if (!finite(b) || !finite(c))
            out.push_back({"flow.param", "order-flow ramp parameters must be finite"});

    for (int step : scenario.analysis.report_steps)
        if (step < 0 || step > N)
            out.push_back({"analysis.report_step",
                           "report step " + std::to_string(step) + " outside [0, N]"});
    for (double q : scenario.analysis.percentiles)
        if (!(q >= 0.0 && q <= 1.0))
            out.push_back({"analysis.percentile", "percentiles must lie in [0, 1]"});
    if (scenario.analysis.path_cap < 0)
        out.push_back({"analysis.path_cap", "path capacity must be non-negative"});
    if (scenario.analysis.path_mode && N > scenario.analysis.path_cap)
        out.push_back({"path.capacity",
                       "path mode requires N <= path_cap (" + std::to_string(N) + " > " +
                           std::to_string(scenario.analysis.path_cap) + ")"});
}

void validate_scenario_or_throw(MarketScenario& scenario) {
    std::vector<Violation> violations;
    validate_scenario(scenario, violations);
    if (violations.empty()) return;
    std::ostringstream msg;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) msg << '\n';
        msg << violations[i].code << ": " << violations[i].message;
    }
    throw Error("validation", msg.str());
}

}  // namespace mfe
