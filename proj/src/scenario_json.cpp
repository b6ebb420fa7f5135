#include "mfe/scenario_json.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mfe {

namespace {

using nlohmann::json;

double num(const json& j, const char* key, double fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<double>();
}

int integer(const json& j, const char* key, int fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<int>();
}

// Accepts either the binomial shorthand {x0, sigma_x, p_x} or explicit
// {states, transitions, initial_law} matrices. The shorthand defaults to an
// additive random walk for the common factor Y and a multiplicative one for
// the idiosyncratic factor Z; a "family" key overrides either default.
FiniteMarkovChain parse_chain(const json& j, int steps, double dt,
                              const char* x0_key, const char* sigma_key,
                              const char* p_key, bool multiplicative) {
    if (j.contains("states")) {
        auto states = j.at("states").get<std::vector<std::vector<double>>>();
        auto transitions =
            j.at("transitions").get<std::vector<std::vector<std::vector<double>>>>();
        std::vector<double> initial;
        if (j.contains("initial_law"))
            initial = j.at("initial_law").get<std::vector<double>>();
        return FiniteMarkovChain::from_dense(states, transitions, initial);
    }
    if (j.contains("family")) {
        const std::string family = j.at("family").get<std::string>();
        if (family == "additive")
            multiplicative = false;
        else if (family == "multiplicative")
            multiplicative = true;
        else
            throw Error("scenario.family", "unknown chain family: " + family);
    }
    const double x0 = num(j, x0_key, 1.0);
    const double sigma = num(j, sigma_key, 0.0);
    const double p = num(j, p_key, 0.5);
    return multiplicative
               ? FiniteMarkovChain::multiplicative_binomial(x0, sigma, p, dt, steps)
               : FiniteMarkovChain::additive_binomial(x0, sigma, p, dt, steps);
}

std::unordered_map<std::uint64_t, double> parse_table(const json& entries,
                                                      int index_count) {
    std::unordered_map<std::uint64_t, double> table;
    for (const auto& row : entries) {
        if (!row.is_array() || static_cast<int>(row.size()) != index_count + 1)
            throw Error("scenario.parse",
                        "custom table rows need " + std::to_string(index_count) +
                            " indices followed by a value");
        int idx[5] = {0, 0, 0, 0, 0};
        for (int i = 0; i < index_count; ++i) idx[i] = row[i].get<int>();
        table[field_key(idx[0], idx[1], idx[2], idx[3], idx[4])] =
            row[index_count].get<double>();
    }
    return table;
}

PayoffField parse_payoff(const json& j) {
    PayoffField field;
    if (j.is_null()) return field;
    const std::string family = j.value("family", "zero");
    if (family == "zero") {
        field.family = PayoffFamily::ZERO;
    } else if (family == "affine_product") {
        field.family = PayoffFamily::AFFINE_PRODUCT;
        field.a = num(j, "a", 0.0);
        field.b = num(j, "b", 0.0);
    } else if (family == "affine_product_dt") {
        field.family = PayoffFamily::AFFINE_PRODUCT_DT;
        field.a = num(j, "a", 0.0);
        field.b = num(j, "b", 0.0);
    } else if (family == "custom") {
        field.family = PayoffFamily::CUSTOM;
        field.table = parse_table(j.at("entries"), 4);
    } else {
        throw Error("scenario.family", "unknown payoff family: " + family);
    }
    return field;
}

OrderFlowField parse_flow(const json& j) {
    OrderFlowField field;
    if (j.is_null()) return field;
    const std::string family = j.value("family", "zero");
    if (family == "zero") {
        field.family = FlowFamily::ZERO;
    } else if (family == "ramp_sum") {
        field.family = FlowFamily::RAMP_SUM;
        if (j.contains("up_ramps"))
            field.up_ramps = j.at("up_ramps").get<std::vector<std::pair<double, double>>>();
        if (j.contains("down_ramps"))
            field.down_ramps =
                j.at("down_ramps").get<std::vector<std::pair<double, double>>>();
    } else if (family == "custom") {
        field.family = FlowFamily::CUSTOM;
        field.table = parse_table(j.at("entries"), 3);
    } else {
        throw Error("scenario.family", "unknown order-flow family: " + family);
    }
    return field;
}

BiasField parse_bias(const json& j) {
    BiasField field;
    if (j.is_null()) return field;
    const std::string family = j.value("family", "none");
    if (family == "none") {
        field.family = BiasFamily::NONE;
    } else if (family == "contrarian") {
        field.family = BiasFamily::CONTRARIAN;
    } else if (family == "momentum") {
        field.family = BiasFamily::MOMENTUM;
    } else if (family == "custom") {
        field.family = BiasFamily::CUSTOM;
        field.table = parse_table(j.at("entries"), 5);
    } else {
        throw Error("scenario.family", "unknown bias family: " + family);
    }
    field.lo = num(j, "lo", 1.0);
    field.hi = num(j, "hi", 1.0);
    if (field.family == BiasFamily::NONE) {
        field.lo = 1.0;
        field.hi = 1.0;
    }
    return field;
}

PopulationSpec parse_population(const json& j, int N, double dt) {
    PopulationSpec pop;
    pop.weight = num(j, "weight", 1.0);
    const std::string mode = j.value("mode", "recursive");
    if (mode == "recursive")
        pop.mode = UtilityMode::RECURSIVE;
    else if (mode == "exponential" || mode == "exponential_terminal")
        pop.mode = UtilityMode::EXPONENTIAL_TERMINAL;
    else
        throw Error("scenario.family", "unknown utility mode: " + mode);

    const json& grid = j.at("agent_grid");
    const double gamma_min = num(grid, "gamma_min", 1.0);
    pop.grid = AgentTypeGrid::uniform(
        gamma_min, num(grid, "gamma_max", gamma_min), integer(grid, "n_gamma", 0),
        num(grid, "psi_min", 1.0), num(grid, "psi_max", num(grid, "psi_min", 1.0)),
        integer(grid, "n_psi", 0), num(grid, "a_zeta", 1.0), num(grid, "rho", 0.0),
        num(grid, "xi", 0.0), dt);

    pop.z_chain = parse_chain(j.contains("z_chain") ? j.at("z_chain") : json::object(),
                              N, dt, "z0", "sigma_z", "p_z", true);
    pop.F = parse_payoff(j.contains("F") ? j.at("F") : json());
    pop.g = parse_payoff(j.contains("g") ? j.at("g") : json());
    if (j.contains("g_steps"))
        for (const auto& gj : j.at("g_steps")) pop.g_steps.push_back(parse_payoff(gj));
    pop.bias = parse_bias(j.contains("bias") ? j.at("bias") : json());
    if (j.contains("joint_z0_type"))
        pop.joint_z0_type =
            j.at("joint_z0_type").get<std::vector<std::vector<double>>>();
    return pop;
}

AnalysisConfig parse_analysis(const json& j, const LatticeSpec& lattice) {
    AnalysisConfig cfg;
    (void)lattice;
    if (j.is_null()) return cfg;
    if (j.contains("report_steps"))
        cfg.report_steps = j.at("report_steps").get<std::vector<int>>();
    if (j.contains("percentiles"))
        cfg.percentiles = j.at("percentiles").get<std::vector<double>>();
    const std::string pc = j.value("percentile_convention", "node-index");
    if (pc == "node-index")
        cfg.percentile_convention = PercentileConvention::NODE_INDEX;
    else if (pc == "probability")
        cfg.percentile_convention = PercentileConvention::PROBABILITY;
    else
        throw Error("scenario.family", "unknown percentile convention: " + pc);
    const std::string rc = j.value("excess_return_convention", "log");
    if (rc == "log")
        cfg.excess_return_convention = ReturnConvention::LOG;
    else if (rc == "simple")
        cfg.excess_return_convention = ReturnConvention::SIMPLE;
    else
        throw Error("scenario.family", "unknown excess-return convention: " + rc);
    cfg.path_mode = j.value("path_mode", false);
    cfg.path_cap = integer(j, "path_cap", 16);
    cfg.seed = j.value("seed", std::uint64_t{0});
    return cfg;
}

MarketScenario parse_document(const json& doc) {
    MarketScenario scenario;
    const json& lat = doc.at("lattice");
    const int N = lat.at("N").get<int>();
    const double T = lat.at("T").get<double>();
    const double r = num(lat, "r", 0.0);
    const double s0 = num(lat, "s0", 1.0);
    if (lat.contains("sigma"))
        scenario.lattice = LatticeSpec::from_vol(N, T, r, s0, lat.at("sigma").get<double>());
    else
        scenario.lattice = LatticeSpec::from_factors(N, T, r, s0,
                                                     lat.at("u_tilde").get<double>(),
                                                     lat.at("d_tilde").get<double>());
    const double dt = N > 0 && T > 0.0 ? scenario.lattice.dt() : 0.0;

    scenario.y_chain =
        parse_chain(doc.contains("y_chain") ? doc.at("y_chain") : json::object(), N, dt,
                    "y0", "sigma_y", "p_y", false);

    if (!doc.contains("populations") || !doc.at("populations").is_array() ||
        doc.at("populations").empty())
        throw Error("scenario.parse", "scenario needs a non-empty populations list");
    for (const auto& pj : doc.at("populations"))
        scenario.populations.push_back(parse_population(pj, N, dt));

    scenario.order_flow = parse_flow(doc.contains("order_flow") ? doc.at("order_flow") : json());
    scenario.analysis =
        parse_analysis(doc.contains("analysis") ? doc.at("analysis") : json(),
                       scenario.lattice);
    return scenario;
}

}  // namespace

MarketScenario parse_scenario_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error("scenario.parse", e.what());
    }
    MarketScenario scenario;
    try {
        scenario = parse_document(doc);
    } catch (const json::exception& e) {
        throw Error("scenario.parse", e.what());
    }
    const std::string canonical = doc.dump();
    scenario.content_hash = fnv1a64(canonical.data(), canonical.size());
    validate_scenario_or_throw(scenario);
    return scenario;
}

MarketScenario load_scenario_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("scenario.io", "cannot read scenario file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str());
}

}  // namespace mfe
