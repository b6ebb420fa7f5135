#include "mfe/distribution_analyzer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <sstream>

namespace mfe {

namespace {

int stock_child(bool path_mode, int k, int up) {
    return path_mode ? (k << 1) | up : k + up;
}

double stock_price(const LatticeSpec& lat, bool path_mode, int n, int k) {
    return lat.node_price(
        n, path_mode ? std::popcount(static_cast<unsigned>(k)) : k);
}

// Draws an index from a discrete law by CDF inversion; the final index absorbs
// any rounding slack so the draw always lands inside the support.
template <class Prob>
std::size_t sample_index(SplitMix64& rng, const std::vector<Prob>& items) {
    const double x = rng.next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < items.size(); ++i) {
        if constexpr (std::is_same_v<Prob, double>)
            acc += items[i];
        else
            acc += items[i].prob;
        if (x < acc) return i;
    }
    return items.empty() ? 0 : items.size() - 1;
}

}  // namespace

ForwardLaw forward_joint_law(const EquilibriumSolution& solution,
                             const FiniteMarkovChain& y_chain) {
    const int N = solution.lattice.N;
    ForwardLaw law;
    law.path_mode = solution.path_mode;
    law.stock_counts = solution.stock_counts;
    law.y_counts = solution.y_counts;
    law.joint.resize(static_cast<std::size_t>(N) + 1);

    law.joint[0].assign(
        static_cast<std::size_t>(law.stock_counts[0]) * law.y_counts[0], 0.0);
    for (int y = 0; y < law.y_counts[0]; ++y)
        law.joint[0][y] = y_chain.initial_law[y];

    for (int n = 0; n < N; ++n) {
        const int Ym = law.y_counts[n];
        const int Yn = law.y_counts[n + 1];
        std::vector<double>& next = law.joint[n + 1];
        next.assign(static_cast<std::size_t>(law.stock_counts[n + 1]) * Yn, 0.0);
        for (int k = 0; k < law.stock_counts[n]; ++k) {
            for (int y = 0; y < Ym; ++y) {
                const double mass = law.joint[n][law.index(n, k, y)];
                if (mass == 0.0) continue;
                const double p = solution.p[n][solution.cell_index(n, k, y)];
                const int ku = stock_child(law.path_mode, k, 1);
                const int kd = stock_child(law.path_mode, k, 0);
                for (const auto& ye : y_chain.rows[n][y]) {
                    next[static_cast<std::size_t>(ku) * Yn + ye.to] +=
                        mass * p * ye.prob;
                    next[static_cast<std::size_t>(kd) * Yn + ye.to] +=
                        mass * (1.0 - p) * ye.prob;
                }
            }
        }
        const double sum = pairwise_sum(next.data(), next.size());
        if (std::abs(sum - 1.0) > 1e-8) {
            std::ostringstream msg;
            msg << "forward law mass drifted to " << sum << " at step " << n + 1;
            throw Error("numeric.mass_drift", msg.str());
        }
        for (double& v : next) v /= sum;
    }
    return law;
}

std::vector<double> marginal_price_distribution(const ForwardLaw& law, int n) {
    const int K = law.stock_counts[n];
    const int Y = law.y_counts[n];
    std::vector<double> dist(K, 0.0);
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        for (int y = 0; y < Y; ++y) dist[k] += law.joint[n][law.index(n, k, y)];
        total += dist[k];
    }
    for (double& v : dist) v /= total;
    return dist;
}

std::vector<double> conditional_price_distribution(const ForwardLaw& law, int n,
                                                   int y_node) {
    const int K = law.stock_counts[n];
    std::vector<double> dist(K, 0.0);
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        dist[k] = law.joint[n][law.index(n, k, y_node)];
        total += dist[k];
    }
    if (!(total > 0.0))
        throw Error("analyzer.conditioning",
                    "no probability mass at y state " + std::to_string(y_node) +
                        " of step " + std::to_string(n));
    for (double& v : dist) v /= total;
    return dist;
}

int percentile_y_node(const FiniteMarkovChain& y_chain, int n, double q,
                      PercentileConvention convention) {
    const int count = static_cast<int>(y_chain.state_count(n));
    if (convention == PercentileConvention::NODE_INDEX)
        return std::min(count - 1, static_cast<int>(std::floor(q * (count - 1))));
    const std::vector<double> marg = y_chain.marginal(n);
    double acc = 0.0;
    for (int i = 0; i < count; ++i) {
        acc += marg[i];
        if (acc >= q) return i;
    }
    return count - 1;
}

double annualized_excess_return(double expected_price, double s0, double t, double r,
                                ReturnConvention convention) {
    if (!(t > 0.0))
        throw Error("analyzer.horizon", "excess return needs a positive horizon");
    if (convention == ReturnConvention::LOG)
        return std::log(expected_price / s0) / t - r;
    return std::pow(expected_price / s0, 1.0 / t) - 1.0 - std::expm1(r);
}

double trading_volume(const MarketScenario& scenario,
                      const EquilibriumSolution& solution, const ForwardLaw& law,
                      int n, int y_node) {
    if (n < 0 || n >= solution.steps())
        throw Error("analyzer.horizon",
                    "trading volume is defined for decision steps 0..N-1");
    const int K = law.stock_counts[n];
    const int Y = law.y_counts[n];

    double y_mass = 1.0;
    if (y_node >= 0) {
        y_mass = 0.0;
        for (int k = 0; k < K; ++k) y_mass += law.joint[n][law.index(n, k, y_node)];
        if (!(y_mass > 0.0))
            throw Error("analyzer.conditioning",
                        "no probability mass at y state " + std::to_string(y_node) +
                            " of step " + std::to_string(n));
    }

    double vsq = 0.0;
    for (int k = 0; k < K; ++k) {
        for (int y = 0; y < Y; ++y) {
            if (y_node >= 0 && y != y_node) continue;
            const double mass = law.joint[n][law.index(n, k, y)] / y_mass;
            if (mass == 0.0) continue;
            double cross = 0.0;
            for (std::size_t p = 0; p < scenario.populations.size(); ++p) {
                const auto& claw = solution.agent_law[p][n];
                const std::size_t base =
                    solution.cell_index(n, k, y) * claw.size();
                double acc = 0.0;
                for (std::size_t zt = 0; zt < claw.size(); ++zt) {
                    const double phi = solution.phi[n][p][base + zt];
                    acc += claw[zt] * phi * phi;
                }
                cross += scenario.populations[p].weight * acc;
            }
            vsq += mass * cross;
        }
    }
    return std::sqrt(vsq);
}

namespace {

// Aggregates a (possibly path-indexed) joint law to node-level stock masses.
std::vector<double> node_masses(const ForwardLaw& law, int n, int y_node) {
    const int K = law.stock_counts[n];
    const int Y = law.y_counts[n];
    std::vector<double> dist(law.path_mode ? n + 1 : K, 0.0);
    for (int k = 0; k < K; ++k) {
        const int node = law.path_mode ? std::popcount(static_cast<unsigned>(k)) : k;
        for (int y = 0; y < Y; ++y) {
            if (y_node >= 0 && y != y_node) continue;
            dist[node] += law.joint[n][law.index(n, k, y)];
        }
    }
    return dist;
}

std::vector<int> default_report_steps(const LatticeSpec& lat) {
    std::vector<int> steps;
    const double dt = lat.N > 0 ? lat.dt() : 0.0;
    for (int n = 1; n <= lat.N; ++n)
        if (dt > 0.0 && std::abs(n * dt - std::round(n * dt)) < 1e-9 &&
            std::round(n * dt) >= 1.0)
            steps.push_back(n);
    if (steps.empty() || steps.back() != lat.N) steps.push_back(lat.N);
    return steps;
}

}  // namespace

ReportBundle build_report(const MarketScenario& scenario,
                          const EquilibriumSolution& solution,
                          const ForwardLaw& law) {
    const LatticeSpec& lat = solution.lattice;
    const int N = lat.N;
    const double dt = N > 0 ? lat.dt() : 0.0;

    ReportBundle rep;
    rep.scenario_hash = scenario.content_hash;
    rep.return_convention = scenario.analysis.excess_return_convention;
    rep.percentile_convention = scenario.analysis.percentile_convention;
    rep.percentiles = scenario.analysis.percentiles;
    std::sort(rep.percentiles.begin(), rep.percentiles.end());
    const std::size_t Q = rep.percentiles.size();

    rep.times.resize(N + 1);
    rep.mean_p.resize(N + 1);
    rep.mean_q.resize(N + 1);
    rep.mean_cond.assign(Q, std::vector<double>(N + 1, 0.0));
    rep.percentile_nodes.assign(Q, std::vector<int>(N + 1, 0));
    rep.er_p.assign(N + 1, 0.0);
    rep.er_q.assign(N + 1, 0.0);
    rep.er_cond.assign(Q, std::vector<double>(N + 1, 0.0));

    for (int n = 0; n <= N; ++n) {
        rep.times[n] = n * dt;
        // Equilibrium mean price.
        double mean = 0.0;
        for (int k = 0; k < law.stock_counts[n]; ++k) {
            double row = 0.0;
            for (int y = 0; y < law.y_counts[n]; ++y)
                row += law.joint[n][law.index(n, k, y)];
            mean += row * stock_price(lat, law.path_mode, n, k);
        }
        rep.mean_p[n] = mean;
        // Discounted-price martingale: E^Q[S_n] = s0 * beta^n exactly.
        rep.mean_q[n] = lat.s0 * std::pow(lat.beta(), n);

        for (std::size_t j = 0; j < Q; ++j) {
            const int ynode = percentile_y_node(scenario.y_chain, n, rep.percentiles[j],
                                                rep.percentile_convention);
            rep.percentile_nodes[j][n] = ynode;
            double y_mass = 0.0;
            double cmean = 0.0;
            for (int k = 0; k < law.stock_counts[n]; ++k) {
                const double m = law.joint[n][law.index(n, k, ynode)];
                y_mass += m;
                cmean += m * stock_price(lat, law.path_mode, n, k);
            }
            rep.mean_cond[j][n] = y_mass > 0.0 ? cmean / y_mass : 0.0;
        }

        if (n >= 1) {
            rep.er_p[n] = annualized_excess_return(rep.mean_p[n], lat.s0, rep.times[n],
                                                   lat.r, rep.return_convention);
            rep.er_q[n] = annualized_excess_return(rep.mean_q[n], lat.s0, rep.times[n],
                                                   lat.r, rep.return_convention);
            for (std::size_t j = 0; j < Q; ++j)
                rep.er_cond[j][n] =
                    rep.mean_cond[j][n] > 0.0
                        ? annualized_excess_return(rep.mean_cond[j][n], lat.s0,
                                                   rep.times[n], lat.r,
                                                   rep.return_convention)
                        : 0.0;
        }
    }

    rep.volume.assign(N, 0.0);
    rep.volume_cond.assign(Q, std::vector<double>(N, 0.0));
    for (int n = 0; n < N; ++n) {
        rep.volume[n] = trading_volume(scenario, solution, law, n);
        for (std::size_t j = 0; j < Q; ++j)
            rep.volume_cond[j][n] = trading_volume(scenario, solution, law, n,
                                                   rep.percentile_nodes[j][n]);
    }

    // Distribution tables at the report steps (node-level prices in all modes).
    std::vector<int> steps = scenario.analysis.report_steps;
    if (steps.empty()) steps = default_report_steps(lat);
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());

    for (int n : steps) {
        ReportBundle::StepDistributions sd;
        sd.n = n;
        const int nodes = n + 1;
        sd.prices.resize(nodes);
        for (int k = 0; k < nodes; ++k) sd.prices[k] = lat.node_price(n, k);

        sd.p = node_masses(law, n, -1);
        {
            double total = 0.0;
            for (double v : sd.p) total += v;
            for (double& v : sd.p) v /= total;
        }

        // Risk-neutral node law by forward recursion with constant p_q.
        const double pq = lat.risk_neutral_prob();
        std::vector<double> qlaw{1.0};
        for (int step = 0; step < n; ++step) {
            std::vector<double> nxt(step + 2, 0.0);
            for (int k = 0; k <= step; ++k) {
                nxt[k + 1] += qlaw[k] * pq;
                nxt[k] += qlaw[k] * (1.0 - pq);
            }
            qlaw = std::move(nxt);
        }
        sd.q = std::move(qlaw);

        sd.cond.resize(Q);
        for (std::size_t j = 0; j < Q; ++j) {
            std::vector<double> cm = node_masses(law, n, rep.percentile_nodes[j][n]);
            double total = 0.0;
            for (double v : cm) total += v;
            if (total > 0.0)
                for (double& v : cm) v /= total;
            sd.cond[j] = std::move(cm);
        }
        rep.step_dists.push_back(std::move(sd));
    }
    return rep;
}

SimulatedPaths simulate_agent_paths(const MarketScenario& scenario,
                                    const EquilibriumSolution& solution,
                                    int n_agents, int n_paths, std::uint64_t seed) {
    const LatticeSpec& lat = solution.lattice;
    const int N = lat.N;
    const double u = lat.u();
    const double d = lat.d();
    const double beta = lat.beta();
    const double dt = N > 0 ? lat.dt() : 0.0;
    const int P = static_cast<int>(scenario.populations.size());

    // Consumption of recursive agents needs the retained continuation values.
    for (int p = 0; p < P; ++p)
        if (scenario.populations[p].mode == UtilityMode::RECURSIVE &&
            (solution.log_vtilde.empty() ||
             (N > 0 && solution.log_vtilde[0][p].empty())))
            throw Error("solver.diagnostics",
                        "consumption paths need a solution built with "
                        "keep_diagnostics");

    std::vector<double> pop_weights(P);
    for (int p = 0; p < P; ++p) pop_weights[p] = scenario.populations[p].weight;

    SimulatedPaths out;
    out.stock_idx.resize(n_paths);
    out.y_idx.resize(n_paths);
    out.agents.resize(n_paths);

    for (int j = 0; j < n_paths; ++j) {
        SplitMix64 market_rng(seed, static_cast<std::uint64_t>(j), 0);
        std::vector<int>& ks = out.stock_idx[j];
        std::vector<int>& ys = out.y_idx[j];
        ks.resize(N + 1);
        ys.resize(N + 1);
        ks[0] = 0;
        ys[0] = static_cast<int>(sample_index(market_rng, scenario.y_chain.initial_law));
        for (int n = 0; n < N; ++n) {
            const double p = solution.p[n][solution.cell_index(n, ks[n], ys[n])];
            const bool up = market_rng.next_double() < p;
            const auto& row = scenario.y_chain.rows[n][ys[n]];
            const int ye = static_cast<int>(sample_index(market_rng, row));
            ks[n + 1] = stock_child(solution.path_mode, ks[n], up ? 1 : 0);
            ys[n + 1] = row[ye].to;
        }

        out.agents[j].resize(n_agents);
        for (int a = 0; a < n_agents; ++a) {
            SplitMix64 rng(seed, static_cast<std::uint64_t>(j),
                           static_cast<std::uint64_t>(a) + 1);
            AgentPath& ap = out.agents[j][a];
            ap.population = static_cast<int>(sample_index(rng, pop_weights));
            const PopulationSpec& ps = scenario.populations[ap.population];
            const bool recursive = ps.mode == UtilityMode::RECURSIVE;
            const int T = static_cast<int>(ps.grid.types.size());

            ap.z_idx.resize(N + 1);
            if (ps.joint_z0_type.empty()) {
                std::vector<double> tw(T);
                for (int t = 0; t < T; ++t) tw[t] = ps.grid.types[t].weight;
                ap.type = static_cast<int>(sample_index(rng, tw));
                ap.z_idx[0] = static_cast<int>(
                    sample_index(rng, ps.z_chain.initial_law));
            } else {
                std::vector<double> flat;
                flat.reserve(ps.joint_z0_type.size() * T);
                for (const auto& row : ps.joint_z0_type)
                    for (double v : row) flat.push_back(v);
                const std::size_t cellzt = sample_index(rng, flat);
                ap.z_idx[0] = static_cast<int>(cellzt / T);
                ap.type = static_cast<int>(cellzt % T);
            }
            for (int n = 0; n < N; ++n) {
                const auto& row = ps.z_chain.rows[n][ap.z_idx[n]];
                ap.z_idx[n + 1] = row[sample_index(rng, row)].to;
            }

            ap.wealth.resize(N + 1);
            ap.position.resize(N);
            if (recursive) ap.consumption.resize(N);
            ap.wealth[0] = ps.grid.types[ap.type].xi;
            for (int n = 0; n < N; ++n) {
                const std::size_t ai = solution.agent_index(
                    n, ks[n], ys[n], ap.z_idx[n], ap.type, ap.population);
                const double phi = solution.phi[n][ap.population][ai];
                ap.position[n] = phi;
                double c = 0.0;
                if (recursive) {
                    c = consumption_policy(ap.wealth[n], n, ks[n], ys[n], ap.z_idx[n],
                                           ap.population, ap.type, scenario, solution);
                    ap.consumption[n] = c;
                }
                const bool up = ks[n + 1] == stock_child(solution.path_mode, ks[n], 1);
                const double R = up ? u : d;
                const double sv =
                    stock_price(lat, solution.path_mode, n + 1, ks[n + 1]);
                const double g = eval_F(ps.g_at(n + 1), sv,
                                        scenario.y_chain.states[n + 1][ys[n + 1]],
                                        ps.z_chain.states[n + 1][ap.z_idx[n + 1]],
                                        n + 1, ks[n + 1], ys[n + 1], ap.z_idx[n + 1]);
                ap.wealth[n + 1] = beta * (ap.wealth[n] - c * dt) + phi * R + g;
            }
        }
    }
    return out;
}

}  // namespace mfe
