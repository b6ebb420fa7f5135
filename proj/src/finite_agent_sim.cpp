#include "mfe/finite_agent_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <numeric>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mfe {

namespace {

// Population sizes: round(weight * n) with largest-remainder correction.
std::vector<int> population_counts(const std::vector<PopulationSpec>& pops, int n) {
    const std::size_t P = pops.size();
    std::vector<int> counts(P);
    std::vector<double> frac(P);
    int assigned = 0;
    for (std::size_t p = 0; p < P; ++p) {
        const double target = pops[p].weight * n;
        counts[p] = static_cast<int>(std::floor(target));
        frac[p] = target - counts[p];
        assigned += counts[p];
    }
    std::vector<std::size_t> order(P);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (int r = 0; r < n - assigned; ++r) ++counts[order[r % P]];
    return counts;
}

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

FiniteSample sample_population(const MarketScenario& scenario, int n_agents,
                               std::uint64_t seed, std::uint64_t replication) {
    if (n_agents < 1)
        throw Error("sim.population_size", "need at least one agent");
    const int N = scenario.lattice.N;
    const std::vector<int> counts =
        population_counts(scenario.populations, n_agents);

    FiniteSample sample;
    sample.scenario_hash = scenario.content_hash;
    sample.agents.resize(n_agents);

    int ordinal = 0;
    for (std::size_t p = 0; p < scenario.populations.size(); ++p) {
        const PopulationSpec& ps = scenario.populations[p];
        const int T = static_cast<int>(ps.grid.types.size());
        std::vector<double> type_weights(T);
        for (int t = 0; t < T; ++t) type_weights[t] = ps.grid.types[t].weight;
        std::vector<double> joint_flat;
        if (!ps.joint_z0_type.empty()) {
            joint_flat.reserve(ps.joint_z0_type.size() * T);
            for (const auto& row : ps.joint_z0_type)
                for (double v : row) joint_flat.push_back(v);
        }

        for (int c = 0; c < counts[p]; ++c, ++ordinal) {
            SplitMix64 rng(seed, replication, static_cast<std::uint64_t>(ordinal));
            SampledAgent& ag = sample.agents[ordinal];
            ag.population = static_cast<int>(p);
            ag.z_idx.resize(N + 1);
            if (joint_flat.empty()) {
                ag.type = static_cast<int>(sample_index(rng, type_weights));
                ag.z_idx[0] =
                    static_cast<int>(sample_index(rng, ps.z_chain.initial_law));
            } else {
                const std::size_t zt = sample_index(rng, joint_flat);
                ag.z_idx[0] = static_cast<int>(zt / T);
                ag.type = static_cast<int>(zt % T);
            }
            for (int n = 0; n < N; ++n) {
                const auto& row = ps.z_chain.rows[n][ag.z_idx[n]];
                ag.z_idx[n + 1] = row[sample_index(rng, row)].to;
            }
        }
    }
    return sample;
}

double excess_demand_mse(const MarketScenario& scenario,
                         const EquilibriumSolution& solution,
                         const ForwardLaw& law, const FiniteSample& sample, int n) {
    if (sample.scenario_hash != scenario.content_hash)
        throw Error("sim.scenario_mismatch",
                    "sample was drawn from a different scenario than the solution");
    if (n < 0 || n >= solution.steps())
        throw Error("sim.step", "excess demand is defined for decision steps 0..N-1");
    const std::size_t P = scenario.populations.size();

    // Bucket agents by (population, z state at n, type) and compare bucket
    // occupancy against its cross-sectional mass. Per node, the gap between the
    // empirical mean position and the mean-field aggregate (which equals the
    // order flow by market clearing) is a weighted sum over the buckets whose
    // occupancy deviates from the law. Framing the gap through occupancy deltas
    // keeps the estimator free of the solver's own clearing residual: a sample
    // that reproduces the law exactly -- e.g. any draw from a single-atom
    // population -- measures exactly zero.
    struct Bucket {
        int population;
        std::size_t zt;  // z * T + t, matching the solver's agent layout
        double delta;    // count - n_agents * population weight * law mass
    };
    std::vector<std::vector<int>> counts(P);
    for (std::size_t p = 0; p < P; ++p) {
        const int T = solution.type_counts[p];
        counts[p].assign(static_cast<std::size_t>(solution.z_counts[p][n]) * T, 0);
    }
    for (const SampledAgent& ag : sample.agents) {
        const int T = solution.type_counts[ag.population];
        ++counts[ag.population][static_cast<std::size_t>(ag.z_idx[n]) * T + ag.type];
    }
    std::vector<Bucket> buckets;
    const double n_total = static_cast<double>(sample.agents.size());
    for (std::size_t p = 0; p < P; ++p) {
        const double w = scenario.populations[p].weight;
        const std::vector<double>& law_zt = solution.agent_law[p][n];
        for (std::size_t zt = 0; zt < counts[p].size(); ++zt) {
            const double delta = counts[p][zt] - n_total * w * law_zt[zt];
            if (delta != 0.0)
                buckets.push_back({static_cast<int>(p), zt, delta});
        }
    }

    const int K = law.stock_counts[n];
    const int Y = law.y_counts[n];
    double mse = 0.0;
    for (int k = 0; k < K; ++k) {
        for (int y = 0; y < Y; ++y) {
            const double mass = law.joint[n][law.index(n, k, y)];
            if (mass == 0.0) continue;
            const std::size_t cell = solution.cell_index(n, k, y);
            double diff = 0.0;
            for (const Bucket& b : buckets) {
                const std::size_t base =
                    cell * counts[b.population].size();
                diff += b.delta * solution.phi[n][b.population][base + b.zt];
            }
            const double gap = diff / n_total;
            mse += mass * gap * gap;
        }
    }
    return mse;
}

ConvergenceReport convergence_study(const MarketScenario& scenario,
                                    std::vector<int> n_p_list, int replications,
                                    std::uint64_t seed,
                                    const SolverOptions& options) {
    std::sort(n_p_list.begin(), n_p_list.end());
    n_p_list.erase(std::unique(n_p_list.begin(), n_p_list.end()), n_p_list.end());
    if (n_p_list.size() < 2)
        throw Error("convergence.np_list",
                    "need at least two distinct population sizes");
    if (!n_p_list.empty() && n_p_list.front() < 1)
        throw Error("convergence.np_list", "population sizes must be positive");
    if (replications < 1)
        throw Error("convergence.replications", "need at least one replication");

    const EquilibriumSolution solution = backward_solve(scenario, options);
    const ForwardLaw law = forward_joint_law(solution, scenario.y_chain);
    const int N = scenario.lattice.N;
    const std::size_t S = n_p_list.size();

    ConvergenceReport rep;
    rep.scenario_hash = scenario.content_hash;
    rep.seed = seed;
    rep.replications = replications;
    rep.n_p = n_p_list;
    rep.mse.assign(S, std::vector<double>(replications, 0.0));

    const std::int64_t tasks = static_cast<std::int64_t>(S) * replications;
    std::atomic<bool> failed{false};
    std::exception_ptr error;
#ifdef _OPENMP
    const int nt = options.threads > 0 ? options.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
#endif
    for (std::int64_t task = 0; task < tasks; ++task) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
            const std::size_t si = static_cast<std::size_t>(task) / replications;
            const int r = static_cast<int>(task % replications);
            const FiniteSample sample = sample_population(
                scenario, n_p_list[si], seed, static_cast<std::uint64_t>(r));
            double acc = 0.0;
            for (int n = 0; n < N; ++n)
                acc += excess_demand_mse(scenario, solution, law, sample, n);
            rep.mse[si][r] = N > 0 ? acc / N : 0.0;
        } catch (...) {
            bool expected = false;
            if (failed.compare_exchange_strong(expected, true))
                error = std::current_exception();
        }
    }
    if (failed.load()) std::rethrow_exception(error);

    rep.mse_mean.resize(S);
    for (std::size_t si = 0; si < S; ++si)
        rep.mse_mean[si] =
            pairwise_sum(rep.mse[si].data(), rep.mse[si].size()) / replications;

    rep.degenerate = std::any_of(rep.mse_mean.begin(), rep.mse_mean.end(),
                                 [](double v) { return !(v > 0.0); });
    if (rep.degenerate) {
        rep.slope = std::numeric_limits<double>::quiet_NaN();
        rep.slope_stderr = std::numeric_limits<double>::quiet_NaN();
        return rep;
    }

    const auto ols_slope = [&](const std::vector<double>& means) {
        double mx = 0.0, my = 0.0;
        for (std::size_t si = 0; si < S; ++si) {
            mx += std::log(static_cast<double>(n_p_list[si]));
            my += std::log(means[si]);
        }
        mx /= S;
        my /= S;
        double num = 0.0, den = 0.0;
        for (std::size_t si = 0; si < S; ++si) {
            const double dx = std::log(static_cast<double>(n_p_list[si])) - mx;
            num += dx * (std::log(means[si]) - my);
            den += dx * dx;
        }
        return num / den;
    };
    rep.slope = ols_slope(rep.mse_mean);

    // Leave-one-replication-out jackknife for the slope's standard error.
    if (replications > 1) {
        std::vector<double> jack(replications);
        std::vector<double> means(S);
        bool jack_ok = true;
        for (int r = 0; r < replications && jack_ok; ++r) {
            for (std::size_t si = 0; si < S; ++si) {
                means[si] = (rep.mse_mean[si] * replications - rep.mse[si][r]) /
                            (replications - 1);
                if (!(means[si] > 0.0)) jack_ok = false;
            }
            if (jack_ok) jack[r] = ols_slope(means);
        }
        if (jack_ok) {
            double jbar = pairwise_sum(jack.data(), jack.size()) / replications;
            double var = 0.0;
            for (double v : jack) var += (v - jbar) * (v - jbar);
            rep.slope_stderr = std::sqrt(var * (replications - 1) / replications);
        } else {
            rep.slope_stderr = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return rep;
}

}  // namespace mfe
