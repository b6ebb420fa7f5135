#include "mfe/equilibrium_solver.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstddef>
#include <exception>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mfe {

EtaSchedule eta_schedule(const AgentType& type, const LatticeSpec& spec) {
    const int N = spec.N;
    EtaSchedule eta(static_cast<std::size_t>(N) + 1, 1.0);
    if (N == 0) return eta;
    const double beta = spec.beta();
    const double dt = spec.dt();
    for (int n = N; n >= 1; --n) {
        const double w = type.psi * eta[n] * beta;
        eta[n - 1] = w / (type.zeta + dt * w);
    }
    return eta;
}

ClearingResult equilibrium_prob(double agg_logf, double agg_inv, double L,
                                const LatticeSpec& spec) {
    if (!(agg_inv > 0.0))
        throw Error("solver.aggregate",
                    "cross-sectional risk-tolerance aggregate must be positive");
    const double u = spec.u();
    const double d = spec.d();
    const double G = (agg_logf - (u - d) * L) / agg_inv;
    if (!std::isfinite(G) || std::abs(G) > 700.0) {
        std::ostringstream msg;
        msg << "required clearing tilt G=" << G
            << " exceeds the representable range (|G| <= 700); the scenario "
               "demands an unattainable risk premium";
        throw Error("numeric.infeasible", msg.str());
    }
    const double eg = std::exp(G);
    const double denom = u * eg - d;
    return {-d / denom, u * eg / denom, G};
}

double optimal_position(double p, double q, double log_f_pi, double gamma, double D_n,
                        const LatticeSpec& spec) {
    const double u = spec.u();
    const double d = spec.d();
    const double logit = std::log(p * u) - std::log(q * (-d));
    return (logit + log_f_pi) / (gamma * D_n * (u - d));
}

namespace {

// Node-indexed stock states: level k = number of up moves, children k / k+1.
struct NodeIndexer {
    const LatticeSpec* spec;
    int count(int n) const { return n + 1; }
    int child(int k, int up) const { return k + up; }
    double price(int n, int k) const { return spec->node_price(n, k); }
};

// Path-indexed stock states: the bit sequence of moves (first move = most
// significant bit, down < up), so enumeration order is lexicographic.
struct PathIndexer {
    const LatticeSpec* spec;
    int count(int n) const { return 1 << n; }
    int child(int b, int up) const { return (b << 1) | up; }
    double price(int n, int b) const {
        return spec->node_price(n, std::popcount(static_cast<unsigned>(b)));
    }
};

std::string node_label(int n, int k, int y) {
    std::ostringstream s;
    s << "(n=" << n << ", stock=" << k << ", y=" << y << ")";
    return s.str();
}

struct PopData {
    const PopulationSpec* pop;
    int T = 0;
    bool has_bias = false;
    double z0_ref = 1.0;
    std::vector<EtaSchedule> D;  // [type][step]: eta_n or beta^(N-n)
};

// Cross-sectional law over (z at step n, type), weighted by type mass.
std::vector<std::vector<double>> build_agent_law(const PopulationSpec& pop, int N) {
    const std::size_t T = pop.grid.types.size();
    std::vector<std::vector<double>> law(static_cast<std::size_t>(N) + 1);
    if (pop.joint_z0_type.empty()) {
        for (int n = 0; n <= N; ++n) {
            const std::vector<double> zm = pop.z_chain.marginal(n);
            law[n].assign(zm.size() * T, 0.0);
            for (std::size_t z = 0; z < zm.size(); ++z)
                for (std::size_t t = 0; t < T; ++t)
                    law[n][z * T + t] = zm[z] * pop.grid.types[t].weight;
        }
        return law;
    }
    for (int n = 0; n <= N; ++n)
        law[n].assign(pop.z_chain.state_count(n) * T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const double mass = pop.grid.types[t].weight;
        std::vector<double> col(pop.z_chain.state_count(0));
        for (std::size_t z = 0; z < col.size(); ++z)
            col[z] = pop.joint_z0_type[z][t] / mass;
        for (int n = 0; n <= N; ++n) {
            const std::vector<double> zm = pop.z_chain.marginal_from(n, col);
            for (std::size_t z = 0; z < zm.size(); ++z)
                law[n][z * T + t] = zm[z] * mass;
        }
    }
    return law;
}

struct Scratch {
    std::vector<double> branch_w;   // log transition weights per (y',z') pair
    std::vector<double> g_up;       // endowment at the up child per (y',z')
    std::vector<double> g_down;
    std::vector<double> terms;      // log-sum-exp buffer
    std::vector<std::vector<double>> la_up, la_down, lfpi, varpi, agg;
    std::vector<double> partials;
};

template <class Indexer>
EquilibriumSolution solve_impl(const MarketScenario& sc, const SolverOptions& opt,
                               const Indexer& ix, bool path_mode) {
    const LatticeSpec& lat = sc.lattice;
    const int N = lat.N;
    const double u = lat.u();
    const double d = lat.d();
    const double beta = lat.beta();
    const double dt = N > 0 ? lat.dt() : 0.0;
    const int P = static_cast<int>(sc.populations.size());

    EquilibriumSolution sol;
    sol.lattice = lat;
    sol.path_mode = path_mode;
    sol.multi_population = P > 1;

    sol.stock_counts.resize(N + 1);
    sol.y_counts.resize(N + 1);
    for (int n = 0; n <= N; ++n) {
        sol.stock_counts[n] = ix.count(n);
        sol.y_counts[n] = static_cast<int>(sc.y_chain.state_count(n));
    }
    sol.z_counts.resize(P);
    sol.type_counts.resize(P);
    sol.modes.resize(P);
    sol.eta.resize(P);
    sol.agent_law.resize(P);

    std::vector<PopData> pops(P);
    for (int p = 0; p < P; ++p) {
        const PopulationSpec& ps = sc.populations[p];
        PopData& pd = pops[p];
        pd.pop = &ps;
        pd.T = static_cast<int>(ps.grid.types.size());
        pd.has_bias = ps.bias.family != BiasFamily::NONE;
        if (pd.has_bias) sol.biased = true;
        pd.D.resize(pd.T);
        for (int t = 0; t < pd.T; ++t) {
            if (ps.mode == UtilityMode::RECURSIVE) {
                pd.D[t] = eta_schedule(ps.grid.types[t], lat);
            } else {
                pd.D[t].resize(static_cast<std::size_t>(N) + 1);
                for (int n = 0; n <= N; ++n) pd.D[t][n] = std::pow(beta, N - n);
            }
        }
        double z0 = 0.0;
        for (std::size_t z = 0; z < ps.z_chain.state_count(0); ++z)
            z0 += ps.z_chain.initial_law[z] * ps.z_chain.states[0][z];
        pd.z0_ref = z0;

        sol.z_counts[p].resize(N + 1);
        for (int n = 0; n <= N; ++n)
            sol.z_counts[p][n] = static_cast<int>(ps.z_chain.state_count(n));
        sol.type_counts[p] = pd.T;
        sol.modes[p] = ps.mode;
        sol.eta[p] = pd.D;
        sol.agent_law[p] = build_agent_law(ps, N);
    }

    sol.p.resize(N);
    sol.phi.resize(N);
    if (opt.keep_diagnostics) {
        sol.log_f.resize(N);
        sol.log_vtilde.resize(N);
    }

    // Terminal slice: stored value is gamma*F for terminal-utility populations
    // and F itself (wealth units) for recursive ones.
    std::vector<std::vector<double>> V(P);
    {
        const int K = sol.stock_counts[N];
        const int Y = sol.y_counts[N];
        for (int p = 0; p < P; ++p) {
            const PopulationSpec& ps = *pops[p].pop;
            const int Z = sol.z_counts[p][N];
            const int T = pops[p].T;
            V[p].assign(static_cast<std::size_t>(K) * Y * Z * T, 0.0);
            for (int k = 0; k < K; ++k) {
                const double s = ix.price(N, k);
                for (int y = 0; y < Y; ++y) {
                    const double yv = sc.y_chain.states[N][y];
                    for (int z = 0; z < Z; ++z) {
                        const double zv = ps.z_chain.states[N][z];
                        const double F = eval_F(ps.F, s, yv, zv, N, k, y, z);
                        for (int t = 0; t < T; ++t) {
                            const double stored =
                                ps.mode == UtilityMode::EXPONENTIAL_TERMINAL
                                    ? ps.grid.types[t].gamma * F
                                    : F;
                            V[p][((static_cast<std::size_t>(k) * Y + y) * Z + z) * T + t] =
                                stored;
                        }
                    }
                }
            }
        }
    }

    int nt = 1;
#ifdef _OPENMP
    nt = opt.threads > 0 ? opt.threads : omp_get_max_threads();
#endif
    std::vector<Scratch> scratch(static_cast<std::size_t>(std::max(nt, 1)));

    std::vector<double> residuals;
    std::vector<std::vector<double>> V_new(P);

    for (int n = N; n >= 1; --n) {
        const int m = n - 1;
        const int Ym = sol.y_counts[m];
        const int Yn = sol.y_counts[n];
        const std::size_t cells = static_cast<std::size_t>(sol.stock_counts[m]) * Ym;

        // Node-independent aggregate sum_p w_p E_p[1/(gamma*D_n)].
        double agg_inv = 0.0;
        {
            std::vector<double> pop_terms(P);
            std::vector<double> buf;
            for (int p = 0; p < P; ++p) {
                const auto& law = sol.agent_law[p][m];
                const int T = pops[p].T;
                buf.resize(law.size());
                for (std::size_t i = 0; i < law.size(); ++i) {
                    const int t = static_cast<int>(i % T);
                    buf[i] =
                        law[i] / (pops[p].pop->grid.types[t].gamma * pops[p].D[t][n]);
                }
                pop_terms[p] =
                    pops[p].pop->weight * pairwise_sum(buf.data(), buf.size());
            }
            agg_inv = pairwise_sum(pop_terms.data(), pop_terms.size());
        }

        sol.p[m].assign(cells, 0.0);
        sol.phi[m].resize(P);
        for (int p = 0; p < P; ++p) {
            const std::size_t zt =
                static_cast<std::size_t>(sol.z_counts[p][m]) * pops[p].T;
            sol.phi[m][p].assign(cells * zt, 0.0);
            V_new[p].assign(cells * zt, 0.0);
        }
        if (opt.keep_diagnostics) {
            sol.log_f[m].resize(P);
            sol.log_vtilde[m].resize(P);
            for (int p = 0; p < P; ++p) {
                const std::size_t zt =
                    static_cast<std::size_t>(sol.z_counts[p][m]) * pops[p].T;
                sol.log_f[m][p].assign(cells * zt, 0.0);
                if (pops[p].pop->mode == UtilityMode::RECURSIVE)
                    sol.log_vtilde[m][p].assign(cells * zt, 0.0);
            }
        }
        residuals.assign(cells, 0.0);

        std::atomic<bool> failed{false};
        std::exception_ptr eptr = nullptr;

        auto process_cell = [&](std::size_t cell, Scratch& ws) {
            const int k = static_cast<int>(cell / Ym);
            const int y = static_cast<int>(cell % Ym);
            const double s = ix.price(m, k);
            const double yv = sc.y_chain.states[m][y];
            const int ku = ix.child(k, 1);
            const int kd = ix.child(k, 0);
            const double su = ix.price(n, ku);
            const double sd = ix.price(n, kd);
            const auto& yrow = sc.y_chain.rows[m][y];

            if (ws.la_up.size() != static_cast<std::size_t>(P)) {
                ws.la_up.resize(P);
                ws.la_down.resize(P);
                ws.lfpi.resize(P);
                ws.varpi.resize(P);
                ws.agg.resize(P);
            }
            ws.partials.resize(P);

            for (int p = 0; p < P; ++p) {
                const PopulationSpec& ps = *pops[p].pop;
                const bool exponential = ps.mode == UtilityMode::EXPONENTIAL_TERMINAL;
                const int Zm = sol.z_counts[p][m];
                const int Zn = sol.z_counts[p][n];
                const int T = pops[p].T;
                const std::size_t ZT = static_cast<std::size_t>(Zm) * T;
                ws.la_up[p].resize(ZT);
                ws.la_down[p].resize(ZT);
                ws.lfpi[p].resize(ZT);
                ws.varpi[p].resize(ZT);
                ws.agg[p].resize(ZT);
                const PayoffField& g = ps.g_at(n);
                const auto& law = sol.agent_law[p][m];

                for (int z = 0; z < Zm; ++z) {
                    const auto& zrow = ps.z_chain.rows[m][z];
                    const double zv = ps.z_chain.states[m][z];
                    const std::size_t pairs = yrow.size() * zrow.size();
                    ws.branch_w.resize(pairs);
                    ws.g_up.resize(pairs);
                    ws.g_down.resize(pairs);
                    ws.terms.resize(pairs);
                    std::size_t j = 0;
                    for (const auto& ye : yrow) {
                        const double yv2 = sc.y_chain.states[n][ye.to];
                        for (const auto& ze : zrow) {
                            const double zv2 = ps.z_chain.states[n][ze.to];
                            ws.branch_w[j] = std::log(ye.prob * ze.prob);
                            ws.g_up[j] = eval_F(g, su, yv2, zv2, n, ku, ye.to, ze.to);
                            ws.g_down[j] = eval_F(g, sd, yv2, zv2, n, kd, ye.to, ze.to);
                            ++j;
                        }
                    }

                    for (int t = 0; t < T; ++t) {
                        const AgentType& at = ps.grid.types[t];
                        const double Dn = pops[p].D[t][n];
                        const std::size_t zt = static_cast<std::size_t>(z) * T + t;

                        for (int branch = 0; branch < 2; ++branch) {
                            const int kc = branch ? ku : kd;
                            const double* gv = branch ? ws.g_up.data() : ws.g_down.data();
                            j = 0;
                            for (const auto& ye : yrow) {
                                const std::size_t base =
                                    (static_cast<std::size_t>(kc) * Yn + ye.to) * Zn;
                                for (const auto& ze : zrow) {
                                    const double sv = V[p][(base + ze.to) * T + t];
                                    const double e =
                                        exponential
                                            ? sv - at.gamma * Dn * gv[j]
                                            : at.gamma * (sv - Dn * gv[j]);
                                    ws.terms[j] = ws.branch_w[j] + e;
                                    ++j;
                                }
                            }
                            const double la = log_sum_exp(ws.terms.data(), pairs);
                            if (!std::isfinite(la))
                                throw Error("numeric.overflow",
                                            "branch expectation overflowed at node " +
                                                node_label(m, k, y));
                            (branch ? ws.la_up[p][zt] : ws.la_down[p][zt]) = la;
                        }

                        const double lf = ws.la_up[p][zt] - ws.la_down[p][zt];
                        double w = 1.0;
                        if (pops[p].has_bias)
                            w = eval_bias(ps.bias, m, s, zv, lat, pops[p].z0_ref, k, y,
                                          z, t);
                        const double lfp = lf + std::log(w);
                        ws.lfpi[p][zt] = lfp;
                        ws.varpi[p][zt] = w;
                        ws.agg[p][zt] = law[zt] * lfp / (at.gamma * Dn);
                    }
                }
                ws.partials[p] =
                    ps.weight * pairwise_sum(ws.agg[p].data(), ws.agg[p].size());
            }

            const double agg_logf =
                pairwise_sum(ws.partials.data(), ws.partials.size());
            const double L = eval_L(sc.order_flow, s, yv, m, k, y);

            ClearingResult cr;
            try {
                cr = equilibrium_prob(agg_logf, agg_inv, L, lat);
            } catch (const Error& e) {
                if (e.code() == "numeric.infeasible")
                    throw Error(e.code(),
                                std::string(e.what()) + " [node " + node_label(m, k, y) +
                                    "]");
                throw;
            }
            sol.p[m][cell] = cr.p;
            const double lp0 = std::log(cr.p);
            const double lq0 = std::log(cr.q);

            for (int p = 0; p < P; ++p) {
                const PopulationSpec& ps = *pops[p].pop;
                const bool exponential = ps.mode == UtilityMode::EXPONENTIAL_TERMINAL;
                const int Zm = sol.z_counts[p][m];
                const int T = pops[p].T;
                const std::size_t ZT = static_cast<std::size_t>(Zm) * T;
                const auto& law = sol.agent_law[p][m];
                const std::size_t base = cell * ZT;

                for (std::size_t zt = 0; zt < ZT; ++zt) {
                    const int t = static_cast<int>(zt % T);
                    const AgentType& at = ps.grid.types[t];
                    const double Dn = pops[p].D[t][n];
                    const double lfp = ws.lfpi[p][zt];
                    const double phi = optimal_position(cr.p, cr.q, lfp, at.gamma, Dn, lat);
                    sol.phi[m][p][base + zt] = phi;
                    ws.agg[p][zt] = law[zt] * phi;

                    double lp = lp0;
                    double lq = lq0;
                    if (pops[p].has_bias) {
                        // The agent's own continuation value is taken under its
                        // subjective split of the up/down odds.
                        const double wv = ws.varpi[p][zt];
                        const double den = wv * cr.p + cr.q;
                        lp = std::log(wv * cr.p / den);
                        lq = std::log(cr.q / den);
                    }
                    const double scale = at.gamma * Dn * phi;
                    const double lse = log_sum_exp2(lp - scale * u + ws.la_up[p][zt],
                                                    lq - scale * d + ws.la_down[p][zt]);
                    double stored;
                    if (exponential) {
                        stored = lse;
                    } else {
                        const double etan = Dn;
                        const double etam = pops[p].D[t][m];
                        const double denk = at.zeta + dt * at.psi * etan * beta;
                        stored = etam / (etan * at.gamma * beta) * lse +
                                 std::log(at.delta * at.psi * etan * beta / at.zeta) /
                                     denk -
                                 std::log(etam) / at.zeta;
                        if (opt.keep_diagnostics) sol.log_vtilde[m][p][base + zt] = lse;
                    }
                    if (!std::isfinite(stored))
                        throw Error("numeric.overflow",
                                    "value update overflowed at node " +
                                        node_label(m, k, y));
                    V_new[p][base + zt] = stored;
                    if (opt.keep_diagnostics) sol.log_f[m][p][base + zt] = lfp;
                }
                ws.partials[p] =
                    ps.weight * pairwise_sum(ws.agg[p].data(), ws.agg[p].size());
            }
            const double mean_phi =
                pairwise_sum(ws.partials.data(), ws.partials.size());
            residuals[cell] = std::abs(mean_phi - L);
        };

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt)
#endif
        for (std::ptrdiff_t cell = 0; cell < static_cast<std::ptrdiff_t>(cells);
             ++cell) {
            if (failed.load(std::memory_order_relaxed)) continue;
            int tid = 0;
#ifdef _OPENMP
            tid = omp_get_thread_num();
#endif
            try {
                process_cell(static_cast<std::size_t>(cell), scratch[tid]);
            } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
                {
                    if (!failed.exchange(true)) eptr = std::current_exception();
                }
            }
        }
        if (eptr) std::rethrow_exception(eptr);

        for (std::size_t cell = 0; cell < cells; ++cell) {
            sol.max_clearing_residual =
                std::max(sol.max_clearing_residual, residuals[cell]);
            if (residuals[cell] > 1e-10) {
                const int k = static_cast<int>(cell / Ym);
                const int y = static_cast<int>(cell % Ym);
                std::ostringstream msg;
                msg << "market-clearing identity violated (residual="
                    << residuals[cell] << ") at node " << node_label(m, k, y);
                throw Error("solver.clearing", msg.str());
            }
        }

        for (int p = 0; p < P; ++p) V[p] = std::move(V_new[p]);
    }

    return sol;
}

}  // namespace

EquilibriumSolution backward_solve(const MarketScenario& scenario,
                                   const SolverOptions& options) {
    NodeIndexer ix{&scenario.lattice};
    return solve_impl(scenario, options, ix, false);
}

EquilibriumSolution path_dependent_solve(const MarketScenario& scenario,
                                         const SolverOptions& options) {
    if (scenario.lattice.N > scenario.analysis.path_cap)
        throw Error("path.capacity",
                    "path mode requires N <= path_cap (" +
                        std::to_string(scenario.lattice.N) + " > " +
                        std::to_string(scenario.analysis.path_cap) + ")");
    PathIndexer ix{&scenario.lattice};
    return solve_impl(scenario, options, ix, true);
}

double consumption_policy(double x, int n, int stock_idx, int y_idx, int z_idx,
                          int pop, int type, const MarketScenario& scenario,
                          const EquilibriumSolution& solution) {
    const PopulationSpec& ps = scenario.populations.at(pop);
    if (ps.mode != UtilityMode::RECURSIVE)
        throw Error("solver.mode",
                    "consumption policy is defined for recursive populations only");
    if (solution.log_vtilde.empty() || solution.log_vtilde.at(n).at(pop).empty())
        throw Error("solver.diagnostics",
                    "solution was built without keep_diagnostics; continuation "
                    "values are unavailable");
    const AgentType& at = ps.grid.types.at(type);
    const double beta = solution.lattice.beta();
    const double dt = solution.lattice.dt();
    const double eta_child = solution.eta[pop][type][n + 1];
    const double log_vt =
        solution.log_vtilde[n][pop]
                           [solution.agent_index(n, stock_idx, y_idx, z_idx, type, pop)];
    const double denk = at.zeta + dt * at.psi * eta_child * beta;
    return (at.psi * eta_child * beta / denk) * x -
           (std::log(at.delta * at.psi * eta_child * beta / at.zeta) +
            (at.psi / at.gamma) * log_vt) /
               denk;
}

}  // namespace mfe
