#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mfe/equilibrium_solver.hpp"

// Plain serial re-implementation of the backward induction, kept deliberately
// naive: direct loops, straightforward accumulation, no shared workspaces and
// no parallelism.  It exists to cross-check the production kernel and to act
// as the baseline in the benchmark target, so it must not share the
// production solver's numerical code paths.

namespace mfe {

namespace {

double ref_log_sum(const std::vector<double>& log_terms) {
    double mx = log_terms[0];
    for (double v : log_terms) mx = std::max(mx, v);
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double v : log_terms) acc += std::exp(v - mx);
    return mx + std::log(acc);
}

}  // namespace

EquilibriumSolution reference_backward_solve(const MarketScenario& sc) {
    const LatticeSpec& lat = sc.lattice;
    const int N = lat.N;
    const double u = lat.u();
    const double d = lat.d();
    const double beta = lat.beta();
    const double dt = N > 0 ? lat.dt() : 0.0;
    const int P = static_cast<int>(sc.populations.size());

    EquilibriumSolution sol;
    sol.lattice = lat;
    sol.stock_counts.resize(N + 1);
    sol.y_counts.resize(N + 1);
    for (int n = 0; n <= N; ++n) {
        sol.stock_counts[n] = n + 1;
        sol.y_counts[n] = static_cast<int>(sc.y_chain.state_count(n));
    }
    sol.z_counts.resize(P);
    sol.type_counts.resize(P);
    sol.modes.resize(P);
    sol.eta.resize(P);
    sol.agent_law.resize(P);
    sol.multi_population = P > 1;

    for (int p = 0; p < P; ++p) {
        const PopulationSpec& ps = sc.populations[p];
        const int T = static_cast<int>(ps.grid.types.size());
        sol.type_counts[p] = T;
        sol.modes[p] = ps.mode;
        if (ps.bias.family != BiasFamily::NONE) sol.biased = true;
        sol.z_counts[p].resize(N + 1);
        for (int n = 0; n <= N; ++n)
            sol.z_counts[p][n] = static_cast<int>(ps.z_chain.state_count(n));

        sol.eta[p].resize(T);
        for (int t = 0; t < T; ++t) {
            std::vector<double> sched(static_cast<std::size_t>(N) + 1, 1.0);
            if (ps.mode == UtilityMode::RECURSIVE) {
                for (int n = N; n >= 1; --n) {
                    const double w = ps.grid.types[t].psi * sched[n] * beta;
                    sched[n - 1] = w / (ps.grid.types[t].zeta + dt * w);
                }
            } else {
                double acc = 1.0;
                for (int n = N; n >= 0; --n) {
                    sched[n] = acc;
                    acc *= beta;
                }
            }
            sol.eta[p][t] = sched;
        }

        // Cross-sectional law over (z, type), one step at a time.
        sol.agent_law[p].resize(N + 1);
        std::vector<std::vector<double>> zlaw_by_type(T);
        for (int t = 0; t < T; ++t) {
            std::vector<double> law0(ps.z_chain.state_count(0));
            if (ps.joint_z0_type.empty()) {
                law0 = ps.z_chain.initial_law;
            } else {
                for (std::size_t z = 0; z < law0.size(); ++z)
                    law0[z] = ps.joint_z0_type[z][t] / ps.grid.types[t].weight;
            }
            zlaw_by_type[t] = law0;
        }
        for (int n = 0; n <= N; ++n) {
            const int Z = sol.z_counts[p][n];
            sol.agent_law[p][n].assign(static_cast<std::size_t>(Z) * T, 0.0);
            for (int t = 0; t < T; ++t) {
                for (int z = 0; z < Z; ++z)
                    sol.agent_law[p][n][static_cast<std::size_t>(z) * T + t] =
                        zlaw_by_type[t][z] * ps.grid.types[t].weight;
                if (n < N) {
                    std::vector<double> next(ps.z_chain.state_count(n + 1), 0.0);
                    for (int z = 0; z < Z; ++z)
                        for (const auto& e : ps.z_chain.rows[n][z])
                            next[e.to] += zlaw_by_type[t][z] * e.prob;
                    zlaw_by_type[t] = std::move(next);
                }
            }
        }
    }

    // Terminal slice.
    std::vector<std::vector<double>> V(P);
    for (int p = 0; p < P; ++p) {
        const PopulationSpec& ps = sc.populations[p];
        const int Y = sol.y_counts[N];
        const int Z = sol.z_counts[p][N];
        const int T = sol.type_counts[p];
        V[p].assign(static_cast<std::size_t>(N + 1) * Y * Z * T, 0.0);
        for (int k = 0; k <= N; ++k)
            for (int y = 0; y < Y; ++y)
                for (int z = 0; z < Z; ++z) {
                    const double F =
                        eval_F(ps.F, lat.node_price(N, k), sc.y_chain.states[N][y],
                               ps.z_chain.states[N][z], N, k, y, z);
                    for (int t = 0; t < T; ++t)
                        V[p][((static_cast<std::size_t>(k) * Y + y) * Z + z) * T + t] =
                            ps.mode == UtilityMode::EXPONENTIAL_TERMINAL
                                ? ps.grid.types[t].gamma * F
                                : F;
                }
    }

    sol.p.resize(N);
    sol.phi.resize(N);

    for (int n = N; n >= 1; --n) {
        const int m = n - 1;
        const int Ym = sol.y_counts[m];
        const int Yn = sol.y_counts[n];
        const std::size_t cells = static_cast<std::size_t>(m + 1) * Ym;
        sol.p[m].assign(cells, 0.0);
        sol.phi[m].resize(P);

        double agg_inv = 0.0;
        for (int p = 0; p < P; ++p) {
            const PopulationSpec& ps = sc.populations[p];
            const int T = sol.type_counts[p];
            double acc = 0.0;
            for (std::size_t i = 0; i < sol.agent_law[p][m].size(); ++i)
                acc += sol.agent_law[p][m][i] /
                       (ps.grid.types[i % T].gamma * sol.eta[p][i % T][n]);
            agg_inv += ps.weight * acc;
        }

        std::vector<std::vector<double>> V_new(P);
        for (int p = 0; p < P; ++p) {
            const std::size_t zt =
                static_cast<std::size_t>(sol.z_counts[p][m]) * sol.type_counts[p];
            V_new[p].assign(cells * zt, 0.0);
            sol.phi[m][p].assign(cells * zt, 0.0);
        }

        for (int k = 0; k <= m; ++k) {
            const double s = lat.node_price(m, k);
            const double su = lat.node_price(n, k + 1);
            const double sd = lat.node_price(n, k);
            for (int y = 0; y < Ym; ++y) {
                const std::size_t cell = static_cast<std::size_t>(k) * Ym + y;
                const double yv = sc.y_chain.states[m][y];

                // First pass: branch expectations, f, and the f aggregate.
                std::vector<std::vector<double>> lau(P), lad(P), lfpi(P), varpi(P);
                double agg_logf = 0.0;
                for (int p = 0; p < P; ++p) {
                    const PopulationSpec& ps = sc.populations[p];
                    const bool exponential =
                        ps.mode == UtilityMode::EXPONENTIAL_TERMINAL;
                    const int Zm = sol.z_counts[p][m];
                    const int Zn = sol.z_counts[p][n];
                    const int T = sol.type_counts[p];
                    lau[p].resize(static_cast<std::size_t>(Zm) * T);
                    lad[p].resize(lau[p].size());
                    lfpi[p].resize(lau[p].size());
                    varpi[p].resize(lau[p].size());
                    double acc = 0.0;
                    for (int z = 0; z < Zm; ++z)
                        for (int t = 0; t < T; ++t) {
                            const AgentType& at = ps.grid.types[t];
                            const double Dn = sol.eta[p][t][n];
                            std::vector<double> tu, td;
                            for (const auto& ye : sc.y_chain.rows[m][y])
                                for (const auto& ze : ps.z_chain.rows[m][z]) {
                                    const double yv2 = sc.y_chain.states[n][ye.to];
                                    const double zv2 = ps.z_chain.states[n][ze.to];
                                    const double lw = std::log(ye.prob * ze.prob);
                                    const double gu = eval_F(ps.g_at(n), su, yv2, zv2,
                                                             n, k + 1, ye.to, ze.to);
                                    const double gd = eval_F(ps.g_at(n), sd, yv2, zv2,
                                                             n, k, ye.to, ze.to);
                                    const std::size_t iu =
                                        ((static_cast<std::size_t>(k + 1) * Yn + ye.to) *
                                             Zn +
                                         ze.to) *
                                            T +
                                        t;
                                    const std::size_t id =
                                        ((static_cast<std::size_t>(k) * Yn + ye.to) * Zn +
                                         ze.to) *
                                            T +
                                        t;
                                    tu.push_back(lw + (exponential
                                                           ? V[p][iu] - at.gamma * Dn * gu
                                                           : at.gamma *
                                                                 (V[p][iu] - Dn * gu)));
                                    td.push_back(lw + (exponential
                                                           ? V[p][id] - at.gamma * Dn * gd
                                                           : at.gamma *
                                                                 (V[p][id] - Dn * gd)));
                                }
                            const std::size_t zt = static_cast<std::size_t>(z) * T + t;
                            lau[p][zt] = ref_log_sum(tu);
                            lad[p][zt] = ref_log_sum(td);
                            double w = 1.0;
                            if (ps.bias.family != BiasFamily::NONE) {
                                double z0 = 0.0;
                                for (std::size_t zz = 0; zz < ps.z_chain.state_count(0);
                                     ++zz)
                                    z0 += ps.z_chain.initial_law[zz] *
                                          ps.z_chain.states[0][zz];
                                w = eval_bias(ps.bias, m, s, ps.z_chain.states[m][z],
                                              lat, z0, k, y, z, t);
                            }
                            varpi[p][zt] = w;
                            lfpi[p][zt] = lau[p][zt] - lad[p][zt] + std::log(w);
                            acc += sol.agent_law[p][m][zt] * lfpi[p][zt] /
                                   (at.gamma * Dn);
                        }
                    agg_logf += ps.weight * acc;
                }

                const double L = eval_L(sc.order_flow, s, yv, m, k, y);
                const double G = (agg_logf - (u - d) * L) / agg_inv;
                if (!std::isfinite(G) || std::abs(G) > 700.0)
                    throw Error("numeric.infeasible",
                                "reference solver: clearing tilt out of range");
                const double eg = std::exp(G);
                const double pe = -d / (u * eg - d);
                const double qe = u * eg / (u * eg - d);
                sol.p[m][cell] = pe;

                // Second pass: positions and value updates.
                double mean_phi = 0.0;
                for (int p = 0; p < P; ++p) {
                    const PopulationSpec& ps = sc.populations[p];
                    const bool exponential =
                        ps.mode == UtilityMode::EXPONENTIAL_TERMINAL;
                    const int T = sol.type_counts[p];
                    const std::size_t ZT = lau[p].size();
                    double acc = 0.0;
                    for (std::size_t zt = 0; zt < ZT; ++zt) {
                        const AgentType& at = ps.grid.types[zt % T];
                        const double Dn = sol.eta[p][zt % T][n];
                        const double phi =
                            (std::log(-pe * u / (qe * d)) + lfpi[p][zt]) /
                            (at.gamma * Dn * (u - d));
                        sol.phi[m][p][cell * ZT + zt] = phi;
                        acc += sol.agent_law[p][m][zt] * phi;

                        double ps_up = pe;
                        double ps_dn = qe;
                        if (ps.bias.family != BiasFamily::NONE) {
                            const double den = varpi[p][zt] * pe + qe;
                            ps_up = varpi[p][zt] * pe / den;
                            ps_dn = qe / den;
                        }
                        const double vu =
                            ps_up * std::exp(-at.gamma * Dn * phi * u + lau[p][zt]);
                        const double vd =
                            ps_dn * std::exp(-at.gamma * Dn * phi * d + lad[p][zt]);
                        double stored;
                        if (exponential) {
                            stored = std::log(vu + vd);
                        } else {
                            const double lvt = std::log(vu + vd);
                            const double etan = Dn;
                            const double etam = sol.eta[p][zt % T][m];
                            const double denk =
                                at.zeta + dt * at.psi * etan * beta;
                            stored =
                                etam / (etan * at.gamma * beta) * lvt +
                                std::log(at.delta * at.psi * etan * beta / at.zeta) /
                                    denk -
                                std::log(etam) / at.zeta;
                        }
                        if (!std::isfinite(stored))
                            throw Error("numeric.overflow",
                                        "reference solver: value update overflowed");
                        V_new[p][cell * ZT + zt] = stored;
                    }
                    mean_phi += ps.weight * acc;
                }
                if (std::abs(mean_phi - L) > 1e-10)
                    throw Error("solver.clearing",
                                "reference solver: clearing identity violated");
                sol.max_clearing_residual =
                    std::max(sol.max_clearing_residual, std::abs(mean_phi - L));
            }
        }
        for (int p = 0; p < P; ++p) V[p] = std::move(V_new[p]);
    }
    return sol;
}

}  // namespace mfe
