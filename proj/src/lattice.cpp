#include "mfe/lattice.hpp"

#include <cmath>

namespace mfe {

LatticeSpec LatticeSpec::from_vol(int N, double T, double r, double s0, double sigma) {
    LatticeSpec spec;
    spec.N = N;
    spec.T = T;
    spec.r = r;
    spec.s0 = s0;
    spec.u_tilde = std::exp(sigma * std::sqrt(T / static_cast<double>(N)));
    spec.d_tilde = 1.0 / spec.u_tilde;
    return spec;
}

LatticeSpec LatticeSpec::from_factors(int N, double T, double r, double s0,
                                      double u_tilde, double d_tilde) {
    LatticeSpec spec;
    spec.N = N;
    spec.T = T;
    spec.r = r;
    spec.s0 = s0;
    spec.u_tilde = u_tilde;
    spec.d_tilde = d_tilde;
    return spec;
}

double LatticeSpec::risk_neutral_prob() const {
    if (!(0.0 < d_tilde && d_tilde < beta() && beta() < u_tilde))
        throw Error("lattice.order",
                    "tree factors must satisfy 0 < d_tilde < beta < u_tilde");
    return (beta() - d_tilde) / (u_tilde - d_tilde);
}

double LatticeSpec::node_price(int n, int k) const {
    if (n < 0 || n > N || k < 0 || k > n)
        throw Error("lattice.range", "node (" + std::to_string(n) + "," +
                                         std::to_string(k) + ") outside tree of depth " +
                                         std::to_string(N));
    return s0 * std::pow(u_tilde, k) * std::pow(d_tilde, n - k);
}

void LatticeSpec::validate(std::vector<Violation>& out) const {
    if (N < 1) out.push_back({"lattice.N", "step count N must be >= 1"});
    if (!(T > 0.0)) out.push_back({"lattice.T", "horizon T must be positive"});
    if (!(s0 > 0.0)) out.push_back({"lattice.s0", "initial price s0 must be positive"});
    if (N >= 1 && T > 0.0) {
        if (!(0.0 < d_tilde && d_tilde < beta() && beta() < u_tilde))
            out.push_back({"lattice.order",
                           "tree factors must satisfy 0 < d_tilde < beta < u_tilde"});
    }
}

std::vector<PathIndex> enumerate_stock_paths(const LatticeSpec& spec, int n,
                                             int path_cap) {
    if (n < 0 || n > spec.N)
        throw Error("lattice.range", "path step outside tree");
    if (n > path_cap)
        throw Error("path.capacity",
                    "2^" + std::to_string(n) +
                        " paths exceed the path cap of 2^" + std::to_string(path_cap) +
                        "; use the node-based solver for this depth");
    std::vector<PathIndex> paths;
    paths.reserve(static_cast<std::size_t>(1) << n);
    for (std::uint64_t b = 0; b < (1ULL << n); ++b) paths.push_back(PathIndex{n, b});
    return paths;
}

FiniteMarkovChain FiniteMarkovChain::additive_binomial(double y0, double sigma,
                                                       double p, double dt, int N) {
    FiniteMarkovChain chain;
    chain.states.resize(N + 1);
    chain.rows.resize(N);
    const double step = sigma * std::sqrt(dt);
    if (step == 0.0) {
        for (int n = 0; n <= N; ++n) chain.states[n] = {y0};
        for (int n = 0; n < N; ++n) chain.rows[n] = {{{0, 1.0}}};
    } else {
        for (int n = 0; n <= N; ++n) {
            chain.states[n].resize(n + 1);
            for (int j = 0; j <= n; ++j)
                chain.states[n][j] = y0 + (2.0 * j - n) * step;
            if (n < N) chain.rows[n].resize(n + 1);
        }
        for (int n = 0; n < N; ++n)
            for (int j = 0; j <= n; ++j)
                chain.rows[n][j] = {{j, 1.0 - p}, {j + 1, p}};
    }
    chain.initial_law = {1.0};
    return chain;
}

FiniteMarkovChain FiniteMarkovChain::multiplicative_binomial(double y0, double sigma,
                                                             double p, double dt, int N) {
    FiniteMarkovChain chain = additive_binomial(0.0, sigma, p, dt, N);
    const double step = sigma * std::sqrt(dt);
    for (int n = 0; n <= N; ++n)
        for (double& v : chain.states[n])
            v = (step == 0.0) ? y0 : y0 * std::exp(v);
    return chain;
}

FiniteMarkovChain FiniteMarkovChain::from_dense(
    std::vector<std::vector<double>> states,
    const std::vector<std::vector<std::vector<double>>>& transitions,
    std::vector<double> initial_law) {
    FiniteMarkovChain chain;
    chain.states = std::move(states);
    chain.rows.resize(transitions.size());
    for (std::size_t n = 0; n < transitions.size(); ++n) {
        chain.rows[n].resize(transitions[n].size());
        for (std::size_t i = 0; i < transitions[n].size(); ++i)
            for (std::size_t j = 0; j < transitions[n][i].size(); ++j)
                if (transitions[n][i][j] != 0.0)
                    chain.rows[n][i].push_back({static_cast<int>(j), transitions[n][i][j]});
    }
    if (initial_law.empty() && !chain.states.empty())
        initial_law.assign(chain.states[0].size(), 0.0), initial_law[0] = 1.0;
    chain.initial_law = std::move(initial_law);
    return chain;
}

std::vector<double> FiniteMarkovChain::marginal(int n) const {
    return marginal_from(n, initial_law);
}

std::vector<double> FiniteMarkovChain::marginal_from(int n,
                                                     const std::vector<double>& law0) const {
    if (n < 0 || n > steps())
        throw Error("lattice.range", "chain step outside horizon");
    std::vector<double> law = law0;
    for (int m = 0; m < n; ++m) {
        std::vector<double> next(states[m + 1].size(), 0.0);
        for (std::size_t i = 0; i < rows[m].size(); ++i)
            for (const Entry& e : rows[m][i]) next[e.to] += law[i] * e.prob;
        double mass = pairwise_sum(next);
        if (std::abs(mass - 1.0) > 1e-8)
            throw Error("numeric.mass_drift",
                        "chain marginal mass drifted to " + std::to_string(mass) +
                            " at step " + std::to_string(m + 1));
        for (double& v : next) v /= mass;
        law = std::move(next);
    }
    return law;
}

void FiniteMarkovChain::validate(std::vector<Violation>& out,
                                 const std::string& prefix) const {
    if (states.empty() || states[0].empty()) {
        out.push_back({prefix + ".shape", "chain needs at least one state set"});
        return;
    }
    if (states.size() != rows.size() + 1)
        out.push_back({prefix + ".shape",
                       "need one transition block per step (states minus one)"});
    if (initial_law.size() != states[0].size())
        out.push_back({prefix + ".initial_law",
                       "initial law length must match the step-0 state count"});
    else {
        double mass = pairwise_sum(initial_law);
        if (std::abs(mass - 1.0) > 1e-12)
            out.push_back({prefix + ".initial_law", "initial law must sum to 1"});
        for (double w : initial_law)
            if (w < 0.0 || w > 1.0) {
                out.push_back({prefix + ".initial_law", "initial law entries must lie in [0,1]"});
                break;
            }
    }
    for (std::size_t n = 0; n + 1 < states.size() && n < rows.size(); ++n) {
        if (rows[n].size() != states[n].size()) {
            out.push_back({prefix + ".shape",
                           "step " + std::to_string(n) + " row count mismatch"});
            continue;
        }
        for (std::size_t i = 0; i < rows[n].size(); ++i) {
            double sum = 0.0;
            bool range_ok = true;
            for (const Entry& e : rows[n][i]) {
                sum += e.prob;
                if (e.prob < 0.0 || e.prob > 1.0) range_ok = false;
                if (e.to < 0 || e.to >= static_cast<int>(states[n + 1].size())) {
                    out.push_back({prefix + ".shape",
                                   "step " + std::to_string(n) + " row " + std::to_string(i) +
                                       " references a missing successor state"});
                    range_ok = true;  // already reported; skip the range message
                    sum = 1.0;
                    break;
                }
            }
            if (!range_ok)
                out.push_back({prefix + ".row_range",
                               "step " + std::to_string(n) + " row " + std::to_string(i) +
                                   " has entries outside [0,1]"});
            else if (std::abs(sum - 1.0) > 1e-14)
                out.push_back({prefix + ".row_sum",
                               "step " + std::to_string(n) + " row " + std::to_string(i) +
                                   " is not stochastic (sum " + std::to_string(sum) + ")"});
        }
    }
}

}  // namespace mfe
