#pragma once

#include <cstdint>
#include <vector>

#include "mfe/common.hpp"

namespace mfe {

// Geometry of the recombining stock tree plus the risk-free account.
//
// Per step the stock multiplies by u_tilde (up) or d_tilde (down); cash grows
// by beta = exp(r*dt). The solver works with the *excess* one-period returns
// u = u_tilde - beta > 0 and d = d_tilde - beta < 0.
struct LatticeSpec {
    int N = 1;             // number of periods
    double T = 1.0;        // horizon in years
    double r = 0.0;        // risk-free rate p.a.
    double s0 = 1.0;       // initial stock price
    double u_tilde = 1.1;  // up gross return
    double d_tilde = 0.9;  // down gross return

    double dt() const { return T / static_cast<double>(N); }
    double beta() const { return std::exp(r * dt()); }
    double u() const { return u_tilde - beta(); }
    double d() const { return d_tilde - beta(); }

    // sigma-parameterized tree: u_tilde = exp(sigma*sqrt(dt)) = 1/d_tilde.
    static LatticeSpec from_vol(int N, double T, double r, double s0, double sigma);
    static LatticeSpec from_factors(int N, double T, double r, double s0,
                                    double u_tilde, double d_tilde);

    // (beta - d_tilde)/(u_tilde - d_tilde) = (-d)/(u-d).
    // Throws Error("lattice.order") when the tree does not satisfy
    // 0 < d_tilde < beta < u_tilde.
    double risk_neutral_prob() const;

    // s0 * u_tilde^k * d_tilde^(n-k). Computed via pow (not sequential
    // products) so recombination is bit-exact across paths.
    // Throws Error("lattice.range") unless 0 <= k <= n <= N.
    double node_price(int n, int k) const;

    // Collect invariant violations (does not throw).
    void validate(std::vector<Violation>& out) const;
};

// A stock-price path: `step` moves encoded in the low bits of `bits`, most
// significant bit = first move, 1 = up. Paths at a given step are ordered
// lexicographically with down < up, so index 0 is all-down and index 2^n - 1
// is all-up.
struct PathIndex {
    int step = 0;
    std::uint64_t bits = 0;

    int up_count() const {
#if defined(__GNUC__) || defined(__clang__)
        return __builtin_popcountll(bits);
#else
        int c = 0;
        for (std::uint64_t b = bits; b; b >>= 1) c += static_cast<int>(b & 1);
        return c;
#endif
    }

    // Move at period j (1-based), true = up.
    bool up_at(int j) const { return (bits >> (step - j)) & 1ULL; }

    PathIndex extended(bool up) const {
        return PathIndex{step + 1, (bits << 1) | (up ? 1ULL : 0ULL)};
    }
};

// All 2^n paths at step n in lexicographic order (dd, du, ud, uu for n=2).
// Throws Error("path.capacity") when n exceeds path_cap.
std::vector<PathIndex> enumerate_stock_paths(const LatticeSpec& spec, int n,
                                             int path_cap = 16);

// A scalar finite Markov chain on a per-step state grid. states[n] holds the
// reachable values at step n; rows[n][i] holds the sparse transition row from
// state i at step n to states at step n+1. An initial law over states[0]
// supports a dispersed start (default: delta mass on the single start state).
struct FiniteMarkovChain {
    struct Entry {
        int to;
        double prob;
    };

    std::vector<std::vector<double>> states;            // size N+1
    std::vector<std::vector<std::vector<Entry>>> rows;  // size N
    std::vector<double> initial_law;                    // over states[0]

    int steps() const { return static_cast<int>(rows.size()); }
    int state_count(int n) const { return static_cast<int>(states[n].size()); }

    // Additive recombining binomial: values y0 + (2j-n)*sigma*sqrt(dt) at step
    // n, up-probability p. A zero sigma collapses to a single-state chain.
    static FiniteMarkovChain additive_binomial(double y0, double sigma, double p,
                                               double dt, int N);

    // Multiplicative recombining binomial: values y0 * exp((2j-n)*sigma*sqrt(dt)),
    // i.e. up factor exp(sigma*sqrt(dt)) and down factor its inverse.
    static FiniteMarkovChain multiplicative_binomial(double y0, double sigma,
                                                     double p, double dt, int N);

    // Dense constructor for explicitly specified chains; zero entries are
    // dropped from the sparse rows.
    static FiniteMarkovChain from_dense(std::vector<std::vector<double>> states,
                                        const std::vector<std::vector<std::vector<double>>>& transitions,
                                        std::vector<double> initial_law = {});

    // Marginal law at step n pushed forward from the initial law. Renormalized
    // each step; drift beyond 1e-8 from unit mass raises Error("numeric.mass_drift").
    std::vector<double> marginal(int n) const;

    // Marginal at step n conditional on a specific initial law (used by the
    // joint (z0, type) cross-section).
    std::vector<double> marginal_from(int n, const std::vector<double>& law0) const;

    void validate(std::vector<Violation>& out, const std::string& prefix) const;
};

}  // namespace mfe
