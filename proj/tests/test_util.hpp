#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

// Minimal always-on test harness: failures print one [FAIL] line with the
// location and abort the binary with a nonzero exit code. Never compiled out.
namespace testutil {

inline int& failure_count() {
    static int count = 0;
    return count;
}

#define REQUIRE(cond)                                                        \
    do {                                                                     \
        if (!(cond)) {                                                       \
            std::fprintf(stderr, "[FAIL] %s:%d  %s\n", __FILE__, __LINE__,   \
                         #cond);                                             \
            std::exit(1);                                                    \
        }                                                                    \
    } while (0)

#define REQUIRE_MSG(cond, ...)                                               \
    do {                                                                     \
        if (!(cond)) {                                                       \
            std::fprintf(stderr, "[FAIL] %s:%d  %s  (", __FILE__, __LINE__,  \
                         #cond);                                             \
            std::fprintf(stderr, __VA_ARGS__);                               \
            std::fprintf(stderr, ")\n");                                     \
            std::exit(1);                                                    \
        }                                                                    \
    } while (0)

#define REQUIRE_CLOSE(a, b, tol)                                             \
    do {                                                                     \
        const double a_ = (a), b_ = (b), tol_ = (tol);                       \
        if (!(std::isfinite(a_) && std::isfinite(b_) &&                      \
              std::fabs(a_ - b_) <= tol_)) {                                 \
            std::fprintf(stderr,                                             \
                         "[FAIL] %s:%d  |%s - %s| <= %s  (%.17g vs %.17g, "  \
                         "diff %.3g)\n",                                     \
                         __FILE__, __LINE__, #a, #b, #tol, a_, b_,           \
                         std::fabs(a_ - b_));                                \
            std::exit(1);                                                    \
        }                                                                    \
    } while (0)

#define REQUIRE_THROWS_CODE(expr, expected_code)                             \
    do {                                                                     \
        bool caught_ = false;                                                \
        try {                                                                \
            (void)(expr);                                                    \
        } catch (const mfe::Error& e_) {                                     \
            caught_ = true;                                                  \
            if (e_.code() != (expected_code)) {                              \
                std::fprintf(stderr,                                         \
                             "[FAIL] %s:%d  %s threw code '%s', expected "   \
                             "'%s'\n",                                       \
                             __FILE__, __LINE__, #expr, e_.code().c_str(),   \
                             expected_code);                                 \
                std::exit(1);                                                \
            }                                                                \
        } catch (const std::exception& e_) {                                 \
            std::fprintf(stderr,                                             \
                         "[FAIL] %s:%d  %s threw non-mfe exception: %s\n",   \
                         __FILE__, __LINE__, #expr, e_.what());              \
            std::exit(1);                                                    \
        }                                                                    \
        if (!caught_) {                                                      \
            std::fprintf(stderr, "[FAIL] %s:%d  %s did not throw\n",         \
                         __FILE__, __LINE__, #expr);                         \
            std::exit(1);                                                    \
        }                                                                    \
    } while (0)

// Directory holding the bundled scenario files, injected by the build.
inline std::string scenario_path(const std::string& name) {
#ifdef MFE_SCENARIO_DIR
    return std::string(MFE_SCENARIO_DIR) + "/" + name;
#else
    return "scenarios/" + name;
#endif
}

// Binomial(n, p) pmf evaluated through lgamma, used as an independent
// reference for chain marginals and risk-neutral laws.
inline double binomial_pmf(int n, int k, double p) {
    const double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                        std::lgamma(n - k + 1.0);
    return std::exp(logc + k * std::log(p) + (n - k) * std::log1p(-p));
}

inline void pass(const char* name) { std::printf("[ok] %s\n", name); }

}  // namespace testutil
