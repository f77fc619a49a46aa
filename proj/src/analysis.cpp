#include "ortree/analysis.hpp"

#include <stdexcept>

#include <gmpxx.h>

namespace ortree {

namespace {

void check_args(std::uint64_t n, std::uint64_t p, int depth) {
    if (depth < 1) throw std::runtime_error("depth must be at least 1");
    if (depth > 30) throw std::runtime_error("depth out of supported range [1, 30]");
    if (n < 2) throw std::runtime_error("sample count must be at least 2");
    if (p < 1) throw std::runtime_error("feature count must be at least 1");
}

// p^(2^levels_feature_exponent... shared core: feature exponent e, threshold
// levels 0..levels-1.
mpz_class bound_core(std::uint64_t n, std::uint64_t p, unsigned long feature_exp, int levels) {
    mpz_class result;
    mpz_class base_p(static_cast<unsigned long>(p));
    mpz_pow_ui(result.get_mpz_t(), base_p.get_mpz_t(), feature_exp);
    for (int t = 0; t < levels; ++t) {
        std::uint64_t level_n = n >> t;
        if (level_n <= 1) return 0; // factor would be non-positive
        mpz_class factor(static_cast<unsigned long>(level_n - 1));
        mpz_class powed;
        mpz_pow_ui(powed.get_mpz_t(), factor.get_mpz_t(), 1ul << t);
        result *= powed;
    }
    return result;
}

} // namespace

std::string struct_count_upper_bound(std::uint64_t n, std::uint64_t p, int depth) {
    check_args(n, p, depth);
    unsigned long internal = (1ul << depth) - 1;
    return bound_core(n, p, internal, depth).get_str();
}

std::string branchable_struct_bound(std::uint64_t n, std::uint64_t p, int depth) {
    check_args(n, p, depth);
    unsigned long upper = (1ul << (depth - 1)) - 1;
    return bound_core(n, p, upper, depth - 1).get_str();
}

bool branchable_bound_exceeds(std::uint64_t n, std::uint64_t p, int depth, std::uint64_t cap) {
    check_args(n, p, depth);
    unsigned long upper = (1ul << (depth - 1)) - 1;
    mpz_class b = bound_core(n, p, upper, depth - 1);
    mpz_class capz;
    mpz_import(capz.get_mpz_t(), 1, 1, sizeof cap, 0, 0, &cap);
    return b > capz;
}

} // namespace ortree
