#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ortree/dataset.hpp"
#include "ortree/greedy.hpp"
#include "ortree/region.hpp"
#include "ortree/tree.hpp"

namespace ortree {

struct SolverConfig {
    int depth = 2;
    double lambda = 0.0005;
    double rel_gap = 1e-4; // negative disables
    double abs_gap = -1.0; // negative disables
    double time_limit_s = 14400.0;
    std::uint64_t node_limit = std::numeric_limits<std::uint64_t>::max();
    int workers = 1;
    bool warm_start = true;
    AcceptRule rule = AcceptRule::consistent;
    int upper_stride = 1; // completions every stride-th expansion; bounds always
    std::uint64_t seed = 0;            // provenance passthrough
    std::uint64_t dataset_digest = 0;  // provenance passthrough

    void validate() const;
};

enum class StopReason { gap, time, nodes, exhausted };

const char* stop_reason_name(StopReason r);

struct TracePoint {
    double time_s = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double gap = 0.0;
    std::uint64_t open = 0;
};

struct SolverReport {
    TreeStructure tree;
    double alpha = 0.0; // incumbent objective
    double beta = 0.0;  // certified lower bound
    double gap = 0.0;   // (alpha - beta) / max(alpha, tiny)
    StopReason reason = StopReason::exhausted;
    std::uint64_t explored = 0;
    std::uint64_t pruned = 0;
    std::uint64_t fathomed = 0;
    double wall_time_s = 0.0;
    std::vector<TracePoint> trace;
};

// Certified lower bound over every structure in the region: the price of the
// splits already fixed active, plus the exact resolved value of each
// deepest-level node whose sample set is already pinned; samples whose
// routing is still open contribute zero.
double lower_bound(const Region& r, const Dataset& ds, const SolverConfig& cfg,
                   SplitScratch& scratch);

struct Completion {
    TreeStructure tree;
    double objective = 0.0;
};

// Greedy feasible completion inside the region's box; its exact objective is
// a valid upper bound. For a terminal region the value equals lower_bound.
Completion upper_bound(const Region& r, const Dataset& ds, const SolverConfig& cfg,
                       SplitScratch& scratch);

SolverReport solve(const Dataset& ds, const SolverConfig& cfg);

struct OracleResult {
    double objective = 0.0;
    TreeStructure tree;
    std::uint64_t structures = 0; // distinct upper-level assignments enumerated
};

// Exhaustive reference search: enumerates every distinct structure over the
// upper levels (separating thresholds only), resolves the deepest internal
// level in closed form, and returns the minimum. Guarded by the exact count
// bound so it cannot be launched on instances it would never finish.
OracleResult verify_oracle(const Dataset& ds, const SolverConfig& cfg,
                           std::uint64_t cap = 2000000);

} // namespace ortree
