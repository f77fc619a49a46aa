#pragma once

#include <cstdint>
#include <vector>

#include "ortree/dataset.hpp"
#include "ortree/tree.hpp"

namespace ortree {

enum class DState : std::uint8_t { free_, fixed0, fixed1 };

// Remaining choices for one upper internal node: its activity, its candidate
// split features, and (once the feature is pinned) an index window into that
// feature's distinct-value list.
struct NodeDomain {
    DState d = DState::free_;
    std::vector<int> features; // ascending
    int win_lo = -1;
    int win_hi = -1;

    bool feature_fixed() const { return features.size() == 1; }
    bool resolved() const {
        if (d == DState::fixed0) return true;
        if (d == DState::free_) return false;
        return feature_fixed() && win_lo >= 0 && win_lo == win_hi;
    }
};

// A box of tree structures: one domain per upper node. The deepest internal
// level carries no domain; it is resolved in closed form.
struct Region {
    int depth = 1;
    std::vector<NodeDomain> nodes; // upper node t at nodes[t-1]
    double beta = 0.0;             // cached lower bound
    double alpha = 0.0;            // cached completion objective
    std::uint64_t seq = 0;         // creation order, used as FIFO tie-break

    NodeDomain& node(int t) { return nodes[static_cast<std::size_t>(t - 1)]; }
    const NodeDomain& node(int t) const { return nodes[static_cast<std::size_t>(t - 1)]; }
};

// Everything free; constant features excluded from every domain.
Region root_region(const Dataset& ds, int depth);

bool region_terminal(const Region& r);

// True iff every ancestor of the given deepest-level internal node is fully
// resolved, so the node's sample set is the same in every completion.
bool frontier_determined(const Region& r, int frontier_node);

enum class BranchKind { none, on_d, on_a, on_b };

struct BranchDecision {
    BranchKind kind = BranchKind::none;
    int node = 0;
    int feature = -1; // on_a: split-off feature
    int pivot = -1;   // on_b: median threshold index
};

// Priority: first free activity (node order), else first active node with an
// open feature choice (smallest feature split off), else the widest threshold
// window weighted by 2^-depth (ties toward the smaller node index).
BranchDecision next_branch(const Region& r, const Dataset& ds);

// The children partition the region exactly; an infeasible child (emptied
// feature set) is dropped. on_d fixed0 forces every descendant inactive.
std::vector<Region> apply_branch(const Region& r, const BranchDecision& dec, const Dataset& ds);

} // namespace ortree
