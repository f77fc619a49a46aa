#include "ortree/region.hpp"

#include <algorithm>
#include <stdexcept>

namespace ortree {

namespace {

// Window becomes meaningful once the node is active with a single feature.
void ensure_window(NodeDomain& nd, const Dataset& ds) {
    if (nd.d == DState::fixed1 && nd.feature_fixed() && nd.win_lo < 0) {
        nd.win_lo = 0;
        nd.win_hi =
            static_cast<int>(ds.sorted_values[static_cast<std::size_t>(nd.features[0])].size()) - 1;
    }
}

void force_subtree_inactive(Region& r, int t, int upper_count) {
    if (t > upper_count) return;
    r.node(t).d = DState::fixed0;
    force_subtree_inactive(r, TreeShape::left(t), upper_count);
    force_subtree_inactive(r, TreeShape::right(t), upper_count);
}

} // namespace

Region root_region(const Dataset& ds, int depth) {
    if (depth < 1 || depth > 20)
        throw std::runtime_error("tree depth must lie in [1, 20], got " + std::to_string(depth));
    Region r;
    r.depth = depth;
    NodeDomain fresh;
    fresh.features = ds.usable_features();
    r.nodes.assign(static_cast<std::size_t>(TreeShape(depth).upper_count()), fresh);
    return r;
}

bool region_terminal(const Region& r) {
    for (const NodeDomain& nd : r.nodes)
        if (!nd.resolved()) return false;
    return true;
}

bool frontier_determined(const Region& r, int frontier_node) {
    for (int u = TreeShape::parent(frontier_node); u >= 1; u = TreeShape::parent(u))
        if (!r.node(u).resolved()) return false;
    return true;
}

BranchDecision next_branch(const Region& r, const Dataset& ds) {
    int upper = static_cast<int>(r.nodes.size());

    for (int t = 1; t <= upper; ++t)
        if (r.node(t).d == DState::free_) return {BranchKind::on_d, t, -1, -1};

    for (int t = 1; t <= upper; ++t) {
        const NodeDomain& nd = r.node(t);
        if (nd.d == DState::fixed1 && nd.features.size() > 1)
            return {BranchKind::on_a, t, nd.features.front(), -1};
    }

    int best_node = 0;
    double best_score = -1.0;
    for (int t = 1; t <= upper; ++t) {
        const NodeDomain& nd = r.node(t);
        if (nd.d != DState::fixed1 || !nd.feature_fixed() || nd.win_lo >= nd.win_hi) continue;
        const auto& vals = ds.sorted_values[static_cast<std::size_t>(nd.features[0])];
        double width = vals[static_cast<std::size_t>(nd.win_hi)] -
                       vals[static_cast<std::size_t>(nd.win_lo)];
        double score = width / static_cast<double>(1 << TreeShape::node_depth(t));
        if (score > best_score) {
            best_score = score;
            best_node = t;
        }
    }
    if (best_node > 0) {
        const NodeDomain& nd = r.node(best_node);
        return {BranchKind::on_b, best_node, -1, (nd.win_lo + nd.win_hi) / 2};
    }
    return {};
}

std::vector<Region> apply_branch(const Region& r, const BranchDecision& dec, const Dataset& ds) {
    std::vector<Region> out;
    int upper = static_cast<int>(r.nodes.size());
    switch (dec.kind) {
    case BranchKind::on_d: {
        Region off = r;
        force_subtree_inactive(off, dec.node, upper);
        out.push_back(std::move(off));

        Region on = r;
        NodeDomain& nd = on.node(dec.node);
        nd.d = DState::fixed1;
        if (!nd.features.empty()) {
            ensure_window(nd, ds);
            out.push_back(std::move(on));
        } // no usable feature: an active node is impossible, child dropped
        break;
    }
    case BranchKind::on_a: {
        Region pick = r;
        NodeDomain& nd = pick.node(dec.node);
        nd.features.assign(1, dec.feature);
        ensure_window(nd, ds);
        out.push_back(std::move(pick));

        Region rest = r;
        NodeDomain& rd = rest.node(dec.node);
        rd.features.erase(std::remove(rd.features.begin(), rd.features.end(), dec.feature),
                          rd.features.end());
        if (!rd.features.empty()) {
            ensure_window(rd, ds);
            out.push_back(std::move(rest));
        }
        break;
    }
    case BranchKind::on_b: {
        const NodeDomain& nd = r.node(dec.node);
        if (dec.pivot < nd.win_lo || dec.pivot >= nd.win_hi)
            throw std::runtime_error("threshold pivot outside the open window");
        Region low = r;
        low.node(dec.node).win_hi = dec.pivot;
        out.push_back(std::move(low));
        Region high = r;
        high.node(dec.node).win_lo = dec.pivot + 1;
        out.push_back(std::move(high));
        break;
    }
    case BranchKind::none:
        throw std::runtime_error("cannot branch a terminal region");
    }
    return out;
}

} // namespace ortree
