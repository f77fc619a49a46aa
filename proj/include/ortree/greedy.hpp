#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ortree/dataset.hpp"
#include "ortree/tree.hpp"

namespace ortree {

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    int threshold_index = -1; // position in sorted_values[feature]
    double gain = 0.0;        // parent SSE minus summed child SSE
    std::size_t left_count = 0;
    std::size_t right_count = 0;
};

enum class AcceptRule {
    consistent, // gain / baseline_sse > lambda
    literal,    // gain > lambda * node_size / baseline_sse
};

// Strict comparison on purpose: a split that only matches the price is
// rejected, keeping the sparser tree.
bool accept_split(double gain, std::size_t node_size, double lambda, double baseline_sse,
                  AcceptRule rule = AcceptRule::consistent);

// Reusable per-thread buffers for subset sweeps.
struct SplitScratch {
    std::vector<std::uint8_t> mark;
    void ensure(std::size_t n) {
        if (mark.size() < n) mark.assign(n, 0);
    }
};

// SSE via the sum/sum-of-squares identity, accumulated in sample-index order.
double subset_sse(const Dataset& ds, std::span<const std::uint32_t> samples);

// Best single split of the sample subset over the allowed features; candidate
// thresholds are the subset's own distinct values (a threshold equal to the
// subset minimum separates nothing and is skipped). Ties break toward the
// smallest feature index, then the smallest threshold. Returns nullopt when
// no candidate achieves positive gain.
std::optional<SplitCandidate> best_depth1_split(const Dataset& ds,
                                                std::span<const std::uint32_t> samples,
                                                std::span<const int> features,
                                                SplitScratch& scratch);

// Same search for one feature with thresholds restricted to
// sorted_values[feature][lo..hi]; values absent from the subset are legal
// thresholds too, as long as both sides stay non-empty.
std::optional<SplitCandidate> best_depth1_split_windowed(const Dataset& ds,
                                                         std::span<const std::uint32_t> samples,
                                                         int feature, int lo, int hi,
                                                         SplitScratch& scratch);

struct FrontierChoice {
    double sse = 0.0; // pooled SSE of the node's samples
    bool split = false;
    SplitCandidate candidate; // meaningful only when split is true
    double value = 0.0;       // objective contribution: loss/baseline, plus lambda if split
};

// Exact resolution of a deepest-internal-level node once its sample set is
// known: pooled leaf versus best single split, decided by the accept rule.
// Under the consistent rule this equals min(sse, sse - gain + lambda*baseline)/baseline
// with the leaf preferred on ties.
FrontierChoice resolve_frontier(const Dataset& ds, std::span<const std::uint32_t> samples,
                                double lambda, AcceptRule rule, SplitScratch& scratch);

// Top-down greedy tree of the given depth; each node takes its best split iff
// accept_split passes, then recurses. Leaves get training means.
TreeStructure fit_cart(const Dataset& ds, int depth, double lambda,
                       AcceptRule rule = AcceptRule::consistent);

} // namespace ortree
