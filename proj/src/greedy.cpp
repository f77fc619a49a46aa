#include "ortree/greedy.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ortree {

bool accept_split(double gain, std::size_t node_size, double lambda, double baseline_sse,
                  AcceptRule rule) {
    if (rule == AcceptRule::consistent) return gain / baseline_sse > lambda;
    return gain > lambda * static_cast<double>(node_size) / baseline_sse;
}

namespace {

struct GroupStats {
    std::size_t cnt = 0;
    double sum = 0.0;
    double sum2 = 0.0;

    void add(double y) {
        ++cnt;
        sum += y;
        sum2 += y * y;
    }
    double sse() const { return cnt == 0 ? 0.0 : sum2 - sum * sum / static_cast<double>(cnt); }
};

class Marked {
  public:
    Marked(SplitScratch& scratch, std::span<const std::uint32_t> samples, std::size_t n)
        : mark_(scratch.mark), samples_(samples) {
        scratch.ensure(n);
        for (std::uint32_t i : samples_) mark_[i] = 1;
    }
    ~Marked() {
        for (std::uint32_t i : samples_) mark_[i] = 0;
    }
    bool operator()(std::uint32_t i) const { return mark_[i] != 0; }

  private:
    std::vector<std::uint8_t>& mark_;
    std::span<const std::uint32_t> samples_;
};

int value_index(const Dataset& ds, int feature, double value) {
    const auto& vals = ds.sorted_values[static_cast<std::size_t>(feature)];
    auto it = std::lower_bound(vals.begin(), vals.end(), value);
    return static_cast<int>(it - vals.begin());
}

} // namespace

double subset_sse(const Dataset& ds, std::span<const std::uint32_t> samples) {
    GroupStats g;
    for (std::uint32_t i : samples) g.add(ds.y[i]);
    return g.sse();
}

std::optional<SplitCandidate> best_depth1_split(const Dataset& ds,
                                                std::span<const std::uint32_t> samples,
                                                std::span<const int> features,
                                                SplitScratch& scratch) {
    if (samples.size() < 2 || features.empty()) return std::nullopt;
    Marked in_set(scratch, samples, ds.n);

    GroupStats total;
    for (std::uint32_t i : samples) total.add(ds.y[i]);
    double sse_total = total.sse();

    SplitCandidate best;
    for (int j : features) {
        const auto& ord = ds.order[static_cast<std::size_t>(j)];
        const auto& col = ds.cols[static_cast<std::size_t>(j)];
        GroupStats left;
        bool seen = false;
        double run_value = 0.0;
        for (std::uint32_t i : ord) {
            if (!in_set(i)) continue;
            double v = col[i];
            if (!seen) {
                seen = true;
                run_value = v;
            } else if (v != run_value) {
                // Threshold v puts everything accumulated so far on the left.
                double gain = sse_total - left.sse() - (total.sum2 - left.sum2 -
                                                        (total.sum - left.sum) *
                                                            (total.sum - left.sum) /
                                                            static_cast<double>(total.cnt - left.cnt));
                if (gain > best.gain) {
                    best.feature = j;
                    best.threshold = v;
                    best.gain = gain;
                    best.left_count = left.cnt;
                    best.right_count = total.cnt - left.cnt;
                }
                run_value = v;
            }
            left.add(ds.y[i]);
        }
    }
    if (best.feature < 0) return std::nullopt;
    best.threshold_index = value_index(ds, best.feature, best.threshold);
    return best;
}

std::optional<SplitCandidate> best_depth1_split_windowed(const Dataset& ds,
                                                         std::span<const std::uint32_t> samples,
                                                         int feature, int lo, int hi,
                                                         SplitScratch& scratch) {
    const auto& vals = ds.sorted_values[static_cast<std::size_t>(feature)];
    if (lo < 0 || hi >= static_cast<int>(vals.size()) || lo > hi)
        throw std::runtime_error("threshold window out of range");
    if (samples.size() < 2) return std::nullopt;
    Marked in_set(scratch, samples, ds.n);

    GroupStats total;
    for (std::uint32_t i : samples) total.add(ds.y[i]);
    double sse_total = total.sse();

    const auto& ord = ds.order[static_cast<std::size_t>(feature)];
    const auto& col = ds.cols[static_cast<std::size_t>(feature)];

    SplitCandidate best;
    GroupStats left;
    std::size_t oi = 0;
    for (int k = lo; k <= hi; ++k) {
        double v = vals[static_cast<std::size_t>(k)];
        while (oi < ord.size()) {
            std::uint32_t i = ord[oi];
            if (!in_set(i)) {
                ++oi;
                continue;
            }
            if (col[i] < v) {
                left.add(ds.y[i]);
                ++oi;
            } else {
                break;
            }
        }
        if (left.cnt == 0 || left.cnt == total.cnt) continue;
        double right_sum = total.sum - left.sum;
        double right_sse =
            total.sum2 - left.sum2 - right_sum * right_sum / static_cast<double>(total.cnt - left.cnt);
        double gain = sse_total - left.sse() - right_sse;
        if (gain > best.gain) {
            best.feature = feature;
            best.threshold = v;
            best.threshold_index = k;
            best.gain = gain;
            best.left_count = left.cnt;
            best.right_count = total.cnt - left.cnt;
        }
    }
    if (best.feature < 0) return std::nullopt;
    return best;
}

FrontierChoice resolve_frontier(const Dataset& ds, std::span<const std::uint32_t> samples,
                                double lambda, AcceptRule rule, SplitScratch& scratch) {
    FrontierChoice out;
    if (samples.empty()) return out;
    out.sse = subset_sse(ds, samples);
    auto usable = ds.usable_features();
    auto cand = best_depth1_split(ds, samples, usable, scratch);
    if (cand && accept_split(cand->gain, samples.size(), lambda, ds.baseline_sse, rule)) {
        out.split = true;
        out.candidate = *cand;
        out.value = (out.sse - cand->gain) / ds.baseline_sse + lambda;
    } else {
        out.value = out.sse / ds.baseline_sse;
    }
    return out;
}

namespace {

void grow(TreeStructure& tree, const Dataset& ds, int t, std::vector<std::uint32_t>& samples,
          double lambda, AcceptRule rule, std::span<const int> usable, SplitScratch& scratch) {
    TreeShape sh = tree.shape();
    if (sh.is_leaf(t)) return;
    auto cand = best_depth1_split(ds, samples, usable, scratch);
    if (!cand || !accept_split(cand->gain, samples.size(), lambda, ds.baseline_sse, rule)) return;

    SplitNode& nd = tree.node(t);
    nd.active = true;
    nd.feature = cand->feature;
    nd.threshold = cand->threshold;
    nd.threshold_index = cand->threshold_index;

    std::vector<std::uint32_t> left, right;
    left.reserve(cand->left_count);
    right.reserve(cand->right_count);
    const auto& col = ds.cols[static_cast<std::size_t>(cand->feature)];
    for (std::uint32_t i : samples)
        (col[i] < cand->threshold ? left : right).push_back(i);

    grow(tree, ds, TreeShape::left(t), left, lambda, rule, usable, scratch);
    grow(tree, ds, TreeShape::right(t), right, lambda, rule, usable, scratch);
}

} // namespace

TreeStructure fit_cart(const Dataset& ds, int depth, double lambda, AcceptRule rule) {
    if (depth < 0 || depth > 20)
        throw std::runtime_error("tree depth must lie in [0, 20], got " + std::to_string(depth));
    TreeStructure tree = TreeStructure::all_inactive(std::max(depth, 1));
    if (depth >= 1) {
        std::vector<std::uint32_t> samples(ds.n);
        std::iota(samples.begin(), samples.end(), 0u);
        auto usable = ds.usable_features();
        SplitScratch scratch;
        grow(tree, ds, 1, samples, lambda, rule, usable, scratch);
    }
    fit_leaf_means(tree, ds);
    return tree;
}

} // namespace ortree
