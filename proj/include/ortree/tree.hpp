#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ortree/dataset.hpp"

namespace ortree {

// Heap layout over a complete depth-D template: node 1 is the root, node t
// has children 2t and 2t+1, nodes 1..2^D-1 are internal and the rest leaves.
// Internal nodes strictly above the deepest internal level are the ones the
// search branches on ("upper"); the deepest internal level ("frontier") is
// resolved in closed form once its sample sets are known.
struct TreeShape {
    int depth;

    explicit TreeShape(int d) : depth(d) {}

    int total() const { return (1 << (depth + 1)) - 1; }
    int internal_count() const { return (1 << depth) - 1; }
    int first_leaf() const { return 1 << depth; }
    int upper_count() const { return (1 << (depth - 1)) - 1; }
    int first_frontier() const { return 1 << (depth - 1); }
    bool is_leaf(int t) const { return t >= first_leaf(); }
    bool is_frontier(int t) const { return t >= first_frontier() && t < first_leaf(); }

    static int parent(int t) { return t / 2; }
    static int left(int t) { return 2 * t; }
    static int right(int t) { return 2 * t + 1; }
    static int node_depth(int t);
};

struct SplitNode {
    bool active = false;
    int feature = -1;
    double threshold = 0.0;
    int threshold_index = -1; // position of threshold in sorted_values[feature]
};

struct TreeStructure {
    int depth = 1;
    std::vector<SplitNode> split; // internal node t at split[t-1]
    std::vector<double> leaf;     // leaf node t at leaf[t - first_leaf]

    TreeShape shape() const { return TreeShape(depth); }
    const SplitNode& node(int t) const { return split[static_cast<std::size_t>(t - 1)]; }
    SplitNode& node(int t) { return split[static_cast<std::size_t>(t - 1)]; }
    double leaf_value(int t) const { return leaf[static_cast<std::size_t>(t - shape().first_leaf())]; }

    static TreeStructure all_inactive(int depth);
};

// Throws unless activity is monotone along root paths, features are in range,
// and (when a dataset is given) each threshold is a member of the split
// feature's distinct-value list.
void validate_structure(const TreeStructure& tree, const Dataset* ds = nullptr);

// Descends from the root: inactive internal nodes route right, active ones
// route left iff x[feature] < threshold. Returns the leaf node index.
int route(const TreeStructure& tree, const double* x);
int route(const TreeStructure& tree, const Frame& frame, std::size_t row);
int route(const TreeStructure& tree, const Dataset& ds, std::size_t row);

// Fills leaf predictions with training means; a leaf that receives no samples
// inherits the mean of the nearest ancestor whose subtree is non-empty.
void fit_leaf_means(TreeStructure& tree, const Dataset& ds);

struct Evaluation {
    std::vector<std::int32_t> leaf_of;
    std::vector<double> fitted;
    double sse = 0.0;
    int active_splits = 0;
    double objective = 0.0; // sse / baseline_sse + lambda * active_splits
};

Evaluation evaluate(const TreeStructure& tree, const Dataset& ds, double lambda);

std::vector<double> predict_frame(const TreeStructure& tree, const Frame& frame);
double rmse(const TreeStructure& tree, const Frame& frame);

// Depth of the deepest active split plus one; 0 for an all-inactive tree.
int realized_depth(const TreeStructure& tree);

// Total order used to canonicalize between equal-objective trees.
bool lex_less(const TreeStructure& a, const TreeStructure& b);

struct ModelProvenance {
    std::uint64_t dataset_digest = 0;
    std::uint64_t seed = 0;
    double split_fraction = 0.0;
    double gap = 0.0;
    std::string method; // "ort" or "cart"
};

struct Model {
    TreeStructure tree; // thresholds in scaled units
    double lambda = 0.0;
    std::string target;
    std::vector<std::string> features;
    std::vector<ScaleParam> scale;
    ModelProvenance provenance;
};

std::string model_to_json(const Model& m);
Model model_from_json(const std::string& text);
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

// Applies the stored scaling to raw-unit rows (columns matched by name) and
// routes them through the tree.
std::vector<double> predict_raw(const Model& m, const RawTable& table);

} // namespace ortree
