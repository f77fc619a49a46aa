#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ortree/dataset.hpp"
#include "ortree/greedy.hpp"
#include "ortree/tree.hpp"

namespace tu {

using namespace ortree;

inline bool close_rel(double a, double b, double tol) {
    double scale = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) <= tol * scale;
}

struct Rng {
    std::mt19937_64 g;
    explicit Rng(std::uint64_t seed) : g(seed) {}
    double uni(double a, double b) {
        std::uniform_real_distribution<double> d(a, b);
        return d(g);
    }
    int uni_int(int a, int b) {
        std::uniform_int_distribution<int> d(a, b);
        return d(g);
    }
};

inline RawTable make_table(std::vector<std::string> columns,
                           const std::vector<std::vector<double>>& rows) {
    return table_from_rows(std::move(columns), rows);
}

// Columns given feature-major plus a target vector; names auto-generated.
inline Dataset make_dataset(const std::vector<std::vector<double>>& feature_cols,
                            const std::vector<double>& y) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < feature_cols.size(); ++j) names.push_back("f" + std::to_string(j));
    names.push_back("y");
    std::vector<std::vector<double>> rows(y.size(), std::vector<double>(feature_cols.size() + 1));
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t j = 0; j < feature_cols.size(); ++j) rows[i][j] = feature_cols[j][i];
        rows[i][feature_cols.size()] = y[i];
    }
    return preprocess(make_table(names, rows), "y");
}

// Features drawn from small per-feature pools of distinct levels so the
// brute-force oracle stays cheap; targets continuous so exact objective ties
// across different candidates have probability zero.
inline Dataset random_dataset(Rng& rng, std::size_t n, std::size_t p, int max_levels,
                              double y_lo = 0.0, double y_hi = 10.0) {
    std::vector<std::vector<double>> cols(p, std::vector<double>(n));
    for (std::size_t j = 0; j < p; ++j) {
        int levels = rng.uni_int(2, std::max(2, max_levels));
        std::set<double> pool;
        while (static_cast<int>(pool.size()) < levels) pool.insert(rng.uni(0.0, 1.0));
        std::vector<double> vals(pool.begin(), pool.end());
        for (std::size_t i = 0; i < n; ++i)
            cols[j][i] = vals[static_cast<std::size_t>(rng.uni_int(0, levels - 1))];
    }
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = rng.uni(y_lo, y_hi);
    return make_dataset(cols, y);
}

inline std::vector<double> sample_row(const Dataset& ds, std::size_t i) {
    std::vector<double> x(ds.p);
    for (std::size_t j = 0; j < ds.p; ++j) x[j] = ds.cols[j][i];
    return x;
}

// Independent router: checks every leaf's ancestor constraints and demands
// exactly one leaf accepts the row.
inline int leaf_validity_route(const TreeStructure& tree, const std::vector<double>& x) {
    TreeShape sh = tree.shape();
    int found = -1;
    for (int leaf = sh.first_leaf(); leaf <= sh.total(); ++leaf) {
        bool ok = true;
        for (int c = leaf, a = TreeShape::parent(leaf); a >= 1 && ok;
             c = a, a = TreeShape::parent(a)) {
            bool is_left = (c == TreeShape::left(a));
            const SplitNode& nd = tree.node(a);
            if (nd.active)
                ok = is_left ? (x[static_cast<std::size_t>(nd.feature)] < nd.threshold)
                             : (x[static_cast<std::size_t>(nd.feature)] >= nd.threshold);
            else
                ok = !is_left;
        }
        if (ok) {
            if (found >= 0) return -1; // two leaves accepted: invalid
            found = leaf;
        }
    }
    return found;
}

inline double direct_sse(const std::vector<double>& ys) {
    if (ys.empty()) return 0.0;
    double m = 0.0;
    for (double v : ys) m += v;
    m /= static_cast<double>(ys.size());
    double s = 0.0;
    for (double v : ys) s += (v - m) * (v - m);
    return s;
}

inline double subset_sse_direct(const Dataset& ds, const std::vector<std::uint32_t>& S) {
    std::vector<double> ys;
    for (auto i : S) ys.push_back(ds.y[i]);
    return direct_sse(ys);
}

// Per-sample accumulation objective oracle using the leaf-validity router.
inline double naive_objective(const TreeStructure& tree, const Dataset& ds, double lambda) {
    double sse = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) {
        int leaf = leaf_validity_route(tree, sample_row(ds, i));
        double c = tree.leaf_value(leaf);
        sse += (ds.y[i] - c) * (ds.y[i] - c);
    }
    int active = 0;
    for (const auto& nd : tree.split) active += nd.active ? 1 : 0;
    return sse / ds.baseline_sse + lambda * active;
}

struct NaiveSplit {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    int threshold_index = -1;
    double gain = 0.0;
    std::size_t left_count = 0;
    std::size_t right_count = 0;
};

// Exhaustive double-loop split search with the documented tie-break.
inline NaiveSplit naive_best_split(const Dataset& ds, const std::vector<std::uint32_t>& S,
                                   const std::vector<int>& features) {
    NaiveSplit best;
    if (S.size() < 2) return best;
    double parent = subset_sse_direct(ds, S);
    for (int j : features) {
        std::set<double> values;
        for (auto i : S) values.insert(ds.cols[static_cast<std::size_t>(j)][i]);
        bool first = true;
        for (double v : values) {
            if (first) { // the minimum separates nothing
                first = false;
                continue;
            }
            std::vector<double> yl, yr;
            for (auto i : S)
                (ds.cols[static_cast<std::size_t>(j)][i] < v ? yl : yr).push_back(ds.y[i]);
            double gain = parent - direct_sse(yl) - direct_sse(yr);
            if (!best.found || gain > best.gain) {
                const auto& sv = ds.sorted_values[static_cast<std::size_t>(j)];
                best.found = true;
                best.feature = j;
                best.threshold = v;
                best.threshold_index =
                    static_cast<int>(std::lower_bound(sv.begin(), sv.end(), v) - sv.begin());
                best.gain = gain;
                best.left_count = yl.size();
                best.right_count = yr.size();
            }
        }
    }
    if (best.found && !(best.gain > 0.0)) best.found = false;
    return best;
}

inline std::vector<std::uint32_t> all_samples(const Dataset& ds) {
    std::vector<std::uint32_t> S(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) S[i] = static_cast<std::uint32_t>(i);
    return S;
}

// Random valid structure: activity decays with depth and respects the
// parent-active constraint; thresholds are real members of the value lists.
inline TreeStructure random_tree(Rng& rng, const Dataset& ds, int depth) {
    TreeStructure tree = TreeStructure::all_inactive(depth);
    TreeShape sh(depth);
    auto usable = ds.usable_features();
    if (usable.empty()) return tree;
    for (int t = 1; t <= sh.internal_count(); ++t) {
        bool parent_ok = t == 1 || tree.node(TreeShape::parent(t)).active;
        if (!parent_ok) continue;
        if (rng.uni(0.0, 1.0) > 0.7) continue;
        int j = usable[static_cast<std::size_t>(rng.uni_int(0, static_cast<int>(usable.size()) - 1))];
        const auto& sv = ds.sorted_values[static_cast<std::size_t>(j)];
        int k = rng.uni_int(0, static_cast<int>(sv.size()) - 1);
        SplitNode& nd = tree.node(t);
        nd.active = true;
        nd.feature = j;
        nd.threshold = sv[static_cast<std::size_t>(k)];
        nd.threshold_index = k;
    }
    fit_leaf_means(tree, ds);
    return tree;
}

struct TempDir {
    std::string path;
    TempDir() {
        char buf[] = "/tmp/ortree_test_XXXXXX";
        path = mkdtemp(buf);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return path + "/" + name; }
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

struct CaptureStream {
    std::ostream& stream;
    std::ostringstream buffer;
    std::streambuf* saved;
    explicit CaptureStream(std::ostream& s) : stream(s) { saved = s.rdbuf(buffer.rdbuf()); }
    ~CaptureStream() { stream.rdbuf(saved); }
    std::string text() const { return buffer.str(); }
};

inline std::string toy_csv(Rng& rng, std::size_t n = 60) {
    std::ostringstream oss;
    oss << "a,b,c,y\n";
    for (std::size_t i = 0; i < n; ++i) {
        double a = rng.uni(0.0, 1.0), b = rng.uni(0.0, 1.0), c = rng.uni(0.0, 1.0);
        double y = (a < 0.4 ? 3.0 : -1.0) + (b < 0.6 ? 2.0 : 0.0) + rng.uni(-0.3, 0.3);
        oss << a << "," << b << "," << c << "," << y << "\n";
    }
    return oss.str();
}

} // namespace tu
