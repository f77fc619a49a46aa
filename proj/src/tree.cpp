#include "ortree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ortree {

using ordered_json = nlohmann::ordered_json;

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }
} // namespace

int TreeShape::node_depth(int t) {
    int d = 0;
    while (t > 1) {
        t /= 2;
        ++d;
    }
    return d;
}

TreeStructure TreeStructure::all_inactive(int depth) {
    if (depth < 1) fail("tree depth must be at least 1");
    TreeStructure t;
    t.depth = depth;
    t.split.assign(static_cast<std::size_t>(TreeShape(depth).internal_count()), SplitNode{});
    t.leaf.assign(static_cast<std::size_t>(1) << depth, 0.0);
    return t;
}

void validate_structure(const TreeStructure& tree, const Dataset* ds) {
    TreeShape sh = tree.shape();
    if (tree.depth < 1) fail("tree depth must be at least 1");
    if (tree.split.size() != static_cast<std::size_t>(sh.internal_count()) ||
        tree.leaf.size() != static_cast<std::size_t>(sh.first_leaf()))
        fail("tree node arrays do not match the declared depth");
    for (int t = 1; t <= sh.internal_count(); ++t) {
        const SplitNode& nd = tree.node(t);
        if (!nd.active) continue;
        if (t > 1 && !tree.node(TreeShape::parent(t)).active)
            fail("active split under an inactive parent at node " + std::to_string(t));
        if (nd.feature < 0 || (ds && nd.feature >= static_cast<int>(ds->p)))
            fail("split feature out of range at node " + std::to_string(t));
        if (ds) {
            const auto& vals = ds->sorted_values[static_cast<std::size_t>(nd.feature)];
            if (!std::binary_search(vals.begin(), vals.end(), nd.threshold))
                fail("threshold at node " + std::to_string(t) +
                     " is not an observed value of its feature");
        }
    }
}

namespace {

template <typename GetX>
int route_impl(const TreeStructure& tree, GetX&& x) {
    TreeShape sh = tree.shape();
    int t = 1;
    while (!sh.is_leaf(t)) {
        const SplitNode& nd = tree.node(t);
        if (nd.active && x(nd.feature) < nd.threshold)
            t = TreeShape::left(t);
        else
            t = TreeShape::right(t);
    }
    return t;
}

} // namespace

int route(const TreeStructure& tree, const double* x) {
    return route_impl(tree, [x](int j) { return x[j]; });
}

int route(const TreeStructure& tree, const Frame& frame, std::size_t row) {
    return route_impl(tree, [&](int j) { return frame.at(row, static_cast<std::size_t>(j)); });
}

int route(const TreeStructure& tree, const Dataset& ds, std::size_t row) {
    return route_impl(tree, [&](int j) { return ds.cols[static_cast<std::size_t>(j)][row]; });
}

void fit_leaf_means(TreeStructure& tree, const Dataset& ds) {
    TreeShape sh = tree.shape();
    std::vector<double> sum(static_cast<std::size_t>(sh.total()) + 1, 0.0);
    std::vector<std::size_t> cnt(static_cast<std::size_t>(sh.total()) + 1, 0);
    for (std::size_t i = 0; i < ds.n; ++i) {
        int t = 1;
        for (;;) {
            sum[static_cast<std::size_t>(t)] += ds.y[i];
            cnt[static_cast<std::size_t>(t)] += 1;
            if (sh.is_leaf(t)) break;
            const SplitNode& nd = tree.node(t);
            t = (nd.active && ds.cols[static_cast<std::size_t>(nd.feature)][i] < nd.threshold)
                    ? TreeShape::left(t)
                    : TreeShape::right(t);
        }
    }
    for (int t = sh.first_leaf(); t <= sh.total(); ++t) {
        int a = t;
        while (cnt[static_cast<std::size_t>(a)] == 0) a = TreeShape::parent(a);
        tree.leaf[static_cast<std::size_t>(t - sh.first_leaf())] =
            sum[static_cast<std::size_t>(a)] / static_cast<double>(cnt[static_cast<std::size_t>(a)]);
    }
}

Evaluation evaluate(const TreeStructure& tree, const Dataset& ds, double lambda) {
    TreeShape sh = tree.shape();
    Evaluation ev;
    ev.leaf_of.resize(ds.n);
    ev.fitted.resize(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
        int leaf = route(tree, ds, i);
        ev.leaf_of[i] = leaf;
        double pred = tree.leaf[static_cast<std::size_t>(leaf - sh.first_leaf())];
        ev.fitted[i] = pred;
        double d = ds.y[i] - pred;
        ev.sse += d * d;
    }
    for (const SplitNode& nd : tree.split) ev.active_splits += nd.active ? 1 : 0;
    ev.objective = ev.sse / ds.baseline_sse + lambda * ev.active_splits;
    return ev;
}

std::vector<double> predict_frame(const TreeStructure& tree, const Frame& frame) {
    TreeShape sh = tree.shape();
    std::vector<double> out(frame.n);
    for (std::size_t i = 0; i < frame.n; ++i)
        out[i] = tree.leaf[static_cast<std::size_t>(route(tree, frame, i) - sh.first_leaf())];
    return out;
}

double rmse(const TreeStructure& tree, const Frame& frame) {
    if (frame.n == 0) fail("rmse over an empty frame");
    auto pred = predict_frame(tree, frame);
    double sse = 0.0;
    for (std::size_t i = 0; i < frame.n; ++i) {
        double d = frame.y[i] - pred[i];
        sse += d * d;
    }
    return std::sqrt(sse / static_cast<double>(frame.n));
}

int realized_depth(const TreeStructure& tree) {
    int deepest = -1;
    for (int t = 1; t <= tree.shape().internal_count(); ++t)
        if (tree.node(t).active) deepest = std::max(deepest, TreeShape::node_depth(t));
    return deepest + 1;
}

bool lex_less(const TreeStructure& a, const TreeStructure& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    for (std::size_t i = 0; i < a.split.size(); ++i) {
        const SplitNode& x = a.split[i];
        const SplitNode& y = b.split[i];
        if (x.active != y.active) return !x.active; // inactive sorts first
        if (!x.active) continue;
        if (x.feature != y.feature) return x.feature < y.feature;
        if (x.threshold != y.threshold) return x.threshold < y.threshold;
    }
    for (std::size_t i = 0; i < a.leaf.size(); ++i)
        if (a.leaf[i] != b.leaf[i]) return a.leaf[i] < b.leaf[i];
    return false;
}

namespace {

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    for (char c : s) {
        v <<= 4;
        if (c >= '0' && c <= '9')
            v |= static_cast<std::uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f')
            v |= static_cast<std::uint64_t>(c - 'a' + 10);
        else
            fail("bad digest string in model file");
    }
    return v;
}

} // namespace

std::string model_to_json(const Model& m) {
    TreeShape sh = m.tree.shape();
    ordered_json j;
    j["schema_version"] = 1;
    j["depth"] = m.tree.depth;
    j["lambda"] = m.lambda;
    j["target"] = m.target;
    j["features"] = m.features;

    ordered_json scales = ordered_json::array();
    for (std::size_t i = 0; i < m.scale.size(); ++i) {
        ordered_json s;
        s["name"] = m.features[i];
        s["min"] = m.scale[i].min;
        s["max"] = m.scale[i].max;
        s["constant"] = m.scale[i].constant;
        scales.push_back(std::move(s));
    }
    j["scale"] = std::move(scales);

    ordered_json nodes = ordered_json::array();
    for (int t = 1; t <= sh.internal_count(); ++t) {
        const SplitNode& nd = m.tree.node(t);
        ordered_json rec;
        rec["node"] = t;
        rec["active"] = nd.active;
        if (nd.active) {
            rec["feature"] = m.features[static_cast<std::size_t>(nd.feature)];
            rec["feature_index"] = nd.feature;
            rec["threshold"] =
                unscale_value(m.scale[static_cast<std::size_t>(nd.feature)], nd.threshold);
            rec["threshold_scaled"] = nd.threshold;
            rec["threshold_index"] = nd.threshold_index;
        }
        nodes.push_back(std::move(rec));
    }
    j["nodes"] = std::move(nodes);

    ordered_json leaves = ordered_json::array();
    for (int t = sh.first_leaf(); t <= sh.total(); ++t) {
        ordered_json rec;
        rec["node"] = t;
        rec["value"] = m.tree.leaf[static_cast<std::size_t>(t - sh.first_leaf())];
        leaves.push_back(std::move(rec));
    }
    j["leaves"] = std::move(leaves);

    ordered_json prov;
    prov["dataset_digest"] = hex64(m.provenance.dataset_digest);
    prov["seed"] = m.provenance.seed;
    prov["split_fraction"] = m.provenance.split_fraction;
    prov["gap"] = m.provenance.gap;
    prov["method"] = m.provenance.method;
    j["provenance"] = std::move(prov);

    return j.dump(2) + "\n";
}

Model model_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        fail(std::string("model file is not valid JSON: ") + e.what());
    }
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
        fail("model file lacks a schema_version");
    int sv = j["schema_version"].get<int>();
    if (sv != 1) fail("unsupported model schema_version " + std::to_string(sv));

    Model m;
    int depth = j.at("depth").get<int>();
    m.tree = TreeStructure::all_inactive(depth);
    m.lambda = j.at("lambda").get<double>();
    m.target = j.at("target").get<std::string>();
    m.features = j.at("features").get<std::vector<std::string>>();

    for (const auto& s : j.at("scale")) {
        ScaleParam sp;
        sp.min = s.at("min").get<double>();
        sp.max = s.at("max").get<double>();
        sp.constant = s.at("constant").get<bool>();
        m.scale.push_back(sp);
    }
    if (m.scale.size() != m.features.size())
        fail("model scale list does not match the feature list");

    TreeShape sh = m.tree.shape();
    for (const auto& rec : j.at("nodes")) {
        int t = rec.at("node").get<int>();
        if (t < 1 || t > sh.internal_count()) fail("model node index out of range");
        SplitNode& nd = m.tree.node(t);
        nd.active = rec.at("active").get<bool>();
        if (nd.active) {
            nd.feature = rec.at("feature_index").get<int>();
            if (nd.feature < 0 || nd.feature >= static_cast<int>(m.features.size()))
                fail("model feature index out of range at node " + std::to_string(t));
            if (rec.at("feature").get<std::string>() !=
                m.features[static_cast<std::size_t>(nd.feature)])
                fail("model feature name/index mismatch at node " + std::to_string(t));
            nd.threshold = rec.at("threshold_scaled").get<double>();
            nd.threshold_index = rec.at("threshold_index").get<int>();
            if (!std::isfinite(nd.threshold))
                fail("non-finite threshold at node " + std::to_string(t));
        }
    }
    for (const auto& rec : j.at("leaves")) {
        int t = rec.at("node").get<int>();
        if (t < sh.first_leaf() || t > sh.total()) fail("model leaf index out of range");
        m.tree.leaf[static_cast<std::size_t>(t - sh.first_leaf())] = rec.at("value").get<double>();
    }

    const auto& prov = j.at("provenance");
    m.provenance.dataset_digest = parse_hex64(prov.at("dataset_digest").get<std::string>());
    m.provenance.seed = prov.at("seed").get<std::uint64_t>();
    m.provenance.split_fraction = prov.at("split_fraction").get<double>();
    m.provenance.gap = prov.at("gap").get<double>();
    m.provenance.method = prov.at("method").get<std::string>();

    validate_structure(m.tree);
    return m;
}

void save_model(const Model& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write model file: " + path);
    out << model_to_json(m);
    if (!out) fail("failed while writing model file: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open model file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

std::vector<double> predict_raw(const Model& m, const RawTable& table) {
    std::vector<std::size_t> col_of(m.features.size());
    for (std::size_t f = 0; f < m.features.size(); ++f) {
        std::size_t found = table.columns.size();
        for (std::size_t c = 0; c < table.columns.size(); ++c)
            if (table.columns[c] == m.features[f]) found = c;
        if (found == table.columns.size())
            fail("prediction input lacks feature column '" + m.features[f] + "'");
        col_of[f] = found;
    }
    TreeShape sh = m.tree.shape();
    std::vector<double> out(table.rows());
    std::vector<double> x(m.features.size());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t f = 0; f < m.features.size(); ++f)
            x[f] = scale_value(m.scale[f], table.cell(r, col_of[f]));
        out[r] = m.tree.leaf[static_cast<std::size_t>(route(m.tree, x.data()) - sh.first_leaf())];
    }
    return out;
}

} // namespace ortree
