#include "ortree/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ortree {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

double parse_cell(const std::string& field, const std::string& path, std::size_t line,
                  const std::string& column) {
    double v = 0.0;
    const char* b = field.data();
    const char* e = b + field.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || ptr != e) {
        std::ostringstream os;
        os << path << ": row " << line << ", column '" << column << "': expected a number, got '"
           << field << "'";
        fail(os.str());
    }
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << path << ": row " << line << ", column '" << column << "': non-finite value '"
           << field << "'";
        fail(os.str());
    }
    return v;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) fields.push_back(cur);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
}

} // namespace

RawTable load_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open data file: " + path);

    std::string line;
    if (!std::getline(in, line)) fail(path + ": empty file, expected a header row");
    strip_cr(line);

    RawTable t;
    t.columns = split_line(line);
    if (t.columns.empty()) fail(path + ": header row has no columns");
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        if (t.columns[i].empty()) {
            std::ostringstream os;
            os << path << ": header column " << (i + 1) << " is empty";
            fail(os.str());
        }
        for (std::size_t j = i + 1; j < t.columns.size(); ++j)
            if (t.columns[i] == t.columns[j])
                fail(path + ": duplicate column name '" + t.columns[i] + "'");
    }

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty() && in.peek() == EOF) break; // trailing newline
        auto fields = split_line(line);
        if (fields.size() != t.columns.size()) {
            std::ostringstream os;
            os << path << ": row " << lineno << " has " << fields.size() << " fields, expected "
               << t.columns.size();
            fail(os.str());
        }
        for (std::size_t c = 0; c < fields.size(); ++c)
            t.cells.push_back(parse_cell(fields[c], path, lineno, t.columns[c]));
    }
    return t;
}

RawTable table_from_rows(std::vector<std::string> columns,
                         const std::vector<std::vector<double>>& rows) {
    RawTable t;
    t.columns = std::move(columns);
    if (t.columns.empty()) fail("table needs at least one column");
    t.cells.reserve(rows.size() * t.columns.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != t.columns.size()) {
            std::ostringstream os;
            os << "row " << (r + 1) << " has " << rows[r].size() << " fields, expected "
               << t.columns.size();
            fail(os.str());
        }
        for (double v : rows[r]) {
            if (!std::isfinite(v)) fail("non-finite value in constructed table");
            t.cells.push_back(v);
        }
    }
    return t;
}

std::uint64_t table_digest(const RawTable& table) {
    // FNV-1a over column names and cell bit patterns.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t len) {
        const unsigned char* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& name : table.columns) {
        mix(name.data(), name.size());
        unsigned char zero = 0;
        mix(&zero, 1);
    }
    for (double v : table.cells) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        mix(&bits, sizeof bits);
    }
    return h;
}

double scale_value(const ScaleParam& sp, double raw) {
    if (sp.constant) return 0.0;
    return (raw - sp.min) / (sp.max - sp.min);
}

double unscale_value(const ScaleParam& sp, double scaled) {
    if (sp.constant) return sp.min;
    return sp.min + scaled * (sp.max - sp.min);
}

std::vector<int> Dataset::usable_features() const {
    std::vector<int> out;
    for (std::size_t j = 0; j < p; ++j)
        if (!scale[j].constant) out.push_back(static_cast<int>(j));
    return out;
}

namespace {

Dataset build_dataset(std::vector<std::string> feature_names, std::string target_name,
                      std::vector<std::vector<double>> raw_cols, std::vector<double> y,
                      std::uint64_t digest) {
    Dataset ds;
    ds.feature_names = std::move(feature_names);
    ds.target_name = std::move(target_name);
    ds.raw_cols = std::move(raw_cols);
    ds.y = std::move(y);
    ds.digest = digest;
    ds.p = ds.raw_cols.size();
    ds.n = ds.y.size();
    if (ds.p == 0) fail("dataset needs at least one feature column");
    if (ds.n < 2) fail("dataset needs at least two rows, got " + std::to_string(ds.n));

    ds.y_min = *std::min_element(ds.y.begin(), ds.y.end());
    ds.y_max = *std::max_element(ds.y.begin(), ds.y.end());
    if (ds.y_min == ds.y_max)
        fail("degenerate target '" + ds.target_name + "': zero variance");
    ds.mf = ds.y_max - ds.y_min;
    double sum = 0.0;
    for (double v : ds.y) sum += v;
    ds.y_mean = sum / static_cast<double>(ds.n);
    double sse = 0.0;
    for (double v : ds.y) {
        double d = v - ds.y_mean;
        sse += d * d;
    }
    ds.baseline_sse = sse;

    ds.cols.resize(ds.p);
    ds.scale.resize(ds.p);
    ds.sorted_values.resize(ds.p);
    ds.order.resize(ds.p);
    ds.eps.assign(ds.p, 0.0);

    bool any_gap = false;
    double gmin = 0.0, gmax = 0.0;
    for (std::size_t j = 0; j < ds.p; ++j) {
        const auto& raw = ds.raw_cols[j];
        ScaleParam sp;
        sp.min = *std::min_element(raw.begin(), raw.end());
        sp.max = *std::max_element(raw.begin(), raw.end());
        sp.constant = (sp.min == sp.max);
        ds.scale[j] = sp;

        auto& col = ds.cols[j];
        col.resize(ds.n);
        for (std::size_t i = 0; i < ds.n; ++i) col[i] = scale_value(sp, raw[i]);

        auto& ord = ds.order[j];
        ord.resize(ds.n);
        std::iota(ord.begin(), ord.end(), 0u);
        std::sort(ord.begin(), ord.end(), [&col](std::uint32_t a, std::uint32_t b) {
            if (col[a] != col[b]) return col[a] < col[b];
            return a < b;
        });

        auto& vals = ds.sorted_values[j];
        for (std::uint32_t i : ord)
            if (vals.empty() || col[i] != vals.back()) vals.push_back(col[i]);

        if (vals.size() >= 2) {
            double mingap = vals[1] - vals[0];
            for (std::size_t k = 2; k < vals.size(); ++k)
                mingap = std::min(mingap, vals[k] - vals[k - 1]);
            ds.eps[j] = mingap;
            if (!any_gap) {
                gmin = gmax = mingap;
                any_gap = true;
            } else {
                gmin = std::min(gmin, mingap);
                gmax = std::max(gmax, mingap);
            }
        }
    }
    ds.eps_min = any_gap ? gmin : 0.0;
    ds.eps_max = any_gap ? gmax : 0.0;
    return ds;
}

} // namespace

Dataset preprocess(const RawTable& table, const std::string& target) {
    std::size_t tcol = table.columns.size();
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        if (table.columns[c] == target) tcol = c;
    if (tcol == table.columns.size())
        fail("target column '" + target + "' not found in table");
    if (table.columns.size() < 2) fail("table has no feature columns besides the target");

    std::size_t n = table.rows();
    std::vector<std::string> names;
    std::vector<std::vector<double>> raw_cols;
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        if (c == tcol) continue;
        names.push_back(table.columns[c]);
        std::vector<double> col(n);
        for (std::size_t r = 0; r < n; ++r) col[r] = table.cell(r, c);
        raw_cols.push_back(std::move(col));
    }
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) y[r] = table.cell(r, tcol);

    return build_dataset(std::move(names), target, std::move(raw_cols), std::move(y),
                         table_digest(table));
}

Frame train_frame(const Dataset& ds) {
    Frame f;
    f.n = ds.n;
    f.p = ds.p;
    f.x.resize(ds.n * ds.p);
    f.y = ds.y;
    for (std::size_t i = 0; i < ds.n; ++i)
        for (std::size_t j = 0; j < ds.p; ++j) f.x[i * ds.p + j] = ds.cols[j][i];
    return f;
}

TrainTest split(const Dataset& full, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        fail("train fraction must lie strictly between 0 and 1");

    std::size_t n = full.n;
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    // Hand-rolled Fisher-Yates: std::shuffle output is implementation-defined.
    std::mt19937_64 rng(spec.seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(idx[i], idx[j]);
    }

    auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    if (n_train < 1 || n_train >= n) fail("split leaves the train or test portion empty");

    TrainTest out;
    out.train_rows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test_rows.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(out.train_rows.begin(), out.train_rows.end());
    std::sort(out.test_rows.begin(), out.test_rows.end());

    std::vector<std::vector<double>> raw_cols(full.p);
    for (std::size_t j = 0; j < full.p; ++j) {
        raw_cols[j].reserve(n_train);
        for (std::uint32_t r : out.train_rows) raw_cols[j].push_back(full.raw_cols[j][r]);
    }
    std::vector<double> y_train;
    y_train.reserve(n_train);
    for (std::uint32_t r : out.train_rows) y_train.push_back(full.y[r]);

    out.train = build_dataset(full.feature_names, full.target_name, std::move(raw_cols),
                              std::move(y_train), full.digest);

    out.test.n = out.test_rows.size();
    out.test.p = full.p;
    out.test.x.resize(out.test.n * full.p);
    out.test.y.reserve(out.test.n);
    for (std::size_t r = 0; r < out.test_rows.size(); ++r) {
        std::uint32_t row = out.test_rows[r];
        for (std::size_t j = 0; j < full.p; ++j)
            out.test.x[r * full.p + j] = scale_value(out.train.scale[j], full.raw_cols[j][row]);
        out.test.y.push_back(full.y[row]);
    }
    return out;
}

} // namespace ortree
