#include "ortree/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ortree/analysis.hpp"
#include "ortree/dataset.hpp"
#include "ortree/greedy.hpp"
#include "ortree/solver.hpp"
#include "ortree/tree.hpp"

namespace ortree {
namespace {

using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string iso_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out.good()) throw std::runtime_error("failed while writing '" + path + "'");
}

AcceptRule parse_rule(const std::string& name) {
    if (name == "consistent") return AcceptRule::consistent;
    if (name == "literal") return AcceptRule::literal;
    throw std::runtime_error("unknown accept rule '" + name + "' (expected consistent or literal)");
}

std::string trace_csv(const SolverReport& rep) {
    std::string out = "time_s,alpha,beta,gap,open_nodes\n";
    char line[192];
    for (const auto& p : rep.trace) {
        std::snprintf(line, sizeof line, "%.6f,%.17g,%.17g,%.17g,%llu\n", p.time_s, p.alpha,
                      p.beta, p.gap, static_cast<unsigned long long>(p.open));
        out += line;
    }
    return out;
}

// Comparison layout: one row per method.
std::string report_header() {
    return "Method | Train RMSE | Test RMSE | Gap (%) | Time (s)";
}

std::string report_row(const std::string& method, double train_rmse, double test_rmse,
                       std::optional<double> gap_pct, double time_s) {
    char buf[160];
    if (gap_pct)
        std::snprintf(buf, sizeof buf, "%-6s | %10.2f | %9.2f | %7.4f | %8.2f", method.c_str(),
                      train_rmse, test_rmse, *gap_pct, time_s);
    else
        std::snprintf(buf, sizeof buf, "%-6s | %10.2f | %9.2f | %7s | %8.2f", method.c_str(),
                      train_rmse, test_rmse, "-", time_s);
    return buf;
}

// Harness checks shared by train and bench: the reported trace must move the
// right way, and within one run the certified bound may never pass the
// incumbent by more than float noise.
void check_trace(const SolverReport& rep) {
    if (rep.trace.empty()) throw std::runtime_error("empty bound trace");
    for (std::size_t i = 0; i < rep.trace.size(); ++i) {
        const auto& p = rep.trace[i];
        double cushion = 1e-9 * std::max(1.0, std::abs(p.alpha));
        if (p.beta > p.alpha + cushion)
            throw std::runtime_error("bound trace invalid: lower bound above incumbent at record " +
                                     std::to_string(i));
        if (i > 0) {
            const auto& q = rep.trace[i - 1];
            if (p.alpha > q.alpha + cushion)
                throw std::runtime_error("bound trace invalid: incumbent increased at record " +
                                         std::to_string(i));
            if (p.beta < q.beta - cushion)
                throw std::runtime_error("bound trace invalid: lower bound decreased at record " +
                                         std::to_string(i));
        }
    }
}

struct TrainOptions {
    std::string data;
    std::string target;
    int depth = 2;
    double lambda = 0.0005;
    double gap = 1e-4;
    double abs_gap = -1.0;
    double time_limit = 14400.0;
    std::uint64_t node_limit = std::numeric_limits<std::uint64_t>::max();
    int workers = 1;
    std::uint64_t seed = 0;
    double split_fraction = 0.7;
    std::string out = "model.json";
    std::string trace_path;
    bool no_warm_start = false;
    std::string rule = "consistent";
    int upper_stride = 1;
};

SolverConfig config_from(const TrainOptions& o, std::uint64_t dataset_digest) {
    SolverConfig cfg;
    cfg.depth = o.depth;
    cfg.lambda = o.lambda;
    cfg.rel_gap = o.gap;
    cfg.abs_gap = o.abs_gap;
    cfg.time_limit_s = o.time_limit;
    cfg.node_limit = o.node_limit;
    cfg.workers = o.workers;
    cfg.warm_start = !o.no_warm_start;
    cfg.rule = parse_rule(o.rule);
    cfg.upper_stride = o.upper_stride;
    cfg.seed = o.seed;
    cfg.dataset_digest = dataset_digest;
    cfg.validate();
    return cfg;
}

int cmd_train(const TrainOptions& o) {
    auto t0 = Clock::now();
    std::string started = iso_now();

    RawTable table = load_table(o.data);
    std::uint64_t digest = table_digest(table);
    Dataset full = preprocess(table, o.target);
    TrainTest tt = split(full, SplitSpec{o.split_fraction, o.seed});

    SolverConfig cfg = config_from(o, digest);
    SolverReport rep = solve(tt.train, cfg);
    check_trace(rep);

    double train_rmse = rmse(rep.tree, train_frame(tt.train));
    double test_rmse = rmse(rep.tree, tt.test);
    double total_s = seconds_since(t0);

    Model m;
    m.tree = rep.tree;
    m.lambda = o.lambda;
    m.target = tt.train.target_name;
    m.features = tt.train.feature_names;
    m.scale = tt.train.scale;
    m.provenance = ModelProvenance{digest, o.seed, o.split_fraction, rep.gap, "ort"};
    save_model(m, o.out);

    std::string trace_path = o.trace_path.empty() ? o.out + ".trace.csv" : o.trace_path;
    write_file(trace_path, trace_csv(rep));

    ordered_json man;
    man["command"] = "train";
    man["flags"] = ordered_json::object(
        {{"data", o.data},
         {"target", o.target},
         {"depth", o.depth},
         {"lambda", o.lambda},
         {"gap", o.gap},
         {"abs_gap", o.abs_gap},
         {"time_limit", o.time_limit},
         {"node_limit", o.node_limit},
         {"workers", o.workers},
         {"seed", o.seed},
         {"split", o.split_fraction},
         {"warm_start", !o.no_warm_start},
         {"rule", o.rule},
         {"upper_stride", o.upper_stride}});
    man["dataset"] = ordered_json::object({{"path", o.data},
                                           {"digest", hex64(digest)},
                                           {"rows", table.rows()},
                                           {"columns", table.columns.size()}});
    man["split"] = ordered_json::object({{"fraction", o.split_fraction},
                                         {"seed", o.seed},
                                         {"train_rows", tt.train_rows.size()},
                                         {"test_rows", tt.test_rows.size()}});
    man["outputs"] = ordered_json::object(
        {{"model", o.out}, {"trace", trace_path}, {"manifest", o.out + ".manifest.json"}});
    man["result"] = ordered_json::object({{"objective", rep.alpha},
                                          {"bound", rep.beta},
                                          {"gap", rep.gap},
                                          {"stop", stop_reason_name(rep.reason)},
                                          {"explored", rep.explored},
                                          {"pruned", rep.pruned},
                                          {"fathomed", rep.fathomed},
                                          {"train_rmse", train_rmse},
                                          {"test_rmse", test_rmse},
                                          {"solver_time_s", rep.wall_time_s},
                                          {"total_time_s", total_s}});
    man["timestamps"] = ordered_json::object({{"started", started}, {"finished", iso_now()}});
    write_file(o.out + ".manifest.json", man.dump(2) + "\n");

    std::cout << report_header() << "\n"
              << report_row("ort", train_rmse, test_rmse, rep.gap * 100.0, total_s) << "\n";
    std::cout << "objective " << fmt("%.10g", rep.alpha) << "  bound " << fmt("%.10g", rep.beta)
              << "  stop " << stop_reason_name(rep.reason) << "  explored " << rep.explored
              << "\n";
    std::cout << "model " << o.out << "\n";
    return 0;
}

struct PredictOptions {
    std::string model;
    std::string data;
    std::string target;
    std::string out = "predictions.csv";
};

int cmd_predict(const PredictOptions& o) {
    std::string started = iso_now();
    Model m = load_model(o.model);
    RawTable table = load_table(o.data);
    std::vector<double> pred = predict_raw(m, table);

    std::string csv = "prediction\n";
    char line[48];
    for (double v : pred) {
        std::snprintf(line, sizeof line, "%.17g\n", v);
        csv += line;
    }
    write_file(o.out, csv);

    std::optional<double> rmse_val;
    if (!o.target.empty()) {
        std::size_t col = table.columns.size();
        for (std::size_t c = 0; c < table.columns.size(); ++c)
            if (table.columns[c] == o.target) col = c;
        if (col == table.columns.size())
            throw std::runtime_error("target column '" + o.target + "' not found in " + o.data);
        if (table.rows() == 0) throw std::runtime_error(o.data + ": no rows to score");
        double se = 0.0;
        for (std::size_t r = 0; r < table.rows(); ++r) {
            double d = pred[r] - table.cell(r, col);
            se += d * d;
        }
        rmse_val = std::sqrt(se / static_cast<double>(table.rows()));
    }

    ordered_json man;
    man["command"] = "predict";
    man["flags"] = ordered_json::object(
        {{"model", o.model}, {"data", o.data}, {"target", o.target}, {"out", o.out}});
    man["dataset"] = ordered_json::object(
        {{"path", o.data}, {"digest", hex64(table_digest(table))}, {"rows", table.rows()}});
    man["outputs"] =
        ordered_json::object({{"predictions", o.out}, {"manifest", o.out + ".manifest.json"}});
    man["result"] = ordered_json::object({{"rows", pred.size()}});
    if (rmse_val) man["result"]["rmse"] = *rmse_val;
    man["timestamps"] = ordered_json::object({{"started", started}, {"finished", iso_now()}});
    write_file(o.out + ".manifest.json", man.dump(2) + "\n");

    if (rmse_val) std::cout << "RMSE " << fmt("%.10g", *rmse_val) << "\n";
    std::cout << "predictions " << o.out << " (" << pred.size() << " rows)\n";
    return 0;
}

struct BoundOptions {
    std::uint64_t n = 0;
    std::uint64_t p = 0;
    int depth = 0;
};

int cmd_bound(const BoundOptions& o) {
    std::cout << struct_count_upper_bound(o.n, o.p, o.depth) << "\n";
    return 0;
}

struct BenchEntry {
    std::string name;
    TrainOptions opt; // data/target/budget fields reused; out/trace unused
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

std::vector<BenchEntry> parse_suite(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open suite file '" + path + "'");
    std::vector<BenchEntry> entries;
    std::string raw;
    int lineno = 0;
    auto fail_at = [&](const std::string& msg) {
        throw std::runtime_error(path + ": line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, raw)) {
        ++lineno;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail_at("unterminated [section]");
            std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) fail_at("empty section name");
            entries.push_back(BenchEntry{name, TrainOptions{}});
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail_at("expected key = value");
        if (entries.empty()) fail_at("key outside any [section]");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        TrainOptions& o = entries.back().opt;
        try {
            if (key == "data") o.data = val;
            else if (key == "target") o.target = val;
            else if (key == "depth") o.depth = std::stoi(val);
            else if (key == "lambda") o.lambda = std::stod(val);
            else if (key == "gap") o.gap = std::stod(val);
            else if (key == "abs_gap") o.abs_gap = std::stod(val);
            else if (key == "time_limit") o.time_limit = std::stod(val);
            else if (key == "node_limit") o.node_limit = std::stoull(val);
            else if (key == "workers") o.workers = std::stoi(val);
            else if (key == "seed") o.seed = std::stoull(val);
            else if (key == "split") o.split_fraction = std::stod(val);
            else if (key == "rule") o.rule = val;
            else if (key == "stride") o.upper_stride = std::stoi(val);
            else if (key == "warm_start") o.no_warm_start = (val == "false" || val == "0");
            else fail_at("unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            fail_at("bad value for '" + key + "': '" + val + "'");
        } catch (const std::out_of_range&) {
            fail_at("value out of range for '" + key + "': '" + val + "'");
        }
    }
    if (entries.empty()) throw std::runtime_error(path + ": suite file has no entries");
    for (const auto& e : entries) {
        if (e.opt.data.empty())
            throw std::runtime_error(path + ": entry [" + e.name + "] is missing 'data'");
        if (e.opt.target.empty())
            throw std::runtime_error(path + ": entry [" + e.name + "] is missing 'target'");
    }
    return entries;
}

struct BenchRow {
    std::string name;
    std::string method;
    double train_rmse = 0.0;
    double test_rmse = 0.0;
    std::optional<double> gap_pct;
    double time_s = 0.0;
    std::string status = "ok";
    std::string note;
};

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

int cmd_bench(const std::string& suite_path, const std::string& out_prefix) {
    std::string started = iso_now();
    std::vector<BenchEntry> entries = parse_suite(suite_path);

    std::vector<BenchRow> rows;
    ordered_json man_entries = ordered_json::array();
    bool any_failed = false;

    for (const auto& e : entries) {
        ordered_json je;
        je["name"] = e.name;
        je["data"] = e.opt.data;
        je["target"] = e.opt.target;
        je["depth"] = e.opt.depth;
        je["lambda"] = e.opt.lambda;
        je["gap"] = e.opt.gap;
        je["time_limit"] = e.opt.time_limit;
        je["seed"] = e.opt.seed;
        je["workers"] = e.opt.workers;
        je["split"] = e.opt.split_fraction;
        try {
            auto t0 = Clock::now();
            RawTable table = load_table(e.opt.data);
            std::uint64_t digest = table_digest(table);
            Dataset full = preprocess(table, e.opt.target);
            TrainTest tt = split(full, SplitSpec{e.opt.split_fraction, e.opt.seed});
            SolverConfig cfg = config_from(e.opt, digest);

            SolverReport rep = solve(tt.train, cfg);
            double ort_total = seconds_since(t0);
            check_trace(rep);

            auto t1 = Clock::now();
            TreeStructure cart = fit_cart(tt.train, cfg.depth, cfg.lambda, cfg.rule);
            double cart_obj = evaluate(cart, tt.train, cfg.lambda).objective;
            double cart_total = seconds_since(t1);

            double cushion = 1e-9 * std::max(1.0, std::abs(rep.alpha));
            if (cart_obj < rep.alpha - cushion)
                throw std::runtime_error(
                    "dominance violated: greedy objective beats the certified optimum");

            BenchRow ort_row{e.name,
                             "ort",
                             rmse(rep.tree, train_frame(tt.train)),
                             rmse(rep.tree, tt.test),
                             rep.gap * 100.0,
                             ort_total,
                             "ok",
                             stop_reason_name(rep.reason)};
            BenchRow cart_row{e.name,
                              "cart",
                              rmse(cart, train_frame(tt.train)),
                              rmse(cart, tt.test),
                              std::nullopt,
                              cart_total,
                              "ok",
                              ""};
            rows.push_back(ort_row);
            rows.push_back(cart_row);

            je["dataset_digest"] = hex64(digest);
            je["status"] = "ok";
            je["result"] = ordered_json::object({{"objective", rep.alpha},
                                                 {"bound", rep.beta},
                                                 {"gap", rep.gap},
                                                 {"stop", stop_reason_name(rep.reason)},
                                                 {"explored", rep.explored},
                                                 {"ort_train_rmse", ort_row.train_rmse},
                                                 {"ort_test_rmse", ort_row.test_rmse},
                                                 {"ort_time_s", ort_total},
                                                 {"cart_train_rmse", cart_row.train_rmse},
                                                 {"cart_test_rmse", cart_row.test_rmse},
                                                 {"cart_objective", cart_obj},
                                                 {"cart_time_s", cart_total}});
        } catch (const std::exception& ex) {
            any_failed = true;
            BenchRow bad;
            bad.name = e.name;
            bad.method = "ort";
            bad.status = "failed";
            bad.note = ex.what();
            rows.push_back(bad);
            je["status"] = "failed";
            je["error"] = ex.what();
        }
        man_entries.push_back(je);
    }

    std::string md = "| Dataset | Method | Train RMSE | Test RMSE | Gap (%) | Time (s) | Status |\n"
                     "|---|---|---|---|---|---|---|\n";
    std::string csv = "name,method,train_rmse,test_rmse,gap_pct,time_s,status,note\n";
    for (const auto& r : rows) {
        if (r.status == "ok") {
            md += "| " + r.name + " | " + r.method + " | " + fmt("%.2f", r.train_rmse) + " | " +
                  fmt("%.2f", r.test_rmse) + " | " +
                  (r.gap_pct ? fmt("%.4f", *r.gap_pct) : std::string("-")) + " | " +
                  fmt("%.2f", r.time_s) + " | ok |\n";
            csv += r.name + "," + r.method + "," + fmt("%.10g", r.train_rmse) + "," +
                   fmt("%.10g", r.test_rmse) + "," +
                   (r.gap_pct ? fmt("%.10g", *r.gap_pct) : std::string()) + "," +
                   fmt("%.10g", r.time_s) + ",ok," + csv_quote(r.note) + "\n";
        } else {
            md += "| " + r.name + " | - | - | - | - | - | failed: " + r.note + " |\n";
            csv += r.name + "," + r.method + ",,,,," + r.status + "," + csv_quote(r.note) + "\n";
        }
    }

    write_file(out_prefix + ".md", md);
    write_file(out_prefix + ".csv", csv);

    ordered_json man;
    man["command"] = "bench";
    man["flags"] = ordered_json::object({{"suite", suite_path}, {"out", out_prefix}});
    man["entries"] = man_entries;
    man["outputs"] = ordered_json::object({{"markdown", out_prefix + ".md"},
                                           {"csv", out_prefix + ".csv"},
                                           {"manifest", out_prefix + ".manifest.json"}});
    man["timestamps"] = ordered_json::object({{"started", started}, {"finished", iso_now()}});
    write_file(out_prefix + ".manifest.json", man.dump(2) + "\n");

    std::cout << md;
    return any_failed ? 2 : 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"depth-bounded regression trees with certified optimality"};
    app.require_subcommand(1);
    int code = 0;

    TrainOptions to;
    auto* train = app.add_subcommand("train", "fit a tree and certify its objective");
    train->add_option("--data", to.data, "training CSV path")->required();
    train->add_option("--target", to.target, "target column name")->required();
    train->add_option("--depth", to.depth, "tree depth");
    train->add_option("--lambda", to.lambda, "per-split penalty");
    train->add_option("--gap", to.gap, "relative gap tolerance (negative disables)");
    train->add_option("--abs-gap", to.abs_gap, "absolute gap tolerance (negative disables)");
    train->add_option("--time-limit", to.time_limit, "wall-clock budget in seconds");
    train->add_option("--node-limit", to.node_limit, "max regions to expand");
    train->add_option("--workers", to.workers, "worker threads");
    train->add_option("--seed", to.seed, "train/test shuffle seed");
    train->add_option("--split", to.split_fraction, "train fraction");
    train->add_option("--out", to.out, "model output path");
    train->add_option("--trace", to.trace_path, "bound trace CSV path (default <out>.trace.csv)");
    train->add_flag("--no-warm-start", to.no_warm_start, "skip the greedy incumbent");
    train->add_option("--rule", to.rule, "split acceptance rule")
        ->check(CLI::IsMember({"consistent", "literal"}));
    train->add_option("--upper-stride", to.upper_stride,
                      "greedy completion every k-th expansion");
    train->callback([&] { code = cmd_train(to); });

    PredictOptions po;
    auto* predict = app.add_subcommand("predict", "score a CSV with a saved model");
    predict->add_option("--model", po.model, "model JSON path")->required();
    predict->add_option("--data", po.data, "input CSV path")->required();
    predict->add_option("--target", po.target, "optional target column for RMSE");
    predict->add_option("--out", po.out, "predictions CSV path");
    predict->callback([&] { code = cmd_predict(po); });

    BoundOptions bo;
    auto* bound = app.add_subcommand("bound", "print the structure-count upper bound");
    bound->add_option("--n", bo.n, "sample count")->required();
    bound->add_option("--p", bo.p, "feature count")->required();
    bound->add_option("--depth", bo.depth, "tree depth")->required();
    bound->callback([&] { code = cmd_bound(bo); });

    std::string suite_path;
    std::string bench_out = "bench";
    auto* bench = app.add_subcommand("bench", "run a suite and emit comparison reports");
    bench->add_option("--suite", suite_path, "suite file path")->required();
    bench->add_option("--out", bench_out, "output prefix");
    bench->callback([&] { code = cmd_bench(suite_path, bench_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return code;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("ortree");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace ortree
