#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ortree/cli.hpp"
#include "ortree/tree.hpp"
#include "test_util.hpp"

using namespace ortree;
using nlohmann::json;

namespace {

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

CliRun run(const std::vector<std::string>& args) {
    CliRun r;
    tu::CaptureStream cout_cap(std::cout);
    tu::CaptureStream cerr_cap(std::cerr);
    r.code = run_cli(args);
    r.out = cout_cap.text();
    r.err = cerr_cap.text();
    return r;
}

std::vector<std::vector<double>> parse_csv_rows(const std::string& text, std::size_t skip) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        if (++lineno <= skip || line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) row.push_back(std::strtod(field.c_str(), nullptr));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

TEST_CASE("training writes a model, a manifest, and a monotone trace") {
    tu::TempDir tmp;
    tu::Rng rng(71);
    tu::write_text(tmp.file("toy.csv"), tu::toy_csv(rng));
    std::string model_path = tmp.file("model.json");

    CliRun r = run({"train", "--data", tmp.file("toy.csv"), "--target", "y", "--depth", "2",
                    "--lambda", "0.01", "--seed", "7", "--out", model_path});
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Method | Train RMSE | Test RMSE | Gap (%) | Time (s)") != std::string::npos);
    CHECK(r.out.find("ort") != std::string::npos);
    CHECK(r.out.find("objective ") != std::string::npos);
    CHECK(r.out.find("model " + model_path) != std::string::npos);

    json man = json::parse(tu::read_text(model_path + ".manifest.json"));
    CHECK(man["command"] == "train");
    CHECK(man["flags"]["depth"] == 2);
    CHECK(man["flags"]["seed"] == 7);
    CHECK(man["dataset"]["rows"] == 60);
    CHECK(man["dataset"]["digest"].get<std::string>().size() == 16);
    CHECK(man["result"]["objective"].get<double>() > 0.0);
    CHECK(man["result"]["train_rmse"].get<double>() >= 0.0);
    CHECK(man["timestamps"].contains("started"));

    std::string trace = tu::read_text(model_path + ".trace.csv");
    REQUIRE(trace.rfind("time_s,alpha,beta,gap,open_nodes\n", 0) == 0);
    auto rows = parse_csv_rows(trace, 1);
    REQUIRE(!rows.empty());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == 5);
        CHECK(rows[i][2] <= rows[i][1] + 1e-9); // beta <= alpha
        if (i > 0) {
            CHECK(rows[i][1] <= rows[i - 1][1] + 1e-9);
            CHECK(rows[i][2] >= rows[i - 1][2] - 1e-9);
        }
    }

    SUBCASE("the same seed reproduces the model byte for byte") {
        std::string again = tmp.file("model2.json");
        CliRun r2 = run({"train", "--data", tmp.file("toy.csv"), "--target", "y", "--depth",
                         "2", "--lambda", "0.01", "--seed", "7", "--out", again});
        REQUIRE(r2.code == 0);
        CHECK(tu::read_text(model_path) == tu::read_text(again));
    }
}

TEST_CASE("prediction reproduces the in-process model output") {
    tu::TempDir tmp;
    tu::Rng rng(72);
    tu::write_text(tmp.file("toy.csv"), tu::toy_csv(rng));
    std::string model_path = tmp.file("model.json");
    REQUIRE(run({"train", "--data", tmp.file("toy.csv"), "--target", "y", "--depth", "2",
                 "--lambda", "0.01", "--seed", "3", "--out", model_path})
                .code == 0);

    std::string pred_path = tmp.file("pred.csv");
    CliRun r = run({"predict", "--model", model_path, "--data", tmp.file("toy.csv"),
                    "--target", "y", "--out", pred_path});
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("RMSE ") != std::string::npos);
    CHECK(r.out.find("predictions " + pred_path + " (60 rows)") != std::string::npos);

    Model m = load_model(model_path);
    RawTable table = load_table(tmp.file("toy.csv"));
    std::vector<double> want = predict_raw(m, table);

    std::string csv = tu::read_text(pred_path);
    REQUIRE(csv.rfind("prediction\n", 0) == 0);
    auto rows = parse_csv_rows(csv, 1);
    REQUIRE(rows.size() == want.size());
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i][0] == want[i]);

    // the reported RMSE in the manifest matches a direct recomputation
    json man = json::parse(tu::read_text(pred_path + ".manifest.json"));
    double se = 0.0;
    std::size_t ycol = 3; // toy columns a,b,c,y
    for (std::size_t i = 0; i < want.size(); ++i) {
        double d = want[i] - table.cell(i, ycol);
        se += d * d;
    }
    double direct = std::sqrt(se / static_cast<double>(want.size()));
    CHECK(tu::close_rel(man["result"]["rmse"].get<double>(), direct, 1e-12));
}

TEST_CASE("the train manifest RMSE matches an in-process replication") {
    tu::TempDir tmp;
    tu::Rng rng(73);
    tu::write_text(tmp.file("toy.csv"), tu::toy_csv(rng));
    std::string model_path = tmp.file("model.json");
    REQUIRE(run({"train", "--data", tmp.file("toy.csv"), "--target", "y", "--depth", "2",
                 "--lambda", "0.005", "--seed", "11", "--split", "0.7", "--out", model_path})
                .code == 0);

    json man = json::parse(tu::read_text(model_path + ".manifest.json"));
    Model m = load_model(model_path);
    RawTable table = load_table(tmp.file("toy.csv"));
    Dataset full = preprocess(table, "y");
    TrainTest tt = split(full, SplitSpec{0.7, 11});
    CHECK(tu::close_rel(man["result"]["train_rmse"].get<double>(),
                        rmse(m.tree, train_frame(tt.train)), 1e-12));
    CHECK(tu::close_rel(man["result"]["test_rmse"].get<double>(), rmse(m.tree, tt.test),
                        1e-12));
}

TEST_CASE("prediction failures surface as clean errors") {
    tu::TempDir tmp;
    tu::Rng rng(74);
    tu::write_text(tmp.file("toy.csv"), tu::toy_csv(rng));
    std::string model_path = tmp.file("model.json");
    REQUIRE(run({"train", "--data", tmp.file("toy.csv"), "--target", "y", "--out", model_path,
                 "--seed", "1"})
                .code == 0);

    SUBCASE("a missing feature column is named") {
        tu::write_text(tmp.file("short.csv"), "a,c,y\n0.5,0.5,1.0\n");
        CliRun r = run({"predict", "--model", model_path, "--data", tmp.file("short.csv")});
        CHECK(r.code == 1);
        CHECK(r.err.find("lacks feature column 'b'") != std::string::npos);
    }
    SUBCASE("a missing target column is named") {
        CliRun r = run({"predict", "--model", model_path, "--data", tmp.file("toy.csv"),
                        "--target", "nope", "--out", tmp.file("p.csv")});
        CHECK(r.code == 1);
        CHECK(r.err.find("target column 'nope' not found") != std::string::npos);
    }
    SUBCASE("a future schema version is refused") {
        std::string bumped = tu::read_text(model_path);
        std::size_t at = bumped.find("\"schema_version\": 1");
        REQUIRE(at != std::string::npos);
        bumped.replace(at, std::string("\"schema_version\": 1").size(), "\"schema_version\": 9");
        tu::write_text(tmp.file("future.json"), bumped);
        CliRun r = run({"predict", "--model", tmp.file("future.json"), "--data",
                        tmp.file("toy.csv")});
        CHECK(r.code == 1);
        CHECK(r.err.find("schema_version") != std::string::npos);
    }
}

TEST_CASE("the bound subcommand prints exact worked values") {
    CliRun a = run({"bound", "--n", "1030", "--p", "8", "--depth", "2"});
    CHECK(a.code == 0);
    CHECK(a.out == "139191134208\n");
    CliRun b = run({"bound", "--n", "3", "--p", "2", "--depth", "1"});
    CHECK(b.out == "4\n");
    CliRun c = run({"bound", "--n", "8", "--p", "2", "--depth", "2"});
    CHECK(c.out == "504\n");
    CliRun bad = run({"bound", "--n", "1", "--p", "3", "--depth", "2"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("error:") != std::string::npos);
}

TEST_CASE("bench runs every suite entry and reports failures without dying") {
    tu::TempDir tmp;
    tu::Rng rng(75);
    tu::write_text(tmp.file("toy.csv"), tu::toy_csv(rng));
    tu::write_text(tmp.file("flat.csv"), "a,y\n0.1,5\n0.2,5\n0.3,5\n0.4,5\n");
    tu::write_text(tmp.file("suite.ini"),
                   "# two entries, the second degenerate\n"
                   "[toy]\n"
                   "data = " + tmp.file("toy.csv") + "\n"
                   "target = y\n"
                   "depth = 2\n"
                   "lambda = 0.01\n"
                   "gap = 1e-4\n"
                   "[flat]\n"
                   "data = " + tmp.file("flat.csv") + "\n"
                   "target = y\n");
    std::string prefix = tmp.file("bench");
    CliRun r = run({"bench", "--suite", tmp.file("suite.ini"), "--out", prefix});
    CHECK(r.code == 2); // one entry failed
    CHECK(r.out.find("| Dataset | Method | Train RMSE | Test RMSE | Gap (%) | Time (s) | Status |") !=
          std::string::npos);

    std::string md = tu::read_text(prefix + ".md");
    CHECK(md.find("| toy | ort |") != std::string::npos);
    CHECK(md.find("| toy | cart |") != std::string::npos);
    CHECK(md.find("| flat | - |") != std::string::npos);
    CHECK(md.find("failed:") != std::string::npos);
    CHECK(md.find("degenerate target") != std::string::npos);

    std::string csv = tu::read_text(prefix + ".csv");
    REQUIRE(csv.rfind("name,method,train_rmse,test_rmse,gap_pct,time_s,status,note\n", 0) == 0);
    CHECK(csv.find("toy,ort,") != std::string::npos);
    CHECK(csv.find("toy,cart,") != std::string::npos);
    CHECK(csv.find("flat,ort,,,,,failed,") != std::string::npos);

    json man = json::parse(tu::read_text(prefix + ".manifest.json"));
    REQUIRE(man["entries"].size() == 2);
    CHECK(man["entries"][0]["status"] == "ok");
    CHECK(man["entries"][0]["result"]["objective"].get<double>() > 0.0);
    CHECK(man["entries"][1]["status"] == "failed");
}

TEST_CASE("suite files are validated before anything runs") {
    tu::TempDir tmp;
    SUBCASE("unknown keys are rejected with a line number") {
        tu::write_text(tmp.file("bad.ini"), "[x]\ndata = d.csv\ntarget = y\nbogus = 3\n");
        CliRun r = run({"bench", "--suite", tmp.file("bad.ini")});
        CHECK(r.code == 1);
        CHECK(r.err.find("line 4") != std::string::npos);
        CHECK(r.err.find("unknown key 'bogus'") != std::string::npos);
    }
    SUBCASE("keys outside a section are rejected") {
        tu::write_text(tmp.file("bad.ini"), "data = d.csv\n");
        CliRun r = run({"bench", "--suite", tmp.file("bad.ini")});
        CHECK(r.code == 1);
        CHECK(r.err.find("key outside any [section]") != std::string::npos);
    }
    SUBCASE("entries must name their data and target") {
        tu::write_text(tmp.file("bad.ini"), "[x]\ntarget = y\n");
        CliRun r = run({"bench", "--suite", tmp.file("bad.ini")});
        CHECK(r.code == 1);
        CHECK(r.err.find("missing 'data'") != std::string::npos);
    }
    SUBCASE("a missing suite file is an error") {
        CliRun r = run({"bench", "--suite", tmp.file("nope.ini")});
        CHECK(r.code == 1);
        CHECK(r.err.find("cannot open suite file") != std::string::npos);
    }
}

TEST_CASE("argument plumbing") {
    SUBCASE("a subcommand is required") {
        CliRun r = run({});
        CHECK(r.code != 0);
    }
    SUBCASE("help exits cleanly") {
        CliRun r = run({"--help"});
        CHECK(r.code == 0);
        CHECK(r.out.find("train") != std::string::npos);
        CHECK(r.out.find("bench") != std::string::npos);
    }
    SUBCASE("train requires its data and target") {
        CliRun r = run({"train", "--data", "x.csv"});
        CHECK(r.code != 0);
    }
    SUBCASE("unknown accept rules are rejected at parse time") {
        CliRun r = run({"train", "--data", "x.csv", "--target", "y", "--rule", "sloppy"});
        CHECK(r.code != 0);
    }
    SUBCASE("a missing data file fails after parsing") {
        tu::TempDir tmp;
        CliRun r = run({"train", "--data", tmp.file("absent.csv"), "--target", "y"});
        CHECK(r.code == 1);
        CHECK(r.err.find("error:") != std::string::npos);
    }
}
