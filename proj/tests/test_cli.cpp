#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "matchdid/cli.hpp"
#include "matchdid/csv.hpp"
#include "matchdid/errors.hpp"

using namespace matchdid;
using namespace matchdid::cli;

namespace fs = std::filesystem;

namespace {

// Fresh directory under the system temp root, removed on destruction.
struct TempDir {
    fs::path path;

    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("matchdid_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string &name) const { return (path / name).string(); }
    // A path inside the directory that is *not* created up front, for
    // checking that failed commands leave nothing behind.
    std::string fresh_out_dir(const std::string &name) const { return (path / name).string(); }
};

void write_file(const std::string &path, const std::string &content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out << content;
}

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> data_lines(const std::string &csv_text) {
    std::vector<std::string> lines;
    std::stringstream ss(csv_text);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

// Redirects stdout and stderr into strings for the lifetime of the object,
// so command summaries do not pollute the test log and can be asserted on.
struct CapturedOutput {
    std::ostringstream out, err;
    std::streambuf *old_out, *old_err;

    CapturedOutput()
        : old_out(std::cout.rdbuf(out.rdbuf())), old_err(std::cerr.rdbuf(err.rdbuf())) {}
    ~CapturedOutput() {
        std::cout.rdbuf(old_out);
        std::cerr.rdbuf(old_err);
    }
};

const char *kCovariateFixture =
    "unit_id,treated,z1,z2\n"
    "c4,0,0.9,1.2\n"
    "t1,1,1.0,1.0\n"
    "c1,0,1.1,1.0\n"
    "t2,1,5.0,5.0\n"
    "c2,0,5.2,5.1\n"
    "c3,0,9.0,9.0\n";

// A balanced panel whose group means reproduce (1134-1141)-(921-1022) = 94.
const char *kPanelFixture =
    "unit_id,group,period,outcome\n"
    "t1,1,1999,1140\n"
    "t1,1,2016,1133\n"
    "t2,1,1999,1142\n"
    "t2,1,2016,1135\n"
    "c1,0,1999,1021\n"
    "c1,0,2016,920\n"
    "c2,0,1999,1023\n"
    "c2,0,2016,922\n";

}  // namespace

TEST_CASE("match pairs every treated unit and reports balance") {
    TempDir tmp;
    write_file(tmp.file("cov.csv"), kCovariateFixture);
    MatchOptions options;
    options.covariates_path = tmp.file("cov.csv");
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    REQUIRE(cmd_match(options) == kExitOk);
    CHECK(captured.out.str().find("matched 2 treated units") != std::string::npos);

    const auto pairs = data_lines(read_file(tmp.file("out/pairs.csv")));
    REQUIRE(pairs.size() == 3);  // header + one row per treated unit
    CHECK(pairs[0] == "treated_id,control_id,distance");
    const auto row1 = split_csv_line(pairs[1]);
    const auto row2 = split_csv_line(pairs[2]);
    REQUIRE(row1.size() == 3);
    CHECK(row1[0] == "t1");
    CHECK(row2[0] == "t2");
    CHECK(row1[1] != row2[1]);  // two distinct controls
    for (const auto &row : {row1, row2}) {
        CHECK(row[1].front() == 'c');
        CHECK(std::stod(row[2]) >= 0.0);
    }

    const auto balance = data_lines(read_file(tmp.file("out/balance.csv")));
    REQUIRE(balance.size() == 3);  // header + z1 + z2
    CHECK(split_csv_line(balance[1])[0] == "z1");
    CHECK(split_csv_line(balance[2])[0] == "z2");

    const auto manifest = nlohmann::json::parse(read_file(tmp.file("out/manifest.json")));
    CHECK(manifest.at("command") == "match");
    CHECK(manifest.at("k") == 1);
    CHECK(manifest.at("metric") == "rank-mahalanobis");
    CHECK(manifest.at("caliper") == true);
    CHECK(manifest.at("n_treated") == 2);
    CHECK(manifest.at("n_control") == 4);
}

TEST_CASE("match with k=2 uses four distinct controls") {
    TempDir tmp;
    write_file(tmp.file("cov.csv"), kCovariateFixture);
    MatchOptions options;
    options.covariates_path = tmp.file("cov.csv");
    options.k = 2;
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    REQUIRE(cmd_match(options) == kExitOk);
    const auto pairs = data_lines(read_file(tmp.file("out/pairs.csv")));
    REQUIRE(pairs.size() == 5);  // header + 2 treated x 2 controls
    std::vector<std::string> controls;
    for (std::size_t i = 1; i < pairs.size(); ++i) controls.push_back(split_csv_line(pairs[i])[1]);
    std::sort(controls.begin(), controls.end());
    CHECK(std::unique(controls.begin(), controls.end()) == controls.end());
}

TEST_CASE("match supports the propensity metric") {
    TempDir tmp;
    write_file(tmp.file("cov.csv"), kCovariateFixture);
    MatchOptions options;
    options.covariates_path = tmp.file("cov.csv");
    options.metric = "propensity";
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    REQUIRE(cmd_match(options) == kExitOk);
    const auto manifest = nlohmann::json::parse(read_file(tmp.file("out/manifest.json")));
    CHECK(manifest.at("metric") == "propensity");
    CHECK(manifest.at("caliper") == false);  // off by default for propensity
    CHECK(manifest.contains("propensity_ridge_fallback"));
}

TEST_CASE("match rejects malformed input without leaving partial files") {
    TempDir tmp;
    write_file(tmp.file("bad.csv"),
               "unit,treated,z1\n"  // wrong first header field
               "a,1,1.0\n"
               "b,0,2.0\n");
    MatchOptions options;
    options.covariates_path = tmp.file("bad.csv");
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    CHECK(cmd_match(options) == kExitValidation);
    CHECK(captured.err.str().find("error:") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp.file("out/pairs.csv")));
    CHECK_FALSE(fs::exists(tmp.file("out/balance.csv")));
    CHECK_FALSE(fs::exists(tmp.file("out/manifest.json")));

    options.covariates_path = tmp.file("missing.csv");
    CHECK(cmd_match(options) == kExitValidation);
}

TEST_CASE("match validates its options and reports infeasible problems") {
    TempDir tmp;
    write_file(tmp.file("cov.csv"), kCovariateFixture);
    MatchOptions options;
    options.covariates_path = tmp.file("cov.csv");
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    options.k = 0;
    CHECK(cmd_match(options) == kExitValidation);
    options.k = 1;
    options.metric = "euclidean";
    CHECK(cmd_match(options) == kExitValidation);
    options.metric = "rank-mahalanobis";
    options.penalty_scale = -1.0;
    CHECK(cmd_match(options) == kExitValidation);
    options.penalty_scale.reset();

    // Two treated units cannot each take four of the four controls.
    options.k = 4;
    CHECK(cmd_match(options) == kExitInfeasible);
    CHECK_FALSE(fs::exists(tmp.file("out/pairs.csv")));

    // A constant covariate makes the rank covariance singular.
    write_file(tmp.file("flat.csv"),
               "unit_id,treated,z1\n"
               "t1,1,3\n"
               "c1,0,3\n"
               "c2,0,3\n"
               "c3,0,3\n");
    options = MatchOptions{};
    options.covariates_path = tmp.file("flat.csv");
    options.out_dir = tmp.fresh_out_dir("out2");
    CHECK(cmd_match(options) == kExitValidation);
}

TEST_CASE("did reproduces the double difference from a panel file") {
    TempDir tmp;
    write_file(tmp.file("panel.csv"), kPanelFixture);
    DidOptions options;
    options.panel_path = tmp.file("panel.csv");
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    REQUIRE(cmd_did(options) == kExitOk);
    CHECK(captured.out.str().find("point estimate 94") != std::string::npos);

    const auto lines = data_lines(read_file(tmp.file("out/did.csv")));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "method,point,se,ci_low,ci_high,df,alpha,n");
    const auto fields = split_csv_line(lines[1]);
    REQUIRE(fields.size() == 8);
    CHECK(fields[0] == "regression");
    CHECK(std::stod(fields[1]) == doctest::Approx(94.0).epsilon(1e-9));
    CHECK(std::stoi(fields[7]) == 4);

    const auto manifest = nlohmann::json::parse(read_file(tmp.file("out/manifest.json")));
    CHECK(manifest.at("pre_period") == "1999");
    CHECK(manifest.at("post_period") == "2016");
    CHECK(manifest.at("method") == "regression");
}

TEST_CASE("did with a pairs file runs the paired estimator") {
    TempDir tmp;
    write_file(tmp.file("panel.csv"), kPanelFixture);
    write_file(tmp.file("pairs.csv"),
               "treated_id,control_id\n"
               "t1,c1\n"
               "t2,c2\n");
    DidOptions options;
    options.panel_path = tmp.file("panel.csv");
    options.pairs_path = tmp.file("pairs.csv");
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    REQUIRE(cmd_did(options) == kExitOk);
    const auto fields = split_csv_line(data_lines(read_file(tmp.file("out/did.csv")))[1]);
    CHECK(fields[0] == "paired");
    // Both pair differences equal 94 exactly, so the SE collapses.
    CHECK(std::stod(fields[1]) == doctest::Approx(94.0).epsilon(1e-12));
    CHECK(std::stod(fields[2]) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(std::stoi(fields[7]) == 2);

    // A pairs file that reuses a control is rejected.
    write_file(tmp.file("dup.csv"),
               "treated_id,control_id\n"
               "t1,c1\n"
               "t2,c1\n");
    options.pairs_path = tmp.file("dup.csv");
    CHECK(cmd_did(options) == kExitValidation);
}

TEST_CASE("did on identical outcomes estimates exactly zero") {
    TempDir tmp;
    std::string panel = "unit_id,group,period,outcome\n";
    for (int i = 0; i < 3; ++i) {
        const std::string tid = "t" + std::to_string(i);
        const std::string cid = "c" + std::to_string(i);
        panel += tid + ",1,pre,7\n" + tid + ",1,post,7\n";
        panel += cid + ",0,pre,7\n" + cid + ",0,post,7\n";
    }
    write_file(tmp.file("panel.csv"), panel);
    DidOptions options;
    options.panel_path = tmp.file("panel.csv");
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    REQUIRE(cmd_did(options) == kExitOk);
    const auto fields = split_csv_line(data_lines(read_file(tmp.file("out/did.csv")))[1]);
    CHECK(std::stod(fields[1]) == 0.0);
}

TEST_CASE("did period selection validates labels and honors explicit order") {
    TempDir tmp;
    write_file(tmp.file("panel.csv"), kPanelFixture);
    DidOptions options;
    options.panel_path = tmp.file("panel.csv");
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    options.pre_period = "1998";  // not a period in the file
    options.post_period = "2016";
    CHECK(cmd_did(options) == kExitValidation);

    options.pre_period = "1999";
    options.post_period = "1999";  // must differ
    CHECK(cmd_did(options) == kExitValidation);

    options.pre_period = "2016";  // reversed analysis flips the sign
    options.post_period = "1999";
    options.out_dir = tmp.fresh_out_dir("flipped");
    REQUIRE(cmd_did(options) == kExitOk);
    const auto fields = split_csv_line(data_lines(read_file(tmp.file("flipped/did.csv")))[1]);
    CHECK(std::stod(fields[1]) == doctest::Approx(-94.0).epsilon(1e-9));

    // An explicit period order must cover every label in the file.
    options = DidOptions{};
    options.panel_path = tmp.file("panel.csv");
    options.period_order = {"2016"};
    options.out_dir = tmp.fresh_out_dir("out2");
    CHECK(cmd_did(options) == kExitValidation);

    options.alpha = 1.5;
    CHECK(cmd_did(options) == kExitValidation);
}

TEST_CASE("trend accepts parallel histories and flags divergent ones") {
    TempDir tmp;
    std::string parallel = "unit_id,group,period,outcome\n";
    const std::vector<double> control_post = {0.9, 1.0, 1.1};
    const std::vector<double> treated_post = {5.95, 6.0, 6.05};
    for (int i = 0; i < 3; ++i) {
        const std::string cid = "c" + std::to_string(i);
        const std::string tid = "t" + std::to_string(i);
        parallel += cid + ",0,p1,0\n" + cid + ",0,p2," + std::to_string(control_post[i]) + "\n";
        parallel += tid + ",1,p1,5\n" + tid + ",1,p2," + std::to_string(treated_post[i]) + "\n";
    }
    write_file(tmp.file("parallel.csv"), parallel);

    TrendOptions options;
    options.panel_path = tmp.file("parallel.csv");
    options.out_dir = tmp.fresh_out_dir("out");
    CapturedOutput captured;
    REQUIRE(cmd_trend(options) == kExitOk);

    const auto lines = data_lines(read_file(tmp.file("out/trend.csv")));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "estimate,se,t_stat,p_value,df");
    const auto fields = split_csv_line(lines[1]);
    // Both groups drift by exactly +1, so the differential trend is zero
    // and the p-value is 1.
    CHECK(std::abs(std::stod(fields[0])) < 1e-12);
    CHECK(std::stod(fields[3]) > 0.999);

    const auto means = data_lines(read_file(tmp.file("out/trend_means.csv")));
    REQUIRE(means.size() == 5);  // header + 2 groups x 2 periods
    CHECK(means[0] == "group,period,mean_outcome,n_records");
    const auto first = split_csv_line(means[1]);
    CHECK(first[0] == "0");
    CHECK(first[1] == "p1");
    CHECK(std::stod(fields[2]) == doctest::Approx(0.0).scale(1).epsilon(1e-9));

    // Divergent version: the treated group drifts by +4 instead of +1.
    std::string divergent = "unit_id,group,period,outcome\n";
    const std::vector<double> diverged = {8.9, 9.0, 9.1};
    for (int i = 0; i < 3; ++i) {
        const std::string cid = "c" + std::to_string(i);
        const std::string tid = "t" + std::to_string(i);
        divergent += cid + ",0,p1,0\n" + cid + ",0,p2," + std::to_string(control_post[i]) + "\n";
        divergent += tid + ",1,p1,5\n" + tid + ",1,p2," + std::to_string(diverged[i]) + "\n";
    }
    write_file(tmp.file("divergent.csv"), divergent);
    options.panel_path = tmp.file("divergent.csv");
    options.out_dir = tmp.fresh_out_dir("out2");
    REQUIRE(cmd_trend(options) == kExitOk);
    const auto dfields = split_csv_line(data_lines(read_file(tmp.file("out2/trend.csv")))[1]);
    CHECK(std::stod(dfields[0]) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(std::stod(dfields[3]) < 0.001);
}

TEST_CASE("trend requires explicit periods when more than two exist") {
    TempDir tmp;
    std::string panel = "unit_id,group,period,outcome\n";
    const std::vector<std::string> periods = {"p1", "p2", "p3"};
    for (int i = 0; i < 3; ++i) {
        const std::string cid = "c" + std::to_string(i);
        const std::string tid = "t" + std::to_string(i);
        for (int p = 0; p < 3; ++p) {
            panel += cid + ",0," + periods[p] + "," +
                     std::to_string(1.0 + i * 0.1 + p * (0.2 + 0.05 * i)) + "\n";
            panel += tid + ",1," + periods[p] + "," +
                     std::to_string(2.0 + i * 0.2 + p * (0.3 - 0.05 * i)) + "\n";
        }
    }
    write_file(tmp.file("panel.csv"), panel);

    TrendOptions options;
    options.panel_path = tmp.file("panel.csv");
    options.out_dir = tmp.fresh_out_dir("out");
    CapturedOutput captured;
    CHECK(cmd_trend(options) == kExitValidation);  // three periods, no flags

    options.first_period = "p1";
    options.second_period = "p2";
    CHECK(cmd_trend(options) == kExitOk);

    options.second_period = "p9";
    CHECK(cmd_trend(options) == kExitValidation);

    options.first_period = "";  // giving only one flag is an error
    options.second_period = "p2";
    CHECK(cmd_trend(options) == kExitValidation);
}

TEST_CASE("simulate writes one summary row per scenario and strategy") {
    TempDir tmp;
    SimulateOptions options;
    options.table = 4;
    options.n_reps = 6;
    options.seed = 777;
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    REQUIRE(cmd_simulate(options) == kExitOk);
    CHECK(captured.out.str().find("table 4: 6 replications, seed 777") != std::string::npos);

    const auto lines = data_lines(read_file(tmp.file("out/table4.csv")));
    REQUIRE(lines.size() == 10);  // header + 3 scenarios x 3 strategies
    CHECK(lines[0] == "scenario,strategy,mean,sd,median,mad,coverage,mean_ci_length");
    const std::vector<std::string> scenarios = {"d=2", "d=4", "d=8"};
    const std::vector<std::string> strategies = {"none", "half", "full"};
    for (int s = 0; s < 3; ++s)
        for (int g = 0; g < 3; ++g) {
            const auto fields = split_csv_line(lines[1 + 3 * s + g]);
            REQUIRE(fields.size() == 8);
            CHECK(fields[0] == scenarios[s]);
            CHECK(fields[1] == strategies[g]);
            const double coverage = std::stod(fields[6]);
            CHECK(coverage >= 0.0);
            CHECK(coverage <= 1.0);
        }

    const auto manifest = nlohmann::json::parse(read_file(tmp.file("out/manifest.json")));
    CHECK(manifest.at("table") == 4);
    CHECK(manifest.at("n_reps") == 6);
    CHECK(manifest.at("strategies") == nlohmann::json({"none", "half", "full"}));
    CHECK(manifest.at("scenarios").size() == 3);
    CHECK(manifest.at("outputs") == nlohmann::json({"table4.csv"}));
}

TEST_CASE("simulate is byte-identical for one seed and differs across seeds") {
    TempDir tmp;
    SimulateOptions options;
    options.table = 4;
    options.n_reps = 5;
    options.seed = 424242;

    CapturedOutput captured;
    options.out_dir = tmp.fresh_out_dir("a");
    REQUIRE(cmd_simulate(options) == kExitOk);
    options.out_dir = tmp.fresh_out_dir("b");
    REQUIRE(cmd_simulate(options) == kExitOk);
    const std::string a = read_file(tmp.file("a/table4.csv"));
    CHECK(a == read_file(tmp.file("b/table4.csv")));
    CHECK(read_file(tmp.file("a/manifest.json")) == read_file(tmp.file("b/manifest.json")));

    options.seed = 424243;
    options.out_dir = tmp.fresh_out_dir("c");
    REQUIRE(cmd_simulate(options) == kExitOk);
    CHECK(a != read_file(tmp.file("c/table4.csv")));
}

TEST_CASE("simulate applies config overrides and rejects unknown keys") {
    TempDir tmp;
    write_file(tmp.file("config.json"),
               R"({"table": 6, "delta_hist_list": [-2.0], "n_total": 120})");
    SimulateOptions options;
    options.n_reps = 5;
    options.seed = 3;
    options.config_path = tmp.file("config.json");
    options.out_dir = tmp.fresh_out_dir("out");

    CapturedOutput captured;
    REQUIRE(cmd_simulate(options) == kExitOk);
    const auto lines = data_lines(read_file(tmp.file("out/table6.csv")));
    REQUIRE(lines.size() == 4);  // header + 1 scenario x 3 strategies
    CHECK(split_csv_line(lines[1])[0] == "delta_hist=-2");
    const auto manifest = nlohmann::json::parse(read_file(tmp.file("out/manifest.json")));
    CHECK(manifest.at("config") == tmp.file("config.json"));
    CHECK(manifest.at("scenarios")[0].at("params").at("n_total") == 120);

    // Unknown keys, wrong types, bad JSON, and missing files all fail
    // validation without writing outputs.
    write_file(tmp.file("bad1.json"), R"({"tabel": 4})");
    options.config_path = tmp.file("bad1.json");
    options.out_dir = tmp.fresh_out_dir("bad1");
    CHECK(cmd_simulate(options) == kExitValidation);
    CHECK_FALSE(fs::exists(tmp.file("bad1/manifest.json")));

    write_file(tmp.file("bad2.json"), R"({"d_list": 3})");
    options.config_path = tmp.file("bad2.json");
    CHECK(cmd_simulate(options) == kExitValidation);

    write_file(tmp.file("bad3.json"), "{not json");
    options.config_path = tmp.file("bad3.json");
    CHECK(cmd_simulate(options) == kExitValidation);

    options.config_path = tmp.file("missing.json");
    CHECK(cmd_simulate(options) == kExitValidation);
}

TEST_CASE("simulate validates table and replication counts") {
    TempDir tmp;
    SimulateOptions options;
    options.out_dir = tmp.fresh_out_dir("out");
    CapturedOutput captured;

    options.table = 9;
    CHECK(cmd_simulate(options) == kExitValidation);
    options.table = 3;
    CHECK(cmd_simulate(options) == kExitValidation);
    options.table = 4;
    options.n_reps = 1;
    CHECK(cmd_simulate(options) == kExitValidation);
}

TEST_CASE("simulate calibrates the large-sample table's treated share") {
    TempDir tmp;
    CapturedOutput captured;

    // Default: the slope range is scaled down to hit 24% treated.
    write_file(tmp.file("slope.json"), R"({"n_total": 200, "delta_hist_list": [-2.0]})");
    SimulateOptions options;
    options.table = 7;
    options.n_reps = 4;
    options.seed = 11;
    options.config_path = tmp.file("slope.json");
    options.out_dir = tmp.fresh_out_dir("slope");
    REQUIRE(cmd_simulate(options) == kExitOk);
    auto manifest = nlohmann::json::parse(read_file(tmp.file("slope/manifest.json")));
    CHECK(manifest.at("target_treated_fraction").get<double>() == doctest::Approx(0.24));
    const double scale = manifest.at("calibrated_slope_scale").get<double>();
    CHECK(scale > 0.30);
    CHECK(scale < 0.47);
    CHECK_FALSE(manifest.contains("calibrated_intercept"));
    const auto params = manifest.at("scenarios")[0].at("params");
    CHECK(params.at("beta_low").get<double>() == doctest::Approx(0.2 * scale));
    CHECK(params.at("beta_high").get<double>() == doctest::Approx(0.3 * scale));

    // Alternative: shift the intercept instead.
    write_file(tmp.file("icept.json"),
               R"({"n_total": 200, "delta_hist_list": [-2.0], "calibration": "intercept"})");
    options.config_path = tmp.file("icept.json");
    options.out_dir = tmp.fresh_out_dir("icept");
    REQUIRE(cmd_simulate(options) == kExitOk);
    manifest = nlohmann::json::parse(read_file(tmp.file("icept/manifest.json")));
    const double intercept = manifest.at("calibrated_intercept").get<double>();
    CHECK(intercept < -0.7);
    CHECK(intercept > -1.2);
    CHECK_FALSE(manifest.contains("calibrated_slope_scale"));

    // An explicit intercept disables calibration entirely.
    write_file(tmp.file("fixed.json"),
               R"({"n_total": 300, "delta_hist_list": [-2.0], "intercept": 0.0})");
    options.config_path = tmp.file("fixed.json");
    options.out_dir = tmp.fresh_out_dir("fixed");
    REQUIRE(cmd_simulate(options) == kExitOk);
    manifest = nlohmann::json::parse(read_file(tmp.file("fixed/manifest.json")));
    CHECK_FALSE(manifest.contains("calibrated_slope_scale"));
    CHECK_FALSE(manifest.contains("calibrated_intercept"));

    // Unknown calibration modes are rejected up front.
    write_file(tmp.file("bad.json"), R"({"calibration": "magic"})");
    options.config_path = tmp.file("bad.json");
    options.out_dir = tmp.fresh_out_dir("bad");
    CHECK(cmd_simulate(options) == kExitValidation);
    CHECK_FALSE(fs::exists(tmp.file("bad/manifest.json")));
}

TEST_CASE("csv readers report precise locations for schema violations") {
    TempDir tmp;

    write_file(tmp.file("dup.csv"),
               "unit_id,treated,z1\n"
               "a,1,1.0\n"
               "a,0,2.0\n");
    CHECK_THROWS_WITH_AS(read_covariate_csv(tmp.file("dup.csv")), doctest::Contains(":3:"),
                         ValidationError);

    write_file(tmp.file("flag.csv"),
               "unit_id,treated,z1\n"
               "a,2,1.0\n");
    CHECK_THROWS_WITH_AS(read_covariate_csv(tmp.file("flag.csv")),
                         doctest::Contains("must be 0 or 1"), ValidationError);

    write_file(tmp.file("num.csv"),
               "unit_id,treated,z1\n"
               "a,1,not-a-number\n");
    CHECK_THROWS_WITH_AS(read_covariate_csv(tmp.file("num.csv")),
                         doctest::Contains("finite number"), ValidationError);

    write_file(tmp.file("ragged.csv"),
               "unit_id,treated,z1\n"
               "a,1\n");
    CHECK_THROWS_WITH_AS(read_covariate_csv(tmp.file("ragged.csv")),
                         doctest::Contains("expected 3 fields"), ValidationError);

    write_file(tmp.file("pairs.csv"),
               "treated_id,control_id\n"
               "t1,c1\n"
               "t1,c2\n");
    CHECK_THROWS_WITH_AS(read_pairs_csv(tmp.file("pairs.csv")),
                         doctest::Contains("appears more than once"), ValidationError);

    write_file(tmp.file("panel.csv"),
               "unit_id,group,period,outcome\n"
               "u1,0,p1,1.0\n"
               "u1,0,p9,2.0\n");
    CHECK_THROWS_WITH_AS(read_panel_csv(tmp.file("panel.csv"), {"p1", "p2"}),
                         doctest::Contains("not in the given period order"), ValidationError);

    write_file(tmp.file("empty.csv"), "");
    CHECK_THROWS_WITH_AS(read_csv(tmp.file("empty.csv")), doctest::Contains("empty"),
                         ValidationError);
}

TEST_CASE("output formatting renders ten significant digits and NA") {
    CHECK(format_double(94.0) == "94");
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-3.25) == "-3.25");
    CHECK(format_double(1.959963984540054) == "1.959963985");
    CHECK(format_double(std::nan("")) == "NA");

    TempDir tmp;
    write_text_atomic(tmp.file("x.txt"), "payload");
    CHECK(read_file(tmp.file("x.txt")) == "payload");
    CHECK_FALSE(fs::exists(tmp.file("x.txt.tmp")));
}
