#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <momprop/momprop.hpp>

#include "cli/commands.hpp"
#include "cli/csv.hpp"
#include "cli/report.hpp"

using namespace momprop;
using momprop::cli::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
    json doc() const { return json::parse(out); }
};

Run cli_run(std::vector<std::string> args) {
    args.insert(args.begin(), "momprop");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = momprop::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

// Fresh scratch directory per test case.
struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() / ("momprop_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name)) << text;
        return path(name);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), {}};
}

double sig3(double v) {
    const double scale = std::pow(10.0, 2 - std::floor(std::log10(std::abs(v))));
    return std::round(v * scale) / scale;
}

Vec vec(const json& j) { return momprop::cli::vec_from(j, "test"); }
Mat mat(const json& j) { return momprop::cli::mat_from(j, "test"); }

const char* d9_summary =
    R"({"n": 4, "xbar": [-0.9724726, 1.3202681], "S": [[0.8144316, 0.5688416], [0.5688416, 1.9682059]]})";

}  // namespace

TEST_CASE("CSV parsing", "[cli]") {
    using momprop::cli::parse_csv;
    std::istringstream quoted("\"y\",\"x, a\"\r\n1,\" 2.5\"\r\n\r\n0,-3e-1\r\n");
    const auto t = parse_csv(quoted, "q.csv");
    CHECK(t.header == std::vector<std::string>{"y", "x, a"});
    REQUIRE(t.values.rows() == 2);
    CHECK(t.values(0, 1) == 2.5);
    CHECK(t.values(1, 1) == -0.3);
    CHECK(t.source_rows == std::vector<int>{2, 4});

    auto fails_at = [](const std::string& text, int row, int col) {
        std::istringstream in(text);
        try {
            parse_csv(in, "f.csv");
        } catch (const momprop::cli::CsvError& e) {
            return e.row() == row && e.col() == col;
        }
        return false;
    };
    CHECK(fails_at("", 1, 1));
    CHECK(fails_at("y,y\n1,2\n", 1, 2));
    CHECK(fails_at("y,x\n1,2\n3\n", 3, 2));
    CHECK(fails_at("y,x\n1,2\n3,4,5\n", 3, 3));
    CHECK(fails_at("y,x\n1,2\n3,nan\n", 3, 2));
    CHECK(fails_at("y,x\n1,\"2\n", 2, 2));
    CHECK(fails_at("y,x\n1,2x\n", 2, 2));
}

TEST_CASE("regression columns", "[cli]") {
    std::istringstream in("x1,y,x2\n1,0,2\n3,1,4\n");
    const auto t = momprop::cli::parse_csv(in, "r.csv");
    const auto r = momprop::cli::regression_from(t, "r.csv", true, true);
    CHECK(r.predictors == std::vector<std::string>{"(intercept)", "x1", "x2"});
    CHECK(r.X.row(1) == Eigen::RowVector3d(1, 3, 4));
    CHECK(r.y == Vec{{0.0, 1.0}});
    std::istringstream only_y("y\n1\n2\n");
    CHECK(momprop::cli::regression_from(momprop::cli::parse_csv(only_y, "o"), "o", false, false).X == Mat::Ones(2, 1));
}

TEST_CASE("number formatting", "[cli]") {
    using momprop::cli::format_number;
    CHECK(format_number(0.1, 17) == "0.10000000000000001");
    CHECK(format_number(292.7453, 4) == "292.7");
    CHECK(std::stod(format_number(M_PI, 17)) == M_PI);
    json doc{{"a", 1.0 / 3.0}, {"b", std::nan("")}, {"c", nullptr}};
    momprop::cli::finalize(doc, {{"/c", "because"}});
    CHECK(doc["b"].is_null());
    CHECK(doc["null_reasons"]["/b"] == "not a number");
    CHECK(doc["null_reasons"]["/c"] == "because");
    CHECK(momprop::cli::dump(doc, false).find("0.33333333333333331") != std::string::npos);
}

TEST_CASE("generate", "[cli]") {
    Scratch s;
    REQUIRE(cli_run({"generate", "--fixed", "--out", s.path("c7.csv")}).code == 0);
    const auto t = momprop::cli::read_csv(s.path("c7.csv"));
    CHECK(t.header == std::vector<std::string>{"y"});
    CHECK(Vec(t.values.col(0)) == Vec{{-1.48, 1.08, -2.14, 5.54, 1.54}});

    const auto a = cli_run({"generate", "--model", "linear", "--n", "30", "--p", "2", "--seed", "5"});
    const auto b = cli_run({"generate", "--model", "linear", "--n", "30", "--p", "2", "--seed", "5"});
    const auto c = cli_run({"generate", "--model", "linear", "--n", "30", "--p", "2", "--seed", "6"});
    CHECK(a.out == b.out);
    CHECK(a.out != c.out);

    REQUIRE(cli_run({"generate", "--model", "probit", "--n", "400", "--p", "3", "--seed", "1", "--out", s.path("p.csv")}).code == 0);
    const auto p = momprop::cli::read_csv(s.path("p.csv"));
    const double ones = p.values.col(p.column("y")).sum();
    CHECK(p.values.rows() == 400);
    CHECK(ones > 0.0);
    CHECK(ones < 400.0);

    // A single strongly signed coefficient still yields both classes.
    const auto skew = cli_run({"generate", "--model", "probit", "--n", "3", "--p", "1", "--theta", "50", "--seed", "2"});
    REQUIRE(skew.code == 0);
    std::istringstream sk(skew.out);
    const auto ks = momprop::cli::parse_csv(sk, "skew");
    CHECK(ks.values.col(0).sum() > 0.0);
    CHECK(ks.values.col(0).sum() < 3.0);

    CHECK(cli_run({"generate", "--model", "linear", "--n", "0"}).code == 2);
    CHECK(cli_run({"generate", "--fixed", "--out", s.path("missing/dir/x.csv")}).code == 3);
}

TEST_CASE("fit reproduces the five-point linear example", "[cli]") {
    Scratch s;
    cli_run({"generate", "--fixed", "--out", s.path("c7.csv")});
    const auto r = cli_run({"fit", "--model", "linear", "--method", "mp2", "--g", "1e4", "--A", "0.01", "--B", "0.01",
                            "--data", s.path("c7.csv")});
    REQUIRE(r.code == 0);
    const auto doc = r.doc();
    CHECK(doc["schema"] == 1);
    CHECK(doc["converged"] == true);
    CHECK(doc["iterations"] == 17);
    CHECK(sig3(doc["summary"]["mean"][0].get<double>()) == 0.908);
    CHECK(sig3(doc["summary"]["cov"][0][0].get<double>()) == 2.44);
    CHECK(sig3(doc["summary"]["scalar_mean"].get<double>()) == 12.2);
    CHECK(sig3(doc["summary"]["scalar_var"].get<double>()) == 293.0);
    CHECK(doc["null_reasons"].empty());
    CHECK(doc.contains("wall_time_s"));

    const auto pretty = cli_run({"fit", "--model", "linear", "--method", "mp2", "--data", s.path("c7.csv"), "--pretty"});
    CHECK(pretty.out.find("\"scalar_var\": 292.7") != std::string::npos);
}

TEST_CASE("fit an MVN summary", "[cli]") {
    Scratch s;
    const auto path = s.write("d9.json", d9_summary);
    const auto r = cli_run({"fit", "--model", "mvn", "--method", "mfvb", "--summary", path, "--nu0", "3"});
    REQUIRE(r.code == 0);
    const auto doc = r.doc();
    CHECK(doc["q"]["Sigma"]["dof"].get<double>() == 8.0);

    const MVNData d{4, Vec{{-0.9724726, 1.3202681}}, (Mat(2, 2) << 0.8144316, 0.5688416, 0.5688416, 1.9682059).finished()};
    const auto lib = mvn_mfvb_fit(d, {0.01, 3.0, Mat::Identity(2, 2)});
    CHECK(doc["iterations"] == lib.iterations);
    CHECK(mat(doc["q"]["Sigma"]["scale_matrix"]) == lib.q.Sigma.scale_matrix);

    // Raw observations are summarized the same way.
    Mat X(5, 2);
    X << 0.1, 1.0, -0.4, 2.0, 1.3, 0.2, 0.7, -1.1, 0.0, 0.5;
    std::ostringstream csv;
    momprop::cli::write_csv(csv, {"a", "b"}, X);
    const auto raw = cli_run({"fit", "--model", "mvn", "--method", "exact", "--data", s.write("x.csv", csv.str())});
    REQUIRE(raw.code == 0);
    const auto ex = mvn_exact_posterior(MVNData::from_observations(X), MVNPrior::diffuse(2));
    CHECK(mat(raw.doc()["q"]["Sigma"]["scale_matrix"]) == ex.Sigma.scale_matrix);

    CHECK(cli_run({"fit", "--model", "mvn", "--method", "mp", "--summary", path, "--data", s.path("x.csv")}).code == 2);
    CHECK(cli_run({"fit", "--model", "mvn", "--method", "mp", "--summary", s.write("bad.json", "{\"n\": 4}")}).code == 3);
}

TEST_CASE("probit fit equals the library call bit for bit", "[cli]") {
    Scratch s;
    REQUIRE(cli_run({"generate", "--model", "probit", "--n", "150", "--p", "2", "--seed", "3", "--out", s.path("toy.csv")}).code == 0);
    const auto r = cli_run({"fit", "--model", "probit", "--method", "mp-dm", "--lambda", "0.01", "--data", s.path("toy.csv")});
    REQUIRE(r.code == 0);
    const auto doc = r.doc();

    const auto t = momprop::cli::read_csv(s.path("toy.csv"));
    const auto reg = momprop::cli::regression_from(t, "toy.csv", false, true);
    const auto data = ProbitData::make(reg.y, reg.X);
    const auto lib = probit_mp_fit(data, ProbitPrior::ridge(2, 0.01));
    CHECK(vec(doc["q"]["beta"]["mean"]) == lib.q.beta.mean);
    CHECK(mat(doc["q"]["beta"]["cov"]) == lib.q.beta.cov);
    CHECK(doc["iterations"] == lib.iterations);
}

TEST_CASE("refit from a report returns to the fixed point", "[cli][property]") {
    Scratch s;
    cli_run({"generate", "--fixed", "--out", s.path("c7.csv")});
    cli_run({"generate", "--model", "probit", "--n", "120", "--p", "2", "--seed", "4", "--out", s.path("p.csv")});
    const auto d9 = s.write("d9.json", d9_summary);
    const std::vector<std::vector<std::string>> cases{
        {"--model", "linear", "--data", s.path("c7.csv"), "--method", "mfvb"},
        {"--model", "linear", "--data", s.path("c7.csv"), "--method", "mp1"},
        {"--model", "linear", "--data", s.path("c7.csv"), "--method", "mp2"},
        {"--model", "mvn", "--summary", d9, "--nu0", "3", "--method", "mfvb"},
        {"--model", "mvn", "--summary", d9, "--nu0", "3", "--method", "mp"},
        {"--model", "probit", "--data", s.path("p.csv"), "--intercept", "--method", "laplace"},
        {"--model", "probit", "--data", s.path("p.csv"), "--intercept", "--method", "mfvb"},
        {"--model", "probit", "--data", s.path("p.csv"), "--intercept", "--method", "mp-dm"},
        {"--model", "probit", "--data", s.path("p.csv"), "--intercept", "--method", "mp-quad"},
        {"--model", "probit", "--data", s.path("p.csv"), "--intercept", "--method", "dmvb"},
    };
    for (const auto& base : cases) {
        std::vector<std::string> first{"fit"};
        first.insert(first.end(), base.begin(), base.end());
        auto with_out = first;
        with_out.insert(with_out.end(), {"--out", s.path("first.json")});
        REQUIRE(cli_run(with_out).code == 0);
        auto again = first;
        again.insert(again.end(), {"--init-from", s.path("first.json")});
        const auto r = cli_run(again);
        INFO(base[1] << " " << base.back());
        REQUIRE(r.code == 0);
        const auto a = json::parse(slurp(s.path("first.json")));
        const auto b = r.doc();
        CHECK(b["converged"] == true);
        CHECK(b["iterations"].get<int>() <= 2);
        CHECK(max_abs_diff(vec(a["summary"]["mean"]), vec(b["summary"]["mean"])) < 1e-5);
    }
    CHECK(cli_run({"fit", "--model", "linear", "--method", "mp2", "--data", s.path("c7.csv"), "--init-from", s.path("nope.json")}).code == 3);
    const auto mvn_report = s.path("mvn.json");
    cli_run({"fit", "--model", "mvn", "--method", "mp", "--summary", d9, "--nu0", "3", "--out", mvn_report});
    CHECK(cli_run({"fit", "--model", "linear", "--method", "mp2", "--data", s.path("c7.csv"), "--init-from", mvn_report}).code == 3);
}

TEST_CASE("compare", "[cli]") {
    Scratch s;
    cli_run({"generate", "--fixed", "--out", s.path("c7.csv")});
    const auto lin = cli_run({"compare", "--model", "linear", "--methods", "mfvb,mp1,mp2", "--reference", "exact",
                              "--data", s.path("c7.csv")});
    REQUIRE(lin.code == 0);
    const auto ld = lin.doc();
    REQUIRE(ld["results"].size() == 3);
    for (const auto& [name, acc] : ld["results"][2]["accuracy"].items()) CHECK(std::abs(acc.get<double>() - 1.0) < 1e-3);
    CHECK(ld["results"][0]["accuracy"]["beta[0]"].get<double>() < 0.99);

    const auto mvn = cli_run({"compare", "--model", "mvn", "--methods", "mfvb,mp", "--summary", s.write("d9.json", d9_summary),
                              "--nu0", "3"});
    REQUIRE(mvn.code == 0);
    const auto md = mvn.doc();
    for (const auto& [name, acc] : md["results"][1]["accuracy"].items()) CHECK(std::abs(acc.get<double>() - 1.0) < 1e-3);
    for (const auto& [name, acc] : md["results"][0]["accuracy"].items()) CHECK(acc.get<double>() < 1.0);

    CHECK(cli_run({"compare", "--model", "linear", "--methods", "mp2", "--data", s.path("c7.csv")}).code == 2);
    CHECK(cli_run({"compare", "--model", "linear", "--methods", "mp2,mp-dm", "--data", s.path("c7.csv")}).code == 2);
}

TEST_CASE("compare probit against the Gibbs oracle", "[cli][mc]") {
    Scratch s;
    cli_run({"generate", "--model", "probit", "--n", "200", "--p", "3", "--seed", "7", "--theta", "0.2,0.8,-0.5",
             "--out", s.path("p.csv")});
    ::setenv("MOMPROP_THREADS", "2", 1);
    const auto r = cli_run({"compare", "--model", "probit", "--methods", "laplace,mfvb,mp-dm", "--reference", "gibbs",
                            "--data", s.path("p.csv")});
    ::unsetenv("MOMPROP_THREADS");
    REQUIRE(r.code == 0);
    const auto doc = r.doc();
    CHECK(doc["threads"] == 2);
    const auto& mp = doc["results"][2];
    CHECK(mp["method"] == "mp-dm");
    for (const auto& z : mp["mean_err_se"]) CHECK(std::abs(z.get<double>()) < 3.0);
    CHECK(mp["accuracy"]["beta[0]"].is_null());
    CHECK(doc["null_reasons"].contains("/results/2/accuracy/beta[0]"));

    ::setenv("MOMPROP_THREADS", "zero", 1);
    CHECK(cli_run({"compare", "--model", "probit", "--methods", "laplace,mfvb", "--data", s.path("p.csv")}).code == 2);
    ::unsetenv("MOMPROP_THREADS");
}

TEST_CASE("density output", "[cli]") {
    Scratch s;
    cli_run({"generate", "--fixed", "--out", s.path("c7.csv")});
    for (const std::string name : {"beta[0]", "sigma2"}) {
        const auto r = cli_run({"fit", "--model", "linear", "--method", "mp2", "--data", s.path("c7.csv"),
                                "--emit-density", name, "--density-out", s.path("g.csv")});
        REQUIRE(r.code == 0);
        const auto t = momprop::cli::read_csv(s.path("g.csv"));
        CHECK(t.header == std::vector<std::string>{"point", "value"});
        CHECK(t.values.rows() == 4001);
        const double mass = trapezoid(Vec(t.values.col(0)), Vec(t.values.col(1)));
        CHECK(mass > 0.99);
        CHECK(mass < 1.01);
    }
    CHECK(cli_run({"fit", "--model", "linear", "--method", "mp2", "--data", s.path("c7.csv"), "--emit-density", "beta[0]"}).code == 2);
    CHECK(cli_run({"fit", "--model", "linear", "--method", "mp2", "--data", s.path("c7.csv"), "--emit-density", "mu[0]",
                   "--density-out", s.path("g.csv")}).code == 2);
}

TEST_CASE("toy model", "[cli]") {
    Scratch s;
    const auto path = s.write("toy.json", R"({"mu": [0.5, -1.0], "Sigma": [[1, 0.9], [0.9, 1]], "split": 1})");
    const auto mp = cli_run({"fit", "--model", "toy", "--method", "mp", "--summary", path, "--eps", "1e-12", "--max-iter", "10000"}).doc();
    const auto mf = cli_run({"fit", "--model", "toy", "--method", "mfvb", "--summary", path}).doc();
    CHECK(std::abs(mp["summary"]["cov"][0][0].get<double>() - 1.0) < 1e-10);
    CHECK(std::abs(mf["summary"]["cov"][1][1].get<double>() - 0.19) < 1e-14);
}

TEST_CASE("reports and exit codes", "[cli]") {
    Scratch s;
    cli_run({"generate", "--fixed", "--out", s.path("c7.csv")});
    const auto c7 = s.path("c7.csv");

    const auto capped = cli_run({"fit", "--model", "linear", "--method", "mfvb", "--data", c7, "--max-iter", "3", "--trace"});
    CHECK(capped.code == 0);
    CHECK(capped.doc()["converged"] == false);
    CHECK(capped.doc()["termination"] == "max_iterations");
    CHECK(capped.doc()["trace"].size() == 3);

    // One observation: the exact sigma^2 posterior has shape 0.51, no mean, no variance.
    const auto one = cli_run({"fit", "--model", "linear", "--method", "exact", "--data", s.write("one.csv", "y\n2.0\n")}).doc();
    CHECK(one["summary"]["scalar_mean"].is_null());
    CHECK(one["summary"]["scalar_var"].is_null());
    CHECK(one["null_reasons"].contains("/summary/scalar_var"));
    CHECK(one["summary"]["cov"].is_null());
    CHECK(one["null_reasons"].contains("/summary/cov"));

    CHECK(cli_run({"fit", "--model", "probit", "--method", "mp1", "--data", c7}).code == 2);
    CHECK(cli_run({"fit", "--model", "linear", "--method", "mp-dm", "--data", c7}).code == 2);
    CHECK(cli_run({"fit", "--model", "linear", "--method", "mp2"}).code == 2);
    CHECK(cli_run({"fit", "--model", "linear", "--method", "mp2", "--data", c7, "--eps", "-1"}).code == 2);
    CHECK(cli_run({"fit", "--model", "nope", "--method", "mp2", "--data", c7}).code == 2);
    CHECK(cli_run({}).code == 2);
    CHECK(cli_run({"fit", "--help"}).code == 0);
    CHECK(cli_run({"fit", "--model", "linear", "--method", "mp2", "--data", s.path("missing.csv")}).code == 3);

    const auto bad = cli_run({"fit", "--model", "probit", "--method", "laplace", "--data", s.write("bad.csv", "y,x\n1,2\n0,abc\n")});
    CHECK(bad.code == 3);
    CHECK(bad.err.find("bad.csv:3:2") != std::string::npos);
    const auto nonbinary = cli_run({"fit", "--model", "probit", "--method", "laplace", "--data", s.write("nb.csv", "y,x\n1,2\n\n2,1\n")});
    CHECK(nonbinary.code == 3);
    CHECK(nonbinary.err.find("nb.csv:4:1") != std::string::npos);

    // A constant predictor next to the intercept makes X'X singular.
    const auto singular = s.write("sing.csv", "y,x\n1,1\n2,1\n3,1\n4,1\n");
    CHECK(cli_run({"fit", "--model", "linear", "--method", "exact", "--data", singular, "--intercept"}).code == 4);
}

TEST_CASE("installed binary exit codes", "[cli]") {
    const char* bin = std::getenv("MOMPROP_BIN");
    if (!bin) SKIP("MOMPROP_BIN not set");
    Scratch s;
    auto status = [&](const std::string& args) {
        const int raw = std::system((std::string(bin) + " " + args + " > " + s.path("o.txt") + " 2>&1").c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    CHECK(status("generate --fixed --out " + s.path("c7.csv")) == 0);
    CHECK(status("fit --model linear --method mp2 --data " + s.path("c7.csv")) == 0);
    CHECK(json::parse(slurp(s.path("o.txt")))["iterations"] == 17);
    CHECK(status("fit --model linear --method laplace --data " + s.path("c7.csv")) == 2);
    CHECK(status("fit --model linear --method mp2 --data " + s.path("none.csv")) == 3);
    CHECK(status("fit --model linear --method exact --intercept --data " + s.write("sing.csv", "y,x\n1,1\n2,1\n3,1\n")) == 4);
}
