#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "ebsc/simulation.hpp"

using namespace ebsc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch()
{
    const auto* info = testing::UnitTest::GetInstance()->current_test_info();
    fs::path p = fs::temp_directory_path() / "ebsc-cli-tests" / (std::string(info->test_suite_name()) + "." + info->name());
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s)
{
    std::ofstream out(p, std::ios::binary);
    out << s;
}

fs::path write_series(const fs::path& dir, const Eigen::VectorXd& y, bool design = true)
{
    std::ostringstream os;
    os << (design ? "t,y\n" : "y\n");
    const Eigen::VectorXd t = uniform_grid(static_cast<int>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (design) os << cli::format_number(t(i)) << ",";
        os << cli::format_number(y(i)) << "\n";
    }
    const fs::path p = dir / "data.csv";
    spit(p, os.str());
    return p;
}

Eigen::VectorXd f1_iid(int n, std::uint64_t seed)
{
    return make_function(TestFunction::f1, n) + simulate_noise({NoiseKind::iid, {}, default_sigma}, n, seed);
}

int run(std::vector<std::string> args)
{
    args.insert(args.begin(), "ebsc");
    return cli::run(args);
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST(ParseData, DelimitersHeadersAndComments)
{
    auto d = cli::parse_data("# comment\nt;y\n0;1.5\n0.5;2\n1;-3e-1\n", false);
    EXPECT_TRUE(d.has_design);
    ASSERT_EQ(d.n(), 3);
    EXPECT_DOUBLE_EQ(d.y(2), -0.3);
    d = cli::parse_data("1\n2\n3\n4\n", false);
    EXPECT_FALSE(d.has_design);
    EXPECT_DOUBLE_EQ(d.t(3), 1.0);
    d = cli::parse_data("0\t1\n1\t2\r\n", false);
    EXPECT_EQ(d.n(), 2);
    d = cli::parse_data("  0  1\n 1 2\n", false);
    EXPECT_TRUE(d.has_design);
}

TEST(ParseData, ErrorsNameTheLine)
{
    try {
        cli::parse_data("y\n1\n2\nabc\n", false);
        FAIL();
    } catch (const cli::parse_failure& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    EXPECT_THROW(cli::parse_data("1,2,3\n", false), cli::parse_failure);
    EXPECT_THROW(cli::parse_data("", false), cli::parse_failure);
    EXPECT_THROW(cli::parse_data("0,1\n1,2\n3,4\n", false), precondition_error);
    EXPECT_THROW(cli::parse_data("0,1\n0,2\n", false), precondition_error);
    try {
        cli::parse_data("1\nnan\n3\n", false);
        FAIL();
    } catch (const precondition_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(ParseData, InterpolatesMissingOnRequest)
{
    EXPECT_THROW(cli::parse_data("1\nNA\n3\n", false), precondition_error);
    const auto d = cli::parse_data("1\nNA\n\n3\nnan\n", true);
    // The blank line is skipped, NA sits between 1 and 3, the trailing gap is held.
    ASSERT_EQ(d.n(), 4);
    EXPECT_DOUBLE_EQ(d.y(1), 2.0);
    EXPECT_DOUBLE_EQ(d.y(3), 3.0);
    EXPECT_EQ(d.interpolated, 2);
}

TEST(FormatNumber, RoundTripsAndIsLocaleFree)
{
    for (double v : {0.1, -1e-300, 3.0, 1.0 / 3.0, 123456789.125}) EXPECT_EQ(std::stod(cli::format_number(v)), v);
    EXPECT_EQ(cli::format_number(0.5), "0.5");
    EXPECT_EQ(cli::format_number(std::nan("")), "nan");
}

TEST(CmdFit, WritesArtifacts)
{
    const auto dir = scratch();
    const int n = 200;
    const auto input = write_series(dir, f1_iid(n, 1));
    ASSERT_EQ(run({"fit", input.string(), "--out-dir", (dir / "out").string(), "--seed", "3"}), 0);
    for (const char* f : {"fit.json", "curve.csv", "spectrum.csv", "autocorr.csv", "tq.csv"})
        EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
    const json j = load_json(dir / "out" / "fit.json");
    EXPECT_GE(j["q_hat"].get<int>(), 1);
    EXPECT_LE(j["q_hat"].get<int>(), 6);
    EXPECT_EQ(j["per_q"].size(), 6u);
    const std::string curve = slurp(dir / "out" / "curve.csv");
    EXPECT_EQ(curve.rfind("# ebsc 1.0.0 config=", 0), 0u);
    EXPECT_NE(curve.find("\nt,y,fhat,band_lo,band_hi\n"), std::string::npos);
    EXPECT_EQ(count_lines(curve), n + 2);
    EXPECT_EQ(curve.find('\r'), std::string::npos);
    EXPECT_EQ(count_lines(slurp(dir / "out" / "tq.csv")), 6 + 2);
    EXPECT_EQ(count_lines(slurp(dir / "out" / "autocorr.csv")), n + 2);
}

TEST(CmdFit, FixedOrder)
{
    const auto dir = scratch();
    const auto input = write_series(dir, f1_iid(150, 2), false);
    ASSERT_EQ(run({"fit", input.string(), "--fixed-q", "2", "--out-dir", dir.string()}), 0);
    const json j = load_json(dir / "fit.json");
    ASSERT_EQ(j["per_q"].size(), 1u);
    EXPECT_EQ(j["per_q"][0]["q"].get<int>(), 2);
    EXPECT_EQ(j["q_hat"].get<int>(), 2);
}

TEST(CmdFit, NoiselessInput)
{
    const auto dir = scratch();
    const auto input = write_series(dir, make_function(TestFunction::f1, 500));
    ASSERT_EQ(run({"fit", input.string(), "--out-dir", dir.string()}), 0);
    const double s2 = load_json(dir / "fit.json")["sigma2hat"].get<double>();
    RecordProperty("sigma2hat", std::to_string(s2));
    EXPECT_LE(s2, 1e-4);
}

TEST(CmdFit, ExitCodes)
{
    const auto dir = scratch();
    spit(dir / "bad.csv", "y\n1\n2\nxyz\n");
    EXPECT_EQ(run({"fit", (dir / "bad.csv").string(), "--out-dir", dir.string()}), 2);
    spit(dir / "short.csv", "1\n2\n3\n4\n5\n");
    EXPECT_EQ(run({"fit", (dir / "short.csv").string(), "--out-dir", dir.string()}), 3);
    std::string withnan;
    for (int i = 0; i < 40; ++i) withnan += i == 17 ? "nan\n" : std::to_string(i % 7) + "\n";
    spit(dir / "nan.csv", withnan);
    EXPECT_EQ(run({"fit", (dir / "nan.csv").string(), "--out-dir", dir.string()}), 3);
    EXPECT_EQ(run({"fit", (dir / "nan.csv").string(), "--interpolate-missing", "--out-dir", dir.string()}), 0);
    EXPECT_EQ(run({"fit", (dir / "missing.csv").string()}), 2);
    EXPECT_EQ(run({"bogus"}), 2);
    EXPECT_EQ(run({"fit"}), 2);
    EXPECT_EQ(run({"--help"}), 0);
    // Constant data is a pure null-space fit, which carries a flag.
    const auto flat = write_series(dir, Eigen::VectorXd::Constant(60, 1.0));
    EXPECT_EQ(run({"fit", flat.string(), "--fixed-q", "2", "--out-dir", dir.string()}), 0);
    EXPECT_EQ(run({"fit", flat.string(), "--fixed-q", "2", "--strict", "--out-dir", dir.string()}), 4);
}

TEST(CmdFit, ByteDeterministic)
{
    const auto dir = scratch();
    const auto input = write_series(dir, f1_iid(180, 4));
    ASSERT_EQ(run({"fit", input.string(), "--seed", "9", "--out-dir", (dir / "a").string()}), 0);
    ASSERT_EQ(run({"fit", input.string(), "--seed", "9", "--out-dir", (dir / "b").string()}), 0);
    for (const char* f : {"fit.json", "curve.csv", "spectrum.csv", "autocorr.csv", "tq.csv"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    ASSERT_EQ(run({"fit", input.string(), "--seed", "10", "--out-dir", (dir / "c").string()}), 0);
    EXPECT_NE(slurp(dir / "a" / "curve.csv"), slurp(dir / "c" / "curve.csv"));
}

TEST(CmdFit, SeedFromEnvironment)
{
    const auto dir = scratch();
    const auto input = write_series(dir, f1_iid(100, 5));
    ::setenv("EBSC_SEED", "42", 1);
    ASSERT_EQ(run({"fit", input.string(), "--out-dir", (dir / "a").string()}), 0);
    ::unsetenv("EBSC_SEED");
    EXPECT_EQ(load_json(dir / "a" / "fit.json")["meta"]["seed"].get<std::uint64_t>(), 42u);
    ASSERT_EQ(run({"fit", input.string(), "--seed", "42", "--out-dir", (dir / "b").string()}), 0);
    EXPECT_EQ(slurp(dir / "a" / "curve.csv"), slurp(dir / "b" / "curve.csv"));
}

TEST(CmdCredible, RetainedCountAndWidths)
{
    const auto dir = scratch();
    const int n = 150;
    const auto input = write_series(dir, f1_iid(n, 6));
    ASSERT_EQ(run({"fit", input.string(), "--fixed-q", "2", "--out-dir", dir.string()}), 0);
    const std::string fj = (dir / "fit.json").string();
    ASSERT_EQ(run({"credible", fj, "--alpha", "0.05", "--draws", "20000", "--seed", "1", "--out-dir", (dir / "a").string()}), 0);
    ASSERT_EQ(run({"credible", fj, "--alpha", "0.32", "--draws", "20000", "--seed", "1", "--out-dir", (dir / "b").string()}), 0);
    ASSERT_EQ(run({"credible", fj, "--alpha", "0.05", "--draws", "20000", "--seed", "1", "--out-dir", (dir / "c").string()}), 0);
    const json a = load_json(dir / "a" / "credible.json");
    EXPECT_EQ(a["retained"].get<int>(), 19000);
    EXPECT_EQ(a["radius"].get<double>(), load_json(dir / "c" / "credible.json")["radius"].get<double>());
    EXPECT_EQ(slurp(dir / "a" / "bands.csv"), slurp(dir / "c" / "bands.csv"));

    auto bands = [](const std::string& text) {
        std::istringstream in(text);
        std::string line;
        std::getline(in, line);
        std::getline(in, line);
        std::vector<std::pair<double, double>> out;
        while (std::getline(in, line)) {
            std::vector<double> v;
            std::stringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
            out.emplace_back(v[2], v[3]);
        }
        return out;
    };
    const auto wide = bands(slurp(dir / "a" / "bands.csv"));
    const auto narrow = bands(slurp(dir / "b" / "bands.csv"));
    ASSERT_EQ(wide.size(), static_cast<std::size_t>(n));
    ASSERT_EQ(narrow.size(), wide.size());
    for (std::size_t i = 0; i < wide.size(); ++i)
        EXPECT_GT(wide[i].second - wide[i].first, narrow[i].second - narrow[i].first) << i;
}

TEST(CmdCredible, MalformedInput)
{
    const auto dir = scratch();
    spit(dir / "fit.json", "{\"n\": 3,");
    EXPECT_EQ(run({"credible", (dir / "fit.json").string(), "--out-dir", dir.string()}), 2);
    spit(dir / "fit.json", "{\"n\": 3}");
    EXPECT_EQ(run({"credible", (dir / "fit.json").string(), "--out-dir", dir.string()}), 2);
}

TEST(CmdSimulate, DeterministicTableRow)
{
    const auto dir = scratch();
    const std::vector<std::string> base{"simulate", "--f", "f1", "--noise", "ar1:0.5", "--n", "120", "--M", "3", "--seed", "7"};
    auto a = base, b = base;
    a.insert(a.end(), {"--out-dir", (dir / "a").string()});
    b.insert(b.end(), {"--threads", "2", "--out-dir", (dir / "b").string()});
    ASSERT_EQ(run(a), 0);
    ASSERT_EQ(run(b), 0);
    const std::string ta = slurp(dir / "a" / "table1_row.csv");
    EXPECT_EQ(ta, slurp(dir / "b" / "table1_row.csv"));
    EXPECT_NE(ta.find("function,noise,n,M,q_mode,A_f_x1e3,A_R_x1e3,q_recovery"), std::string::npos);
    EXPECT_EQ(count_lines(ta), 3);
    EXPECT_EQ(run({"simulate", "--f", "f9", "--out-dir", dir.string()}), 2);
    EXPECT_EQ(run({"simulate", "--noise", "ar7:1", "--out-dir", dir.string()}), 2);
}

TEST(CmdSimulate, ReferenceBand)
{
    const auto dir = scratch();
    ASSERT_EQ(run({"simulate", "--f", "f1", "--noise", "iid", "--n", "500", "--M", "50", "--fixed-q", "2", "--seed", "7",
                   "--out-dir", dir.string()}),
              0);
    const json j = load_json(dir / "result.json");
    const double a = j["scenarios"][0]["A_f"].get<double>();
    RecordProperty("A_f", std::to_string(a));
    EXPECT_NEAR(a, 3.187e-3, 0.3 * 3.187e-3);
}

TEST(CmdSimulate, HardScenarioCompletes)
{
    const auto dir = scratch();
    EXPECT_EQ(run({"simulate", "--f", "f3", "--noise", "ar1:0.9", "--M", "5", "--out-dir", dir.string()}), 0);
    const json j = load_json(dir / "result.json");
    EXPECT_TRUE(j["scenarios"][0].contains("not_converged"));
    EXPECT_GT(j["scenarios"][0]["A_f"].get<double>(), 0.0);
}
