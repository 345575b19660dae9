#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ghlab/suite.hpp"

using namespace ghlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("ghlab_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

SweepRecord sample_record(Verdict v, const std::string& label) {
    ModelEnd e(EndKind::ALHstar, 1.5, 2, 0.25, 1.0, 9.0);
    auto r = make_record("kernel", label, e);
    r.delta = -0.5;
    r.n = -1;
    r.n_rho = 65;
    r.sigma_min = 0.1 + 1e-17;
    r.kernel_dim = 1;
    r.defect = 1.0 / 3.0;
    r.drift = std::numeric_limits<double>::infinity();
    r.verdict = v;
    r.tolerance = 1e-6;
    r.seed = 42;
    return r;
}

std::string config_message(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

#ifdef GHLAB_CLI_PATH
int run_cli(const std::string& args, const fs::path& log) {
    std::string cmd = std::string(GHLAB_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace

TEST(Config, ParsesSectionsAndLists) {
    auto cfg = parse_config(R"(# comment line
[end]
kind = ALG, ALGstar   # trailing comment
c = 2.5
k = 3
eps_list = 0.5, 0.25
[grid]
n_rho = 33
span = 16
[experiment]
name = indicial
delta_grid = -2.5:0.05:1.5
n_list = 0, 1, -1
seed = 7
threads = 2
[output]
dir = out
csv = scan.csv
)");
    ASSERT_EQ(cfg.kinds.size(), 2u);
    EXPECT_EQ(cfg.kinds[1], EndKind::ALGstar);
    EXPECT_EQ(cfg.c, 2.5);
    EXPECT_EQ(cfg.k, 3);
    EXPECT_EQ(cfg.eps_list, (std::vector<double>{0.5, 0.25}));
    EXPECT_EQ(*cfg.n_rho, 33);
    EXPECT_EQ(*cfg.span, 16.0);
    EXPECT_EQ(cfg.experiment, "indicial");
    EXPECT_EQ((*cfg.delta_grid)[1], 0.05);
    EXPECT_EQ(cfg.n_list, (std::vector<int>{0, 1, -1}));
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.threads, 2);
    EXPECT_EQ(fs::path(cfg.csv_path("indicial")), fs::path("out") / "scan.csv");
    EXPECT_EQ(fs::path(cfg.json_path("indicial")), fs::path("out") / "indicial.json");
    EXPECT_EQ(parse_config("[end]\nkind = all\n").kinds.size(), 5u);
}

TEST(Config, ErrorsNameTheLineAndRule) {
    EXPECT_EQ(config_message("[end]\nfoo = 1\n"), "line 2: unknown key 'foo' in [end]");
    EXPECT_EQ(config_message("[nope]\n"), "line 1: unknown section [nope]");
    EXPECT_EQ(config_message("[end]\nc = 1\nc = 2\n"), "line 3: duplicate key 'end.c'");
    EXPECT_EQ(config_message("[end]\neps = 0.5\neps_list = 0.25\n"), "line 3: give either eps or eps_list");
    EXPECT_EQ(config_message("c = 1\n"), "line 1: key 'c' outside a section");
    EXPECT_EQ(config_message("[end]\nc = abc\n"), "line 2: expected a number, got 'abc'");
    EXPECT_EQ(config_message("[end]\nkind = ALX\n").rfind("line 2:", 0), 0u);
    EXPECT_EQ(config_message("[experiment]\ndelta_grid = 0:1\n"), "line 2: delta_grid must be lo:step:hi");
}

TEST(Config, SemanticRules) {
    EXPECT_EQ(config_message("[end]\neps = 1.5\n"), "eps ∈ (0,1)");
    EXPECT_EQ(config_message("[end]\nkind = ALH\n[grid]\nrho_min = 0\n"), "rho_min > 0 (R+ base of ALH)");
    EXPECT_EQ(config_message("[end]\nkind = ALG\n[grid]\nrho_min = 0\n"), "");
    EXPECT_EQ(config_message("[experiment]\nsamples = 9\n"), "samples >= 10");
    EXPECT_EQ(config_message("[experiment]\nname = uniformity\ndelta = -0.02\n"),
              "uniformity delta ∈ (-1,0) away from 0 and -1");
    EXPECT_EQ(config_message("[experiment]\nname = kernel\ndelta = 1.0\n"),
              "kernel delta ∈ (-1,1) with margin 0.1 from integers");
    EXPECT_EQ(config_message("[end]\nkind = ALF\n[experiment]\nname = commutator\n"),
              "commutator needs a torus-fibered kind");
    EXPECT_EQ(config_message("[experiment]\nresolutions = 32, 64\n"), "at least 3 resolutions");
    EXPECT_EQ(config_message("[experiment]\nname = bogus\n"), "unknown experiment 'bogus'");
}

TEST(Config, MissingFileIsIoError) {
    try {
        load_config("/nonexistent/dir/ghlab.cfg");
        FAIL() << "no throw";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/ghlab.cfg"), std::string::npos);
    }
}

#ifdef GHLAB_CONFIG_DIR
TEST(Config, ShippedSamplesParse) {
    int seen = 0;
    for (auto& f : fs::directory_iterator(GHLAB_CONFIG_DIR)) {
        if (f.path().extension() != ".cfg") continue;
        EXPECT_NO_THROW(load_config(f.path().string())) << f.path();
        ++seen;
    }
    EXPECT_GE(seen, 4);
}
#endif

TEST(Csv, HeaderAndRoundTrip) {
    std::vector<SweepRecord> rs{sample_record(Verdict::Pass, "plain"), sample_record(Verdict::Fail, "with, \"quotes\"")};
    auto text = to_csv(rs);
    auto header = text.substr(0, text.find('\n'));
    EXPECT_EQ(header,
              "experiment,label,kind,c,k,eps,delta,n,n_rho,n_ang1,n_ang2,n_fiber,rho_min,rho_max,sigma_min,kernel_dim,"
              "max_ratio_excess,residual,convergence_order,defect,drift,aux,verdict,tolerance,seed");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    auto back = parse_csv(text);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].label, "with, \"quotes\"");
    EXPECT_EQ(back[0].kind, EndKind::ALHstar);
    EXPECT_EQ(back[0].sigma_min, rs[0].sigma_min);  // %.17g is lossless
    EXPECT_EQ(back[0].defect, 1.0 / 3.0);
    EXPECT_TRUE(std::isinf(back[0].drift));
    EXPECT_TRUE(std::isnan(back[0].residual));
    EXPECT_EQ(back[1].verdict, Verdict::Fail);
    EXPECT_EQ(back[0].seed, 42u);
    EXPECT_EQ(to_csv(back), text);
}

TEST(Csv, RejectsForeignHeader) {
    EXPECT_THROW(parse_csv("a,b,c\n1,2,3\n"), IoError);
    EXPECT_THROW(parse_csv(""), IoError);
    auto text = to_csv({sample_record(Verdict::Pass, "x")});
    EXPECT_THROW(parse_csv(text + "kernel,short\n"), IoError);
}

TEST(Json, SummaryCountsAndWorstCase) {
    std::vector<SweepRecord> rs{sample_record(Verdict::Pass, "a"), sample_record(Verdict::Indeterminate, "b"),
                                sample_record(Verdict::Fail, "c"), sample_record(Verdict::Fail, "d")};
    auto j = summarize("kernel", rs);
    EXPECT_EQ(j["pass_count"], 1);
    EXPECT_EQ(j["fail_count"], 2);
    EXPECT_EQ(j["indeterminate_count"], 1);
    EXPECT_EQ(j["worst_case"]["label"], "c");
    EXPECT_TRUE(j["worst_case"]["drift"].is_null());
    EXPECT_FALSE(j.contains("experiments"));

    rs.erase(rs.begin() + 2, rs.end());
    EXPECT_EQ(summarize("kernel", rs)["worst_case"]["label"], "b");
    rs.pop_back();
    EXPECT_TRUE(summarize("kernel", rs)["worst_case"].is_null());

    auto other = sample_record(Verdict::Pass, "z");
    other.experiment = "adjoint";
    rs.push_back(other);
    auto mixed = summarize("all", rs);
    ASSERT_TRUE(mixed.contains("experiments"));
    EXPECT_EQ(mixed["experiments"].size(), 2u);
    EXPECT_EQ(mixed["experiments"][1]["experiment"], "adjoint");
}

TEST(Emit, WritesBothFilesAndOverwrites) {
    auto d = scratch_dir("emit");
    auto csv = (d / "nested" / "k.csv").string(), json = (d / "nested" / "k.json").string();
    std::vector<SweepRecord> rs{sample_record(Verdict::Pass, "a")};
    emit("kernel", rs, csv, json);
    auto first = slurp(csv);
    EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 2);
    rs[0].verdict = Verdict::Fail;
    emit("kernel", rs, csv, json);
    EXPECT_NE(slurp(csv), first);
    EXPECT_EQ(nlohmann::json::parse(slurp(json))["fail_count"], 1);
    EXPECT_THROW(emit("kernel", {}, csv, json), PreconditionError);
    try {
        emit("kernel", rs, "/proc/ghlab/forbidden.csv", json);
        FAIL() << "no throw";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/proc/ghlab/forbidden.csv"), std::string::npos);
    }
}

TEST(ExitCodes, FailDominatesIndeterminate) {
    EXPECT_EQ(exit_code_for({sample_record(Verdict::Pass, "a")}), kExitPass);
    EXPECT_EQ(exit_code_for({sample_record(Verdict::Pass, "a"), sample_record(Verdict::Indeterminate, "b")}),
              kExitIndeterminate);
    EXPECT_EQ(exit_code_for({sample_record(Verdict::Indeterminate, "b"), sample_record(Verdict::Fail, "c")}),
              kExitFail);
}

TEST(Suite, RunExperimentHonoursConfig) {
    Config cfg;
    cfg.kinds = {EndKind::ALH};
    cfg.eps_list = {0.5};
    cfg.samples = 10;
    cfg.seed = 9;
    auto rs = run_experiment("poincare", cfg);
    ASSERT_EQ(rs.size(), 10u + 2u);
    for (auto& r : rs) {
        EXPECT_EQ(r.kind, EndKind::ALH);
        EXPECT_EQ(r.seed, 9u);
        EXPECT_TRUE(r.passed());
    }
    EXPECT_THROW(run_experiment("nope", cfg), ConfigError);
    EXPECT_EQ(acceptance_criteria().size(), 9u);
}

#ifdef GHLAB_CLI_PATH
TEST(Cli, GeometryCheckWritesOutputs) {
    auto d = scratch_dir("cli_geo");
    std::ofstream(d / "geo.cfg") << "[end]\nkind = ALF, ALH\n";
    int code = run_cli("--config " + (d / "geo.cfg").string() + " --out " + (d / "out").string() + " geometry-check",
                       d / "log.txt");
    EXPECT_EQ(code, kExitPass) << slurp(d / "log.txt");
    auto rs = parse_csv(slurp(d / "out" / "geometry-check.csv"));
    EXPECT_FALSE(rs.empty());
    auto j = nlohmann::json::parse(slurp(d / "out" / "geometry-check.json"));
    EXPECT_EQ(j["pass_count"], int(rs.size()));
    EXPECT_TRUE(j["worst_case"].is_null());
}

TEST(Cli, SameSeedGivesByteIdenticalOutput) {
    auto d = scratch_dir("cli_seed");
    std::ofstream(d / "p.cfg") << "[end]\nkind = ALH\neps = 0.5\n[experiment]\nsamples = 10\n";
    auto args = [&](const std::string& out) {
        return "--config " + (d / "p.cfg").string() + " --seed 5 --out " + (d / out).string() + " poincare";
    };
    ASSERT_EQ(run_cli(args("a"), d / "a.log"), kExitPass) << slurp(d / "a.log");
    ASSERT_EQ(run_cli(args("b"), d / "b.log"), kExitPass);
    EXPECT_EQ(slurp(d / "a" / "poincare.csv"), slurp(d / "b" / "poincare.csv"));
    EXPECT_EQ(slurp(d / "a" / "poincare.json"), slurp(d / "b" / "poincare.json"));
    EXPECT_NE(slurp(d / "a.log").find("seed = 5"), std::string::npos);
}

TEST(Cli, ConfigAndIoErrorsMapToExitCodes) {
    auto d = scratch_dir("cli_err");
    std::ofstream(d / "bad.cfg") << "[end]\neps = 1.5\n";
    EXPECT_EQ(run_cli("--config " + (d / "bad.cfg").string() + " geometry-check", d / "bad.log"), kExitConfig);
    EXPECT_NE(slurp(d / "bad.log").find("eps ∈ (0,1)"), std::string::npos);

    std::ofstream(d / "alh.cfg") << "[end]\nkind = ALH\n[grid]\nrho_min = 0\n";
    EXPECT_EQ(run_cli("--config " + (d / "alh.cfg").string() + " geometry-check", d / "alh.log"), kExitConfig);
    EXPECT_NE(slurp(d / "alh.log").find("rho_min > 0"), std::string::npos);

    EXPECT_EQ(run_cli("--config " + (d / "missing.cfg").string() + " geometry-check", d / "miss.log"), kExitIo);
    EXPECT_NE(slurp(d / "miss.log").find("missing.cfg"), std::string::npos);

    EXPECT_EQ(run_cli("no-such-command", d / "cmd.log"), kExitConfig);
}
#endif

TEST(Fixtures, ParseAndAgreeWithTheirSummaries) {
    const fs::path dir = GHLAB_FIXTURE_DIR;
    for (auto name : {"convergence.csv", "indicial_alf.csv", "uniformity.csv", "poincare.csv"}) {
        auto rs = parse_csv(slurp(dir / name));
        ASSERT_FALSE(rs.empty()) << name;
        for (auto& r : rs) EXPECT_TRUE(r.passed()) << name << " " << r.label;
    }

    // harmonic summaries: refitting the level rows reproduces the reported order,
    // and series reported exact stay at rounding level on every level
    auto conv = parse_csv(slurp(dir / "convergence.csv"));
    std::vector<double> h, err, rel;
    int fitted = 0, exact = 0;
    for (auto& r : conv) {
        if (r.label.rfind("level:", 0) == 0) {
            h.push_back(r.aux);
            err.push_back(r.residual);
            rel.push_back(r.defect);
            continue;
        }
        ASSERT_GE(h.size(), 3u) << r.label;
        if (std::isnan(r.convergence_order)) {
            for (double x : rel) EXPECT_LE(x, r.tolerance) << kind_name(r.kind) << " " << r.label;
            ++exact;
        } else {
            EXPECT_NEAR(fitted_order(h, err), r.convergence_order, 1e-6) << kind_name(r.kind) << " " << r.label;
            ++fitted;
        }
        h.clear();
        err.clear();
        rel.clear();
    }
    EXPECT_GT(fitted, 0);
    EXPECT_GT(exact, 0);

    // poincare summaries are the worst of their samples
    auto pc = parse_csv(slurp(dir / "poincare.csv"));
    for (auto& r : pc) {
        if (r.label != "random") continue;
        double worst = 0.0;
        int n = 0;
        for (auto& s : pc)
            if (s.label == "sample" && s.kind == r.kind && s.eps == r.eps) {
                worst = std::max(worst, s.max_ratio_excess);
                ++n;
            }
        EXPECT_EQ(n, 100);
        EXPECT_EQ(worst, r.max_ratio_excess);
    }
}
