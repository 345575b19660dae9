// Command-line driver for the sweeps and the acceptance suite.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "ghlab/suite.hpp"

using namespace ghlab;

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool quick = false;
};

bool stochastic(const std::string& name) {
    return name == "poincare" || name == "kernel" || name == "adjoint" || name == "commutator" || name == "all";
}

Config resolve(const Flags& f, const std::string& name) {
    Config cfg = f.config.empty() ? Config{} : load_config(f.config);
    cfg.experiment = name;
    if (!f.out.empty()) cfg.out_dir = f.out;
    if (f.seed) cfg.seed = *f.seed;
    if (f.threads) cfg.threads = *f.threads;
    validate_config(cfg);
    return cfg;
}

int run(const Flags& f, const std::string& name) {
    Config cfg = resolve(f, name);
    if (stochastic(name)) std::cout << "seed = " << cfg.seed << "\n";
    std::vector<SweepRecord> records;
    if (name == "all") {
        auto outcomes = run_acceptance(f.quick, cfg, [](const CriterionOutcome& o) {
            std::printf("%-4s %-22s %7.1fs / %5.0fs  %s\n", o.passed ? "PASS" : "FAIL", o.name.c_str(), o.seconds,
                        o.budget, o.detail.c_str());
            std::fflush(stdout);
        });
        bool all_pass = true;
        for (auto& o : outcomes) {
            records.insert(records.end(), o.records.begin(), o.records.end());
            all_pass = all_pass && o.passed;
        }
        if (!records.empty()) emit(name, records, cfg.csv_path(name), cfg.json_path(name));
        std::cout << "wrote " << cfg.csv_path(name) << " and " << cfg.json_path(name) << "\n";
        if (!all_pass) {
            int code = exit_code_for(records);
            return code == kExitPass ? kExitFail : code;
        }
        return kExitPass;
    }
    records = run_experiment(name, cfg, f.quick);
    int pass = 0, fail = 0, indet = 0;
    for (auto& r : records) {
        pass += r.verdict == Verdict::Pass;
        fail += r.verdict == Verdict::Fail;
        indet += r.verdict == Verdict::Indeterminate;
        if (!r.passed())
            std::cout << verdict_name(r.verdict) << ": " << kind_name(r.kind) << " " << r.label
                      << " eps=" << format_double(r.eps) << " delta=" << format_double(r.delta) << " n=" << r.n << "\n";
    }
    std::cout << name << ": " << pass << " pass, " << fail << " fail, " << indet << " indeterminate\n";
    emit(name, records, cfg.csv_path(name), cfg.json_path(name));
    std::cout << "wrote " << cfg.csv_path(name) << " and " << cfg.json_path(name) << "\n";
    return exit_code_for(records);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ghlab: weighted elliptic estimates on Gibbons-Hawking model ends"};
    app.require_subcommand(1);
    Flags f;
    app.add_option("--config", f.config, "configuration file (key = value with [sections])");
    app.add_option("--out", f.out, "output directory for CSV and JSON");
    app.add_option("--seed", f.seed, "random seed (default 0)");
    app.add_option("--threads", f.threads, "worker threads for sweep points")->check(CLI::PositiveNumber);
    app.add_flag("--quick", f.quick, "coarse preset");
    std::string chosen;
    for (auto& name : experiment_names()) {
        auto* sub = app.add_subcommand(name, name == "all" ? "run the acceptance suite" : "run the " + name + " sweep");
        sub->fallthrough();
        sub->callback([&chosen, name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    try {
        return run(f, chosen);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const PreconditionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    }
}
