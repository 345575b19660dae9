#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "ghlab/cli_io.hpp"

namespace ghlab {

/// Kinds an experiment runs on when the config does not name any.
inline std::vector<EndKind> default_kinds(const std::string& experiment) {
    if (experiment == "indicial") return {EndKind::ALF, EndKind::ALG};
    if (experiment == "commutator") return {kTorusFiberedKinds.begin(), kTorusFiberedKinds.end()};
    return {kAllKinds.begin(), kAllKinds.end()};
}

inline std::vector<double> eps_or(const Config& cfg, std::vector<double> fallback) {
    return cfg.eps_list.empty() ? fallback : cfg.eps_list;
}

/// Runs one named experiment (not "all") as configured. `quick` selects coarse grids.
inline std::vector<SweepRecord> run_experiment(const std::string& name, const Config& cfg, bool quick = false) {
    auto kinds = cfg.kinds.empty() ? default_kinds(name) : cfg.kinds;
    std::vector<SweepRecord> out;
    auto append = [&](std::vector<SweepRecord> rs) { out.insert(out.end(), rs.begin(), rs.end()); };
    const double eps0 = eps_or(cfg, {0.5}).front();

    for (auto kind : kinds) {
        ModelEnd end = config_end(cfg, kind, eps0);
        if (name == "geometry-check") {
            GeometryCheckParams gp;
            if (cfg.n_rho) {
                gp.coarse = *cfg.n_rho;
                gp.fine = 2 * *cfg.n_rho - 1;
            }
            if (cfg.tolerance) gp.exact_tol = *cfg.tolerance;
            append(run_bogomolny_check(end, gp));
            ModeZeroParams mp;
            mp.eps_list = eps_or(cfg, mp.eps_list);
            if (!cfg.deltas.empty()) mp.delta_list = cfg.deltas;
            if (cfg.n_rho) mp.n_rho = *cfg.n_rho;
            if (cfg.n_ang1) mp.n_ang1 = *cfg.n_ang1;
            if (cfg.n_ang2) mp.n_ang2 = *cfg.n_ang2;
            if (cfg.tolerance) mp.tol = *cfg.tolerance;
            append(run_mode_zero_check(end, mp));
        } else if (name == "harmonic") {
            HarmonicParams hp;
            if (quick) hp.resolutions = {16, 32, 64};
            if (!cfg.resolutions.empty()) hp.resolutions = cfg.resolutions;
            if (!cfg.deltas.empty()) hp.deltas = cfg.deltas;
            if (cfg.n_ang1) hp.n_ang1 = *cfg.n_ang1;
            if (cfg.n_ang2) hp.n_ang2 = *cfg.n_ang2;
            for (double e : eps_or(cfg, {0.5})) append(run_harmonic_convergence(end.with_eps(e), hp));
        } else if (name == "poincare") {
            PoincareParams pp;
            pp.eps_list = eps_or(cfg, pp.eps_list);
            pp.seed = cfg.seed;
            pp.threads = cfg.threads;
            if (quick) pp.samples = 20;
            if (cfg.samples) pp.samples = *cfg.samples;
            if (cfg.n_fiber) pp.n_fiber = *cfg.n_fiber;
            append(run_poincare_sweep(end, pp));
        } else if (name == "indicial") {
            IndicialParams ip;
            ip.threads = cfg.threads;
            if (quick) {
                // span stays: shorter truncations shift the dips
                ip.grid.n_ang1 = 12;
                ip.grid.l_max = 2;
            }
            if (cfg.delta_grid) {
                ip.delta_lo = (*cfg.delta_grid)[0];
                ip.step = (*cfg.delta_grid)[1];
                ip.delta_hi = (*cfg.delta_grid)[2];
            }
            if (!cfg.n_list.empty()) ip.n_list = cfg.n_list;
            if (cfg.span) ip.grid.span = *cfg.span;
            if (cfg.n_ang1) ip.grid.n_ang1 = *cfg.n_ang1;
            if (cfg.n_ang2) ip.grid.n_ang2 = *cfg.n_ang2;
            if (cfg.tolerance) ip.location_tol = *cfg.tolerance;
            append(run_indicial_scan(end, ip));
        } else if (name == "uniformity") {
            UniformityParams up;
            up.threads = cfg.threads;
            up.eps_max = cfg.eps_max;
            up.eps_list = eps_or(cfg, up.eps_list);
            if (quick) up.grid.l_max = 2;
            if (!cfg.n_list.empty()) up.n_list = cfg.n_list;
            if (cfg.span) up.grid.span = *cfg.span;
            if (cfg.n_ang1) up.grid.n_ang1 = *cfg.n_ang1;
            if (cfg.n_ang2) up.grid.n_ang2 = *cfg.n_ang2;
            if (cfg.tolerance) up.drift_max = *cfg.tolerance;
            for (double d : cfg.deltas.empty() ? std::vector<double>{-0.5} : cfg.deltas)
                append(run_epsilon_uniformity(end, d, up));
        } else if (name == "kernel") {
            CensusParams cp;
            cp.threads = cfg.threads;
            cp.seed = cfg.seed;
            if (cfg.span) cp.span = *cfg.span;
            if (cfg.n_ang1) cp.n_ang1 = *cfg.n_ang1;
            if (cfg.n_ang2) cp.n_ang2 = *cfg.n_ang2;
            if (cfg.tolerance) cp.tol = *cfg.tolerance;
            auto cases = default_census_cases(kind);
            if (!cfg.deltas.empty() || !cfg.n_list.empty()) {
                // user-chosen (delta, n) grid on the plain domain; expected dimension from the root table
                cases.clear();
                auto ds = cfg.deltas.empty() ? std::vector<double>{-0.5, 0.5} : cfg.deltas;
                auto ns = cfg.n_list.empty() ? std::vector<int>{0} : cfg.n_list;
                for (double d : ds)
                    for (int n : ns)
                        cases.push_back({n == 0 ? "plain" : "oscillatory", d, n, false, n == 0 && d > 0.0 ? 1 : 0});
            }
            for (double e : eps_or(cfg, {0.5})) append(run_kernel_census(end.with_eps(e), cases, cp));
        } else if (name == "adjoint") {
            AdjointParams ap;
            ap.seed = cfg.seed;
            if (!cfg.deltas.empty()) ap.deltas = cfg.deltas;
            if (cfg.samples) ap.samples = *cfg.samples;
            if (cfg.n_rho) ap.n_rho = *cfg.n_rho;
            if (cfg.n_ang1) ap.n_ang1 = *cfg.n_ang1;
            if (cfg.n_ang2) ap.n_ang2 = *cfg.n_ang2;
            if (quick) ap.samples = std::max(10, cfg.samples.value_or(10));
            append(run_adjoint_check(end, ap));
        } else if (name == "commutator") {
            CommutatorParams mp;
            mp.seed = cfg.seed;
            if (cfg.n_rho) mp.n_rho = *cfg.n_rho;
            if (cfg.n_ang1) mp.n_ang1 = *cfg.n_ang1;
            if (cfg.n_ang2) mp.n_ang2 = *cfg.n_ang2;
            if (cfg.n_fiber) mp.n_fiber = *cfg.n_fiber;
            if (!cfg.deltas.empty()) mp.delta = cfg.deltas.front();
            if (cfg.tolerance) mp.tol = *cfg.tolerance;
            for (double e : eps_or(cfg, {0.5})) append(run_splitting_commutator(end.with_eps(e), mp));
        } else {
            throw ConfigError("unknown experiment '" + name + "'");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Acceptance suite

struct CriterionOutcome {
    std::string name;
    bool passed = false;
    double seconds = 0.0;
    double budget = 0.0;
    std::string detail;
    std::vector<SweepRecord> records;
};

struct Criterion {
    std::string name;
    double budget_seconds;
    std::function<std::vector<SweepRecord>(bool quick, const Config& base)> run;
};

inline std::vector<Criterion> acceptance_criteria() {
    auto only = [](std::vector<SweepRecord> rs, const std::string& label) {
        std::vector<SweepRecord> out;
        for (auto& r : rs)
            if (r.label == label) out.push_back(r);
        return out;
    };
    return {
        {"bogomolny identity", 10.0,
         [only](bool q, const Config& b) { return only(run_experiment("geometry-check", b, q), "bogomolny"); }},
        {"mode-0 reduction", 30.0,
         [only](bool q, const Config& b) { return only(run_experiment("geometry-check", b, q), "mode-zero"); }},
        {"harmonic convergence", 120.0, [](bool q, const Config& b) { return run_experiment("harmonic", b, q); }},
        {"poincare", 60.0, [](bool q, const Config& b) { return run_experiment("poincare", b, q); }},
        {"indicial roots", 600.0, [](bool q, const Config& b) { return run_experiment("indicial", b, q); }},
        {"kernel census", 600.0, [](bool q, const Config& b) { return run_experiment("kernel", b, q); }},
        {"adjoint duality", 120.0, [](bool q, const Config& b) { return run_experiment("adjoint", b, q); }},
        {"eps-uniformity", 900.0, [](bool q, const Config& b) { return run_experiment("uniformity", b, q); }},
        {"splitting commutator", 60.0,
         [](bool q, const Config& b) {
             Config c = b;
             c.kinds = {EndKind::ALH};
             return run_experiment("commutator", c, q);
         }},
    };
}

/// Runs every criterion; a criterion passes iff all its records pass and it meets its time budget.
inline std::vector<CriterionOutcome> run_acceptance(bool quick, const Config& base,
                                                    const std::function<void(const CriterionOutcome&)>& report = {}) {
    std::vector<CriterionOutcome> out;
    for (auto& c : acceptance_criteria()) {
        CriterionOutcome o;
        o.name = c.name;
        o.budget = c.budget_seconds;
        auto t0 = std::chrono::steady_clock::now();
        try {
            o.records = c.run(quick, base);
        } catch (const std::exception& e) {
            o.detail = std::string("error: ") + e.what();
        }
        o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        int bad = 0;
        for (auto& r : o.records) bad += r.passed() ? 0 : 1;
        const bool in_time = o.seconds < o.budget;
        o.passed = o.detail.empty() && !o.records.empty() && bad == 0 && in_time;
        if (o.detail.empty()) {
            o.detail = std::to_string(o.records.size() - bad) + "/" + std::to_string(o.records.size()) + " records pass";
            if (!in_time) o.detail += ", over time budget";
            for (auto& r : o.records)
                if (!r.passed()) {
                    o.detail += "; first failure: " + std::string(kind_name(r.kind)) + " " + r.label + " (" +
                                std::string(verdict_name(r.verdict)) + ")";
                    break;
                }
        }
        if (report) report(o);
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace ghlab
