#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ghlab/experiments.hpp"

using namespace ghlab;

namespace {

const SweepRecord& find(const std::vector<SweepRecord>& rs, const std::string& label, double delta = NAN, int n = 0) {
    for (auto& r : rs)
        if (r.label == label && r.n == n && (std::isnan(delta) || r.delta == delta)) return r;
    throw std::runtime_error("record not found: " + label);
}

std::vector<SweepRecord> with_label(const std::vector<SweepRecord>& rs, const std::string& label) {
    std::vector<SweepRecord> out;
    for (auto& r : rs)
        if (r.label == label) out.push_back(r);
    return out;
}

bool all_pass(const std::vector<SweepRecord>& rs) {
    return std::all_of(rs.begin(), rs.end(), [](const SweepRecord& r) { return r.passed(); });
}

}  // namespace

TEST(Records, EchoInputsAndVerdictNames) {
    ModelEnd e(EndKind::ALGstar, 2.0, 3, 0.25, 0.0, 5.0);
    auto r = make_record("x", "y", e);
    EXPECT_EQ(r.kind, EndKind::ALGstar);
    EXPECT_EQ(r.c, 2.0);
    EXPECT_EQ(r.k, 3);
    EXPECT_EQ(r.eps, 0.25);
    EXPECT_EQ(r.rho_max, 5.0);
    EXPECT_TRUE(std::isnan(r.sigma_min));
    EXPECT_EQ(r.kernel_dim, -1);
    for (auto v : {Verdict::Pass, Verdict::Fail, Verdict::Indeterminate}) EXPECT_EQ(parse_verdict(verdict_name(v)), v);
    EXPECT_THROW(parse_verdict("maybe"), TypeError);
}

TEST(ParallelMap, OrderedAndThreadCountIndependent) {
    std::function<double(std::size_t)> f = [](std::size_t i) { return std::sin(double(i)); };
    auto a = parallel_map<double>(37, 1, f), b = parallel_map<double>(37, 4, f);
    EXPECT_EQ(a, b);
    std::function<int(std::size_t)> g = [](std::size_t i) -> int {
        if (i == 5) throw PreconditionError("boom");
        return int(i);
    };
    EXPECT_THROW(parallel_map<int>(9, 3, g), PreconditionError);
}

TEST(Helpers, FittedOrderAndDeltaGrid) {
    EXPECT_NEAR(fitted_order({0.1, 0.05, 0.025}, {3e-2, 7.5e-3, 1.875e-3}), 2.0, 1e-12);
    auto d = delta_grid(-2.5, 1.5, 0.05);
    ASSERT_EQ(d.size(), 81u);
    EXPECT_EQ(d.front(), -2.5);
    EXPECT_NEAR(d.back(), 1.5, 1e-12);
    for (double z : {-2.0, -1.0, 0.0, 1.0}) EXPECT_NE(std::find(d.begin(), d.end(), z), d.end()) << z;
}

TEST(Helpers, PotentialCutoff) {
    ModelEnd e(EndKind::ALG, 1.0, 1, 0.5, 0.0, 40.0);
    EXPECT_EQ(potential_cutoff(e, 0, 1e8), 40.0);
    double cut = potential_cutoff(e, 1, 1e8);
    EXPECT_LT(cut, 40.0);
    EXPECT_NEAR(fiber_potential(e, cut), 1e8, 1e8 * 1e-6);
    EXPECT_GT(potential_cutoff(e, 1, 1e12), cut);
    EXPECT_LT(potential_cutoff(e, 2, 1e8), cut);
    // ALH: h is constant, so the potential is flat and nothing is cut
    ModelEnd f(EndKind::ALH, 1.0, 1, 0.5, 1.0, 40.0);
    EXPECT_EQ(potential_cutoff(f, 1, 1e8), 40.0);
}

TEST(Helpers, CollarProbeAddsRowsAndRaisesSigma) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 10.0);
    auto op = apply_dirichlet(assemble_radial_operator(e, 0.0, 0, 0.0, 81), BoundaryCondition::DirichletBoth);
    auto S = collar_probe_matrix(op, 1.5);
    // unknowns at rho in [0.125, 1.5] and [8.5, 9.875]: 12 on each side
    EXPECT_EQ(S.rows(), op.matrix.rows() + 24);
    EXPECT_GE(smallest_singular_value(S).sigma_min, smallest_singular_value(op).sigma_min);
}

TEST(GeometryCheck, AllKindsPass) {
    for (auto kind : kAllKinds) {
        auto [lo, hi] = kind == EndKind::ALH || kind == EndKind::ALHstar ? std::pair{1.0, 9.0} : std::pair{0.0, 8.0};
        ModelEnd e(kind, 1.0, 1, 0.5, lo, hi);
        auto b = run_bogomolny_check(e);
        EXPECT_TRUE(all_pass(b)) << kind_name(kind);
        if (kind == EndKind::ALF) {
            EXPECT_GE(b[0].defect, 3.5);
            EXPECT_LE(b[0].defect, 4.5);
        } else {
            EXPECT_LE(b[0].residual, 1e-12);
        }
        auto m = run_mode_zero_check(e);
        EXPECT_EQ(m.size(), 4u);
        EXPECT_TRUE(all_pass(m)) << kind_name(kind);
    }
}

TEST(Harmonic, AlfExamples) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    auto rs = run_harmonic_convergence(e);
    EXPECT_EQ(rs.size(), 6u * 4u);  // 3 harmonics x 2 deltas, each 3 levels + summary
    EXPECT_TRUE(all_pass(rs));
    auto& one = find(rs, "u=1", 0.0);
    EXPECT_LE(one.residual, 1e-10);
    EXPECT_TRUE(std::isnan(one.convergence_order));
    auto& dec = find(rs, "u=exp(-rho)", 0.0);
    EXPECT_GE(dec.convergence_order, 1.7);
    EXPECT_LE(dec.convergence_order, 2.3);
    // the level rows reproduce the fitted order from CSV-visible columns alone
    std::vector<double> h, err;
    for (auto& r : rs)
        if (r.label == "level:u=exp(-rho)" && r.delta == 0.0) {
            h.push_back((r.rho_max - r.rho_min) / (r.n_rho - 1));
            err.push_back(r.residual);
        }
    ASSERT_EQ(h.size(), 3u);
    EXPECT_NEAR(fitted_order(h, err), dec.convergence_order, 1e-12);
}

TEST(Harmonic, AlhStarH) {
    ModelEnd e(EndKind::ALHstar, 1.0, 1, 0.5, 1.0, 9.0);
    auto rs = run_harmonic_convergence(e);
    EXPECT_TRUE(all_pass(rs));
    auto& h = find(rs, "u=h", 0.5);
    EXPECT_GE(h.convergence_order, 1.7);
    EXPECT_LE(h.convergence_order, 2.3);
}

TEST(Harmonic, OrderStabilizesUnderRefinement) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    HarmonicParams coarse, fine;
    coarse.resolutions = {16, 32, 64};
    fine.resolutions = {32, 64, 128};
    coarse.deltas = fine.deltas = {0.5};
    auto a = find(run_harmonic_convergence(e, coarse), "u=exp(-rho)");
    auto b = find(run_harmonic_convergence(e, fine), "u=exp(-rho)");
    EXPECT_TRUE(b.passed());
    EXPECT_TRUE(!a.passed() || b.passed());
    EXPECT_LT(std::abs(b.convergence_order - 2.0), std::abs(a.convergence_order - 2.0));
}

TEST(Harmonic, Preconditions) {
    ModelEnd e(EndKind::ALH, 1.0, 1, 0.5, 1.0, 9.0);
    HarmonicParams p;
    p.resolutions = {32, 64};
    EXPECT_THROW(run_harmonic_convergence(e, p), PreconditionError);
    p.resolutions = {32, 64, 64};
    EXPECT_THROW(run_harmonic_convergence(e, p), PreconditionError);
}

TEST(Poincare, AlhExamples) {
    ModelEnd e(EndKind::ALH, 1.0, 1, 0.5, 1.0, 9.0);
    PoincareParams p;
    p.eps_list = {0.5, 0.25};
    p.samples = 20;
    auto all = run_poincare_sweep(e, p);
    ASSERT_EQ(all.size(), 2u * (20u + 2u));
    EXPECT_TRUE(all_pass(all));
    auto rs = with_label(all, "random");
    auto eq = with_label(all, "equality");
    auto samples = with_label(all, "sample");
    ASSERT_EQ(rs.size(), 2u);
    ASSERT_EQ(eq.size(), 2u);
    ASSERT_EQ(samples.size(), 40u);
    EXPECT_LE(rs[0].max_ratio_excess, 1.01);
    EXPECT_EQ(rs[0].n_fiber, 64);
    EXPECT_NEAR(eq[0].max_ratio_excess, 1.0, 1e-6);
    // bound eps Omega / sqrt(h_eps) = eps / (1 + eps c) on ALH
    EXPECT_NEAR(rs[0].aux, 0.5 / 1.5, 1e-15);
    EXPECT_NEAR(rs[1].aux, 0.25 / 1.25, 1e-15);
    // the summary is the worst sample at its eps
    for (std::size_t i = 0; i < rs.size(); ++i) {
        double worst = 0.0;
        for (auto& s : samples)
            if (s.eps == rs[i].eps) {
                EXPECT_EQ(s.tolerance, rs[i].tolerance);
                worst = std::max(worst, s.max_ratio_excess);
            }
        EXPECT_EQ(worst, rs[i].max_ratio_excess);
    }
}

TEST(Poincare, BoundLinearInSmallEps) {
    ModelEnd e(EndKind::ALG, 1.0, 1, 0.5, 0.0, 8.0);
    PoincareParams p;
    p.eps_list = {std::ldexp(1.0, -7), std::ldexp(1.0, -8)};
    p.samples = 10;
    auto rs = with_label(run_poincare_sweep(e, p), "random");
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_NEAR(rs[1].aux / rs[0].aux, 0.5, std::ldexp(1.0, -7));
}

TEST(Poincare, DeterministicInSeed) {
    ModelEnd e(EndKind::ALHstar, 1.0, 1, 0.5, 1.0, 9.0);
    PoincareParams p;
    p.eps_list = {0.5};
    p.samples = 10;
    p.seed = 3;
    auto a = with_label(run_poincare_sweep(e, p), "random");
    p.threads = 2;
    auto b = with_label(run_poincare_sweep(e, p), "random");
    EXPECT_EQ(a[0].max_ratio_excess, b[0].max_ratio_excess);
    p.seed = 4;
    auto c = with_label(run_poincare_sweep(e, p), "random");
    EXPECT_NE(a[0].max_ratio_excess, c[0].max_ratio_excess);
    p.samples = 9;
    EXPECT_THROW(run_poincare_sweep(e, p), PreconditionError);
}

TEST(Indicial, AlfDipsAtIntegers) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    IndicialParams p;
    p.grid.l_max = 1;
    auto rs = run_indicial_scan(e, p);
    auto& s0 = find(rs, "dip-locations");
    EXPECT_TRUE(s0.passed());
    EXPECT_EQ(s0.kernel_dim, 4);  // minima at -2, -1, 0, 1
    EXPECT_EQ(s0.defect, 0.0);
    EXPECT_TRUE(find(rs, "no-dip", NAN, 1).passed());
    EXPECT_TRUE(find(rs, "no-dip", NAN, -1).passed());
}

TEST(Indicial, AlgOscillatoryModeHasNoDip) {
    ModelEnd e(EndKind::ALG, 1.0, 1, 0.5, 0.0, 8.0);
    IndicialParams p;
    p.delta_lo = -1.0;
    p.delta_hi = 1.0;
    p.step = 0.1;
    p.n_list = {1};
    p.grid.span = 6.0;
    p.grid.n_ang1 = 8;
    auto rs = run_indicial_scan(e, p);
    auto& s = find(rs, "no-dip", NAN, 1);
    EXPECT_TRUE(s.passed());
    EXPECT_GE(s.sigma_min, 0.5 * s.aux);
}

TEST(Indicial, LongTruncationDeepensDips) {
    // the dip depth scales with the truncation length; at span 160 sigma(-1/2) clears 10x the dips
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    IndicialParams p;
    p.delta_lo = -1.5;
    p.delta_hi = 0.5;
    p.n_list = {0};
    p.grid.span = 160.0;
    p.grid.l_max = 0;
    auto rs = run_indicial_scan(e, p);
    auto& s = find(rs, "dip-locations");
    EXPECT_TRUE(s.passed());
    EXPECT_GE(s.aux, 10.0);
}

TEST(Uniformity, AlfRatioAndMonotone) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    UniformityParams p;
    p.grid.l_max = 1;
    auto rs = run_epsilon_uniformity(e, -0.5, p);
    EXPECT_TRUE(all_pass(rs));
    EXPECT_LE(find(rs, "ratio").defect, 3.0);
    // sigma grows as eps shrinks on the oscillatory modes
    std::vector<double> s1;
    for (auto& r : rs)
        if (r.label == "point" && r.n == 1) s1.push_back(r.sigma_min);
    ASSERT_EQ(s1.size(), 8u);
    for (std::size_t i = 1; i < s1.size(); ++i) EXPECT_GT(s1[i], s1[i - 1]);
}

TEST(Uniformity, Deterministic) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    UniformityParams p;
    p.grid.span = 8.0;
    p.grid.l_max = 0;
    p.eps_list = {0.5, 0.125, 0.00390625};
    p.n_list = {0, 1};
    auto a = run_epsilon_uniformity(e, -0.5, p);
    p.threads = 3;
    auto b = run_epsilon_uniformity(e, -0.5, p);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].sigma_min, b[i].sigma_min);
        EXPECT_EQ(a[i].verdict, b[i].verdict);
    }
}

TEST(Uniformity, Preconditions) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    UniformityParams p;
    EXPECT_THROW(run_epsilon_uniformity(e, 0.2, p), PreconditionError);
    EXPECT_THROW(run_epsilon_uniformity(e, -0.02, p), PreconditionError);
    EXPECT_THROW(run_epsilon_uniformity(e, -0.99, p), PreconditionError);
    p.eps_list = {0.5, 0.25};
    EXPECT_THROW(run_epsilon_uniformity(e, -0.5, p), PreconditionError);  // under two decades
    p.eps_list = {0.5, 0.001};
    EXPECT_THROW(run_epsilon_uniformity(e, -0.5, p), PreconditionError);  // below 2^-8
    p.eps_list = {0.75, 0.005};
    EXPECT_THROW(run_epsilon_uniformity(e, -0.5, p), PreconditionError);  // above eps_max
}

TEST(Kernel, AlfPlainAndPositiveWeight) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    std::vector<CensusCase> cases{{"plain", -0.5, 0, false, 0}, {"plain", 0.5, 0, false, 1}};
    auto rs = run_kernel_census(e, cases);
    EXPECT_EQ(rs[0].kernel_dim, 0);
    EXPECT_EQ(rs[1].kernel_dim, 1);
    EXPECT_TRUE(all_pass(rs));
    for (auto& r : rs) EXPECT_GE(r.defect, 1e3);
}

TEST(Kernel, AlgPositiveWeightLinearHarmonic) {
    ModelEnd e(EndKind::ALG, 1.0, 1, 0.5, 0.0, 8.0);
    auto rs = run_kernel_census(e, {{"plain", 0.5, 0, false, 1}, {"oscillatory", 0.25, 1, false, 0}});
    EXPECT_EQ(rs[0].kernel_dim, 1);
    EXPECT_EQ(rs[1].kernel_dim, 0);
    EXPECT_TRUE(all_pass(rs));
}

TEST(Kernel, AlhStarAugmentedSolvable) {
    ModelEnd e(EndKind::ALHstar, 1.0, 1, 0.5, 1.0, 9.0);
    auto rs = run_kernel_census(e, {{"augmented", -0.25, 0, true, 0}});
    EXPECT_EQ(rs[0].kernel_dim, 0);
    EXPECT_EQ(rs[0].aux, 20.0);
    EXPECT_TRUE(rs[0].passed());
}

TEST(Kernel, MissingGapIsIndeterminate) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    CensusParams p;
    p.gap_min = 1e30;
    auto rs = run_kernel_census(e, {{"plain", -0.5, 0, false, 0}}, p);
    EXPECT_EQ(rs[0].verdict, Verdict::Indeterminate);
}

TEST(Kernel, Preconditions) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    EXPECT_THROW(run_kernel_census(e, {{"plain", 0.05, 0, false, 0}}), PreconditionError);
    EXPECT_THROW(run_kernel_census(e, {{"plain", 0.95, 0, false, 0}}), PreconditionError);
    EXPECT_THROW(run_kernel_census(e, {{"augmented", -0.25, 0, true, 0}}), PreconditionError);
}

TEST(Adjoint, AlfOrderAndNegativeControl) {
    ModelEnd e(EndKind::ALF, 1.0, 1, 0.5, 0.0, 8.0);
    AdjointParams p;
    p.deltas = {-0.5};
    auto rs = run_adjoint_check(e, p);
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_TRUE(all_pass(rs));
    EXPECT_GE(rs[0].convergence_order, 1.7);
    EXPECT_LE(rs[0].convergence_order, 2.3);
    EXPECT_GT(rs[1].defect, 0.1);
}

TEST(Adjoint, TorusKindsPass) {
    for (auto kind : {EndKind::ALG, EndKind::ALH}) {
        ModelEnd e(kind, 1.0, 1, 0.5, kind == EndKind::ALH ? 1.0 : 0.0, kind == EndKind::ALH ? 9.0 : 8.0);
        AdjointParams p;
        p.deltas = {kind == EndKind::ALG ? 0.0 : 0.25};
        p.n_rho = 17;
        p.n_ang1 = 12;
        auto rs = run_adjoint_check(e, p);
        EXPECT_TRUE(all_pass(rs)) << kind_name(kind);
    }
    AdjointParams bad;
    bad.samples = 5;
    EXPECT_THROW(run_adjoint_check(ModelEnd(EndKind::ALH, 1.0, 1, 0.5, 1.0, 9.0), bad), PreconditionError);
}

TEST(Commutator, TorusKindsCommute) {
    for (auto kind : kTorusFiberedKinds) {
        ModelEnd e(kind, 1.0, 1, 0.5, kind == EndKind::ALH || kind == EndKind::ALHstar ? 1.0 : 0.0, 4.0);
        auto rs = run_splitting_commutator(e);
        ASSERT_EQ(rs.size(), 3u);
        EXPECT_TRUE(all_pass(rs)) << kind_name(kind);
        for (auto& r : rs) EXPECT_LE(r.residual, 1e-10);
    }
    EXPECT_THROW(run_splitting_commutator(ModelEnd(EndKind::ALF, 1.0, 1, 0.5, 0.0, 4.0)), PreconditionError);
}
