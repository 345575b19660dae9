#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ghlab/model_geometry.hpp"

using namespace ghlab;
constexpr double pi = std::numbers::pi;

namespace {

ModelEnd make(EndKind kind, double eps = 0.5, int k = 1) {
    double lo = is_torus_base(kind) ? 1.0 : 0.0;
    return ModelEnd(kind, 1.0, k, eps, lo, lo + 4.0);
}

BasePoint random_point(const ModelEnd& e, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    BasePoint p;
    p.rho = e.rho_min + u(rng) * (e.rho_max - e.rho_min);
    p.a1 = e.kind == EndKind::ALF ? 0.1 + u(rng) * (pi - 0.2) : u(rng) * angular_period(e.kind, 1);
    p.a2 = u(rng) * angular_period(e.kind, 2);
    return p;
}

}  // namespace

TEST(GeometryScalars, AlfTableRow) {
    ModelEnd e(EndKind::ALF, 1.0, 2, 0.5, 0.0, 3.0);
    auto s = geometry_scalars(e, {std::log(2.0), pi / 2, 0.0});
    EXPECT_NEAR(s.h, 1.5, 1e-15);
    EXPECT_NEAR(s.h_eps, 1.75, 1e-15);
    EXPECT_NEAR(s.omega, 0.5 / std::sqrt(1.75), 1e-15);
    EXPECT_NEAR(s.omega, 0.37796447300922720, 1e-12);
}

TEST(GeometryScalars, AlhConstantH) {
    ModelEnd e(EndKind::ALH, 1.0, 7, 0.5, 1.0, 5.0);
    auto s = geometry_scalars(e, {3.0, 0.2, 0.3});
    EXPECT_DOUBLE_EQ(s.h, 1.0);
    EXPECT_DOUBLE_EQ(s.h_eps, 1.5);
    EXPECT_NEAR(s.omega, 1.0 / std::sqrt(1.5), 1e-15);
    EXPECT_DOUBLE_EQ(s.rho, 3.0);
}

TEST(GeometryScalars, AlhStarLinearH) {
    ModelEnd e(EndKind::ALHstar, 1.0, 1, 0.25, 1.0, 5.0);
    auto s = geometry_scalars(e, {4.0, 0.0, 0.0});
    EXPECT_NEAR(s.h, 5.0, 1e-15);
    EXPECT_NEAR(s.h_eps, 2.25, 1e-15);
    EXPECT_NEAR(s.omega, 2.0 / 3.0, 1e-15);
}

TEST(GeometryScalars, ScaleConsistencyForLogRadius) {
    std::mt19937 rng(3);
    for (auto kind : {EndKind::ALF, EndKind::ALG, EndKind::ALGstar}) {
        auto e = make(kind);
        for (int s = 0; s < 20; ++s) {
            auto p = random_point(e, rng);
            auto g = geometry_scalars(e, p);
            EXPECT_NEAR(g.omega * std::exp(p.rho) * std::sqrt(g.h_eps), 1.0, 1e-14);
        }
    }
}

TEST(GeometryScalars, DomainErrors) {
    auto e = make(EndKind::ALG);
    EXPECT_THROW(geometry_scalars(e, {e.rho_max + 1.0, 0.0, 0.0}), DomainError);
    EXPECT_THROW(geometry_scalars(e, {e.rho_min, 7.0, 0.0}), DomainError);
    EXPECT_THROW(ModelEnd(EndKind::ALF, 1.0, 0, 1.5, 0.0, 1.0), DomainError);
    EXPECT_THROW(ModelEnd(EndKind::ALH, 1.0, 0, 0.5, 0.0, 1.0), DomainError);
    EXPECT_THROW(ModelEnd(EndKind::ALH, -1.0, 0, 0.5, 1.0, 2.0), DomainError);
    EXPECT_THROW(ModelEnd(EndKind::ALG, 1.0, 0, 0.5, 2.0, 1.0), DomainError);
    // h_eps = 1 + eps (c + k rho) turns negative for large rho when k < 0
    EXPECT_THROW(ModelEnd(EndKind::ALHstar, 1.0, -1, 0.5, 1.0, 10.0), DomainError);
}

TEST(Connection, FixedGauges) {
    ModelEnd alf(EndKind::ALF, 1.0, 2, 0.5, 0.0, 1.0);
    auto A = connection_covector(alf, {0.5, pi / 2, 0.0});
    EXPECT_NEAR(A[2], 1.0, 1e-15);
    EXPECT_EQ(A[0], 0.0);
    EXPECT_EQ(A[1], 0.0);

    auto alg = make(EndKind::ALG, 0.5, 5);
    auto B = connection_covector(alg, {1.0, 1.0, 1.0});
    EXPECT_EQ(B[0], 0.0);
    EXPECT_EQ(B[1], 0.0);
    EXPECT_EQ(B[2], 0.0);

    ModelEnd alhs(EndKind::ALHstar, 1.0, 1, 0.5, 1.0, 2.0);
    auto C = connection_covector(alhs, {1.5, 0.3, 1.0});
    EXPECT_NEAR(C[2], 0.3, 1e-15);

    EXPECT_THROW(connection_covector(alf, {0.5, 0.0, 0.0}), SingularGaugeError);
    EXPECT_THROW(connection_covector(alf, {0.5, pi, 0.0}), SingularGaugeError);
}

TEST(MetricBlocks, FiberScalarAndConformalScaling) {
    ModelEnd alh(EndKind::ALH, 1.0, 0, 0.5, 1.0, 4.0);
    auto gh = metric_blocks(alh, {2.0, 0.1, 0.1}, Frame::GH);
    EXPECT_NEAR(gh.fiber_scalar, 0.25 / 1.5, 1e-15);

    std::mt19937 rng(11);
    for (auto kind : kAllKinds) {
        auto e = make(kind);
        for (int s = 0; s < 10; ++s) {
            auto p = random_point(e, rng);
            auto a = metric_blocks(e, p, Frame::GH);
            auto b = metric_blocks(e, p, Frame::CF);
            double om = geometry_scalars(e, p).omega;
            EXPECT_NEAR(b.fiber_scalar / a.fiber_scalar, om * om, 1e-14 * om * om);
            EXPECT_LE((b.base_block - om * om * a.base_block).norm(), 1e-13 * b.base_block.norm());
        }
    }
}

TEST(MetricBlocks, AlgStarBaseBlock) {
    ModelEnd e(EndKind::ALGstar, 1.0, 1, 0.5, 0.0, 2.0);
    auto mb = metric_blocks(e, {1.0, 0.5, 0.5}, Frame::GH);
    // h = c + k log r = 2 at r = e, so h_eps = 1 + 0.5 * 2 = 2.
    const double expected = 2.0 * std::exp(2.0);
    EXPECT_NEAR(mb.base_block(0, 0), expected, 1e-12 * expected);
    EXPECT_NEAR(mb.base_block(1, 1), expected, 1e-12 * expected);
    EXPECT_EQ(mb.base_block(0, 1), 0.0);
}

TEST(MetricBlocks, DeterminantIdentity) {
    std::mt19937 rng(5);
    for (auto kind : kAllKinds) {
        for (double eps : {0.5, 0.125, 1.0 / 256}) {
            auto e = make(kind, eps, 2);
            for (int s = 0; s < 10; ++s) {
                auto p = random_point(e, rng);
                auto mb = metric_blocks(e, p, Frame::GH);
                double det = mb.coordinate_matrix().determinant();
                auto gb = e.base_metric(p.rho, p.a1);
                double he = e.h_eps(p.rho);
                double expect = eps * eps * he * he * gb[0] * gb[1] * gb[2];
                EXPECT_NEAR(det / expect, 1.0, 1e-12) << kind_name(kind);
                EXPECT_GT(mb.fiber_scalar, 0.0);
                EXPECT_GT(he, 0.0);
            }
        }
    }
}

TEST(VolumeTilde, Densities) {
    ModelEnd alf(EndKind::ALF, 1.0, 2, 0.5, 0.0, 1.0);
    EXPECT_DOUBLE_EQ(volume_tilde(alf, {0.5, pi / 2, 0.0}), 1.0);
    EXPECT_NEAR(volume_tilde(alf, {0.5, pi / 6, 0.0}), 0.5, 1e-15);
    auto alh = make(EndKind::ALH);
    EXPECT_DOUBLE_EQ(volume_tilde(alh, {2.0, 0.4, 0.4}), 1.0);
}

TEST(Bogomolny, AnalyticGaugesAreExact) {
    for (auto kind : {EndKind::ALG, EndKind::ALH}) {
        auto e = make(kind, 0.5, 3);
        EXPECT_EQ(bogomolny_residual(e, ChartGrid(e, 9, 8, 8)), 0.0);
    }
    for (auto kind : {EndKind::ALGstar, EndKind::ALHstar}) {
        auto e = make(kind, 0.5, 1);
        EXPECT_LE(bogomolny_residual(e, ChartGrid(e, 9, 8, 8)), 1e-12);
    }
}

TEST(Bogomolny, AlfSecondOrder) {
    ModelEnd e(EndKind::ALF, 1.0, 2, 0.5, 0.0, 2.0);
    double r1 = bogomolny_residual(e, ChartGrid(e, 9, 9, 4));
    double r2 = bogomolny_residual(e, ChartGrid(e, 17, 17, 4));
    ASSERT_GT(r2, 0.0);
    EXPECT_GE(r1 / r2, 3.5);
    EXPECT_LE(r1 / r2, 4.5);
}

TEST(HarmonicH, DiscreteBaseLaplacianIsSecondOrder) {
    // Radial part of the flat Laplacian in rho = log r: e^{-2 rho}(d_rho^2 + d_rho) for R^3.
    ModelEnd e(EndKind::ALF, 1.0, 2, 0.5, 0.0, 3.0);
    auto worst = [&](int n) {
        double d = (e.rho_max - e.rho_min) / n, w = 0.0;
        for (int i = 1; i < n; ++i) {
            double r = e.rho_min + i * d;
            double hp = e.h(r + d), h0 = e.h(r), hm = e.h(r - d);
            w = std::max(w, std::abs((hp - 2 * h0 + hm) / (d * d) + (hp - hm) / (2 * d)));
        }
        return w;
    };
    double ratio = worst(32) / worst(64);
    EXPECT_NEAR(ratio, 4.0, 0.2);
}

TEST(Ellipticity, IdentitySymbolAndUniformity) {
    for (auto kind : kAllKinds) {
        auto e = make(kind, 0.5, 2);
        ChartGrid g(e, 5, 5, 3);
        auto b = ellipticity_bounds(e, g, 0.0);
        EXPECT_NEAR(b.lambda, 1.0, 1e-12) << kind_name(kind);
        EXPECT_TRUE(std::isfinite(b.Lambda));
        for (double d : {-1.0, 1.0}) EXPECT_NEAR(ellipticity_bounds(e, g, d).lambda, b.lambda, 1e-12);
    }
    ModelEnd alf(EndKind::ALF, 1.0, 2, 0.5, 0.0, 2.0);
    ChartGrid g(alf, 5, 5, 3);
    double l0 = ellipticity_bounds(alf, g, 0.0).lambda;
    for (double eps : {0.25, 0.125}) {
        auto e = alf.with_eps(eps);
        EXPECT_NEAR(ellipticity_bounds(e, g.with_end(e), 0.0).lambda, l0, 1e-12);
    }
}

TEST(Ellipticity, FirstOrderCoefficientsMatchClosedForms) {
    // ALF: Omega^{-2} Delta = d_rho^2 + d_rho + d_theta^2 + cot(theta) d_theta + ...
    ModelEnd alf(EndKind::ALF, 1.0, 2, 0.5, 0.0, 2.0);
    auto pc = detail::point_coefficients(alf, 0.7, 1.1);
    EXPECT_NEAR(pc.a(0, 0), 1.0, 1e-13);
    EXPECT_NEAR(pc.a(1, 1), 1.0, 1e-13);
    EXPECT_NEAR(pc.b(0), 1.0, 1e-12);
    EXPECT_NEAR(pc.b(1), 1.0 / std::tan(1.1), 1e-12);
    EXPECT_NEAR(pc.b(2), 0.0, 1e-12);
    EXPECT_NEAR(pc.b(3), 0.0, 1e-12);
    // ALG: no first-order terms.
    auto alg = make(EndKind::ALG);
    auto q = detail::point_coefficients(alg, 0.3, 1.0);
    EXPECT_NEAR(q.b.norm(), 0.0, 1e-12);
    EXPECT_NEAR(q.a(2, 2), std::exp(0.6), 1e-12);
}

TEST(Twist, CocycleHoldsForIntegerFlux) {
    for (auto kind : {EndKind::ALGstar, EndKind::ALHstar}) {
        for (int k : {-2, 1, 3}) {
            TwistDescriptor tw{kind, k};
            for (int n = -3; n <= 3; ++n)
                for (double other : {0.0, 0.17, 0.5})
                    EXPECT_LE(tw.cocycle_defect(n, other), 1e-12) << kind_name(kind);
        }
    }
    // The untwisted kinds carry no phase.
    TwistDescriptor alg{EndKind::ALG, 4};
    EXPECT_EQ(alg.phase(2, 1, 0.3), cplx(1.0, 0.0));
}

TEST(Twist, PhaseMatchesSeamShift) {
    TwistDescriptor tw{EndKind::ALHstar, 1};
    EXPECT_NEAR(std::abs(tw.phase(2, 1, 0.5) - std::polar(1.0, 1.0)), 0.0, 1e-15);
    TwistDescriptor tg{EndKind::ALGstar, 1};
    EXPECT_NEAR(std::abs(tg.phase(1, 1, 0.25) - std::polar(1.0, pi / 2)), 0.0, 1e-15);
    EXPECT_EQ(tw.phase(2, 2, 0.5), cplx(1.0, 0.0));
}
