#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

#include "ghlab/chart_grid.hpp"
#include "ghlab/model_end.hpp"

namespace ghlab {

enum class Frame { GH, CF };

struct GeometryScalars {
    double h, h_eps, omega, rho;
};

/// g = base_block + fiber_scalar * (dt + conn)^2 in chart coordinates (rho, a1, a2, t).
struct MetricBlocks {
    Eigen::Matrix3d base_block;
    double fiber_scalar;
    Eigen::Vector3d conn;

    Eigen::Matrix4d coordinate_matrix() const {
        Eigen::Matrix4d g = Eigen::Matrix4d::Zero();
        g.topLeftCorner<3, 3>() = base_block + fiber_scalar * conn * conn.transpose();
        g.block<3, 1>(0, 3) = fiber_scalar * conn;
        g.block<1, 3>(3, 0) = fiber_scalar * conn.transpose();
        g(3, 3) = fiber_scalar;
        return g;
    }
};

namespace detail {

inline void check_point(const ModelEnd& end, const BasePoint& p, bool open_theta) {
    const double slack = 1e-12 * (1.0 + std::abs(end.rho_max) + std::abs(end.rho_min));
    if (!(p.rho >= end.rho_min - slack && p.rho <= end.rho_max + slack))
        throw DomainError("point outside the annulus [rho_min, rho_max]");
    for (int dir = 1; dir <= 2; ++dir) {
        double a = dir == 1 ? p.a1 : p.a2;
        double period = angular_period(end.kind, dir);
        if (period > 0.0) {
            if (!(a >= 0.0 && a < period)) throw DomainError("angular coordinate outside its fundamental domain");
        } else {
            if (!(a >= 0.0 && a <= std::numbers::pi)) throw DomainError("theta outside [0, pi]");
            if (open_theta && (a <= 0.0 || a >= std::numbers::pi))
                throw SingularGaugeError("ALF chart evaluated at a pole");
        }
    }
}

}  // namespace detail

/// Full 4x4 metric in chart coordinates, templated so complex-step derivatives pass through.
template <class T>
Eigen::Matrix<T, 4, 4> metric4(const ModelEnd& end, T rho, T a1, Frame frame = Frame::GH) {
    auto gb = end.base_metric(rho, a1);
    auto A = end.connection(rho, a1);
    T he = end.h_eps(rho);
    T fib = end.eps * end.eps / he;
    Eigen::Matrix<T, 4, 4> g = Eigen::Matrix<T, 4, 4>::Zero();
    for (int i = 0; i < 3; ++i) {
        g(i, i) = he * gb[i];
        for (int j = 0; j < 3; ++j) g(i, j) += fib * A[i] * A[j];
        g(i, 3) = fib * A[i];
        g(3, i) = fib * A[i];
    }
    g(3, 3) = fib;
    if (frame == Frame::CF) {
        T om = end.omega(rho);
        g *= om * om;
    }
    return g;
}

inline GeometryScalars geometry_scalars(const ModelEnd& end, const BasePoint& p) {
    detail::check_point(end, p, false);
    return {end.h(p.rho), end.h_eps(p.rho), end.omega(p.rho), p.rho};
}

inline std::array<double, 3> connection_covector(const ModelEnd& end, const BasePoint& p) {
    detail::check_point(end, p, end.kind == EndKind::ALF);
    return end.connection(p.rho, p.a1);
}

inline MetricBlocks metric_blocks(const ModelEnd& end, const BasePoint& p, Frame frame) {
    detail::check_point(end, p, end.kind == EndKind::ALF);
    auto gb = end.base_metric(p.rho, p.a1);
    auto A = end.connection(p.rho, p.a1);
    double he = end.h_eps(p.rho);
    double scale = 1.0;
    if (frame == Frame::CF) {
        double om = end.omega(p.rho);
        scale = om * om;
    }
    MetricBlocks mb;
    mb.base_block = Eigen::Matrix3d::Zero();
    for (int i = 0; i < 3; ++i) mb.base_block(i, i) = scale * he * gb[i];
    mb.fiber_scalar = scale * end.eps * end.eps / he;
    mb.conn = Eigen::Vector3d(A[0], A[1], A[2]);
    return mb;
}

/// Chart density of d(rho) ^ Vol_Sigma ^ eta.
inline double volume_tilde(const ModelEnd& end, const BasePoint& p) {
    detail::check_point(end, p, false);
    return end.kind == EndKind::ALF ? std::sin(p.a1) : 1.0;
}

/// Complex-step derivative of an analytic scalar function.
template <class F>
double cs_derivative(F&& f, double x) {
    constexpr double step = 1e-30;
    return std::imag(f(cplx(x, step))) / step;
}

/// Max over grid nodes and coordinate pairs of |dA - *dh|, both sides by centered differences.
inline double bogomolny_residual(const ModelEnd& end, const ChartGrid& grid) {
    const std::array<double, 3> step{grid.d_rho(), grid.n_ang1 > 1 ? grid.d_ang(1) : 1e-3,
                                     grid.n_ang2 > 1 ? grid.d_ang(2) : 1e-3};
    double worst = 0.0;
    for (int i = 0; i < grid.n_rho; ++i)
        for (int j = 0; j < grid.n_ang1; ++j) {
            BasePoint p = grid.point(i, j, 0);
            std::array<double, 3> x{p.rho, p.a1, p.a2};
            auto shifted = [&](int dir, double s) {
                auto y = x;
                y[dir] += s;
                return y;
            };
            // dA_{bc} = d_b A_c - d_c A_b
            std::array<std::array<double, 3>, 3> dA{};
            for (int b = 0; b < 3; ++b) {
                auto xp = shifted(b, step[b]), xm = shifted(b, -step[b]);
                auto Ap = end.connection(xp[0], xp[1]);
                auto Am = end.connection(xm[0], xm[1]);
                for (int c = 0; c < 3; ++c) {
                    double d = (Ap[c] - Am[c]) / (2.0 * step[b]);
                    dA[b][c] += d;
                    dA[c][b] -= d;
                }
            }
            auto gb = end.base_metric(x[0], x[1]);
            double sqrtg = std::sqrt(gb[0] * gb[1] * gb[2]);
            std::array<double, 3> dh{};
            for (int a = 0; a < 3; ++a) {
                auto xp = shifted(a, step[a]), xm = shifted(a, -step[a]);
                dh[a] = (end.h(xp[0]) - end.h(xm[0])) / (2.0 * step[a]);
            }
            // (*dh)_{bc} = orientation * sqrt(g) * eps_{abc} g^{aa} d_a h, cyclic (a,b,c).
            const int cyc[3][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}};
            for (auto& t : cyc) {
                int a = t[0], b = t[1], c = t[2];
                double star = end.orientation() * sqrtg * dh[a] / gb[a];
                worst = std::max(worst, std::abs(dA[b][c] - star));
            }
        }
    return worst;
}

namespace detail {

/// Coefficients of Omega^{-2} Delta on a chart point: second-order a^{ab}, first-order b^a (4D, t last).
struct PointCoefficients {
    Eigen::Matrix4d a;
    Eigen::Vector4d b;
    Eigen::Matrix4d g_cf;
    double omega;
};

inline PointCoefficients point_coefficients(const ModelEnd& end, double rho, double a1) {
    // Omega^{-2} Delta_g = Omega^2 |g_cf|^{-1/2} d_a(Omega^{-2} |g_cf|^{1/2} G_cf^{ab} d_b): everything stays O(1)
    PointCoefficients pc;
    Eigen::Matrix4d gcf = metric4<double>(end, rho, a1, Frame::CF);
    pc.omega = end.omega(rho);
    pc.a = gcf.inverse();
    pc.g_cf = gcf;
    const double pref = pc.omega * pc.omega / std::sqrt(gcf.determinant());
    pc.b.setZero();
    for (int i = 0; i < 2; ++i) {
        for (int col = 0; col < 4; ++col) {
            auto f = [&](cplx z) {
                cplx r = i == 0 ? z : cplx(rho);
                cplx t = i == 1 ? z : cplx(a1);
                Eigen::Matrix<cplx, 4, 4> gc = metric4<cplx>(end, r, t, Frame::CF);
                Eigen::Matrix<cplx, 4, 4> Gc = gc.inverse();
                cplx om = end.omega(r);
                return std::sqrt(gc.determinant()) * Gc(i, col) / (om * om);
            };
            pc.b(col) += pref * cs_derivative(f, i == 0 ? rho : a1);
        }
    }
    return pc;
}

}  // namespace detail

struct EllipticityBounds {
    double lambda;
    double Lambda;
};

/// Principal-symbol eigenvalues of L_delta in g_cf-orthonormal frames, and the largest coefficient magnitude.
inline EllipticityBounds ellipticity_bounds(const ModelEnd& end, const ChartGrid& grid, double delta) {
    EllipticityBounds out{std::numeric_limits<double>::infinity(), 0.0};
    for (int i = 0; i < grid.n_rho; ++i)
        for (int j = 0; j < grid.n_ang1; ++j) {
            BasePoint p = grid.point(i, j, 0);
            auto pc = detail::point_coefficients(end, p.rho, p.a1);
            Eigen::LLT<Eigen::Matrix4d> llt(pc.g_cf);
            Eigen::Matrix4d L = llt.matrixL();
            Eigen::Matrix4d hat = L.transpose() * pc.a * L;
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(hat, Eigen::EigenvaluesOnly);
            out.lambda = std::min(out.lambda, es.eigenvalues().minCoeff());
            Eigen::Vector4d b = pc.b + 2.0 * delta * pc.a.col(0);
            double c = delta * delta * pc.a(0, 0) + delta * pc.b(0);
            double bnorm = std::sqrt(b.dot(pc.g_cf * b));
            out.Lambda = std::max({out.Lambda, es.eigenvalues().cwiseAbs().maxCoeff(), bnorm, std::abs(c)});
        }
    if (!(out.lambda > 0.0)) throw StateError("non-positive ellipticity constant: assembly bug");
    return out;
}

}  // namespace ghlab
