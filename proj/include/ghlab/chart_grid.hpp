#pragma once

#include <complex>
#include <cstddef>
#include <numbers>

#include "ghlab/model_end.hpp"

namespace ghlab {

using cplx = std::complex<double>;

/// Seam transition of the circle bundle in the fixed gauge.
///
/// Wrapping chart direction 1 (theta for ALGstar, x for ALHstar) shifts the fiber
/// coordinate: u(a1 + P1, a2, t) = u(a1, a2, t + tau(a2)). On mode n this is the
/// phase e^{i n tau}. Direction 2 and the untwisted kinds have tau = 0.
struct TwistDescriptor {
    EndKind kind = EndKind::ALH;
    int k = 0;

    double fiber_shift(int dir, double other) const {
        if (dir != 1 || k == 0) return 0.0;
        if (kind == EndKind::ALGstar) return 2.0 * std::numbers::pi * k * other;
        if (kind == EndKind::ALHstar) return k * other;
        return 0.0;
    }

    cplx phase(int n, int dir, double other) const {
        double tau = fiber_shift(dir, other);
        return tau == 0.0 ? cplx(1.0, 0.0) : std::polar(1.0, n * tau);
    }

    /// |phase(wrap 1 then 2) - phase(wrap 2 then 1)| at a corner with a2 = other.
    double cocycle_defect(int n, double other) const {
        double p2 = angular_period(kind, 2);
        cplx one_then_two = phase(n, 1, other + p2);  // direction-2 wrap carries no phase
        cplx two_then_one = phase(n, 1, other);
        return std::abs(one_then_two - two_then_one);
    }
};

/// Uniform structured grid on the truncated end in chart coordinates.
///
/// rho: n_rho nodes including both ends. Periodic directions: n nodes on [0, P).
/// ALF theta: n_ang1 nodes on [margin, pi - margin] including both ends, or the
/// equator alone if n_ang1 == 1. Fiber: n_fiber nodes on [0, 2 pi).
struct ChartGrid {
    ModelEnd end;
    int n_rho = 2;
    int n_ang1 = 1;
    int n_ang2 = 1;
    int n_fiber = 1;
    double theta_margin = std::numbers::pi / 8.0;
    TwistDescriptor twist;

    ChartGrid() = default;
    ChartGrid(const ModelEnd& e, int nr, int n1, int n2, int nf = 1,
              double margin = std::numbers::pi / 8.0)
        : end(e), n_rho(nr), n_ang1(n1), n_ang2(n2), n_fiber(nf), theta_margin(margin) {
        twist.kind = e.kind;
        twist.k = e.flux();
        validate();
    }

    void validate() const {
        end.validate();
        if (n_rho < 3) throw DomainError("n_rho >= 3 required");
        if (n_ang1 < 1 || n_ang2 < 1 || n_fiber < 1) throw DomainError("grid counts must be positive");
        if (end.kind == EndKind::ALF && n_ang1 == 2) throw DomainError("ALF theta needs 1 or >= 3 nodes");
        if (end.kind == EndKind::ALF && !(theta_margin > 0.0 && theta_margin < std::numbers::pi / 2))
            throw DomainError("theta margin must lie in (0, pi/2)");
    }

    bool periodic(int dir) const { return angular_period(end.kind, dir) > 0.0; }

    double d_rho() const { return (end.rho_max - end.rho_min) / (n_rho - 1); }
    double d_ang(int dir) const {
        int n = dir == 1 ? n_ang1 : n_ang2;
        if (periodic(dir)) return angular_period(end.kind, dir) / n;
        return n == 1 ? 1.0 : (std::numbers::pi - 2.0 * theta_margin) / (n - 1);
    }
    double d_t() const { return 2.0 * std::numbers::pi / n_fiber; }

    double rho(int i) const { return i == n_rho - 1 ? end.rho_max : end.rho_min + i * d_rho(); }
    double ang(int dir, int j) const {
        if (periodic(dir)) return j * d_ang(dir);
        int n = dir == 1 ? n_ang1 : n_ang2;
        return n == 1 ? std::numbers::pi / 2 : theta_margin + j * d_ang(dir);
    }
    double t(int l) const { return l * d_t(); }
    BasePoint point(int i, int j, int k) const { return {rho(i), ang(1, j), ang(2, k)}; }

    int count(int dir) const { return dir == 0 ? n_rho : dir == 1 ? n_ang1 : n_ang2; }
    std::size_t base_size() const { return std::size_t(n_rho) * n_ang1 * n_ang2; }
    std::size_t full_size() const { return base_size() * n_fiber; }
    std::size_t base_index(int i, int j, int k) const {
        return (std::size_t(i) * n_ang1 + j) * n_ang2 + k;
    }
    std::size_t full_index(int i, int j, int k, int l) const { return base_index(i, j, k) * n_fiber + l; }

    /// Boundary of the truncated end: both rho rings, and the theta rims for ALF.
    bool on_boundary(int i, int j) const {
        if (i == 0 || i == n_rho - 1) return true;
        return !periodic(1) && n_ang1 > 1 && (j == 0 || j == n_ang1 - 1);
    }

    ChartGrid with_end(const ModelEnd& e) const { return ChartGrid(e, n_rho, n_ang1, n_ang2, n_fiber, theta_margin); }
};

}  // namespace ghlab
