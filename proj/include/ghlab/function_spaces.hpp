#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ghlab/chart_grid.hpp"
#include "ghlab/model_geometry.hpp"

namespace ghlab {

/// Complex samples on a ChartGrid.
///
/// Full functions live on the 4D grid with index ((i*n1 + j)*n2 + k)*nf + l.
/// Mode functions carry one fiber mode n and live on the base grid (fiber index dropped).
/// Values are stored on the fundamental domain; seams are applied when neighbours are read.
struct GridFunction {
    ChartGrid grid;
    std::optional<int> mode;
    Eigen::VectorXcd values;

    static GridFunction full(const ChartGrid& g) {
        return {g, std::nullopt, Eigen::VectorXcd::Zero(Eigen::Index(g.full_size()))};
    }
    static GridFunction on_mode(const ChartGrid& g, int n) {
        return {g, n, Eigen::VectorXcd::Zero(Eigen::Index(g.base_size()))};
    }

    bool is_full() const { return !mode.has_value(); }
    int fiber_count() const { return is_full() ? grid.n_fiber : 1; }
    std::size_t index(int i, int j, int k, int l = 0) const {
        return grid.base_index(i, j, k) * fiber_count() + l;
    }
    cplx& at(int i, int j, int k, int l = 0) { return values[Eigen::Index(index(i, j, k, l))]; }
    cplx at(int i, int j, int k, int l = 0) const { return values[Eigen::Index(index(i, j, k, l))]; }

    /// Fill from f(rho, a1, a2, t); t is ignored for mode functions.
    template <class F>
    static GridFunction sample_full(const ChartGrid& g, F&& f) {
        auto u = full(g);
        for (int i = 0; i < g.n_rho; ++i)
            for (int j = 0; j < g.n_ang1; ++j)
                for (int k = 0; k < g.n_ang2; ++k)
                    for (int l = 0; l < g.n_fiber; ++l)
                        u.at(i, j, k, l) = f(g.rho(i), g.ang(1, j), g.ang(2, k), g.t(l));
        return u;
    }
    template <class F>
    static GridFunction sample_mode(const ChartGrid& g, int n, F&& f) {
        auto u = on_mode(g, n);
        for (int i = 0; i < g.n_rho; ++i)
            for (int j = 0; j < g.n_ang1; ++j)
                for (int k = 0; k < g.n_ang2; ++k) u.at(i, j, k) = f(g.rho(i), g.ang(1, j), g.ang(2, k));
        return u;
    }
};

inline void require_same_grid(const GridFunction& a, const GridFunction& b) {
    const auto &x = a.grid, &y = b.grid;
    if (x.n_rho != y.n_rho || x.n_ang1 != y.n_ang1 || x.n_ang2 != y.n_ang2 || x.n_fiber != y.n_fiber ||
        a.mode != b.mode || x.end.kind != y.end.kind)
        throw TypeError("grid functions live on different grids");
}

/// Fiber average at each base point; the result is constant along fibers.
inline GridFunction project_invariant(const GridFunction& u) {
    if (!u.is_full()) throw TypeError("project_invariant needs a full 4D grid function");
    auto out = u;
    const int nf = u.grid.n_fiber;
    for (std::size_t b = 0; b < u.grid.base_size(); ++b) {
        cplx mean = u.values.segment(Eigen::Index(b * nf), nf).mean();
        out.values.segment(Eigen::Index(b * nf), nf).setConstant(mean);
    }
    return out;
}

inline GridFunction project_oscillatory(const GridFunction& u) {
    auto out = u;
    out.values -= project_invariant(u).values;
    return out;
}

/// u_n(x) = (1/2pi) int u e^{-int} dt by the trapezoid rule on the fiber grid.
inline GridFunction mode_extract(const GridFunction& u, int n) {
    if (!u.is_full()) throw TypeError("mode_extract needs a full 4D grid function");
    const int nf = u.grid.n_fiber;
    if (std::abs(n) > nf / 2 - 1 && !(nf == 1 && n == 0))
        throw RangeError("fiber mode outside the resolvable band |n| <= n_fiber/2 - 1");
    auto out = GridFunction::on_mode(u.grid, n);
    std::vector<cplx> phase(nf);
    for (int l = 0; l < nf; ++l) phase[l] = std::polar(1.0 / nf, -n * u.grid.t(l));
    for (std::size_t b = 0; b < u.grid.base_size(); ++b) {
        cplx s = 0.0;
        for (int l = 0; l < nf; ++l) s += u.values[Eigen::Index(b * nf + l)] * phase[l];
        out.values[Eigen::Index(b)] = s;
    }
    return out;
}

/// Trigonometric interpolation: row l gives u(t_l + tau) from the samples u(t_m).
/// For even n_fiber the Nyquist term uses the real (cosine) interpolant.
inline Eigen::MatrixXcd fiber_shift_matrix(int nf, double tau) {
    Eigen::MatrixXcd S(nf, nf);
    const double dt = 2.0 * std::numbers::pi / nf;
    for (int l = 0; l < nf; ++l)
        for (int m = 0; m < nf; ++m) {
            double d = (l - m) * dt + tau;
            cplx s = 0.0;
            for (int p = -(nf - 1) / 2; p <= (nf - 1) / 2; ++p) s += std::polar(1.0, p * d);
            if (nf % 2 == 0) s += std::cos(0.5 * nf * d);
            S(l, m) = s / double(nf);
        }
    return S;
}

namespace detail {

/// Base cell weight: trapezoid in rho and the ALF theta rims, uniform on periodic
/// directions, times the Vol~ chart density. Excludes the fiber factor.
inline double base_cell_weight(const ChartGrid& g, int i, int j, int k) {
    double w = g.d_rho();
    if (i == 0 || i == g.n_rho - 1) w *= 0.5;
    for (int dir = 1; dir <= 2; ++dir) {
        int idx = dir == 1 ? j : k;
        int n = g.count(dir);
        if (g.periodic(dir)) {
            w *= g.d_ang(dir);
        } else if (n == 1) {
            w *= 2.0;  // the equator stands in for the whole sphere factor
        } else {
            w *= (idx == 0 || idx == n - 1) ? 0.5 * g.d_ang(dir) : g.d_ang(dir);
        }
    }
    if (g.end.kind == EndKind::ALF && g.n_ang1 > 1) w *= std::sin(g.ang(1, j));
    return w;
}

}  // namespace detail

/// Quadrature weights realizing the L~^2 inner product for data of the given shape.
/// Mode data carries the fiber integral 2pi; full data carries the fiber spacing.
inline Eigen::VectorXd ip_weights(const ChartGrid& g, bool full) {
    const int nf = full ? g.n_fiber : 1;
    const double fib = full ? g.d_t() : 2.0 * std::numbers::pi;
    Eigen::VectorXd w(Eigen::Index(g.base_size() * nf));
    for (int i = 0; i < g.n_rho; ++i)
        for (int j = 0; j < g.n_ang1; ++j)
            for (int k = 0; k < g.n_ang2; ++k) {
                double b = detail::base_cell_weight(g, i, j, k) * fib;
                for (int l = 0; l < nf; ++l) w[Eigen::Index(g.base_index(i, j, k) * nf + l)] = b;
            }
    return w;
}

inline Eigen::VectorXd ip_weights(const GridFunction& u) { return ip_weights(u.grid, u.is_full()); }

inline cplx inner_product(const GridFunction& u, const GridFunction& v) {
    require_same_grid(u, v);
    Eigen::VectorXd w = ip_weights(u);
    cplx s = 0.0;
    for (Eigen::Index p = 0; p < w.size(); ++p) s += w[p] * u.values[p] * std::conj(v.values[p]);
    return s;
}

enum class NormKind { C0, L2, W12, W22 };

namespace detail {

/// Frame X_i = d_i - A_i d_t (base), X_3 = d_t. The metric g_cf is diagonal in it.
struct FrameGeometry {
    std::array<double, 4> m;                  // g_cf(X_a, X_a)
    std::array<std::array<double, 4>, 4> dm;  // dm[a][b] = X_a(m_b)
    std::array<std::array<double, 3>, 3> F;   // F_ij = d_i A_j - d_j A_i
};

template <class T>
std::array<T, 4> frame_metric(const ModelEnd& e, T rho, T a1) {
    auto gb = e.base_metric(rho, a1);
    T he = e.h_eps(rho);
    T om = e.omega(rho);
    T om2 = om * om;
    return {om2 * he * gb[0], om2 * he * gb[1], om2 * he * gb[2], om2 * e.eps * e.eps / he};
}

inline FrameGeometry frame_geometry(const ModelEnd& e, double rho, double a1) {
    FrameGeometry fg{};
    fg.m = frame_metric<double>(e, rho, a1);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 4; ++b)
            fg.dm[a][b] = cs_derivative(
                [&](cplx z) { return a == 0 ? frame_metric<cplx>(e, z, cplx(a1))[b] : frame_metric<cplx>(e, cplx(rho), z)[b]; },
                a == 0 ? rho : a1);
    std::array<std::array<double, 3>, 3> dA{};
    for (int a = 0; a < 2; ++a)
        for (int c = 0; c < 3; ++c)
            dA[a][c] = cs_derivative(
                [&](cplx z) { return a == 0 ? e.connection<cplx>(z, cplx(a1))[c] : e.connection<cplx>(cplx(rho), z)[c]; },
                a == 0 ? rho : a1);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) fg.F[i][j] = dA[i][j] - dA[j][i];
    return fg;
}

/// Gamma_{abc} = g(nabla_{X_a} X_b, X_c) from the Koszul formula in the frame.
inline std::array<std::array<std::array<double, 4>, 4>, 4> frame_christoffel(const FrameGeometry& fg) {
    // c[a][b][d]: component of [X_a, X_b] on X_d; only [X_i, X_j] = -F_ij X_t is nonzero.
    auto bracket = [&](int a, int b, int d) -> double {
        if (d != 3 || a == 3 || b == 3) return 0.0;
        return -fg.F[a][b];
    };
    auto Xm = [&](int a, int b, int c) -> double { return b == c ? fg.dm[a][b] * (a < 2) : 0.0; };
    auto gbr = [&](int a, int b, int c) { return bracket(a, b, c) * fg.m[c]; };  // g([X_a,X_b],X_c)
    std::array<std::array<std::array<double, 4>, 4>, 4> G{};
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c)
                G[a][b][c] = 0.5 * (Xm(a, b, c) + Xm(b, a, c) - Xm(c, a, b) + gbr(a, b, c) - gbr(a, c, b) -
                                    gbr(b, c, a));
    return G;
}

/// Frame derivative X_a applied to grid data, centered inside, one-sided second order at
/// non-periodic rims, seam transitions applied at periodic wraps.
class FrameDifferentiator {
public:
    explicit FrameDifferentiator(const ChartGrid& g) : g_(g) {
        if (g.n_fiber > 1 && is_twisted(g.end.kind))
            for (int k = 0; k < g.n_ang2; ++k) {
                double tau = g.twist.fiber_shift(1, g.ang(2, k));
                fwd_[k] = fiber_shift_matrix(g.n_fiber, tau);
                bwd_[k] = fiber_shift_matrix(g.n_fiber, -tau);
            }
    }

    GridFunction apply(const GridFunction& u, int a) const {
        auto out = u;
        const int nf = u.fiber_count();
        for (int i = 0; i < g_.n_rho; ++i)
            for (int j = 0; j < g_.n_ang1; ++j)
                for (int k = 0; k < g_.n_ang2; ++k) {
                    auto A = g_.end.connection(g_.rho(i), g_.ang(1, j));
                    if (a == 3) {
                        for (int l = 0; l < nf; ++l) out.at(i, j, k, l) = dt(u, i, j, k, l);
                        continue;
                    }
                    for (int l = 0; l < nf; ++l) {
                        cplx d = partial(u, a, i, j, k, l);
                        if (A[a] != 0.0) d -= A[a] * dt(u, i, j, k, l);
                        out.at(i, j, k, l) = d;
                    }
                }
        return out;
    }

private:
    cplx dt(const GridFunction& u, int i, int j, int k, int l) const {
        if (!u.is_full()) return cplx(0.0, *u.mode) * u.at(i, j, k);
        const int nf = g_.n_fiber;
        if (nf < 3) return 0.0;
        return (u.at(i, j, k, (l + 1) % nf) - u.at(i, j, k, (l + nf - 1) % nf)) / (2.0 * g_.d_t());
    }

    /// Value at base index (i, j + s) along direction dir with the seam applied.
    cplx shifted(const GridFunction& u, int dir, int i, int j, int k, int l, int s) const {
        int n = g_.count(dir);
        int idx = (dir == 1 ? j : k) + s;
        int wrap = 0;
        while (idx >= n) { idx -= n; ++wrap; }
        while (idx < 0) { idx += n; --wrap; }
        int jj = dir == 1 ? idx : j, kk = dir == 2 ? idx : k;
        if (wrap == 0 || dir == 2) return u.at(i, jj, kk, l);
        // u(a1 + wrap*P1, a2, .) from the fundamental domain
        if (!u.is_full()) {
            cplx ph = g_.twist.phase(*u.mode, 1, g_.ang(2, k));
            return u.at(i, jj, kk) * std::pow(ph, wrap);
        }
        if (!is_twisted(g_.end.kind) || g_.n_fiber == 1) return u.at(i, jj, kk, l);
        const auto& S = wrap > 0 ? fwd_.at(k) : bwd_.at(k);
        cplx s2 = 0.0;
        for (int m = 0; m < g_.n_fiber; ++m) s2 += S(l, m) * u.at(i, jj, kk, m);
        return s2;
    }

    cplx partial(const GridFunction& u, int a, int i, int j, int k, int l) const {
        int n = g_.count(a);
        double h = a == 0 ? g_.d_rho() : g_.d_ang(a);
        if (n == 1) return 0.0;
        int idx = a == 0 ? i : a == 1 ? j : k;
        auto at = [&](int s) {
            if (a == 0) return u.at(i + s, j, k, l);
            return shifted(u, a, i, j, k, l, s);
        };
        bool periodic = a != 0 && g_.periodic(a);
        if (periodic || (idx > 0 && idx < n - 1)) return (at(1) - at(-1)) / (2.0 * h);
        if (n < 3) return (idx == 0 ? at(1) - at(0) : at(0) - at(-1)) / h;
        if (idx == 0) return (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        return (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h);
    }

    ChartGrid g_;
    std::map<int, Eigen::MatrixXcd> fwd_, bwd_;
};

}  // namespace detail

/// Weighted norms ||e^{-delta rho} u|| in C0, L~^2, W^{1,2}, W^{2,2} (g_cf frame norms).
inline double weighted_norm(const GridFunction& u, double delta, NormKind kind) {
    const auto& g = u.grid;
    GridFunction v = u;
    const int nf = u.fiber_count();
    for (int i = 0; i < g.n_rho; ++i) {
        double w = std::exp(-delta * g.rho(i));
        for (int j = 0; j < g.n_ang1; ++j)
            for (int k = 0; k < g.n_ang2; ++k)
                for (int l = 0; l < nf; ++l) v.at(i, j, k, l) *= w;
    }
    if (kind == NormKind::C0) return v.values.cwiseAbs().maxCoeff();
    Eigen::VectorXd w = ip_weights(v);
    double total = (w.array() * v.values.cwiseAbs2().array()).sum();
    if (kind == NormKind::L2) return std::sqrt(total);

    detail::FrameDifferentiator D(g);
    std::array<GridFunction, 4> d1{D.apply(v, 0), D.apply(v, 1), D.apply(v, 2), D.apply(v, 3)};
    std::array<std::array<GridFunction, 4>, 4> d2;
    if (kind == NormKind::W22)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) d2[a][b] = D.apply(d1[b], a);

    for (int i = 0; i < g.n_rho; ++i)
        for (int j = 0; j < g.n_ang1; ++j) {
            auto fg = detail::frame_geometry(g.end, g.rho(i), g.ang(1, j));
            auto Gam = kind == NormKind::W22 ? detail::frame_christoffel(fg)
                                             : std::array<std::array<std::array<double, 4>, 4>, 4>{};
            for (int k = 0; k < g.n_ang2; ++k)
                for (int l = 0; l < nf; ++l) {
                    Eigen::Index p = Eigen::Index(u.index(i, j, k, l));
                    double s = 0.0;
                    for (int a = 0; a < 4; ++a) s += std::norm(d1[a].values[p]) / fg.m[a];
                    if (kind == NormKind::W22) {
                        for (int a = 0; a < 4; ++a)
                            for (int b = 0; b < 4; ++b) {
                                cplx H = d2[a][b].values[p];
                                for (int c = 0; c < 4; ++c) H -= Gam[a][b][c] / fg.m[c] * d1[c].values[p];
                                s += std::norm(H) / (fg.m[a] * fg.m[b]);
                            }
                    }
                    total += w[p] * s;
                }
        }
    return std::sqrt(total);
}

struct PoincareResult {
    double max_ratio_excess = 0.0;
    double worst_c0 = 0.0;  // C0 ratio / C0 bound
    double worst_l2 = 0.0;  // L2 ratio / L2 bound
    double bound_l2_at_first_fiber = 0.0;
};

/// Per-fiber Poincare ratios against 2 pi eps Omega / sqrt(h_eps) (C0) and eps Omega / sqrt(h_eps) (L2).
/// The fiber part of du is measured along d_t, whose g_cf length is eps Omega / sqrt(h_eps).
inline PoincareResult poincare_check(const GridFunction& u, const ModelEnd& end) {
    if (!u.is_full()) throw TypeError("poincare_check needs a full 4D grid function");
    auto ub = project_invariant(u);
    double un = u.values.cwiseAbs().maxCoeff();
    if (ub.values.cwiseAbs().maxCoeff() > 1e-12 * std::max(un, 1e-300))
        throw PreconditionError("poincare_check needs fiber-oscillatory input");
    const auto& g = u.grid;
    const int nf = g.n_fiber;
    const double dt = g.d_t();
    PoincareResult res;
    bool first = true;
    for (int i = 0; i < g.n_rho; ++i)
        for (int j = 0; j < g.n_ang1; ++j) {
            BasePoint p = g.point(i, j, 0);
            if (end.kind == EndKind::ALF) p.a1 = std::clamp(p.a1, 1e-9, std::numbers::pi - 1e-9);
            auto gs = geometry_scalars(end, p);
            double bound_l2 = end.eps * gs.omega / std::sqrt(gs.h_eps);
            double bound_c0 = 2.0 * std::numbers::pi * bound_l2;
            double dt_len = std::sqrt(metric_blocks(end, p, Frame::CF).fiber_scalar);
            if (first) res.bound_l2_at_first_fiber = bound_l2, first = false;
            for (int k = 0; k < g.n_ang2; ++k) {
                double c0u = 0, c0d = 0, l2u = 0, l2d = 0;
                for (int l = 0; l < nf; ++l) {
                    cplx val = u.at(i, j, k, l);
                    cplx der = (u.at(i, j, k, (l + 1) % nf) - u.at(i, j, k, (l + nf - 1) % nf)) / (2.0 * dt);
                    double dn = std::abs(der) / dt_len;
                    c0u = std::max(c0u, std::abs(val));
                    c0d = std::max(c0d, dn);
                    l2u += std::norm(val) * dt;
                    l2d += dn * dn * dt;
                }
                if (c0u == 0.0) continue;
                double rc = c0u / c0d / bound_c0, rl = std::sqrt(l2u / l2d) / bound_l2;
                res.worst_c0 = std::max(res.worst_c0, rc);
                res.worst_l2 = std::max(res.worst_l2, rl);
            }
        }
    res.max_ratio_excess = std::max(res.worst_c0, res.worst_l2);
    return res;
}

/// Band-limited trigonometric polynomial with Gaussian coefficients on a full grid.
/// Fiber modes 1..fiber_band (both signs) and, unless zero_mean, mode 0.
inline GridFunction random_band_limited(const ChartGrid& g, std::mt19937_64& rng, int fiber_band,
                                        int base_band, bool zero_mean) {
    std::normal_distribution<double> N(0.0, 1.0);
    auto u = GridFunction::full(g);
    const double L = g.end.rho_max - g.end.rho_min;
    for (int m = -fiber_band; m <= fiber_band; ++m) {
        if (m == 0 && zero_mean) continue;
        for (int p = 0; p <= base_band; ++p)
            for (int q = -base_band; q <= base_band; ++q)
                for (int r = -base_band; r <= base_band; ++r) {
                    cplx coef(N(rng), N(rng));
                    coef /= double(1 + p * p + q * q + r * r);
                    for (int i = 0; i < g.n_rho; ++i)
                        for (int j = 0; j < g.n_ang1; ++j)
                            for (int k = 0; k < g.n_ang2; ++k) {
                                double x = std::cos(std::numbers::pi * p * (g.rho(i) - g.end.rho_min) / L);
                                double a1 = g.periodic(1) ? 2.0 * std::numbers::pi * g.ang(1, j) / angular_period(g.end.kind, 1)
                                                          : g.ang(1, j);
                                double a2 = 2.0 * std::numbers::pi * g.ang(2, k) / angular_period(g.end.kind, 2);
                                cplx base = x * std::polar(1.0, q * a1 + r * a2);
                                for (int l = 0; l < g.n_fiber; ++l)
                                    u.at(i, j, k, l) += coef * base * std::polar(1.0, m * g.t(l));
                            }
                }
    }
    return u;
}

/// Debug dump: "GHGF" magic, int32 n_rho n_ang1 n_ang2 n_fiber has_mode mode, then (re, im) doubles in layout order.
inline void write_binary(const GridFunction& u, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    f.write("GHGF", 4);
    std::int32_t hdr[6] = {u.grid.n_rho, u.grid.n_ang1, u.grid.n_ang2, u.grid.n_fiber, u.mode ? 1 : 0,
                           u.mode.value_or(0)};
    f.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    for (Eigen::Index p = 0; p < u.values.size(); ++p) {
        double re = u.values[p].real(), im = u.values[p].imag();
        f.write(reinterpret_cast<const char*>(&re), sizeof re);
        f.write(reinterpret_cast<const char*>(&im), sizeof im);
    }
    if (!f) throw IoError("write failed: " + path);
}

inline GridFunction read_binary(const ChartGrid& g, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[4];
    std::int32_t hdr[6];
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    if (!f || std::string(magic, 4) != "GHGF") throw IoError("not a grid function dump: " + path);
    if (hdr[0] != g.n_rho || hdr[1] != g.n_ang1 || hdr[2] != g.n_ang2 || hdr[3] != g.n_fiber)
        throw TypeError("dump does not match the grid");
    auto u = hdr[4] ? GridFunction::on_mode(g, hdr[5]) : GridFunction::full(g);
    for (Eigen::Index p = 0; p < u.values.size(); ++p) {
        double re, im;
        f.read(reinterpret_cast<char*>(&re), sizeof re);
        f.read(reinterpret_cast<char*>(&im), sizeof im);
        u.values[p] = {re, im};
    }
    if (!f) throw IoError("truncated dump: " + path);
    return u;
}

/// CSV dump with columns i,j,k,l,rho,a1,a2,t,re,im (l and t are 0 for mode data).
inline void write_csv(const GridFunction& u, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path);
    f << "i,j,k,l,rho,a1,a2,t,re,im\n" << std::setprecision(17);
    const auto& g = u.grid;
    for (int i = 0; i < g.n_rho; ++i)
        for (int j = 0; j < g.n_ang1; ++j)
            for (int k = 0; k < g.n_ang2; ++k)
                for (int l = 0; l < u.fiber_count(); ++l) {
                    cplx z = u.at(i, j, k, l);
                    f << i << ',' << j << ',' << k << ',' << l << ',' << g.rho(i) << ',' << g.ang(1, j) << ','
                      << g.ang(2, k) << ',' << (u.is_full() ? g.t(l) : 0.0) << ',' << z.real() << ','
                      << z.imag() << '\n';
                }
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace ghlab
