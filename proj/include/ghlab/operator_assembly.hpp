#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <optional>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "ghlab/function_spaces.hpp"
#include "ghlab/model_geometry.hpp"

namespace ghlab {

using SparseMatrixC = Eigen::SparseMatrix<cplx, Eigen::RowMajor, int>;
using TripletC = Eigen::Triplet<cplx, int>;

enum class BoundaryCondition { None, DirichletBoth, DirichletInnerOnly };
enum class Augmentation { None, Rho };

/// Discrete L_delta on one fiber mode over a base grid.
///
/// Before apply_dirichlet, `matrix` is square over all base nodes; boundary rows are
/// identity placeholders. Afterwards it acts on the unknowns: interior node values,
/// plus an outer-ring constant or the coefficient of rho where the boundary rule asks
/// for one. `prolong` maps unknowns back to nodal values of the decaying part, `lift`
/// carries the eliminated boundary columns.
struct ModeOperator {
    SparseMatrixC matrix;
    SparseMatrixC lift;
    SparseMatrixC prolong;
    Eigen::VectorXd ip_weights;
    Eigen::VectorXd row_weights;
    std::vector<int> equation_nodes;  // node per equation row, -1 for extra condition rows
    std::vector<int> unknown_nodes;   // node per unknown column, -1 for non-nodal unknowns
    std::vector<int> eliminated_nodes;

    ChartGrid grid;
    ModelEnd end;
    int n = 0;
    double delta = 0.0;
    BoundaryCondition bc = BoundaryCondition::None;
    Augmentation aug = Augmentation::None;
    int outer_conditions = 1;
    Eigen::VectorXcd aug_profile;  // nodal e^{-delta rho} (1 + rho - rho_min) when augmented
    std::optional<double> angular_eigenvalue;  // set on the ALF radial path
    int multiplicity = 1;

    bool reduced() const { return bc != BoundaryCondition::None; }
    Eigen::Index unknowns() const { return matrix.cols(); }
};

/// Separated ALF operator for one monopole harmonic: a ModeOperator on the equatorial
/// slice of the rho grid with the angular eigenvalue folded into the diagonal.
struct RadialOperator : ModeOperator {};

/// Optional exact gauge change A -> A + df (f a function on the base chart).
struct AssemblyOptions {
    std::function<double(double, double, double)> gauge_shift;
};

namespace detail {

/// Stencil coefficients of the conjugated operator at one node, per base direction:
/// a_d D_d^2 + b_d D_d plus a zero-order term; D_d carries link phases.
struct NodeStencil {
    std::array<double, 3> a{};
    std::array<double, 3> b{};
    double zero = 0.0;
};

inline constexpr std::array<double, 4> kGaussX{-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                               0.8611363115940526};
inline constexpr std::array<double, 4> kGaussW{0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                               0.3478548451374538};

/// A_d recovered from the metric: A_d = -G^{dt} / G^{dd}.
inline double metric_connection(const ModelEnd& e, double rho, double a1, int d) {
    Eigen::Matrix4d G = metric4<double>(e, rho, a1, Frame::CF).inverse();
    return -G(d, 3) / G(d, d);
}

/// Omega^{-2} (G^{tt} - sum_d G^{dd} A_d^2): the coefficient of -n^2 after the magnetic terms.
inline double fiber_potential_at(const ModelEnd& e, double rho, double a1) {
    // Omega^{-2} G = G_cf
    Eigen::Matrix4d G = metric4<double>(e, rho, a1, Frame::CF).inverse();
    double s = G(3, 3);
    for (int d = 0; d < 3; ++d)
        if (G(d, d) != 0.0) s -= G(d, 3) * G(d, 3) / G(d, d);
    return s;
}

inline std::array<double, 3> coords(const ChartGrid& g, int i, int j, int k) {
    return {g.rho(i), g.ang(1, j), g.ang(2, k)};
}

}  // namespace detail

/// Mode-n potential in operator units, independent of the angular chart coordinates.
inline double fiber_potential(const ModelEnd& e, double rho) {
    double a1 = e.kind == EndKind::ALF ? std::numbers::pi / 2 : 0.3;
    return detail::fiber_potential_at(e, rho, a1);
}

/// Lowest `count` monopole harmonics on S^2 with charge q = n k / 2.
struct AngularEigenvalue {
    double lambda;
    int multiplicity;
};

inline std::vector<AngularEigenvalue> monopole_angular_eigenvalues(int n, int k, int count) {
    if (count < 1) throw PreconditionError("count >= 1 required");
    const double q = 0.5 * n * k;
    std::vector<AngularEigenvalue> out;
    for (int i = 0; i < count; ++i) {
        double l = std::abs(q) + i;
        out.push_back({l * (l + 1) - q * q, int(std::lround(2 * l + 1))});
    }
    return out;
}

namespace detail {

inline ModeOperator make_shell(const ChartGrid& g, double delta, int n) {
    ModeOperator op;
    op.grid = g;
    op.end = g.end;
    op.n = n;
    op.delta = delta;
    op.ip_weights = ip_weights(g, false);
    op.row_weights = op.ip_weights;
    return op;
}

/// Assemble rows at interior nodes from per-node stencils; boundary rows become identity.
template <class StencilFn>
SparseMatrixC assemble_from_stencils(const ChartGrid& g, double delta, int n, const AssemblyOptions& opt,
                                     StencilFn&& stencil, bool use_metric_connection) {
    std::vector<TripletC> trip;
    const std::array<double, 3> h{g.d_rho(), g.d_ang(1), g.d_ang(2)};
    auto link_integral = [&](const std::array<double, 3>& x, int d, double s) {
        // int_x^{x + s e_d} A_d
        double total = 0.0;
        for (int q = 0; q < 4; ++q) {
            auto y = x;
            y[d] += 0.5 * s * (1.0 + kGaussX[q]);
            double Ad = use_metric_connection ? metric_connection(g.end, y[0], y[1], d)
                                              : g.end.connection(y[0], y[1])[d];
            total += 0.5 * s * kGaussW[q] * Ad;
        }
        if (opt.gauge_shift) {
            auto y = x;
            y[d] += s;
            total += opt.gauge_shift(y[0], y[1], y[2]) - opt.gauge_shift(x[0], x[1], x[2]);
        }
        return total;
    };
    for (int i = 0; i < g.n_rho; ++i)
        for (int j = 0; j < g.n_ang1; ++j)
            for (int k = 0; k < g.n_ang2; ++k) {
                const int row = int(g.base_index(i, j, k));
                if (g.on_boundary(i, j)) {
                    trip.emplace_back(row, row, 1.0);
                    continue;
                }
                NodeStencil st = stencil(i, j, k);
                auto x = coords(g, i, j, k);
                cplx diag = st.zero;
                for (int d = 0; d < 3; ++d) {
                    if (g.count(d) == 1) continue;
                    double a = st.a[d], b = st.b[d];
                    if (d == 0) {
                        // conjugation by e^{delta rho}: D -> D + delta
                        diag += a * delta * delta + b * delta;
                        b += 2.0 * delta * a;
                    }
                    const double hd = h[d];
                    for (int s : {+1, -1}) {
                        int idx[3] = {i, j, k};
                        idx[d] += s;
                        cplx seam = 1.0;
                        if (d > 0 && g.periodic(d)) {
                            int cnt = g.count(d);
                            if (idx[d] >= cnt) {
                                idx[d] -= cnt;
                                seam = g.twist.phase(n, d, x[2]);
                            } else if (idx[d] < 0) {
                                idx[d] += cnt;
                                seam = std::conj(g.twist.phase(n, d, x[2]));
                            }
                        }
                        double phi = n == 0 ? 0.0 : link_integral(x, d, s * hd);
                        cplx link = std::polar(1.0, -n * phi) * seam;
                        cplx coef = a / (hd * hd) + s * b / (2.0 * hd);
                        trip.emplace_back(row, int(g.base_index(idx[0], idx[1], idx[2])), coef * link);
                    }
                    diag += -2.0 * a / (hd * hd);
                }
                trip.emplace_back(row, row, diag);
            }
    SparseMatrixC M(Eigen::Index(g.base_size()), Eigen::Index(g.base_size()));
    M.setFromTriplets(trip.begin(), trip.end());
    M.prune(cplx(0.0), 0.0);
    return M;
}

}  // namespace detail

/// L_delta on fiber mode n from the 4D metric in divergence form:
/// Omega^{-2} |g|^{-1/2} d_a(|g|^{1/2} G^{ab} d_b) with d_t -> i n, conjugated analytically.
inline ModeOperator assemble_mode_operator(const ModelEnd& end, const ChartGrid& grid, double delta, int n,
                                           const AssemblyOptions& opt = {}) {
    if (end.kind == EndKind::ALF && n != 0)
        throw TypeError("ALF modes n != 0 go through assemble_radial_operator");
    ChartGrid g = grid.with_end(end);
    auto op = detail::make_shell(g, delta, n);
    // coefficients depend on (rho, a1) only; cache per (i, j)
    std::vector<detail::NodeStencil> cache(std::size_t(g.n_rho) * g.n_ang1);
    for (int i = 0; i < g.n_rho; ++i)
        for (int j = 0; j < g.n_ang1; ++j) {
            if (g.on_boundary(i, j)) continue;
            auto pc = detail::point_coefficients(end, g.rho(i), g.ang(1, j));
            detail::NodeStencil st;
            for (int d = 0; d < 3; ++d) {
                for (int e2 = 0; e2 < 3; ++e2)
                    if (e2 != d && std::abs(pc.a(d, e2)) > 1e-12 * std::abs(pc.a(d, d)))
                        throw TypeError("non-diagonal base metric is not supported by the stencil");
                st.a[d] = pc.a(d, d);
                st.b[d] = pc.b(d);
            }
            st.zero = -double(n) * n * detail::fiber_potential_at(end, g.rho(i), g.ang(1, j));
            cache[std::size_t(i) * g.n_ang1 + j] = st;
        }
    op.matrix = detail::assemble_from_stencils(
        g, delta, n, opt, [&](int i, int j, int) { return cache[std::size_t(i) * g.n_ang1 + j]; }, true);
    return op;
}

/// S^1-invariant reduction e^{-delta rho} Omega_B^{-2} Delta_B (e^{delta rho} .) from closed forms.
inline ModeOperator assemble_base_reduction(const ModelEnd& end, const ChartGrid& grid, double delta) {
    ChartGrid g = grid.with_end(end);
    auto op = detail::make_shell(g, delta, 0);
    op.matrix = detail::assemble_from_stencils(
        g, delta, 0, {},
        [&](int i, int j, int) {
            detail::NodeStencil st;
            const double th = g.ang(1, j);
            switch (end.kind) {
                case EndKind::ALF:  // d_rho^2 + d_rho + d_theta^2 + cot d_theta + sin^{-2} d_phi^2
                    st.a = {1.0, 1.0, 1.0 / (std::sin(th) * std::sin(th))};
                    st.b = {1.0, std::cos(th) / std::sin(th), 0.0};
                    break;
                case EndKind::ALG:
                case EndKind::ALGstar:  // d_rho^2 + d_theta^2 + e^{2 rho} d_s^2
                    st.a = {1.0, 1.0, std::exp(2.0 * g.rho(i))};
                    break;
                default:
                    st.a = {1.0, 1.0, 1.0};
            }
            return st;
        },
        false);
    return op;
}

/// Separated ALF operator: u'' + (2 delta + 1) u' + (delta (delta + 1) - lambda) u - n^2 V u on the rho grid.
inline RadialOperator assemble_radial_operator(const ModelEnd& end, double delta, int n, double lambda_ang,
                                               int n_rho, int multiplicity = 1) {
    if (end.kind != EndKind::ALF) throw TypeError("the radial path is for ALF ends only");
    ChartGrid g(end, n_rho, 1, 1, 1);
    RadialOperator op;
    static_cast<ModeOperator&>(op) = detail::make_shell(g, delta, n);
    op.angular_eigenvalue = lambda_ang;
    op.multiplicity = multiplicity;
    const double eq = std::numbers::pi / 2;
    op.matrix = detail::assemble_from_stencils(
        g, delta, 0, {},
        [&](int i, int, int) {
            auto pc = detail::point_coefficients(end, g.rho(i), eq);
            detail::NodeStencil st;
            st.a = {pc.a(0, 0), 0.0, 0.0};
            st.b = {pc.b(0), 0.0, 0.0};
            st.zero = -lambda_ang - double(n) * n * detail::fiber_potential_at(end, g.rho(i), eq);
            return st;
        },
        false);
    return op;
}

/// Smallest nonzero indicial root magnitude among the angular modes of an n = 0 torus-kind grid.
inline double smallest_angular_root(const ChartGrid& g) {
    double best = std::numeric_limits<double>::infinity();
    for (int dir = 1; dir <= 2; ++dir) {
        int cnt = g.count(dir);
        if (cnt < 2) continue;
        // ALG/ALGstar s-direction carries e^{2 rho}: no indicial root there
        if (dir == 2 && (g.end.kind == EndKind::ALG || g.end.kind == EndKind::ALGstar)) continue;
        double h = g.d_ang(dir);
        best = std::min(best, 2.0 * std::sin(std::numbers::pi / cnt) / h);
    }
    return best;
}

/// Number of outer conditions the angular-constant mode needs for decay at the truncation:
/// the count of indicial roots >= delta (non-decaying branches).
inline int outer_condition_count(const ModeOperator& op) {
    const double d = op.delta;
    if (op.n != 0) return 1;
    if (op.end.kind == EndKind::ALF) {
        if (op.grid.n_ang1 != 1 || op.grid.n_ang2 != 1)
            throw TypeError("inner-only conditions on ALF need the radial path");
        // radial operator for harmonic l: roots l and -l-1
        if (!op.angular_eigenvalue) throw TypeError("ALF radial operator without an angular eigenvalue");
        double lam = *op.angular_eigenvalue;
        double l = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * lam));
        return int(l >= d) + int(-l - 1.0 >= d);
    }
    double kmin = smallest_angular_root(op.grid);
    if (!(std::abs(d) < kmin))
        throw PreconditionError("|delta| must stay below the smallest nonzero angular root " + std::to_string(kmin));
    if (d == 0.0) throw PreconditionError("delta = 0 is an indicial root");
    return d > 0.0 ? 0 : 2;
}

namespace detail {

inline SparseMatrixC to_sparse(const std::vector<TripletC>& t, Eigen::Index r, Eigen::Index c) {
    SparseMatrixC M(r, c);
    M.setFromTriplets(t.begin(), t.end());
    return M;
}

}  // namespace detail

/// Eliminate boundary values. DirichletBoth removes every boundary node. DirichletInnerOnly
/// removes the inner ring and applies the decay-consistent outer rule; Augmentation::Rho adds
/// the coefficient lambda of the linear harmonic 1 + rho - rho_min (n = 0, delta < 0), with
/// lambda (1 + rho - rho_min) + w vanishing on the inner ring.
inline ModeOperator apply_dirichlet(const ModeOperator& in, BoundaryCondition where,
                                    Augmentation aug = Augmentation::None) {
    if (in.reduced()) throw StateError("boundary conditions already applied");
    if (where == BoundaryCondition::None) throw PreconditionError("choose a boundary condition");
    ModeOperator op = in;
    op.bc = where;
    op.aug = aug;
    const auto& g = op.grid;
    const int N = g.n_rho;
    const Eigen::Index nodes = Eigen::Index(g.base_size());
    Eigen::VectorXd w = ip_weights(g, false);

    int outer = 1;
    if (where == BoundaryCondition::DirichletInnerOnly) outer = outer_condition_count(op);
    if (aug == Augmentation::Rho) {
        if (where != BoundaryCondition::DirichletInnerOnly || op.n != 0 || op.delta >= 0.0 ||
            op.end.kind == EndKind::ALF)
            throw PreconditionError("rho augmentation needs inner-only conditions, n = 0, delta < 0, torus-fibered kind");
    }
    op.outer_conditions = outer;

    std::vector<int> unknown_of(nodes, -1);
    op.unknown_nodes.clear();
    op.eliminated_nodes.clear();
    op.equation_nodes.clear();
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < g.n_ang1; ++j)
            for (int k = 0; k < g.n_ang2; ++k) {
                int node = int(g.base_index(i, j, k));
                if (g.on_boundary(i, j)) {
                    op.eliminated_nodes.push_back(node);
                } else {
                    unknown_of[node] = int(op.unknown_nodes.size());
                    op.unknown_nodes.push_back(node);
                    op.equation_nodes.push_back(node);
                }
            }
    std::vector<TripletC> P;
    for (std::size_t u = 0; u < op.unknown_nodes.size(); ++u) P.emplace_back(op.unknown_nodes[u], int(u), 1.0);
    std::vector<double> colw;
    for (int node : op.unknown_nodes) colw.push_back(w[node]);

    auto outer_ring = [&]() {
        std::vector<int> ring;
        for (int j = 0; j < g.n_ang1; ++j)
            for (int k = 0; k < g.n_ang2; ++k) ring.push_back(int(g.base_index(N - 1, j, k)));
        return ring;
    };
    auto inner_ring = [&]() {
        std::vector<int> ring;
        for (int j = 0; j < g.n_ang1; ++j)
            for (int k = 0; k < g.n_ang2; ++k) ring.push_back(int(g.base_index(0, j, k)));
        return ring;
    };

    if (where == BoundaryCondition::DirichletInnerOnly && outer == 0) {
        // outer ring carries a free angular constant
        int col = int(colw.size());
        double wr = 0.0;
        for (int node : outer_ring()) {
            P.emplace_back(node, col, 1.0);
            wr += w[node];
        }
        op.unknown_nodes.push_back(-1);
        colw.push_back(wr);
    }
    int lambda_col = -1;
    if (aug == Augmentation::Rho) {
        lambda_col = int(colw.size());
        const double phi1 = std::exp(-op.delta * g.rho(0));
        for (int node : inner_ring()) P.emplace_back(node, lambda_col, -phi1);
        op.unknown_nodes.push_back(-1);
        colw.push_back(1.0);
        op.aug_profile = Eigen::VectorXcd::Zero(nodes);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < g.n_ang1; ++j)
                for (int k = 0; k < g.n_ang2; ++k)
                    op.aug_profile[Eigen::Index(g.base_index(i, j, k))] = std::exp(-op.delta * g.rho(i)) * (1.0 + g.rho(i) - g.rho(0));
    }
    const Eigen::Index nu = Eigen::Index(colw.size());
    op.prolong = detail::to_sparse(P, nodes, nu);

    // equation rows: interior rows of the unreduced operator composed with the prolongation
    std::vector<TripletC> rows, lift;
    std::vector<int> elim_col(nodes, -1);
    for (std::size_t e = 0; e < op.eliminated_nodes.size(); ++e) elim_col[op.eliminated_nodes[e]] = int(e);
    SparseMatrixC AP = in.matrix * op.prolong;
    std::vector<double> roww;
    for (std::size_t r = 0; r < op.equation_nodes.size(); ++r) {
        int node = op.equation_nodes[r];
        for (SparseMatrixC::InnerIterator it(AP, node); it; ++it) rows.emplace_back(int(r), int(it.col()), it.value());
        for (SparseMatrixC::InnerIterator it(in.matrix, node); it; ++it)
            if (elim_col[it.col()] >= 0) lift.emplace_back(int(r), elim_col[it.col()], it.value());
        roww.push_back(w[node]);
    }
    if (where == BoundaryCondition::DirichletInnerOnly && outer == 2) {
        // angular average of the one-sided outer derivative of the decaying part vanishes
        const double h = g.d_rho();
        double wr = 0.0;
        for (int node : outer_ring()) wr += w[node];
        const int r = int(roww.size());
        for (int j = 0; j < g.n_ang1; ++j)
            for (int k = 0; k < g.n_ang2; ++k) {
                double share = w[Eigen::Index(g.base_index(N - 1, j, k))] / wr;
                rows.emplace_back(r, unknown_of[g.base_index(N - 2, j, k)], share * -4.0 / (2.0 * h));
                rows.emplace_back(r, unknown_of[g.base_index(N - 3, j, k)], share * 1.0 / (2.0 * h));
            }
        op.equation_nodes.push_back(-1);
        roww.push_back(wr);
    }
    const Eigen::Index neq = Eigen::Index(roww.size());
    op.matrix = detail::to_sparse(rows, neq, nu);
    op.matrix.prune(cplx(0.0), 0.0);
    op.lift = detail::to_sparse(lift, neq, Eigen::Index(op.eliminated_nodes.size()));
    op.ip_weights = Eigen::Map<Eigen::VectorXd>(colw.data(), nu);
    op.row_weights = Eigen::Map<Eigen::VectorXd>(roww.data(), neq);
    return op;
}

/// Nodal values (conjugated frame) of the function represented by an unknown vector.
inline GridFunction to_grid_function(const ModeOperator& op, const Eigen::VectorXcd& x) {
    auto u = GridFunction::on_mode(op.grid, op.n);
    u.values = op.prolong * x;
    if (op.aug == Augmentation::Rho) u.values += x[x.size() - 1] * op.aug_profile;
    return u;
}

/// Unknown vector holding the interior values of a nodal function (non-nodal unknowns zero).
inline Eigen::VectorXcd restrict_to_unknowns(const ModeOperator& op, const GridFunction& u) {
    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(op.unknowns());
    for (std::size_t c = 0; c < op.unknown_nodes.size(); ++c)
        if (op.unknown_nodes[c] >= 0) x[Eigen::Index(c)] = u.values[op.unknown_nodes[c]];
    return x;
}

/// Boundary values of a nodal function in the order of the lift columns.
inline Eigen::VectorXcd boundary_values(const ModeOperator& op, const GridFunction& u) {
    Eigen::VectorXcd b(Eigen::Index(op.eliminated_nodes.size()));
    for (std::size_t e = 0; e < op.eliminated_nodes.size(); ++e) b[Eigen::Index(e)] = u.values[op.eliminated_nodes[e]];
    return b;
}

/// Apply the unreduced operator to nodal data, returning values at interior nodes (zero on the boundary).
inline GridFunction apply_operator(const ModeOperator& op, const GridFunction& u) {
    if (op.reduced()) throw StateError("apply_operator expects the unreduced operator");
    auto out = GridFunction::on_mode(op.grid, op.n);
    out.values = op.matrix * u.values;
    for (int i = 0; i < op.grid.n_rho; ++i)
        for (int j = 0; j < op.grid.n_ang1; ++j)
            if (op.grid.on_boundary(i, j))
                for (int k = 0; k < op.grid.n_ang2; ++k) out.at(i, j, k) = 0.0;
    return out;
}

/// The two sides <L_delta u, v> and <u, L_delta* v> in L~^2, with delta* = -(delta+1) (ALF) or -delta.
struct AdjointPairing {
    cplx lhs;
    cplx rhs;
    double defect() const { return std::abs(lhs - rhs); }
};

inline AdjointPairing adjoint_pairing(const ModelEnd& end, const ChartGrid& grid, double delta, int n,
                                      const GridFunction& u, const GridFunction& v,
                                      std::optional<double> dual_override = std::nullopt) {
    const auto& g = grid;
    auto check = [&](const GridFunction& f) {
        if (f.is_full() || f.values.size() != Eigen::Index(g.base_size()))
            throw PreconditionError("adjoint_defect needs mode data on the given grid");
        for (int i = 0; i < g.n_rho; ++i)
            for (int j = 0; j < g.n_ang1; ++j)
                for (int k = 0; k < g.n_ang2; ++k) {
                    bool collar = i < 2 || i > g.n_rho - 3 ||
                                  (!g.periodic(1) && g.n_ang1 > 1 && (j < 2 || j > g.n_ang1 - 3));
                    if (collar && std::abs(f.at(i, j, k)) != 0.0)
                        throw PreconditionError("adjoint_defect needs data vanishing in a two-cell boundary collar");
                }
    };
    check(u);
    check(v);
    const double dstar = dual_override.value_or(end.kind == EndKind::ALF ? -(delta + 1.0) : -delta);
    auto L = assemble_mode_operator(end, grid, delta, n);
    auto Ls = assemble_mode_operator(end, grid, dstar, n);
    auto Lu = apply_operator(L, u), Lsv = apply_operator(Ls, v);
    return {inner_product(Lu, v), inner_product(u, Lsv)};
}

/// |<L_delta u, v> - <u, L_delta* v>| for data vanishing near the boundary.
inline double adjoint_defect(const ModelEnd& end, const ChartGrid& grid, double delta, int n, const GridFunction& u,
                             const GridFunction& v, std::optional<double> dual_override = std::nullopt) {
    return adjoint_pairing(end, grid, delta, n, u, v, dual_override).defect();
}

/// Full 4D L_delta on a torus-fibered grid: coordinate form a^{ab} d_a d_b + b^a d_a with
/// centered differences in every direction (t included) and spectral fiber shifts at twisted seams.
struct FullOperator {
    SparseMatrixC matrix;
    ChartGrid grid;
    double delta = 0.0;
};

inline FullOperator assemble_full_operator(const ModelEnd& end, const ChartGrid& grid, double delta) {
    if (end.kind == EndKind::ALF) throw TypeError("full 4D assembly covers the torus-fibered kinds");
    ChartGrid g = grid.with_end(end);
    const int nf = g.n_fiber;
    if (nf < 3) throw PreconditionError("full assembly needs n_fiber >= 3");
    std::vector<TripletC> trip;
    const std::array<double, 4> h{g.d_rho(), g.d_ang(1), g.d_ang(2), g.d_t()};
    std::map<int, Eigen::MatrixXcd> fwd, bwd;
    if (is_twisted(end.kind))
        for (int k = 0; k < g.n_ang2; ++k) {
            double tau = g.twist.fiber_shift(1, g.ang(2, k));
            fwd[k] = fiber_shift_matrix(nf, tau);
            bwd[k] = fiber_shift_matrix(nf, -tau);
        }
    // neighbour (i, j, k, l) + offsets: list of (column, factor) after seams
    auto neighbour = [&](int i, int j, int k, int l, std::array<int, 4> off) {
        std::vector<std::pair<int, cplx>> out;
        int ii = i + off[0], jj = j + off[1], kk = (k + off[2] + g.n_ang2) % g.n_ang2, ll = (l + off[3] + nf) % nf;
        int wrap = 0;
        if (jj >= g.n_ang1) jj -= g.n_ang1, wrap = 1;
        if (jj < 0) jj += g.n_ang1, wrap = -1;
        if (wrap == 0 || !is_twisted(end.kind)) {
            out.emplace_back(int(g.full_index(ii, jj, kk, ll)), 1.0);
            return out;
        }
        const auto& S = wrap > 0 ? fwd.at(kk) : bwd.at(kk);
        for (int m = 0; m < nf; ++m) out.emplace_back(int(g.full_index(ii, jj, kk, m)), S(ll, m));
        return out;
    };
    for (int i = 0; i < g.n_rho; ++i)
        for (int j = 0; j < g.n_ang1; ++j) {
            detail::PointCoefficients pc;
            if (!g.on_boundary(i, j)) pc = detail::point_coefficients(end, g.rho(i), g.ang(1, j));
            for (int k = 0; k < g.n_ang2; ++k)
                for (int l = 0; l < nf; ++l) {
                    const int row = int(g.full_index(i, j, k, l));
                    if (g.on_boundary(i, j)) {
                        trip.emplace_back(row, row, 1.0);
                        continue;
                    }
                    Eigen::Matrix4d a = pc.a;
                    Eigen::Vector4d b = pc.b;
                    double zero = delta * delta * a(0, 0) + delta * b(0);
                    b += 2.0 * delta * a.col(0);
                    auto add = [&](std::array<int, 4> off, cplx c) {
                        for (auto [col, f] : neighbour(i, j, k, l, off)) trip.emplace_back(row, col, c * f);
                    };
                    trip.emplace_back(row, row, zero);
                    for (int d = 0; d < 4; ++d) {
                        if (d < 3 && g.count(d) == 1) continue;
                        std::array<int, 4> e{};
                        e[d] = 1;
                        std::array<int, 4> me{};
                        me[d] = -1;
                        add(e, a(d, d) / (h[d] * h[d]) + b(d) / (2 * h[d]));
                        add(me, a(d, d) / (h[d] * h[d]) - b(d) / (2 * h[d]));
                        trip.emplace_back(row, row, -2.0 * a(d, d) / (h[d] * h[d]));
                        for (int d2 = d + 1; d2 < 4; ++d2) {
                            double c = 2.0 * a(d, d2);
                            if (c == 0.0 || (d2 < 3 && g.count(d2) == 1)) continue;
                            for (int s1 : {1, -1})
                                for (int s2 : {1, -1}) {
                                    std::array<int, 4> o{};
                                    o[d] = s1;
                                    o[d2] = s2;
                                    add(o, c * s1 * s2 / (4.0 * h[d] * h[d2]));
                                }
                        }
                    }
                }
        }
    FullOperator op;
    op.grid = g;
    op.delta = delta;
    op.matrix = detail::to_sparse(trip, Eigen::Index(g.full_size()), Eigen::Index(g.full_size()));
    op.matrix.prune(cplx(0.0), 0.0);
    return op;
}

/// Coordinate text export: one "row col re im" line per stored entry, preceded by "rows cols nnz".
inline void write_matrix_coordinate(const SparseMatrixC& M, std::ostream& os) {
    os << M.rows() << ' ' << M.cols() << ' ' << M.nonZeros() << '\n';
    os.precision(17);
    for (int r = 0; r < M.outerSize(); ++r)
        for (SparseMatrixC::InnerIterator it(M, r); it; ++it)
            os << it.row() << ' ' << it.col() << ' ' << it.value().real() << ' ' << it.value().imag() << '\n';
}

inline SparseMatrixC read_matrix_coordinate(std::istream& is) {
    long rows, cols, nnz;
    if (!(is >> rows >> cols >> nnz)) throw IoError("bad coordinate header");
    std::vector<TripletC> t;
    t.reserve(std::size_t(nnz));
    for (long e = 0; e < nnz; ++e) {
        long r, c;
        double re, im;
        if (!(is >> r >> c >> re >> im)) throw IoError("truncated coordinate data");
        if (r < 0 || r >= rows || c < 0 || c >= cols) throw IoError("coordinate entry out of range");
        t.emplace_back(int(r), int(c), cplx(re, im));
    }
    return detail::to_sparse(t, rows, cols);
}

}  // namespace ghlab
