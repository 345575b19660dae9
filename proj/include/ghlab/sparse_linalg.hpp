#pragma once

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "ghlab/operator_assembly.hpp"

namespace ghlab {

using SparseColC = Eigen::SparseMatrix<cplx, Eigen::ColMajor, int>;

struct SpectralReport {
    double sigma_min = 0.0;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    Eigen::VectorXcd vector;  // right singular vector in unknown coordinates, unit in the W norm
};

struct SvdOptions {
    double tol = 1e-8;
    int max_iterations = 500;
    int extra_block = 2;
    std::uint64_t seed = 12345;
    Eigen::Index dense_limit = 1200;  // dense SVD when both dimensions are at most this
    // Ritz values the iteration leaves unresolved are recomputed by inertia bisection to this
    // relative width; 0 disables the fallback.
    double certify_tol = 1e-6;
    int stall_iterations = 40;  // unconverged by then: try the fallback before iterating on
};

/// W-weighted matrix R^{1/2} A C^{-1/2} of a reduced operator.
inline SparseColC weighted_matrix(const ModeOperator& op) {
    if (!op.reduced()) throw PreconditionError("operator must be boundary-reduced");
    Eigen::VectorXd r = op.row_weights.cwiseSqrt();
    Eigen::VectorXd c = op.ip_weights.cwiseSqrt().cwiseInverse();
    SparseColC B = r.asDiagonal() * SparseColC(op.matrix) * c.asDiagonal();
    B.makeCompressed();
    return B;
}

/// Smallest singular triplets of a sparse matrix B by block inverse iteration on B*B (or BB* when
/// B is wide) with Rayleigh-Ritz. Square B is factored directly; otherwise, with T the tall one
/// of B and B*, the saddle system [[-I, T], [T*, mu I]] is factored, which applies (T*T + mu)^{-1}
/// without squaring the condition number. mu = 0 unless T is rank-deficient to working precision.
/// A wide B contributes cols - rows exact zeros whose vectors are projections onto null(B).
class SmallSingular {
public:
    /// Matrices with both dimensions at most `dense_limit` go through a dense SVD instead.
    explicit SmallSingular(const SparseColC& B, Eigen::Index dense_limit = SvdOptions{}.dense_limit)
        : B_(B), m_(B.rows()), n_(B.cols()) {
        if (m_ == 0 || n_ == 0) throw PreconditionError("empty matrix");
        wide_ = m_ < n_;
        if (std::max(m_, n_) <= dense_limit) {
            factor_dense();
            return;
        }
        T_ = wide_ ? SparseColC(B.adjoint()) : B;
        T_.makeCompressed();
        p_ = T_.rows();
        q_ = T_.cols();
        lu_ = std::make_unique<Eigen::SparseLU<SparseColC>>();
        if (p_ == q_) {
            lu_->analyzePattern(T_);
            lu_->factorize(T_);
            if (lu_->info() == Eigen::Success) {
                square_ = true;
                return;
            }
        }
        double scale = 0.0;
        for (Eigen::Index k = 0; k < T_.outerSize(); ++k)
            for (SparseColC::InnerIterator it(T_, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
        for (double mu : {0.0, 1e-28 * scale * scale + 1e-300, 1e-24 * scale * scale + 1e-300}) {
            if (mu == 0.0 && p_ == q_) continue;  // a singular square T stays singular unshifted
            factor_saddle(mu);
            if (lu_->info() == Eigen::Success) {
                shift_ = mu;
                return;
            }
        }
        throw SingularityError("saddle system not factorizable", 0.0);
    }

    Eigen::Index exact_zeros() const { return wide_ ? n_ - m_ : 0; }

    /// y = (T* T + mu)^{-1} x
    Eigen::VectorXcd apply_inverse(const Eigen::VectorXcd& x) const {
        if (dense_) throw StateError("apply_inverse is unavailable on the dense path");
        if (square_) {
            Eigen::VectorXcd z = lu_->adjoint().solve(x);
            return lu_->solve(z);
        }
        Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(p_ + q_);
        rhs.tail(q_) = x;
        Eigen::VectorXcd sol = lu_->solve(rhs);
        return sol.tail(q_);
    }

    struct Triplet {
        double sigma;
        Eigen::VectorXcd v;  // right singular vector of B (length n)
        double residual;
    };

    /// The `count` smallest singular values of B, ascending, exact zeros of a wide B first.
    std::vector<Triplet> smallest(int count, const SvdOptions& opt, int* iterations = nullptr,
                                  bool* converged = nullptr) const {
        std::vector<Triplet> out;
        if (count <= 0) return out;
        if (dense_) {
            for (int j = 0; j < count && j < int(dense_sigma_.size()); ++j)
                out.push_back({dense_sigma_[std::size_t(j)], dense_v_.col(j), 0.0});
            if (iterations) *iterations = 0;
            if (converged) *converged = true;
            return out;
        }
        if (wide_)
            for (auto& v : null_vectors(std::min<Eigen::Index>(count, exact_zeros()), opt.seed))
                out.push_back({0.0, v, 0.0});
        int want = count - int(out.size());
        want = int(std::min<Eigen::Index>(want, q_));
        if (want <= 0) {
            if (iterations) *iterations = 0;
            if (converged) *converged = true;
            return out;
        }
        const int b = int(std::min<Eigen::Index>(want + opt.extra_block, q_));
        std::mt19937_64 rng(opt.seed);
        std::normal_distribution<double> nd;
        Eigen::MatrixXcd X(q_, b);
        for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = cplx(nd(rng), nd(rng));
        X = orthonormalize(X);
        Eigen::VectorXd theta;
        bool conv = false, tried = false;
        int it = 0;
        std::vector<double> res(std::size_t(want), 0.0), refined;
        for (; it < opt.max_iterations; ++it) {
            Eigen::MatrixXcd Z(q_, b);
            for (int j = 0; j < b; ++j) Z.col(j) = apply_inverse(X.col(j));
            Eigen::MatrixXcd H = X.adjoint() * Z;
            H = (0.5 * (H + H.adjoint())).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
            // largest theta of the inverse = smallest sigma
            theta = es.eigenvalues().reverse();
            Eigen::MatrixXcd V = es.eigenvectors().rowwise().reverse();
            conv = true;
            for (int j = 0; j < want; ++j) {
                Eigen::VectorXcd r = Z * V.col(j) - theta[j] * (X * V.col(j));
                res[std::size_t(j)] = r.norm() / std::max(std::abs(theta[j]), 1e-300);
                if (!(res[std::size_t(j)] <= opt.tol)) conv = false;
            }
            if (conv) {
                X = X * V;
                break;
            }
            X = orthonormalize(Z * V);
            if (it + 1 == opt.stall_iterations && opt.certify_tol > 0.0) {
                auto est = ritz_sigmas(theta, want);
                if (refine_by_inertia(est, opt.certify_tol, opt.seed)) {
                    refined = std::move(est);
                    conv = true;
                    break;
                }
                tried = true;
            }
        }
        if (iterations) *iterations = std::min(it + 1, opt.max_iterations);
        auto est = refined.empty() ? ritz_sigmas(theta, want) : refined;
        if (!conv && !tried && opt.certify_tol > 0.0) conv = refine_by_inertia(est, opt.certify_tol, opt.seed);
        if (converged) *converged = conv;
        for (int j = 0; j < want; ++j) {
            double sigma = est[std::size_t(j)];
            Eigen::VectorXcd v = X.col(j);
            if (wide_) {
                // v is a left singular vector of B; the right one is B* v / sigma
                Eigen::VectorXcd w = T_ * v;
                double nw = w.norm();
                if (nw > 0.0) v = w / nw;
                else v = w;
            }
            out.push_back({sigma, v, res[std::size_t(j)]});
        }
        return out;
    }

private:
    void factor_dense() {
        dense_ = true;
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(Eigen::MatrixXcd(B_), Eigen::ComputeFullV);
        const Eigen::VectorXd& sv = svd.singularValues();  // descending
        const Eigen::MatrixXcd& V = svd.matrixV();
        const Eigen::Index r = sv.size();
        dense_v_.resize(n_, n_);
        Eigen::Index col = 0;
        for (Eigen::Index j = r; j < n_; ++j, ++col) {  // null directions of a wide matrix
            dense_sigma_.push_back(0.0);
            dense_v_.col(col) = V.col(j);
        }
        for (Eigen::Index j = r - 1; j >= 0; --j, ++col) {
            dense_sigma_.push_back(sv[j]);
            dense_v_.col(col) = V.col(j);
        }
    }

    void factor_saddle(double mu) {
        std::vector<Eigen::Triplet<cplx>> t;
        t.reserve(std::size_t(2 * T_.nonZeros() + p_ + q_));
        for (Eigen::Index i = 0; i < p_; ++i) t.emplace_back(int(i), int(i), -1.0);
        for (Eigen::Index k = 0; k < T_.outerSize(); ++k)
            for (SparseColC::InnerIterator it(T_, k); it; ++it) {
                t.emplace_back(int(it.row()), int(p_ + it.col()), it.value());
                t.emplace_back(int(p_ + it.col()), int(it.row()), std::conj(it.value()));
            }
        if (mu > 0.0)
            for (Eigen::Index j = 0; j < q_; ++j) t.emplace_back(int(p_ + j), int(p_ + j), mu);
        SparseColC K(p_ + q_, p_ + q_);
        K.setFromTriplets(t.begin(), t.end());
        K.makeCompressed();
        lu_ = std::make_unique<Eigen::SparseLU<SparseColC>>();
        lu_->analyzePattern(K);
        lu_->factorize(K);
    }

    /// Replaces unresolved Ritz values by inertia bisection. Sylvester's law on LDL*(T*T - s) counts the
    /// sigma_i below sqrt(s), so sigma_j is bracketed to relative width `rel` from the Ritz upper bound
    /// downwards. Refused (false) when rel is within rounding of T*T or a factorization solves poorly.
    /// Values only: the vectors of a tight cluster stay unresolved.
    bool refine_by_inertia(std::vector<double>& est, double rel, std::uint64_t seed) const {
        double n1 = 0.0;
        Eigen::VectorXd rows = Eigen::VectorXd::Zero(p_);
        for (Eigen::Index k = 0; k < T_.outerSize(); ++k) {
            double col = 0.0;
            for (SparseColC::InnerIterator it(T_, k); it; ++it) {
                col += std::abs(it.value());
                rows[it.row()] += std::abs(it.value());
            }
            n1 = std::max(n1, col);
        }
        const double norm2 = n1 * rows.maxCoeff();  // bounds |T|_2^2
        const SparseColC N = (T_.adjoint() * T_).pruned();
        SparseColC I(q_, q_);
        I.setIdentity();
        std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
        std::normal_distribution<double> nd;
        double slack = 0.0;  // tolerated |E| in sigma^2 units
        // #{sigma_i^2 < s}, or -1 when the factorization is not trustworthy at this slack
        auto count_below = [&](double s) -> Eigen::Index {
            if (s <= 0.0) return 0;
            SparseColC M = N - s * I;
            Eigen::SimplicialLDLT<SparseColC, Eigen::Lower> ldlt(M);
            if (ldlt.info() != Eigen::Success) return -1;
            Eigen::VectorXcd b(q_);
            for (Eigen::Index i = 0; i < q_; ++i) b[i] = cplx(nd(rng), nd(rng));
            Eigen::VectorXcd x = ldlt.solve(b);
            if (!((M * x - b).norm() <= slack * x.norm())) return -1;
            Eigen::Index below = 0;
            for (Eigen::Index i = 0; i < q_; ++i) below += ldlt.vectorD()[i].real() < 0.0;
            return below;
        };
        for (std::size_t j = 0; j < est.size(); ++j) {
            const auto need = Eigen::Index(j) + 1;
            double hi = est[j];
            slack = 0.1 * rel * hi * hi;
            if (!(1e3 * std::numeric_limits<double>::epsilon() * norm2 <= slack)) return false;
            // sigma_j <= Ritz value in exact arithmetic; widen a little if rounding disagrees
            Eigen::Index c = count_below(hi * hi * (1.0 + rel));
            if (c < 0 || c < need) return false;
            hi *= 1.0 + 0.5 * rel;
            double step = 1e-3, lo = hi;
            for (;;) {
                lo = step >= 1.0 ? 0.0 : hi * (1.0 - step);
                c = count_below(lo * lo);
                if (c < 0) return false;
                if (c < need) break;
                hi = lo;
                step *= 8.0;
            }
            while (hi - lo > rel * hi) {
                const double mid = 0.5 * (lo + hi);
                c = count_below(mid * mid);
                if (c < 0) return false;
                (c >= need ? hi : lo) = mid;
            }
            est[j] = 0.5 * (lo + hi);
        }
        return true;
    }

    std::vector<double> ritz_sigmas(const Eigen::VectorXd& theta, int want) const {
        std::vector<double> out;
        for (int j = 0; j < want; ++j) {
            double th = theta[j];
            out.push_back(std::sqrt(std::max(th > 0.0 ? 1.0 / th - shift_ : 0.0, 0.0)));
        }
        return out;
    }

    static Eigen::MatrixXcd orthonormalize(const Eigen::MatrixXcd& X) {
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(X);
        return qr.householderQ() * Eigen::MatrixXcd::Identity(X.rows(), X.cols());
    }

    /// Orthonormal vectors of null(B): random vectors minus their projection B*(BB*)^{-1}B, twice.
    std::vector<Eigen::VectorXcd> null_vectors(Eigen::Index count, std::uint64_t seed) const {
        std::vector<Eigen::VectorXcd> out;
        if (count <= 0) return out;
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
        std::normal_distribution<double> nd;
        Eigen::MatrixXcd N(n_, count);
        for (Eigen::Index i = 0; i < N.size(); ++i) N.data()[i] = cplx(nd(rng), nd(rng));
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index j = 0; j < count; ++j) {
                // T = B*, so B x = T* x and B* y = T y
                Eigen::VectorXcd Bx = T_.adjoint() * N.col(j);
                N.col(j) -= T_ * apply_inverse(Bx);
            }
            N = orthonormalize(N);
        }
        for (Eigen::Index j = 0; j < count; ++j) out.push_back(N.col(j));
        return out;
    }

    SparseColC B_, T_;
    Eigen::Index m_, n_, p_ = 0, q_ = 0;
    bool wide_ = false, square_ = false, dense_ = false;
    std::vector<double> dense_sigma_;  // ascending
    Eigen::MatrixXcd dense_v_;
    double shift_ = 0.0;
    std::unique_ptr<Eigen::SparseLU<SparseColC>> lu_;
};

/// Smallest singular value of an already weighted matrix.
inline SpectralReport smallest_singular_value(const SparseColC& B, const SvdOptions& opt = {}) {
    SmallSingular s(B, opt.dense_limit);
    SpectralReport rep;
    bool conv = false;
    auto t = s.smallest(1, opt, &rep.iterations, &conv);
    rep.sigma_min = t[0].sigma;
    rep.residual = t[0].residual;
    rep.converged = conv;
    rep.vector = t[0].v;
    return rep;
}

/// inf |L u| / |u| over the discrete unknowns, both norms in L~^2 with the delta weight folded in.
inline SpectralReport smallest_singular_value(const ModeOperator& op, const SvdOptions& opt = {}) {
    auto rep = smallest_singular_value(weighted_matrix(op), opt);
    rep.vector = op.ip_weights.cwiseSqrt().cwiseInverse().asDiagonal() * rep.vector;
    return rep;
}

struct KernelReport {
    int dim = 0;
    std::vector<Eigen::VectorXcd> vectors;  // unknown coordinates, W-orthonormal
    std::vector<double> sigmas;             // every computed singular value, ascending
    double sigma_next = 0.0;                // first singular value above the threshold
    double gap = 0.0;                       // sigma_next / max(sigma_dim, tol * sigma_ref)
    bool converged = false;
};

inline KernelReport kernel_analysis(const ModeOperator& op, double tol = 1e-6, double sigma_ref = 1.0,
                                    const SvdOptions& opt = {}) {
    if (!(tol > 0.0)) throw PreconditionError("kernel tolerance must be positive");
    if (!(sigma_ref > 0.0)) throw PreconditionError("sigma_ref must be positive");
    SmallSingular s(weighted_matrix(op), opt.dense_limit);
    const double thr = tol * sigma_ref;
    KernelReport rep;
    int count = int(s.exact_zeros()) + 2;
    const Eigen::Index total = std::min(op.matrix.rows(), op.matrix.cols()) + s.exact_zeros();
    for (;;) {
        bool conv = false;
        auto t = s.smallest(count, opt, nullptr, &conv);
        rep.converged = conv;
        int below = 0;
        while (below < int(t.size()) && t[std::size_t(below)].sigma <= thr) ++below;
        if (below < int(t.size()) || count >= total) {
            rep.dim = below;
            rep.sigmas.clear();
            rep.vectors.clear();
            for (auto& x : t) rep.sigmas.push_back(x.sigma);
            Eigen::VectorXd ci = op.ip_weights.cwiseSqrt().cwiseInverse();
            for (int j = 0; j < below; ++j) rep.vectors.push_back(ci.asDiagonal() * t[std::size_t(j)].v);
            rep.sigma_next = below < int(t.size()) ? t[std::size_t(below)].sigma : 0.0;
            double low = below > 0 ? std::max(t[std::size_t(below - 1)].sigma, thr) : thr;
            rep.gap = rep.sigma_next / low;
            return rep;
        }
        count = int(std::min<Eigen::Index>(2 * count, total));
    }
}

/// Right singular vectors with sigma <= tol * sigma_ref as grid functions.
inline std::vector<GridFunction> kernel_basis(const ModeOperator& op, double tol = 1e-6, double sigma_ref = 1.0) {
    auto rep = kernel_analysis(op, tol, sigma_ref);
    std::vector<GridFunction> out;
    for (auto& v : rep.vectors) out.push_back(to_grid_function(op, v));
    return out;
}

/// `residual` is measured after row equilibration (each row scaled by its largest entry).
struct SolveResult {
    Eigen::VectorXcd x;
    double residual = 0.0;
    int refinements = 0;
};

/// A x = b for a square reduced operator; certificate |Ax - b| / |b| <= 1e-10 after iterative refinement.
inline SolveResult solve_unknowns(const ModeOperator& op, const Eigen::VectorXcd& b, double certificate = 1e-10) {
    if (!op.reduced()) throw PreconditionError("operator must be boundary-reduced");
    if (op.matrix.rows() != op.matrix.cols()) throw PreconditionError("solve needs a square reduced operator");
    if (b.size() != op.matrix.rows()) throw PreconditionError("rhs dimension mismatch");
    // row equilibration: coefficient scales differ by e^{2 rho} between rows on the ALG kinds
    Eigen::VectorXd rs = Eigen::VectorXd::Zero(op.matrix.rows());
    for (int r = 0; r < op.matrix.outerSize(); ++r)
        for (SparseMatrixC::InnerIterator it(op.matrix, r); it; ++it) rs[r] = std::max(rs[r], std::abs(it.value()));
    for (Eigen::Index r = 0; r < rs.size(); ++r) rs[r] = rs[r] > 0.0 ? 1.0 / rs[r] : 1.0;
    SparseColC A = rs.asDiagonal() * SparseColC(op.matrix);
    A.makeCompressed();
    const Eigen::VectorXcd sb = rs.asDiagonal() * b;
    Eigen::SparseLU<SparseColC> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    auto singular = [&](const std::string& why) -> SingularityError {
        double est = 0.0;
        try {
            est = smallest_singular_value(op).sigma_min;
        } catch (const std::exception&) {
        }
        return SingularityError(why, est);
    };
    if (lu.info() != Eigen::Success) throw singular("LU factorization failed");
    SolveResult out;
    const double nb = sb.norm();
    if (nb == 0.0) {
        out.x = Eigen::VectorXcd::Zero(b.size());
        return out;
    }
    out.x = lu.solve(sb);
    out.residual = (A * out.x - sb).norm() / nb;
    while (out.residual > certificate && out.refinements < 5) {
        out.x += lu.solve(Eigen::VectorXcd(sb - A * out.x));
        out.residual = (A * out.x - sb).norm() / nb;
        ++out.refinements;
    }
    if (!std::isfinite(out.residual) || out.residual > certificate)
        throw singular("residual certificate not met: " + std::to_string(out.residual));
    return out;
}

/// Solve L u = f in the interior with u = g on the eliminated boundary. Returns nodal u.
inline GridFunction solve(const ModeOperator& op, const GridFunction& rhs,
                          const GridFunction* boundary = nullptr) {
    if (!op.reduced()) throw PreconditionError("operator must be boundary-reduced");
    if (rhs.is_full() || rhs.values.size() != Eigen::Index(op.grid.base_size()))
        throw PreconditionError("rhs must be mode data on the operator grid");
    Eigen::VectorXcd b(op.matrix.rows());
    for (std::size_t r = 0; r < op.equation_nodes.size(); ++r) {
        int node = op.equation_nodes[r];
        b[Eigen::Index(r)] = node >= 0 ? rhs.values[node] : cplx(0.0);
    }
    if (boundary) b -= op.lift * boundary_values(op, *boundary);
    auto res = solve_unknowns(op, b);
    auto u = to_grid_function(op, res.x);
    if (boundary)
        for (int node : op.eliminated_nodes) u.values[node] += boundary->values[node];
    return u;
}

}  // namespace ghlab
