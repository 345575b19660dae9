#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <string_view>

#include "ghlab/errors.hpp"

namespace ghlab {

enum class EndKind { ALF, ALG, ALGstar, ALH, ALHstar };

inline constexpr std::array<EndKind, 5> kAllKinds{EndKind::ALF, EndKind::ALG, EndKind::ALGstar,
                                                  EndKind::ALH, EndKind::ALHstar};
inline constexpr std::array<EndKind, 4> kTorusFiberedKinds{EndKind::ALG, EndKind::ALGstar,
                                                           EndKind::ALH, EndKind::ALHstar};

inline std::string_view kind_name(EndKind k) {
    switch (k) {
        case EndKind::ALF: return "ALF";
        case EndKind::ALG: return "ALG";
        case EndKind::ALGstar: return "ALGstar";
        case EndKind::ALH: return "ALH";
        case EndKind::ALHstar: return "ALHstar";
    }
    return "?";
}

inline EndKind parse_kind(std::string_view s) {
    for (auto k : kAllKinds)
        if (kind_name(k) == s) return k;
    throw DomainError("unknown end kind '" + std::string(s) + "'");
}

/// Base R+ x T^2: radial weight is r itself. Otherwise rho = log r.
inline constexpr bool is_torus_base(EndKind k) { return k == EndKind::ALH || k == EndKind::ALHstar; }
inline constexpr bool is_twisted(EndKind k) { return k == EndKind::ALGstar || k == EndKind::ALHstar; }

/// Period of the second and third chart coordinates. ALF theta is not periodic (returns 0).
inline constexpr double angular_period(EndKind k, int dir) {
    constexpr double tau = 2.0 * std::numbers::pi;
    switch (k) {
        case EndKind::ALF: return dir == 1 ? 0.0 : tau;
        case EndKind::ALG: return tau;
        case EndKind::ALGstar: return dir == 1 ? tau : 1.0;
        case EndKind::ALH:
        case EndKind::ALHstar: return dir == 1 ? 1.0 : tau;
    }
    return 0.0;
}

/// Chart coordinates (rho, a1, a2): ALF (rho, theta, phi); ALG/ALGstar (rho, theta, s); ALH/ALHstar (rho, x, y).
struct BasePoint {
    double rho = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
};

/// One of the five model ends with its parameters and truncated annulus.
struct ModelEnd {
    EndKind kind = EndKind::ALH;
    double c = 1.0;
    int k = 0;
    double eps = 0.5;
    double rho_min = 1.0;
    double rho_max = 2.0;

    ModelEnd() = default;
    ModelEnd(EndKind kind_, double c_, int k_, double eps_, double rho_min_, double rho_max_)
        : kind(kind_), c(c_), k(k_), eps(eps_), rho_min(rho_min_), rho_max(rho_max_) {
        validate();
    }

    /// Effective flux entering h and the gauge (ALG/ALH carry none).
    int flux() const { return (kind == EndKind::ALG || kind == EndKind::ALH) ? 0 : k; }

    template <class T>
    T radius(T rho) const {
        if (is_torus_base(kind)) return rho;
        using std::exp;
        return exp(rho);
    }

    template <class T>
    T h(T rho) const {
        using std::exp;
        const double kk = flux();
        switch (kind) {
            case EndKind::ALF: return c + kk * 0.5 * exp(-rho);
            case EndKind::ALGstar: return c + kk * rho;
            case EndKind::ALHstar: return c + kk * rho;
            default: return T(c) + T(0.0) * rho;
        }
    }

    template <class T>
    T h_eps(T rho) const { return 1.0 + eps * h(rho); }

    template <class T>
    T omega(T rho) const {
        using std::exp;
        using std::sqrt;
        T base = 1.0 / sqrt(h_eps(rho));
        return is_torus_base(kind) ? base : exp(-rho) * base;
    }

    /// Diagonal of the flat base metric in chart coordinates.
    template <class T>
    std::array<T, 3> base_metric(T rho, T a1) const {
        using std::exp;
        using std::sin;
        switch (kind) {
            case EndKind::ALF: {
                T e2 = exp(2.0 * rho);
                T s = sin(a1);
                return {e2, e2, e2 * s * s};
            }
            case EndKind::ALG:
            case EndKind::ALGstar: {
                T e2 = exp(2.0 * rho);
                return {e2, e2, T(1.0) + T(0.0) * rho};
            }
            default: return {T(1.0), T(1.0), T(1.0)};
        }
    }

    /// Connection one-form A (eta = dt + A) in the fixed gauge, components (rho, a1, a2).
    template <class T>
    std::array<T, 3> connection(T rho, T a1) const {
        using std::cos;
        const double kk = flux();
        T zero = T(0.0) * rho;
        switch (kind) {
            case EndKind::ALF: return {zero, zero, 0.5 * kk * (1.0 - cos(a1))};
            case EndKind::ALGstar:
            case EndKind::ALHstar: return {zero, zero, kk * a1};
            default: return {zero, zero, zero};
        }
    }

    /// Orientation sign of the chart (rho, a1, a2) for which *dh = dA holds.
    int orientation() const { return kind == EndKind::ALF ? -1 : 1; }

    void validate() const {
        if (!(c > 0.0)) throw DomainError("c > 0 required");
        if (!(eps > 0.0 && eps < 1.0)) throw DomainError("eps ∈ (0,1) required");
        if (!(rho_min < rho_max)) throw DomainError("rho_min < rho_max required");
        if (is_torus_base(kind) && !(rho_min > 0.0))
            throw DomainError("rho_min > 0 required for the R+ x T^2 base");
        if (!std::isfinite(rho_min) || !std::isfinite(rho_max)) throw DomainError("finite annulus required");
        // h is monotone in rho on every kind, so the endpoints decide positivity.
        if (!(h_eps(rho_min) > 0.0 && h_eps(rho_max) > 0.0))
            throw DomainError("h_eps > 0 violated on the annulus");
    }

    ModelEnd with_eps(double e) const { return ModelEnd(kind, c, k, e, rho_min, rho_max); }
    ModelEnd with_range(double lo, double hi) const { return ModelEnd(kind, c, k, eps, lo, hi); }
};

}  // namespace ghlab
