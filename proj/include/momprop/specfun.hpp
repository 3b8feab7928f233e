#pragma once

// Derivatives of log Phi and their Gaussian-smoothed expectations.
//
// zeta_k(t) = d^k/dt^k log Phi(t), and
// xi_d(mu, s2) = E[zeta_d(X)], X ~ N(mu, s2), with zeta_0 = log Phi.

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace momprop {

struct XiConfig {
    double taylor_threshold = 0.5;
    int taylor_terms = 5;
    double mode_tol = 1e-3;
    double ed_tol = 1e-3;
    int quad_points = 50;
    int newton_cap = 100;

    void validate() const {
        if (!(taylor_threshold > 0.0)) throw domain_error("XiConfig: taylor_threshold must be > 0");
        if (taylor_terms < 1) throw domain_error("XiConfig: taylor_terms must be >= 1");
        if (!(mode_tol > 0.0)) throw domain_error("XiConfig: mode_tol must be > 0");
        if (!(ed_tol > 0.0 && ed_tol < 1.0)) throw domain_error("XiConfig: ed_tol must lie in (0,1)");
        if (quad_points < 2) throw domain_error("XiConfig: quad_points must be >= 2");
        if (newton_cap < 1) throw domain_error("XiConfig: newton_cap must be >= 1");
    }
};

inline constexpr int max_zeta_order = 40;

namespace detail {

inline constexpr double log_sqrt_2pi = 0.91893853320467274178;

// Below this point the derivatives come from cumulants of N(t,1) truncated to
// (0, inf); above it the forward recursion in t is accurate.
inline constexpr double zeta_seam = -1.0;

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw domain_error(std::string(what) + ": argument must be finite");
}

inline double binomial(int n, int k) {
    double c = 1.0;
    for (int j = 1; j <= k; ++j) c = c * (n - k + j) / j;
    return c;
}

// With s ~ N(t,1) restricted to s > 0 and x = -t, the raw moments m_n satisfy
// m_{n+1} + x m_n = n m_{n-1}.  The ratios rho_n = m_n / m_{n-1} obey
// rho_n = n / (x + rho_{n+1}), which is stable run backwards.
//   log Phi(t) = log phi(t) - log(x + rho_1)
//   zeta_1 = x + rho_1,  zeta_2 = kappa_2 - 1,  zeta_k = kappa_k (k >= 3)
inline void zeta_lower_tail(int kmax, double t, std::span<double> out) {
    const double x = -t;
    const int depth = kmax + 20 + static_cast<int>(std::ceil(500.0 / (x * x)));
    std::array<double, max_zeta_order + 2> rho{};
    double r = 0.0;
    for (int n = depth; n >= 1; --n) {
        r = n / (x + r);
        if (n <= kmax) rho[n] = r;
    }
    if (kmax < 1) rho[1] = r;

    out[0] = -0.5 * t * t - log_sqrt_2pi - std::log(x + rho[1]);
    if (kmax == 0) return;

    std::array<double, max_zeta_order + 1> m{};
    std::array<double, max_zeta_order + 1> kappa{};
    m[0] = 1.0;
    for (int n = 1; n <= kmax; ++n) m[n] = m[n - 1] * rho[n];
    for (int k = 1; k <= kmax; ++k) {
        double acc = m[k];
        for (int j = 1; j < k; ++j) acc -= binomial(k - 1, j - 1) * kappa[j] * m[k - j];
        kappa[k] = acc;
    }
    out[1] = x + rho[1];
    if (kmax >= 2) out[2] = kappa[2] - 1.0;
    for (int k = 3; k <= kmax; ++k) out[k] = kappa[k];
}

inline void zeta_upper(int kmax, double t, std::span<double> out) {
    const double tail = 0.5 * std::erfc(-t / std::numbers::sqrt2);
    out[0] = t > 0.0 ? std::log1p(-0.5 * std::erfc(t / std::numbers::sqrt2)) : std::log(tail);
    if (kmax == 0) return;
    out[1] = std::exp(-0.5 * t * t - log_sqrt_2pi) / tail;
    for (int k = 2; k <= kmax; ++k) {
        double acc = -(t * out[k - 1] + (k - 2) * out[k - 2]);
        for (int j = 0; j <= k - 2; ++j) acc -= binomial(k - 2, j) * out[1 + j] * out[k - 1 - j];
        out[k] = acc;
    }
}

}  // namespace detail

// Fills out[0..kmax] with (log Phi(t), zeta_1(t), ..., zeta_kmax(t)).
inline void zeta_series(int kmax, double t, std::span<double> out) {
    detail::require_finite(t, "zeta_series");
    if (kmax < 0 || kmax > max_zeta_order) throw domain_error("zeta_series: order out of range");
    if (out.size() < static_cast<std::size_t>(kmax) + 1) throw domain_error("zeta_series: output too small");
    if (t < detail::zeta_seam)
        detail::zeta_lower_tail(kmax, t, out);
    else
        detail::zeta_upper(kmax, t, out);
}

inline std::vector<double> zeta_series(int kmax, double t) {
    std::vector<double> out(static_cast<std::size_t>(std::max(kmax, 0)) + 1);
    zeta_series(kmax, t, out);
    return out;
}

inline double log_Phi(double t) {
    detail::require_finite(t, "log_Phi");
    std::array<double, 1> z{};
    zeta_series(0, t, z);
    return z[0];
}

inline double zeta(int k, double t) {
    if (k <= 0) throw domain_error("zeta: order must be >= 1");
    std::array<double, max_zeta_order + 1> z{};
    zeta_series(k, t, z);
    return z[static_cast<std::size_t>(k)];
}

inline double normal_pdf(double x, double mean, double var) {
    const double z = x - mean;
    return std::exp(-0.5 * z * z / var - detail::log_sqrt_2pi - 0.5 * std::log(var));
}

namespace detail {

inline void check_xi_args(int d, double mu, double sigma2) {
    if (d < 0 || d > 2) throw domain_error("xi: d must be 0, 1 or 2");
    require_finite(mu, "xi");
    require_finite(sigma2, "xi");
}

inline double zeta_d(int d, double x) {
    std::array<double, 3> z{};
    zeta_series(d, x, z);
    return z[static_cast<std::size_t>(d)];
}

}  // namespace detail

inline double xi_taylor(int d, double mu, double sigma2, const XiConfig& cfg = {}) {
    detail::check_xi_args(d, mu, sigma2);
    if (sigma2 < 0.0) throw domain_error("xi_taylor: sigma2 must be >= 0");
    cfg.validate();
    const int kmax = d + 2 * (cfg.taylor_terms - 1);
    std::array<double, max_zeta_order + 1> z{};
    zeta_series(kmax, mu, z);
    double sum = 0.0;
    double coef = 1.0;  // (sigma2/2)^k / k!
    for (int k = 0; k < cfg.taylor_terms; ++k) {
        sum += z[static_cast<std::size_t>(d + 2 * k)] * coef;
        coef *= 0.5 * sigma2 / (k + 1);
    }
    return sum;
}

// Second-order delta method: zeta_d(mu) + zeta_{d+2}(mu) sigma2 / 2.
inline double xi_delta(int d, double mu, double sigma2) {
    detail::check_xi_args(d, mu, sigma2);
    std::array<double, 5> z{};
    zeta_series(d + 2, mu, z);
    return z[static_cast<std::size_t>(d)] + 0.5 * z[static_cast<std::size_t>(d + 2)] * sigma2;
}

struct XiDomain {
    double mode;
    double step;
    int left;
    int right;
};

// Mode and effective domain of the zeta_1-weighted integrand; the same
// interval is used for every d.
inline XiDomain xi_domain(double mu, double sigma2, const XiConfig& cfg) {
    auto f = [&](double x) {
        return -0.5 * x * x - log_Phi(x) - (x - mu) * (x - mu) / (2.0 * sigma2);
    };
    auto derivs = [&](double x) {
        std::array<double, 3> z{};
        zeta_series(2, x, z);
        return std::pair{-x - z[1] - (x - mu) / sigma2, -1.0 - z[2] - 1.0 / sigma2};
    };

    std::array<double, 3> starts{
        mu / (1.0 + sigma2),
        (mu - sigma2 * std::sqrt(2.0 / std::numbers::pi)) / (sigma2 * (1.0 - std::numbers::pi / 2.0) + 1.0),
        0.0};
    const int n_starts = mu + sigma2 > 0.0 ? 3 : 2;
    if (n_starts == 3) starts[2] = -std::sqrt(mu + sigma2);
    double x = starts[0];
    double best = f(x);
    for (int i = 1; i < n_starts; ++i) {
        const double fi = f(starts[i]);
        if (fi > best) {
            best = fi;
            x = starts[i];
        }
    }

    bool converged = false;
    for (int it = 0; it < cfg.newton_cap; ++it) {
        const auto [g, h] = derivs(x);
        const double step = g / h;
        x -= step;
        if (!std::isfinite(x)) break;
        if (std::abs(step) < cfg.mode_tol) {
            converged = true;
            break;
        }
    }
    if (!converged) throw numeric_error("xi_quad: Newton search for the mode did not converge", x);

    const double fmode = f(x);
    const double s = 1.0 / std::sqrt(-derivs(x).second);
    constexpr int max_steps = 100000;
    auto walk = [&](double dir) {
        int k = 1;
        while (std::exp(f(x + dir * s * k) - fmode) >= cfg.ed_tol) {
            if (++k > max_steps) throw numeric_error("xi_quad: effective domain search did not terminate", x);
        }
        return k;
    };
    return {x, s, walk(-1.0), walk(1.0)};
}

inline double xi_quad(int d, double mu, double sigma2, const XiConfig& cfg = {}) {
    detail::check_xi_args(d, mu, sigma2);
    if (!(sigma2 > 0.0)) throw domain_error("xi_quad: sigma2 must be > 0");
    cfg.validate();
    const XiDomain dom = xi_domain(mu, sigma2, cfg);
    const double a = dom.mode - dom.step * dom.left;
    const double b = dom.mode + dom.step * dom.right;
    const int n = cfg.quad_points;
    const double h = (b - a) / n;
    auto F = [&](double x) { return detail::zeta_d(d, x) * normal_pdf(x, mu, sigma2); };
    double sum = 0.5 * (F(a) + F(b));
    for (int k = 1; k < n; ++k) sum += F(a + k * h);
    return sum * h;
}

inline double xi(int d, double mu, double sigma2, const XiConfig& cfg = {}) {
    if (sigma2 < cfg.taylor_threshold) return xi_taylor(d, mu, sigma2, cfg);
    return xi_quad(d, mu, sigma2, cfg);
}

}  // namespace momprop
