#pragma once

// Multivariate normal with a Normal-Inverse-Wishart prior:
//   x_i | mu, Sigma ~ N(mu, Sigma),  mu | Sigma ~ N(0, Sigma / lambda0),  Sigma ~ IW(Psi0, nu0).

#include <limits>
#include <optional>

#include "fit.hpp"

namespace momprop {

// Sufficient statistics: sample size, sample mean and centred scatter matrix.
struct MVNData {
    int n = 0;
    Vec xbar;
    Mat S;

    static MVNData from_observations(const Mat& X) {
        MVNData d;
        d.n = static_cast<int>(X.rows());
        if (d.n < 1) throw domain_error("MVN data: need at least one observation");
        d.xbar = X.colwise().mean().transpose();
        const Mat centred = X.rowwise() - d.xbar.transpose();
        d.S = symmetrize(centred.transpose() * centred);
        return d;
    }

    int dim() const { return static_cast<int>(xbar.size()); }

    void validate() const {
        if (n < 0) throw domain_error("MVN data: n must be >= 0");
        if (xbar.size() < 1) throw domain_error("MVN data: empty mean vector");
        if (S.rows() != xbar.size() || S.cols() != xbar.size()) throw domain_error("MVN data: S has wrong shape");
        if (!xbar.allFinite() || !S.allFinite()) throw domain_error("MVN data: non-finite entries");
        if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + S.cwiseAbs().maxCoeff()))
            throw domain_error("MVN data: S must be symmetric");
    }
};

struct MVNPrior {
    double lambda0 = 0.01;
    double nu0 = 0.0;
    Mat Psi0;

    static MVNPrior diffuse(int p) { return {0.01, p + 1.0, Mat::Identity(p, p)}; }

    void validate(int p) const {
        if (!(lambda0 > 0.0)) throw domain_error("MVN prior: lambda0 must be > 0");
        if (!(nu0 > p - 1.0)) throw domain_error("MVN prior: nu0 must exceed p - 1");
        if (Psi0.rows() != p || Psi0.cols() != p || !is_spd(Psi0)) throw domain_error("MVN prior: Psi0 must be p x p SPD");
    }
};

struct MVNConstants {
    double lambda_n = 0.0;
    double nu_n = 0.0;
    Vec mu_n;
    Mat Psi_n;
    int p = 0;
};

inline MVNConstants mvn_constants(const MVNData& data, const MVNPrior& prior) {
    data.validate();
    const int p = data.dim();
    prior.validate(p);
    MVNConstants c;
    c.p = p;
    c.lambda_n = prior.lambda0 + data.n;
    c.nu_n = prior.nu0 + data.n;
    c.mu_n = data.n * data.xbar / c.lambda_n;
    c.Psi_n = symmetrize(prior.Psi0 + data.S + (data.n * prior.lambda0 / c.lambda_n) * data.xbar * data.xbar.transpose());
    return c;
}

struct MVNExactPosterior {
    StudentTApprox mu;
    InverseWishartApprox Sigma;
};

inline MVNExactPosterior mvn_exact_posterior(const MVNData& data, const MVNPrior& prior) {
    const MVNConstants c = mvn_constants(data, prior);
    const double dof = c.nu_n - c.p + 1.0;
    return {{c.mu_n, c.Psi_n / (c.lambda_n * dof), dof}, {c.Psi_n, c.nu_n}};
}

struct MVNGaussQ {
    GaussianApprox mu;
    InverseWishartApprox Sigma;

    Vec params() const { return pack(mu.mean, vec(mu.cov), vec(Sigma.scale_matrix), scalar(Sigma.dof)); }
};

struct MVNTQ {
    StudentTApprox mu;
    InverseWishartApprox Sigma;

    Vec params() const {
        return pack(mu.loc, vec(mu.scale), scalar(mu.dof), vec(Sigma.scale_matrix), scalar(Sigma.dof));
    }
};

inline FitReport<MVNGaussQ> mvn_mfvb_fit(const MVNData& data, const MVNPrior& prior, const FitOptions& opt = {},
                                         std::optional<MVNGaussQ> init = std::nullopt) {
    const MVNConstants c = mvn_constants(data, prior);
    MVNGaussQ q0;
    q0.Sigma = init ? init->Sigma : InverseWishartApprox{c.Psi_n, c.nu_n + 1.0};
    q0.mu = init ? init->mu : GaussianApprox{c.mu_n, Mat::Zero(c.p, c.p)};

    auto step = [&](const MVNGaussQ& q) {
        MVNGaussQ next;
        next.mu = {c.mu_n, symmetrize(q.Sigma.scale_matrix / (c.lambda_n * q.Sigma.dof))};
        next.Sigma = {symmetrize(c.Psi_n + c.lambda_n * next.mu.cov), c.nu_n + 1.0};
        return next;
    };
    return iterate_fixed_point(q0, step, opt);
}

namespace detail {

// One MP sweep.  For 2 < dof(q(mu)) <= 4 the fourth moments of q(mu) are
// infinite, so the matched element variances are too and the match lands on
// the variance-existence boundary d = p + 3.
inline MVNTQ mvn_mp_sweep(const MVNConstants& c, const MVNTQ& q) {
    const double p = c.p;
    const double dof = q.Sigma.dof - p + 1.0;
    if (!(dof > 2.0)) throw undefined_moment("MVN MP: q(mu) needs dof > 2 for a covariance");
    MVNTQ next;
    next.mu = {c.mu_n, symmetrize(q.Sigma.scale_matrix / (c.lambda_n * dof)), dof};

    const double k = c.nu_n - p;  // dof of Sigma | mu, minus p + 1
    const Mat Epsi = symmetrize(c.Psi_n + c.lambda_n * dof / (dof - 2.0) * next.mu.scale);
    const Mat mean = Epsi / k;
    if (dof <= 4.0) {
        next.Sigma = {symmetrize(2.0 * mean), p + 3.0};
        return next;
    }
    const Vec dg = next.mu.scale.diagonal();
    const Vec var_psi = 2.0 * c.lambda_n * c.lambda_n * dof * dof * (dof - 1.0) /
                        ((dof - 2.0) * (dof - 2.0) * (dof - 4.0)) * dg.array().square().matrix();
    const Vec var = (2.0 * Epsi.diagonal().array().square() + k * var_psi.array()) / (k * k * (k - 2.0));
    next.Sigma = iw_moment_match(mean, var.sum());
    return next;
}

}  // namespace detail

inline bool mvn_wrong_basin(const InverseWishartApprox& Sigma, const MVNConstants& c) {
    return std::abs(Sigma.dof - (c.p + 3.0)) < 0.5 && std::abs(Sigma.dof - c.nu_n) > 1.0;
}

inline FitReport<MVNTQ> mvn_mp_fit(const MVNData& data, const MVNPrior& prior, const FitOptions& opt = {},
                                   std::optional<MVNTQ> init = std::nullopt) {
    const MVNConstants c = mvn_constants(data, prior);
    if (!(c.nu_n - c.p - 2.0 > 0.0)) throw undefined_moment("MVN MP requires nu_n - p - 2 > 0");
    MVNTQ q0;
    q0.Sigma = init ? init->Sigma : InverseWishartApprox{c.Psi_n, c.nu_n};
    q0.mu = init ? init->mu : StudentTApprox{c.mu_n, Mat::Zero(c.p, c.p), 0.0};
    auto report = iterate_fixed_point(q0, [&](const MVNTQ& q) { return detail::mvn_mp_sweep(c, q); }, opt);
    report.wrong_basin = mvn_wrong_basin(report.q.Sigma, c);
    return report;
}

// One sweep from an arbitrary state; used to probe fixed points.
inline MVNTQ mvn_mp_sweep(const MVNData& data, const MVNPrior& prior, const InverseWishartApprox& Sigma) {
    const MVNConstants c = mvn_constants(data, prior);
    return detail::mvn_mp_sweep(c, MVNTQ{{}, Sigma});
}

inline MomentSummary summarize(const MVNGaussQ& q, std::string method) {
    MomentSummary s{std::move(method), q.mu.mean, q.mu.cov, {}, {}, {}, {}, {}};
    const double p = q.mu.mean.size();
    if (q.Sigma.dof > p + 1.0) s.matrix_mean = iw_mean(q.Sigma);
    if (q.Sigma.dof > p + 3.0) s.matrix_var_diag = iw_elementwise_var_diag(q.Sigma);
    return s;
}

inline MomentSummary summarize(const MVNTQ& q, std::string method) {
    MomentSummary s{std::move(method), q.mu.loc, q.mu.covariance_or_nan(), {}, {}, {}, {}, {}};
    const double p = q.mu.loc.size();
    if (q.Sigma.dof > p + 1.0) s.matrix_mean = iw_mean(q.Sigma);
    if (q.Sigma.dof > p + 3.0) s.matrix_var_diag = iw_elementwise_var_diag(q.Sigma);
    return s;
}

inline MomentSummary summarize(const MVNExactPosterior& post, std::string method = "exact") {
    return summarize(MVNTQ{post.mu, post.Sigma}, std::move(method));
}

}  // namespace momprop
