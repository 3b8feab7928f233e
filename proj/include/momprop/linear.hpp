#pragma once

// Bayesian linear regression with a g-prior on beta and an inverse-gamma
// prior on sigma^2:
//   y | beta, sigma2 ~ N(X beta, sigma2 I),  beta | sigma2 ~ N(0, g sigma2 (X'X)^{-1}),
//   sigma2 ~ IG(A, B).

#include <optional>

#include "fit.hpp"

namespace momprop {

struct LinearData {
    Vec y;
    Mat X;

    void validate() const {
        if (y.size() < 1) throw domain_error("linear data: need at least one observation");
        if (X.rows() != y.size()) throw domain_error("linear data: X and y row counts differ");
        if (X.cols() < 1) throw domain_error("linear data: X has no columns");
        if (!y.allFinite() || !X.allFinite()) throw domain_error("linear data: non-finite entries");
    }
};

struct LinearPrior {
    double g = 1e4;
    double A = 0.01;
    double B = 0.01;

    void validate() const {
        if (!(g > 0.0) || !(A > 0.0) || !(B > 0.0)) throw domain_error("linear prior: g, A, B must be > 0");
    }
};

struct LinearConstants {
    Vec beta_hat;
    double u = 0.0;
    double sigma_hat_u2 = 0.0;
    Mat XtX;
    Mat XtX_inv;
    double yty = 0.0;
    int n = 0;
    int p = 0;
};

inline LinearConstants linear_constants(const LinearData& data, const LinearPrior& prior) {
    data.validate();
    prior.validate();
    LinearConstants c;
    c.n = static_cast<int>(data.X.rows());
    c.p = static_cast<int>(data.X.cols());
    c.XtX = data.X.transpose() * data.X;
    Eigen::LLT<Mat> llt(c.XtX);
    if (llt.info() != Eigen::Success) throw linalg_error("X'X is not positive definite (rank-deficient design)");
    c.XtX_inv = symmetrize(llt.solve(Mat::Identity(c.p, c.p)));
    const Vec Xty = data.X.transpose() * data.y;
    c.beta_hat = llt.solve(Xty);
    c.u = prior.g / (1.0 + prior.g);
    c.yty = data.y.squaredNorm();
    c.sigma_hat_u2 = std::max(0.0, (c.yty - c.u * Xty.dot(c.beta_hat)) / c.n);
    return c;
}

struct LinearExactPosterior {
    StudentTApprox beta;
    InverseGammaApprox sigma2;
};

inline LinearExactPosterior linear_exact_posterior(const LinearData& data, const LinearPrior& prior) {
    const LinearConstants c = linear_constants(data, prior);
    const double shape = prior.A + 0.5 * c.n;
    const double scale = prior.B + 0.5 * c.n * c.sigma_hat_u2;
    return {{c.u * c.beta_hat, symmetrize(scale / shape * c.u * c.XtX_inv), 2.0 * prior.A + c.n}, {shape, scale}};
}

// q(beta) Gaussian, q(sigma2) inverse-gamma.
struct LinearGaussQ {
    GaussianApprox beta;
    InverseGammaApprox sigma2;

    Vec params() const { return pack(beta.mean, vec(beta.cov), scalar(sigma2.shape), scalar(sigma2.scale)); }
};

// q(beta) Student t, q(sigma2) inverse-gamma.
struct LinearTQ {
    StudentTApprox beta;
    InverseGammaApprox sigma2;

    Vec params() const {
        return pack(beta.loc, vec(beta.scale), scalar(beta.dof), scalar(sigma2.shape), scalar(sigma2.scale));
    }
};

namespace detail {

struct LinearContext {
    const LinearData& data;
    const LinearPrior& prior;
    LinearConstants c;
    double shape_target;  // A + (n+p)/2

    LinearContext(const LinearData& d, const LinearPrior& pr)
        : data(d), prior(pr), c(linear_constants(d, pr)), shape_target(pr.A + 0.5 * (c.n + c.p)) {}

    InverseGammaApprox initial_sigma2() const { return {shape_target, prior.B + 0.5 * c.yty}; }

    // B + ||y - X m||^2 / 2 + m'X'X m / (2g): the part of E[B(beta)] that
    // depends only on the mean of q(beta).
    double location_part(const Vec& m) const {
        return prior.B + 0.5 * (data.y - data.X * m).squaredNorm() + m.dot(c.XtX * m) / (2.0 * prior.g);
    }

    void require_matchable() const {
        if (!(shape_target > 2.0))
            throw undefined_moment("moment matching for sigma2 requires A + (n+p)/2 > 2");
    }

    // Law of total variance through sigma2 | beta ~ IG(A + (n+p)/2, B(beta)).
    InverseGammaApprox match_sigma2(double EB, double VB) const {
        const double a = shape_target;
        const double mean = EB / (a - 1.0);
        const double var = EB * EB / ((a - 1.0) * (a - 1.0) * (a - 2.0)) + VB / ((a - 1.0) * (a - 2.0));
        return ig_moment_match(mean, var);
    }
};

}  // namespace detail

inline FitReport<LinearGaussQ> linear_mfvb_fit(const LinearData& data, const LinearPrior& prior,
                                               const FitOptions& opt = {},
                                               std::optional<LinearGaussQ> init = std::nullopt) {
    const detail::LinearContext ctx(data, prior);
    const auto& c = ctx.c;
    LinearGaussQ q0;
    q0.sigma2 = init ? init->sigma2 : ctx.initial_sigma2();
    q0.beta = init ? init->beta : GaussianApprox{Vec::Zero(c.p), Mat::Zero(c.p, c.p)};

    auto step = [&](const LinearGaussQ& q) {
        LinearGaussQ next;
        next.beta.mean = c.u * c.beta_hat;
        next.beta.cov = symmetrize(q.sigma2.scale / q.sigma2.shape * c.u * c.XtX_inv);
        const double tr = (c.XtX * next.beta.cov).trace();
        next.sigma2 = {ctx.shape_target, ctx.location_part(next.beta.mean) + tr / (2.0 * c.u)};
        return next;
    };
    return iterate_fixed_point(q0, step, opt);
}

inline FitReport<LinearGaussQ> linear_mp1_fit(const LinearData& data, const LinearPrior& prior,
                                              const FitOptions& opt = {},
                                              std::optional<LinearGaussQ> init = std::nullopt) {
    const detail::LinearContext ctx(data, prior);
    ctx.require_matchable();
    const auto& c = ctx.c;
    LinearGaussQ q0;
    q0.sigma2 = init ? init->sigma2 : ctx.initial_sigma2();
    q0.beta = init ? init->beta : GaussianApprox{Vec::Zero(c.p), Mat::Zero(c.p, c.p)};

    auto step = [&](const LinearGaussQ& q) {
        LinearGaussQ next;
        next.beta.mean = c.u * c.beta_hat;
        next.beta.cov = symmetrize(ig_mean(q.sigma2) * c.u * c.XtX_inv);
        const Mat M = c.XtX * next.beta.cov;
        const double EB = ctx.location_part(next.beta.mean) + M.trace() / (2.0 * c.u);
        const double VB = (M * M).trace() / (2.0 * c.u * c.u);
        next.sigma2 = ctx.match_sigma2(EB, VB);
        return next;
    };
    return iterate_fixed_point(q0, step, opt);
}

inline FitReport<LinearTQ> linear_mp2_fit(const LinearData& data, const LinearPrior& prior,
                                          const FitOptions& opt = {},
                                          std::optional<LinearTQ> init = std::nullopt) {
    const detail::LinearContext ctx(data, prior);
    ctx.require_matchable();
    const auto& c = ctx.c;
    LinearTQ q0;
    q0.sigma2 = init ? init->sigma2 : ctx.initial_sigma2();
    q0.beta = init ? init->beta : StudentTApprox{Vec::Zero(c.p), Mat::Zero(c.p, c.p), 0.0};

    auto step = [&](const LinearTQ& q) {
        LinearTQ next;
        const double nu = 2.0 * q.sigma2.shape;
        if (!(nu > 4.0)) throw undefined_moment("MP2: q(beta) needs dof > 4 for its fourth moments");
        next.beta.loc = c.u * c.beta_hat;
        next.beta.scale = symmetrize(q.sigma2.scale / q.sigma2.shape * c.u * c.XtX_inv);
        next.beta.dof = nu;
        const Mat M = c.XtX * next.beta.scale;
        const double trM = M.trace();
        const double EB = ctx.location_part(next.beta.loc) + nu * trM / (2.0 * c.u * (nu - 2.0));
        const double VB = (nu * nu * (M * M).trace() / ((nu - 2.0) * (nu - 4.0)) +
                           nu * nu * trM * trM / ((nu - 2.0) * (nu - 2.0) * (nu - 4.0))) /
                          (2.0 * c.u * c.u);
        next.sigma2 = ctx.match_sigma2(EB, VB);
        return next;
    };
    return iterate_fixed_point(q0, step, opt);
}

inline MomentSummary summarize(const LinearGaussQ& q, std::string method) {
    MomentSummary s{std::move(method), q.beta.mean, q.beta.cov, {}, {}, {}, {}, {}};
    if (q.sigma2.shape > 1.0) s.scalar_mean = ig_mean(q.sigma2);
    if (q.sigma2.shape > 2.0) s.scalar_var = ig_mean_var(q.sigma2).variance;
    return s;
}

inline MomentSummary summarize(const LinearTQ& q, std::string method) {
    MomentSummary s{std::move(method), q.beta.loc, q.beta.covariance_or_nan(), {}, {}, {}, {}, {}};
    if (q.sigma2.shape > 1.0) s.scalar_mean = ig_mean(q.sigma2);
    if (q.sigma2.shape > 2.0) s.scalar_var = ig_mean_var(q.sigma2).variance;
    return s;
}

inline MomentSummary summarize(const LinearExactPosterior& post, std::string method = "exact") {
    return summarize(LinearTQ{post.beta, post.sigma2}, std::move(method));
}

}  // namespace momprop
