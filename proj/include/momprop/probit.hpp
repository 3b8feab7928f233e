#pragma once

// Probit regression, y_i ~ Bernoulli(Phi(x_i' beta)), beta ~ N(0, D^{-1}),
// through the augmented form a_i ~ N(z_i' beta, 1) restricted to a_i > 0,
// z_i = (2 y_i - 1) x_i.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "fit.hpp"
#include "specfun.hpp"

namespace momprop {

struct ProbitData {
    Vec y;
    Mat X;
    Mat Z;

    static ProbitData make(Vec y, Mat X) {
        if (X.rows() != y.size() || y.size() < 1 || X.cols() < 1)
            throw domain_error("probit data: X must be n x p with n = len(y) >= 1");
        for (Eigen::Index i = 0; i < y.size(); ++i)
            if (y[i] != 0.0 && y[i] != 1.0) throw domain_error("probit data: y must be 0/1");
        if (!X.allFinite()) throw domain_error("probit data: non-finite design entries");
        ProbitData d{std::move(y), std::move(X), {}};
        d.Z = (2.0 * d.y.array() - 1.0).matrix().asDiagonal() * d.X;
        return d;
    }

    int n() const { return static_cast<int>(Z.rows()); }
    int p() const { return static_cast<int>(Z.cols()); }
};

struct ProbitPrior {
    Mat D;  // prior precision

    static ProbitPrior ridge(int p, double lambda) {
        if (!(lambda > 0.0)) throw domain_error("probit prior: lambda must be > 0");
        return {lambda * Mat::Identity(p, p)};
    }

    void validate(int p) const {
        if (D.rows() != p || D.cols() != p || !is_spd(D)) throw domain_error("probit prior: D must be p x p SPD");
    }
};

struct ProbitWorkspace {
    Mat S;    // (Z'Z + D)^{-1}
    Mat SZt;  // S Z'

    static ProbitWorkspace make(const ProbitData& data, const ProbitPrior& prior) {
        prior.validate(data.p());
        ProbitWorkspace w;
        w.S = spd_inverse(data.Z.transpose() * data.Z + prior.D, "Z'Z + D");
        w.SZt = w.S * data.Z.transpose();
        return w;
    }
};

struct AuxiliaryMoments {
    Vec mean_a;  // E_q(a); V_q(a) stays implicit
};

struct ProbitQ {
    GaussianApprox beta;
    AuxiliaryMoments a;

    Vec params() const { return pack(beta.mean, vec(beta.cov)); }
};

enum class XiVariant { delta, quadrature };

// Jacobi evaluates every zeta/xi at the iterate the sweep started from;
// sequential re-evaluates the covariance update at the freshly updated mean.
enum class SweepOrder { jacobi, sequential };

struct ProbitMPOptions {
    XiVariant variant = XiVariant::delta;
    XiConfig xi;
    SweepOrder order = SweepOrder::jacobi;
};

namespace detail {

struct ZetaColumns {
    Vec z0, z1, z2, z3;
};

inline ZetaColumns zeta_columns(const Vec& m, int kmax) {
    const auto n = m.size();
    ZetaColumns out{Vec(n), Vec(n), Vec(n), Vec(kmax >= 3 ? n : 0)};
    std::array<double, 4> z{};
    for (Eigen::Index i = 0; i < n; ++i) {
        zeta_series(kmax, m[i], z);
        out.z0[i] = z[0];
        out.z1[i] = z[1];
        out.z2[i] = z[2];
        if (kmax >= 3) out.z3[i] = z[3];
    }
    return out;
}

inline double probit_log_posterior(const ProbitData& data, const ProbitPrior& prior, const Vec& beta) {
    const Vec m = data.Z * beta;
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) s += log_Phi(m[i]);
    return s - 0.5 * beta.dot(prior.D * beta);
}

// Z' diag(w) Z + D
inline Mat weighted_precision(const ProbitData& data, const ProbitPrior& prior, const Vec& w) {
    return symmetrize(data.Z.transpose() * w.asDiagonal() * data.Z + prior.D);
}

inline Vec row_quadratic_forms(const Mat& Z, const Mat& Sigma) {
    return (Z * Sigma).cwiseProduct(Z).rowwise().sum();
}

}  // namespace detail

inline FitReport<ProbitQ> probit_laplace_fit(const ProbitData& data, const ProbitPrior& prior,
                                             const FitOptions& opt = {}, std::optional<ProbitQ> init = std::nullopt) {
    opt.validate();
    prior.validate(data.p());
    if (init && init->beta.mean.size() != data.p()) throw domain_error("Laplace: init has wrong dimension");
    FitReport<ProbitQ> report;
    Vec beta = init ? init->beta.mean : Vec::Zero(data.p());
    double obj = detail::probit_log_posterior(data, prior, beta);
    for (int t = 1; t <= opt.max_iter; ++t) {
        const auto zc = detail::zeta_columns(data.Z * beta, 2);
        const Vec grad = data.Z.transpose() * zc.z1 - prior.D * beta;
        Eigen::LLT<Mat> llt(detail::weighted_precision(data, prior, -zc.z2));
        if (llt.info() != Eigen::Success) throw linalg_error("Laplace: negative Hessian is not positive definite");
        const Vec delta = llt.solve(grad);

        // Backtracking keeps the ascent monotone far from the mode.
        double step = 1.0;
        Vec next = beta + delta;
        double next_obj = detail::probit_log_posterior(data, prior, next);
        while (next_obj < obj && step > 1e-10) {
            step *= 0.5;
            next = beta + step * delta;
            next_obj = detail::probit_log_posterior(data, prior, next);
        }
        const double change = (step * delta).cwiseAbs().maxCoeff();
        beta = next;
        obj = next_obj;
        report.iterations = t;
        if (opt.record_trace) report.trace.push_back(beta);
        if (change < opt.eps) {
            report.termination = Termination::converged;
            break;
        }
    }
    const auto zc = detail::zeta_columns(data.Z * beta, 2);
    report.q.beta = {beta, spd_inverse(detail::weighted_precision(data, prior, -zc.z2), "Laplace precision")};
    return report;
}

inline FitReport<ProbitQ> probit_mfvb_fit(const ProbitData& data, const ProbitPrior& prior,
                                          const FitOptions& opt = {}, std::optional<ProbitQ> init = std::nullopt) {
    const ProbitWorkspace w = ProbitWorkspace::make(data, prior);
    ProbitQ q0;
    q0.beta = init ? init->beta : GaussianApprox{w.SZt * Vec::Ones(data.n()), w.S};

    auto step = [&](const ProbitQ& q) {
        const Vec m = data.Z * q.beta.mean;
        const auto zc = detail::zeta_columns(m, 1);
        ProbitQ next;
        next.a.mean_a = m + zc.z1;
        next.beta = {w.SZt * next.a.mean_a, w.S};
        return next;
    };
    return iterate_fixed_point(q0, step, opt);
}

namespace detail {

inline void smoothed_zetas(const Vec& m, const Vec& v, const ProbitMPOptions& mp, Vec& xi1, Vec& xi2) {
    const auto n = m.size();
    xi1.resize(n);
    xi2.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (mp.variant == XiVariant::delta) {
            xi1[i] = xi_delta(1, m[i], v[i]);
            xi2[i] = xi_delta(2, m[i], v[i]);
        } else {
            xi1[i] = xi(1, m[i], v[i], mp.xi);
            xi2[i] = xi(2, m[i], v[i], mp.xi);
        }
    }
}

inline Vec one_plus_zeta2(const Vec& m) {
    Vec out(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double z2 = zeta(2, m[i]);
        if (!(z2 >= -1.0 && z2 <= 0.0)) throw numeric_error("probit MP: zeta_2 left [-1, 0]", m[i]);
        out[i] = 1.0 + z2;
    }
    return out;
}

}  // namespace detail

inline FitReport<ProbitQ> probit_mp_fit(const ProbitData& data, const ProbitPrior& prior, const ProbitMPOptions& mp = {},
                                        const FitOptions& opt = {}, std::optional<ProbitQ> init = std::nullopt) {
    mp.xi.validate();
    const ProbitWorkspace w = ProbitWorkspace::make(data, prior);
    const Mat ZS = w.SZt.transpose();
    ProbitQ q0;
    q0.beta = init ? init->beta : GaussianApprox{w.SZt * Vec::Ones(data.n()), w.S};

    auto step = [&](const ProbitQ& q) {
        const Vec m = data.Z * q.beta.mean;
        const Vec v = detail::row_quadratic_forms(data.Z, q.beta.cov);
        Vec xi1, xi2;
        detail::smoothed_zetas(m, v, mp, xi1, xi2);

        ProbitQ next;
        next.a.mean_a = m + xi1;
        next.beta.mean = w.SZt * next.a.mean_a;

        Vec c1 = (1.0 + xi2.array()).matrix();
        Vec c2 = detail::one_plus_zeta2(m);
        if (mp.order == SweepOrder::sequential) {
            const Vec m_new = data.Z * next.beta.mean;
            detail::smoothed_zetas(m_new, v, mp, xi1, xi2);
            c1 = (1.0 + xi2.array()).matrix();
            c2 = detail::one_plus_zeta2(m_new);
        }
        // S Z'[I + diag c1] Z S + S Z' diag(c2) Z Sigma Z' diag(c2) Z S, kept p x p.
        const Mat G = data.Z.transpose() * c2.asDiagonal() * ZS;
        next.beta.cov = symmetrize(w.S + ZS.transpose() * c1.asDiagonal() * ZS + G.transpose() * q.beta.cov * G);
        if (!is_spd(next.beta.cov)) throw linalg_error("probit MP: covariance update lost positive definiteness");
        return next;
    };
    return iterate_fixed_point(q0, step, opt);
}

struct DMVBObjective {
    double value;
    Vec grad;
    Mat cov;
};

// Delta-method ELBO with the covariance profiled out:
//   1'log Phi(Z mu) - mu'D mu / 2 - log|Z' diag(-zeta_2(Z mu)) Z + D| / 2.
inline DMVBObjective probit_dmvb_objective(const ProbitData& data, const ProbitPrior& prior, const Vec& mu) {
    const auto zc = detail::zeta_columns(data.Z * mu, 3);
    const Mat H = detail::weighted_precision(data, prior, -zc.z2);
    Eigen::LLT<Mat> llt(H);
    if (llt.info() != Eigen::Success) throw linalg_error("DMVB: profiled precision is not positive definite");
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    Mat cov = symmetrize(llt.solve(Mat::Identity(H.rows(), H.cols())));
    const Vec dg = detail::row_quadratic_forms(data.Z, cov);
    DMVBObjective out;
    out.value = zc.z0.sum() - 0.5 * mu.dot(prior.D * mu) - 0.5 * logdet;
    out.grad = data.Z.transpose() * zc.z1 - prior.D * mu + 0.5 * data.Z.transpose() * dg.cwiseProduct(zc.z3);
    out.cov = std::move(cov);
    return out;
}

namespace detail {

struct DMVBContext {
    const ProbitData& data;
    const ProbitPrior& prior;
};

inline Vec to_vec(const gsl_vector* x) {
    Vec v(static_cast<Eigen::Index>(x->size));
    for (std::size_t i = 0; i < x->size; ++i) v[static_cast<Eigen::Index>(i)] = gsl_vector_get(x, i);
    return v;
}

// GSL minimizes, so these report the negated objective.
inline double dmvb_f(const gsl_vector* x, void* p) {
    const auto* ctx = static_cast<const DMVBContext*>(p);
    try {
        return -probit_dmvb_objective(ctx->data, ctx->prior, to_vec(x)).value;
    } catch (const std::exception&) {
        return GSL_POSINF;
    }
}

inline void dmvb_fdf(const gsl_vector* x, void* p, double* f, gsl_vector* g) {
    const auto* ctx = static_cast<const DMVBContext*>(p);
    try {
        const auto obj = probit_dmvb_objective(ctx->data, ctx->prior, to_vec(x));
        if (f != nullptr) *f = -obj.value;
        for (std::size_t i = 0; i < g->size; ++i) gsl_vector_set(g, i, -obj.grad[static_cast<Eigen::Index>(i)]);
    } catch (const std::exception&) {
        if (f != nullptr) *f = GSL_POSINF;
        gsl_vector_set_all(g, GSL_NAN);
    }
}

inline void dmvb_df(const gsl_vector* x, void* p, gsl_vector* g) { dmvb_fdf(x, p, nullptr, g); }

struct GslVectorFree {
    void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct GslMinimizerFree {
    void operator()(gsl_multimin_fdfminimizer* m) const { gsl_multimin_fdfminimizer_free(m); }
};

}  // namespace detail

// BFGS with a Wolfe line search (GSL's bfgs2).  eps is the gradient-norm
// target; max_iter caps the optimizer iterations.
inline FitReport<ProbitQ> probit_dmvb_fit(const ProbitData& data, const ProbitPrior& prior,
                                          const FitOptions& opt = {.eps = 1e-6, .max_iter = 500},
                                          std::optional<ProbitQ> init = std::nullopt) {
    opt.validate();
    prior.validate(data.p());
    if (init && init->beta.mean.size() != data.p()) throw domain_error("DMVB: init has wrong dimension");
    const auto p = static_cast<std::size_t>(data.p());
    detail::DMVBContext ctx{data, prior};
    gsl_multimin_function_fdf fn{&detail::dmvb_f, &detail::dmvb_df, &detail::dmvb_fdf, p, &ctx};

    const Vec start = init ? init->beta.mean : probit_laplace_fit(data, prior, {.eps = 1e-10, .max_iter = 200}).q.beta.mean;
    std::unique_ptr<gsl_vector, detail::GslVectorFree> x(gsl_vector_alloc(p));
    for (std::size_t i = 0; i < p; ++i) gsl_vector_set(x.get(), i, start[static_cast<Eigen::Index>(i)]);
    std::unique_ptr<gsl_multimin_fdfminimizer, detail::GslMinimizerFree> solver(
        gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, p));

    gsl_error_handler_t* previous = gsl_set_error_handler_off();
    gsl_multimin_fdfminimizer_set(solver.get(), &fn, x.get(), 0.01, 0.1);

    FitReport<ProbitQ> report;
    report.termination = Termination::max_iterations;
    if (gsl_multimin_test_gradient(solver->gradient, opt.eps) == GSL_SUCCESS) {
        report.termination = Termination::converged;
    } else {
        for (int t = 1; t <= opt.max_iter; ++t) {
            const int status = gsl_multimin_fdfminimizer_iterate(solver.get());
            report.iterations = t;
            if (opt.record_trace) report.trace.push_back(detail::to_vec(solver->x));
            if (gsl_multimin_test_gradient(solver->gradient, opt.eps) == GSL_SUCCESS) {
                report.termination = Termination::converged;
                break;
            }
            if (status != GSL_SUCCESS) {
                report.termination = Termination::optimizer_failed;
                break;
            }
        }
    }
    gsl_set_error_handler(previous);

    const Vec mu = detail::to_vec(solver->x);
    report.q.beta = {mu, probit_dmvb_objective(data, prior, mu).cov};
    return report;
}

// a ~ N(mean, 1) restricted to a > 0.  Plain rejection when the cut is not in
// the far tail, otherwise Robert's exponential proposal.
template <class Rng>
double draw_positive_normal(double mean, Rng& rng) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    const double c = -mean;  // standardized lower bound
    if (c < 0.5) {
        for (;;) {
            const double z = normal(rng);
            if (z > c) return mean + z;
        }
    }
    const double alpha = 0.5 * (c + std::sqrt(c * c + 4.0));
    for (;;) {
        const double z = c - std::log1p(-unif(rng)) / alpha;
        const double d = z - alpha;
        if (unif(rng) <= std::exp(-0.5 * d * d)) return mean + z;
    }
}

struct GibbsOptions {
    int n_samples = 50000;
    int n_warmup = 5000;
    std::uint64_t seed = 1;
    int n_batches = 50;
};

// Data-augmentation Gibbs sampler.  Standard errors of the mean use batch
// means, which absorbs the chain's autocorrelation.
inline MomentSummary probit_gibbs_oracle(const ProbitData& data, const ProbitPrior& prior, const GibbsOptions& g = {}) {
    if (g.n_samples < 1000) throw domain_error("Gibbs: n_samples must be >= 1000");
    if (g.n_warmup < 0 || g.n_batches < 2 || g.n_batches > g.n_samples)
        throw domain_error("Gibbs: bad warmup or batch settings");
    const ProbitWorkspace w = ProbitWorkspace::make(data, prior);
    const Mat L = Eigen::LLT<Mat>(w.S).matrixL();
    const int n = data.n();
    const int p = data.p();

    std::mt19937_64 rng(g.seed);
    std::normal_distribution<double> normal;
    Vec beta = Vec::Zero(p);
    Vec a(n);
    Vec noise(p);

    Vec sum = Vec::Zero(p);
    Mat outer = Mat::Zero(p, p);
    const int batch_len = g.n_samples / g.n_batches;
    Mat batch_means = Mat::Zero(p, g.n_batches);
    for (int it = 0; it < g.n_warmup + g.n_samples; ++it) {
        const Vec m = data.Z * beta;
        for (int i = 0; i < n; ++i) a[i] = draw_positive_normal(m[i], rng);
        for (int j = 0; j < p; ++j) noise[j] = normal(rng);
        beta = w.SZt * a + L * noise;
        const int s = it - g.n_warmup;
        if (s < 0) continue;
        sum += beta;
        outer += beta * beta.transpose();
        const int b = s / batch_len;
        if (b < g.n_batches) batch_means.col(b) += beta / batch_len;
    }

    MomentSummary out;
    out.method = "gibbs";
    out.mean = sum / g.n_samples;
    out.cov = symmetrize((outer - g.n_samples * out.mean * out.mean.transpose()) / (g.n_samples - 1));
    const Vec bm = batch_means.rowwise().mean();
    const Mat centred = batch_means.colwise() - bm;
    out.mean_se = (centred.array().square().rowwise().sum() / (g.n_batches - 1) / g.n_batches).sqrt().matrix();
    return out;
}

inline MomentSummary summarize(const ProbitQ& q, std::string method) {
    return {std::move(method), q.beta.mean, q.beta.cov, {}, {}, {}, {}, {}};
}

}  // namespace momprop
