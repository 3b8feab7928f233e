#pragma once

#include <cmath>
#include <variant>

#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "fit.hpp"

namespace momprop {

struct DensityGrid {
    Vec points;
    Vec values;
};

inline double trapezoid(const Vec& x, const Vec& f) {
    if (x.size() != f.size()) throw domain_error("trapezoid: length mismatch");
    double s = 0.0;
    for (Eigen::Index i = 1; i < x.size(); ++i) s += 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
    return s;
}

inline double trapezoid(const DensityGrid& g) { return trapezoid(g.points, g.values); }

// 1 - (1/2) int |p - q|
inline double accuracy(const DensityGrid& p, const DensityGrid& q) {
    if (p.points.size() != q.points.size() || p.values.size() != p.points.size() ||
        q.values.size() != q.points.size())
        throw domain_error("accuracy: grids differ in length");
    const double span = p.points.cwiseAbs().maxCoeff();
    if ((p.points - q.points).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + span))
        throw domain_error("accuracy: grids are on different points");
    return 1.0 - 0.5 * trapezoid(p.points, (p.values - q.values).cwiseAbs());
}

struct MomentErrors {
    Vec mean_err;
    Vec sd_err;
};

// Componentwise errors of approx against reference; a scalar companion
// (e.g. sigma^2) is appended when both summaries carry one.
inline MomentErrors moment_errors(const MomentSummary& approx, const MomentSummary& reference) {
    if (approx.mean.size() != reference.mean.size() || approx.cov.rows() != reference.cov.rows())
        throw domain_error("moment_errors: dimension mismatch");
    Vec mean_err = approx.mean - reference.mean;
    Vec sd_err = approx.cov.diagonal().cwiseSqrt() - reference.cov.diagonal().cwiseSqrt();
    if (approx.scalar_mean && reference.scalar_mean && approx.scalar_var && reference.scalar_var) {
        const auto p = mean_err.size();
        mean_err.conservativeResize(p + 1);
        sd_err.conservativeResize(p + 1);
        mean_err[p] = *approx.scalar_mean - *reference.scalar_mean;
        sd_err[p] = std::sqrt(*approx.scalar_var) - std::sqrt(*reference.scalar_var);
    }
    return {std::move(mean_err), std::move(sd_err)};
}

struct NormalMarginal {
    double mean;
    double var;
};

struct StudentTMarginal {
    double loc;
    double scale2;  // squared scale, not the variance
    double dof;
};

struct InverseGammaMarginal {
    double shape;
    double scale;
};

using Marginal = std::variant<NormalMarginal, StudentTMarginal, InverseGammaMarginal>;

// Sigma_jj of an IW(Psi, d) matrix is IG((d - p + 1)/2, Psi_jj / 2).
inline InverseGammaMarginal iw_diagonal_marginal(const InverseWishartApprox& w, Eigen::Index j) {
    const auto p = static_cast<double>(w.scale_matrix.rows());
    return {0.5 * (w.dof - p + 1.0), 0.5 * w.scale_matrix(j, j)};
}

inline double pdf(const Marginal& m, double x) {
    return std::visit(
        [x](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, NormalMarginal>) {
                return boost::math::pdf(boost::math::normal(d.mean, std::sqrt(d.var)), x);
            } else if constexpr (std::is_same_v<T, StudentTMarginal>) {
                const double s = std::sqrt(d.scale2);
                return boost::math::pdf(boost::math::students_t(d.dof), (x - d.loc) / s) / s;
            } else {
                if (x <= 0.0) return 0.0;
                return boost::math::pdf(boost::math::inverse_gamma_distribution<>(d.shape, d.scale), x);
            }
        },
        m);
}

// Evaluation range: mean +/- 10 sd, or the [1e-6, 1 - 1e-6] quantile range
// for inverse-gamma marginals.  A t marginal without a variance is cut at the
// 1e-3 tails; further out, 4001 uniform points no longer resolve the peak.
inline std::pair<double, double> grid_range(const Marginal& m) {
    static constexpr double tail = 1e-6;
    static constexpr double heavy_tail = 1e-3;
    return std::visit(
        [](const auto& d) -> std::pair<double, double> {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, NormalMarginal>) {
                const double sd = std::sqrt(d.var);
                return {d.mean - 10.0 * sd, d.mean + 10.0 * sd};
            } else if constexpr (std::is_same_v<T, StudentTMarginal>) {
                const double s = std::sqrt(d.scale2);
                if (d.dof > 2.0) {
                    const double sd = s * std::sqrt(d.dof / (d.dof - 2.0));
                    return {d.loc - 10.0 * sd, d.loc + 10.0 * sd};
                }
                const double q = boost::math::quantile(boost::math::students_t(d.dof), 1.0 - heavy_tail);
                return {d.loc - q * s, d.loc + q * s};
            } else {
                const boost::math::inverse_gamma_distribution<> ig(d.shape, d.scale);
                return {boost::math::quantile(ig, tail), boost::math::quantile(ig, 1.0 - tail)};
            }
        },
        m);
}

inline Vec grid_points(double lo, double hi, int count = 4001) {
    if (count < 2 || !(hi > lo)) throw domain_error("grid_points: need count >= 2 and hi > lo");
    return Vec::LinSpaced(count, lo, hi);
}

inline DensityGrid evaluate(const Marginal& m, const Vec& points) {
    DensityGrid g{points, Vec(points.size())};
    for (Eigen::Index i = 0; i < points.size(); ++i) g.values[i] = pdf(m, points[i]);
    return g;
}

inline DensityGrid density_grid(const Marginal& m, int count = 4001) {
    const auto [lo, hi] = grid_range(m);
    return evaluate(m, grid_points(lo, hi, count));
}

struct ToyGaussianSpec {
    Vec mu;
    Mat Sigma;
    int split = 1;  // size of the first block
};

struct ToyGaussianResult {
    GaussianApprox q1, q2;
    GaussianApprox mfvb_q1, mfvb_q2;
    int iterations = 0;
    Termination termination = Termination::max_iterations;
};

// Marginals of a partitioned Gaussian by MP and by mean-field VB.  MP starts
// from the mean-field covariances and updates block 1 then block 2.
inline ToyGaussianResult toy_gaussian_mp(const ToyGaussianSpec& spec, const FitOptions& opt = {}) {
    const auto d = spec.mu.size();
    const int d1 = spec.split;
    if (spec.Sigma.rows() != d || spec.Sigma.cols() != d) throw domain_error("toy Gaussian: Sigma must be d x d");
    if (d1 < 1 || d1 >= d) throw domain_error("toy Gaussian: split must lie in [1, d)");
    if (!is_spd(spec.Sigma)) throw domain_error("toy Gaussian: Sigma must be SPD");
    const Eigen::Index d2 = d - d1;
    const Mat S11 = spec.Sigma.topLeftCorner(d1, d1);
    const Mat S22 = spec.Sigma.bottomRightCorner(d2, d2);
    const Mat S12 = spec.Sigma.topRightCorner(d1, d2);
    const Mat K1 = S12 * spd_inverse(S22, "Sigma_22");               // Sigma_12 Sigma_22^{-1}
    const Mat K2 = S12.transpose() * spd_inverse(S11, "Sigma_11");   // Sigma_21 Sigma_11^{-1}

    ToyGaussianResult r;
    const Vec mu1 = spec.mu.head(d1);
    const Vec mu2 = spec.mu.tail(d2);
    r.mfvb_q1 = {mu1, symmetrize(S11 - K1 * S12.transpose())};
    r.mfvb_q2 = {mu2, symmetrize(S22 - K2 * S12)};

    struct State {
        Mat c1, c2;
        Vec params() const { return pack(vec(c1), vec(c2)); }
    };
    auto step = [&](const State& s) {
        State next;
        next.c1 = symmetrize(S11 + K1 * (s.c2 - S22) * K1.transpose());
        next.c2 = symmetrize(S22 + K2 * (next.c1 - S11) * K2.transpose());
        return next;
    };
    const auto fit = iterate_fixed_point(State{r.mfvb_q1.cov, r.mfvb_q2.cov}, step, opt);
    r.q1 = {mu1, fit.q.c1};
    r.q2 = {mu2, fit.q.c2};
    r.iterations = fit.iterations;
    r.termination = fit.termination;
    return r;
}

}  // namespace momprop
