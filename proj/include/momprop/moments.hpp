#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "errors.hpp"

namespace momprop {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline bool is_spd(const Mat& m) {
    if (m.rows() != m.cols() || m.rows() == 0) return false;
    Eigen::LLT<Mat> llt(m);
    return llt.info() == Eigen::Success;
}

// Inverse of an SPD matrix through its Cholesky factor.
inline Mat spd_inverse(const Mat& m, const char* what = "matrix") {
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success)
        throw linalg_error(std::string(what) + " is not positive definite");
    return symmetrize(llt.solve(Mat::Identity(m.rows(), m.cols())));
}

struct GaussianApprox {
    Vec mean;
    Mat cov;
};

struct StudentTApprox {
    Vec loc;
    Mat scale;
    double dof = 0.0;

    Mat covariance() const {
        if (!(dof > 2.0)) throw undefined_moment("t covariance requires dof > 2");
        return dof / (dof - 2.0) * scale;
    }

    // Summaries report a missing covariance as NaN rather than throwing.
    Mat covariance_or_nan() const {
        return dof > 2.0 ? covariance() : Mat::Constant(scale.rows(), scale.cols(), std::numeric_limits<double>::quiet_NaN());
    }
};

struct InverseGammaApprox {
    double shape = 0.0;
    double scale = 0.0;
};

struct InverseWishartApprox {
    Mat scale_matrix;
    double dof = 0.0;
};

struct MeanVar {
    double mean;
    double variance;
};

struct QuadformMoments {
    double mean;
    double variance;
    double second_moment;
};

inline double ig_mean(const InverseGammaApprox& a) {
    if (!(a.shape > 1.0)) throw undefined_moment("inverse-gamma mean requires shape > 1");
    return a.scale / (a.shape - 1.0);
}

inline MeanVar ig_mean_var(const InverseGammaApprox& a) {
    if (!(a.shape > 2.0)) throw undefined_moment("inverse-gamma variance requires shape > 2");
    const double m = ig_mean(a);
    return {m, m * m / (a.shape - 2.0)};
}

inline InverseGammaApprox ig_moment_match(double mean, double variance) {
    if (!(mean > 0.0) || !(variance > 0.0) || !std::isfinite(mean) || !std::isfinite(variance))
        throw domain_error("ig_moment_match: mean and variance must be positive and finite");
    const double shape = mean * mean / variance + 2.0;
    return {shape, mean * (shape - 1.0)};
}

inline Mat iw_mean(const InverseWishartApprox& w) {
    const auto p = static_cast<double>(w.scale_matrix.rows());
    if (!(w.dof > p + 1.0)) throw undefined_moment("inverse-Wishart mean requires dof > p + 1");
    return w.scale_matrix / (w.dof - p - 1.0);
}

// Variances of the diagonal elements of an inverse-Wishart matrix.
inline Vec iw_elementwise_var_diag(const InverseWishartApprox& w) {
    const auto p = static_cast<double>(w.scale_matrix.rows());
    if (!(w.dof > p + 3.0)) throw undefined_moment("inverse-Wishart element variances require dof > p + 3");
    const double c = w.dof - p - 1.0;
    return 2.0 * w.scale_matrix.diagonal().array().square() / (c * c * (w.dof - p - 3.0));
}

inline InverseWishartApprox iw_moment_match(const Mat& mean, double trace_elementwise_var) {
    if (!(trace_elementwise_var > 0.0) || !std::isfinite(trace_elementwise_var))
        throw domain_error("iw_moment_match: trace of element variances must be positive and finite");
    if (!is_spd(mean)) throw domain_error("iw_moment_match: mean matrix must be SPD");
    const auto p = static_cast<double>(mean.rows());
    const double dof = 2.0 * mean.diagonal().squaredNorm() / trace_elementwise_var + p + 3.0;
    return {symmetrize((dof - p - 1.0) * mean), dof};
}

namespace detail {

inline void check_quadform_dims(const Vec& mu, const Mat& Sigma, const Mat& A, const Vec* shift) {
    const auto p = mu.size();
    if (Sigma.rows() != p || Sigma.cols() != p || A.rows() != p || A.cols() != p ||
        (shift != nullptr && shift->size() != p))
        throw domain_error("quadratic form: dimension mismatch");
}

}  // namespace detail

// Moments of (x-b)'A(x-b) for x ~ N(mu, Sigma).
inline QuadformMoments gauss_quadform_moments(const Vec& mu, const Mat& Sigma, const Mat& A, const Vec& b_shift) {
    detail::check_quadform_dims(mu, Sigma, A, &b_shift);
    const Vec m = mu - b_shift;
    const Mat AS = A * Sigma;
    const double quad = m.dot(A * m);
    const double tr = AS.trace();
    const double mean = quad + tr;
    const double variance = 2.0 * (AS * AS).trace() + 4.0 * m.dot(AS * A * m);
    return {mean, variance, variance + mean * mean};
}

// h-th raw moment of x'Ax, x ~ N(mu, Sigma), from its cumulants
//   kappa_s = 2^{s-1} (s-1)! [tr((A Sigma)^s) + s mu'(A Sigma)^{s-1} A mu].
inline double gauss_quadform_cumulant_moment(int h, const Vec& mu, const Mat& Sigma, const Mat& A) {
    if (h < 1) throw domain_error("gauss_quadform_cumulant_moment: h must be >= 1");
    detail::check_quadform_dims(mu, Sigma, A, nullptr);
    const Mat AS = A * Sigma;
    const Vec Amu = A * mu;
    std::vector<double> kappa(static_cast<std::size_t>(h) + 1);
    Mat power = Mat::Identity(mu.size(), mu.size());  // (A Sigma)^{s-1}
    double scale = 1.0;                                // 2^{s-1} (s-1)!
    for (int s = 1; s <= h; ++s) {
        const double drift = mu.dot(power * Amu);
        power = power * AS;
        kappa[s] = scale * (power.trace() + s * drift);
        scale *= 2.0 * s;
    }
    std::vector<double> raw(static_cast<std::size_t>(h) + 1);
    raw[0] = 1.0;
    for (int k = 1; k <= h; ++k) {
        double acc = 0.0;
        double binom = 1.0;  // C(k-1, i)
        for (int i = 0; i < k; ++i) {
            acc += binom * kappa[k - i] * raw[i];
            binom = binom * (k - 1 - i) / (i + 1);
        }
        raw[k] = acc;
    }
    return raw[h];
}

// Moments of (x-b)'A(x-b) for x ~ t(mu, a_mult * Sigma, dof).
inline QuadformMoments t_quadform_moments(const Vec& loc, const Mat& scale, double dof, double a_mult,
                                          const Mat& A, const Vec& b_shift) {
    detail::check_quadform_dims(loc, scale, A, &b_shift);
    if (!(dof > 4.0)) throw undefined_moment("t quadratic form variance requires dof > 4");
    const Vec m = loc - b_shift;
    const Mat AS = A * scale;
    const double quad = m.dot(A * m);
    const double tr = AS.trace();
    const double tr2 = (AS * AS).trace();
    const double cross = m.dot(AS * A * m);
    const double r = a_mult * dof / (dof - 2.0);
    const double rr = a_mult * a_mult * dof * dof / ((dof - 2.0) * (dof - 4.0));

    const double mean = quad + r * tr;
    const double second = rr * (2.0 * tr2 + tr * tr) + 4.0 * r * cross + quad * quad + 2.0 * r * quad * tr;
    const double variance = 2.0 * rr * tr2 + 2.0 * rr * tr * tr / (dof - 2.0) + 4.0 * r * cross;
    return {mean, variance, second};
}

}  // namespace momprop
