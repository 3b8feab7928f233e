#pragma once

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moments.hpp"

namespace momprop {

enum class Termination { converged, max_iterations, optimizer_failed };

inline std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::converged: return "converged";
        case Termination::max_iterations: return "max_iterations";
        case Termination::optimizer_failed: return "optimizer_failed";
    }
    return "unknown";
}

struct FitOptions {
    double eps = 1e-6;
    int max_iter = 500;
    bool record_trace = false;

    void validate() const {
        if (!(eps > 0.0)) throw domain_error("eps must be > 0");
        if (max_iter < 1) throw domain_error("max_iter must be >= 1");
    }
};

template <class Q>
struct FitReport {
    Q q;
    int iterations = 0;
    Termination termination = Termination::max_iterations;
    std::vector<Vec> trace;  // packed q-parameters after each iteration
    bool wrong_basin = false;

    bool converged() const { return termination == Termination::converged; }
};

// Posterior summary of one parameter block, plus optional scalar or
// matrix-valued companions (sigma^2 for the linear model, Sigma for the MVN).
struct MomentSummary {
    std::string method;
    Vec mean;
    Mat cov;
    std::optional<double> scalar_mean;
    std::optional<double> scalar_var;
    std::optional<Mat> matrix_mean;
    std::optional<Vec> matrix_var_diag;
    std::optional<Vec> mean_se;  // Monte Carlo standard errors, sampling methods only
};

inline double max_abs_diff(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    return (a - b).cwiseAbs().maxCoeff();
}

// Runs q <- step(q) until the packed parameters move by less than eps in the
// sup norm.  The first sweep is never tested: the initial state may hold
// placeholders for blocks that the first sweep fills in.
template <class Q, class Step>
FitReport<Q> iterate_fixed_point(Q q, Step&& step, const FitOptions& opt) {
    opt.validate();
    FitReport<Q> report;
    Vec prev = q.params();
    for (int t = 1; t <= opt.max_iter; ++t) {
        q = step(q);
        Vec cur = q.params();
        if (opt.record_trace) report.trace.push_back(cur);
        report.iterations = t;
        const bool done = t >= 2 && max_abs_diff(cur, prev) < opt.eps;
        prev = std::move(cur);
        if (done) {
            report.termination = Termination::converged;
            break;
        }
    }
    report.q = std::move(q);
    return report;
}

template <class... Blocks>
Vec pack(const Blocks&... blocks) {
    Vec out((Eigen::Index{0} + ... + blocks.size()));
    Eigen::Index at = 0;
    ((out.segment(at, blocks.size()) = blocks, at += blocks.size()), ...);
    return out;
}

inline Vec vec(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

inline Vec scalar(double v) { return Vec::Constant(1, v); }

}  // namespace momprop
