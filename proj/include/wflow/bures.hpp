#ifndef WFLOW_BURES_HPP
#define WFLOW_BURES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>

#include "wflow/detail/linalg.hpp"
#include "wflow/error.hpp"
#include "wflow/measures.hpp"
#include "wflow/schemes.hpp"

// Closed-form Gaussian iterations for F(mu) = int V dmu + H(mu) with
// V(x) = 1/2 (x - m)^T Sigma^{-1} (x - m), whose minimizer is N(m, Sigma).
namespace wflow::bures {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Scheme { NEM, HEAT, FB, PFB, KLM };

inline std::string_view scheme_name(Scheme s) {
    switch (s) {
        case Scheme::NEM: return "NEM";
        case Scheme::HEAT: return "HEAT";
        case Scheme::FB: return "FB";
        case Scheme::PFB: return "PFB";
        case Scheme::KLM: return "KLM";
    }
    return "?";
}

struct GaussianFlowConfig {
    GaussianState target;
    Mat lambda;  // Bregman / preconditioner matrix; PFB replaces it by the target covariance
    double tau = 0.01;
    double commute_tol = 1e-8;
};

namespace detail {

using wflow::detail::require_spd;
using wflow::detail::symmetrize;

/// |[A, B]|_F / (|A|_F |B|_F)
inline double relative_commutator(const Mat& a, const Mat& b) {
    const double denom = a.norm() * b.norm();
    if (denom == 0.0) return 0.0;
    return (a * b - b * a).norm() / denom;
}

inline void require_commuting(const Mat& a, const Mat& b, double tol, const char* what) {
    const double c = relative_commutator(a, b);
    if (c > tol)
        throw InvalidArgument(std::string(what) + ": matrices do not commute (relative commutator " +
                              std::to_string(c) + ")");
}

inline Mat checked_spd(Mat m, const char* what) {
    m = symmetrize(m);
    require_spd(m, what);
    return m;
}

/// Square root of a symmetric PSD matrix; negative rounding noise is clamped to 0.
inline Mat psd_sqrt(const Mat& m) { return wflow::detail::sym_sqrt(m, 0.0); }

inline void check_tau(double tau, const char* who) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw InvalidArgument(std::string(who) + ": tau must be nonnegative");
}

}  // namespace detail

/// Negative-entropy mirror step on zero-mean Gaussians:
/// Sigma_{k+1}^{-1} = A^T Sigma_k A with A = (1 - tau) Sigma_k^{-1} + tau Sigma^{-1}.
inline Mat nem_step(const Mat& cov_k, const Mat& target_cov, double tau) {
    detail::check_tau(tau, "nem_step");
    detail::require_spd(cov_k, "nem_step current covariance");
    detail::require_spd(target_cov, "nem_step target covariance");
    if (cov_k.rows() != target_cov.rows()) throw ShapeError("nem_step: dimension mismatch");
    const Mat inv_k = wflow::detail::spd_inverse(cov_k, "nem_step current covariance");
    const Mat inv_t = wflow::detail::spd_inverse(target_cov, "nem_step target covariance");
    const Mat a = (1.0 - tau) * inv_k + tau * inv_t;
    const Mat precision = detail::checked_spd(a.transpose() * cov_k * a, "nem_step precision");
    return detail::checked_spd(wflow::detail::spd_inverse(precision, "nem_step precision"), "nem_step output");
}

/// NEM on Gaussian states; both means must be zero.
inline GaussianState nem_step(const GaussianState& state, const GaussianState& target, double tau) {
    if (state.mean().squaredNorm() != 0.0 || target.mean().squaredNorm() != 0.0)
        throw InvalidArgument("nem_step: the closed form assumes zero means");
    return GaussianState(state.mean(), nem_step(state.cov(), target.cov(), tau));
}

/// Entropy-only mirror step: Sigma_{k+1} = Sigma_k / (1 - tau)^2, tau < 1.
inline Mat heat_step(const Mat& cov_k, double tau) {
    detail::check_tau(tau, "heat_step");
    if (!(tau < 1.0)) throw InvalidArgument("heat_step: tau must be < 1");
    detail::require_spd(cov_k, "heat_step covariance");
    return cov_k / ((1.0 - tau) * (1.0 - tau));
}

/// Negative entropy int log rho dmu of N(m, Sigma): -(d/2) log(2 pi e) - (1/2) log det Sigma.
inline double gaussian_negentropy(const Mat& cov) {
    const Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("gaussian_negentropy: covariance not SPD");
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double d = static_cast<double>(cov.rows());
    return -0.5 * d * std::log(2.0 * std::numbers::pi * std::numbers::e) - 0.5 * logdet;
}

/// Explicit step on the potential term: m <- (I - tau Lambda Sigma^{-1}) m_k + tau Lambda Sigma^{-1} m.
inline Vec forward_mean(const Vec& mean_k, const Mat& lambda, const GaussianState& target, double tau) {
    const Mat inv_t = wflow::detail::spd_inverse(target.cov(), "target covariance");
    const Mat k = tau * lambda * inv_t;
    return mean_k - k * mean_k + k * target.mean();
}

namespace detail {

inline void check_flow_inputs(const GaussianState& state, const Mat& lambda, const GaussianFlowConfig& cfg,
                              const char* who) {
    check_tau(cfg.tau, who);
    if (state.dim() != cfg.target.dim() || lambda.rows() != state.dim())
        throw ShapeError(std::string(who) + ": dimension mismatch");
    require_spd(lambda, (std::string(who) + " Lambda").c_str());
    require_commuting(lambda, cfg.target.cov(), cfg.commute_tol, who);
    require_commuting(state.cov(), cfg.target.cov(), cfg.commute_tol, who);
    require_commuting(state.cov(), lambda, cfg.commute_tol, who);
}

inline GaussianState forward_backward(const GaussianState& state, const Mat& lambda, const GaussianFlowConfig& cfg,
                                      const char* who) {
    check_flow_inputs(state, lambda, cfg, who);
    const double tau = cfg.tau;
    const Index d = state.dim();
    const Mat inv_t = wflow::detail::spd_inverse(cfg.target.cov(), "target covariance");
    const Mat m = Mat::Identity(d, d) - tau * lambda * inv_t;
    const Vec mean_half = forward_mean(state.mean(), lambda, cfg.target, tau);
    const Mat cov_half = checked_spd(m.transpose() * state.cov() * m, who);
    const Mat root = psd_sqrt(symmetrize(cov_half * (4.0 * tau * lambda + cov_half)));
    const Mat cov_next = checked_spd(0.5 * (cov_half + 2.0 * tau * lambda + root), who);
    return GaussianState(mean_half, cov_next);
}

}  // namespace detail

/// Forward step on the potential in the geometry of V(x) = x^T Lambda^{-1} x / 2,
/// then the Bregman-proximal step on the entropy, solved in closed form under
/// commutation: Sigma_{k+1} = (S + 2 tau Lambda + (S (4 tau Lambda + S))^{1/2}) / 2.
inline GaussianState fb_step(const GaussianState& state, const GaussianFlowConfig& cfg) {
    return detail::forward_backward(state, cfg.lambda, cfg, "fb_step");
}

/// FB with Lambda = Sigma.
inline GaussianState pfb_step(const GaussianState& state, const GaussianFlowConfig& cfg) {
    return detail::forward_backward(state, cfg.target.cov(), cfg, "pfb_step");
}

namespace detail {

/// Orthonormal basis diagonalizing pairwise-commuting symmetric matrices,
/// taken from a generic combination so repeated eigenvalues of one factor do
/// not leave the others undiagonalized.
inline Mat joint_eigenbasis(const Mat& a, const Mat& b, const Mat& c) {
    const Mat mix = a / a.norm() + 0.6180339887498949 * b / b.norm() + 0.4142135623730951 * c / c.norm();
    return Eigen::SelfAdjointEigenSolver<Mat>(symmetrize(mix)).eigenvectors();
}

}  // namespace detail

/// KL-divergence mirror step (potential Psi + H with Psi = int x^T Lambda^{-1} x / 2):
/// Sigma_{k+1} = (C + (C^2 - 4 Lambda^2)^{1/2}) / 2 with
/// C = (I - tau Lambda Sigma^{-1})^2 Sigma_k + 2 tau Lambda + 2 tau (1 - tau) Lambda^2 Sigma^{-1}
///     + (1 - tau)^2 Lambda^2 Sigma_k^{-1}.
/// Solved per eigenvalue in the shared eigenbasis. With m = 1 - tau r, r = lambda / sigma,
///   c - 2 lambda = (|m| sqrt(s) - (1 - tau) lambda / sqrt(s))^2 + 4 lambda (1 - tau) max(0, tau r - 1),
/// for tau <= 1, so the discriminant (c - 2 lambda)(c + 2 lambda) is formed without
/// cancellation (a double root at the fixed point otherwise loses half the digits).
/// Throws KlmDivergence when the discriminant is negative or not finite.
inline GaussianState klm_step(const GaussianState& state, const GaussianFlowConfig& cfg) {
    const Mat& lambda = cfg.lambda;
    detail::check_flow_inputs(state, lambda, cfg, "klm_step");
    const double tau = cfg.tau;
    const Mat u = detail::joint_eigenbasis(cfg.target.cov(), lambda, state.cov());
    const Index d = state.dim();
    Vec next(d);
    for (Index i = 0; i < d; ++i) {
        const auto ui = u.col(i);
        const double sig = ui.dot(cfg.target.cov() * ui), lam = ui.dot(lambda * ui), s = ui.dot(state.cov() * ui);
        const double r = lam / sig, m = 1.0 - tau * r;
        const double c = m * m * s + 2.0 * tau * lam + 2.0 * tau * (1.0 - tau) * lam * r +
                         (1.0 - tau) * (1.0 - tau) * lam * lam / s;
        double disc = (c - 2.0 * lam) * (c + 2.0 * lam);
        if (tau <= 1.0) {
            const double root_s = std::sqrt(s);
            const double sq = std::abs(m) * root_s - (1.0 - tau) * lam / root_s;
            disc = (sq * sq + 4.0 * lam * (1.0 - tau) * std::max(0.0, tau * r - 1.0)) * (c + 2.0 * lam);
        }
        if (!(disc >= 0.0) || !std::isfinite(disc))
            throw KlmDivergence("klm_step: invalid discriminant " + std::to_string(disc));
        next(i) = 0.5 * (c + std::sqrt(disc));
    }
    const Mat cov_next = detail::checked_spd(u * next.asDiagonal() * u.transpose(), "klm_step output");
    return GaussianState(forward_mean(state.mean(), lambda, cfg.target, tau), cov_next);
}

/// Relative-smoothness premise (1 - tau) S_{k+1} S_k^{-1} + tau S_{k+1} S^{-1} >= 0,
/// checked on the symmetric part. Diagnostic only.
inline bool klm_smoothness_condition(const Mat& cov_k, const Mat& cov_next, const Mat& target_cov, double tau) {
    const Mat inv_k = wflow::detail::spd_inverse(cov_k, "current covariance");
    const Mat inv_t = wflow::detail::spd_inverse(target_cov, "target covariance");
    const Mat m = detail::symmetrize((1.0 - tau) * cov_next * inv_k + tau * cov_next * inv_t);
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -1e-12;
}

namespace detail {

/// x - log(1 + x), with a series near 0 where the subtraction cancels.
inline double x_minus_log1p(double x) {
    if (std::abs(x) < 1e-3) {
        double term = x, acc = 0.0;
        for (int j = 2; j <= 8; ++j) {
            term *= -x;
            acc += term / j;
        }
        return -acc;
    }
    return x - std::log1p(x);
}

}  // namespace detail

/// KL(a || b) = 1/2 (tr(Sb^{-1} Sa) - d + (mb - ma)^T Sb^{-1} (mb - ma) + log det Sb - log det Sa),
/// evaluated as 1/2 sum_i (x_i - log(1 + x_i)) + 1/2 quad with x_i the eigenvalues of
/// L^{-1} (Sa - Sb) L^{-T}, Sb = L L^T. Stays accurate when a is close to b.
inline double kl_gaussian(const GaussianState& a, const GaussianState& b) {
    if (a.dim() != b.dim()) throw ShapeError("kl_gaussian: dimension mismatch");
    const Eigen::LLT<Mat> lb(b.cov());
    if (lb.info() != Eigen::Success) throw NotPositiveDefinite("kl_gaussian: covariance not SPD");
    const auto l = lb.matrixL();
    const Mat half = l.solve(Mat(a.cov() - b.cov()));
    const Mat e = detail::symmetrize(l.solve(Mat(half.transpose())));
    const Vec x = Eigen::SelfAdjointEigenSolver<Mat>(e, Eigen::EigenvaluesOnly).eigenvalues();
    if (!(x.minCoeff() > -1.0)) throw NotPositiveDefinite("kl_gaussian: covariance not SPD");
    double acc = 0.0;
    for (Index i = 0; i < x.size(); ++i) acc += detail::x_minus_log1p(x(i));
    const Vec dm = b.mean() - a.mean();
    return 0.5 * (acc + dm.dot(lb.solve(dm)));
}

/// One step of the named scheme.
inline GaussianState step(Scheme s, const GaussianState& state, const GaussianFlowConfig& cfg) {
    switch (s) {
        case Scheme::NEM: return nem_step(state, cfg.target, cfg.tau);
        case Scheme::HEAT: return GaussianState(state.mean(), heat_step(state.cov(), cfg.tau));
        case Scheme::FB: return fb_step(state, cfg);
        case Scheme::PFB: return pfb_step(state, cfg);
        case Scheme::KLM: return klm_step(state, cfg);
    }
    throw InvalidArgument("bures::step: unknown scheme");
}

inline Scheme parse_scheme(std::string_view name) {
    for (Scheme s : {Scheme::NEM, Scheme::HEAT, Scheme::FB, Scheme::PFB, Scheme::KLM})
        if (scheme_name(s) == name) return s;
    throw InvalidArgument("unknown Gaussian scheme '" + std::string(name) + "'");
}

/// W_2^2 between Gaussians: |m_a - m_b|^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}).
inline double bures_w2_squared(const GaussianState& a, const GaussianState& b) {
    if (a.dim() != b.dim()) throw ShapeError("bures_w2_squared: dimension mismatch");
    const Mat ra = detail::psd_sqrt(a.cov());
    const Mat cross = detail::psd_sqrt(detail::symmetrize(ra * b.cov() * ra));
    return (a.mean() - b.mean()).squaredNorm() + std::max(0.0, (a.cov() + b.cov() - 2.0 * cross).trace());
}

struct FlowResult {
    GaussianState state;
    Trace trace;
};

/// Iterates a scheme for max_iter steps. The objective column is KL to the
/// target, step_div the squared Bures-Wasserstein length of each step, and
/// grad_magnitude is left empty.
inline FlowResult run_flow(Scheme s, const GaussianState& init, const GaussianFlowConfig& cfg, int max_iter) {
    if (max_iter < 1) throw InvalidArgument("run_flow: max_iter must be at least 1");
    using clock = std::chrono::steady_clock;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Trace trace;
    GaussianState current = init;
    trace.records.push_back({0, kl_gaussian(current, cfg.target), nan, 0.0, 0.0, false});
    for (int k = 1; k <= max_iter; ++k) {
        const auto t0 = clock::now();
        try {
            GaussianState next = step(s, current, cfg);
            const double div = bures_w2_squared(next, current);
            const double kl = kl_gaussian(next, cfg.target);
            const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            trace.records.push_back({k, kl, nan, div, ms, false});
            current = std::move(next);
        } catch (const Error& e) {
            trace.termination = Termination::StepError;
            trace.message = e.what();
            break;
        }
    }
    return {current, std::move(trace)};
}

}  // namespace wflow::bures

#endif  // WFLOW_BURES_HPP
