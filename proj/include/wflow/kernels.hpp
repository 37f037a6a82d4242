#ifndef WFLOW_KERNELS_HPP
#define WFLOW_KERNELS_HPP

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>

#include "wflow/detail/linalg.hpp"
#include "wflow/error.hpp"

namespace wflow {

/// Even interaction kernels W(z) measured in the metric |z|_A^2 = z^T A z.
///
///   K2          W = 1/2 |z|^2
///   K4          W = 1/4 |z|^4 + 1/2 |z|^2
///   QuarticWell W = 1/4 |z|^4 - 1/2 |z|^2     (ring / ellipsoid attractor)
///
/// The anisotropic variants use A = Sigma^{-1}; the isotropic ones A = I.
enum class KernelKind { K2, K4, QuarticWell };

class InteractionKernel {
public:
    InteractionKernel(KernelKind kind, Eigen::MatrixXd metric) : kind_(kind), metric_(std::move(metric)) {
        detail::require_spd(metric_, "InteractionKernel metric");
        metric_ = detail::symmetrize(metric_);
    }

    static InteractionKernel isotropic(KernelKind kind, Eigen::Index d) {
        return InteractionKernel(kind, Eigen::MatrixXd::Identity(d, d));
    }

    /// Kernel with metric Sigma^{-1}.
    static InteractionKernel anisotropic(KernelKind kind, const Eigen::MatrixXd& sigma) {
        detail::require_spd(sigma, "InteractionKernel Sigma");
        return InteractionKernel(kind, detail::spd_inverse(sigma, "InteractionKernel Sigma"));
    }

    KernelKind kind() const noexcept { return kind_; }
    const Eigen::MatrixXd& metric() const noexcept { return metric_; }
    Eigen::Index dim() const noexcept { return metric_.rows(); }

    using Arg = Eigen::Ref<const Eigen::VectorXd>;

    double value(const Arg& z) const {
        const double q = z.dot(metric_ * z);
        switch (kind_) {
            case KernelKind::K2: return 0.5 * q;
            case KernelKind::K4: return 0.25 * q * q + 0.5 * q;
            case KernelKind::QuarticWell: return 0.25 * q * q - 0.5 * q;
        }
        return 0.0;
    }

    /// Twice dW/dq at q = |z|_A^2; the gradient is this scalar times A z.
    double radial_factor(double q) const noexcept {
        switch (kind_) {
            case KernelKind::K2: return 1.0;
            case KernelKind::K4: return q + 1.0;
            case KernelKind::QuarticWell: return q - 1.0;
        }
        return 0.0;
    }

    Eigen::VectorXd gradient(const Arg& z) const {
        const Eigen::VectorXd az = metric_ * z;
        return radial_factor(z.dot(az)) * az;
    }

    /// K2: A.  K4 / quartic well: 2 (Az)(Az)^T + radial_factor(q) A.
    Eigen::MatrixXd hessian(const Arg& z) const {
        if (kind_ == KernelKind::K2) return metric_;
        const Eigen::VectorXd az = metric_ * z;
        return 2.0 * az * az.transpose() + radial_factor(z.dot(az)) * metric_;
    }

    bool convex() const noexcept { return kind_ != KernelKind::QuarticWell; }

private:
    KernelKind kind_;
    Eigen::MatrixXd metric_;
};

inline std::optional<KernelKind> parse_kernel_kind(std::string_view name) {
    if (name == "K2") return KernelKind::K2;
    if (name == "K4") return KernelKind::K4;
    if (name == "quartic-well") return KernelKind::QuarticWell;
    return std::nullopt;
}

inline std::string_view kernel_kind_name(KernelKind k) {
    switch (k) {
        case KernelKind::K2: return "K2";
        case KernelKind::K4: return "K4";
        case KernelKind::QuarticWell: return "quartic-well";
    }
    return "?";
}

}  // namespace wflow

#endif  // WFLOW_KERNELS_HPP
