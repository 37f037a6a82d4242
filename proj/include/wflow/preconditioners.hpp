#ifndef WFLOW_PRECONDITIONERS_HPP
#define WFLOW_PRECONDITIONERS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>

#include "wflow/detail/linalg.hpp"
#include "wflow/error.hpp"
#include "wflow/measures.hpp"

namespace wflow {

/// Pointwise gradient map grad h* for the preconditioned scheme
/// x <- x - tau grad h*(grad_W F(mu)(x)).
class Preconditioner {
public:
    virtual ~Preconditioner() = default;

    virtual std::string name() const = 0;
    virtual VelocityField apply(const ParticleCloud& cloud, const VelocityField& grad) const = 0;

    /// (1/n) sum_i h*(g_i).
    virtual double magnitude(const ParticleCloud& cloud, const VelocityField& grad) const = 0;
};

using PreconditionerPtr = std::shared_ptr<const Preconditioner>;

/// h*(g) = |g|^2 / 2.
class IdentityPreconditioner final : public Preconditioner {
public:
    std::string name() const override { return "identity"; }

    VelocityField apply(const ParticleCloud& cloud, const VelocityField& grad) const override {
        require_shape(cloud, grad, "IdentityPreconditioner::apply");
        return grad;
    }

    double magnitude(const ParticleCloud& cloud, const VelocityField& grad) const override {
        require_shape(cloud, grad, "IdentityPreconditioner::magnitude");
        return 0.5 * grad.l2_squared();
    }
};

/// h*(g) = (|g|^a + 1)^{1/a} - 1, a > 1, with
/// grad h*(g) = |g|^{a-2} (|g|^a + 1)^{1/a - 1} g and grad h*(0) = 0.
class PolynomialPreconditioner final : public Preconditioner {
public:
    explicit PolynomialPreconditioner(double a) : a_(a) {
        if (!(a > 1.0) || !std::isfinite(a)) throw InvalidArgument("PolynomialPreconditioner: exponent must exceed 1");
    }

    double exponent() const noexcept { return a_; }
    std::string name() const override { return "polynomial"; }

    VelocityField apply(const ParticleCloud& cloud, const VelocityField& grad) const override {
        require_shape(cloud, grad, "PolynomialPreconditioner::apply");
        Matrix out(grad.rows(), grad.cols());
        for (Index i = 0; i < grad.rows(); ++i) {
            const double r = grad.row(i).norm();
            out.row(i) = (r > 0.0 ? scale(r) : 0.0) * grad.row(i);
        }
        return VelocityField(std::move(out));
    }

    double magnitude(const ParticleCloud& cloud, const VelocityField& grad) const override {
        require_shape(cloud, grad, "PolynomialPreconditioner::magnitude");
        double acc = 0.0;
        for (Index i = 0; i < grad.rows(); ++i) acc += h_star(grad.row(i).norm());
        return acc / static_cast<double>(grad.rows());
    }

    /// h* as a function of |g|; expm1/log1p keep small arguments accurate.
    double h_star(double r) const {
        if (r == 0.0) return 0.0;
        return std::expm1(std::log1p(std::pow(r, a_)) / a_);
    }

private:
    double scale(double r) const { return std::pow(r, a_ - 2.0) * std::pow(std::pow(r, a_) + 1.0, 1.0 / a_ - 1.0); }

    double a_;
};

/// h*(g) = g^T Lambda g / 2: grad h*(g) = Lambda g.
class MatrixPreconditioner final : public Preconditioner {
public:
    explicit MatrixPreconditioner(Eigen::MatrixXd lambda) : lambda_(std::move(lambda)) {
        detail::require_spd(lambda_, "MatrixPreconditioner");
        lambda_ = detail::symmetrize(lambda_);
    }

    const Eigen::MatrixXd& matrix() const noexcept { return lambda_; }
    std::string name() const override { return "matrix"; }

    VelocityField apply(const ParticleCloud& cloud, const VelocityField& grad) const override {
        require_shape(cloud, grad, "MatrixPreconditioner::apply");
        if (grad.cols() != lambda_.rows()) throw ShapeError("MatrixPreconditioner: dimension mismatch");
        return VelocityField(grad.values() * lambda_);
    }

    double magnitude(const ParticleCloud& cloud, const VelocityField& grad) const override {
        require_shape(cloud, grad, "MatrixPreconditioner::magnitude");
        if (grad.cols() != lambda_.rows()) throw ShapeError("MatrixPreconditioner: dimension mismatch");
        return 0.5 * (grad.values() * lambda_).cwiseProduct(grad.values()).sum() / static_cast<double>(grad.rows());
    }

private:
    Eigen::MatrixXd lambda_;
};

/// State-dependent h*_mu(g) = g^T C(mu) g / 2 with C the biased empirical
/// covariance of the current cloud (Kalman-Wasserstein direction).
class CovariancePreconditioner final : public Preconditioner {
public:
    std::string name() const override { return "covariance"; }

    VelocityField apply(const ParticleCloud& cloud, const VelocityField& grad) const override {
        require_shape(cloud, grad, "CovariancePreconditioner::apply");
        return VelocityField(grad.values() * covariance(cloud));
    }

    double magnitude(const ParticleCloud& cloud, const VelocityField& grad) const override {
        require_shape(cloud, grad, "CovariancePreconditioner::magnitude");
        const Eigen::MatrixXd c = covariance(cloud);
        return 0.5 * (grad.values() * c).cwiseProduct(grad.values()).sum() / static_cast<double>(grad.rows());
    }

private:
    static Eigen::MatrixXd covariance(const ParticleCloud& cloud) {
        if (cloud.size() < 2) throw InvalidArgument("CovariancePreconditioner: need at least two particles");
        return cloud.covariance();
    }
};

}  // namespace wflow

#endif  // WFLOW_PRECONDITIONERS_HPP
