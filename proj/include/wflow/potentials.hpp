#ifndef WFLOW_POTENTIALS_HPP
#define WFLOW_POTENTIALS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "wflow/detail/linalg.hpp"
#include "wflow/error.hpp"
#include "wflow/measures.hpp"

namespace wflow {

/// A function V : R^d -> R evaluated particle by particle. Potential energies
/// int V dmu and potential-type Bregman maps are both built on it.
class PointPotential {
public:
    using Point = Eigen::Ref<const Eigen::VectorXd>;

    virtual ~PointPotential() = default;

    virtual Index dim() const = 0;
    virtual double value(const Point& x) const = 0;
    virtual Eigen::VectorXd gradient(const Point& x) const = 0;

    /// Whether grad V* (the inverse mirror map) is available in closed form.
    virtual bool has_conjugate_gradient() const { return false; }
    virtual Eigen::VectorXd conjugate_gradient(const Point&) const {
        throw InvalidArgument("PointPotential: no closed-form inverse mirror map");
    }

    /// Throws DomainError when x is outside dom V.
    virtual void check_domain(const Point&) const {}

    /// d_V(a, b) = V(a) - V(b) - <grad V(b), a - b>.
    double bregman(const Point& a, const Point& b) const {
        return value(a) - value(b) - gradient(b).dot(a - b);
    }
};

/// V(x) = 1/2 (x - m)^T P (x - m) with P symmetric positive definite.
class QuadraticPotential final : public PointPotential {
public:
    explicit QuadraticPotential(Eigen::MatrixXd precision)
        : QuadraticPotential(precision, Eigen::VectorXd::Zero(precision.rows())) {}

    QuadraticPotential(Eigen::MatrixXd precision, Eigen::VectorXd shift)
        : precision_(std::move(precision)), shift_(std::move(shift)) {
        detail::require_spd(precision_, "QuadraticPotential precision");
        precision_ = detail::symmetrize(precision_);
        if (shift_.size() != precision_.rows()) throw ShapeError("QuadraticPotential: shift has wrong size");
        covariance_ = detail::spd_inverse(precision_, "QuadraticPotential precision");
    }

    /// The potential whose Gibbs measure is N(m, Sigma): precision Sigma^{-1}.
    static std::shared_ptr<QuadraticPotential> from_covariance(const Eigen::MatrixXd& sigma) {
        detail::require_spd(sigma, "QuadraticPotential covariance");
        return std::make_shared<QuadraticPotential>(detail::spd_inverse(sigma, "QuadraticPotential covariance"));
    }

    static std::shared_ptr<QuadraticPotential> euclidean(Index d) {
        return std::make_shared<QuadraticPotential>(Eigen::MatrixXd::Identity(d, d));
    }

    Index dim() const override { return precision_.rows(); }
    const Eigen::MatrixXd& precision() const noexcept { return precision_; }
    const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
    const Eigen::VectorXd& shift() const noexcept { return shift_; }

    double value(const Point& x) const override {
        const Eigen::VectorXd r = x - shift_;
        return 0.5 * r.dot(precision_ * r);
    }
    Eigen::VectorXd gradient(const Point& x) const override { return precision_ * (x - shift_); }

    bool has_conjugate_gradient() const override { return true; }
    Eigen::VectorXd conjugate_gradient(const Point& y) const override { return covariance_ * y + shift_; }

private:
    Eigen::MatrixXd precision_;
    Eigen::VectorXd shift_;
    Eigen::MatrixXd covariance_;
};

namespace detail {

inline void check_open_simplex(const PointPotential::Point& x, const char* who) {
    double total = 0.0;
    for (Index c = 0; c < x.size(); ++c) {
        if (!(x(c) > 0.0)) throw DomainError(std::string(who) + ": coordinate outside the open simplex");
        total += x(c);
    }
    if (!(total < 1.0)) throw DomainError(std::string(who) + ": coordinates sum to >= 1");
}

}  // namespace detail

/// psi(x) = sum_c x_c log x_c + s log s with slack s = 1 - sum_c x_c, on the
/// open simplex stored by its first d coordinates.
class SimplexEntropy final : public PointPotential {
public:
    explicit SimplexEntropy(Index d) : dim_(d) {
        if (d < 1) throw InvalidArgument("SimplexEntropy: dimension must be positive");
    }

    Index dim() const override { return dim_; }

    void check_domain(const Point& x) const override { detail::check_open_simplex(x, "SimplexEntropy"); }

    double value(const Point& x) const override {
        check_domain(x);
        const double slack = 1.0 - x.sum();
        double v = slack * std::log(slack);
        for (Index c = 0; c < x.size(); ++c) v += x(c) * std::log(x(c));
        return v;
    }

    /// (log x_c - log(1 - sum x))_c
    Eigen::VectorXd gradient(const Point& x) const override {
        check_domain(x);
        const double log_slack = std::log(1.0 - x.sum());
        return x.array().log() - log_slack;
    }

    bool has_conjugate_gradient() const override { return true; }

    /// (e^{y_c} / (1 + sum_j e^{y_j}))_c, evaluated with a log-sum-exp shift.
    Eigen::VectorXd conjugate_gradient(const Point& y) const override {
        const double mx = std::max(0.0, y.maxCoeff());
        double denom = std::exp(-mx);
        for (Index c = 0; c < y.size(); ++c) denom += std::exp(y(c) - mx);
        return (y.array() - mx).exp() / denom;
    }

    /// Slack coordinate 1 - sum_c x_c of the image of y, computed without cancellation.
    static double conjugate_slack(const Point& y) {
        const double mx = std::max(0.0, y.maxCoeff());
        double denom = std::exp(-mx);
        for (Index c = 0; c < y.size(); ++c) denom += std::exp(y(c) - mx);
        return std::exp(-mx) / denom;
    }

private:
    Index dim_;
};

/// Dirichlet negative log-density (up to a constant):
/// V(x) = -sum_{c<d} a_c log x_c - a_d log(1 - sum_c x_c), with d + 1 concentrations.
class DirichletPotential final : public PointPotential {
public:
    explicit DirichletPotential(Eigen::VectorXd concentration) : a_(std::move(concentration)) {
        if (a_.size() < 2) throw InvalidArgument("DirichletPotential: need at least two concentrations");
        if (!(a_.minCoeff() > 0.0)) throw InvalidArgument("DirichletPotential: concentrations must be positive");
    }

    Index dim() const override { return a_.size() - 1; }
    const Eigen::VectorXd& concentration() const noexcept { return a_; }

    void check_domain(const Point& x) const override { detail::check_open_simplex(x, "DirichletPotential"); }

    double value(const Point& x) const override {
        check_domain(x);
        const Index d = dim();
        double v = -a_(d) * std::log(1.0 - x.sum());
        for (Index c = 0; c < d; ++c) v -= a_(c) * std::log(x(c));
        return v;
    }

    Eigen::VectorXd gradient(const Point& x) const override {
        check_domain(x);
        const Index d = dim();
        const double tail = a_(d) / (1.0 - x.sum());
        Eigen::VectorXd g(d);
        for (Index c = 0; c < d; ++c) g(c) = -a_(c) / x(c) + tail;
        return g;
    }

private:
    Eigen::VectorXd a_;
};

}  // namespace wflow

#endif  // WFLOW_POTENTIALS_HPP
