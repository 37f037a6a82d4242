#ifndef WFLOW_BREGMAN_HPP
#define WFLOW_BREGMAN_HPP

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>

#include "wflow/error.hpp"
#include "wflow/functionals.hpp"
#include "wflow/kernels.hpp"
#include "wflow/measures.hpp"
#include "wflow/potentials.hpp"

namespace wflow {

/// A Bregman potential phi over measures, seen at an empirical measure mu_hat
/// through phi_mu(T) = phi(T # mu_hat). forward() is grad_W phi at the
/// particles (the mirror map applied to the identity).
class BregmanPotential {
public:
    virtual ~BregmanPotential() = default;

    virtual std::string name() const = 0;

    /// phi(mu_hat).
    virtual double value(const ParticleCloud& cloud) const = 0;
    virtual VelocityField forward(const ParticleCloud& cloud) const = 0;

    /// True when the mirror map can be inverted particle by particle.
    virtual bool explicit_inverse() const { return false; }
    virtual VelocityField inverse(const VelocityField&) const {
        throw InvalidArgument(name() + ": no pointwise inverse; use the implicit Newton step");
    }

    /// d_phi_mu(T, S) with T, S maps evaluated at the particles of `cloud`.
    virtual double divergence(const ParticleCloud& cloud, const VelocityField& t, const VelocityField& s) const = 0;

    /// Throws DomainError if some particle lies outside the mirror map's domain.
    virtual void check_domain(const ParticleCloud&) const {}

    /// phi(T # mu) = phi(mu) for every translation T.
    virtual bool translation_invariant() const { return false; }
};

using BregmanPtr = std::shared_ptr<const BregmanPotential>;

/// phi(mu) = int V dmu for a pointwise potential V; the mirror map is grad V
/// and, when V* is explicit, the inverse is grad V*.
class PotentialBregman final : public BregmanPotential {
public:
    explicit PotentialBregman(std::shared_ptr<const PointPotential> v) : v_(std::move(v)) {
        if (!v_) throw InvalidArgument("PotentialBregman: null potential");
    }

    const PointPotential& potential() const noexcept { return *v_; }
    std::string name() const override { return "potential-bregman"; }

    double value(const ParticleCloud& cloud) const override { return PotentialEnergy(v_).value(cloud); }
    VelocityField forward(const ParticleCloud& cloud) const override { return PotentialEnergy(v_).wgrad(cloud); }

    bool explicit_inverse() const override { return v_->has_conjugate_gradient(); }

    VelocityField inverse(const VelocityField& field) const override {
        if (!explicit_inverse()) return BregmanPotential::inverse(field);
        if (field.cols() != v_->dim()) throw ShapeError("PotentialBregman::inverse: dimension mismatch");
        Matrix out(field.rows(), field.cols());
        for (Index i = 0; i < field.rows(); ++i) out.row(i) = v_->conjugate_gradient(field.row(i).transpose()).transpose();
        return VelocityField(std::move(out));
    }

    /// (1/n) sum_i d_V(T_i, S_i).
    double divergence(const ParticleCloud& cloud, const VelocityField& t, const VelocityField& s) const override {
        require_shape(cloud, t, "divergence");
        require_shape(cloud, s, "divergence");
        double acc = 0.0;
        for (Index i = 0; i < t.rows(); ++i) acc += v_->bregman(t.row(i).transpose(), s.row(i).transpose());
        return acc / static_cast<double>(t.rows());
    }

    void check_domain(const ParticleCloud& cloud) const override {
        for (Index i = 0; i < cloud.size(); ++i) v_->check_domain(cloud.row(i).transpose());
    }

private:
    std::shared_ptr<const PointPotential> v_;
};

/// V(x) = 1/2 x^T Lambda^{-1} x: forward multiplies by Lambda^{-1}, inverse by Lambda.
inline std::shared_ptr<PotentialBregman> quadratic_matrix_bregman(const Eigen::MatrixXd& lambda) {
    return std::make_shared<PotentialBregman>(QuadraticPotential::from_covariance(lambda));
}

inline std::shared_ptr<PotentialBregman> euclidean_bregman(Index d) {
    return std::make_shared<PotentialBregman>(QuadraticPotential::euclidean(d));
}

inline std::shared_ptr<PotentialBregman> simplex_entropy_bregman(Index d) {
    return std::make_shared<PotentialBregman>(std::make_shared<SimplexEntropy>(d));
}

/// phi(mu) = 1/2 iint W(x - y) dmu dmu for a convex even kernel.
class InteractionBregman final : public BregmanPotential {
public:
    explicit InteractionBregman(InteractionKernel kernel) : kernel_(std::move(kernel)) {
        if (!kernel_.convex()) throw InvalidArgument("InteractionBregman: kernel must be convex (K2 or K4)");
    }

    const InteractionKernel& kernel() const noexcept { return kernel_; }
    std::string name() const override { return "interaction-bregman"; }
    bool translation_invariant() const override { return true; }

    double value(const ParticleCloud& cloud) const override { return interaction_value(cloud, kernel_); }
    VelocityField forward(const ParticleCloud& cloud) const override { return interaction_grad(cloud, kernel_); }

    /// (1/2n^2) sum_{i,j} d_W(T_i - T_j, S_i - S_j).
    double divergence(const ParticleCloud& cloud, const VelocityField& t, const VelocityField& s) const override {
        require_shape(cloud, t, "divergence");
        require_shape(cloud, s, "divergence");
        const Index n = t.rows();
        double acc = 0.0;
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                const Eigen::VectorXd a = (t.row(i) - t.row(j)).transpose();
                const Eigen::VectorXd b = (s.row(i) - s.row(j)).transpose();
                acc += kernel_.value(a) - kernel_.value(b) - kernel_.gradient(b).dot(a - b);
            }
        }
        return acc / (2.0 * static_cast<double>(n) * static_cast<double>(n));
    }

private:
    InteractionKernel kernel_;
};

inline VelocityField forward(const BregmanPotential& phi, const ParticleCloud& cloud) { return phi.forward(cloud); }

inline VelocityField inverse_pointwise(const BregmanPotential& phi, const VelocityField& field) {
    return phi.inverse(field);
}

inline double divergence(const BregmanPotential& phi, const ParticleCloud& cloud, const VelocityField& t,
                         const VelocityField& s) {
    return phi.divergence(cloud, t, s);
}

// ---------------------------------------------------------------------------
// Implicit mirror step for interaction potentials
// ---------------------------------------------------------------------------

struct NewtonConfig {
    double damping = 1.0;     // initial step gamma in (0, 1]
    double tolerance = 1e-10; // on max_j |G_j|_2
    int max_iter = 50;
    double ridge = 1e-8;      // added to the Jacobian diagonal
    int max_halvings = 20;    // backtracking on residual increase
    bool recenter = true;     // translate the solution to zero mean
};

struct NewtonResult {
    ParticleCloud cloud;
    double residual = 0.0;
    int iterations = 0;
};

namespace detail {

inline double max_row_norm(const Matrix& m) {
    double worst = 0.0;
    for (Index i = 0; i < m.rows(); ++i) worst = std::max(worst, m.row(i).norm());
    return worst;
}

/// Dense nd x nd Jacobian of x -> (1/n) sum_l grad W(x_j - x_l):
/// diagonal blocks (1/n) sum_l H(x_j - x_l), off-diagonal -(1/n) H(x_j - x_i).
inline Eigen::MatrixXd interaction_jacobian(const Matrix& x, const InteractionKernel& kernel) {
    const Index n = x.rows(), d = x.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n * d, n * d);
    for (Index j = 0; j < n; ++j) {
        for (Index i = j + 1; i < n; ++i) {
            const Eigen::MatrixXd h = inv_n * kernel.hessian((x.row(j) - x.row(i)).transpose());
            jac.block(j * d, i * d, d, d) = -h;
            jac.block(i * d, j * d, d, d) = -h;
            jac.block(j * d, j * d, d, d) += h;
            jac.block(i * d, i * d, d, d) += h;
        }
        // l = j term: H(0)/n.
        jac.block(j * d, j * d, d, d) += inv_n * kernel.hessian(Eigen::VectorXd::Zero(d));
    }
    return jac;
}

}  // namespace detail

/// Solves grad_W phi(mu_new)(x_j) = rhs_j for the new positions with damped
/// Newton iterations started at `cloud`. The interaction mirror map is
/// translation invariant, so the equations are solvable only for rhs with zero
/// mean: the mean of rhs is projected out first.
inline NewtonResult newton_implicit_step(const InteractionBregman& phi, const ParticleCloud& cloud,
                                         const VelocityField& rhs, const NewtonConfig& cfg = {}) {
    require_shape(cloud, rhs, "newton_implicit_step");
    if (!(cfg.tolerance > 0.0)) throw InvalidArgument("NewtonConfig: tolerance must be positive");
    if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) throw InvalidArgument("NewtonConfig: damping must lie in (0, 1]");
    if (cfg.ridge < 0.0) throw InvalidArgument("NewtonConfig: ridge must be nonnegative");
    if (cfg.max_iter < 0) throw InvalidArgument("NewtonConfig: max_iter must be nonnegative");

    const Index n = cloud.size(), d = cloud.dim();
    Matrix target = rhs.values();
    target.rowwise() -= target.colwise().mean();

    auto residual_of = [&](const Matrix& x) -> Matrix {
        return interaction_grad(ParticleCloud(x), phi.kernel()).values() - target;
    };

    Matrix x = cloud.positions();
    Matrix g = residual_of(x);
    double res = detail::max_row_norm(g);
    int it = 0;
    while (res > cfg.tolerance) {
        if (it >= cfg.max_iter) throw NewtonFailure("newton_implicit_step: iteration budget exhausted", res, it);
        ++it;
        Eigen::MatrixXd jac = detail::interaction_jacobian(x, phi.kernel());
        jac.diagonal().array() += cfg.ridge;
        const Eigen::Map<const Eigen::VectorXd> gvec(g.data(), n * d);  // row-major: particle-major ordering
        Eigen::VectorXd delta;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(jac);
        if (ldlt.info() == Eigen::Success) delta = ldlt.solve(gvec);
        if (delta.size() != n * d || !delta.allFinite()) {
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
            delta = lu.solve(gvec);
        }
        if (!delta.allFinite()) throw NewtonFailure("newton_implicit_step: linear solve failed", res, it);
        const Eigen::Map<const Matrix> step(delta.data(), n, d);

        double gamma = cfg.damping;
        bool accepted = false;
        for (int h = 0; h <= cfg.max_halvings; ++h, gamma *= 0.5) {
            Matrix trial = x - gamma * step;
            if (!trial.allFinite()) continue;
            Matrix g_trial = residual_of(trial);
            const double r_trial = detail::max_row_norm(g_trial);
            if (r_trial < res) {
                x = std::move(trial);
                g = std::move(g_trial);
                res = r_trial;
                accepted = true;
                break;
            }
        }
        if (!accepted) throw NewtonFailure("newton_implicit_step: no residual decrease after backtracking", res, it);
    }
    if (cfg.recenter) x.rowwise() -= x.colwise().mean();
    return {ParticleCloud(std::move(x)), res, it};
}

}  // namespace wflow

#endif  // WFLOW_BREGMAN_HPP
