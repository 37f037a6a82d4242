#ifndef WFLOW_FUNCTIONALS_HPP
#define WFLOW_FUNCTIONALS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wflow/detail/parallel.hpp"
#include "wflow/error.hpp"
#include "wflow/kernels.hpp"
#include "wflow/measures.hpp"
#include "wflow/ot1d.hpp"
#include "wflow/potentials.hpp"

namespace wflow {

/// An objective F over empirical measures together with its Wasserstein
/// gradient evaluated at the particles.
///
/// Convention: with x_i the particle positions, dF/dx_i = (1/n) wgrad(x)_i.
/// Monte-Carlo variants evaluate with the projections of the currently
/// selected draw; until select_draw is called they stay on draw 0, which is
/// the frozen mode used by gradient checks.
class Functional {
public:
    virtual ~Functional() = default;

    virtual double value(const ParticleCloud& cloud) const = 0;
    virtual VelocityField wgrad(const ParticleCloud& cloud) const = 0;
    virtual std::string name() const = 0;

    /// Value and gradient from one evaluation; overridden where the two share work.
    virtual double value_and_wgrad(const ParticleCloud& cloud, VelocityField& grad) const {
        grad = wgrad(cloud);
        return value(cloud);
    }

    virtual bool stochastic() const { return false; }
    virtual void select_draw(std::uint64_t /*draw*/) {}

    /// Monte-Carlo standard error of value(), when it has one.
    virtual std::optional<double> value_stderr(const ParticleCloud&) const { return std::nullopt; }
};

using FunctionalPtr = std::shared_ptr<Functional>;

// ---------------------------------------------------------------------------
// Potential energy  V(mu) = int V dmu
// ---------------------------------------------------------------------------

class PotentialEnergy final : public Functional {
public:
    explicit PotentialEnergy(std::shared_ptr<const PointPotential> v) : v_(std::move(v)) {
        if (!v_) throw InvalidArgument("PotentialEnergy: null potential");
    }

    const PointPotential& potential() const noexcept { return *v_; }

    double value(const ParticleCloud& cloud) const override {
        check(cloud);
        double acc = 0.0;
        for (Index i = 0; i < cloud.size(); ++i) acc += v_->value(cloud.row(i).transpose());
        return acc / static_cast<double>(cloud.size());
    }

    VelocityField wgrad(const ParticleCloud& cloud) const override {
        check(cloud);
        Matrix g(cloud.size(), cloud.dim());
        for (Index i = 0; i < cloud.size(); ++i) g.row(i) = v_->gradient(cloud.row(i).transpose()).transpose();
        return VelocityField(std::move(g));
    }

    std::string name() const override { return "potential"; }

private:
    void check(const ParticleCloud& cloud) const {
        if (cloud.dim() != v_->dim()) throw ShapeError("PotentialEnergy: dimension mismatch");
    }

    std::shared_ptr<const PointPotential> v_;
};

// ---------------------------------------------------------------------------
// Interaction energy  W(mu) = 1/2 iint W(x - y) dmu dmu
// ---------------------------------------------------------------------------

/// (1/2n^2) sum over all ordered pairs, i = j included (W(0) is a constant
/// and grad W(0) = 0 for every shipped kernel).
inline double interaction_value(const ParticleCloud& cloud, const InteractionKernel& kernel) {
    if (cloud.dim() != kernel.dim()) throw ShapeError("interaction_value: dimension mismatch");
    const Matrix& x = cloud.positions();
    const Index n = cloud.size();
    double acc = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) acc += kernel.value((x.row(i) - x.row(j)).transpose());
    return acc / (2.0 * static_cast<double>(n) * static_cast<double>(n));
}

/// Row i: (1/n) sum_j grad W(x_i - x_j).
inline VelocityField interaction_grad(const ParticleCloud& cloud, const InteractionKernel& kernel) {
    if (cloud.dim() != kernel.dim()) throw ShapeError("interaction_grad: dimension mismatch");
    const Matrix& x = cloud.positions();
    const Index n = cloud.size(), d = cloud.dim();
    Matrix g = Matrix::Zero(n, d);
    const Eigen::MatrixXd& a = kernel.metric();
    Eigen::VectorXd z(d), az(d);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            z = (x.row(i) - x.row(j)).transpose();
            az.noalias() = a * z;
            g.row(i) += kernel.radial_factor(z.dot(az)) * az.transpose();
        }
    }
    g /= static_cast<double>(n);
    return VelocityField(std::move(g));
}

class InteractionEnergy final : public Functional {
public:
    explicit InteractionEnergy(InteractionKernel kernel) : kernel_(std::move(kernel)) {}

    const InteractionKernel& kernel() const noexcept { return kernel_; }

    double value(const ParticleCloud& cloud) const override { return interaction_value(cloud, kernel_); }
    VelocityField wgrad(const ParticleCloud& cloud) const override { return interaction_grad(cloud, kernel_); }
    std::string name() const override { return "interaction"; }

private:
    InteractionKernel kernel_;
};

// ---------------------------------------------------------------------------
// Sliced objectives
// ---------------------------------------------------------------------------

struct SlicedParams {
    Index projections = 1024;
    std::uint64_t seed = 0;
};

namespace detail {

/// Projected coordinates sorted per slice: column l holds sort(<y_j, theta_l>).
inline Matrix sorted_projections(const Matrix& points, const Matrix& directions) {
    Matrix proj = points * directions.transpose();  // m x L
    Eigen::MatrixXd cols = proj;                    // column-major: each slice contiguous
    for (Index l = 0; l < cols.cols(); ++l) std::sort(cols.col(l).data(), cols.col(l).data() + cols.rows());
    return Matrix(cols);
}

/// Shared state of SW and sliced ED: the target cloud and the projections of
/// the current draw with the target's sorted projected coordinates.
class SlicedBase : public Functional {
public:
    SlicedBase(ParticleCloud target, SlicedParams params) : target_(std::move(target)), params_(params) {
        if (params_.projections < 1) throw InvalidArgument("sliced functional: projection count must be >= 1");
        redraw(0);
    }

    bool stochastic() const override { return true; }
    void select_draw(std::uint64_t draw) override {
        if (draw != draw_) redraw(draw);
    }

    const ParticleCloud& target() const noexcept { return target_; }
    const Projections& projections() const noexcept { return proj_; }

protected:
    void check(const ParticleCloud& cloud) const {
        if (cloud.dim() != target_.dim()) throw ShapeError(name() + ": source and target dimensions differ");
    }

    /// Source projections as column-major L slices of n values.
    Eigen::MatrixXd project(const ParticleCloud& cloud) const {
        return Eigen::MatrixXd(cloud.positions() * proj_.directions.transpose());
    }

    std::span<const double> target_slice(Index l) const {
        return {target_sorted_.col(l).data(), static_cast<std::size_t>(target_sorted_.rows())};
    }

    static double mean_and_stderr(const std::vector<double>& v, double* stderr_out) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        if (stderr_out) {
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            var /= std::max<double>(1.0, static_cast<double>(v.size()) - 1.0);
            *stderr_out = std::sqrt(var / static_cast<double>(v.size()));
        }
        return mean;
    }

    ParticleCloud target_;
    SlicedParams params_;
    Projections proj_;
    std::uint64_t draw_ = 0;
    Eigen::MatrixXd target_sorted_;  // m x L, column-major

private:
    void redraw(std::uint64_t draw) {
        draw_ = draw;
        proj_ = sample_sphere(mix_seed(params_.seed, draw), params_.projections, target_.dim());
        target_sorted_ = Eigen::MatrixXd(sorted_projections(target_.positions(), proj_.directions));
    }
};

}  // namespace detail

/// SW_2^2(mu, nu) / 2 averaged over the slices of the current draw:
/// value = (1/2L) sum_l W_2^2(theta_l # mu, theta_l # nu).
class SlicedWasserstein final : public detail::SlicedBase {
public:
    SlicedWasserstein(ParticleCloud target, SlicedParams params) : SlicedBase(std::move(target), params) {}

    double value(const ParticleCloud& cloud) const override { return evaluate(cloud, nullptr, nullptr); }

    std::optional<double> value_stderr(const ParticleCloud& cloud) const override {
        double se = 0.0;
        evaluate(cloud, &se, nullptr);
        return se;
    }

    /// Row i: (1/L) sum_l psi'_l(<x_i, theta_l>) theta_l with psi'(t) = t - F_nu^{-1}(F_mu(t)).
    VelocityField wgrad(const ParticleCloud& cloud) const override {
        VelocityField g;
        evaluate(cloud, nullptr, &g);
        return g;
    }

    double value_and_wgrad(const ParticleCloud& cloud, VelocityField& grad) const override {
        return evaluate(cloud, nullptr, &grad);
    }

    std::string name() const override { return "sw"; }

private:
    double evaluate(const ParticleCloud& cloud, double* se, VelocityField* grad) const {
        check(cloud);
        const Eigen::MatrixXd proj = project(cloud);
        const Index n = cloud.size(), slices = proj_.count();
        std::vector<double> per_slice(static_cast<std::size_t>(slices));
        Eigen::MatrixXd disp(grad ? n : 0, grad ? slices : 0);
        detail::parallel_for(static_cast<std::size_t>(slices), [&](std::size_t ll) {
            const Index l = static_cast<Index>(ll);
            const std::span<const double> s(proj.col(l).data(), static_cast<std::size_t>(n));
            if (!grad) {
                std::vector<double> sorted(s.begin(), s.end());
                std::sort(sorted.begin(), sorted.end());
                per_slice[ll] = 0.5 * w2_squared_sorted(sorted, target_slice(l));
                return;
            }
            const auto order = stable_argsort(s);
            std::vector<double> sorted(static_cast<std::size_t>(n));
            for (std::size_t r = 0; r < sorted.size(); ++r) sorted[r] = s[static_cast<std::size_t>(order[r])];
            per_slice[ll] = 0.5 * w2_squared_sorted(sorted, target_slice(l));
            const auto q = quantile_displacement(sorted, target_slice(l));
            for (std::size_t r = 0; r < sorted.size(); ++r) disp(order[r], l) = q[r];
        });
        if (grad) *grad = VelocityField(Matrix(disp * proj_.directions / static_cast<double>(slices)));
        return mean_and_stderr(per_slice, se);
    }
};

namespace detail {

/// sum_{i,j} |s_i - s_j| over ordered pairs for sorted s.
inline double pairwise_abs_sorted(std::span<const double> s) {
    const double n = static_cast<double>(s.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) acc += s[k] * (2.0 * static_cast<double>(k) - n + 1.0);
    return 2.0 * acc;
}

/// sum_{i,j} |s_i - t_j| for sorted s and t, by merging.
inline double cross_abs_sorted(std::span<const double> s, std::span<const double> t) {
    // For each s_i: sum_j |s_i - t_j| = s_i (2 c - m) - 2 P_c + T, c = #{t_j < s_i}, P_c prefix sum.
    const double total_t = [&] {
        double acc = 0.0;
        for (double v : t) acc += v;
        return acc;
    }();
    const double m = static_cast<double>(t.size());
    double acc = 0.0, prefix = 0.0;
    std::size_t c = 0;
    for (double si : s) {
        while (c < t.size() && t[c] < si) prefix += t[c++];
        acc += si * (2.0 * static_cast<double>(c) - m) - 2.0 * prefix + total_t;
    }
    return acc;
}

/// sum_j sign(v - u_j) over sorted u, with sign(0) = 0.
inline double sign_count(double v, std::span<const double> u) {
    const auto lo = std::lower_bound(u.begin(), u.end(), v);
    const auto hi = std::upper_bound(lo, u.end(), v);
    const auto below = lo - u.begin();
    const auto above = u.end() - hi;
    return static_cast<double>(below - above);
}

/// sign_count(s_r, u) for every entry of sorted s, in one merge pass.
inline void sign_counts_sorted(std::span<const double> s, std::span<const double> u, std::vector<double>& out) {
    out.resize(s.size());
    std::size_t lo = 0, hi = 0;
    for (std::size_t r = 0; r < s.size(); ++r) {
        while (lo < u.size() && u[lo] < s[r]) ++lo;
        if (hi < lo) hi = lo;
        while (hi < u.size() && !(s[r] < u[hi])) ++hi;
        out[r] = static_cast<double>(lo) - static_cast<double>(u.size() - hi);
    }
}

}  // namespace detail

/// Sliced energy distance, value and gradient taken from the same slices:
/// value = (1/L) sum_l ED_1D(theta_l # mu, theta_l # nu) with
/// ED_1D = 2/(nm) sum|s - t| - 1/n^2 sum|s - s'| - 1/m^2 sum|t - t'|.
class SlicedEnergyDistance final : public detail::SlicedBase {
public:
    SlicedEnergyDistance(ParticleCloud target, SlicedParams params) : SlicedBase(std::move(target), params) {}

    double value(const ParticleCloud& cloud) const override { return evaluate(cloud, nullptr, nullptr); }

    std::optional<double> value_stderr(const ParticleCloud& cloud) const override {
        double se = 0.0;
        evaluate(cloud, &se, nullptr);
        return se;
    }

    /// Row i: (1/L) sum_l g_l(<x_i, theta_l>) theta_l,
    /// g_l(s) = (2/m) sum_j sign(s - t_j) - (2/n) sum_j sign(s - s_j).
    VelocityField wgrad(const ParticleCloud& cloud) const override {
        VelocityField g;
        evaluate(cloud, nullptr, &g);
        return g;
    }

    double value_and_wgrad(const ParticleCloud& cloud, VelocityField& grad) const override {
        return evaluate(cloud, nullptr, &grad);
    }

    std::string name() const override { return "sliced_ed"; }

private:
    double evaluate(const ParticleCloud& cloud, double* se, VelocityField* grad) const {
        check(cloud);
        const Eigen::MatrixXd proj = project(cloud);
        const Index n = cloud.size(), slices = proj_.count();
        const double nn = static_cast<double>(n), mm = static_cast<double>(target_.size());
        std::vector<double> per_slice(static_cast<std::size_t>(slices));
        Eigen::MatrixXd coef(grad ? n : 0, grad ? slices : 0);
        detail::parallel_for(static_cast<std::size_t>(slices), [&](std::size_t ll) {
            const Index l = static_cast<Index>(ll);
            const std::span<const double> raw(proj.col(l).data(), static_cast<std::size_t>(n));
            std::vector<Index> order;
            std::vector<double> s(raw.begin(), raw.end());
            if (grad) {
                order = stable_argsort(raw);
                for (std::size_t r = 0; r < s.size(); ++r) s[r] = raw[static_cast<std::size_t>(order[r])];
            } else {
                std::sort(s.begin(), s.end());
            }
            const auto t = target_slice(l);
            per_slice[ll] = 2.0 / (nn * mm) * detail::cross_abs_sorted(s, t) -
                            detail::pairwise_abs_sorted(s) / (nn * nn) - detail::pairwise_abs_sorted(t) / (mm * mm);
            if (grad) {
                std::vector<double> cross, self;
                detail::sign_counts_sorted(s, t, cross);
                detail::sign_counts_sorted(s, s, self);
                for (std::size_t r = 0; r < s.size(); ++r)
                    coef(order[r], l) = 2.0 / mm * cross[r] - 2.0 / nn * self[r];
            }
        });
        if (grad) *grad = VelocityField(Matrix(coef * proj_.directions / static_cast<double>(slices)));
        return mean_and_stderr(per_slice, se);
    }
};

// ---------------------------------------------------------------------------
// Sinkhorn divergence
// ---------------------------------------------------------------------------

struct SinkhornParams {
    double epsilon = 1.0;
    int max_iter = 10000;
    double tolerance = 1e-9;
    /// Start each solve from the duals of the previous call on a cloud of the
    /// same size. Results then agree with cold starts to the dual tolerance.
    bool warm_start = false;
};

/// S_eps(mu, nu) = OT_eps(mu, nu) - 1/2 OT_eps(mu, mu) - 1/2 OT_eps(nu, nu),
/// cost |x - y|^2. The gradient is grad f_{mu nu} - grad f_{mu mu} with the
/// duals held fixed.
class SinkhornDivergence final : public Functional {
public:
    SinkhornDivergence(ParticleCloud target, SinkhornParams params) : target_(std::move(target)), params_(params) {
        const auto self = sinkhorn_solve_symmetric(target_.positions(), options());
        target_self_cost_ = self.transport_cost();
    }

    const ParticleCloud& target() const noexcept { return target_; }
    const SinkhornParams& params() const noexcept { return params_; }

    double value(const ParticleCloud& cloud) const override { return evaluate(cloud, nullptr); }

    VelocityField wgrad(const ParticleCloud& cloud) const override {
        VelocityField g;
        evaluate(cloud, &g);
        return g;
    }

    double value_and_wgrad(const ParticleCloud& cloud, VelocityField& grad) const override {
        return evaluate(cloud, &grad);
    }

    std::string name() const override { return "sinkhorn"; }

private:
    SinkhornOptions options() const { return {params_.epsilon, params_.max_iter, params_.tolerance}; }

    void check(const ParticleCloud& cloud) const {
        if (cloud.dim() != target_.dim()) throw ShapeError("sinkhorn: source and target dimensions differ");
    }

    double evaluate(const ParticleCloud& cloud, VelocityField* grad) const {
        check(cloud);
        const bool warm = params_.warm_start && cache_cross_.f.size() == cloud.size();
        auto cross = sinkhorn_solve(cloud.positions(), target_.positions(), options(), warm ? &cache_cross_ : nullptr);
        auto self = sinkhorn_solve_symmetric(cloud.positions(), options(), warm ? &cache_self_ : nullptr);
        if (grad)
            *grad = VelocityField(
                Matrix(dual_potential_gradient(cloud.positions(), target_.positions(), cross.g, params_.epsilon) -
                       dual_potential_gradient(cloud.positions(), cloud.positions(), self.g, params_.epsilon)));
        const double v = cross.transport_cost() - 0.5 * self.transport_cost() - 0.5 * target_self_cost_;
        if (params_.warm_start) {
            cache_cross_ = std::move(cross);
            cache_self_ = std::move(self);
        }
        return v;
    }

    ParticleCloud target_;
    SinkhornParams params_;
    double target_self_cost_ = 0.0;
    mutable DualPotentials cache_cross_, cache_self_;
};

inline double sinkhorn_value(const ParticleCloud& cloud, const ParticleCloud& target, const SinkhornParams& p) {
    return SinkhornDivergence(target, p).value(cloud);
}

// ---------------------------------------------------------------------------
// Entropy
// ---------------------------------------------------------------------------

/// Silverman's rule per dimension: h_c = sigma_c (4 / ((d + 2) n))^{1/(d+4)}.
inline Eigen::VectorXd silverman_bandwidth(const ParticleCloud& cloud) {
    const double n = static_cast<double>(cloud.size());
    const double d = static_cast<double>(cloud.dim());
    const Eigen::VectorXd sd = cloud.covariance().diagonal().cwiseSqrt();
    return sd * std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
}

/// grad log rho_hat at the particles for a Gaussian KDE with per-dimension
/// bandwidths; self term included.
inline VelocityField kde_entropy_grad(const ParticleCloud& cloud, const Eigen::VectorXd& bandwidth) {
    if (cloud.size() < 2) throw InvalidArgument("kde_entropy_grad: need at least two particles");
    if (bandwidth.size() != cloud.dim()) throw ShapeError("kde_entropy_grad: bandwidth size mismatch");
    if (!(bandwidth.minCoeff() > 0.0)) throw InvalidArgument("kde_entropy_grad: bandwidth must be positive");
    const Matrix& x = cloud.positions();
    const Index n = cloud.size(), d = cloud.dim();
    const Eigen::RowVectorXd inv_h2 = bandwidth.array().square().inverse().matrix().transpose();
    Matrix g(n, d);
    detail::parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
        const Index i = static_cast<Index>(ii);
        // Log-weights with a max shift; the self term has exponent 0 so max >= 0.
        std::vector<double> expo(static_cast<std::size_t>(n));
        double mx = 0.0;
        for (Index j = 0; j < n; ++j) {
            const Eigen::RowVectorXd z = x.row(i) - x.row(j);
            expo[static_cast<std::size_t>(j)] = -0.5 * (z.array().square() * inv_h2.array()).sum();
            mx = std::max(mx, expo[static_cast<std::size_t>(j)]);
        }
        double den = 0.0;
        Eigen::RowVectorXd num = Eigen::RowVectorXd::Zero(d);
        for (Index j = 0; j < n; ++j) {
            const double w = std::exp(expo[static_cast<std::size_t>(j)] - mx);
            den += w;
            num -= w * (x.row(i) - x.row(j)).cwiseProduct(inv_h2);
        }
        g.row(i) = num / den;
    });
    return VelocityField(std::move(g));
}

inline VelocityField kde_entropy_grad(const ParticleCloud& cloud, double bandwidth) {
    if (!(bandwidth > 0.0)) throw InvalidArgument("kde_entropy_grad: bandwidth must be positive");
    return kde_entropy_grad(cloud, Eigen::VectorXd::Constant(cloud.dim(), bandwidth));
}

/// Kozachenko-Leonenko nearest-neighbour estimate of the differential entropy
/// -int rho log rho: psi(n) - psi(1) + log V_d + (d/n) sum_i log r_i.
inline double kozachenko_leonenko_entropy(const ParticleCloud& cloud) {
    const Index n = cloud.size(), d = cloud.dim();
    if (n < 2) throw InvalidArgument("kozachenko_leonenko_entropy: need at least two particles");
    const Matrix& x = cloud.positions();
    double sum_log = 0.0;
    for (Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < n; ++j)
            if (j != i) best = std::min(best, (x.row(i) - x.row(j)).squaredNorm());
        if (!(best > 0.0)) throw InvalidArgument("kozachenko_leonenko_entropy: duplicate particles");
        sum_log += 0.5 * std::log(best);
    }
    double harmonic = 0.0;  // psi(n) - psi(1)
    for (Index k = 1; k < n; ++k) harmonic += 1.0 / static_cast<double>(k);
    const double half_d = 0.5 * static_cast<double>(d);
    const double log_unit_ball = half_d * std::log(std::numbers::pi) - std::lgamma(half_d + 1.0);
    return harmonic + log_unit_ball + static_cast<double>(d) * sum_log / static_cast<double>(n);
}

/// Negative entropy H(mu) = int log rho dmu: value from the nearest-neighbour
/// estimator, gradient grad log rho from the KDE. Bandwidths follow
/// Silverman's rule unless fixed.
class KdeNegativeEntropy final : public Functional {
public:
    KdeNegativeEntropy() = default;
    explicit KdeNegativeEntropy(double bandwidth) : bandwidth_(bandwidth) {
        if (!(bandwidth > 0.0)) throw InvalidArgument("KdeNegativeEntropy: bandwidth must be positive");
    }

    double value(const ParticleCloud& cloud) const override { return -kozachenko_leonenko_entropy(cloud); }

    VelocityField wgrad(const ParticleCloud& cloud) const override {
        if (bandwidth_) return kde_entropy_grad(cloud, *bandwidth_);
        return kde_entropy_grad(cloud, silverman_bandwidth(cloud));
    }

    std::string name() const override { return "negentropy"; }

private:
    std::optional<double> bandwidth_;
};

// ---------------------------------------------------------------------------
// Combinators
// ---------------------------------------------------------------------------

class SumFunctional final : public Functional {
public:
    SumFunctional(FunctionalPtr a, FunctionalPtr b) : a_(std::move(a)), b_(std::move(b)) {
        if (!a_ || !b_) throw InvalidArgument("SumFunctional: null term");
    }

    double value(const ParticleCloud& c) const override { return a_->value(c) + b_->value(c); }
    VelocityField wgrad(const ParticleCloud& c) const override { return a_->wgrad(c) + b_->wgrad(c); }
    double value_and_wgrad(const ParticleCloud& c, VelocityField& grad) const override {
        VelocityField gb;
        const double v = a_->value_and_wgrad(c, grad) + b_->value_and_wgrad(c, gb);
        grad = grad + gb;
        return v;
    }
    std::string name() const override { return a_->name() + "+" + b_->name(); }
    bool stochastic() const override { return a_->stochastic() || b_->stochastic(); }
    void select_draw(std::uint64_t draw) override {
        a_->select_draw(draw);
        b_->select_draw(draw);
    }

private:
    FunctionalPtr a_, b_;
};

class ScaledFunctional final : public Functional {
public:
    ScaledFunctional(FunctionalPtr f, double scale) : f_(std::move(f)), scale_(scale) {
        if (!f_) throw InvalidArgument("ScaledFunctional: null functional");
    }

    double value(const ParticleCloud& c) const override { return scale_ * f_->value(c); }
    VelocityField wgrad(const ParticleCloud& c) const override { return scale_ * f_->wgrad(c); }
    double value_and_wgrad(const ParticleCloud& c, VelocityField& grad) const override {
        const double v = f_->value_and_wgrad(c, grad);
        grad = scale_ * grad;
        return scale_ * v;
    }
    std::string name() const override { return "scaled " + f_->name(); }
    bool stochastic() const override { return f_->stochastic(); }
    void select_draw(std::uint64_t draw) override { f_->select_draw(draw); }
    std::optional<double> value_stderr(const ParticleCloud& c) const override {
        auto se = f_->value_stderr(c);
        if (se) *se *= std::abs(scale_);
        return se;
    }

private:
    FunctionalPtr f_;
    double scale_;
};

}  // namespace wflow

#endif  // WFLOW_FUNCTIONALS_HPP
