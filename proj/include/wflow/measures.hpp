#ifndef WFLOW_MEASURES_HPP
#define WFLOW_MEASURES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "wflow/detail/linalg.hpp"
#include "wflow/error.hpp"

namespace wflow {

/// Row-major n x d storage, one particle per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

struct RngSeed {
    std::uint64_t value = 0;
};

/// Empirical measure (1/n) sum_i delta_{x_i} with uniform weights.
class ParticleCloud {
public:
    explicit ParticleCloud(Matrix positions) : positions_(std::move(positions)) {
        if (positions_.rows() < 1 || positions_.cols() < 1)
            throw InvalidArgument("ParticleCloud: need at least one particle and one dimension");
        if (!positions_.allFinite()) throw InvalidArgument("ParticleCloud: non-finite coordinates");
    }

    Index size() const noexcept { return positions_.rows(); }
    Index dim() const noexcept { return positions_.cols(); }
    const Matrix& positions() const noexcept { return positions_; }
    auto row(Index i) const { return positions_.row(i); }

    RowVector mean() const { return positions_.colwise().mean(); }

    /// Biased (1/n) empirical covariance.
    Eigen::MatrixXd covariance() const {
        const Matrix centered = positions_.rowwise() - mean();
        return (centered.transpose() * centered) / static_cast<double>(size());
    }

private:
    Matrix positions_;
};

/// A map in L^2(mu) evaluated at the particles of a cloud: row i is the value
/// at particle i.
class VelocityField {
public:
    VelocityField() = default;
    explicit VelocityField(Matrix values) : values_(std::move(values)) {}

    static VelocityField zeros(Index n, Index d) { return VelocityField(Matrix::Zero(n, d)); }
    static VelocityField identity(const ParticleCloud& cloud) { return VelocityField(cloud.positions()); }

    Index rows() const noexcept { return values_.rows(); }
    Index cols() const noexcept { return values_.cols(); }
    const Matrix& values() const noexcept { return values_; }
    Matrix& values() noexcept { return values_; }
    auto row(Index i) const { return values_.row(i); }

    bool matches(const ParticleCloud& cloud) const noexcept {
        return rows() == cloud.size() && cols() == cloud.dim();
    }

    /// Squared L^2(mu_hat) norm: (1/n) sum_i |v_i|^2.
    double l2_squared() const { return values_.squaredNorm() / static_cast<double>(rows()); }

    friend VelocityField operator+(const VelocityField& a, const VelocityField& b) {
        check_same(a, b);
        return VelocityField(a.values_ + b.values_);
    }
    friend VelocityField operator-(const VelocityField& a, const VelocityField& b) {
        check_same(a, b);
        return VelocityField(a.values_ - b.values_);
    }
    friend VelocityField operator*(double s, const VelocityField& a) { return VelocityField(s * a.values_); }

private:
    static void check_same(const VelocityField& a, const VelocityField& b) {
        if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("VelocityField: shape mismatch");
    }

    Matrix values_;
};

inline void require_shape(const ParticleCloud& cloud, const VelocityField& field, const char* where) {
    if (!field.matches(cloud))
        throw ShapeError(std::string(where) + ": field is " + std::to_string(field.rows()) + "x" +
                         std::to_string(field.cols()) + ", cloud is " + std::to_string(cloud.size()) + "x" +
                         std::to_string(cloud.dim()));
}

/// N(mean, cov) with symmetric positive definite covariance.
class GaussianState {
public:
    GaussianState(Eigen::VectorXd mean, Eigen::MatrixXd cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
        if (mean_.size() != cov_.rows()) throw ShapeError("GaussianState: mean and covariance sizes differ");
        detail::require_spd(cov_, "GaussianState covariance");
    }

    static GaussianState standard(Index d) {
        return GaussianState(Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d));
    }

    Index dim() const noexcept { return mean_.size(); }
    const Eigen::VectorXd& mean() const noexcept { return mean_; }
    const Eigen::MatrixXd& cov() const noexcept { return cov_; }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
};

/// Translates the cloud so that its mean is zero.
inline ParticleCloud center(const ParticleCloud& cloud) {
    Matrix shifted = cloud.positions().rowwise() - cloud.mean();
    return ParticleCloud(std::move(shifted));
}

/// (T)_# mu_hat: moves particle i to row i of the map.
inline ParticleCloud pushforward(const ParticleCloud& cloud, const VelocityField& map) {
    require_shape(cloud, map, "pushforward");
    return ParticleCloud(map.values());
}

/// n i.i.d. draws x = m + L z with L the Cholesky factor of the covariance.
/// Pure function of (seed, n, state).
inline ParticleCloud sample_gaussian(RngSeed seed, Index n, const GaussianState& state) {
    if (n < 1) throw InvalidArgument("sample_gaussian: particle count must be positive");
    Eigen::LLT<Eigen::MatrixXd> llt(state.cov());
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("sample_gaussian: Cholesky factorization failed");
    const Eigen::MatrixXd lower = llt.matrixL();
    std::mt19937_64 gen(seed.value);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index d = state.dim();
    Matrix z(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < d; ++c) z(i, c) = normal(gen);
    Matrix x = z * lower.transpose();
    x.rowwise() += state.mean().transpose();
    return ParticleCloud(std::move(x));
}

}  // namespace wflow

#endif  // WFLOW_MEASURES_HPP
