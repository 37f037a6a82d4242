#ifndef WFLOW_OT1D_HPP
#define WFLOW_OT1D_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "wflow/detail/parallel.hpp"
#include "wflow/error.hpp"
#include "wflow/measures.hpp"

namespace wflow {

// ---------------------------------------------------------------------------
// Random directions on the unit sphere
// ---------------------------------------------------------------------------

/// L directions in R^d, one per row, each of unit Euclidean norm.
struct Projections {
    Matrix directions;
    std::uint64_t seed = 0;

    Index count() const noexcept { return directions.rows(); }
};

/// SplitMix64 finalizer; derives independent stream seeds from (seed, counter).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Normalized i.i.d. standard Gaussian vectors; deterministic per seed.
inline Projections sample_sphere(std::uint64_t seed, Index count, Index dim) {
    if (count < 1 || dim < 1) throw InvalidArgument("sample_sphere: need L >= 1 and d >= 1");
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix dirs(count, dim);
    for (Index l = 0; l < count; ++l) {
        double norm = 0.0;
        do {
            for (Index c = 0; c < dim; ++c) dirs(l, c) = normal(gen);
            norm = dirs.row(l).norm();
        } while (norm < 1e-300);
        dirs.row(l) /= norm;
    }
    return {std::move(dirs), seed};
}

// ---------------------------------------------------------------------------
// Sorting and 1D optimal transport between uniform empirical measures
// ---------------------------------------------------------------------------

/// Indices that sort `values` ascending; ties keep their original order.
inline std::vector<Index> stable_argsort(std::span<const double> values) {
    std::vector<std::pair<double, Index>> keyed(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) keyed[i] = {values[i], static_cast<Index>(i)};
    std::sort(keyed.begin(), keyed.end());
    std::vector<Index> idx(values.size());
    for (std::size_t i = 0; i < keyed.size(); ++i) idx[i] = keyed[i].second;
    return idx;
}

namespace detail {

/// Walks the monotone (north-west corner) coupling between n and m uniform
/// atoms. Masses are integers in units of 1/(n m): source atom i owns
/// [i m, (i+1) m) and target atom j owns [j n, (j+1) n).
template <typename Visit>
void monotone_coupling(std::size_t n, std::size_t m, Visit&& visit) {
    std::size_t i = 0, j = 0;
    std::uint64_t src_left = m, tgt_left = n;
    while (i < n && j < m) {
        const std::uint64_t w = std::min(src_left, tgt_left);
        visit(i, j, w);
        src_left -= w;
        tgt_left -= w;
        if (src_left == 0) {
            ++i;
            src_left = m;
        }
        if (tgt_left == 0) {
            ++j;
            tgt_left = n;
        }
    }
}

}  // namespace detail

/// Displacement of each sorted source atom under the optimal 1D coupling:
/// out_i = src_i - n * (mass-weighted mean of the target quantiles matched to
/// atom i). With n == m this is the rank pairing src_i - tgt_i; with n != m it
/// is the barycentric projection of the monotone coupling, i.e. the exact
/// derivative of (n/2) W_2^2 with respect to src_i.
inline std::vector<double> quantile_displacement(std::span<const double> src, std::span<const double> tgt) {
    if (tgt.empty()) throw InvalidArgument("quantile_displacement: empty target");
    const std::size_t n = src.size(), m = tgt.size();
    std::vector<double> out(n);
    if (n == m) {
        for (std::size_t i = 0; i < n; ++i) out[i] = src[i] - tgt[i];
        return out;
    }
    std::vector<double> bary(n, 0.0);
    detail::monotone_coupling(n, m, [&](std::size_t i, std::size_t j, std::uint64_t w) {
        bary[i] += static_cast<double>(w) * tgt[j];
    });
    for (std::size_t i = 0; i < n; ++i) out[i] = src[i] - bary[i] / static_cast<double>(m);
    return out;
}

/// W_2^2 between uniform empirical measures on sorted supports.
inline double w2_squared_sorted(std::span<const double> src, std::span<const double> tgt) {
    if (src.empty() || tgt.empty()) throw InvalidArgument("w2_squared_sorted: empty support");
    const std::size_t n = src.size(), m = tgt.size();
    if (n == m) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += (src[i] - tgt[i]) * (src[i] - tgt[i]);
        return acc / static_cast<double>(n);
    }
    double acc = 0.0;
    detail::monotone_coupling(n, m, [&](std::size_t i, std::size_t j, std::uint64_t w) {
        const double diff = src[i] - tgt[j];
        acc += static_cast<double>(w) * diff * diff;
    });
    return acc / (static_cast<double>(n) * static_cast<double>(m));
}

// ---------------------------------------------------------------------------
// Log-domain Sinkhorn
// ---------------------------------------------------------------------------

struct SinkhornOptions {
    double epsilon = 1.0;
    int max_iter = 10000;
    double tolerance = 1e-9;
};

/// Entropic OT dual potentials for uniform weights and cost |x - y|^2.
/// OT_eps(mu, nu) = mean(f) + mean(g) at convergence.
struct DualPotentials {
    Eigen::VectorXd f;
    Eigen::VectorXd g;
    double residual = 0.0;
    int iterations = 0;
    std::vector<double> residual_history;

    double transport_cost() const { return f.mean() + g.mean(); }
};

namespace detail {

inline Matrix squared_distances(const Matrix& x, const Matrix& y) {
    const Eigen::VectorXd xx = x.rowwise().squaredNorm();
    const Eigen::VectorXd yy = y.rowwise().squaredNorm();
    Matrix c = -2.0 * (x * y.transpose());
    c.colwise() += xx;
    c.rowwise() += yy.transpose();
    return c.cwiseMax(0.0);
}

/// out_i = -eps * log( (1/m) sum_j exp((h_j - C_ij) / eps) ), with the max-shift.
inline void softmin_rows(const Matrix& cost, const Eigen::VectorXd& h, double eps, Eigen::VectorXd& out) {
    const Index n = cost.rows(), m = cost.cols();
    const double log_m = std::log(static_cast<double>(m));
    const Eigen::ArrayXd hs = h.array() / eps;
    out.resize(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
        const Index i = static_cast<Index>(ii);
        const Eigen::ArrayXd z = hs - cost.row(i).transpose().array() / eps;
        const double mx = z.maxCoeff();
        out(i) = -eps * (mx + std::log((z - mx).exp().sum()) - log_m);
    });
}

/// max_i |exp((f_i - f_new_i)/eps) - 1|: linear-domain marginal violation n |sum_j gamma_ij - 1/n|.
inline double marginal_violation(const Eigen::VectorXd& f, const Eigen::VectorXd& f_new, double eps) {
    double worst = 0.0;
    for (Index i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(std::expm1((f(i) - f_new(i)) / eps)));
    return worst;
}

inline void check_sinkhorn_options(const SinkhornOptions& opt) {
    if (!(opt.epsilon > 0.0)) throw InvalidArgument("sinkhorn: epsilon must be positive");
    if (opt.max_iter < 1) throw InvalidArgument("sinkhorn: max_iter must be positive");
    if (!(opt.tolerance > 0.0)) throw InvalidArgument("sinkhorn: tolerance must be positive");
}

}  // namespace detail

/// Symmetric problem OT_eps(mu, mu) with the averaging update f <- (f + T(f)) / 2.
/// Returns f == g.
inline DualPotentials sinkhorn_solve_symmetric(const Matrix& x, const SinkhornOptions& opt,
                                               const DualPotentials* warm_start = nullptr) {
    detail::check_sinkhorn_options(opt);
    if (x.rows() < 1) throw InvalidArgument("sinkhorn_solve_symmetric: empty support");
    const Matrix cost = detail::squared_distances(x, x);
    DualPotentials d;
    if (warm_start && warm_start->f.size() == x.rows())
        d.f = warm_start->f;
    else
        d.f = Eigen::VectorXd::Zero(x.rows());
    Eigen::VectorXd t;
    for (int it = 1; it <= opt.max_iter; ++it) {
        detail::softmin_rows(cost, d.f, opt.epsilon, t);
        d.residual = detail::marginal_violation(d.f, t, opt.epsilon);
        d.residual_history.push_back(d.residual);
        d.iterations = it;
        if (d.residual <= opt.tolerance) {
            d.f = t;
            d.g = d.f;
            return d;
        }
        d.f = 0.5 * (d.f + t);
    }
    throw SinkhornNonConvergence("sinkhorn_solve_symmetric: dual tolerance not reached", d.residual, d.iterations);
}

/// Alternating log-domain softmin updates between two clouds. The returned g
/// is the exact c-transform of f; the residual is the marginal violation on
/// the source side. Throws SinkhornNonConvergence on max_iter exhaustion.
/// Identical supports go to the symmetric solver: the alternating updates can
/// stall there (an isolated atom makes the plan nearly block diagonal), while
/// the averaged update contracts at rate <= 1/2.
inline DualPotentials sinkhorn_solve(const Matrix& x, const Matrix& y, const SinkhornOptions& opt,
                                     const DualPotentials* warm_start = nullptr) {
    detail::check_sinkhorn_options(opt);
    if (x.rows() < 1 || y.rows() < 1) throw InvalidArgument("sinkhorn_solve: empty support");
    if (x.cols() != y.cols()) throw ShapeError("sinkhorn_solve: dimension mismatch");
    if (x.rows() == y.rows() && x == y) return sinkhorn_solve_symmetric(x, opt, warm_start);
    const Matrix cost = detail::squared_distances(x, y);
    const Matrix cost_t = cost.transpose();
    DualPotentials d;
    if (warm_start && warm_start->f.size() == x.rows() && warm_start->g.size() == y.rows()) {
        d.f = warm_start->f;
        d.g = warm_start->g;
    } else {
        d.f = Eigen::VectorXd::Zero(x.rows());
        detail::softmin_rows(cost_t, d.f, opt.epsilon, d.g);
    }
    Eigen::VectorXd f_new;
    for (int it = 1; it <= opt.max_iter; ++it) {
        detail::softmin_rows(cost, d.g, opt.epsilon, f_new);
        d.residual = detail::marginal_violation(d.f, f_new, opt.epsilon);
        d.residual_history.push_back(d.residual);
        d.f = f_new;
        detail::softmin_rows(cost_t, d.f, opt.epsilon, d.g);
        d.iterations = it;
        if (d.residual <= opt.tolerance) return d;
    }
    throw SinkhornNonConvergence("sinkhorn_solve: dual tolerance not reached", d.residual, d.iterations);
}

/// Gradient of x -> f(x) = softmin_j (g_j - |x - y_j|^2) at each row of x,
/// with the duals held fixed: 2 sum_j pi_ij (x_i - y_j).
inline Matrix dual_potential_gradient(const Matrix& x, const Matrix& y, const Eigen::VectorXd& g, double eps) {
    const Matrix cost = detail::squared_distances(x, y);
    const Eigen::ArrayXd gs = g.array() / eps;
    Matrix out(x.rows(), x.cols());
    detail::parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t ii) {
        const Index i = static_cast<Index>(ii);
        const Eigen::ArrayXd z = gs - cost.row(i).transpose().array() / eps;
        const Eigen::VectorXd w = (z - z.maxCoeff()).exp().matrix();
        out.row(i) = 2.0 * (x.row(i) - (w.transpose() * y) / w.sum());
    });
    return out;
}

}  // namespace wflow

#endif  // WFLOW_OT1D_HPP
