#ifndef WFLOW_DIAGNOSTICS_HPP
#define WFLOW_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "wflow/bregman.hpp"
#include "wflow/error.hpp"
#include "wflow/functionals.hpp"
#include "wflow/measures.hpp"
#include "wflow/potentials.hpp"

namespace wflow {

/// Central finite differences of F.value over every coordinate, compared with
/// wgrad. Since dF/dx_ic = wgrad_ic / n, the difference quotient is scaled by
/// n. Returns max |fd - g| / max(1, |g|). Monte-Carlo functionals must stay on
/// a single draw for the check to be meaningful.
inline double grad_check(const Functional& f, const ParticleCloud& cloud, double h = 1e-5) {
    if (!(h > 0.0)) throw InvalidArgument("grad_check: step must be positive");
    const Matrix g = f.wgrad(cloud).values();
    const double n = static_cast<double>(cloud.size());
    double worst = 0.0;
    Matrix x = cloud.positions();
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index c = 0; c < x.cols(); ++c) {
            const double saved = x(i, c);
            x(i, c) = saved + h;
            const double fp = f.value(ParticleCloud(x));
            x(i, c) = saved - h;
            const double fm = f.value(ParticleCloud(x));
            x(i, c) = saved;
            const double fd = n * (fp - fm) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - g(i, c)) / std::max(1.0, std::abs(g(i, c))));
        }
    }
    return worst;
}

/// d_F(A, B) = F(A # mu) - F(B # mu) - <grad_W F(B # mu) o B, A - B>_{L2(mu)}.
inline double functional_bregman(const Functional& f, const ParticleCloud& cloud, const VelocityField& a,
                                 const VelocityField& b) {
    require_shape(cloud, a, "functional_bregman");
    require_shape(cloud, b, "functional_bregman");
    const ParticleCloud pa(a.values()), pb(b.values());
    const Matrix gb = f.wgrad(pb).values();
    const double inner = gb.cwiseProduct(a.values() - b.values()).sum() / static_cast<double>(cloud.size());
    return f.value(pa) - f.value(pb) - inner;
}

struct ProbeResult {
    double sup_ratio = -std::numeric_limits<double>::infinity();
    double inf_ratio = std::numeric_limits<double>::infinity();
    int pairs = 0;
};

/// Extremes of d_F(T_s, T_t) / d_phi(T_s, T_t) along T_r = (1 - r) Id + r T
/// for r on an evenly spaced grid of [0, 1]. Every pair s < t is used in both
/// orders; pairs whose phi-divergence is below 1e-12 are skipped.
inline ProbeResult smoothness_probe(const Functional& f, const BregmanPotential& phi, const ParticleCloud& cloud,
                                    const VelocityField& target_map, int grid = 11) {
    require_shape(cloud, target_map, "smoothness_probe");
    if (grid < 2) throw InvalidArgument("smoothness_probe: grid needs at least two points");
    std::vector<VelocityField> curve;
    curve.reserve(static_cast<std::size_t>(grid));
    for (int k = 0; k < grid; ++k) {
        const double r = static_cast<double>(k) / static_cast<double>(grid - 1);
        curve.emplace_back((1.0 - r) * cloud.positions() + r * target_map.values());
    }
    ProbeResult out;
    auto consider = [&](const VelocityField& a, const VelocityField& b) {
        const double den = phi.divergence(cloud, a, b);
        if (!(den >= 1e-12)) return;
        const double ratio = functional_bregman(f, cloud, a, b) / den;
        out.sup_ratio = std::max(out.sup_ratio, ratio);
        out.inf_ratio = std::min(out.inf_ratio, ratio);
        ++out.pairs;
    };
    for (int s = 0; s < grid; ++s) {
        for (int t = s + 1; t < grid; ++t) {
            consider(curve[static_cast<std::size_t>(s)], curve[static_cast<std::size_t>(t)]);
            consider(curve[static_cast<std::size_t>(t)], curve[static_cast<std::size_t>(s)]);
        }
    }
    if (out.pairs == 0) throw InvalidArgument("smoothness_probe: every sampled pair is degenerate");
    return out;
}

/// KL(mu_hat || e^{-V}) up to the log normalizing constant of the reference:
/// int V dmu_hat minus the Kozachenko-Leonenko entropy estimate.
inline double entropy_kl_estimate(const ParticleCloud& cloud, const PointPotential& reference) {
    if (cloud.size() < 2) throw InvalidArgument("entropy_kl_estimate: need at least two particles");
    if (cloud.dim() != reference.dim()) throw ShapeError("entropy_kl_estimate: dimension mismatch");
    double potential = 0.0;
    for (Index i = 0; i < cloud.size(); ++i) potential += reference.value(cloud.row(i).transpose());
    potential /= static_cast<double>(cloud.size());
    return potential - kozachenko_leonenko_entropy(cloud);
}

}  // namespace wflow

#endif  // WFLOW_DIAGNOSTICS_HPP
