#ifndef WFLOW_DETAIL_LINALG_HPP
#define WFLOW_DETAIL_LINALG_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "wflow/error.hpp"

namespace wflow::detail {

inline bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol = 1e-10) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

/// Throws NotPositiveDefinite unless `m` is square, symmetric and has
/// strictly positive eigenvalues.
inline void require_spd(const Eigen::MatrixXd& m, const std::string& what) {
    if (m.rows() == 0 || m.rows() != m.cols())
        throw NotPositiveDefinite(what + ": matrix must be square and nonempty");
    if (!m.allFinite()) throw NotPositiveDefinite(what + ": non-finite entries");
    if (!is_symmetric(m)) throw NotPositiveDefinite(what + ": matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0))
        throw NotPositiveDefinite(what + ": matrix is not positive definite");
}

inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const std::string& what) {
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrize(m));
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite(what + ": Cholesky factorization failed");
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    return symmetrize(inv);
}

/// Symmetric square root via eigendecomposition; eigenvalues are clamped at
/// `floor` before the root is taken.
inline Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m, double floor = 1e-14) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m));
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace wflow::detail

#endif  // WFLOW_DETAIL_LINALG_HPP
