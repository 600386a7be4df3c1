#include "robmix/linalg.hpp"

#include <Eigen/QR>

#include <cmath>

namespace robmix {

Eigen::LLT<MatrixXd> chol_spd(const MatrixXd& V) {
    Eigen::LLT<MatrixXd> llt(V);
    if (llt.info() == Eigen::Success) {
        return llt;
    }
    // One jittered retry, then give up.
    const double jitter = 1e-10 * V.trace() / static_cast<double>(V.rows());
    MatrixXd Vj = V;
    Vj.diagonal().array() += jitter;
    llt.compute(Vj);
    if (llt.info() == Eigen::Success) {
        return llt;
    }
    throw DegenerateCovariance("Cholesky factorization failed (matrix not positive definite)");
}

double logdet_from_llt(const Eigen::LLT<MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double mvn_logpdf_llt(const VectorXd& y, const VectorXd& mean, const Eigen::LLT<MatrixXd>& llt) {
    static const double log2pi = std::log(2.0 * M_PI);
    const double m = static_cast<double>(y.size());
    const VectorXd half = llt.matrixL().solve(y - mean);
    return -0.5 * m * log2pi - 0.5 * logdet_from_llt(llt) - 0.5 * half.squaredNorm();
}

double mvn_logpdf(const VectorXd& y, const VectorXd& mean, const MatrixXd& V) {
    return mvn_logpdf_llt(y, mean, chol_spd(V));
}

double mahalanobis_sq_llt(const VectorXd& y, const VectorXd& mean, const Eigen::LLT<MatrixXd>& llt) {
    const VectorXd half = llt.matrixL().solve(y - mean);
    return half.squaredNorm();
}

double mahalanobis_sq(const VectorXd& y, const VectorXd& mean, const MatrixXd& V) {
    return mahalanobis_sq_llt(y, mean, chol_spd(V));
}

int matrix_rank(const MatrixXd& A) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
    return static_cast<int>(qr.rank());
}

}  // namespace robmix
