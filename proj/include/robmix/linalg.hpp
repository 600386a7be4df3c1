#pragma once

#include "robmix/types.hpp"

#include <Eigen/Cholesky>

namespace robmix {

// Cholesky factorization of a symmetric positive-definite matrix. On failure
// retries once with +1e-10*trace(V)/m jitter on the diagonal, then throws
// DegenerateCovariance.
Eigen::LLT<MatrixXd> chol_spd(const MatrixXd& V);

double logdet_from_llt(const Eigen::LLT<MatrixXd>& llt);

// log N(y; mean, V), computed from a Cholesky factor of V.
double mvn_logpdf(const VectorXd& y, const VectorXd& mean, const MatrixXd& V);
double mvn_logpdf_llt(const VectorXd& y, const VectorXd& mean, const Eigen::LLT<MatrixXd>& llt);

// (y-mean)' V^{-1} (y-mean) via Cholesky solve.
double mahalanobis_sq(const VectorXd& y, const VectorXd& mean, const MatrixXd& V);
double mahalanobis_sq_llt(const VectorXd& y, const VectorXd& mean, const Eigen::LLT<MatrixXd>& llt);

// Numerical column rank via column-pivoted QR.
int matrix_rank(const MatrixXd& A);

}  // namespace robmix
