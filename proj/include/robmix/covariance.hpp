#pragma once

#include "robmix/types.hpp"

#include <vector>

namespace robmix {

// Coordinate system for variance-component gradients. Natural follows the
// model parameterization (sigma0^2 first, then per-structure G parameters);
// Unconstrained is the optimizer space (log sigma0^2, log-diagonal /
// log-Cholesky for G).
enum class EtaScale { Natural, Unconstrained };

int g_param_dim(CovStructure structure, int q);

// Builds the q x q random-effect covariance from g_params. DiagonalG expects
// positive variances on the diagonal; FullG expects log-Cholesky parameters.
MatrixXd assemble_G(const VectorXd& g_params, CovStructure structure, int q);

// Inverse of assemble_G: recovers g_params from an SPD matrix.
VectorXd extract_g_params(const MatrixXd& G, CovStructure structure);

// V = sigma0^2 I_m + Z G Z'.
MatrixXd assemble_V(const MatrixXd& Z, double sigma0_sq, const MatrixXd& G);

// --- unconstrained reparameterization -------------------------------------

int unconstrained_dim(const ModelSpec& spec);
int eta_dim(const ModelSpec& spec);  // variance coordinates only

VectorXd to_unconstrained(const ParameterPoint& point, const ModelSpec& spec);
ParameterPoint from_unconstrained(const VectorXd& u, const ModelSpec& spec);

// dV/d(tau_k) for each unconstrained variance coordinate tau_k, for one
// group's Z. Gaussian family puts the log sigma0^2 direction first.
std::vector<MatrixXd> v_derivatives_unconstrained(const MatrixXd& Z,
                                                  const ParameterPoint& point,
                                                  const ModelSpec& spec);

// dV/d(sigma_r^2) in the natural indexing: r = 0 is sigma0^2 (U = I_m), then
// one direction per G parameter (diagonal entries, or the lower triangle of G
// in column-major order for FullG).
std::vector<MatrixXd> v_derivatives_natural(const MatrixXd& Z,
                                            const ParameterPoint& point,
                                            const ModelSpec& spec);

}  // namespace robmix
