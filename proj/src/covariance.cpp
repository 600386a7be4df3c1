#include "robmix/covariance.hpp"

#include "robmix/linalg.hpp"

#include <cmath>

namespace robmix {

namespace {

// Lower-triangular Cholesky factor from FullG log-Cholesky parameters,
// column-major lower triangle with log-transformed diagonal.
MatrixXd cholesky_factor_from_params(const VectorXd& g_params, int q) {
    MatrixXd L = MatrixXd::Zero(q, q);
    int idx = 0;
    for (int j = 0; j < q; ++j) {
        for (int i = j; i < q; ++i) {
            L(i, j) = (i == j) ? std::exp(g_params(idx)) : g_params(idx);
            ++idx;
        }
    }
    return L;
}

}  // namespace

int g_param_dim(CovStructure structure, int q) {
    return structure == CovStructure::DiagonalG ? q : q * (q + 1) / 2;
}

MatrixXd assemble_G(const VectorXd& g_params, CovStructure structure, int q) {
    if (g_params.size() != g_param_dim(structure, q)) {
        throw std::invalid_argument("assemble_G: g_params length does not match structure");
    }
    if (structure == CovStructure::DiagonalG) {
        for (int r = 0; r < q; ++r) {
            if (!std::isfinite(g_params(r)) || !(g_params(r) > 0.0)) {
                throw DegenerateCovariance("assemble_G: non-positive diagonal variance");
            }
        }
        return g_params.asDiagonal();
    }
    const MatrixXd L = cholesky_factor_from_params(g_params, q);
    if (!L.allFinite()) {
        throw DegenerateCovariance("assemble_G: non-finite Cholesky factor");
    }
    return L * L.transpose();
}

VectorXd extract_g_params(const MatrixXd& G, CovStructure structure) {
    const int q = static_cast<int>(G.rows());
    if (structure == CovStructure::DiagonalG) {
        VectorXd g(q);
        for (int r = 0; r < q; ++r) {
            if (!(G(r, r) > 0.0)) {
                throw DegenerateCovariance("extract_g_params: non-positive variance");
            }
            g(r) = G(r, r);
        }
        return g;
    }
    const MatrixXd L = chol_spd(G).matrixL();
    VectorXd g(g_param_dim(structure, q));
    int idx = 0;
    for (int j = 0; j < q; ++j) {
        for (int i = j; i < q; ++i) {
            g(idx++) = (i == j) ? std::log(L(i, j)) : L(i, j);
        }
    }
    return g;
}

MatrixXd assemble_V(const MatrixXd& Z, double sigma0_sq, const MatrixXd& G) {
    if (Z.cols() != G.rows() || G.rows() != G.cols()) {
        throw std::invalid_argument("assemble_V: dimension mismatch between Z and G");
    }
    if (!(sigma0_sq > 0.0)) {
        throw std::invalid_argument("assemble_V: sigma0_sq must be positive");
    }
    MatrixXd V = Z * G * Z.transpose();
    V.diagonal().array() += sigma0_sq;
    // Symmetrize away the round-off from the Z G Z' product.
    V = 0.5 * (V + V.transpose()).eval();
    return V;
}

int eta_dim(const ModelSpec& spec) {
    const int g_dim = g_param_dim(spec.cov_structure, spec.dims.q);
    return (spec.family == Family::GaussianIdentity ? 1 : 0) + g_dim;
}

int unconstrained_dim(const ModelSpec& spec) {
    return spec.dims.p + eta_dim(spec);
}

VectorXd to_unconstrained(const ParameterPoint& point, const ModelSpec& spec) {
    const int p = spec.dims.p;
    VectorXd u(unconstrained_dim(spec));
    u.head(p) = point.beta;
    int off = p;
    if (spec.family == Family::GaussianIdentity) {
        if (!(point.sigma0_sq > 0.0)) {
            throw std::invalid_argument("to_unconstrained: sigma0_sq must be positive");
        }
        u(off++) = std::log(point.sigma0_sq);
    }
    if (spec.cov_structure == CovStructure::DiagonalG) {
        for (int r = 0; r < point.g_params.size(); ++r) {
            if (!(point.g_params(r) > 0.0)) {
                throw std::invalid_argument("to_unconstrained: diagonal G variance must be positive");
            }
            u(off++) = std::log(point.g_params(r));
        }
    } else {
        u.tail(point.g_params.size()) = point.g_params;  // already log-Cholesky
    }
    return u;
}

ParameterPoint from_unconstrained(const VectorXd& u, const ModelSpec& spec) {
    const int p = spec.dims.p;
    if (u.size() != unconstrained_dim(spec)) {
        throw std::invalid_argument("from_unconstrained: wrong vector length");
    }
    ParameterPoint point;
    point.beta = u.head(p);
    int off = p;
    if (spec.family == Family::GaussianIdentity) {
        point.sigma0_sq = std::exp(u(off++));
    }
    const int g_dim = g_param_dim(spec.cov_structure, spec.dims.q);
    point.g_params.resize(g_dim);
    if (spec.cov_structure == CovStructure::DiagonalG) {
        for (int r = 0; r < g_dim; ++r) {
            point.g_params(r) = std::exp(u(off + r));
        }
    } else {
        point.g_params = u.segment(off, g_dim);
    }
    return point;
}

std::vector<MatrixXd> v_derivatives_unconstrained(const MatrixXd& Z,
                                                  const ParameterPoint& point,
                                                  const ModelSpec& spec) {
    const int m = static_cast<int>(Z.rows());
    const int q = spec.dims.q;
    std::vector<MatrixXd> derivs;
    derivs.reserve(eta_dim(spec));
    if (spec.family == Family::GaussianIdentity) {
        derivs.push_back(point.sigma0_sq * MatrixXd::Identity(m, m));
    }
    if (spec.cov_structure == CovStructure::DiagonalG) {
        for (int r = 0; r < q; ++r) {
            const VectorXd zr = Z.col(r);
            derivs.push_back(point.g_params(r) * (zr * zr.transpose()));
        }
    } else {
        const MatrixXd L = cholesky_factor_from_params(point.g_params, q);
        for (int j = 0; j < q; ++j) {
            for (int i = j; i < q; ++i) {
                MatrixXd dL = MatrixXd::Zero(q, q);
                dL(i, j) = (i == j) ? L(i, j) : 1.0;  // chain rule through exp on diagonal
                const MatrixXd dG = dL * L.transpose() + L * dL.transpose();
                derivs.push_back(Z * dG * Z.transpose());
            }
        }
    }
    return derivs;
}

std::vector<MatrixXd> v_derivatives_natural(const MatrixXd& Z,
                                            const ParameterPoint& point,
                                            const ModelSpec& spec) {
    const int m = static_cast<int>(Z.rows());
    const int q = spec.dims.q;
    std::vector<MatrixXd> derivs;
    derivs.push_back(MatrixXd::Identity(m, m));  // sigma0^2 direction
    if (spec.cov_structure == CovStructure::DiagonalG) {
        for (int r = 0; r < q; ++r) {
            const VectorXd zr = Z.col(r);
            derivs.push_back(zr * zr.transpose());
        }
    } else {
        for (int j = 0; j < q; ++j) {
            for (int i = j; i < q; ++i) {
                const VectorXd zi = Z.col(i);
                const VectorXd zj = Z.col(j);
                if (i == j) {
                    derivs.push_back(zj * zj.transpose());
                } else {
                    derivs.push_back(zi * zj.transpose() + zj * zi.transpose());
                }
            }
        }
    }
    return derivs;
}

}  // namespace robmix
