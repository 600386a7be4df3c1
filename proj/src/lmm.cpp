#include "robmix/lmm.hpp"

#include "robmix/linalg.hpp"

#include <Eigen/QR>

#include <cmath>
#include <limits>

namespace robmix {

namespace {

void require_gaussian(const ModelSpec& spec) {
    if (spec.family != Family::GaussianIdentity) {
        throw std::invalid_argument("linear mixed model operations require the gaussian family");
    }
}

// dG/d(coordinate) for each G coordinate in the requested scale. These do not
// depend on the group design, so they are assembled once per parameter point.
std::vector<MatrixXd> g_direction_matrices(const ParameterPoint& point, const ModelSpec& spec,
                                           EtaScale scale) {
    const int q = spec.dims.q;
    std::vector<MatrixXd> dirs;
    if (spec.cov_structure == CovStructure::DiagonalG) {
        dirs.reserve(q);
        for (int r = 0; r < q; ++r) {
            MatrixXd d = MatrixXd::Zero(q, q);
            d(r, r) = (scale == EtaScale::Natural) ? 1.0 : point.g_params(r);
            dirs.push_back(std::move(d));
        }
        return dirs;
    }
    // FullG: natural coordinates are the entries of G (lower triangle,
    // column-major); unconstrained coordinates are the log-Cholesky ones.
    MatrixXd L = MatrixXd::Zero(q, q);
    int idx = 0;
    for (int j = 0; j < q; ++j) {
        for (int i = j; i < q; ++i) {
            L(i, j) = (i == j) ? std::exp(point.g_params(idx)) : point.g_params(idx);
            ++idx;
        }
    }
    for (int j = 0; j < q; ++j) {
        for (int i = j; i < q; ++i) {
            MatrixXd d = MatrixXd::Zero(q, q);
            if (scale == EtaScale::Natural) {
                d(i, j) = 1.0;
                d(j, i) = 1.0;
            } else {
                MatrixXd dL = MatrixXd::Zero(q, q);
                dL(i, j) = (i == j) ? L(i, j) : 1.0;
                d = dL * L.transpose() + L * dL.transpose();
            }
            dirs.push_back(std::move(d));
        }
    }
    return dirs;
}

struct MdpdeConstants {
    double log_l1 = 0.0;  // log[(1+alpha)^{-m/2} (2*pi)^{-m*alpha/2}]
    double log_l2 = 0.0;  // log[(1+1/alpha) (2*pi)^{-m*alpha/2}]
    MdpdeConstants(double alpha, int m) {
        const double log2pi = std::log(2.0 * M_PI);
        log_l1 = -0.5 * m * std::log1p(alpha) - 0.5 * m * alpha * log2pi;
        log_l2 = std::log1p(1.0 / alpha) - 0.5 * m * alpha * log2pi;
    }
};

}  // namespace

LmmEval lmm_eval(const GroupedDataset& data, const ModelSpec& spec, const ParameterPoint& point,
                 const EstimatorSpec& estimator, EtaScale scale, bool with_grad) {
    require_gaussian(spec);
    const int m = data.m;
    const int p = data.p;
    const int q = data.q;
    const int n = data.n();
    if (n == 0) {
        throw std::invalid_argument("lmm_eval: empty dataset");
    }
    if (!(point.sigma0_sq > 0.0) || !std::isfinite(point.sigma0_sq)) {
        throw DegenerateCovariance("lmm_eval: sigma0_sq is outside (0, inf)");
    }
    const bool mdpde = estimator.kind == EstimatorKind::MDPDE;
    const double alpha = estimator.alpha;
    if (mdpde && !(alpha > 0.0)) {
        throw std::invalid_argument("lmm_eval: MDPDE requires alpha > 0");
    }

    const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, q);
    const MdpdeConstants consts(mdpde ? alpha : 1.0, m);
    const double log2pi = std::log(2.0 * M_PI);

    std::vector<MatrixXd> g_dirs;
    if (with_grad) {
        g_dirs = g_direction_matrices(point, spec, scale);
    }
    const int n_eta = 1 + static_cast<int>(point.g_params.size());

    double loss = 0.0;
    VectorXd grad;
    if (with_grad) {
        grad = VectorXd::Zero(p + n_eta);
    }

    for (const Group& group : data.groups) {
        const MatrixXd V = assemble_V(group.Z, point.sigma0_sq, G);
        const Eigen::LLT<MatrixXd> llt = chol_spd(V);
        const double logdet = logdet_from_llt(llt);
        const VectorXd resid = group.y - group.X * point.beta;
        const VectorXd half = llt.matrixL().solve(resid);
        const double maha = half.squaredNorm();
        const VectorXd d = llt.matrixL().transpose().solve(half);

        double weight_beta = 0.0;   // multiplies X'd in the beta gradient
        double weight_tr = 0.0;     // multiplies tr(V^{-1} W) in the eta gradient
        double weight_quad = 0.0;   // multiplies d' W d in the eta gradient
        if (!mdpde) {
            loss += 0.5 * (m * log2pi + logdet + maha);
            weight_beta = -1.0;
            weight_tr = 0.5;
            weight_quad = -0.5;
        } else {
            const double t1 = std::exp(consts.log_l1 - 0.5 * alpha * logdet);
            const double t2 = std::exp(consts.log_l2 - 0.5 * alpha * (logdet + maha));
            loss += t1 - t2;
            weight_beta = -alpha * t2;
            weight_tr = 0.5 * alpha * (t2 - t1);
            weight_quad = -0.5 * alpha * t2;
        }

        if (with_grad) {
            grad.head(p) += weight_beta * (group.X.transpose() * d);

            // sigma0^2 direction: W = I (natural) or sigma0^2 I (unconstrained)
            const MatrixXd Linv =
                llt.matrixL().solve(MatrixXd::Identity(m, m));
            const double tr_vinv = Linv.squaredNorm();
            const double s_scale = (scale == EtaScale::Natural) ? 1.0 : point.sigma0_sq;
            grad(p) += s_scale * (weight_tr * tr_vinv + weight_quad * d.squaredNorm());

            if (q > 0) {
                const MatrixXd A = llt.matrixL().solve(group.Z);  // L^{-1} Z
                const MatrixXd AtA = A.transpose() * A;           // Z' V^{-1} Z
                const VectorXd w = group.Z.transpose() * d;
                for (std::size_t k = 0; k < g_dirs.size(); ++k) {
                    const double tr_k = g_dirs[k].cwiseProduct(AtA).sum();
                    const double quad_k = w.dot(g_dirs[k] * w);
                    grad(p + 1 + static_cast<int>(k)) += weight_tr * tr_k + weight_quad * quad_k;
                }
            }
        }
    }

    LmmEval out;
    out.loss = loss / n;
    if (with_grad) {
        out.grad = grad / n;
    }
    return out;
}

double lmm_mle_loss(const GroupedDataset& data, const ModelSpec& spec, const ParameterPoint& point) {
    return lmm_eval(data, spec, point, EstimatorSpec::mle(), EtaScale::Natural, false).loss;
}

VectorXd lmm_mle_score_beta(const GroupedDataset& data, const ModelSpec& spec,
                            const ParameterPoint& point) {
    return lmm_eval(data, spec, point, EstimatorSpec::mle(), EtaScale::Natural, true)
        .grad.head(data.p);
}

VectorXd lmm_mle_score_eta(const GroupedDataset& data, const ModelSpec& spec,
                           const ParameterPoint& point, EtaScale scale) {
    const LmmEval ev = lmm_eval(data, spec, point, EstimatorSpec::mle(), scale, true);
    return ev.grad.tail(ev.grad.size() - data.p);
}

double lmm_mdpde_loss(const GroupedDataset& data, const ModelSpec& spec,
                      const ParameterPoint& point, double alpha) {
    return lmm_eval(data, spec, point, EstimatorSpec::mdpde(alpha), EtaScale::Natural, false).loss;
}

VectorXd lmm_mdpde_score_beta(const GroupedDataset& data, const ModelSpec& spec,
                              const ParameterPoint& point, double alpha) {
    return lmm_eval(data, spec, point, EstimatorSpec::mdpde(alpha), EtaScale::Natural, true)
        .grad.head(data.p);
}

VectorXd lmm_mdpde_score_eta(const GroupedDataset& data, const ModelSpec& spec,
                             const ParameterPoint& point, double alpha, EtaScale scale) {
    const LmmEval ev = lmm_eval(data, spec, point, EstimatorSpec::mdpde(alpha), scale, true);
    return ev.grad.tail(ev.grad.size() - data.p);
}

ObjectiveHandle lmm_objective_handle(const GroupedDataset& data, const ModelSpec& spec,
                                     const EstimatorSpec& estimator) {
    // Variance coordinates that underflow/overflow the exp transform sit on
    // the boundary of the feasible image; report +inf so the line search
    // backs off instead of aborting the fit.
    ObjectiveHandle handle;
    handle.dim = unconstrained_dim(spec);
    handle.eval = [&data, spec, estimator](const VectorXd& u) {
        try {
            const ParameterPoint point = from_unconstrained(u, spec);
            const LmmEval ev =
                lmm_eval(data, spec, point, estimator, EtaScale::Unconstrained, true);
            return std::make_pair(ev.loss, ev.grad);
        } catch (const DegenerateCovariance&) {
            return std::make_pair(std::numeric_limits<double>::infinity(),
                                  VectorXd(VectorXd::Zero(u.size())));
        }
    };
    handle.loss_only = [&data, spec, estimator](const VectorXd& u) {
        try {
            const ParameterPoint point = from_unconstrained(u, spec);
            return lmm_eval(data, spec, point, estimator, EtaScale::Unconstrained, false).loss;
        } catch (const DegenerateCovariance&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    return handle;
}

ParameterPoint lmm_default_init(const GroupedDataset& data, const ModelSpec& spec) {
    const int p = data.p;
    const long N = data.total_observations();
    MatrixXd X(N, p);
    VectorXd y(N);
    long row = 0;
    for (const Group& group : data.groups) {
        X.middleRows(row, data.m) = group.X;
        y.segment(row, data.m) = group.y;
        row += data.m;
    }
    const VectorXd beta = X.colPivHouseholderQr().solve(y);
    const double rss = (y - X * beta).squaredNorm();
    const double dof = static_cast<double>(std::max<long>(N - p, 1));

    ParameterPoint init;
    init.beta = beta;
    init.sigma0_sq = std::max(rss / dof, 1e-8);
    const MatrixXd G0 = 0.1 * MatrixXd::Identity(data.q, data.q);
    init.g_params = extract_g_params(G0, spec.cov_structure);
    return init;
}

FitResult fit_lmm(const GroupedDataset& data, const ModelSpec& spec,
                  const EstimatorSpec& estimator, const std::optional<ParameterPoint>& init,
                  const MinimizeOptions& opts, int n_starts) {
    require_gaussian(spec);
    data.validate();
    {
        MatrixXd X(data.total_observations(), data.p);
        long row = 0;
        for (const Group& group : data.groups) {
            X.middleRows(row, data.m) = group.X;
            row += data.m;
        }
        if (matrix_rank(X) < data.p) {
            throw RankDeficientDesign("fit_lmm: stacked design has rank < p");
        }
    }

    const ParameterPoint start = init ? *init : lmm_default_init(data, spec);
    const VectorXd u0 = to_unconstrained(start, spec);
    const ObjectiveHandle objective = lmm_objective_handle(data, spec, estimator);

    std::vector<VectorXd> starts{u0};
    if (n_starts >= 3) {
        // Perturb the variance coordinates only; A.3-style convexity covers beta.
        VectorXd delta = VectorXd::Zero(u0.size());
        delta.tail(eta_dim(spec)).setConstant(0.7);
        starts.push_back(u0 + delta);
        starts.push_back(u0 - delta);
    }

    MinimizeResult best;
    bool have_best = false;
    for (const VectorXd& s : starts) {
        const MinimizeResult r = minimize(objective, s, opts);
        if (!have_best || r.loss < best.loss) {
            best = r;
            have_best = true;
        }
    }

    FitResult fit;
    fit.point = from_unconstrained(best.x, spec);
    fit.loss = best.loss;
    fit.grad_norm = best.grad_norm;
    fit.iterations = best.iterations;
    fit.converged = best.converged;
    fit.termination = best.termination;
    return fit;
}

}  // namespace robmix
