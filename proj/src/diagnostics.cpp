#include "robmix/diagnostics.hpp"

#include "robmix/covariance.hpp"
#include "robmix/linalg.hpp"
#include "robmix/lmm.hpp"
#include "robmix/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <vector>

namespace robmix {

namespace {

constexpr double kPsdSlackFactor = 1e-8;  // eigenvalues >= -slack*lambda_max count as nonnegative
constexpr int kKroneckerMaxM = 6;

MatrixXd kronecker(const MatrixXd& A, const MatrixXd& B) {
    MatrixXd out(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
        }
    }
    return out;
}

VectorXd vec(const MatrixXd& A) {
    return Eigen::Map<const VectorXd>(A.data(), A.size());
}

double min_eigenvalue_sym(const MatrixXd& M) {
    const MatrixXd sym = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double max_eigenvalue_sym(const MatrixXd& M) {
    const MatrixXd sym = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

bool psd_with_slack(const MatrixXd& M, double* min_eig_out) {
    const double lo = min_eigenvalue_sym(M);
    const double hi = max_eigenvalue_sym(M);
    if (min_eig_out) *min_eig_out = lo;
    return lo >= -kPsdSlackFactor * std::max(std::abs(hi), 1.0);
}

// Per-draw sample of (1/n) sum_i grad rho_i grad rho_i' with responses
// simulated at the supplied point; used by the MDPDE information estimate.
struct McGradSampler {
    const GroupedDataset& data;
    const ModelSpec& spec;
    const ParameterPoint& point;
    double alpha;
    std::vector<Eigen::LLT<MatrixXd>> llts;
    std::vector<VectorXd> means;
    GroupedDataset scratch;  // single-group container reused across draws

    McGradSampler(const GroupedDataset& data_in, const ModelSpec& spec_in,
                  const ParameterPoint& point_in, double alpha_in)
        : data(data_in), spec(spec_in), point(point_in), alpha(alpha_in) {
        const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, data.q);
        for (const Group& group : data.groups) {
            llts.push_back(chol_spd(assemble_V(group.Z, point.sigma0_sq, G)));
            means.push_back(group.X * point.beta);
        }
        scratch.m = data.m;
        scratch.p = data.p;
        scratch.q = data.q;
        scratch.groups.resize(1);
    }

    MatrixXd sample(CounterRng& rng) {
        const int dim = data.p + 1 + static_cast<int>(point.g_params.size());
        MatrixXd acc = MatrixXd::Zero(dim, dim);
        for (int i = 0; i < data.n(); ++i) {
            VectorXd z(data.m);
            for (int r = 0; r < data.m; ++r) z(r) = rng.next_gaussian();
            scratch.groups[0] = data.groups[i];
            scratch.groups[0].y = means[i] + MatrixXd(llts[i].matrixL()) * z;
            const LmmEval ev = lmm_eval(scratch, spec, point, EstimatorSpec::mdpde(alpha),
                                        EtaScale::Natural, true);
            acc += ev.grad * ev.grad.transpose();
        }
        return acc / data.n();
    }
};

}  // namespace

std::string AssumptionReport::summary() const {
    char buf[160];
    if (const auto* me = std::get_if<MinEigEvidence>(&evidence)) {
        std::snprintf(buf, sizeof(buf), "%s: %s (min eigenvalue %.6g, mc se %.3g, draws %d)",
                      name.c_str(), holds ? "holds" : "violated", me->min_eigenvalue, me->mc_se,
                      draws);
    } else if (const auto* re = std::get_if<RankEvidence>(&evidence)) {
        std::snprintf(buf, sizeof(buf), "%s: %s (rank %d of %d)", name.c_str(),
                      holds ? "holds" : "violated", re->rank, re->expected);
    } else {
        const auto& ve = std::get<ViolationEvidence>(evidence);
        std::snprintf(buf, sizeof(buf), "%s: %s (violations %d of %d, draws %d)", name.c_str(),
                      holds ? "holds" : "violated", ve.violations, ve.checked, draws);
    }
    return buf;
}

MatrixXd mle_information_lmm(const GroupedDataset& data, const ModelSpec& spec,
                             const ParameterPoint& point) {
    if (spec.family != Family::GaussianIdentity) {
        throw std::invalid_argument("mle_information_lmm requires the gaussian family");
    }
    const int p = data.p;
    const int n_eta = 1 + static_cast<int>(point.g_params.size());
    const int dim = p + n_eta;
    const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, data.q);

    MatrixXd info = MatrixXd::Zero(dim, dim);
    for (const Group& group : data.groups) {
        const Eigen::LLT<MatrixXd> llt = chol_spd(assemble_V(group.Z, point.sigma0_sq, G));
        const MatrixXd half_x = llt.matrixL().solve(group.X);
        info.topLeftCorner(p, p) += half_x.transpose() * half_x;

        const std::vector<MatrixXd> U = v_derivatives_natural(group.Z, point, spec);
        std::vector<MatrixXd> S;
        S.reserve(U.size());
        for (const MatrixXd& Uj : U) {
            S.push_back(llt.solve(Uj));
        }
        for (int j = 0; j < n_eta; ++j) {
            for (int k = j; k < n_eta; ++k) {
                const double val = 0.5 * (S[j] * S[k]).trace();
                info(p + j, p + k) += val;
                if (k != j) info(p + k, p + j) += val;
            }
        }
    }
    info /= data.n();
    return 0.5 * (info + info.transpose());
}

McInformation mdpde_information_lmm(const GroupedDataset& data, const ModelSpec& spec,
                                    const ParameterPoint& point, double alpha, int mc_draws,
                                    std::uint64_t seed) {
    if (mc_draws < 2) {
        throw InsufficientDraws("mdpde_information_lmm needs at least 2 draws");
    }
    McGradSampler sampler(data, spec, point, alpha);
    const int dim = data.p + 1 + static_cast<int>(point.g_params.size());

    MatrixXd sum = MatrixXd::Zero(dim, dim);
    MatrixXd sum_sq = MatrixXd::Zero(dim, dim);
    {
        CounterRng rng(seed, CounterRng::substream(0, 0, StreamRole::McDraws));
        for (int t = 0; t < mc_draws; ++t) {
            const MatrixXd a = sampler.sample(rng);
            sum += a;
            sum_sq += a.cwiseProduct(a);
        }
    }

    McInformation out;
    out.draws = mc_draws;
    out.matrix = sum / mc_draws;
    out.entry_se = ((sum_sq / mc_draws - out.matrix.cwiseProduct(out.matrix)).cwiseMax(0.0) /
                    mc_draws)
                       .cwiseSqrt();

    const MatrixXd sym = 0.5 * (out.matrix + out.matrix.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    int min_idx = 0;
    es.eigenvalues().minCoeff(&min_idx);
    out.lambda_min = es.eigenvalues()(min_idx);
    const VectorXd v = es.eigenvectors().col(min_idx);

    // Delta-method SE of the smallest eigenvalue via a deterministic replay.
    double s = 0.0;
    double s_sq = 0.0;
    {
        CounterRng rng(seed, CounterRng::substream(0, 0, StreamRole::McDraws));
        for (int t = 0; t < mc_draws; ++t) {
            const double quad = v.dot(sampler.sample(rng) * v);
            s += quad;
            s_sq += quad * quad;
        }
    }
    const double mean = s / mc_draws;
    const double var = std::max(0.0, s_sq / mc_draws - mean * mean);
    out.lambda_min_se = std::sqrt(var / mc_draws);
    return out;
}

MatrixXd mdpde_beta_information_closed_form(const GroupedDataset& data, const ModelSpec& spec,
                                            const ParameterPoint& point, double alpha) {
    const int m = data.m;
    const int p = data.p;
    const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, data.q);
    const double log_l2 = std::log1p(1.0 / alpha) - 0.5 * m * alpha * std::log(2.0 * M_PI);

    MatrixXd info = MatrixXd::Zero(p, p);
    for (const Group& group : data.groups) {
        const Eigen::LLT<MatrixXd> llt = chol_spd(assemble_V(group.Z, point.sigma0_sq, G));
        const double logdet = logdet_from_llt(llt);
        const double scale = std::exp(2.0 * std::log(alpha) + 2.0 * log_l2 - alpha * logdet -
                                      (1.0 + 0.5 * m) * std::log1p(2.0 * alpha));
        const MatrixXd half_x = llt.matrixL().solve(group.X);
        info += scale * (half_x.transpose() * half_x);
    }
    return info / data.n();
}

AssumptionReport check_B1(const GroupedDataset& data, const ModelSpec& spec,
                          const ParameterPoint& point) {
    const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, data.q);
    bool all_pd = true;
    for (const Group& group : data.groups) {
        try {
            chol_spd(assemble_V(group.Z, point.sigma0_sq, G));
        } catch (const DegenerateCovariance&) {
            all_pd = false;
            break;
        }
    }
    MatrixXd X(data.total_observations(), data.p);
    long row = 0;
    for (const Group& group : data.groups) {
        X.middleRows(row, data.m) = group.X;
        row += data.m;
    }
    const int rank = matrix_rank(X);

    AssumptionReport report;
    report.name = "B.1";
    report.holds = all_pd && rank == data.p;
    report.evidence = RankEvidence{rank, data.p};
    return report;
}

AssumptionReport check_B3(const GroupedDataset& data, const ModelSpec& spec,
                          const ParameterPoint& point, double alpha, int n_probe,
                          std::uint64_t seed) {
    const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, data.q);
    const int probes = std::max(1, n_probe);
    CounterRng rng(seed, CounterRng::substream(0, 0, StreamRole::Probe));

    int violations = 0;
    int checked = 0;
    for (int t = 0; t < probes; ++t) {
        VectorXd beta = point.beta;
        if (t > 0) {
            for (int j = 0; j < beta.size(); ++j) {
                beta(j) += 0.5 * rng.next_gaussian();
            }
        }
        for (const Group& group : data.groups) {
            const Eigen::LLT<MatrixXd> llt = chol_spd(assemble_V(group.Z, point.sigma0_sq, G));
            const VectorXd resid = group.y - group.X * beta;
            const VectorXd d = llt.solve(resid);
            const MatrixXd half_x = llt.matrixL().solve(group.X);
            const VectorXd xd = group.X.transpose() * d;
            const MatrixXd M =
                half_x.transpose() * half_x - alpha * (xd * xd.transpose());
            ++checked;
            if (!psd_with_slack(M, nullptr)) {
                ++violations;
            }
        }
    }

    AssumptionReport report;
    report.name = "B.3";
    report.holds = violations == 0;
    report.evidence = ViolationEvidence{violations, checked};
    report.draws = probes;
    return report;
}

AssumptionReport check_B4(const MatrixXd& V) {
    const int m = static_cast<int>(V.rows());
    if (m > kKroneckerMaxM) {
        throw std::invalid_argument("check_B4 is restricted to m <= 6");
    }
    const Eigen::LLT<MatrixXd> llt = chol_spd(V);
    const MatrixXd v_inv = llt.solve(MatrixXd::Identity(m, m));
    const MatrixXd M = (kronecker(v_inv, v_inv) * vec(V)) * vec(v_inv).transpose();

    AssumptionReport report;
    report.name = "B.4";
    MinEigEvidence ev;
    report.holds = psd_with_slack(M, &ev.min_eigenvalue);
    report.evidence = ev;
    return report;
}

AssumptionReport check_B4(const GroupedDataset& data, const ModelSpec& spec,
                          const ParameterPoint& point) {
    const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, data.q);
    AssumptionReport report;
    report.name = "B.4";
    report.holds = true;
    MinEigEvidence ev;
    ev.min_eigenvalue = std::numeric_limits<double>::infinity();
    for (const Group& group : data.groups) {
        const AssumptionReport r = check_B4(assemble_V(group.Z, point.sigma0_sq, G));
        report.holds = report.holds && r.holds;
        ev.min_eigenvalue =
            std::min(ev.min_eigenvalue, std::get<MinEigEvidence>(r.evidence).min_eigenvalue);
    }
    report.evidence = ev;
    return report;
}

AssumptionReport check_B5(const GroupedDataset& data, const ModelSpec& spec,
                          const ParameterPoint& point, double alpha, int mc_draws,
                          std::uint64_t seed) {
    if (mc_draws <= 0) {
        throw InsufficientDraws("check_B5 needs a positive number of Monte-Carlo draws");
    }
    const int m = data.m;
    if (m > kKroneckerMaxM) {
        throw std::invalid_argument("check_B5 is restricted to m <= 6");
    }
    const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, data.q);
    std::vector<Eigen::LLT<MatrixXd>> llts;
    for (const Group& group : data.groups) {
        llts.push_back(chol_spd(assemble_V(group.Z, point.sigma0_sq, G)));
    }

    const int dim = m * m;
    auto sample = [&](CounterRng& rng) {
        MatrixXd acc = MatrixXd::Zero(dim, dim);
        for (int i = 0; i < data.n(); ++i) {
            VectorXd z(m);
            for (int r = 0; r < m; ++r) z(r) = rng.next_gaussian();
            const VectorXd resid = MatrixXd(llts[i].matrixL()) * z;  // y - X beta at the point
            const VectorXd d = llts[i].solve(resid);
            const double w = std::exp(-alpha * resid.dot(d));
            const MatrixXd dd = d * d.transpose();
            acc += w * kronecker(dd, dd);
        }
        return MatrixXd(acc / data.n());
    };

    // Every sample dd' (x) dd' = (d (x) d)(d (x) d)' annihilates the
    // antisymmetric directions of R^{m^2}, so the full matrix is structurally
    // singular for m >= 2. Positive definiteness is assessed on the symmetric
    // subspace, spanned by the duplication basis.
    const int sym_dim = m * (m + 1) / 2;
    MatrixXd basis = MatrixXd::Zero(dim, sym_dim);
    {
        int col = 0;
        for (int j = 0; j < m; ++j) {
            for (int i = j; i < m; ++i, ++col) {
                basis(j * m + i, col) = 1.0;
                basis(i * m + j, col) = 1.0;
                if (i == j) basis(i * m + i, col) = 1.0;
            }
        }
        for (int c = 0; c < sym_dim; ++c) basis.col(c).normalize();
    }

    MatrixXd sum = MatrixXd::Zero(dim, dim);
    {
        CounterRng rng(seed, CounterRng::substream(0, 0, StreamRole::McDraws));
        for (int t = 0; t < mc_draws; ++t) sum += sample(rng);
    }
    const MatrixXd mean = sum / mc_draws;
    const MatrixXd reduced = basis.transpose() * (0.5 * (mean + mean.transpose())) * basis;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (reduced + reduced.transpose()));
    int min_idx = 0;
    es.eigenvalues().minCoeff(&min_idx);
    const double lambda_min = es.eigenvalues()(min_idx);
    const VectorXd v = basis * es.eigenvectors().col(min_idx);

    double s = 0.0;
    double s_sq = 0.0;
    {
        CounterRng rng(seed, CounterRng::substream(0, 0, StreamRole::McDraws));
        for (int t = 0; t < mc_draws; ++t) {
            const double quad = v.dot(sample(rng) * v);
            s += quad;
            s_sq += quad * quad;
        }
    }
    const double mean_q = s / mc_draws;
    const double var = std::max(0.0, s_sq / mc_draws - mean_q * mean_q);
    const double se = std::sqrt(var / mc_draws);

    AssumptionReport report;
    report.name = "B.5";
    report.holds = lambda_min > 3.0 * se;
    report.evidence = MinEigEvidence{lambda_min, se};
    report.draws = mc_draws;
    return report;
}

}  // namespace robmix
