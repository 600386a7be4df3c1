#include "robmix/logistic.hpp"

#include "robmix/linalg.hpp"
#include "robmix/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <limits>

namespace robmix {

namespace {

constexpr int kModeMaxIter = 50;
constexpr double kModeGradTol = 1e-10;

void require_logit(const ModelSpec& spec) {
    if (spec.family != Family::BernoulliLogit) {
        throw std::invalid_argument("logistic operations require the bernoulli-logit family");
    }
}

void require_small_q(int q) {
    if (q < 1 || q > 2) {
        throw std::invalid_argument("tensor-product quadrature supports q in {1, 2}");
    }
}

inline double sigmoid(double s) {
    if (s >= 0.0) {
        return 1.0 / (1.0 + std::exp(-s));
    }
    const double e = std::exp(s);
    return e / (1.0 + e);
}

// Joint log density of (y, u) for one group, up to the data part:
// sum_j log f(y_j | u) + log phi(u; 0, G).
struct JointLogDensity {
    const Group& group;
    const VectorXd& eta;          // X beta
    const Eigen::LLT<MatrixXd>& llt_g;
    double logdet_g;

    double operator()(const VectorXd& u) const {
        const int m = static_cast<int>(group.y.size());
        const int q = static_cast<int>(u.size());
        double acc = -0.5 * q * std::log(2.0 * M_PI) - 0.5 * logdet_g -
                     0.5 * llt_g.matrixL().solve(u).squaredNorm();
        for (int j = 0; j < m; ++j) {
            acc += logistic_loglik_term(static_cast<int>(group.y(j)),
                                        eta(j) + group.Z.row(j).dot(u));
        }
        return acc;
    }
};

// Mode and curvature of the joint log density in u (Newton with step
// halving; the objective is strictly concave).
struct ModeResult {
    VectorXd mode;
    MatrixXd precision;  // -Hessian at the mode: sum w_j z_j z_j' + G^{-1}
};

ModeResult find_conditional_mode(const Group& group, const VectorXd& eta,
                                 const Eigen::LLT<MatrixXd>& llt_g, const MatrixXd& g_inv,
                                 double logdet_g) {
    const int m = static_cast<int>(group.y.size());
    const int q = static_cast<int>(group.Z.cols());
    const JointLogDensity joint{group, eta, llt_g, logdet_g};

    VectorXd u = VectorXd::Zero(q);
    double value = joint(u);
    MatrixXd precision(q, q);
    for (int it = 0; it < kModeMaxIter; ++it) {
        VectorXd grad = -(g_inv * u);
        precision = g_inv;
        for (int j = 0; j < m; ++j) {
            const double s = eta(j) + group.Z.row(j).dot(u);
            const double mu = sigmoid(s);
            grad += (group.y(j) - mu) * group.Z.row(j).transpose();
            precision += mu * (1.0 - mu) * (group.Z.row(j).transpose() * group.Z.row(j));
        }
        if (grad.lpNorm<Eigen::Infinity>() <= kModeGradTol) {
            return {u, precision};
        }
        const VectorXd step = precision.ldlt().solve(grad);
        double scale = 1.0;
        bool moved = false;
        for (int half = 0; half < 40; ++half) {
            const VectorXd candidate = u + scale * step;
            const double cand_value = joint(candidate);
            if (std::isfinite(cand_value) && cand_value >= value - 1e-14 * std::abs(value)) {
                u = candidate;
                value = cand_value;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!moved) {
            throw InnerModeDivergence("conditional mode search stalled");
        }
    }
    throw InnerModeDivergence("conditional mode search did not converge in 50 iterations");
}

double log_sum_exp(const std::vector<double>& terms) {
    double max_term = -std::numeric_limits<double>::infinity();
    for (double t : terms) max_term = std::max(max_term, t);
    if (!std::isfinite(max_term)) return max_term;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    return max_term + std::log(acc);
}

}  // namespace

QuadratureRule gh_rule(int K) {
    if (K < 1 || K > 100) {
        throw std::invalid_argument("gh_rule: order must be in [1, 100]");
    }
    if (K == 1) {
        QuadratureRule rule;
        rule.nodes = VectorXd::Zero(1);
        rule.weights = VectorXd::Constant(1, std::sqrt(M_PI));
        return rule;
    }
    MatrixXd jacobi = MatrixXd::Zero(K, K);
    for (int i = 1; i < K; ++i) {
        const double off = std::sqrt(0.5 * i);
        jacobi(i, i - 1) = off;
        jacobi(i - 1, i) = off;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(jacobi);
    QuadratureRule rule;
    rule.nodes = es.eigenvalues();
    rule.weights.resize(K);
    const double sqrt_pi = std::sqrt(M_PI);
    for (int k = 0; k < K; ++k) {
        const double v0 = es.eigenvectors()(0, k);
        rule.weights(k) = sqrt_pi * v0 * v0;
    }
    return rule;
}

double logistic_loglik_term(int y, double s) {
    if (s > 0.0) {
        return (y - 1.0) * s - std::log1p(std::exp(-s));
    }
    return y * s - std::log1p(std::exp(s));
}

double logistic_conditional_logdensity(int y, const VectorXd& x, const VectorXd& z,
                                       const VectorXd& beta, const VectorXd& u) {
    if (y != 0 && y != 1) {
        throw std::invalid_argument("logistic response must be 0 or 1");
    }
    return logistic_loglik_term(y, x.dot(beta) + z.dot(u));
}

double logistic_marginal_logdensity(const Group& group, const VectorXd& beta, const MatrixXd& G,
                                    const QuadratureRule& rule) {
    const int q = static_cast<int>(G.rows());
    require_small_q(q);
    const int K = rule.order();

    const VectorXd eta = group.X * beta;
    const Eigen::LLT<MatrixXd> llt_g = chol_spd(G);
    const double logdet_g = logdet_from_llt(llt_g);
    const MatrixXd g_inv = llt_g.solve(MatrixXd::Identity(q, q));

    const ModeResult mode = find_conditional_mode(group, eta, llt_g, g_inv, logdet_g);
    const Eigen::LLT<MatrixXd> llt_q = chol_spd(mode.precision);
    const MatrixXd Lq = llt_q.matrixL();
    const JointLogDensity joint{group, eta, llt_g, logdet_g};

    const double sqrt2 = std::sqrt(2.0);
    std::vector<double> terms;
    if (q == 1) {
        terms.reserve(K);
        const double scale = sqrt2 / Lq(0, 0);
        for (int k = 0; k < K; ++k) {
            VectorXd u(1);
            u(0) = mode.mode(0) + scale * rule.nodes(k);
            terms.push_back(joint(u) + rule.nodes(k) * rule.nodes(k) + std::log(rule.weights(k)));
        }
    } else {
        terms.reserve(static_cast<std::size_t>(K) * K);
        for (int a = 0; a < K; ++a) {
            for (int b = 0; b < K; ++b) {
                VectorXd t(2);
                t << rule.nodes(a), rule.nodes(b);
                const VectorXd u =
                    mode.mode + sqrt2 * Lq.transpose().triangularView<Eigen::Upper>().solve(t);
                terms.push_back(joint(u) + t.squaredNorm() + std::log(rule.weights(a)) +
                                std::log(rule.weights(b)));
            }
        }
    }
    double log_det_lq = 0.0;
    for (int i = 0; i < q; ++i) log_det_lq += std::log(Lq(i, i));
    return log_sum_exp(terms) + 0.5 * q * std::log(2.0) - log_det_lq;
}

VectorXd logistic_outcome_logdensities(const Group& group, const VectorXd& beta, const MatrixXd& G,
                                       const QuadratureRule& rule) {
    const int q = static_cast<int>(G.rows());
    require_small_q(q);
    const int m = static_cast<int>(group.y.size());
    if (m > 20) {
        throw EnumerationTooLarge("outcome enumeration limited to m <= 20");
    }
    const int K = rule.order();
    const int n_nodes = (q == 1) ? K : K * K;

    // Prior-standardized grid: u = sqrt(2) L_g t, node mass w / pi^{q/2}.
    const MatrixXd Lg = chol_spd(G).matrixL();
    const VectorXd eta = group.X * beta;

    MatrixXd prob1(m, n_nodes);  // mu_j at node
    VectorXd mass(n_nodes);
    const double sqrt2 = std::sqrt(2.0);
    int node = 0;
    for (int a = 0; a < K; ++a) {
        const int b_count = (q == 1) ? 1 : K;
        for (int b = 0; b < b_count; ++b, ++node) {
            VectorXd t(q);
            t(0) = rule.nodes(a);
            if (q == 2) t(1) = rule.nodes(b);
            const VectorXd u = sqrt2 * (Lg * t);
            mass(node) = rule.weights(a) * ((q == 2) ? rule.weights(b) : 1.0) /
                         std::pow(M_PI, 0.5 * q);
            for (int j = 0; j < m; ++j) {
                prob1(j, node) = sigmoid(eta(j) + group.Z.row(j).dot(u));
            }
        }
    }

    const std::size_t n_outcomes = std::size_t{1} << m;
    VectorXd logf(static_cast<Eigen::Index>(n_outcomes));
    for (std::size_t y = 0; y < n_outcomes; ++y) {
        double acc = 0.0;
        for (int k = 0; k < n_nodes; ++k) {
            double prod = mass(k);
            for (int j = 0; j < m; ++j) {
                const double p1 = prob1(j, k);
                prod *= (y >> j & 1u) ? p1 : (1.0 - p1);
            }
            acc += prod;
        }
        logf(static_cast<Eigen::Index>(y)) = std::log(acc);
    }
    return logf;
}

double logistic_mle_loss(const GroupedDataset& data, const ModelSpec& spec,
                         const ParameterPoint& point, const QuadratureRule& rule) {
    require_logit(spec);
    const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, data.q);
    double acc = 0.0;
    for (const Group& group : data.groups) {
        acc -= logistic_marginal_logdensity(group, point.beta, G, rule);
    }
    return acc / data.n();
}

double logistic_mdpde_loss(const GroupedDataset& data, const ModelSpec& spec,
                           const ParameterPoint& point, double alpha, const QuadratureRule& rule,
                           const LogisticMdpdeOptions& opts) {
    require_logit(spec);
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("logistic_mdpde_loss: alpha must be positive");
    }
    const bool exact = data.m <= opts.max_exact_m;
    if (!exact && !opts.allow_monte_carlo) {
        throw EnumerationTooLarge(
            "exact outcome enumeration requires m <= " + std::to_string(opts.max_exact_m) +
            "; enable the Monte-Carlo fallback for larger m");
    }
    const MatrixXd G = assemble_G(point.g_params, spec.cov_structure, data.q);
    const double l2_factor = 1.0 + 1.0 / alpha;

    double acc = 0.0;
    for (int i = 0; i < data.n(); ++i) {
        const Group& group = data.groups[i];
        double power_term = 0.0;
        if (exact) {
            const VectorXd logf = logistic_outcome_logdensities(group, point.beta, G, rule);
            for (Eigen::Index y = 0; y < logf.size(); ++y) {
                power_term += std::exp((1.0 + alpha) * logf(y));
            }
        } else {
            power_term = logistic_mdpde_power_term_mc(group, point.beta, G, alpha, rule,
                                                      opts.mc_samples, opts.mc_seed,
                                                      static_cast<std::uint64_t>(i))
                             .value;
        }
        const double log_obs = logistic_marginal_logdensity(group, point.beta, G, rule);
        acc += power_term - l2_factor * std::exp(alpha * log_obs);
    }
    return acc / data.n();
}

McTermEstimate logistic_mdpde_power_term_mc(const Group& group, const VectorXd& beta,
                                            const MatrixXd& G, double alpha,
                                            const QuadratureRule& rule, int samples,
                                            std::uint64_t seed, std::uint64_t stream) {
    if (samples <= 1) {
        throw InsufficientDraws("Monte-Carlo power term needs at least 2 samples");
    }
    const int q = static_cast<int>(G.rows());
    require_small_q(q);
    const int m = static_cast<int>(group.y.size());
    const MatrixXd Lg = chol_spd(G).matrixL();
    const VectorXd eta = group.X * beta;

    // Shared prior-standardized grid, reused across samples.
    const int K = rule.order();
    const int n_nodes = (q == 1) ? K : K * K;
    MatrixXd prob1(m, n_nodes);
    VectorXd mass(n_nodes);
    const double sqrt2 = std::sqrt(2.0);
    int node = 0;
    for (int a = 0; a < K; ++a) {
        const int b_count = (q == 1) ? 1 : K;
        for (int b = 0; b < b_count; ++b, ++node) {
            VectorXd t(q);
            t(0) = rule.nodes(a);
            if (q == 2) t(1) = rule.nodes(b);
            const VectorXd u = sqrt2 * (Lg * t);
            mass(node) = rule.weights(a) * ((q == 2) ? rule.weights(b) : 1.0) /
                         std::pow(M_PI, 0.5 * q);
            for (int j = 0; j < m; ++j) {
                prob1(j, node) = sigmoid(eta(j) + group.Z.row(j).dot(u));
            }
        }
    }

    // sum_y f^{1+alpha} = E_{y ~ f}[ f(y)^alpha ], sampling y from the model.
    CounterRng rng(seed, CounterRng::substream(static_cast<std::uint32_t>(stream), 0,
                                               StreamRole::McDraws));
    double sum = 0.0;
    double sum_sq = 0.0;
    std::vector<int> y_draw(m);
    for (int s = 0; s < samples; ++s) {
        VectorXd z(q);
        for (int r = 0; r < q; ++r) z(r) = rng.next_gaussian();
        const VectorXd u = Lg * z;
        for (int j = 0; j < m; ++j) {
            const double mu = sigmoid(eta(j) + group.Z.row(j).dot(u));
            y_draw[j] = rng.next_bernoulli(mu) ? 1 : 0;
        }
        double density = 0.0;
        for (int k = 0; k < n_nodes; ++k) {
            double prod = mass(k);
            for (int j = 0; j < m; ++j) {
                prod *= y_draw[j] ? prob1(j, k) : (1.0 - prob1(j, k));
            }
            density += prod;
        }
        const double val = std::pow(density, alpha);
        sum += val;
        sum_sq += val * val;
    }
    McTermEstimate est;
    est.value = sum / samples;
    const double var = std::max(0.0, sum_sq / samples - est.value * est.value);
    est.se = std::sqrt(var / samples);
    return est;
}

ObjectiveHandle logistic_objective_handle(const GroupedDataset& data, const ModelSpec& spec,
                                          const EstimatorSpec& estimator,
                                          const QuadratureRule& rule,
                                          const LogisticMdpdeOptions& opts) {
    ObjectiveHandle handle;
    handle.dim = unconstrained_dim(spec);
    auto loss_fn = [&data, spec, estimator, rule, opts](const VectorXd& u) -> double {
        try {
            const ParameterPoint point = from_unconstrained(u, spec);
            if (estimator.kind == EstimatorKind::MLE) {
                return logistic_mle_loss(data, spec, point, rule);
            }
            return logistic_mdpde_loss(data, spec, point, estimator.alpha, rule, opts);
        } catch (const DegenerateCovariance&) {
            return std::numeric_limits<double>::infinity();
        } catch (const InnerModeDivergence&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    handle.loss_only = loss_fn;
    handle.eval = [loss_fn](const VectorXd& u) {
        const double f = loss_fn(u);
        const VectorXd g = finite_diff_gradient(loss_fn, u, 1e-6);
        return std::make_pair(f, g);
    };
    return handle;
}

ParameterPoint logistic_default_init(const GroupedDataset& data, const ModelSpec& spec) {
    ParameterPoint init;
    init.beta = VectorXd::Zero(data.p);
    init.sigma0_sq = 1.0;  // unused for the logit family
    const MatrixXd G0 = 0.5 * MatrixXd::Identity(data.q, data.q);
    init.g_params = extract_g_params(G0, spec.cov_structure);
    return init;
}

FitResult fit_logistic(const GroupedDataset& data, const ModelSpec& spec,
                       const EstimatorSpec& estimator,
                       const std::optional<ParameterPoint>& init, const QuadratureRule& rule,
                       const MinimizeOptions& opts, int n_starts,
                       const LogisticMdpdeOptions& mdpde_opts) {
    require_logit(spec);
    data.validate();
    {
        MatrixXd X(data.total_observations(), data.p);
        long row = 0;
        for (const Group& group : data.groups) {
            X.middleRows(row, data.m) = group.X;
            row += data.m;
        }
        if (matrix_rank(X) < data.p) {
            throw RankDeficientDesign("fit_logistic: stacked design has rank < p");
        }
    }

    const ParameterPoint start = init ? *init : logistic_default_init(data, spec);
    const VectorXd u0 = to_unconstrained(start, spec);
    const ObjectiveHandle objective =
        logistic_objective_handle(data, spec, estimator, rule, mdpde_opts);

    std::vector<VectorXd> starts{u0};
    if (n_starts >= 3) {
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
