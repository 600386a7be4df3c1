#pragma once

#include "robmix/covariance.hpp"
#include "robmix/optimizer.hpp"
#include "robmix/types.hpp"

#include <optional>

namespace robmix {

// Gauss-Hermite rule for weight exp(-t^2); weights sum to sqrt(pi).
struct QuadratureRule {
    VectorXd nodes;
    VectorXd weights;
    int order() const { return static_cast<int>(nodes.size()); }
};

// Golub-Welsch nodes/weights, 1 <= K <= 100.
QuadratureRule gh_rule(int K);

// log f(y | u) for a single Bernoulli observation with logit link,
// numerically stable in the linear predictor.
double logistic_loglik_term(int y, double linear_predictor);
double logistic_conditional_logdensity(int y, const VectorXd& x, const VectorXd& z,
                                       const VectorXd& beta, const VectorXd& u);

// log of the group marginal density: one q-dimensional integral over the
// random effect, adaptive Gauss-Hermite centered at the mode of the
// integrand (inner Newton). Supports q in {1, 2}.
double logistic_marginal_logdensity(const Group& group, const VectorXd& beta, const MatrixXd& G,
                                    const QuadratureRule& rule);

// log f(y) for every outcome y in {0,1}^m (index bit j = observation j),
// evaluated on a shared prior-standardized Gauss-Hermite grid.
VectorXd logistic_outcome_logdensities(const Group& group, const VectorXd& beta, const MatrixXd& G,
                                       const QuadratureRule& rule);

double logistic_mle_loss(const GroupedDataset& data, const ModelSpec& spec,
                         const ParameterPoint& point, const QuadratureRule& rule);

struct LogisticMdpdeOptions {
    int max_exact_m = 12;          // exact outcome enumeration cutoff
    bool allow_monte_carlo = false;
    int mc_samples = 100000;
    std::uint64_t mc_seed = 0;
};

double logistic_mdpde_loss(const GroupedDataset& data, const ModelSpec& spec,
                           const ParameterPoint& point, double alpha, const QuadratureRule& rule,
                           const LogisticMdpdeOptions& opts = {});

// Monte-Carlo estimate of the power-enumeration term with its standard
// error, for groups too large for exact enumeration.
struct McTermEstimate {
    double value = 0.0;
    double se = 0.0;
};
McTermEstimate logistic_mdpde_power_term_mc(const Group& group, const VectorXd& beta,
                                            const MatrixXd& G, double alpha,
                                            const QuadratureRule& rule, int samples,
                                            std::uint64_t seed, std::uint64_t stream);

ObjectiveHandle logistic_objective_handle(const GroupedDataset& data, const ModelSpec& spec,
                                          const EstimatorSpec& estimator,
                                          const QuadratureRule& rule,
                                          const LogisticMdpdeOptions& opts = {});

ParameterPoint logistic_default_init(const GroupedDataset& data, const ModelSpec& spec);

FitResult fit_logistic(const GroupedDataset& data, const ModelSpec& spec,
                       const EstimatorSpec& estimator,
                       const std::optional<ParameterPoint>& init, const QuadratureRule& rule,
                       const MinimizeOptions& opts = {}, int n_starts = 1,
                       const LogisticMdpdeOptions& mdpde_opts = {});

}  // namespace robmix
