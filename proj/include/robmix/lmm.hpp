#pragma once

#include "robmix/covariance.hpp"
#include "robmix/optimizer.hpp"
#include "robmix/types.hpp"

#include <optional>

namespace robmix {

// Loss value plus gradient for the linear mixed model, averaged over groups.
// The gradient stacks beta first, then the variance coordinates in the
// requested scale (sigma0^2 direction first).
struct LmmEval {
    double loss = 0.0;
    VectorXd grad;
};

LmmEval lmm_eval(const GroupedDataset& data, const ModelSpec& spec, const ParameterPoint& point,
                 const EstimatorSpec& estimator, EtaScale scale, bool with_grad);

double lmm_mle_loss(const GroupedDataset& data, const ModelSpec& spec, const ParameterPoint& point);
VectorXd lmm_mle_score_beta(const GroupedDataset& data, const ModelSpec& spec,
                            const ParameterPoint& point);
VectorXd lmm_mle_score_eta(const GroupedDataset& data, const ModelSpec& spec,
                           const ParameterPoint& point,
                           EtaScale scale = EtaScale::Unconstrained);

double lmm_mdpde_loss(const GroupedDataset& data, const ModelSpec& spec,
                      const ParameterPoint& point, double alpha);
VectorXd lmm_mdpde_score_beta(const GroupedDataset& data, const ModelSpec& spec,
                              const ParameterPoint& point, double alpha);
VectorXd lmm_mdpde_score_eta(const GroupedDataset& data, const ModelSpec& spec,
                             const ParameterPoint& point, double alpha,
                             EtaScale scale = EtaScale::Unconstrained);

// Objective over the unconstrained parameter vector for the selected loss.
ObjectiveHandle lmm_objective_handle(const GroupedDataset& data, const ModelSpec& spec,
                                     const EstimatorSpec& estimator);

// OLS-based starting point: beta from stacked least squares, sigma0^2 from
// the OLS residual variance, G = 0.1 I.
ParameterPoint lmm_default_init(const GroupedDataset& data, const ModelSpec& spec);

FitResult fit_lmm(const GroupedDataset& data, const ModelSpec& spec,
                  const EstimatorSpec& estimator,
                  const std::optional<ParameterPoint>& init = std::nullopt,
                  const MinimizeOptions& opts = {}, int n_starts = 1);

}  // namespace robmix
