#pragma once

#include "robmix/types.hpp"

#include <string>
#include <variant>

namespace robmix {

struct MinEigEvidence {
    double min_eigenvalue = 0.0;
    double mc_se = 0.0;  // zero for deterministic checks
};

struct RankEvidence {
    int rank = 0;
    int expected = 0;
};

struct ViolationEvidence {
    int violations = 0;
    int checked = 0;
};

struct AssumptionReport {
    std::string name;
    bool holds = false;
    std::variant<MinEigEvidence, RankEvidence, ViolationEvidence> evidence;
    int draws = 0;

    std::string summary() const;
};

// Information matrix of the MLE loss in natural coordinates (beta block
// X'V^{-1}X, variance block (1/2) tr(V^{-1}U_j V^{-1}U_k)), averaged over
// groups. Block-diagonal across the beta/eta split.
MatrixXd mle_information_lmm(const GroupedDataset& data, const ModelSpec& spec,
                             const ParameterPoint& point);

struct McInformation {
    MatrixXd matrix;     // Monte-Carlo estimate of E[grad rho grad rho']
    MatrixXd entry_se;   // per-entry Monte-Carlo standard errors
    double lambda_min = 0.0;
    double lambda_min_se = 0.0;
    int draws = 0;
};

// Monte-Carlo generalized information matrix for the MDPDE, simulating
// responses at (beta, eta) and using the analytic per-group gradient.
McInformation mdpde_information_lmm(const GroupedDataset& data, const ModelSpec& spec,
                                    const ParameterPoint& point, double alpha, int mc_draws,
                                    std::uint64_t seed);

// Closed form of the beta-beta block of the MDPDE information:
// alpha^2 L2^2 |V|^{-alpha} (1+2 alpha)^{-(1+m/2)} X'V^{-1}X, group-averaged.
MatrixXd mdpde_beta_information_closed_form(const GroupedDataset& data, const ModelSpec& spec,
                                            const ParameterPoint& point, double alpha);

// V positive definite for every group and stacked X of full column rank.
AssumptionReport check_B1(const GroupedDataset& data, const ModelSpec& spec,
                          const ParameterPoint& point);

// Per-group PSD test of X'V^{-1}X - alpha X'd d'X at the supplied beta and
// n_probe - 1 additional probe points in a ball around it.
AssumptionReport check_B3(const GroupedDataset& data, const ModelSpec& spec,
                          const ParameterPoint& point, double alpha, int n_probe,
                          std::uint64_t seed = 0);

// PSD of the symmetric part of (V^{-1} (x) V^{-1}) vec(V) vec(V^{-1})'.
AssumptionReport check_B4(const MatrixXd& V);
AssumptionReport check_B4(const GroupedDataset& data, const ModelSpec& spec,
                          const ParameterPoint& point);

// Monte-Carlo PD check of E[ exp(-alpha r'V^{-1}r) dd' (x) dd' ] at the
// supplied point, with a 3-SE confidence verdict on the smallest eigenvalue.
AssumptionReport check_B5(const GroupedDataset& data, const ModelSpec& spec,
                          const ParameterPoint& point, double alpha, int mc_draws,
                          std::uint64_t seed = 0);

}  // namespace robmix
