#pragma once

#include "robmix/rng.hpp"
#include "robmix/simulate.hpp"
#include "robmix/types.hpp"

#include <cmath>

namespace robmix::testing {

inline VectorXd random_vector(CounterRng& rng, int n, double scale = 1.0) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = scale * rng.next_gaussian();
    return v;
}

inline MatrixXd random_matrix(CounterRng& rng, int rows, int cols, double scale = 1.0) {
    MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.next_gaussian();
    }
    return m;
}

inline MatrixXd random_spd(CounterRng& rng, int n, double ridge = 0.5) {
    const MatrixXd a = random_matrix(rng, n, n);
    return a * a.transpose() + ridge * MatrixXd::Identity(n, n);
}

// Simulation setup of the linear mixed model experiments: m=6, p=5, q=2,
// beta0=(1,2,4,3,3), sigma0^2=0.25, G=0.56 I.
inline SimConfig lmm_reference_config(std::uint64_t seed) {
    SimConfig config;
    config.model.family = Family::GaussianIdentity;
    config.model.cov_structure = CovStructure::DiagonalG;
    config.model.dims = {6, 5, 2};
    config.beta0 = VectorXd(5);
    config.beta0 << 1, 2, 4, 3, 3;
    config.sigma0_sq = 0.25;
    config.g_params0 = VectorXd::Constant(2, 0.56);
    config.replications = 1;
    config.seed = seed;
    return config;
}

// Logistic counterpart: m=6, p=2, q=1 random intercept, beta0=(1,2),
// sigma_u^2=0.56.
inline SimConfig logistic_reference_config(std::uint64_t seed) {
    SimConfig config;
    config.model.family = Family::BernoulliLogit;
    config.model.cov_structure = CovStructure::DiagonalG;
    config.model.dims = {6, 2, 1};
    config.beta0 = VectorXd(2);
    config.beta0 << 1, 2;
    config.g_params0 = VectorXd::Constant(1, 0.56);
    config.replications = 1;
    config.seed = seed;
    return config;
}

}  // namespace robmix::testing
