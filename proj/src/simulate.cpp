#include "robmix/simulate.hpp"

#include "robmix/covariance.hpp"
#include "robmix/linalg.hpp"
#include "robmix/rng.hpp"

#include <algorithm>
#include <cmath>

namespace robmix {

namespace {

inline double sigmoid(double s) {
    if (s >= 0.0) {
        return 1.0 / (1.0 + std::exp(-s));
    }
    const double e = std::exp(s);
    return e / (1.0 + e);
}

// Shared design: intercept column, remaining columns standard normal,
// Z = first q columns of X.
void fill_design(Group& group, int m, int p, int q, CounterRng& rng) {
    group.X.resize(m, p);
    group.X.col(0).setOnes();
    for (int r = 0; r < m; ++r) {
        for (int j = 1; j < p; ++j) {
            group.X(r, j) = rng.next_gaussian();
        }
    }
    group.Z = group.X.leftCols(q);
}

MatrixXd true_g_factor(const SimConfig& config) {
    const int q = config.model.dims.q;
    if (q == 0) {
        return MatrixXd(0, 0);
    }
    // Diagonal truth may have exactly zero variances (no random effect).
    if (config.model.cov_structure == CovStructure::DiagonalG) {
        MatrixXd L = MatrixXd::Zero(q, q);
        for (int r = 0; r < q; ++r) {
            if (!(config.g_params0(r) >= 0.0)) {
                throw std::invalid_argument("simulate: diagonal variances must be >= 0");
            }
            L(r, r) = std::sqrt(config.g_params0(r));
        }
        return L;
    }
    const MatrixXd G = assemble_G(config.g_params0, config.model.cov_structure, q);
    return chol_spd(G).matrixL();
}

}  // namespace

void SimConfig::validate() const {
    if (beta0.size() != model.dims.p) {
        throw std::invalid_argument("SimConfig: beta0 length must equal p");
    }
    if (replications < 1) {
        throw std::invalid_argument("SimConfig: replications must be >= 1");
    }
    for (std::size_t i = 1; i < n_grid.size(); ++i) {
        if (n_grid[i] <= n_grid[i - 1]) {
            throw std::invalid_argument("SimConfig: n_grid must be strictly increasing");
        }
    }
    if (contamination && !(contamination->fraction >= 0.0 && contamination->fraction < 1.0)) {
        throw std::invalid_argument("SimConfig: contamination fraction must be in [0, 1)");
    }
}

GroupedDataset simulate_lmm(const SimConfig& config, int n, int replication_index) {
    if (config.model.family != Family::GaussianIdentity) {
        throw std::invalid_argument("simulate_lmm requires the gaussian family");
    }
    const int m = config.model.dims.m;
    const int p = config.model.dims.p;
    const int q = config.model.dims.q;
    const MatrixXd Lg = true_g_factor(config);
    const double sigma0 = std::sqrt(config.sigma0_sq);

    GroupedDataset data;
    data.m = m;
    data.p = p;
    data.q = q;
    data.seed = config.seed;
    data.groups.resize(n);

    const auto nn = static_cast<std::uint32_t>(n);
    const auto rep = static_cast<std::uint32_t>(replication_index);
    CounterRng rng_x(config.seed, CounterRng::substream(nn, rep, StreamRole::DesignX));
    CounterRng rng_u(config.seed, CounterRng::substream(nn, rep, StreamRole::RandomEffect));
    CounterRng rng_e(config.seed, CounterRng::substream(nn, rep, StreamRole::Noise));

    for (int i = 0; i < n; ++i) {
        Group& group = data.groups[i];
        fill_design(group, m, p, q, rng_x);
        VectorXd u(q);
        for (int r = 0; r < q; ++r) u(r) = rng_u.next_gaussian();
        u = Lg * u;
        group.y = group.X * config.beta0 + group.Z * u;
        for (int r = 0; r < m; ++r) {
            group.y(r) += sigma0 * rng_e.next_gaussian();
        }
    }
    return data;
}

GroupedDataset simulate_logistic(const SimConfig& config, int n, int replication_index) {
    if (config.model.family != Family::BernoulliLogit) {
        throw std::invalid_argument("simulate_logistic requires the bernoulli-logit family");
    }
    const int m = config.model.dims.m;
    const int p = config.model.dims.p;
    const int q = config.model.dims.q;
    const MatrixXd Lg = true_g_factor(config);

    GroupedDataset data;
    data.m = m;
    data.p = p;
    data.q = q;
    data.seed = config.seed;
    data.groups.resize(n);

    const auto nn = static_cast<std::uint32_t>(n);
    const auto rep = static_cast<std::uint32_t>(replication_index);
    CounterRng rng_x(config.seed, CounterRng::substream(nn, rep, StreamRole::DesignX));
    CounterRng rng_u(config.seed, CounterRng::substream(nn, rep, StreamRole::RandomEffect));
    CounterRng rng_y(config.seed, CounterRng::substream(nn, rep, StreamRole::Response));

    for (int i = 0; i < n; ++i) {
        Group& group = data.groups[i];
        fill_design(group, m, p, q, rng_x);
        VectorXd u(q);
        for (int r = 0; r < q; ++r) u(r) = rng_u.next_gaussian();
        u = Lg * u;
        const VectorXd s = group.X * config.beta0 + group.Z * u;
        group.y.resize(m);
        for (int r = 0; r < m; ++r) {
            group.y(r) = rng_y.next_bernoulli(sigmoid(s(r))) ? 1.0 : 0.0;
        }
    }
    return data;
}

GroupedDataset contaminate(const GroupedDataset& data, double fraction, double shift,
                           ContaminationTarget target) {
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("contaminate: fraction must be in [0, 1)");
    }
    GroupedDataset out = data;
    const int n = data.n();
    const int n_bad = static_cast<int>(std::ceil(fraction * n));
    if (n_bad == 0) {
        return out;
    }

    // Deterministic subset from the dataset seed: partial Fisher-Yates.
    CounterRng rng(data.seed,
                   CounterRng::substream(static_cast<std::uint32_t>(n), 0,
                                         StreamRole::Contamination));
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = 0; i < n_bad; ++i) {
        const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(order[i], order[j]);
    }

    for (int k = 0; k < n_bad; ++k) {
        Group& group = out.groups[order[k]];
        if (target == ContaminationTarget::Response) {
            group.y.array() += shift;
        } else {
            group.X.rightCols(data.p - 1) *= (1.0 + shift);
        }
    }
    return out;
}

}  // namespace robmix
