#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace robmix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct DegenerateCovariance : std::runtime_error {
    explicit DegenerateCovariance(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonFiniteObjective : std::runtime_error {
    explicit NonFiniteObjective(const std::string& msg) : std::runtime_error(msg) {}
};

struct RankDeficientDesign : std::runtime_error {
    explicit RankDeficientDesign(const std::string& msg) : std::runtime_error(msg) {}
};

struct InnerModeDivergence : std::runtime_error {
    explicit InnerModeDivergence(const std::string& msg) : std::runtime_error(msg) {}
};

struct EnumerationTooLarge : std::runtime_error {
    explicit EnumerationTooLarge(const std::string& msg) : std::runtime_error(msg) {}
};

struct ExperimentDegenerate : std::runtime_error {
    explicit ExperimentDegenerate(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientGrid : std::runtime_error {
    explicit InsufficientGrid(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientDraws : std::runtime_error {
    explicit InsufficientDraws(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Model description
// ---------------------------------------------------------------------------

enum class Family { GaussianIdentity, BernoulliLogit };

enum class CovStructure { DiagonalG, FullG };

struct Dims {
    int m = 0;  // observations per group
    int p = 0;  // fixed effects
    int q = 0;  // random effects
};

struct ModelSpec {
    Family family = Family::GaussianIdentity;
    CovStructure cov_structure = CovStructure::DiagonalG;
    Dims dims;
};

enum class EstimatorKind { MLE, MDPDE };

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::MLE;
    double alpha = 0.0;  // tuning exponent, MDPDE only

    static EstimatorSpec mle() { return {EstimatorKind::MLE, 0.0}; }
    static EstimatorSpec mdpde(double alpha) {
        if (!(alpha > 0.0)) {
            throw std::invalid_argument("MDPDE requires alpha > 0");
        }
        return {EstimatorKind::MDPDE, alpha};
    }
    std::string label() const;
};

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

struct Group {
    VectorXd y;   // length m
    MatrixXd X;   // m x p
    MatrixXd Z;   // m x q
};

// n independent groups sharing identical (m, p, q).
struct GroupedDataset {
    std::vector<Group> groups;
    int m = 0;
    int p = 0;
    int q = 0;
    std::uint64_t seed = 0;  // provenance for deterministic derived streams

    int n() const { return static_cast<int>(groups.size()); }
    long total_observations() const { return static_cast<long>(n()) * m; }

    // Checks the shared-dimension invariant; throws std::invalid_argument.
    void validate() const;
};

// Fixed effects plus variance components. g_params parameterizes G:
// DiagonalG stores the q diagonal variances on natural scale, FullG stores
// the q(q+1)/2 log-Cholesky parameters (column-major lower triangle,
// diagonal entries log-transformed).
struct ParameterPoint {
    VectorXd beta;
    double sigma0_sq = 1.0;  // residual variance, gaussian family only
    VectorXd g_params;
};

}  // namespace robmix
