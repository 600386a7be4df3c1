#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "robmix/logistic.hpp"
#include "robmix/simulate.hpp"

#include "test_helpers.hpp"

#include <cmath>

using namespace robmix;
using robmix::testing::logistic_reference_config;

namespace {

// Trapezoid-rule marginal density for q = 1 over u in [-lim, lim]; test
// oracle independent of the adaptive quadrature path.
double trapezoid_marginal(const Group& group, const VectorXd& beta, double sigma_u_sq,
                          int points, double lim) {
    const VectorXd eta = group.X * beta;
    const double h = 2.0 * lim / (points - 1);
    double acc = 0.0;
    for (int k = 0; k < points; ++k) {
        const double u = -lim + k * h;
        double log_term = -0.5 * std::log(2.0 * M_PI * sigma_u_sq) - 0.5 * u * u / sigma_u_sq;
        for (int j = 0; j < group.y.size(); ++j) {
            log_term += logistic_loglik_term(static_cast<int>(group.y(j)),
                                             eta(j) + group.Z(j, 0) * u);
        }
        const double weight = (k == 0 || k == points - 1) ? 0.5 : 1.0;
        acc += weight * std::exp(log_term);
    }
    return acc * h;
}

GroupedDataset reference_data(int n, std::uint64_t seed, int rep = 0) {
    return simulate_logistic(logistic_reference_config(seed), n, rep);
}

ParameterPoint reference_point() {
    ParameterPoint point;
    point.beta = VectorXd(2);
    point.beta << 1, 2;
    point.sigma0_sq = 1.0;
    point.g_params = VectorXd::Constant(1, 0.56);
    return point;
}

}  // namespace

TEST_CASE("gauss-hermite rule") {
    SUBCASE("order one is the midpoint rule") {
        const QuadratureRule rule = gh_rule(1);
        CHECK(rule.nodes(0) == doctest::Approx(0.0));
        CHECK(rule.weights(0) == doctest::Approx(std::sqrt(M_PI)));
    }
    SUBCASE("degree-9 exactness at K=5 recovers the fourth moment") {
        const QuadratureRule rule = gh_rule(5);
        double moment = 0.0;
        for (int k = 0; k < 5; ++k) {
            moment += rule.weights(k) * std::pow(rule.nodes(k), 4);
        }
        CHECK(moment == doctest::Approx(0.75 * std::sqrt(M_PI)).epsilon(1e-13));
    }
    SUBCASE("weights sum to sqrt(pi)") {
        for (int K : {2, 20, 64}) {
            const QuadratureRule rule = gh_rule(K);
            CHECK(rule.weights.sum() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
            CHECK(rule.weights.minCoeff() > 0.0);
        }
    }
    SUBCASE("order bounds") {
        CHECK_THROWS_AS(gh_rule(0), std::invalid_argument);
        CHECK_THROWS_AS(gh_rule(101), std::invalid_argument);
    }
}

TEST_CASE("conditional log density") {
    CHECK(logistic_loglik_term(1, 0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
    CHECK(logistic_loglik_term(1, 1.0) ==
          doctest::Approx(1.0 - std::log(1.0 + std::exp(1.0))).epsilon(1e-12));

    // Saturation: y=1 terms increase to 0, y=0 terms decrease without bound.
    double prev1 = -1e9;
    double prev0 = 1e9;
    for (double s : {-30.0, -5.0, 0.0, 5.0, 30.0}) {
        const double t1 = logistic_loglik_term(1, s);
        const double t0 = logistic_loglik_term(0, s);
        CHECK(t1 > prev1);
        CHECK(t0 < prev0);
        CHECK(std::isfinite(t1));
        CHECK(std::isfinite(t0));
        prev1 = t1;
        prev0 = t0;
    }
    CHECK(logistic_loglik_term(1, 40.0) == doctest::Approx(0.0).epsilon(1e-12));

    VectorXd x(2), z(1), beta(2), u(1);
    x << 1.0, 0.5;
    z << 1.0;
    beta << 0.2, -0.4;
    u << 0.3;
    CHECK(logistic_conditional_logdensity(1, x, z, beta, u) ==
          doctest::Approx(logistic_loglik_term(1, x.dot(beta) + u(0))).epsilon(1e-14));
    CHECK_THROWS_AS(logistic_conditional_logdensity(2, x, z, beta, u), std::invalid_argument);
}

TEST_CASE("marginal log density") {
    const QuadratureRule rule = gh_rule(20);

    SUBCASE("degenerate random effect reduces to the conditional at u=0") {
        const GroupedDataset data = reference_data(4, 1234);
        const VectorXd beta = reference_point().beta;
        const MatrixXd G = 1e-12 * MatrixXd::Identity(1, 1);
        for (const Group& group : data.groups) {
            double conditional = 0.0;
            const VectorXd eta = group.X * beta;
            for (int j = 0; j < data.m; ++j) {
                conditional += logistic_loglik_term(static_cast<int>(group.y(j)), eta(j));
            }
            CHECK(logistic_marginal_logdensity(group, beta, G, rule) ==
                  doctest::Approx(conditional).epsilon(1e-6));
        }
    }

    SUBCASE("m=1 matches dense trapezoid integration") {
        SimConfig config = logistic_reference_config(777);
        config.model.dims.m = 1;
        const GroupedDataset data = simulate_logistic(config, 6, 0);
        const double sigma_u_sq = 0.56;
        const MatrixXd G = sigma_u_sq * MatrixXd::Identity(1, 1);
        const VectorXd beta = reference_point().beta;
        for (const Group& group : data.groups) {
            const double oracle =
                trapezoid_marginal(group, beta, sigma_u_sq, 10000, 10.0 * std::sqrt(sigma_u_sq));
            const double ours = std::exp(logistic_marginal_logdensity(group, beta, G, rule));
            CHECK(ours == doctest::Approx(oracle).epsilon(1e-8));
        }
    }

    SUBCASE("outcome probabilities sum to one over {0,1}^m") {
        const GroupedDataset data = reference_data(2, 99);
        const VectorXd beta = reference_point().beta;
        const MatrixXd G = 0.56 * MatrixXd::Identity(1, 1);
        for (const Group& group : data.groups) {
            double total = 0.0;
            Group probe = group;
            for (int y = 0; y < (1 << data.m); ++y) {
                for (int j = 0; j < data.m; ++j) probe.y(j) = (y >> j) & 1;
                total += std::exp(logistic_marginal_logdensity(probe, beta, G, rule));
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
        }
    }

    SUBCASE("shared-grid enumeration agrees with the adaptive marginal") {
        const GroupedDataset data = reference_data(2, 4242);
        const VectorXd beta = reference_point().beta;
        const MatrixXd G = 0.56 * MatrixXd::Identity(1, 1);
        for (const Group& group : data.groups) {
            const VectorXd logf = logistic_outcome_logdensities(group, beta, G, rule);
            Group probe = group;
            for (int y = 0; y < (1 << data.m); ++y) {
                for (int j = 0; j < data.m; ++j) probe.y(j) = (y >> j) & 1;
                const double adaptive = logistic_marginal_logdensity(probe, beta, G, rule);
                CHECK(std::abs(logf(y) - adaptive) < 1e-7);
            }
        }
    }

    SUBCASE("two-dimensional random effects normalize as well") {
        SimConfig config = logistic_reference_config(31);
        config.model.dims = {3, 2, 2};
        config.g_params0 = VectorXd::Constant(2, 0.4);
        const GroupedDataset data = simulate_logistic(config, 2, 0);
        MatrixXd G(2, 2);
        G << 0.5, 0.15, 0.15, 0.3;
        const VectorXd beta = reference_point().beta;
        for (const Group& group : data.groups) {
            double total = 0.0;
            Group probe = group;
            for (int y = 0; y < (1 << 3); ++y) {
                for (int j = 0; j < 3; ++j) probe.y(j) = (y >> j) & 1;
                total += std::exp(logistic_marginal_logdensity(probe, beta, G, rule));
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
        }
    }

    SUBCASE("q=3 is rejected") {
        Group group;
        group.y = VectorXd::Zero(2);
        group.X = MatrixXd::Ones(2, 1);
        group.Z = MatrixXd::Ones(2, 3);
        CHECK_THROWS_AS(logistic_marginal_logdensity(group, VectorXd::Zero(1),
                                                     MatrixXd::Identity(3, 3), rule),
                        std::invalid_argument);
    }
}

TEST_CASE("logistic mle loss") {
    const QuadratureRule rule = gh_rule(20);

    SUBCASE("G to zero reduces to plain logistic regression") {
        const GroupedDataset data = reference_data(30, 555);
        ParameterPoint point = reference_point();
        point.g_params(0) = 1e-12;
        double plain = 0.0;
        for (const Group& group : data.groups) {
            const VectorXd eta = group.X * point.beta;
            for (int j = 0; j < data.m; ++j) {
                plain -= logistic_loglik_term(static_cast<int>(group.y(j)), eta(j));
            }
        }
        plain /= data.n();
        const SimConfig config = logistic_reference_config(0);
        CHECK(logistic_mle_loss(data, config.model, point, rule) ==
              doctest::Approx(plain).epsilon(1e-6));
    }

    SUBCASE("matches the trapezoid oracle on m=2 groups") {
        SimConfig config = logistic_reference_config(888);
        config.model.dims.m = 2;
        const GroupedDataset data = simulate_logistic(config, 5, 0);
        const ParameterPoint point = reference_point();
        double oracle = 0.0;
        for (const Group& group : data.groups) {
            oracle -= std::log(trapezoid_marginal(group, point.beta, point.g_params(0), 20000,
                                                  10.0 * std::sqrt(point.g_params(0))));
        }
        oracle /= data.n();
        CHECK(logistic_mle_loss(data, config.model, point, rule) ==
              doctest::Approx(oracle).epsilon(1e-6));
    }

    SUBCASE("loss at the truth beats a unit perturbation on a large sample") {
        SimConfig config = logistic_reference_config(2024);
        const GroupedDataset data = simulate_logistic(config, 2000, 0);
        ParameterPoint truth = reference_point();
        ParameterPoint off = truth;
        off.beta.array() += 1.0;
        CHECK(logistic_mle_loss(data, config.model, truth, rule) <
              logistic_mle_loss(data, config.model, off, rule));
    }

    SUBCASE("quadrature order is converged at K=20") {
        const GroupedDataset data = reference_data(25, 606);
        const SimConfig config = logistic_reference_config(0);
        const ParameterPoint point = reference_point();
        const double loss20 = logistic_mle_loss(data, config.model, point, gh_rule(20));
        const double loss40 = logistic_mle_loss(data, config.model, point, gh_rule(40));
        CHECK(std::abs(loss20 - loss40) < 1e-6);
    }

    SUBCASE("within-group permutation leaves the loss unchanged") {
        GroupedDataset data = reference_data(6, 321);
        const SimConfig config = logistic_reference_config(0);
        const ParameterPoint point = reference_point();
        const double base = logistic_mle_loss(data, config.model, point, rule);
        for (Group& group : data.groups) {
            group.y.segment(0, 2).reverseInPlace();
            const MatrixXd X0 = group.X.row(0);
            group.X.row(0) = group.X.row(1);
            group.X.row(1) = X0;
            const MatrixXd Z0 = group.Z.row(0);
            group.Z.row(0) = group.Z.row(1);
            group.Z.row(1) = Z0;
        }
        CHECK(logistic_mle_loss(data, config.model, point, rule) ==
              doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("logistic mdpde loss") {
    const QuadratureRule rule = gh_rule(20);
    const SimConfig config = logistic_reference_config(0);

    SUBCASE("m=1 closed form") {
        SimConfig c1 = logistic_reference_config(17);
        c1.model.dims.m = 1;
        const GroupedDataset data = simulate_logistic(c1, 1, 0);
        const ParameterPoint point = reference_point();
        const double alpha = 0.6;

        const Group& group = data.groups[0];
        Group one = group;
        one.y(0) = 1.0;
        const double pi1 = std::exp(logistic_marginal_logdensity(one, point.beta,
                                                                 0.56 * MatrixXd::Identity(1, 1),
                                                                 rule));
        const double pi_obs = group.y(0) > 0.5 ? pi1 : 1.0 - pi1;
        const double expected = std::pow(pi1, 1.0 + alpha) + std::pow(1.0 - pi1, 1.0 + alpha) -
                                (1.0 + 1.0 / alpha) * std::pow(pi_obs, alpha);
        CHECK(logistic_mdpde_loss(data, c1.model, point, alpha, rule) ==
              doctest::Approx(expected).epsilon(1e-8));
    }

    SUBCASE("power sum is bounded by one") {
        const GroupedDataset data = reference_data(4, 23);
        const ParameterPoint point = reference_point();
        const MatrixXd G = 0.56 * MatrixXd::Identity(1, 1);
        for (const Group& group : data.groups) {
            const VectorXd logf = logistic_outcome_logdensities(group, point.beta, G, rule);
            for (double alpha : {0.1, 0.5, 1.0}) {
                double power_sum = 0.0;
                for (int y = 0; y < logf.size(); ++y) {
                    power_sum += std::exp((1.0 + alpha) * logf(y));
                }
                CHECK(power_sum <= 1.0 + 1e-12);
            }
        }
    }

    SUBCASE("enumeration cutoff") {
        SimConfig big = logistic_reference_config(5);
        big.model.dims.m = 13;
        const GroupedDataset data = simulate_logistic(big, 2, 0);
        const ParameterPoint point = reference_point();
        CHECK_THROWS_AS(logistic_mdpde_loss(data, big.model, point, 0.5, rule),
                        EnumerationTooLarge);

        LogisticMdpdeOptions opts;
        opts.allow_monte_carlo = true;
        opts.mc_samples = 2000;
        CHECK_NOTHROW(logistic_mdpde_loss(data, big.model, point, 0.5, rule, opts));
    }

    SUBCASE("monte-carlo power term agrees with exact enumeration") {
        const GroupedDataset data = reference_data(1, 29);
        const ParameterPoint point = reference_point();
        const MatrixXd G = 0.56 * MatrixXd::Identity(1, 1);
        const double alpha = 0.5;
        const Group& group = data.groups[0];

        const VectorXd logf = logistic_outcome_logdensities(group, point.beta, G, rule);
        double exact = 0.0;
        for (int y = 0; y < logf.size(); ++y) exact += std::exp((1.0 + alpha) * logf(y));

        const McTermEstimate mc =
            logistic_mdpde_power_term_mc(group, point.beta, G, alpha, rule, 20000, 7, 0);
        CHECK(std::abs(mc.value - exact) < 5.0 * mc.se + 1e-12);
        CHECK(mc.se > 0.0);
        CHECK(mc.se < 0.01);
    }

    SUBCASE("quadrature order is converged at K=20") {
        const GroupedDataset data = reference_data(20, 61);
        const ParameterPoint point = reference_point();
        const double loss20 = logistic_mdpde_loss(data, config.model, point, 0.5, gh_rule(20));
        const double loss40 = logistic_mdpde_loss(data, config.model, point, 0.5, gh_rule(40));
        CHECK(std::abs(loss20 - loss40) < 1e-6);
    }
}

TEST_CASE("fit_logistic") {
    const QuadratureRule rule = gh_rule(20);
    const SimConfig config = logistic_reference_config(0);

    SUBCASE("large-sample mle recovers the truth") {
        const GroupedDataset data = reference_data(2000, 909);
        const FitResult fit =
            fit_logistic(data, config.model, EstimatorSpec::mle(), std::nullopt, rule);
        CHECK(fit.converged);
        CHECK((fit.point.beta - reference_point().beta).norm() < 0.15);
    }

    SUBCASE("mdpde with small alpha tracks the mle fit") {
        const GroupedDataset data = reference_data(200, 1001);
        const FitResult mle =
            fit_logistic(data, config.model, EstimatorSpec::mle(), std::nullopt, rule);
        const FitResult mdpde =
            fit_logistic(data, config.model, EstimatorSpec::mdpde(1e-3), std::nullopt, rule);
        CHECK(mle.converged);
        CHECK(mdpde.converged);
        CHECK((mle.point.beta - mdpde.point.beta).norm() < 1e-2);
    }

    SUBCASE("separable data cannot converge and hits the iteration budget") {
        GroupedDataset data = reference_data(10, 37);
        for (Group& group : data.groups) group.y.setOnes();
        MinimizeOptions opts;
        opts.gtol = 1e-12;
        opts.max_iter = 60;
        const FitResult fit =
            fit_logistic(data, config.model, EstimatorSpec::mle(), std::nullopt, rule, opts);
        CHECK_FALSE(fit.converged);
        CHECK(fit.termination == Termination::MaxIter);
        CHECK(fit.point.beta.norm() > 5.0);  // running off toward separation
    }
}
