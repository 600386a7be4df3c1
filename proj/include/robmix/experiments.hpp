#pragma once

#include "robmix/optimizer.hpp"
#include "robmix/simulate.hpp"
#include "robmix/types.hpp"

#include <string>
#include <vector>

namespace robmix {

struct ExperimentOptions {
    std::vector<double> epsilons{0.25, 0.5, 1.0};
    int threads = 0;  // 0 = available parallelism
    MinimizeOptions minimize;
    int n_starts = 1;
    int gh_order = 20;
    double max_failure_rate = 0.10;
};

// Aggregates for one (estimator, n) cell. biases holds the per-replication
// l2 deviations in replication order (failures excluded).
struct CellStats {
    int n = 0;
    double mean_bias = 0.0;
    double se_bias = 0.0;
    std::vector<double> tail_freq;  // one entry per epsilon
    int failures = 0;
    int replications_used = 0;
    double wall_ms = 0.0;  // summed per-replication fit time
    std::vector<double> biases;
};

struct ExperimentCurve {
    EstimatorSpec estimator;
    std::vector<CellStats> cells;
};

// simulate -> fit -> record over config.n_grid x replications for each
// estimator, all estimators sharing the same simulated datasets.
// Deterministic given config (including seed), regardless of thread count.
std::vector<ExperimentCurve> run_consistency_experiment(const SimConfig& config,
                                                        const std::vector<EstimatorSpec>& estimators,
                                                        const ExperimentOptions& opts = {});

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

// OLS of log(mean bias) on log(n); requires >= 3 cells with positive bias.
RateFit fit_convergence_rate(const ExperimentCurve& curve);

struct TailDecayResult {
    std::vector<int> n_values;
    std::vector<double> tail_freq;
    double decay_coef = 0.0;  // slope of log P on n
    double r_squared = 0.0;
    int usable_cells = 0;
};

// Tail frequencies P(|beta_hat - beta0| >= epsilon) across the n grid with a
// log-linear decay fit over the cells with positive frequency.
TailDecayResult tail_decay_experiment(const SimConfig& config, const EstimatorSpec& estimator,
                                      double epsilon, const ExperimentOptions& opts = {});

// Wide per-cell CSV: estimator,alpha,n,mean_bias,se_bias,tail_p_eps1,...,failures,wall_ms
std::string curves_to_csv(const std::vector<ExperimentCurve>& curves,
                          const std::vector<double>& epsilons, bool include_wall = true);
// Long-format companion for external plotting (no timing fields).
std::string curves_to_plot_data(const std::vector<ExperimentCurve>& curves,
                                const std::vector<double>& epsilons);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace robmix
