#include "robmix/experiments.hpp"

#include "robmix/lmm.hpp"
#include "robmix/logistic.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

namespace robmix {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_alpha(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

struct ReplicationOutcome {
    std::optional<double> bias;  // empty on failure
    double wall_ms = 0.0;
};

struct SimpleOls {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

SimpleOls ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    SimpleOls out;
    out.slope = (sxx > 0.0) ? sxy / sxx : 0.0;
    out.intercept = my - out.slope * mx;
    if (syy <= 1e-300) {
        out.r_squared = 1.0;  // constant response is fit exactly
        return out;
    }
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double resid = y[i] - (out.intercept + out.slope * x[i]);
        ss_res += resid * resid;
    }
    out.r_squared = 1.0 - ss_res / syy;
    return out;
}

}  // namespace

std::vector<ExperimentCurve> run_consistency_experiment(const SimConfig& config,
                                                        const std::vector<EstimatorSpec>& estimators,
                                                        const ExperimentOptions& opts) {
    config.validate();
    if (estimators.empty()) {
        throw std::invalid_argument("run_consistency_experiment: no estimators");
    }
    const bool gaussian = config.model.family == Family::GaussianIdentity;
    const QuadratureRule rule = gaussian ? QuadratureRule{} : gh_rule(opts.gh_order);
    const int n_est = static_cast<int>(estimators.size());
    const int n_cells_per_est = static_cast<int>(config.n_grid.size());
    const int reps = config.replications;

    // One slot per (estimator, n, replication); fixed-order aggregation keeps
    // the result independent of scheduling.
    const long total_tasks = static_cast<long>(n_est) * n_cells_per_est * reps;
    std::vector<ReplicationOutcome> slots(total_tasks);

    auto run_task = [&](long task_index) {
        const int rep = static_cast<int>(task_index % reps);
        const int cell = static_cast<int>((task_index / reps) % n_cells_per_est);
        const int est = static_cast<int>(task_index / (static_cast<long>(reps) * n_cells_per_est));
        const int n = config.n_grid[cell];
        const EstimatorSpec& estimator = estimators[est];

        const auto start = std::chrono::steady_clock::now();
        ReplicationOutcome outcome;
        try {
            GroupedDataset data = gaussian ? simulate_lmm(config, n, rep)
                                           : simulate_logistic(config, n, rep);
            if (config.contamination && config.contamination->fraction > 0.0) {
                data = contaminate(data, config.contamination->fraction,
                                   config.contamination->shift, config.contamination->target);
            }
            FitResult fit;
            if (gaussian) {
                fit = fit_lmm(data, config.model, estimator, std::nullopt, opts.minimize,
                              opts.n_starts);
            } else {
                fit = fit_logistic(data, config.model, estimator, std::nullopt, rule,
                                   opts.minimize, opts.n_starts);
            }
            if (fit.converged && fit.point.beta.allFinite()) {
                outcome.bias = (fit.point.beta - config.beta0).norm();
            }
        } catch (const std::exception&) {
            // recorded as a failure below
        }
        outcome.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
        slots[static_cast<std::size_t>(task_index)] = std::move(outcome);
    };

    int n_threads = opts.threads > 0 ? opts.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    if (n_threads == 1) {
        for (long t = 0; t < total_tasks; ++t) run_task(t);
    } else {
        std::atomic<long> next{0};
        std::vector<std::thread> workers;
        workers.reserve(n_threads);
        for (int w = 0; w < n_threads; ++w) {
            workers.emplace_back([&]() {
                while (true) {
                    const long t = next.fetch_add(1);
                    if (t >= total_tasks) break;
                    run_task(t);
                }
            });
        }
        for (auto& w : workers) w.join();
    }

    std::vector<ExperimentCurve> curves(n_est);
    for (int est = 0; est < n_est; ++est) {
        curves[est].estimator = estimators[est];
        curves[est].cells.resize(n_cells_per_est);
        for (int cell = 0; cell < n_cells_per_est; ++cell) {
            CellStats& stats = curves[est].cells[cell];
            stats.n = config.n_grid[cell];
            for (int rep = 0; rep < reps; ++rep) {
                const long idx =
                    (static_cast<long>(est) * n_cells_per_est + cell) * reps + rep;
                const ReplicationOutcome& out = slots[static_cast<std::size_t>(idx)];
                stats.wall_ms += out.wall_ms;
                if (out.bias) {
                    stats.biases.push_back(*out.bias);
                } else {
                    ++stats.failures;
                }
            }
            stats.replications_used = static_cast<int>(stats.biases.size());
            if (stats.failures > opts.max_failure_rate * reps) {
                throw ExperimentDegenerate(
                    "cell (" + curves[est].estimator.label() + ", n=" + std::to_string(stats.n) +
                    ") had " + std::to_string(stats.failures) + "/" + std::to_string(reps) +
                    " fit failures");
            }
            if (stats.replications_used > 0) {
                double sum = 0.0;
                for (double b : stats.biases) sum += b;
                stats.mean_bias = sum / stats.replications_used;
                double ss = 0.0;
                for (double b : stats.biases) ss += (b - stats.mean_bias) * (b - stats.mean_bias);
                stats.se_bias = stats.replications_used > 1
                                    ? std::sqrt(ss / (stats.replications_used - 1) /
                                                stats.replications_used)
                                    : 0.0;
            }
            stats.tail_freq.resize(opts.epsilons.size());
            for (std::size_t e = 0; e < opts.epsilons.size(); ++e) {
                int count = 0;
                for (double b : stats.biases) {
                    if (b >= opts.epsilons[e]) ++count;
                }
                stats.tail_freq[e] = stats.replications_used > 0
                                         ? static_cast<double>(count) / stats.replications_used
                                         : 0.0;
            }
        }
    }
    return curves;
}

RateFit fit_convergence_rate(const ExperimentCurve& curve) {
    std::vector<double> log_n;
    std::vector<double> log_bias;
    for (const CellStats& cell : curve.cells) {
        if (cell.mean_bias > 0.0) {
            log_n.push_back(std::log(static_cast<double>(cell.n)));
            log_bias.push_back(std::log(cell.mean_bias));
        }
    }
    if (log_n.size() < 3) {
        throw InsufficientGrid("fit_convergence_rate needs >= 3 cells with positive mean bias");
    }
    const SimpleOls ols = ols_fit(log_n, log_bias);
    return {ols.slope, ols.intercept, ols.r_squared};
}

TailDecayResult tail_decay_experiment(const SimConfig& config, const EstimatorSpec& estimator,
                                      double epsilon, const ExperimentOptions& opts) {
    if (epsilon < 0.0) {
        throw std::invalid_argument("tail_decay_experiment: epsilon must be nonnegative");
    }
    ExperimentOptions local = opts;
    local.epsilons = {epsilon};
    const std::vector<ExperimentCurve> curves =
        run_consistency_experiment(config, {estimator}, local);
    const ExperimentCurve& curve = curves.front();

    TailDecayResult result;
    std::vector<double> xs;
    std::vector<double> ys;
    for (const CellStats& cell : curve.cells) {
        result.n_values.push_back(cell.n);
        result.tail_freq.push_back(cell.tail_freq[0]);
        if (cell.tail_freq[0] > 0.0) {
            xs.push_back(static_cast<double>(cell.n));
            ys.push_back(std::log(cell.tail_freq[0]));
        }
    }
    result.usable_cells = static_cast<int>(xs.size());
    if (result.usable_cells < 3) {
        throw InsufficientGrid("tail_decay_experiment needs >= 3 cells with positive frequency");
    }
    const SimpleOls ols = ols_fit(xs, ys);
    result.decay_coef = ols.slope;
    result.r_squared = ols.r_squared;
    return result;
}

std::string curves_to_csv(const std::vector<ExperimentCurve>& curves,
                          const std::vector<double>& epsilons, bool include_wall) {
    std::ostringstream os;
    os << "estimator,alpha,n,mean_bias,se_bias";
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        os << ",tail_p_eps" << (e + 1);
    }
    os << ",failures";
    if (include_wall) os << ",wall_ms";
    os << "\n";
    for (const ExperimentCurve& curve : curves) {
        const char* name = curve.estimator.kind == EstimatorKind::MLE ? "mle" : "mdpde";
        for (const CellStats& cell : curve.cells) {
            os << name << "," << fmt_alpha(curve.estimator.alpha) << "," << cell.n << ","
               << fmt(cell.mean_bias) << "," << fmt(cell.se_bias);
            for (double f : cell.tail_freq) os << "," << fmt(f);
            os << "," << cell.failures;
            if (include_wall) {
                os << "," << static_cast<long>(cell.wall_ms);
            }
            os << "\n";
        }
    }
    return os.str();
}

std::string curves_to_plot_data(const std::vector<ExperimentCurve>& curves,
                                const std::vector<double>& epsilons) {
    std::ostringstream os;
    os << "estimator,alpha,n,metric,value\n";
    for (const ExperimentCurve& curve : curves) {
        const char* name = curve.estimator.kind == EstimatorKind::MLE ? "mle" : "mdpde";
        for (const CellStats& cell : curve.cells) {
            const std::string prefix = std::string(name) + "," + fmt_alpha(curve.estimator.alpha) + "," +
                                       std::to_string(cell.n) + ",";
            os << prefix << "mean_bias," << fmt(cell.mean_bias) << "\n";
            os << prefix << "se_bias," << fmt(cell.se_bias) << "\n";
            for (std::size_t e = 0; e < epsilons.size(); ++e) {
                os << prefix << "tail_p[" << fmt_alpha(epsilons[e]) << "]," << fmt(cell.tail_freq[e])
                   << "\n";
            }
            os << prefix << "failures," << cell.failures << "\n";
        }
    }
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    os << content;
}

}  // namespace robmix
