#include "robmix/config.hpp"
#include "robmix/dataset_io.hpp"
#include "robmix/diagnostics.hpp"
#include "robmix/experiments.hpp"
#include "robmix/lmm.hpp"
#include "robmix/logistic.hpp"
#include "robmix/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace {

using namespace robmix;
using nlohmann::json;

void require_data_matches_model(const GroupedDataset& data, const ModelSpec& model) {
    if (data.m != model.dims.m || data.p != model.dims.p || data.q != model.dims.q) {
        throw ConfigError("dataset dimensions (m=" + std::to_string(data.m) +
                          ", p=" + std::to_string(data.p) + ", q=" + std::to_string(data.q) +
                          ") do not match the [model] section");
    }
}

GroupedDataset simulate_from(const RunConfig& config, int n) {
    if (!config.sim) {
        throw ConfigError("this subcommand needs a [simulation] section");
    }
    GroupedDataset data = config.model.family == Family::GaussianIdentity
                              ? simulate_lmm(*config.sim, n, config.replication)
                              : simulate_logistic(*config.sim, n, config.replication);
    if (config.sim->contamination && config.sim->contamination->fraction > 0.0) {
        const Contamination& c = *config.sim->contamination;
        data = contaminate(data, c.fraction, c.shift, c.target);
    }
    return data;
}

int cmd_simulate(const RunConfig& config, const std::string& out_path) {
    if (!config.sim) {
        throw ConfigError("simulate needs a [simulation] section");
    }
    if (config.sim->n_grid.size() != 1) {
        throw ConfigError("simulate needs an n_grid with exactly one entry");
    }
    const int n = config.sim->n_grid[0];
    const GroupedDataset data = simulate_from(config, n);
    write_dataset_csv(out_path, data);
    std::printf("wrote %s: n=%d m=%d p=%d q=%d seed=%llu replication=%d\n", out_path.c_str(),
                data.n(), data.m, data.p, data.q,
                static_cast<unsigned long long>(config.sim->seed), config.replication);
    return 0;
}

FitResult run_fit(const RunConfig& config, const GroupedDataset& data,
                  const EstimatorSpec& estimator) {
    if (config.model.family == Family::GaussianIdentity) {
        return fit_lmm(data, config.model, estimator, std::nullopt, config.minimize,
                       config.n_starts);
    }
    const QuadratureRule rule = gh_rule(config.gh_order);
    return fit_logistic(data, config.model, estimator, std::nullopt, rule, config.minimize,
                        config.n_starts);
}

int cmd_fit(const RunConfig& config, const std::string& data_path, const std::string& out_path) {
    if (!config.fit_estimator) {
        throw ConfigError("fit needs a [fit] section with an estimator key");
    }
    const GroupedDataset data = read_dataset_csv(data_path);
    require_data_matches_model(data, config.model);
    const EstimatorSpec estimator = *config.fit_estimator;
    const FitResult fit = run_fit(config, data, estimator);

    std::printf("estimator: %s\n", estimator.label().c_str());
    std::printf("beta_hat:");
    for (int j = 0; j < fit.point.beta.size(); ++j) std::printf(" %.8g", fit.point.beta(j));
    std::printf("\n");
    if (config.model.family == Family::GaussianIdentity) {
        std::printf("sigma0_sq_hat: %.8g\n", fit.point.sigma0_sq);
    }
    const MatrixXd G =
        assemble_G(fit.point.g_params, config.model.cov_structure, config.model.dims.q);
    std::printf("G_hat diagonal:");
    for (int r = 0; r < G.rows(); ++r) std::printf(" %.8g", G(r, r));
    std::printf("\n");
    std::printf("loss: %.10g  grad_norm: %.3g  iterations: %d  converged: %s (%s)\n", fit.loss,
                fit.grad_norm, fit.iterations, fit.converged ? "yes" : "no",
                termination_name(fit.termination));

    if (!out_path.empty()) {
        json out;
        out["estimator"] = estimator.label();
        out["alpha"] = estimator.alpha;
        out["beta"] = std::vector<double>(fit.point.beta.data(),
                                          fit.point.beta.data() + fit.point.beta.size());
        if (config.model.family == Family::GaussianIdentity) {
            out["sigma0_sq"] = fit.point.sigma0_sq;
        }
        out["g_params"] = std::vector<double>(fit.point.g_params.data(),
                                              fit.point.g_params.data() + fit.point.g_params.size());
        out["loss"] = fit.loss;
        out["grad_norm"] = fit.grad_norm;
        out["iterations"] = fit.iterations;
        out["converged"] = fit.converged;
        out["termination"] = termination_name(fit.termination);
        write_text_file(out_path, out.dump(2) + "\n");
    }
    return 0;
}

int cmd_experiment(const RunConfig& config, const std::string& out_dir, int threads) {
    if (!config.sim) {
        throw ConfigError("experiment needs a [simulation] section");
    }
    if (config.estimators.empty()) {
        throw ConfigError("experiment needs an [estimators] section");
    }
    ExperimentOptions opts;
    opts.epsilons = config.epsilons;
    opts.threads = threads;
    opts.minimize = config.minimize;
    opts.n_starts = config.n_starts;
    opts.gh_order = config.gh_order;

    const std::vector<ExperimentCurve> curves =
        run_consistency_experiment(*config.sim, config.estimators, opts);

    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir + "/curves.csv", curves_to_csv(curves, opts.epsilons, true));
    write_text_file(out_dir + "/plot_data.csv", curves_to_plot_data(curves, opts.epsilons));

    std::ostringstream summary;
    for (const ExperimentCurve& curve : curves) {
        summary << curve.estimator.label() << ":\n";
        try {
            const RateFit rate = fit_convergence_rate(curve);
            char buf[128];
            std::snprintf(buf, sizeof(buf), "  log-log slope %.4f (r2 %.4f)\n", rate.slope,
                          rate.r_squared);
            summary << buf;
        } catch (const InsufficientGrid&) {
            summary << "  log-log slope: n/a (needs >= 3 cells with positive bias)\n";
        }
        for (std::size_t e = 0; e < opts.epsilons.size(); ++e) {
            std::vector<double> xs, ys;
            for (const CellStats& cell : curve.cells) {
                if (cell.tail_freq[e] > 0.0) {
                    xs.push_back(cell.n);
                    ys.push_back(std::log(cell.tail_freq[e]));
                }
            }
            char buf[160];
            if (xs.size() < 3) {
                std::snprintf(buf, sizeof(buf),
                              "  tail decay eps=%g: n/a (%zu cells with positive frequency)\n",
                              opts.epsilons[e], xs.size());
            } else {
                // simple OLS of log frequency on n
                const double nn = static_cast<double>(xs.size());
                double sx = 0, sy = 0;
                for (std::size_t i = 0; i < xs.size(); ++i) { sx += xs[i]; sy += ys[i]; }
                const double mx = sx / nn, my = sy / nn;
                double sxx = 0, sxy = 0, syy = 0;
                for (std::size_t i = 0; i < xs.size(); ++i) {
                    sxx += (xs[i] - mx) * (xs[i] - mx);
                    sxy += (xs[i] - mx) * (ys[i] - my);
                    syy += (ys[i] - my) * (ys[i] - my);
                }
                const double slope = sxx > 0 ? sxy / sxx : 0.0;
                double r2 = 1.0;
                if (syy > 1e-300) {
                    double ss = 0;
                    for (std::size_t i = 0; i < xs.size(); ++i) {
                        const double resid = ys[i] - (my + slope * (xs[i] - mx));
                        ss += resid * resid;
                    }
                    r2 = 1.0 - ss / syy;
                }
                std::snprintf(buf, sizeof(buf), "  tail decay eps=%g: coef %.5f (r2 %.4f)\n",
                              opts.epsilons[e], slope, r2);
            }
            summary << buf;
        }
    }
    write_text_file(out_dir + "/summary.txt", summary.str());
    std::printf("%s", summary.str().c_str());
    std::printf("wrote %s/curves.csv, plot_data.csv, summary.txt\n", out_dir.c_str());
    return 0;
}

int cmd_diagnose(const RunConfig& config, const std::string& data_path) {
    if (config.checks.empty()) {
        throw ConfigError("diagnose needs a [diagnose] section with a checks key");
    }
    const GroupedDataset data = read_dataset_csv(data_path);
    require_data_matches_model(data, config.model);
    if (config.model.family != Family::GaussianIdentity) {
        throw ConfigError("diagnose supports the gaussian family (B conditions)");
    }

    // Diagnose at the fitted point (MLE unless [fit] selects otherwise).
    const EstimatorSpec estimator =
        config.fit_estimator ? *config.fit_estimator : EstimatorSpec::mle();
    const FitResult fit = run_fit(config, data, estimator);
    std::printf("diagnosing at the %s fit (converged: %s)\n", estimator.label().c_str(),
                fit.converged ? "yes" : "no");

    for (const std::string& check : config.checks) {
        AssumptionReport report;
        if (check == "B1") {
            report = check_B1(data, config.model, fit.point);
        } else if (check == "B3") {
            report = check_B3(data, config.model, fit.point, config.diag_alpha, config.n_probe,
                              config.diag_seed);
        } else if (check == "B4") {
            report = check_B4(data, config.model, fit.point);
        } else {
            report = check_B5(data, config.model, fit.point, config.diag_alpha, config.mc_draws,
                              config.diag_seed);
        }
        std::printf("%s\n", report.summary().c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"robust M-estimation for linear and logistic mixed models"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::string data_path;
    int threads = 0;

    auto* sim = app.add_subcommand("simulate", "generate a dataset CSV from a config");
    sim->add_option("--config", config_path, "config file")->required();
    sim->add_option("--out", out_path, "output CSV path");

    auto* fit = app.add_subcommand("fit", "fit one estimator to a dataset CSV");
    fit->add_option("--config", config_path, "config file")->required();
    fit->add_option("--data", data_path, "dataset CSV")->required();
    fit->add_option("--out", out_path, "machine-readable result path (json)");

    auto* exp = app.add_subcommand("experiment", "run the consistency experiment grid");
    exp->add_option("--config", config_path, "config file")->required();
    exp->add_option("--out", out_path, "output directory")->required();
    exp->add_option("--threads", threads, "worker threads (0 = auto)");

    auto* diag = app.add_subcommand("diagnose", "run assumption checks on a dataset");
    diag->add_option("--config", config_path, "config file")->required();
    diag->add_option("--data", data_path, "dataset CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const robmix::RunConfig config = robmix::parse_config_file(config_path);
        if (!config.has_model) {
            throw robmix::ConfigError("config needs a [model] section");
        }
        if (sim->parsed()) {
            return cmd_simulate(config, out_path.empty() ? "dataset.csv" : out_path);
        }
        if (fit->parsed()) {
            return cmd_fit(config, data_path, out_path);
        }
        if (exp->parsed()) {
            return cmd_experiment(config, out_path, threads);
        }
        return cmd_diagnose(config, data_path);
    } catch (const robmix::ConfigError& e) {
        std::cerr << "error: ConfigError: " << e.what() << "\n";
        return 2;
    } catch (const robmix::DegenerateCovariance& e) {
        std::cerr << "error: DegenerateCovariance: " << e.what() << "\n";
        return 4;
    } catch (const robmix::NonFiniteObjective& e) {
        std::cerr << "error: NonFiniteObjective: " << e.what() << "\n";
        return 4;
    } catch (const robmix::RankDeficientDesign& e) {
        std::cerr << "error: RankDeficientDesign: " << e.what() << "\n";
        return 4;
    } catch (const robmix::InnerModeDivergence& e) {
        std::cerr << "error: InnerModeDivergence: " << e.what() << "\n";
        return 4;
    } catch (const robmix::EnumerationTooLarge& e) {
        std::cerr << "error: EnumerationTooLarge: " << e.what() << "\n";
        return 4;
    } catch (const robmix::ExperimentDegenerate& e) {
        std::cerr << "error: ExperimentDegenerate: " << e.what() << "\n";
        return 4;
    } catch (const robmix::InsufficientGrid& e) {
        std::cerr << "error: InsufficientGrid: " << e.what() << "\n";
        return 4;
    } catch (const robmix::InsufficientDraws& e) {
        std::cerr << "error: InsufficientDraws: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: RuntimeError: " << e.what() << "\n";
        return 3;
    }
}
