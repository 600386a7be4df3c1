#include "robmix/optimizer.hpp"

#include <cmath>
#include <limits>

namespace robmix {

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::GradTol: return "grad_tol";
        case Termination::StepTol: return "step_tol";
        case Termination::MaxIter: return "max_iter";
        case Termination::LineSearchFail: return "line_search_fail";
    }
    return "unknown";
}

namespace {

constexpr double kArmijoC1 = 1e-4;
constexpr double kShrink = 0.5;
constexpr int kMaxBacktracks = 60;

struct LineSearchOutcome {
    bool accepted = false;
    bool saw_finite = false;
    double step = 0.0;
    double loss = 0.0;
    VectorXd x;
};

LineSearchOutcome backtrack(const std::function<double(const VectorXd&)>& loss_fn,
                            const VectorXd& x, double fx, const VectorXd& direction,
                            double directional_derivative) {
    LineSearchOutcome out;
    double alpha = 1.0;
    for (int k = 0; k < kMaxBacktracks; ++k) {
        VectorXd candidate = x + alpha * direction;
        const double f = loss_fn(candidate);
        if (std::isfinite(f)) {
            out.saw_finite = true;
            if (f <= fx + kArmijoC1 * alpha * directional_derivative) {
                out.accepted = true;
                out.step = alpha;
                out.loss = f;
                out.x = std::move(candidate);
                return out;
            }
        }
        alpha *= kShrink;
    }
    return out;
}

}  // namespace

MinimizeResult minimize(const ObjectiveHandle& objective, const VectorXd& init,
                        const MinimizeOptions& opts) {
    if (!objective.eval) {
        throw std::invalid_argument("minimize: objective.eval is empty");
    }
    const auto loss_only = [&](const VectorXd& x) -> double {
        if (objective.loss_only) return objective.loss_only(x);
        return objective.eval(x).first;
    };

    const int dim = static_cast<int>(init.size());
    VectorXd x = init;
    auto [fx, gx] = objective.eval(x);
    if (!std::isfinite(fx) || !gx.allFinite()) {
        throw NonFiniteObjective("minimize: objective not finite at the initial point");
    }

    MinimizeResult result;
    result.x = x;
    result.loss = fx;
    result.grad_norm = gx.lpNorm<Eigen::Infinity>();
    if (result.grad_norm <= opts.gtol) {
        result.converged = true;
        result.termination = Termination::GradTol;
        return result;
    }

    MatrixXd H = MatrixXd::Identity(dim, dim);  // inverse-Hessian approximation
    bool first_update = true;

    for (int it = 1; it <= opts.max_iter; ++it) {
        VectorXd direction = -(H * gx);
        double slope = gx.dot(direction);
        bool steepest = false;
        if (!(slope < 0.0)) {
            H.setIdentity();
            first_update = true;
            direction = -gx;
            slope = gx.dot(direction);
            steepest = true;
        }

        LineSearchOutcome ls = backtrack(loss_only, x, fx, direction, slope);
        if (!ls.accepted && !steepest) {
            // Retry along steepest descent before giving up.
            H.setIdentity();
            first_update = true;
            direction = -gx;
            slope = gx.dot(direction);
            ls = backtrack(loss_only, x, fx, direction, slope);
        }
        if (!ls.accepted) {
            if (!ls.saw_finite) {
                throw NonFiniteObjective("minimize: backtracking found no finite objective value");
            }
            result.x = x;
            result.loss = fx;
            result.grad_norm = gx.lpNorm<Eigen::Infinity>();
            result.iterations = it - 1;
            result.converged = false;
            result.termination = Termination::LineSearchFail;
            return result;
        }

        auto [fn, gn] = objective.eval(ls.x);
        if (!std::isfinite(fn) || !gn.allFinite()) {
            throw NonFiniteObjective("minimize: gradient not finite at accepted point");
        }

        const VectorXd s = ls.x - x;
        const VectorXd y = gn - gx;
        x = ls.x;
        fx = fn;
        gx = gn;

        if (opts.on_iterate) {
            opts.on_iterate(it, x, fx);
        }

        result.x = x;
        result.loss = fx;
        result.grad_norm = gx.lpNorm<Eigen::Infinity>();
        result.iterations = it;

        if (result.grad_norm <= opts.gtol) {
            result.converged = true;
            result.termination = Termination::GradTol;
            return result;
        }
        // A tiny step only signals convergence when taken at full length; a
        // backtracked tiny step is a stalled line search, not a stationary
        // point.
        if (ls.step == 1.0 && s.norm() <= opts.step_tol * std::max(1.0, x.norm())) {
            result.converged = true;
            result.termination = Termination::StepTol;
            return result;
        }

        const double ys = y.dot(s);
        if (ys > 1e-12 * y.norm() * s.norm()) {
            if (first_update) {
                H = (ys / y.squaredNorm()) * MatrixXd::Identity(dim, dim);
                first_update = false;
            }
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            const double rho = 1.0 / ys;
            const VectorXd Hy = H * y;
            const double yHy = y.dot(Hy);
            H += (rho * rho * yHy + rho) * (s * s.transpose()) -
                 rho * (Hy * s.transpose() + s * Hy.transpose());
        }
    }

    result.converged = false;
    result.termination = Termination::MaxIter;
    return result;
}

VectorXd finite_diff_gradient(const std::function<double(const VectorXd&)>& loss,
                              const VectorXd& x, double h) {
    const int dim = static_cast<int>(x.size());
    VectorXd grad(dim);
    VectorXd probe = x;
    for (int j = 0; j < dim; ++j) {
        const double step = h * std::max(1.0, std::abs(x(j)));
        probe(j) = x(j) + step;
        const double fplus = loss(probe);
        probe(j) = x(j) - step;
        const double fminus = loss(probe);
        probe(j) = x(j);
        if (!std::isfinite(fplus) || !std::isfinite(fminus)) {
            throw NonFiniteObjective("finite_diff_gradient: loss not finite near x");
        }
        grad(j) = (fplus - fminus) / (2.0 * step);
    }
    return grad;
}

}  // namespace robmix
