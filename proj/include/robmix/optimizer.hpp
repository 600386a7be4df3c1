#pragma once

#include "robmix/types.hpp"

#include <functional>
#include <utility>

namespace robmix {

// Smooth objective over an unconstrained parameter vector. eval returns the
// loss and its gradient; it must be reentrant. loss_only is an optional
// cheaper path used inside line searches; when empty, eval is used.
struct ObjectiveHandle {
    std::function<std::pair<double, VectorXd>(const VectorXd&)> eval;
    std::function<double(const VectorXd&)> loss_only;
    int dim = 0;
};

enum class Termination { GradTol, StepTol, MaxIter, LineSearchFail };

const char* termination_name(Termination t);

struct MinimizeOptions {
    double gtol = 1e-6;       // sup-norm of the gradient
    double step_tol = 1e-10;  // relative step length
    int max_iter = 500;
    // Observer for accepted iterates (index, point, loss); may be empty.
    std::function<void(int, const VectorXd&, double)> on_iterate;
};

struct MinimizeResult {
    VectorXd x;
    double loss = 0.0;
    double grad_norm = 0.0;  // sup-norm at x
    int iterations = 0;
    bool converged = false;
    Termination termination = Termination::MaxIter;
};

// BFGS with backtracking Armijo line search. Deterministic: identical inputs
// produce bit-identical results.
MinimizeResult minimize(const ObjectiveHandle& objective, const VectorXd& init,
                        const MinimizeOptions& opts = {});

// Central finite differences with component-wise step h * max(1, |x_j|).
VectorXd finite_diff_gradient(const std::function<double(const VectorXd&)>& loss,
                              const VectorXd& x, double h = 1e-6);

// Converged estimate on the model scale plus optimizer telemetry.
struct FitResult {
    ParameterPoint point;
    double loss = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    Termination termination = Termination::MaxIter;
};

}  // namespace robmix
