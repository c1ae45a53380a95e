#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace mvcool {

// Deterministic golden-section minimization on [a, b].
double golden_section_min(const std::function<double(double)>& f, double a, double b,
                          double abs_tol, int max_iter = 200);

struct LmOptions {
    int max_iter = 200;
    double lambda0 = 1e-3;
    double step_tol = 1e-10;
    double chi2_rel_tol = 1e-12;
    // Relative central-difference step for the Jacobian. Wide enough to
    // average over sub-resolution ripples of oscillatory models.
    double fd_step = 1e-4;
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Damped least squares on weighted residuals r_i(theta) = (y_i - model_i)/sigma_i.
// The callback fills residuals; the Jacobian is taken by forward differences.
// Deterministic for a given initial point.
LmResult lm_fit(const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& residuals,
                const Eigen::VectorXd& initial, const LmOptions& opt = {});

// Lawson-Hanson non-negative least squares: min |A x - b| s.t. x >= 0.
Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     int max_iter = 300, double tol = 1e-12);

} // namespace mvcool
