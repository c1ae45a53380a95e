#include "mvcool/fit.hpp"

#include <cmath>
#include <limits>

#include "mvcool/errors.hpp"

namespace mvcool {

double golden_section_min(const std::function<double(double)>& f, double a, double b,
                          double abs_tol, int max_iter) {
    const double invphi = 0.6180339887498949;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int it = 0; it < max_iter && (b - a) > abs_tol; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

namespace {

void fill_jacobian(const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& residuals,
                   const Eigen::VectorXd& theta, double fd_step, Eigen::MatrixXd& jac) {
    Eigen::VectorXd r_hi, r_lo;
    for (int j = 0; j < theta.size(); ++j) {
        double h = fd_step * std::max(1.0, std::abs(theta(j)));
        Eigen::VectorXd tp = theta, tm = theta;
        tp(j) += h;
        tm(j) -= h;
        residuals(tp, r_hi);
        residuals(tm, r_lo);
        jac.col(j) = (r_hi - r_lo) / (2.0 * h);
    }
}

} // namespace

LmResult lm_fit(const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& residuals,
                const Eigen::VectorXd& initial, const LmOptions& opt) {
    const int np = static_cast<int>(initial.size());
    Eigen::VectorXd theta = initial;
    Eigen::VectorXd r;
    residuals(theta, r);
    const int nr = static_cast<int>(r.size());
    double chi2 = r.squaredNorm();
    double lambda = opt.lambda0;

    Eigen::MatrixXd jac(nr, np);
    Eigen::VectorXd r_pert(nr);
    LmResult result;

    bool done = false;
    for (int it = 0; it < opt.max_iter && !done; ++it) {
        result.iterations = it + 1;
        fill_jacobian(residuals, theta, opt.fd_step, jac);
        Eigen::MatrixXd jtj = jac.transpose() * jac;
        Eigen::VectorXd jtr = jac.transpose() * r;

        bool stepped = false;
        for (int tries = 0; tries < 24; ++tries) {
            Eigen::MatrixXd damped = jtj;
            damped.diagonal().array() += lambda * (jtj.diagonal().array().abs() + 1e-12);
            Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
            Eigen::VectorXd candidate = theta + delta;
            residuals(candidate, r_pert);
            double chi2_new = r_pert.squaredNorm();
            if (chi2_new < chi2) {
                double rel = (chi2 - chi2_new) / std::max(chi2, 1e-300);
                double step = delta.norm() / std::max(1.0, theta.norm());
                theta = candidate;
                r = r_pert;
                chi2 = chi2_new;
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                if (step < opt.step_tol || rel < opt.chi2_rel_tol) {
                    result.converged = true;
                    done = true;
                }
                break;
            }
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
        if (!stepped) {
            result.converged = true;  // stationary within the damping range
            break;
        }
    }

    result.params = theta;
    result.chi2 = chi2;
    // Covariance (J^T J)^{-1} scaled by reduced chi-square.
    fill_jacobian(residuals, theta, opt.fd_step, jac);
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    jtj.diagonal().array() += 1e-14 * (jtj.diagonal().array().abs() + 1.0);
    const double dof = std::max(1, nr - np);
    result.covariance = jtj.inverse() * std::max(1.0, chi2 / dof);
    return result;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iter,
                     double tol) {
    const int n = static_cast<int>(A.cols());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(n, false);
    Eigen::VectorXd w = A.transpose() * (b - A * x);

    for (int outer = 0; outer < max_iter; ++outer) {
        int best = -1;
        double best_w = tol;
        for (int j = 0; j < n; ++j) {
            if (!passive[j] && w(j) > best_w) {
                best_w = w(j);
                best = j;
            }
        }
        if (best < 0) break;
        passive[best] = true;

        for (int inner = 0; inner < max_iter; ++inner) {
            std::vector<int> idx;
            for (int j = 0; j < n; ++j)
                if (passive[j]) idx.push_back(j);
            Eigen::MatrixXd Ap(A.rows(), idx.size());
            for (size_t k = 0; k < idx.size(); ++k) Ap.col(k) = A.col(idx[k]);
            Eigen::VectorXd z =
                (Ap.transpose() * Ap)
                    .ldlt()
                    .solve(Ap.transpose() * b);

            bool feasible = true;
            for (size_t k = 0; k < idx.size(); ++k)
                if (z(k) <= 0.0) feasible = false;
            if (feasible) {
                x.setZero();
                for (size_t k = 0; k < idx.size(); ++k) x(idx[k]) = z(k);
                break;
            }
            // Backtrack toward the feasible boundary.
            double alpha = std::numeric_limits<double>::infinity();
            for (size_t k = 0; k < idx.size(); ++k) {
                if (z(k) <= 0.0) {
                    double xi = x(idx[k]);
                    double denom = xi - z(k);
                    if (denom > 0) alpha = std::min(alpha, xi / denom);
                }
            }
            if (!std::isfinite(alpha)) alpha = 0.0;
            for (size_t k = 0; k < idx.size(); ++k) {
                double xi = x(idx[k]);
                x(idx[k]) = xi + alpha * (z(k) - xi);
                if (x(idx[k]) <= tol) {
                    x(idx[k]) = 0.0;
                    passive[idx[k]] = false;
                }
            }
        }
        w = A.transpose() * (b - A * x);
    }
    return x;
}

} // namespace mvcool
