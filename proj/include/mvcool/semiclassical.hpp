#pragma once

#include <utility>
#include <vector>

#include "mvcool/errors.hpp"
#include "mvcool/fock.hpp"

namespace mvcool {

// One cooling round's control settings. The measurement displacement is
// epsilon*e^{i theta_m} in the Y spin basis; the correction is
// alpha*e^{i(theta_m - pi/2)} in X, i.e. along the perpendicular quadrature.
struct RoundParams {
    double epsilon = 0.0;
    double alpha = 0.0;
    double theta_m = 1.5707963267948966;
    double theta_c = 0.0;  // defaults to theta_m - pi/2

    static RoundParams make(double epsilon, double alpha,
                            double theta_m = 1.5707963267948966) {
        return {epsilon, alpha, theta_m, theta_m - 1.5707963267948966};
    }
};

// Sampled 1-D probability density on a uniform grid.
struct GridDensity {
    double x0 = 0.0;
    double dx = 0.0;
    std::vector<double> f;

    int size() const { return static_cast<int>(f.size()); }
    double x(int i) const { return x0 + i * dx; }

    double integral() const;           // trapezoid
    double moment(int k) const;        // trapezoid of x^k f(x)
    void normalize();                  // scale to unit integral
};

// Gaussian density of width s on a grid spanning +-span_sigmas*s.
GridDensity gaussian_grid(double s, double span_sigmas = 10.0, int points = 8192);

// P(+X|x), P(-X|x) = (1 -/+ sin(4 eps x))/2; sums to 1 exactly.
std::pair<double, double> conditional_prob(double x, double epsilon);

struct BayesRoundResult {
    GridDensity f1;        // post-round density (normalized)
    GridDensity m1_plus;   // conditional density given +X (pre-shift)
    GridDensity m1_minus;  // conditional density given -X (pre-shift)
    double p_plus = 0.5;
    double p_minus = 0.5;
};

// Bayesian update of one quadrature: modular measurement, conditional
// feedback shift by -+alpha, and recombination
//   f1(q) = P(+X) m1(q-alpha|+X) + P(-X) m1(q+alpha|-X).
// Shifts use linear interpolation so densities stay non-negative.
// Throws GridTooNarrow if a shift would clip more than 1e-8 of mass.
BayesRoundResult bayes_round(const GridDensity& f, const RoundParams& params);

// Full-round classical mean energy (both quadratures), dimensionless:
//   E/(hbar w) = 2 (alpha^2 + s^2 (1 - 8 alpha eps e^{-8 eps^2 s^2})).
double classical_energy(double epsilon, double alpha, const ThermalSpec& spec);

// Per-quadrature second moment after one contraction of a Gaussian of
// variance s2 (the term inside the energy formula above).
double classical_variance_after(double epsilon, double alpha, double s2);

// Classical conditional optimum alpha(eps) = 4 eps s^2 e^{-8 eps^2 s^2}.
double classical_alpha_given_epsilon(double epsilon, double s2);

// Closed-form optimum: eps = 1/(4s), alpha = s/sqrt(e); the minimized energy
// ratio is (e-1)/e.
RoundParams optimal_classical_params(const ThermalSpec& spec);

// Derivative-free 2-D minimization of the classical energy (coordinate
// descent with golden sections); verification path for the closed form.
RoundParams optimal_classical_params_numeric(const ThermalSpec& spec);

// Mass outside |x| > k*s_ref.
double tail_mass(const GridDensity& f, double k, double s_ref);

} // namespace mvcool
