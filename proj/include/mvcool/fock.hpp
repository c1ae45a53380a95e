#pragma once

#include <Eigen/Dense>
#include <complex>

#include "mvcool/errors.hpp"

namespace mvcool {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Phase-space convention used throughout: q = (a+a^dag)/2, p = (a-a^dag)/(2i),
// so [q,p] = i/2 and a thermal state has <q^2> = s^2 = (nbar+1/2)/2.
// Energies are reported dimensionless as E/(hbar*omega) = <n> + 1/2.

struct ThermalSpec {
    double nbar = 0.0;

    double s() const { return std::sqrt((nbar + 0.5) / 2.0); }
    double s2() const { return (nbar + 0.5) / 2.0; }
};

// Default Fock truncation for a thermal state of the given occupation.
// The geometric tail beyond 16*(nbar+1) levels is < 1e-7 and biases <n>
// by less than 1e-4 up to nbar ~ 60; the headroom also absorbs the
// displacement spread of one cooling round.
int default_fock_dim(double nbar);

struct FockState {
    Matrix rho;

    int dim() const { return static_cast<int>(rho.rows()); }
    double trace_real() const { return rho.trace().real(); }

    // Population sum in the top `fraction` of levels (truncation health).
    double tail_mass(double fraction = 0.1) const;
};

struct DisplacementOperator {
    cplx gamma;
    Matrix matrix;
};

// Ladder and quadrature operators in the truncated basis.
Matrix ladder_op(int dim);                 // a
Matrix number_op(int dim);                 // a^dag a
Matrix position_op(int dim);               // (a+a^dag)/2
Matrix momentum_op(int dim);               // (a-a^dag)/(2i)

// Diagonal thermal density matrix p_n = nbar^n/(nbar+1)^(n+1), renormalized.
// Throws TruncationTooSmall if the discarded tail exceeds 1e-4.
FockState make_thermal(const ThermalSpec& spec, int dim);

// D(gamma) = exp(gamma a^dag - conj(gamma) a)
//          = exp(2i(Im{gamma} q - Re{gamma} p)),
// built by exact eigendecomposition of the generator.
// Throws TruncationTooSmall if |gamma|^2 > dim/8.
DisplacementOperator displacement(cplx gamma, int dim);

// Reusable eigendecomposition for displacements along a fixed phase-space
// direction: D(r e^{i theta}) for any real r from one factorization.
class DisplacementFactory {
public:
    DisplacementFactory(double theta, int dim);
    Matrix operator()(double r) const;

    const Eigen::VectorXd& eigenvalues() const { return evals_; }
    const Matrix& eigenvectors() const { return evecs_; }

private:
    Eigen::VectorXd evals_;
    Matrix evecs_;
};

struct StateMoments {
    double energy;   // E/(hbar*omega) = <n> + 1/2
    double nbar;     // <n>
    double qq;       // <q^2>
    double pp;       // <p^2>
    double q;        // <q>
    double p;        // <p>
};

StateMoments mean_energy(const FockState& state);

// Diagnostics for density-matrix validity.
double hermiticity_defect(const Matrix& rho);      // max |rho - rho^dag|
double min_eigenvalue(const Matrix& rho);
bool is_valid_density(const FockState& state, double trace_tol = 1e-9,
                      double herm_tol = 1e-12, double pos_tol = 1e-9);

// Thermal-state von Neumann entropy in nats:
// S = -nbar ln(nbar/(nbar+1)) + ln(nbar+1).
double entropy_thermal(double nbar);

// Leading-order large-nbar approximation, S ~ ln(nbar).
double entropy_thermal_large_nbar(double nbar);

// Ideal energy reduction from two spin resets is a factor 4 (entropy budget
// 2 ln 2); the protocol achieves 1/0.632 per round, ratio 4*(e-1)/e = 2.53.
double entropy_budget_ratio();

// exp(i theta n) phase-space rotation (diagonal).
Matrix rotation_op(double theta, int dim);

} // namespace mvcool
