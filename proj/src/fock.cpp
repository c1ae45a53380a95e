#include "mvcool/fock.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace mvcool {

int default_fock_dim(double nbar) {
    int dim = static_cast<int>(std::ceil(16.0 * (nbar + 1.0)));
    return std::max(32, dim);
}

double FockState::tail_mass(double fraction) const {
    const int n = dim();
    const int start = std::max(0, n - static_cast<int>(std::ceil(fraction * n)));
    double mass = 0.0;
    for (int i = start; i < n; ++i) mass += rho(i, i).real();
    return mass;
}

Matrix ladder_op(int dim) {
    Matrix a = Matrix::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

Matrix number_op(int dim) {
    Matrix n = Matrix::Zero(dim, dim);
    for (int k = 0; k < dim; ++k) n(k, k) = static_cast<double>(k);
    return n;
}

Matrix position_op(int dim) {
    Matrix a = ladder_op(dim);
    return 0.5 * (a + a.adjoint());
}

Matrix momentum_op(int dim) {
    Matrix a = ladder_op(dim);
    return (a - a.adjoint()) / cplx(0.0, 2.0);
}

FockState make_thermal(const ThermalSpec& spec, int dim) {
    if (dim < 1) throw ConfigError("make_thermal: dim must be positive");
    if (spec.nbar < 0.0) throw ConfigError("make_thermal: nbar must be >= 0");

    Matrix rho = Matrix::Zero(dim, dim);
    if (spec.nbar == 0.0) {
        rho(0, 0) = 1.0;
        return {rho};
    }
    const double r = spec.nbar / (spec.nbar + 1.0);
    double total = 0.0;
    double p = 1.0 / (spec.nbar + 1.0);
    for (int n = 0; n < dim; ++n) {
        rho(n, n) = p;
        total += p;
        p *= r;
    }
    const double tail = 1.0 - total;  // == r^dim exactly for the geometric law
    if (tail > 1e-4)
        throw TruncationTooSmall("make_thermal: discarded tail mass " +
                                 std::to_string(tail) + " exceeds 1e-4");
    rho /= total;
    return {rho};
}

DisplacementOperator displacement(cplx gamma, int dim) {
    if (std::norm(gamma) > dim / 8.0)
        throw TruncationTooSmall("displacement: |gamma|^2 > dim/8");
    DisplacementFactory factory(std::arg(gamma), dim);
    return {gamma, factory(std::abs(gamma))};
}

DisplacementFactory::DisplacementFactory(double theta, int dim) {
    // Generator of D(r e^{i theta}) is r*(e^{i theta} a^dag - e^{-i theta} a),
    // anti-Hermitian; factor out r and diagonalize i*(that) once.
    Matrix a = ladder_op(dim);
    Matrix herm = cplx(0.0, 1.0) *
                  (std::polar(1.0, theta) * a.adjoint() - std::polar(1.0, -theta) * a);
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
}

Matrix DisplacementFactory::operator()(double r) const {
    const int dim = static_cast<int>(evals_.size());
    Vector phase(dim);
    for (int k = 0; k < dim; ++k) phase(k) = std::polar(1.0, -r * evals_(k));
    return evecs_ * phase.asDiagonal() * evecs_.adjoint();
}

StateMoments mean_energy(const FockState& state) {
    const int dim = state.dim();
    const Matrix& rho = state.rho;

    double n_mean = 0.0;
    for (int k = 0; k < dim; ++k) n_mean += k * rho(k, k).real();

    // <a> and <a^2> from the first two off-diagonals.
    cplx a_mean = 0.0, a2_mean = 0.0;
    for (int k = 1; k < dim; ++k) a_mean += std::sqrt(static_cast<double>(k)) * rho(k, k - 1);
    for (int k = 2; k < dim; ++k)
        a2_mean += std::sqrt(static_cast<double>(k) * (k - 1)) * rho(k, k - 2);

    // q = (a+a^dag)/2:  <q^2> = (2<n>+1 + 2Re<a^2>)/4, <p^2> with -Re<a^2>.
    StateMoments m;
    m.nbar = n_mean;
    m.energy = n_mean + 0.5;
    m.q = a_mean.real();
    m.p = a_mean.imag();
    m.qq = (2.0 * n_mean + 1.0 + 2.0 * a2_mean.real()) / 4.0;
    m.pp = (2.0 * n_mean + 1.0 - 2.0 * a2_mean.real()) / 4.0;
    return m;
}

double hermiticity_defect(const Matrix& rho) {
    return (rho - rho.adjoint()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Matrix& rho) {
    Matrix sym = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

bool is_valid_density(const FockState& state, double trace_tol, double herm_tol,
                      double pos_tol) {
    if (std::abs(state.trace_real() - 1.0) > trace_tol) return false;
    if (hermiticity_defect(state.rho) > herm_tol) return false;
    return min_eigenvalue(state.rho) >= -pos_tol;
}

double entropy_thermal(double nbar) {
    if (nbar <= 0.0) return 0.0;
    return -nbar * std::log(nbar / (nbar + 1.0)) + std::log(nbar + 1.0);
}

double entropy_thermal_large_nbar(double nbar) { return std::log(nbar); }

double entropy_budget_ratio() { return 4.0 * (std::exp(1.0) - 1.0) / std::exp(1.0); }

Matrix rotation_op(double theta, int dim) {
    Matrix r = Matrix::Zero(dim, dim);
    for (int n = 0; n < dim; ++n) r(n, n) = std::polar(1.0, theta * n);
    return r;
}

} // namespace mvcool
