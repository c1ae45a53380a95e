#include "mvcool/semiclassical.hpp"

#include <algorithm>
#include <cmath>

#include "mvcool/fit.hpp"

namespace mvcool {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double GridDensity::integral() const {
    double sum = 0.0;
    for (int i = 0; i + 1 < size(); ++i) sum += 0.5 * (f[i] + f[i + 1]);
    return sum * dx;
}

double GridDensity::moment(int k) const {
    auto g = [&](int i) { return std::pow(x(i), k) * f[i]; };
    double sum = 0.0;
    for (int i = 0; i + 1 < size(); ++i) sum += 0.5 * (g(i) + g(i + 1));
    return sum * dx;
}

void GridDensity::normalize() {
    const double z = integral();
    if (z <= 0.0) throw NumericalError("GridDensity: non-positive total mass");
    for (auto& v : f) v /= z;
}

GridDensity gaussian_grid(double s, double span_sigmas, int points) {
    GridDensity g;
    const double half = span_sigmas * s;
    g.x0 = -half;
    g.dx = 2.0 * half / (points - 1);
    g.f.resize(points);
    const double norm = 1.0 / (s * std::sqrt(2.0 * kPi));
    for (int i = 0; i < points; ++i) {
        const double x = g.x(i);
        g.f[i] = norm * std::exp(-x * x / (2.0 * s * s));
    }
    g.normalize();
    return g;
}

std::pair<double, double> conditional_prob(double x, double epsilon) {
    const double sn = std::sin(4.0 * epsilon * x);
    double plus = 0.5 * (1.0 - sn);
    plus = std::clamp(plus, 0.0, 1.0);
    return {plus, 1.0 - plus};
}

namespace {

// f(x - shift) by linear interpolation; reports the mass shifted off-grid.
GridDensity shifted(const GridDensity& f, double shift, double* clipped) {
    GridDensity out = f;
    for (int i = 0; i < f.size(); ++i) {
        const double xs = f.x(i) - shift;
        const double pos = (xs - f.x0) / f.dx;
        const int j = static_cast<int>(std::floor(pos));
        if (j < 0 || j + 1 >= f.size()) {
            out.f[i] = 0.0;
        } else {
            const double w = pos - j;
            out.f[i] = (1.0 - w) * f.f[j] + w * f.f[j + 1];
        }
    }
    if (clipped) {
        const double x_end = f.x(f.size() - 1);
        double lost = 0.0;
        for (int i = 0; i + 1 < f.size(); ++i) {
            const double xm = 0.5 * (f.x(i) + f.x(i + 1));
            const bool off = shift > 0 ? (xm > x_end - shift) : (xm < f.x0 - shift);
            if (off) lost += 0.5 * (f.f[i] + f.f[i + 1]) * f.dx;
        }
        *clipped = lost;
    }
    return out;
}

} // namespace

BayesRoundResult bayes_round(const GridDensity& f, const RoundParams& params) {
    BayesRoundResult r;
    const int n = f.size();
    GridDensity num_plus = f, num_minus = f;
    for (int i = 0; i < n; ++i) {
        auto [pp, pm] = conditional_prob(f.x(i), params.epsilon);
        num_plus.f[i] = pp * f.f[i];
        num_minus.f[i] = pm * f.f[i];
    }
    r.p_plus = num_plus.integral();
    r.p_minus = num_minus.integral();

    r.m1_plus = num_plus;
    r.m1_minus = num_minus;
    if (r.p_plus > 0) for (auto& v : r.m1_plus.f) v /= r.p_plus;
    if (r.p_minus > 0) for (auto& v : r.m1_minus.f) v /= r.p_minus;

    // Feedback: +X outcome shifts the density by +alpha, -X by -alpha.
    double clip_p = 0.0, clip_m = 0.0;
    GridDensity shifted_plus = shifted(num_plus, params.alpha, &clip_p);
    GridDensity shifted_minus = shifted(num_minus, -params.alpha, &clip_m);
    if (clip_p > 1e-8 || clip_m > 1e-8)
        throw GridTooNarrow("bayes_round: shifted density clips " +
                            std::to_string(std::max(clip_p, clip_m)) + " of mass");

    r.f1 = f;
    for (int i = 0; i < n; ++i) r.f1.f[i] = shifted_plus.f[i] + shifted_minus.f[i];
    r.f1.normalize();
    return r;
}

double classical_variance_after(double epsilon, double alpha, double s2) {
    return alpha * alpha +
           s2 * (1.0 - 8.0 * alpha * epsilon * std::exp(-8.0 * epsilon * epsilon * s2));
}

double classical_energy(double epsilon, double alpha, const ThermalSpec& spec) {
    return 2.0 * classical_variance_after(epsilon, alpha, spec.s2());
}

double classical_alpha_given_epsilon(double epsilon, double s2) {
    return 4.0 * epsilon * s2 * std::exp(-8.0 * epsilon * epsilon * s2);
}

RoundParams optimal_classical_params(const ThermalSpec& spec) {
    const double s = spec.s();
    return RoundParams::make(1.0 / (4.0 * s), s / std::sqrt(std::exp(1.0)));
}

RoundParams optimal_classical_params_numeric(const ThermalSpec& spec) {
    const double s = spec.s();
    const double s2 = spec.s2();
    double eps = 0.3 / s;  // deliberately off the known optimum
    double alpha = 0.5 * s;
    for (int sweep = 0; sweep < 60; ++sweep) {
        const double eps_prev = eps, alpha_prev = alpha;
        eps = golden_section_min(
            [&](double e) { return classical_variance_after(e, alpha, s2); }, 1e-6 / s,
            2.0 / s, 1e-10 / s);
        alpha = golden_section_min(
            [&](double a) { return classical_variance_after(eps, a, s2); }, 0.0, 2.0 * s,
            1e-10 * s);
        if (std::abs(eps - eps_prev) < 1e-9 / s && std::abs(alpha - alpha_prev) < 1e-9 * s)
            break;
    }
    return RoundParams::make(eps, alpha);
}

double tail_mass(const GridDensity& f, double k, double s_ref) {
    const double cut = k * s_ref;
    double sum = 0.0;
    for (int i = 0; i + 1 < f.size(); ++i) {
        const double xm = 0.5 * (f.x(i) + f.x(i + 1));
        if (std::abs(xm) > cut) sum += 0.5 * (f.f[i] + f.f[i + 1]) * f.dx;
    }
    return sum;
}

} // namespace mvcool
