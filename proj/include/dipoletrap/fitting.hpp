#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>
#include <boost/math/tools/roots.hpp>

#include "constants.hpp"
#include "errors.hpp"
#include "survival.hpp"
#include "trap_model.hpp"

/// Statistical reductions of simulated survival curves.
namespace dipoletrap {

// ---------------------------------------------------------------------------
// Cumulative Boltzmann distribution
// ---------------------------------------------------------------------------

/// Regularized lower incomplete gamma P(a, x): series below x = 2.5,
/// Lentz continued fraction for Q above.
inline double regularized_gamma_p(double a, double x)
{
    if (x <= 0.0)
        return 0.0;
    if (!std::isfinite(x))
        return 1.0;
    const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
    if (x < 2.5) {
        double term = 1.0 / a;
        double sum = term;
        for (int n = 1; n < 500; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-16)
                break;
        }
        return std::exp(log_prefactor) * sum;
    }
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny)
            d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16)
            break;
    }
    return 1.0 - std::exp(log_prefactor) * h;
}

/// Fraction of a 3D thermal ensemble, p(E) ~ sqrt(E) exp(-E/kT), with
/// energy below E.
inline double boltzmann_cdf(double energy, double kT)
{
    if (!(kT > 0.0))
        throw std::domain_error("boltzmann_cdf: kT must be positive");
    return regularized_gamma_p(1.5, std::max(energy, 0.0) / kT);
}

/// Energy E with boltzmann_cdf(E, kT) = p, for 0 <= p < 1.
inline double boltzmann_cdf_inverse(double p, double kT)
{
    if (!(p >= 0.0 && p < 1.0))
        throw std::domain_error("boltzmann_cdf_inverse: requires 0 <= p < 1");
    if (p == 0.0)
        return 0.0;
    auto f = [p](double x) { return regularized_gamma_p(1.5, x) - p; };
    double hi = 1.0;
    while (f(hi) < 0.0)
        hi *= 2.0;
    boost::math::tools::eps_tolerance<double> tol(50);
    std::uintmax_t iters = 200;
    const auto r = boost::math::tools::toms748_solve(f, 0.0, hi, -p, f(hi), tol, iters);
    return 0.5 * (r.first + r.second) * kT;
}

// ---------------------------------------------------------------------------
// Temperature fit
// ---------------------------------------------------------------------------

struct CdfPoint
{
    double energy = 0.0;       // J
    double probability = 0.0;  // fraction with energy below `energy`
    double sigma = 0.0;        // standard error of `probability`
};

struct BoltzmannFit
{
    double kT = 0.0;
    double kT_over_U0 = 0.0;
    double temperature = 0.0;  // K
    double variance = 0.0;     // of kT, J^2
    double residual_norm = 0.0;
    double chi2 = 0.0;
};

inline double temperature_chi2(const std::vector<CdfPoint>& pts, double kT)
{
    double chi2 = 0.0;
    for (const auto& p : pts) {
        const double r = (p.probability - boltzmann_cdf(p.energy, kT)) / p.sigma;
        chi2 += r * r;
    }
    return chi2;
}

/// Weighted least-squares fit of boltzmann_cdf to cumulative points over kT.
/// A coarse log-spaced scan brackets the minimum, golden-section search
/// refines it and the variance is 2 / (d^2 chi2 / dkT^2).
inline BoltzmannFit fit_temperature(std::vector<CdfPoint> pts, double depth)
{
    if (pts.size() < 4)
        throw FitError("fit_temperature: at least 4 points required");
    double emin = std::numeric_limits<double>::infinity();
    double emax = 0.0;
    for (auto& p : pts) {
        if (!(p.sigma > 0.0))
            throw FitError("fit_temperature: every point needs a positive error");
        if (p.energy > 0.0)
            emin = std::min(emin, p.energy);
        emax = std::max(emax, p.energy);
    }
    if (!(emax > 0.0))
        throw FitError("fit_temperature: no positive energies");

    const double lo = std::log(emin / 100.0);
    const double hi = std::log(emax * 100.0);
    constexpr int n_scan = 241;
    std::vector<double> chi(n_scan);
    int best = 0;
    for (int i = 0; i < n_scan; ++i) {
        chi[i] = temperature_chi2(pts, std::exp(lo + (hi - lo) * i / (n_scan - 1)));
        if (chi[i] < chi[best])
            best = i;
    }
    const auto [mn, mx] = std::minmax_element(chi.begin(), chi.end());
    if (*mx - *mn <= 1e-12 * std::max(1.0, *mx))
        throw FitError("fit_temperature: flat objective, the curve carries no temperature information");
    if (best == 0 || best == n_scan - 1)
        throw FitError("fit_temperature: minimum at the edge of the search range (no bracketing minimum)");

    const double step = (hi - lo) / (n_scan - 1);
    double a = lo + (best - 1) * step;
    double b = lo + (best + 1) * step;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    auto obj = [&](double u) { return temperature_chi2(pts, std::exp(u)); };
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = obj(c);
    double fd = obj(d);
    while (b - a > 1e-10) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = obj(c);
        }
        else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = obj(d);
        }
    }

    BoltzmannFit fit;
    fit.kT = std::exp(0.5 * (a + b));
    fit.chi2 = temperature_chi2(pts, fit.kT);
    const double h = 1e-3 * fit.kT;
    const double curvature =
        (temperature_chi2(pts, fit.kT + h) - 2.0 * fit.chi2 + temperature_chi2(pts, fit.kT - h)) / (h * h);
    fit.variance = curvature > 0.0 ? 2.0 / curvature : std::numeric_limits<double>::infinity();
    fit.kT_over_U0 = depth > 0.0 ? fit.kT / depth : 0.0;
    fit.temperature = fit.kT / constants::boltzmann;
    fit.residual_norm = std::sqrt(fit.chi2 / static_cast<double>(pts.size()));
    return fit;
}

/// Cumulative points from a survival curve whose abscissa has already been
/// mapped to initial energy (J).
inline std::vector<CdfPoint> cdf_points(const SurvivalCurve& curve)
{
    std::vector<CdfPoint> pts;
    for (std::size_t i = 0; i < curve.size(); ++i)
        if (curve.total[i] > 0)
            pts.push_back({curve.abscissa[i], curve.probability(i), curve.error(i)});
    return pts;
}

// ---------------------------------------------------------------------------
// Two-Gaussian dip fit
// ---------------------------------------------------------------------------

struct TwoGaussianFit
{
    std::array<double, 2> centers{};
    std::array<double, 2> depths{};
    std::array<double, 2> widths{};
    std::array<double, 2> center_errors{};
    double baseline = 0.0;
    double residual_norm = 0.0;
    bool single_dip = false;  // only one dip was resolvable; second entries are NaN
};

/// baseline - sum_j depth_j exp(-(x - c_j)^2 / (2 w_j^2))
inline double gaussian_dips(double x, double baseline, const double* params, int n_dips)
{
    double y = baseline;
    for (int j = 0; j < n_dips; ++j) {
        const double u = (x - params[3 * j + 1]) / params[3 * j + 2];
        y -= params[3 * j] * std::exp(-0.5 * u * u);
    }
    return y;
}

namespace detail {

struct DipFunctor
{
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    using QRSolver = Eigen::ColPivHouseholderQR<JacobianType>;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    const std::vector<double>* x;
    const std::vector<double>* y;
    const std::vector<double>* sigma;
    int n_dips;

    int inputs() const { return 1 + 3 * n_dips; }
    int values() const { return static_cast<int>(x->size()); }

    // params: [baseline, d1, c1, w1, d2, c2, w2]
    int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const
    {
        for (int i = 0; i < values(); ++i)
            r[i] = (gaussian_dips((*x)[i], p[0], p.data() + 1, n_dips) - (*y)[i]) / (*sigma)[i];
        return 0;
    }

    int df(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const
    {
        for (int i = 0; i < values(); ++i) {
            const double s = (*sigma)[i];
            jac(i, 0) = 1.0 / s;
            for (int j = 0; j < n_dips; ++j) {
                const double d = p[1 + 3 * j];
                const double c = p[2 + 3 * j];
                const double w = p[3 + 3 * j];
                const double u = ((*x)[i] - c) / w;
                const double e = std::exp(-0.5 * u * u);
                jac(i, 1 + 3 * j) = -e / s;
                jac(i, 2 + 3 * j) = -d * e * u / w / s;
                jac(i, 3 + 3 * j) = -d * e * u * u / w / s;
            }
        }
        return 0;
    }
};

inline std::vector<double> moving_average3(const std::vector<double>& v)
{
    std::vector<double> s(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t a = i == 0 ? 0 : i - 1;
        const std::size_t b = std::min(i + 1, v.size() - 1);
        double sum = 0.0;
        for (std::size_t k = a; k <= b; ++k)
            sum += v[k];
        s[i] = sum / static_cast<double>(b - a + 1);
    }
    return s;
}

}  // namespace detail

/// Fits baseline minus two Gaussian dips, initialized from the two deepest
/// local minima of the 3-point moving average. Falls back to a single dip
/// (flagged) when only one minimum stands out of the noise; throws FitError
/// for a flat curve.
inline TwoGaussianFit fit_two_gaussians(std::vector<double> x, std::vector<double> y, std::vector<double> sigma)
{
    const std::size_t n = x.size();
    if (n < 8 || y.size() != n || sigma.size() != n)
        throw FitError("fit_two_gaussians: at least 8 points with matching errors required");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> xs(n), ys(n), ss(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = x[order[i]];
        ys[i] = y[order[i]];
        ss[i] = std::max(sigma[order[i]], 1e-9);
    }

    const double xscale = std::max(std::abs(xs.front()), std::abs(xs.back()));
    for (auto& v : xs)
        v /= xscale;

    const auto smooth = detail::moving_average3(ys);
    std::vector<double> sorted = ys;
    std::sort(sorted.begin(), sorted.end());
    const double baseline0 = sorted[(3 * n) / 4];
    std::vector<double> noise = ss;
    std::sort(noise.begin(), noise.end());
    const double noise_floor = 2.0 * noise[n / 2] / std::sqrt(3.0);

    struct Minimum
    {
        std::size_t index;
        double depth;
    };
    std::vector<Minimum> minima;
    for (std::size_t i = 0; i < n; ++i) {
        const bool left = i == 0 || smooth[i] <= smooth[i - 1];
        const bool right = i + 1 == n || smooth[i] <= smooth[i + 1];
        const double depth = baseline0 - smooth[i];
        if (left && right && depth > noise_floor)
            minima.push_back({i, depth});
    }
    std::sort(minima.begin(), minima.end(), [](const Minimum& a, const Minimum& b) { return a.depth > b.depth; });
    std::vector<Minimum> chosen;
    for (const auto& m : minima) {
        bool separate = true;
        for (const auto& c : chosen)
            if ((m.index > c.index ? m.index - c.index : c.index - m.index) < 2)
                separate = false;
        if (separate)
            chosen.push_back(m);
        if (chosen.size() == 2)
            break;
    }
    if (chosen.empty())
        throw FitError("fit_two_gaussians: no dip resolvable above the noise (flat curve)");

    const double spacing = (xs.back() - xs.front()) / static_cast<double>(n - 1);
    auto initial_width = [&](const Minimum& m) {
        const double half = baseline0 - 0.5 * m.depth;
        std::size_t l = m.index;
        while (l > 0 && smooth[l] < half)
            --l;
        std::size_t r = m.index;
        while (r + 1 < n && smooth[r] < half)
            ++r;
        return std::max(0.5 * (xs[r] - xs[l]) / 1.1774, spacing);
    };

    const int n_dips = static_cast<int>(chosen.size());
    std::sort(chosen.begin(), chosen.end(), [](const Minimum& a, const Minimum& b) { return a.index < b.index; });
    Eigen::VectorXd p(1 + 3 * n_dips);
    p[0] = baseline0;
    for (int j = 0; j < n_dips; ++j) {
        p[1 + 3 * j] = chosen[j].depth;
        p[2 + 3 * j] = xs[chosen[j].index];
        p[3 + 3 * j] = initial_width(chosen[j]);
    }

    detail::DipFunctor functor{&xs, &ys, &ss, n_dips};
    Eigen::LevenbergMarquardt<detail::DipFunctor> lm(functor);
    lm.setMaxfev(2000);
    lm.setXtol(1e-12);
    lm.setFtol(1e-12);
    lm.minimize(p);

    Eigen::VectorXd r(n);
    functor(p, r);
    Eigen::MatrixXd jac(n, 1 + 3 * n_dips);
    functor.df(p, jac);
    const Eigen::MatrixXd cov = (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();

    TwoGaussianFit fit;
    fit.baseline = p[0];
    fit.single_dip = n_dips == 1;
    fit.residual_norm = std::sqrt(r.squaredNorm() / static_cast<double>(n));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    fit.centers = {nan, nan};
    fit.depths = {nan, nan};
    fit.widths = {nan, nan};
    fit.center_errors = {nan, nan};
    std::vector<int> idx(n_dips);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return p[2 + 3 * a] < p[2 + 3 * b]; });
    for (int k = 0; k < n_dips; ++k) {
        const int j = idx[k];
        fit.depths[k] = p[1 + 3 * j];
        fit.centers[k] = p[2 + 3 * j] * xscale;
        fit.widths[k] = std::abs(p[3 + 3 * j]) * xscale;
        fit.center_errors[k] = std::sqrt(std::max(cov(2 + 3 * j, 2 + 3 * j), 0.0)) * xscale;
    }
    return fit;
}

inline TwoGaussianFit fit_two_gaussians(const SurvivalCurve& curve)
{
    return fit_two_gaussians(curve.abscissa, curve.probabilities(), curve.errors());
}

// ---------------------------------------------------------------------------
// Gravity cutoff
// ---------------------------------------------------------------------------

struct CutoffFit
{
    double cutoff = 0.0;  // abscissa of the zero crossing
    double slope = 0.0;
    std::size_t n_points = 0;
};

/// Extrapolates the low-abscissa tail of a survival curve linearly to zero
/// survival. Uses the `max_points` smallest abscissae with 0 < p < 0.5.
inline CutoffFit gravity_cutoff_extrapolation(const SurvivalCurve& curve, std::size_t max_points = 4)
{
    std::vector<std::size_t> order(curve.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return curve.abscissa[a] < curve.abscissa[b]; });
    std::vector<double> xs, ps;
    for (std::size_t i : order) {
        const double p = curve.probability(i);
        if (curve.total[i] == 0 || p <= 0.0)
            continue;
        if (p >= 0.5)
            break;
        xs.push_back(curve.abscissa[i]);
        ps.push_back(p);
        if (xs.size() == max_points)
            break;
    }
    if (xs.size() < 3)
        throw FitError("gravity_cutoff_extrapolation: fewer than 3 points in the low-survival tail");

    const double m = static_cast<double>(xs.size());
    const double sx = std::accumulate(xs.begin(), xs.end(), 0.0);
    const double sp = std::accumulate(ps.begin(), ps.end(), 0.0);
    double sxx = 0.0;
    double sxp = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - sx / m) * (xs[i] - sx / m);
        sxp += (xs[i] - sx / m) * (ps[i] - sp / m);
    }
    const double slope = sxp / sxx;
    if (!(slope > 0.0))
        throw FitError("gravity_cutoff_extrapolation: survival does not decrease towards small abscissa");
    const double intercept = sp / m - slope * sx / m;
    return {-intercept / slope, slope, xs.size()};
}

// ---------------------------------------------------------------------------
// Physical summaries
// ---------------------------------------------------------------------------

/// Depth implied by a measured axial frequency (rad/s):
/// U0 = m lambda^2 (Omega_z / 2 pi)^2 / 2.
inline double depth_from_measured_frequency(double omega_axial, const TrapConfig& cfg)
{
    if (!(omega_axial > 0.0))
        throw std::domain_error("depth_from_measured_frequency: frequency must be positive");
    const double f = omega_axial / (2.0 * constants::pi);
    return cfg.atom_mass * cfg.wavelength_trap * cfg.wavelength_trap * f * f / 2.0;
}

/// kT / (hbar Omega_z), the ratio without the zero-point offset.
inline double thermal_occupation_ratio(double kT, double omega_axial)
{
    return kT / (constants::hbar * omega_axial);
}

/// Classical-limit mean quantum number kT/(hbar Omega) - 1/2, floored at 0.
inline double mean_quantum_number(double kT, double omega_axial)
{
    if (!(kT > 0.0) || !(omega_axial > 0.0))
        throw std::domain_error("mean_quantum_number: inputs must be positive");
    return std::max(0.0, thermal_occupation_ratio(kT, omega_axial) - 0.5);
}

}  // namespace dipoletrap
