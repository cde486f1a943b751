#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "constants.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "trap_model.hpp"
#include "vec3.hpp"

/// Adiabatic lowering of the trap: the action invariant of a 1D well, the
/// lowering ramp, random initial conditions at fixed energy and the 3D
/// Monte Carlo map from initial energy to escape depth.
namespace dipoletrap {

// ---------------------------------------------------------------------------
// 1D action invariant
// ---------------------------------------------------------------------------

enum class ShapeKind { axial_cosine, radial_gaussian };

/// Symmetric 1D well with V(0) = 0 and sup V = depth:
///   axial_cosine:    V(x) = U sin^2(x/scale)           (scale = 1/k)
///   radial_gaussian: V(x) = U [1 - exp(-2 x^2/scale^2)]  (scale = w0)
struct PotentialShape
{
    ShapeKind kind = ShapeKind::axial_cosine;
    double depth = 0.0;
    double scale = 0.0;
};

inline PotentialShape axial_shape(double depth, const TrapConfig& cfg)
{
    return {ShapeKind::axial_cosine, depth, 1.0 / wavenumber(cfg)};
}

inline PotentialShape radial_shape(double depth, const TrapConfig& cfg)
{
    return {ShapeKind::radial_gaussian, depth, cfg.waist};
}

inline double shape_potential(double x, const PotentialShape& s)
{
    if (s.kind == ShapeKind::axial_cosine) {
        const double v = std::sin(x / s.scale);
        return s.depth * v * v;
    }
    return s.depth * -std::expm1(-2.0 * x * x / (s.scale * s.scale));
}

/// Harmonic frequency at the bottom of the well.
inline double harmonic_frequency(const PotentialShape& s, double mass)
{
    if (s.kind == ShapeKind::axial_cosine)
        return std::sqrt(2.0 * s.depth / mass) / s.scale;
    return std::sqrt(4.0 * s.depth / mass) / s.scale;
}

/// Turning point x_max > 0 with V(x_max) = E, for 0 <= E < U.
inline double turning_point(double energy, const PotentialShape& s)
{
    const double r = std::clamp(energy / s.depth, 0.0, 1.0);
    if (s.kind == ShapeKind::axial_cosine)
        return std::asin(std::sqrt(r)) * s.scale;
    return s.scale * std::sqrt(-std::log1p(-r) / 2.0);
}

/// Action of the separatrix orbit E = U, available in closed form:
/// axial 4 sqrt(2mU) scale, radial 2 sqrt(pi) scale sqrt(2mU).
inline double separatrix_action(const PotentialShape& s, double mass)
{
    const double p = std::sqrt(2.0 * mass * s.depth);
    if (s.kind == ShapeKind::axial_cosine)
        return 4.0 * p * s.scale;
    return 2.0 * std::sqrt(constants::pi) * s.scale * p;
}

/// S(E, U) = 4 int_0^{x_max} sqrt(2m [E - V(x)]) dx, evaluated with the
/// substitution x = x_max sin(u) that removes the square-root endpoint
/// singularity. Throws std::domain_error for E outside [0, U].
inline double action(double energy, const PotentialShape& s, double mass)
{
    if (!(energy >= 0.0))
        throw std::domain_error("action: energy must be non-negative");
    if (energy > s.depth * (1.0 + 1e-12))
        throw std::domain_error("action: energy above the well depth (unbound orbit)");
    if (energy == 0.0 || s.depth == 0.0)
        return 0.0;
    if (energy >= s.depth && s.kind == ShapeKind::radial_gaussian)
        return separatrix_action(s, mass);

    const double e = std::min(energy, s.depth);
    const double xmax = turning_point(e, s);
    auto integrand = [&](double u) {
        const double x = xmax * std::sin(u);
        const double kinetic = std::max(e - shape_potential(x, s), 0.0);
        return std::sqrt(2.0 * mass * kinetic) * xmax * std::cos(u);
    };
    double err = 0.0;
    const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        integrand, 0.0, constants::pi / 2.0, 15, 1e-12, &err);
    return 4.0 * integral;
}

/// Initial energy E0 in a well of depth U0 whose atom reaches the top of the
/// well exactly when the depth has been lowered adiabatically to U1, i.e. the
/// root of S(E0, U0) = S(U1, U1) in [U1, U0].
inline double initial_energy_from_escape_depth(double escape_depth, double initial_depth, ShapeKind kind,
                                               double scale, double mass)
{
    if (!(escape_depth > 0.0) || escape_depth > initial_depth)
        throw std::domain_error("initial_energy_from_escape_depth: requires 0 < U1 <= U0");
    if (escape_depth == initial_depth)
        return initial_depth;
    const PotentialShape deep{kind, initial_depth, scale};
    const double target = separatrix_action({kind, escape_depth, scale}, mass);
    auto f = [&](double e) { return action(e, deep, mass) - target; };
    boost::math::tools::eps_tolerance<double> tol(45);
    std::uintmax_t iters = 100;
    const double lo = escape_depth;
    const double hi = initial_depth;
    const double flo = f(lo);
    const double fhi = f(hi);
    if (flo >= 0.0)
        return lo;
    if (fhi <= 0.0)
        return hi;
    const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
    return 0.5 * (r.first + r.second);
}

inline double initial_energy_from_escape_depth(double escape_depth, double initial_depth,
                                               const PotentialShape& shape, double mass)
{
    return initial_energy_from_escape_depth(escape_depth, initial_depth, shape.kind, shape.scale, mass);
}

/// Inverse map: depth at which an atom of energy E0 escapes, from the
/// closed-form separatrix action.
inline double escape_depth_from_initial_energy(double energy, const PotentialShape& initial_well, double mass)
{
    const double s = action(energy, initial_well, mass);
    double per_sqrt_depth = separatrix_action({initial_well.kind, 1.0, initial_well.scale}, mass);
    const double root = s / per_sqrt_depth;
    return root * root;
}

// ---------------------------------------------------------------------------
// Lowering ramp
// ---------------------------------------------------------------------------

/// U(t) = U0 for t <= 0, U0 (1 - t^2 / 4Tc^2) up to t = sqrt(2) Tc, then
/// U0 Tc^2 / t^2 until U1 is reached; hold for `wait`, then a linear ramp
/// back to U0 over `rampup`.
struct RampSchedule
{
    double U0 = 0.0;
    double U1 = 0.0;
    double Tc = 3e-3;
    double wait = 15e-3;
    double rampup = 20e-3;
};

inline void validate(const RampSchedule& s)
{
    if (!(s.U0 > 0.0))
        throw ConfigError("U0", "must be positive");
    if (!(s.U1 > 0.0 && s.U1 <= s.U0))
        throw ConfigError("U1", "must satisfy 0 < U1 <= U0");
    if (!(s.Tc > 0.0))
        throw ConfigError("Tc", "must be positive");
    if (!(s.wait >= 0.0))
        throw ConfigError("wait", "must be non-negative");
    if (!(s.rampup >= 0.0))
        throw ConfigError("rampup", "must be non-negative");
}

/// Time at which the lowering reaches U1.
inline double lowering_duration(const RampSchedule& s)
{
    if (s.U1 >= s.U0)
        return 0.0;
    if (s.U1 >= 0.5 * s.U0)
        return 2.0 * s.Tc * std::sqrt(1.0 - s.U1 / s.U0);
    return s.Tc * std::sqrt(s.U0 / s.U1);
}

inline double sequence_duration(const RampSchedule& s)
{
    return lowering_duration(s) + s.wait + s.rampup;
}

/// Unclamped lowering branch (the profile before U1 is reached).
inline double lowering_branch(double t, double U0, double Tc)
{
    if (t <= 0.0)
        return U0;
    if (t <= Tc * std::sqrt(2.0))
        return U0 * (1.0 - t * t / (4.0 * Tc * Tc));
    return U0 * Tc * Tc / (t * t);
}

inline double ramp_profile(double t, const RampSchedule& s)
{
    const double t1 = lowering_duration(s);
    if (t <= 0.0)
        return s.U0;
    if (t < t1)
        return lowering_branch(t, s.U0, s.Tc);
    const double t2 = t1 + s.wait;
    if (t < t2)
        return s.U1;
    if (t < t2 + s.rampup)
        return s.U1 + (s.U0 - s.U1) * (t - t2) / s.rampup;
    return s.U0;
}

/// dU/dt of `ramp_profile`.
inline double ramp_rate(double t, const RampSchedule& s)
{
    const double t1 = lowering_duration(s);
    if (t <= 0.0 || t >= t1) {
        const double t2 = t1 + s.wait;
        if (t >= t2 && t < t2 + s.rampup)
            return (s.U0 - s.U1) / s.rampup;
        return 0.0;
    }
    if (t <= s.Tc * std::sqrt(2.0))
        return -s.U0 * t / (2.0 * s.Tc * s.Tc);
    return -2.0 * s.U0 * s.Tc * s.Tc / (t * t * t);
}

/// |dOmega/dt| / Omega^2 with Omega = omega_ref sqrt(U(t)/U0), the harmonic
/// scaling of any trap frequency with depth.
inline double adiabaticity_parameter(double t, const RampSchedule& s, double omega_ref)
{
    const double u = ramp_profile(t, s);
    const double omega = omega_ref * std::sqrt(u / s.U0);
    return std::abs(ramp_rate(t, s)) / (2.0 * u * omega);
}

// ---------------------------------------------------------------------------
// Random initial conditions at fixed energy
// ---------------------------------------------------------------------------

struct InitialCondition
{
    TrajectoryState<Vec3> state;
    std::array<double, 3> axis_energy{};  // E_x, E_y, E_z; sums to E0
};

/// Distributes E0 uniformly over the simplex E_x + E_y + E_z = E0, splits
/// each share into potential E_i sin^2(theta_i) and kinetic E_i cos^2(theta_i)
/// with a uniform random phase, and inverts the anharmonic 1D profiles for the
/// coordinates. The kinetic energy is then rescaled so the total mechanical
/// energy in the (gravity-free) trap equals E0 exactly.
inline InitialCondition sample_initial_conditions(double energy, double depth, const TrapConfig& cfg,
                                                  CounterRng& rng)
{
    if (!(energy >= 0.0) || energy >= depth)
        throw std::domain_error("sample_initial_conditions: requires 0 <= E0 < U0");

    InitialCondition ic;
    std::array<double, 3> weights{rng.exponential(), rng.exponential(), rng.exponential()};
    const double wsum = weights[0] + weights[1] + weights[2];
    for (int i = 0; i < 3; ++i)
        ic.axis_energy[i] = energy * weights[i] / wsum;

    const PotentialShape radial = radial_shape(depth, cfg);
    const PotentialShape axial = axial_shape(depth, cfg);
    std::array<double, 3> pos{};
    std::array<double, 3> kin{};
    std::array<double, 3> vsign{};
    for (int i = 0; i < 3; ++i) {
        const double theta = 2.0 * constants::pi * rng.uniform();
        const double s = std::sin(theta);
        const double c = std::cos(theta);
        const double pot = ic.axis_energy[i] * s * s;
        kin[i] = ic.axis_energy[i] * c * c;
        const double x = turning_point(pot, i < 2 ? radial : axial);
        pos[i] = s < 0.0 ? -x : x;
        vsign[i] = c < 0.0 ? -1.0 : 1.0;
    }
    ic.state.position = {pos[0], pos[1], pos[2]};

    TrapConfig no_gravity = cfg;
    no_gravity.gravity = 0.0;
    const double v_actual = potential_simplified_3d(ic.state.position, depth, no_gravity);
    const double kinetic_total = std::max(energy - v_actual, 0.0);
    const double ksum = kin[0] + kin[1] + kin[2];
    std::array<double, 3> vel{};
    for (int i = 0; i < 3; ++i) {
        const double share = ksum > 0.0 ? kin[i] / ksum : 1.0 / 3.0;
        vel[i] = vsign[i] * std::sqrt(2.0 * kinetic_total * share / cfg.atom_mass);
    }
    ic.state.velocity = {vel[0], vel[1], vel[2]};
    ic.state.time = 0.0;
    ic.state.energy = 0.5 * cfg.atom_mass * dot(ic.state.velocity, ic.state.velocity) + v_actual;
    return ic;
}

// ---------------------------------------------------------------------------
// 3D lowering dynamics
// ---------------------------------------------------------------------------

/// Focal-plane 3D potential with gravity whose depth follows a ramp.
class LoweringModel3D
{
public:
    using vector_type = Vec3;

    LoweringModel3D(const TrapConfig& cfg, const RampSchedule& schedule)
        : cfg_(cfg), schedule_(schedule), k_(wavenumber(cfg)), inv_w2_(1.0 / (cfg.waist * cfg.waist)),
          inv_mass_(1.0 / cfg.atom_mass)
    {
    }

    Vec3 acceleration(const Vec3& r, double t) const
    {
        const double u = ramp_profile(t, schedule_);
        const double e = std::exp(-2.0 * (r.x * r.x + r.y * r.y) * inv_w2_);
        const double c = std::cos(k_ * r.z);
        const double s = std::sin(k_ * r.z);
        const double radial = u * c * c * e * 4.0 * inv_w2_ * inv_mass_;
        return {-radial * r.x, -radial * r.y - cfg_.gravity, -u * e * 2.0 * k_ * c * s * inv_mass_};
    }

    double potential(const Vec3& r, double t) const
    {
        return potential_simplified_3d(r, ramp_profile(t, schedule_), cfg_);
    }

    double mass() const { return cfg_.atom_mass; }
    double energy_scale() const { return schedule_.U0; }
    const RampSchedule& schedule() const { return schedule_; }

private:
    TrapConfig cfg_;
    RampSchedule schedule_;
    double k_;
    double inv_w2_;
    double inv_mass_;
};

/// Default step for 3D lowering runs: 100 steps per axial period at U0.
inline double lowering_time_step(const TrapConfig& cfg, double depth)
{
    return 2.0 * constants::pi / oscillation_frequencies(cfg, depth).axial / 100.0;
}

struct LoweringRun
{
    bool survived = true;
    double escape_time = 0.0;  // valid when !survived
};

/// Runs one lowering sequence (lower, wait, optionally ramp back up) and
/// reports whether the atom stayed within 3 w0 of the origin.
inline LoweringRun run_lowering_sequence(const TrajectoryState<Vec3>& start, const TrapConfig& cfg,
                                         const RampSchedule& schedule, double dt, bool include_rampup)
{
    const LoweringModel3D model(cfg, schedule);
    IntegratorSettings settings;
    settings.dt = dt;
    settings.escape_rule = EscapeRule::radius_3w0;
    settings.max_time = lowering_duration(schedule) + schedule.wait + (include_rampup ? schedule.rampup : 0.0);
    const double r2max = 9.0 * cfg.waist * cfg.waist;
    auto out = integrate(model, start, settings,
                         [r2max](const Vec3& r, const Vec3&, double) { return dot(r, r) <= r2max; });
    return {!out.stopped, out.stopped ? out.state.time : 0.0};
}

// ---------------------------------------------------------------------------
// Escape-depth map
// ---------------------------------------------------------------------------

struct EscapeMapOptions
{
    double Tc = 3e-3;
    double wait = 15e-3;
    std::size_t n_traj = 120;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    double dt = 0.0;            // 0 selects lowering_time_step
    double bracket = 0.02;      // relative width at which bisection stops
    bool include_rampup = false;
};

struct EscapeMapPoint
{
    double E0 = 0.0;
    double U1_median = 0.0;
    double U1_lo = 0.0;   // survival 0.16
    double U1_hi = 0.0;   // survival 0.84
    std::size_t n_traj = 0;
    std::size_t n_aborted = 0;
    bool valid = true;
    std::vector<double> thresholds;  // per-trajectory escape depth, sorted
};

inline double quantile_sorted(const std::vector<double>& sorted, double q)
{
    if (sorted.empty())
        return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted.size())
        return sorted.back();
    const double f = pos - static_cast<double>(i);
    return sorted[i] * (1.0 - f) + sorted[i + 1] * f;
}

/// Lowest depth worth probing: below the gravity cutoff nothing is bound.
inline double lowest_probe_depth(const TrapConfig& cfg, double depth)
{
    return std::max(gravity_cutoff_depth(cfg), 1e-4 * depth);
}

/// Depth U1 below which atom `ic` is lost, found by bisection in log U1
/// until the bracket is narrower than `bracket` (relative).
inline double escape_threshold(const TrajectoryState<Vec3>& start, const TrapConfig& cfg, double depth,
                               const EscapeMapOptions& opt, double dt)
{
    double lo = lowest_probe_depth(cfg, depth);
    double hi = depth;
    while (hi / lo > 1.0 + opt.bracket) {
        const double mid = std::sqrt(lo * hi);
        RampSchedule s{depth, mid, opt.Tc, opt.wait, 0.0};
        if (opt.include_rampup)
            s.rampup = RampSchedule{}.rampup;
        if (run_lowering_sequence(start, cfg, s, dt, opt.include_rampup).survived)
            hi = mid;
        else
            lo = mid;
    }
    return std::sqrt(lo * hi);
}

/// Monte Carlo escape depth for atoms of initial energy E0 in the 3D trap.
/// Each trajectory's own threshold depth is located by bisection; the median
/// of the thresholds is where the survival probability equals 0.5 and the
/// 16th/84th percentiles bound the 1-sigma escape band.
inline EscapeMapPoint escape_depth_map(double E0, const TrapConfig& cfg, const EscapeMapOptions& opt)
{
    const double depth = trap_depth(cfg);
    if (!(E0 > 0.0 && E0 < depth))
        throw std::domain_error("escape_depth_map: requires 0 < E0 < U0");
    if (opt.n_traj < 1)
        throw ConfigError("n_traj", "at least one trajectory required");
    const double dt = opt.dt > 0.0 ? opt.dt : lowering_time_step(cfg, depth);

    std::vector<double> thresholds(opt.n_traj, 0.0);
    std::vector<char> aborted(opt.n_traj, 0);
    const unsigned threads = opt.threads == 0 ? default_thread_count() : opt.threads;
    parallel_for(opt.n_traj, threads, [&](std::size_t i) {
        CounterRng rng(derive_key(opt.seed, i));
        const InitialCondition ic = sample_initial_conditions(E0, depth, cfg, rng);
        try {
            thresholds[i] = escape_threshold(ic.state, cfg, depth, opt, dt);
        }
        catch (const IntegrationAborted&) {
            aborted[i] = 1;
        }
    });

    EscapeMapPoint p;
    p.E0 = E0;
    p.n_traj = opt.n_traj;
    for (std::size_t i = 0; i < opt.n_traj; ++i) {
        if (aborted[i])
            ++p.n_aborted;
        else
            p.thresholds.push_back(thresholds[i]);
    }
    std::sort(p.thresholds.begin(), p.thresholds.end());
    p.valid = p.n_aborted * 10 <= p.n_traj && !p.thresholds.empty();
    p.U1_median = quantile_sorted(p.thresholds, 0.5);
    p.U1_lo = quantile_sorted(p.thresholds, 0.16);
    p.U1_hi = quantile_sorted(p.thresholds, 0.84);
    return p;
}

}  // namespace dipoletrap
