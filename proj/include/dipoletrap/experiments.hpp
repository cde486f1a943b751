#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adiabatic.hpp"
#include "constants.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "fitting.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "survival.hpp"
#include "trap_model.hpp"

/// Emulation of the two single-atom protocols: the energy-distribution
/// measurement by adiabatic lowering and the transport resonance scan.
namespace dipoletrap {

// ---------------------------------------------------------------------------
// Thermal sampling
// ---------------------------------------------------------------------------

/// Energy from p(E) ~ sqrt(E) exp(-E/kT), i.e. kT/2 times a chi-square
/// variate with three degrees of freedom, truncated below `cap`.
inline double sample_boltzmann_energy(double kT, double cap, CounterRng& rng)
{
    for (;;) {
        const double a = rng.normal();
        const double b = rng.normal();
        const double c = rng.normal();
        const double e = 0.5 * kT * (a * a + b * b + c * c);
        if (e < cap)
            return e;
    }
}

// ---------------------------------------------------------------------------
// Escape-depth calibration (U1 -> E0)
// ---------------------------------------------------------------------------

/// Monotone table of simulated escape depths used to rescale a survival
/// curve from U1 to initial energy. Anchored at (gravity cutoff, 0) and
/// (U0, U0); interpolated linearly in between.
struct EscapeCalibration
{
    std::vector<double> escape_depth;  // J, increasing
    std::vector<double> energy;        // J, increasing

    double energy_at(double u1) const
    {
        if (escape_depth.empty())
            throw NumericalError("EscapeCalibration: empty table");
        if (u1 <= escape_depth.front())
            return energy.front();
        if (u1 >= escape_depth.back())
            return energy.back();
        const auto it = std::upper_bound(escape_depth.begin(), escape_depth.end(), u1);
        const std::size_t i = static_cast<std::size_t>(it - escape_depth.begin());
        const double f = (u1 - escape_depth[i - 1]) / (escape_depth[i] - escape_depth[i - 1]);
        return energy[i - 1] + f * (energy[i] - energy[i - 1]);
    }
};

struct CalibrationOptions
{
    std::vector<double> energies = {0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.45, 0.6};  // E0/U0
    EscapeMapOptions map;

    CalibrationOptions() { map.n_traj = 40; }
};

inline EscapeCalibration calibrate_escape_depths(const TrapConfig& cfg, const CalibrationOptions& opt,
                                                 std::vector<EscapeMapPoint>* points = nullptr)
{
    const double depth = trap_depth(cfg);
    EscapeCalibration cal;
    cal.escape_depth.push_back(gravity_cutoff_depth(cfg));
    cal.energy.push_back(0.0);
    for (double e : opt.energies) {
        const EscapeMapPoint p = escape_depth_map(e * depth, cfg, opt.map);
        if (points != nullptr)
            points->push_back(p);
        if (!p.valid)
            continue;
        // keep the table monotone; statistical ties are dropped
        if (p.U1_median > cal.escape_depth.back() && p.E0 > cal.energy.back()) {
            cal.escape_depth.push_back(p.U1_median);
            cal.energy.push_back(p.E0);
        }
    }
    if (depth > cal.escape_depth.back()) {
        cal.escape_depth.push_back(depth);
        cal.energy.push_back(depth);
    }
    return cal;
}

// ---------------------------------------------------------------------------
// Energy-distribution protocol
// ---------------------------------------------------------------------------

enum class GravityCorrectionMode { fixed, extrapolated };

struct EnergyDistProtocol
{
    std::vector<double> U1_grid = {0.082, 0.06, 0.045, 0.033, 0.024, 0.017, 0.012,
                                   0.009, 0.007, 0.0055, 0.0045, 0.0036};  // fractions of U0
    std::size_t repetitions = 100;
    double Tc = 3e-3;
    double wait = 15e-3;
    double rampup = 20e-3;
    double temperature_truth = 0.066;  // kT/U0
    GravityCorrectionMode correction_mode = GravityCorrectionMode::fixed;
    double gravity_correction = 0.0014;  // fraction of U0, used in fixed mode
    double dt = 0.0;                     // 0 selects lowering_time_step
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

inline void validate(const EnergyDistProtocol& p)
{
    if (p.U1_grid.empty())
        throw ConfigError("U1_grid", "must not be empty");
    for (std::size_t i = 0; i < p.U1_grid.size(); ++i) {
        if (!(p.U1_grid[i] > 0.0 && p.U1_grid[i] < 1.0))
            throw ConfigError("U1_grid", "values must lie in (0, 1)");
        if (i > 0 && !(p.U1_grid[i] < p.U1_grid[i - 1]))
            throw ConfigError("U1_grid", "values must be strictly descending");
    }
    if (p.repetitions < 1)
        throw ConfigError("repetitions", "must be at least 1");
    if (!(p.Tc > 0.0))
        throw ConfigError("Tc", "must be positive");
    if (!(p.wait >= 0.0))
        throw ConfigError("wait", "must be non-negative");
    if (!(p.rampup >= 0.0))
        throw ConfigError("rampup", "must be non-negative");
    if (!(p.temperature_truth > 0.0))
        throw ConfigError("temperature_truth", "must be positive");
    if (!std::isfinite(p.gravity_correction))
        throw ConfigError("gravity_correction", "must be finite");
}

struct EnergyDistResult
{
    SurvivalCurve by_depth;   // abscissa U1/U0
    SurvivalCurve by_energy;  // abscissa E0 (J)
    double gravity_correction = 0.0;   // fraction of U0 actually applied
    std::optional<double> extrapolated_cutoff;  // fraction of U0
    std::size_t n_aborted = 0;
};

/// Runs the lowering / wait / ramp-up sequence for every U1 of the grid with
/// freshly sampled thermal atoms and rescales the abscissa to initial energy
/// with `calibration`.
inline EnergyDistResult run_energy_distribution(const EnergyDistProtocol& proto, const TrapConfig& cfg,
                                                const EscapeCalibration& calibration)
{
    validate(proto);
    const double depth = trap_depth(cfg);
    const double kT = proto.temperature_truth * depth;
    const double cutoff = gravity_cutoff_depth(cfg);
    const double dt = proto.dt > 0.0 ? proto.dt : lowering_time_step(cfg, depth);
    const std::size_t n_points = proto.U1_grid.size();
    const std::size_t reps = proto.repetitions;

    std::vector<char> survived(n_points * reps, 0);
    std::vector<char> aborted(n_points * reps, 0);
    const unsigned threads = proto.threads == 0 ? default_thread_count() : proto.threads;
    parallel_for(n_points * reps, threads, [&](std::size_t job) {
        const std::size_t point = job / reps;
        const double u1 = proto.U1_grid[point] * depth;
        if (u1 <= cutoff)
            return;
        CounterRng rng(derive_key(proto.seed, job));
        const double e = sample_boltzmann_energy(kT, depth, rng);
        const InitialCondition ic = sample_initial_conditions(e, depth, cfg, rng);
        const RampSchedule sched{depth, u1, proto.Tc, proto.wait, proto.rampup};
        try {
            survived[job] = run_lowering_sequence(ic.state, cfg, sched, dt, true).survived ? 1 : 0;
        }
        catch (const IntegrationAborted&) {
            aborted[job] = 1;
        }
    });

    EnergyDistResult res;
    for (std::size_t point = 0; point < n_points; ++point) {
        std::size_t s = 0;
        for (std::size_t r = 0; r < reps; ++r) {
            s += survived[point * reps + r];
            res.n_aborted += aborted[point * reps + r];
        }
        res.by_depth.push(proto.U1_grid[point], s, reps);
    }

    if (proto.correction_mode == GravityCorrectionMode::fixed) {
        res.gravity_correction = proto.gravity_correction;
    }
    try {
        res.extrapolated_cutoff = gravity_cutoff_extrapolation(res.by_depth).cutoff;
    }
    catch (const FitError&) {
    }
    if (proto.correction_mode == GravityCorrectionMode::extrapolated && res.extrapolated_cutoff)
        res.gravity_correction = *res.extrapolated_cutoff - cutoff / depth;

    for (std::size_t point = 0; point < n_points; ++point) {
        const double u1 = (proto.U1_grid[point] - res.gravity_correction) * depth;
        res.by_energy.push(calibration.energy_at(u1), res.by_depth.survived[point], reps);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Transport resonance scan
// ---------------------------------------------------------------------------

enum class RampShape { linear, smooth };

/// Piecewise detuning profile dw(t) with its exact phase integral. Each
/// segment is either linear or smooth, dw0 + D s(x) with
/// s(x) = x - sin(2 pi x)/(2 pi), whose rate D (1 - cos 2 pi x)/T starts and
/// ends at zero.
class DetuningProfile
{
public:
    void add_knot(double t, double detuning, RampShape shape = RampShape::linear)
    {
        if (!t_.empty() && t <= t_.back())
            throw std::invalid_argument("DetuningProfile: knots must be increasing in time");
        if (t_.empty()) {
            phase_.push_back(0.0);
        }
        else {
            // both shapes integrate to the trapezoid over a full segment
            phase_.push_back(phase_.back() + 0.5 * (detuning + dw_.back()) * (t - t_.back()));
        }
        t_.push_back(t);
        dw_.push_back(detuning);
        shape_.push_back(shape);
    }

    double duration() const { return t_.empty() ? 0.0 : t_.back(); }

    double detuning(double t) const
    {
        const std::size_t i = segment(t);
        if (i + 1 >= t_.size())
            return dw_.back();
        const double len = t_[i + 1] - t_[i];
        const double x = (t - t_[i]) / len;
        const double jump = dw_[i + 1] - dw_[i];
        if (shape_[i + 1] == RampShape::linear)
            return dw_[i] + jump * x;
        return dw_[i] + jump * (x - std::sin(2.0 * constants::pi * x) / (2.0 * constants::pi));
    }

    double rate(double t) const
    {
        const std::size_t i = segment(t);
        if (i + 1 >= t_.size())
            return 0.0;
        const double len = t_[i + 1] - t_[i];
        const double jump = dw_[i + 1] - dw_[i];
        if (shape_[i + 1] == RampShape::linear)
            return jump / len;
        const double x = (t - t_[i]) / len;
        return jump / len * (1.0 - std::cos(2.0 * constants::pi * x));
    }

    double phase(double t) const
    {
        const std::size_t i = segment(t);
        const double tau = t - t_[i];
        if (i + 1 >= t_.size())
            return phase_[i] + dw_[i] * tau;
        const double len = t_[i + 1] - t_[i];
        const double x = tau / len;
        const double jump = dw_[i + 1] - dw_[i];
        if (shape_[i + 1] == RampShape::linear)
            return phase_[i] + dw_[i] * tau + 0.5 * jump * x * tau;
        const double w = 2.0 * constants::pi;
        return phase_[i] + dw_[i] * tau + jump * len * (0.5 * x * x + (std::cos(w * x) - 1.0) / (w * w));
    }

    /// Largest |d(dw)/dt| over the profile.
    double peak_rate() const
    {
        double r = 0.0;
        for (std::size_t i = 0; i + 1 < t_.size(); ++i) {
            const double mean = std::abs(dw_[i + 1] - dw_[i]) / (t_[i + 1] - t_[i]);
            r = std::max(r, shape_[i + 1] == RampShape::smooth ? 2.0 * mean : mean);
        }
        return r;
    }

private:
    std::size_t segment(double t) const
    {
        std::size_t i = 0;
        while (i + 1 < t_.size() && t >= t_[i + 1])
            ++i;
        return i;
    }

    std::vector<double> t_;
    std::vector<double> dw_;
    std::vector<double> phase_;
    std::vector<RampShape> shape_;
};

struct TransportScan
{
    std::vector<double> detunings;         // rad/s
    double transport_distance = 2e-3;      // m, nominal; reported only
    double ramp_time = 10e-6;              // s, each detuning ramp
    RampShape ramp_shape = RampShape::smooth;
    double hold_exposure = 20e-3;          // s at constant detuning, split over both legs
    double filter_depth = 0.1;             // fraction of U0
    double filter_lower_time = 10e-3;      // s
    double filter_wait = 5e-3;             // s
    std::size_t shots_per_point = 100;
    double temperature = 0.066;            // kT/U0
    double dt = 0.0;                       // 0 selects T_z/100 and >= 50 steps per drive period
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

inline void validate(const TransportScan& s)
{
    if (s.detunings.empty())
        throw ConfigError("detunings", "must not be empty");
    for (double d : s.detunings)
        if (!(d > 0.0) || !std::isfinite(d))
            throw ConfigError("detunings", "values must be positive and finite");
    if (!(s.ramp_time > 0.0))
        throw ConfigError("ramp_time", "must be positive");
    if (!(s.hold_exposure >= 0.0))
        throw ConfigError("hold_exposure", "must be non-negative");
    if (!(s.filter_depth > 0.0 && s.filter_depth < 1.0))
        throw ConfigError("filter_depth", "must lie in (0, 1)");
    if (!(s.filter_lower_time > 0.0))
        throw ConfigError("filter_lower_time", "must be positive");
    if (!(s.filter_wait >= 0.0))
        throw ConfigError("filter_wait", "must be non-negative");
    if (s.shots_per_point < 1)
        throw ConfigError("shots_per_point", "must be at least 1");
    if (!(s.temperature > 0.0))
        throw ConfigError("temperature", "must be positive");
}

/// Lattice velocity lambda * dw / (4 pi).
inline double lattice_velocity(double detuning, const TrapConfig& cfg)
{
    return cfg.wavelength_trap * detuning / (4.0 * constants::pi);
}

/// Out-and-back profile: ramp up, hold for half the exposure, ramp down,
/// then the same with the opposite detuning.
inline DetuningProfile transport_profile(double detuning, const TransportScan& scan)
{
    const double tr = scan.ramp_time;
    const double hold = 0.5 * scan.hold_exposure;
    DetuningProfile p;
    double t = 0.0;
    p.add_knot(t, 0.0);
    for (double sign : {1.0, -1.0}) {
        p.add_knot(t += tr, sign * detuning, scan.ramp_shape);
        if (hold > 0.0)
            p.add_knot(t += hold, sign * detuning);
        p.add_knot(t += tr, 0.0, scan.ramp_shape);
    }
    return p;
}

/// One-way travel distance for a detuning under the scan's schedule.
inline double transport_leg_distance(double detuning, const TransportScan& scan, const TrapConfig& cfg)
{
    return lattice_velocity(detuning, cfg) * (0.5 * scan.hold_exposure + scan.ramp_time);
}

/// Peak lattice acceleration of the detuning ramps.
inline double peak_ramp_acceleration(double detuning, const TransportScan& scan, const TrapConfig& cfg)
{
    const double mean = std::abs(lattice_velocity(detuning, cfg)) / scan.ramp_time;
    return scan.ramp_shape == RampShape::smooth ? 2.0 * mean : mean;
}

/// Axial motion in the frame co-moving with the standing wave: the weak
/// third beam modulates amplitude and phase at the detuning, and detuning
/// ramps add the inertial acceleration -lambda/(4 pi) d(dw)/dt.
class TransportModel
{
public:
    using vector_type = double;

    TransportModel(double depth, double beta, const TrapConfig& cfg, DetuningProfile profile)
        : depth_(depth), beta_(beta), k_(wavenumber(cfg)), mass_(cfg.atom_mass),
          frame_scale_(cfg.wavelength_trap / (4.0 * constants::pi)), profile_(std::move(profile))
    {
    }

    double acceleration(double z, double t) const
    {
        const double phase = profile_.phase(t);
        return force_three_beam_phase(z, phase, depth_, beta_, k_) / mass_ - frame_scale_ * profile_.rate(t);
    }

    /// Well form: depth minus the light shift plus the inertial potential.
    double potential(double z, double t) const
    {
        return depth_ - potential_three_beam_phase(z, profile_.phase(t), depth_, beta_, k_) +
               mass_ * frame_scale_ * profile_.rate(t) * z;
    }

    double mass() const { return mass_; }
    double energy_scale() const { return depth_; }
    const DetuningProfile& profile() const { return profile_; }

private:
    double depth_;
    double beta_;
    double k_;
    double mass_;
    double frame_scale_;
    DetuningProfile profile_;
};

/// Axial position and velocity from the canonical distribution of the
/// well U sin^2(kz), |z| < lambda/4, restricted to bound states.
inline TrajectoryState<double> sample_axial_thermal(double kT, double depth, const TrapConfig& cfg, CounterRng& rng)
{
    const double k = wavenumber(cfg);
    const double zmax = cfg.wavelength_trap / 4.0;
    const double sigma_v = std::sqrt(kT / cfg.atom_mass);
    for (;;) {
        const double z = rng.uniform(-zmax, zmax);
        const double s = std::sin(k * z);
        const double v_pot = depth * s * s;
        if (rng.uniform() >= std::exp(-v_pot / kT))
            continue;
        const double v = sigma_v * rng.normal();
        if (0.5 * cfg.atom_mass * v * v + v_pot < depth)
            return {z, v, 0.0, 0.5 * cfg.atom_mass * v * v + v_pot};
    }
}

/// Radial energy of a 2D harmonic thermal distribution, Gamma(2, kT),
/// truncated below `cap`.
inline double sample_radial_thermal(double kT, double cap, CounterRng& rng)
{
    for (;;) {
        const double e = kT * (rng.exponential() + rng.exponential());
        if (e < cap)
            return e;
    }
}

struct ResonanceScanResult
{
    SurvivalCurve curve;          // abscissa detuning (rad/s)
    std::vector<std::size_t> aborted;  // per point, counted as lost
    double filter_energy = 0.0;   // J, total energy above which the filter loses the atom
    double exposure = 0.0;        // s
};

inline double transport_time_step(const TransportScan& scan, const TrapConfig& cfg, double depth)
{
    if (scan.dt > 0.0)
        return scan.dt;
    const double omega = oscillation_frequencies(cfg, depth).axial;
    double dmax = 0.0;
    for (double d : scan.detunings)
        dmax = std::max(dmax, d);
    double dt = 2.0 * constants::pi / omega / 100.0;
    if (dmax > 0.0)
        dt = std::min(dt, 2.0 * constants::pi / dmax / 50.0);
    return dt;
}

/// Per shot: a thermal atom is carried out and back at each detuning; the
/// filter (adiabatic lowering to filter_depth) is applied through the
/// axial escape-depth relation to the final axial plus frozen radial energy.
inline ResonanceScanResult run_resonance_scan(const TransportScan& scan, const TrapConfig& cfg)
{
    validate(scan);
    validate(cfg);
    const double depth = trap_depth(cfg);
    const double kT = scan.temperature * depth;
    const double k = wavenumber(cfg);
    const double zmax = cfg.wavelength_trap / 4.0;
    const double dt = transport_time_step(scan, cfg, depth);

    ResonanceScanResult res;
    res.exposure = scan.hold_exposure;
    res.filter_energy =
        initial_energy_from_escape_depth(scan.filter_depth * depth, depth, axial_shape(depth, cfg), cfg.atom_mass);

    const std::size_t n_points = scan.detunings.size();
    const std::size_t shots = scan.shots_per_point;
    std::vector<char> survived(n_points * shots, 0);
    std::vector<char> aborted(n_points * shots, 0);
    const unsigned threads = scan.threads == 0 ? default_thread_count() : scan.threads;
    parallel_for(n_points * shots, threads, [&](std::size_t job) {
        const std::size_t point = job / shots;
        CounterRng rng(derive_key(scan.seed, job));
        const TrajectoryState<double> start = sample_axial_thermal(kT, depth, cfg, rng);
        const double radial = sample_radial_thermal(kT, depth, rng);
        const TransportModel model(depth, cfg.reflected_amplitude, cfg,
                                   transport_profile(scan.detunings[point], scan));
        IntegratorSettings settings;
        settings.dt = dt;
        settings.max_time = model.profile().duration();
        try {
            const auto out = integrate(model, start, settings,
                                       [zmax](double z, double, double) { return std::abs(z) <= zmax; });
            if (out.stopped)
                return;
            const double s = std::sin(k * out.state.position);
            const double ez =
                0.5 * cfg.atom_mass * out.state.velocity * out.state.velocity + depth * s * s;
            survived[job] = radial + ez < res.filter_energy ? 1 : 0;
        }
        catch (const IntegrationAborted&) {
            aborted[job] = 1;
        }
    });

    res.aborted.assign(n_points, 0);
    for (std::size_t point = 0; point < n_points; ++point) {
        std::size_t s = 0;
        for (std::size_t i = 0; i < shots; ++i) {
            s += survived[point * shots + i];
            res.aborted[point] += aborted[point * shots + i];
        }
        res.curve.push(scan.detunings[point], s, shots);
    }
    return res;
}

/// Detuning grid from `lo` to `hi` (Hz) in `n` evenly spaced points,
/// returned as angular frequencies.
inline std::vector<double> detuning_grid_hz(double lo, double hi, std::size_t n)
{
    std::vector<double> g;
    if (n == 1)
        return {2.0 * constants::pi * lo};
    for (std::size_t i = 0; i < n; ++i)
        g.push_back(2.0 * constants::pi * (lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1)));
    return g;
}

/// Time-averaged heating rate implied by a survival dip. The filter keeps
/// atoms below `filter_energy`; the dip is mapped through the cumulative
/// Boltzmann distribution to the lower energy whose exceedance reproduces
/// the extra loss, and the energy difference is divided by the exposure.
inline double exposure_heating_estimate(double baseline, double dip, double exposure, double kT,
                                        double filter_energy)
{
    if (!(dip < baseline))
        throw std::domain_error("exposure_heating_estimate: dip must lie below the baseline (no heating signal)");
    if (!(dip >= 0.0) || !(exposure > 0.0) || !(kT > 0.0) || !(filter_energy > 0.0))
        throw std::domain_error("exposure_heating_estimate: invalid arguments");
    const double kept = dip / baseline * boltzmann_cdf(filter_energy, kT);
    const double threshold = boltzmann_cdf_inverse(kept, kT);
    return (filter_energy - threshold) / exposure;
}

}  // namespace dipoletrap
