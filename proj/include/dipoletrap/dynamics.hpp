#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "trap_model.hpp"
#include "vec3.hpp"

/// Classical trajectories in time-dependent potentials: noise synthesis,
/// symplectic stepping, escape detection and lifetime ensembles.
namespace dipoletrap {

// ---------------------------------------------------------------------------
// Band-limited noise
// ---------------------------------------------------------------------------

enum class NoiseKind { none, phase };

/// Gaussian white noise of the given bandwidth, realized as independent
/// samples held for one Nyquist interval 1/(2 bandwidth).
struct NoiseProcess
{
    std::uint64_t seed = 0;
    double bandwidth = 1e6;  // Hz
    double rms = 0.0;        // rad for phase noise
    NoiseKind kind = NoiseKind::phase;

    double sample_interval() const { return 0.5 / bandwidth; }
    bool active() const { return kind != NoiseKind::none && rms > 0.0; }
};

inline std::uint64_t noise_sample_index(const NoiseProcess& proc, double t)
{
    return static_cast<std::uint64_t>(std::floor(t / proc.sample_interval()));
}

/// Value of the noise at time t >= 0. Deterministic in (seed, sample index).
inline double synthesize_noise(const NoiseProcess& proc, double t)
{
    if (!proc.active())
        return 0.0;
    return proc.rms * counter_normal(proc.seed, noise_sample_index(proc, t));
}

/// Caches the current held sample; one per trajectory.
class NoiseSampler
{
public:
    explicit NoiseSampler(NoiseProcess proc) : proc_(proc), inv_interval_(1.0 / proc.sample_interval()) {}

    double operator()(double t) const
    {
        if (!proc_.active())
            return 0.0;
        const auto idx = static_cast<std::uint64_t>(std::floor(t * inv_interval_));
        if (idx != index_ || !valid_) {
            index_ = idx;
            value_ = proc_.rms * counter_normal(proc_.seed, idx);
            valid_ = true;
        }
        return value_;
    }

    const NoiseProcess& process() const { return proc_; }

private:
    NoiseProcess proc_;
    double inv_interval_;
    mutable std::uint64_t index_ = 0;
    mutable double value_ = 0.0;
    mutable bool valid_ = false;
};

// ---------------------------------------------------------------------------
// Integrator
// ---------------------------------------------------------------------------

template <class Vec>
struct TrajectoryState
{
    Vec position{};
    Vec velocity{};
    double time = 0.0;
    double energy = 0.0;
};

enum class EscapeRule { axial_well, radius_3w0 };

struct IntegratorSettings
{
    double dt = 0.0;        // s
    double max_time = 0.0;  // s, integration span from the initial state
    EscapeRule escape_rule = EscapeRule::axial_well;
    double convergence_factor = 1.0;  // multiplies dt for convergence studies

    double step() const { return dt * convergence_factor; }
};

/// Default step: resolves the axial oscillation with 200 steps per period
/// and the noise with at least 4 steps per held sample.
inline double default_time_step(const DerivedParams& derived, const NoiseProcess* noise = nullptr)
{
    double dt = 2.0 * constants::pi / derived.omega_axial / 200.0;
    if (noise != nullptr && noise->active())
        dt = std::min(dt, noise->sample_interval() / 4.0);
    return dt;
}

/// A model exposes mass, a time-dependent potential and the matching
/// acceleration, plus a characteristic energy used by the blow-up guard.
template <class M>
concept DynamicalModel = requires(const M& m, const typename M::vector_type& x, double t) {
    { m.acceleration(x, t) } -> std::convertible_to<typename M::vector_type>;
    { m.potential(x, t) } -> std::convertible_to<double>;
    { m.mass() } -> std::convertible_to<double>;
    { m.energy_scale() } -> std::convertible_to<double>;
};

template <DynamicalModel M>
double mechanical_energy(const M& model, const typename M::vector_type& x, const typename M::vector_type& v,
                         double t)
{
    return 0.5 * model.mass() * dot(v, v) + model.potential(x, t);
}

template <class Vec>
struct IntegrationOutcome
{
    TrajectoryState<Vec> state;
    std::uint64_t steps = 0;
    bool stopped = false;  // observer asked to stop before max_time
};

/// Fixed-step drift-kick-drift Verlet. The explicit time dependence of the
/// force is sampled at the middle of each step. `keep_going(x, v, t)` runs
/// after every step and stops the integration by returning false.
///
/// Throws IntegrationAborted when the energy becomes non-finite or exceeds
/// ten times max(|E_initial|, model.energy_scale()).
template <DynamicalModel M, class Observer>
IntegrationOutcome<typename M::vector_type> integrate(const M& model,
                                                      const TrajectoryState<typename M::vector_type>& initial,
                                                      const IntegratorSettings& settings, Observer&& keep_going)
{
    using Vec = typename M::vector_type;
    const double dt = settings.step();
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw ConfigError("dt", "integrator step must be positive");
    if (!(settings.max_time >= 0.0))
        throw ConfigError("max_time", "must be non-negative");

    const double t0 = initial.time;
    Vec x = initial.position;
    Vec v = initial.velocity;
    const double e0 = mechanical_energy(model, x, v, t0);
    const double limit = 10.0 * std::max(std::abs(e0), model.energy_scale());
    const auto n_steps = static_cast<std::uint64_t>(std::ceil(settings.max_time / dt - 1e-9));
    const double half = 0.5 * dt;

    IntegrationOutcome<Vec> out;
    std::uint64_t i = 0;
    double t = t0;
    while (i < n_steps) {
        x += v * half;
        v += model.acceleration(x, t + half) * dt;
        x += v * half;
        ++i;
        t = t0 + static_cast<double>(i) * dt;
        if ((i & 1023u) == 0) {
            const double e = mechanical_energy(model, x, v, t);
            if (!std::isfinite(e) || std::abs(e) > limit)
                throw IntegrationAborted("integrator energy diverged at t=" + std::to_string(t) + " s", t, e);
        }
        if (!keep_going(x, v, t)) {
            out.stopped = true;
            break;
        }
    }
    out.steps = i;
    out.state.position = x;
    out.state.velocity = v;
    out.state.time = t;
    out.state.energy = mechanical_energy(model, x, v, t);
    return out;
}

template <DynamicalModel M>
IntegrationOutcome<typename M::vector_type> integrate(const M& model,
                                                      const TrajectoryState<typename M::vector_type>& initial,
                                                      const IntegratorSettings& settings)
{
    return integrate(model, initial, settings, [](const auto&, const auto&, double) { return true; });
}

/// Integrates and records every `stride`-th state (and the first and last).
template <DynamicalModel M>
std::vector<TrajectoryState<typename M::vector_type>> integrate_trace(
    const M& model, TrajectoryState<typename M::vector_type> initial, const IntegratorSettings& settings,
    std::uint64_t stride = 1)
{
    using Vec = typename M::vector_type;
    stride = std::max<std::uint64_t>(stride, 1);
    std::vector<TrajectoryState<Vec>> trace;
    initial.energy = mechanical_energy(model, initial.position, initial.velocity, initial.time);
    trace.push_back(initial);
    std::uint64_t count = 0;
    auto out = integrate(model, initial, settings, [&](const Vec& x, const Vec& v, double t) {
        if (++count % stride == 0)
            trace.push_back({x, v, t, mechanical_energy(model, x, v, t)});
        return true;
    });
    if (count % stride != 0)
        trace.push_back(out.state);
    return trace;
}

// ---------------------------------------------------------------------------
// Escape detection
// ---------------------------------------------------------------------------

inline bool has_escaped(double z, EscapeRule rule, const TrapConfig& cfg)
{
    if (rule == EscapeRule::axial_well)
        return std::abs(z) >= cfg.wavelength_trap / 4.0;
    return std::abs(z) > 3.0 * cfg.waist;
}

inline bool has_escaped(const Vec3& r, EscapeRule rule, const TrapConfig& cfg)
{
    if (rule == EscapeRule::axial_well)
        return std::abs(r.z) >= cfg.wavelength_trap / 4.0;
    return dot(r, r) > 9.0 * cfg.waist * cfg.waist;
}

/// Time of the first sample beyond the escape boundary, or nullopt if the
/// trajectory stayed bound for the whole trace.
template <class Vec>
std::optional<double> detect_escape(std::span<const TrajectoryState<Vec>> trace, EscapeRule rule,
                                    const TrapConfig& cfg)
{
    for (const auto& s : trace)
        if (has_escaped(s.position, rule, cfg))
            return s.time;
    return std::nullopt;
}

template <class Vec>
std::optional<double> detect_escape(const std::vector<TrajectoryState<Vec>>& trace, EscapeRule rule,
                                    const TrapConfig& cfg)
{
    return detect_escape(std::span<const TrajectoryState<Vec>>(trace), rule, cfg);
}

// ---------------------------------------------------------------------------
// Phase-noise lifetime
// ---------------------------------------------------------------------------

/// How a relative phase phi between the two beams displaces the lattice.
/// A standing wave cos^2(kz - phi/2) moves by phi/(2k); `full_phase` moves
/// it by phi/k, i.e. <eps^2> = <phi^2>/k^2 as used by the heating table.
enum class PhaseMapping { standing_wave, full_phase };

inline double phase_to_position_factor(PhaseMapping m) { return m == PhaseMapping::standing_wave ? 0.5 : 1.0; }

/// 1D lattice well U sin^2[k(z + eps(t))] whose position jitters with the
/// relative phase noise of the two beams, eps = f phi(t)/k.
class ShakenLatticeModel
{
public:
    using vector_type = double;

    ShakenLatticeModel(double depth, double k, double mass, NoiseProcess noise,
                       PhaseMapping mapping = PhaseMapping::standing_wave)
        : depth_(depth), k_(k), mass_(mass), noise_(noise), accel_scale_(depth * k / mass),
          phase_factor_(phase_to_position_factor(mapping))
    {
    }

    double acceleration(double z, double t) const
    {
        return -accel_scale_ * std::sin(2.0 * (k_ * z + phase_factor_ * noise_(t)));
    }

    double potential(double z, double t) const
    {
        const double s = std::sin(k_ * z + phase_factor_ * noise_(t));
        return depth_ * s * s;
    }

    double mass() const { return mass_; }
    double energy_scale() const { return depth_; }

private:
    double depth_;
    double k_;
    double mass_;
    NoiseSampler noise_;
    double accel_scale_;
    double phase_factor_;
};

struct LifetimeRecord
{
    std::size_t index = 0;
    double escape_time = 0.0;  // s; the horizon when censored
    bool censored = false;
};

struct LifetimeResult
{
    std::vector<LifetimeRecord> records;
    double mean = 0.0;    // censored trajectories enter at the horizon (a lower bound)
    double median = 0.0;
    std::size_t n_censored = 0;
    std::uint64_t seed = 0;
    double dt = 0.0;
    double horizon = 0.0;
};

struct LifetimeOptions
{
    std::size_t n_traj = 20;
    std::uint64_t master_seed = 1;
    double phase_rms = 1e-3;   // rad
    double bandwidth = 1e6;    // Hz
    double dt = 0.0;           // 0 selects default_time_step
    double max_time = 10.0;    // s, censoring horizon
    double convergence_factor = 1.0;
    PhaseMapping mapping = PhaseMapping::standing_wave;
    unsigned threads = 0;      // 0 selects default_thread_count
};

inline double median_of(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Escape times of atoms starting at rest at the bottom of a phase-noise
/// shaken lattice well, until |z| >= lambda/4. Trajectory i draws its noise
/// from stream derive_key(master_seed, i).
inline LifetimeResult simulate_lifetime_1d(const TrapConfig& cfg, const LifetimeOptions& opt)
{
    const DerivedParams derived = derive(cfg);
    if (opt.n_traj < 1)
        throw ConfigError("n_traj", "at least one trajectory required");
    if (!(opt.bandwidth > 0.0))
        throw ConfigError("phase_bandwidth", "must be positive");

    NoiseProcess proto{0, opt.bandwidth, opt.phase_rms, NoiseKind::phase};
    IntegratorSettings settings;
    settings.dt = opt.dt > 0.0 ? opt.dt : default_time_step(derived, &proto);
    settings.max_time = opt.max_time;
    settings.escape_rule = EscapeRule::axial_well;
    settings.convergence_factor = opt.convergence_factor;
    const double period = 2.0 * constants::pi / derived.omega_axial;
    if (settings.dt > period / 100.0 * (1.0 + 1e-12))
        throw ConfigError("dt", "must resolve the axial oscillation (dt <= T/100)");
    if (proto.active() && settings.dt > proto.sample_interval() / 4.0 * (1.0 + 1e-12))
        throw ConfigError("dt", "must resolve the noise (dt <= sample_interval/4)");

    LifetimeResult result;
    result.records.resize(opt.n_traj);
    result.seed = opt.master_seed;
    result.dt = settings.step();
    result.horizon = opt.max_time;

    const unsigned threads = opt.threads == 0 ? default_thread_count() : opt.threads;
    parallel_for(opt.n_traj, threads, [&](std::size_t i) {
        NoiseProcess noise = proto;
        noise.seed = derive_key(opt.master_seed, i);
        const ShakenLatticeModel model(derived.trap_depth, derived.wavenumber, cfg.atom_mass, noise, opt.mapping);
        const TrajectoryState<double> start{};
        auto out = integrate(model, start, settings, [&](double z, double, double) {
            return !has_escaped(z, EscapeRule::axial_well, cfg);
        });
        result.records[i] = {i, out.stopped ? out.state.time : opt.max_time, !out.stopped};
    });

    std::vector<double> times;
    times.reserve(opt.n_traj);
    double sum = 0.0;
    for (const auto& r : result.records) {
        times.push_back(r.escape_time);
        sum += r.escape_time;
        result.n_censored += r.censored ? 1 : 0;
    }
    result.mean = sum / static_cast<double>(opt.n_traj);
    result.median = median_of(std::move(times));
    return result;
}

}  // namespace dipoletrap
