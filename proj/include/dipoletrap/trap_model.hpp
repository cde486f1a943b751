#pragma once

#include <cmath>

#include "constants.hpp"
#include "errors.hpp"
#include "vec3.hpp"

/// Static trap physics of a far red-detuned standing-wave dipole trap.
///
/// Sign convention: the depth U0 is stored positive. The light-shift profile
/// evaluators (`potential_full`, `potential_three_beam`) return the magnitude
/// of the attractive potential, maximal at an antinode. The dynamical
/// potentials (`potential_simplified_3d`, the shaken lattice) are written as
/// wells with the bottom at 0 and the barrier at U, so "E < U" means bound.
namespace dipoletrap {

struct TrapConfig
{
    double wavelength_trap = 1064e-9;  // m
    double wavelength_d1 = 894e-9;     // m
    double wavelength_d2 = 852e-9;     // m
    double linewidth = 2.0 * constants::pi * 5.2e6;  // rad/s, D2 line
    double saturation_intensity = 11.0;              // W/m^2 (1.1 mW/cm^2)
    double total_power = 4.0;                        // W, both beams
    double waist = 30e-6;                            // m
    double atom_mass = constants::cesium133_mass;    // kg
    double gravity = constants::standard_gravity;    // m/s^2
    double reflected_amplitude = 0.05;               // beta, third-beam field amplitude
    double reflected_wavenumber_ratio = 1.0;         // k'/k; only k' = k enters the potential

    friend bool operator==(const TrapConfig&, const TrapConfig&) = default;
};

inline void validate(const TrapConfig& cfg)
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ConfigError(name, "must be finite and strictly positive");
    };
    positive(cfg.wavelength_trap, "wavelength_trap");
    positive(cfg.wavelength_d1, "wavelength_d1");
    positive(cfg.wavelength_d2, "wavelength_d2");
    positive(cfg.linewidth, "linewidth");
    positive(cfg.saturation_intensity, "saturation_intensity");
    positive(cfg.waist, "waist");
    positive(cfg.atom_mass, "atom_mass");
    positive(cfg.reflected_wavenumber_ratio, "reflected_wavenumber_ratio");
    if (!(cfg.total_power >= 0.0) || !std::isfinite(cfg.total_power))
        throw ConfigError("total_power", "must be finite and non-negative");
    if (!(cfg.gravity >= 0.0) || !std::isfinite(cfg.gravity))
        throw ConfigError("gravity", "must be finite and non-negative");
    if (!(cfg.reflected_amplitude >= 0.0 && cfg.reflected_amplitude < 1.0))
        throw ConfigError("reflected_amplitude", "must lie in [0, 1)");
    if (cfg.wavelength_d1 == cfg.wavelength_trap || cfg.wavelength_d2 == cfg.wavelength_trap)
        throw ConfigError("wavelength_trap", "resonant with an atomic line (zero detuning)");
    if (!(cfg.wavelength_trap > cfg.wavelength_d1 && cfg.wavelength_d1 > cfg.wavelength_d2))
        throw ConfigError("wavelength_trap",
                          "red-detuned ordering wavelength_trap > wavelength_d1 > wavelength_d2 required");
}

struct Detunings
{
    double d1 = 0.0;         // rad/s
    double d2 = 0.0;         // rad/s
    double effective = 0.0;  // rad/s, negative for red detuning
};

inline double angular_frequency_of(double wavelength)
{
    return 2.0 * constants::pi * constants::speed_of_light / wavelength;
}

/// Detunings from the D1/D2 lines and the alkali effective detuning
/// 1/Delta = (1/Delta1 + 2/Delta2) / 3.
inline Detunings detunings(const TrapConfig& cfg)
{
    const double w = angular_frequency_of(cfg.wavelength_trap);
    Detunings d;
    d.d1 = w - angular_frequency_of(cfg.wavelength_d1);
    d.d2 = w - angular_frequency_of(cfg.wavelength_d2);
    if (d.d1 == 0.0 || d.d2 == 0.0)
        throw ConfigError("wavelength_trap", "resonant with an atomic line (zero detuning)");
    const double inv = (1.0 / d.d1 + 2.0 / d.d2) / 3.0;
    if (inv == 0.0)
        throw ConfigError("wavelength_trap", "effective detuning diverges");
    d.effective = 1.0 / inv;
    return d;
}

inline double effective_detuning(const TrapConfig& cfg) { return detunings(cfg).effective; }

inline double wavenumber(const TrapConfig& cfg) { return 2.0 * constants::pi / cfg.wavelength_trap; }

inline double rayleigh_length(const TrapConfig& cfg)
{
    return constants::pi * cfg.waist * cfg.waist / cfg.wavelength_trap;
}

/// Maximum trap depth |U0| (J) of the standing wave for total power P.
inline double trap_depth(const TrapConfig& cfg)
{
    const double delta = effective_detuning(cfg);
    const double gamma = cfg.linewidth;
    const double s = cfg.total_power / (constants::pi * cfg.waist * cfg.waist * cfg.saturation_intensity);
    return constants::hbar * gamma / 2.0 * s * gamma / std::abs(delta);
}

struct OscillationFrequencies
{
    double axial = 0.0;   // rad/s
    double radial = 0.0;  // rad/s
};

/// Harmonic frequencies at the well bottom for depth U0.
inline OscillationFrequencies oscillation_frequencies(const TrapConfig& cfg, double depth)
{
    const double m = cfg.atom_mass;
    const double lambda = cfg.wavelength_trap;
    return {2.0 * constants::pi * std::sqrt(2.0 * depth / (m * lambda * lambda)),
            std::sqrt(4.0 * depth / (m * cfg.waist * cfg.waist))};
}

/// Photon scattering rate at the intensity maximum, |U0 Gamma / (hbar Delta)|.
inline double scattering_rate(const TrapConfig& cfg, double depth)
{
    return std::abs(depth * cfg.linewidth / (constants::hbar * effective_detuning(cfg)));
}

inline double recoil_energy(const TrapConfig& cfg)
{
    const double p = constants::hbar * wavenumber(cfg);
    return p * p / (2.0 * cfg.atom_mass);
}

/// Smallest depth for which the radial well still has a barrier against
/// gravity: m g w0 e^{1/2} / 2. Zero when gravity is off.
inline double gravity_cutoff_depth(const TrapConfig& cfg)
{
    return cfg.atom_mass * cfg.gravity * cfg.waist * std::exp(0.5) / 2.0;
}

struct DerivedParams
{
    double effective_detuning = 0.0;
    double detuning_d1 = 0.0;
    double detuning_d2 = 0.0;
    double trap_depth = 0.0;
    double rayleigh_length = 0.0;
    double wavenumber = 0.0;
    double omega_axial = 0.0;
    double omega_radial = 0.0;
    double scattering_rate = 0.0;
    double recoil_energy = 0.0;
};

inline DerivedParams derive(const TrapConfig& cfg)
{
    validate(cfg);
    const Detunings d = detunings(cfg);
    DerivedParams p;
    p.effective_detuning = d.effective;
    p.detuning_d1 = d.d1;
    p.detuning_d2 = d.d2;
    p.trap_depth = trap_depth(cfg);
    p.rayleigh_length = rayleigh_length(cfg);
    p.wavenumber = wavenumber(cfg);
    const auto w = oscillation_frequencies(cfg, p.trap_depth);
    p.omega_axial = w.axial;
    p.omega_radial = w.radial;
    p.scattering_rate = scattering_rate(cfg, p.trap_depth);
    p.recoil_energy = recoil_energy(cfg);
    return p;
}

/// Same trap with the power rescaled so that the depth equals `depth`.
inline TrapConfig with_depth(TrapConfig cfg, double depth)
{
    const double current = trap_depth(cfg);
    if (!(current > 0.0))
        throw ConfigError("total_power", "cannot rescale a trap of zero depth");
    cfg.total_power *= depth / current;
    return cfg;
}

// ---------------------------------------------------------------------------
// Potential evaluators
// ---------------------------------------------------------------------------

/// Light-shift magnitude of the (possibly moving) standing wave with the
/// Gaussian envelope w(z). Lies in [0, U0 w0^2/w^2(z)]; the pattern moves at
/// v = lambda * delta_omega / (4 pi).
inline double potential_full(double z, double rho, double t, double delta_omega, double depth,
                             const TrapConfig& cfg)
{
    const double k = wavenumber(cfg);
    const double z0 = rayleigh_length(cfg);
    const double w2_ratio = 1.0 + (z / z0) * (z / z0);  // w^2(z)/w0^2
    const double w2 = cfg.waist * cfg.waist * w2_ratio;
    const double c = std::cos(0.5 * delta_omega * t - k * z);
    return depth / w2_ratio * std::exp(-2.0 * rho * rho / w2) * c * c;
}

/// Well form of the focal-plane potential used for 3D lowering runs:
/// U_t [1 - cos^2(kz) exp(-2(x^2+y^2)/w0^2)] + m g y, with gravity along -y.
inline double potential_simplified_3d(const Vec3& r, double depth, const TrapConfig& cfg)
{
    const double k = wavenumber(cfg);
    const double c = std::cos(k * r.z);
    const double e = std::exp(-2.0 * (r.x * r.x + r.y * r.y) / (cfg.waist * cfg.waist));
    return depth * (1.0 - c * c * e) + cfg.atom_mass * cfg.gravity * r.y;
}

/// Force -grad V of `potential_simplified_3d`.
inline Vec3 force_simplified_3d(const Vec3& r, double depth, const TrapConfig& cfg)
{
    const double k = wavenumber(cfg);
    const double inv_w2 = 1.0 / (cfg.waist * cfg.waist);
    const double e = std::exp(-2.0 * (r.x * r.x + r.y * r.y) * inv_w2);
    const double c = std::cos(k * r.z);
    const double s = std::sin(k * r.z);
    const double radial = depth * c * c * e * 4.0 * inv_w2;
    return {-radial * r.x, -radial * r.y - cfg.atom_mass * cfg.gravity, -depth * e * 2.0 * k * c * s};
}

/// Leading-order light-shift magnitude with a weak reflected third beam,
/// U0 {cos^2(kz) [1 + beta cos(phase)] - beta cos(kz) sin(kz) sin(phase)},
/// where phase = delta_omega * t for a constant detuning.
inline double potential_three_beam_phase(double z, double phase, double depth, double beta, double k)
{
    const double c = std::cos(k * z);
    const double s = std::sin(k * z);
    return depth * (c * c * (1.0 + beta * std::cos(phase)) - beta * c * s * std::sin(phase));
}

inline double potential_three_beam(double z, double t, double delta_omega, double depth, double beta,
                                   double k)
{
    return potential_three_beam_phase(z, delta_omega * t, depth, beta, k);
}

/// Axial force on the atom from the attractive three-beam potential, i.e.
/// +dU/dz of the light-shift magnitude.
inline double force_three_beam_phase(double z, double phase, double depth, double beta, double k)
{
    const double s2 = std::sin(2.0 * k * z);
    const double c2 = std::cos(2.0 * k * z);
    return depth * k * (-s2 * (1.0 + beta * std::cos(phase)) - beta * c2 * std::sin(phase));
}

/// Linearized axial equation of motion around z = 0 (valid for |kz| << 1):
/// z'' = -Omega_z^2 [1 + beta cos(dw t)] z - beta Omega_z^2 / (2k) sin(dw t).
inline double linearized_eom_rhs(double z, double t, double delta_omega, double omega_axial, double beta,
                                 double k)
{
    const double w2 = omega_axial * omega_axial;
    const double phase = delta_omega * t;
    return -w2 * (1.0 + beta * std::cos(phase)) * z - beta * w2 / (2.0 * k) * std::sin(phase);
}

}  // namespace dipoletrap
