#pragma once

#include <optional>
#include <string>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"
#include "trap_model.hpp"

/// Closed-form heating rates and the heating budget table.
///
/// All user-facing spectral densities are one-sided per Hz. The harmonic
/// heating formulas are written for densities per unit angular frequency,
/// so every PSD is divided by 2 pi before it enters them.
namespace dipoletrap {

struct NoiseSpec
{
    double intensity_rin_at_2omega_rad = 3e-11;  // 1/Hz
    double intensity_rin_at_2omega_z = 3e-14;    // 1/Hz
    double phase_rms = 1e-3;                     // rad
    double phase_bandwidth = 1e6;                // Hz

    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

inline void validate(const NoiseSpec& spec)
{
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ConfigError(name, "must be finite and non-negative");
    };
    nonneg(spec.intensity_rin_at_2omega_rad, "intensity_rin_at_2omega_rad");
    nonneg(spec.intensity_rin_at_2omega_z, "intensity_rin_at_2omega_z");
    nonneg(spec.phase_rms, "phase_rms");
    nonneg(spec.phase_bandwidth, "phase_bandwidth");
}

/// <dE/dt> = 2 R_s E_r: one recoil on absorption and one on emission.
inline double recoil_heating_rate(double scattering_rate, double recoil_energy)
{
    return 2.0 * scattering_rate * recoil_energy;
}

/// Exponential heating constant gamma = (pi/2) Omega0^2 S(2 Omega0) from
/// relative intensity noise. `rin_psd_per_hz` is the one-sided density at
/// twice the oscillation frequency.
inline double intensity_noise_gamma(double omega0, double rin_psd_per_hz)
{
    const double s_per_rad = rin_psd_per_hz / (2.0 * constants::pi);
    return constants::pi * omega0 * omega0 / 2.0 * s_per_rad;
}

/// Linear heating rate (pi/2) m Omega0^4 S_x(Omega0) from position jitter
/// of the potential; `position_psd_per_hz` in m^2/Hz.
inline double pointing_heating_rate(double omega0, double position_psd_per_hz, double mass)
{
    const double s_per_rad = position_psd_per_hz / (2.0 * constants::pi);
    const double w2 = omega0 * omega0;
    return constants::pi / 2.0 * mass * w2 * w2 * s_per_rad;
}

/// Flat one-sided position PSD (m^2/Hz) produced by relative phase noise
/// between the two beams, <eps^2> = <dphi^2>/k^2, spread evenly over the
/// bandwidth. Valid for f below the bandwidth; zero above.
inline double phase_noise_position_psd(const NoiseSpec& spec, double k)
{
    if (!(spec.phase_bandwidth > 0.0))
        throw ConfigError("phase_bandwidth", "must be positive");
    const double phase_psd = spec.phase_rms * spec.phase_rms / spec.phase_bandwidth;
    return phase_psd / (k * k);
}

enum class Provenance { calculated, estimated, observed_placeholder, not_observable };

inline const char* to_string(Provenance p)
{
    switch (p) {
    case Provenance::calculated: return "calculated";
    case Provenance::estimated: return "estimated";
    case Provenance::observed_placeholder: return "observed-placeholder";
    case Provenance::not_observable: return "not-observable";
    }
    return "?";
}

struct HeatingRow
{
    std::string mechanism;
    std::optional<double> rate;  // J/s; empty when there is nothing to report
    Provenance provenance = Provenance::calculated;
};

struct HeatingBudget
{
    std::vector<HeatingRow> rows;

    const HeatingRow* find(const std::string& mechanism) const
    {
        for (const auto& r : rows)
            if (r.mechanism == mechanism)
                return &r;
        return nullptr;
    }
};

/// Rates that were only ever observed; carried through from configuration.
struct ObservedHeating
{
    std::optional<double> aom_phase_noise_axial;    // mK/s
    std::optional<double> resonant_excitation_axial;  // mK/s
    std::optional<double> parametric_excitation_axial;  // mK/s
};

/// Order-of-magnitude estimate for dipole-force fluctuation heating.
inline constexpr double dipole_force_fluctuation_estimate_mk_per_s = 1e-7;

/// Renders the budget. Exponential mechanisms are converted to energy rates
/// as gamma * U0.
inline HeatingBudget heating_table(const TrapConfig& cfg, const DerivedParams& derived, const NoiseSpec& spec,
                                   const ObservedHeating& observed = {})
{
    validate(spec);
    HeatingBudget b;
    const double u0 = derived.trap_depth;
    b.rows.push_back({"recoil heating", recoil_heating_rate(derived.scattering_rate, derived.recoil_energy),
                      Provenance::calculated});
    b.rows.push_back({"dipole force fluctuation heating",
                      from_millikelvin(dipole_force_fluctuation_estimate_mk_per_s), Provenance::estimated});
    b.rows.push_back({"laser intensity fluctuations (radial)",
                      intensity_noise_gamma(derived.omega_radial, spec.intensity_rin_at_2omega_rad) * u0,
                      Provenance::calculated});
    b.rows.push_back({"laser intensity fluctuations (axial)",
                      intensity_noise_gamma(derived.omega_axial, spec.intensity_rin_at_2omega_z) * u0,
                      Provenance::calculated});
    b.rows.push_back({"laser pointing stability (radial)", std::nullopt, Provenance::not_observable});

    double phase_rate = 0.0;
    if (spec.phase_bandwidth > 0.0 && derived.omega_axial / (2.0 * constants::pi) <= spec.phase_bandwidth) {
        const double sx = phase_noise_position_psd(spec, derived.wavenumber);
        phase_rate = pointing_heating_rate(derived.omega_axial, sx, cfg.atom_mass);
    }
    b.rows.push_back({"AOM phase noise (axial)", phase_rate, Provenance::calculated});

    auto placeholder = [&](const char* name, const std::optional<double>& mk) {
        b.rows.push_back({name, mk ? std::optional<double>(from_millikelvin(*mk)) : std::nullopt,
                          Provenance::observed_placeholder});
    };
    placeholder("AOM phase noise (axial, observed)", observed.aom_phase_noise_axial);
    placeholder("resonant excitation (axial)", observed.resonant_excitation_axial);
    placeholder("parametric excitation (axial)", observed.parametric_excitation_axial);
    return b;
}

}  // namespace dipoletrap
