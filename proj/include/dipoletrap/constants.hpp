#pragma once

#include <numbers>

/// Physical constants (CODATA 2018) and unit helpers. Everything inside the
/// library is strict SI; temperatures-as-energies only appear at the I/O edge.
namespace dipoletrap::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double boltzmann = 1.380649e-23;      // J/K
inline constexpr double speed_of_light = 299792458.0;  // m/s
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double cesium133_mass = 132.905451961 * atomic_mass_unit;
inline constexpr double standard_gravity = 9.80665;    // m/s^2

}  // namespace dipoletrap::constants

namespace dipoletrap {

/// Energy in J -> temperature equivalent E/k_B in mK.
constexpr double to_millikelvin(double energy) { return energy / constants::boltzmann * 1e3; }

/// Temperature equivalent in mK -> energy in J.
constexpr double from_millikelvin(double mk) { return mk * 1e-3 * constants::boltzmann; }

constexpr double to_kilohertz(double angular_frequency)
{
    return angular_frequency / (2.0 * constants::pi) * 1e-3;
}

constexpr double from_kilohertz(double khz) { return khz * 1e3 * 2.0 * constants::pi; }

}  // namespace dipoletrap
