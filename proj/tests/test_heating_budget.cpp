#include <gtest/gtest.h>

#include <cmath>

#include <dipoletrap/heating_budget.hpp>

using namespace dipoletrap;

namespace {

constexpr double two_pi = 2.0 * constants::pi;

double row_mk(const HeatingBudget& b, const char* name)
{
    const HeatingRow* r = b.find(name);
    EXPECT_NE(r, nullptr) << name;
    if (r == nullptr || !r->rate)
        return std::nan("");
    return to_millikelvin(*r->rate);
}

}  // namespace

TEST(HeatingBudget, RecoilRateArithmetic)
{
    const TrapConfig cfg;
    const DerivedParams d = derive(cfg);
    // 2 R_s (hbar k)^2 / 2m written out by hand
    const double p = constants::hbar * two_pi / cfg.wavelength_trap;
    const double oracle = d.scattering_rate * p * p / cfg.atom_mass;
    EXPECT_NEAR(recoil_heating_rate(d.scattering_rate, d.recoil_energy), oracle, oracle * 1e-12);
    EXPECT_NEAR(to_millikelvin(oracle) * 1e3, 1.8, 0.1);  // uK/s
}

TEST(HeatingBudget, IntensityGammaPerHzForm)
{
    // gamma = pi^2 nu^2 S(2 nu) with nu in Hz and S one-sided per Hz
    const double nu = 3.04e3;
    const double s = 3e-11;
    EXPECT_NEAR(intensity_noise_gamma(two_pi * nu, s), constants::pi * constants::pi * nu * nu * s, 1e-15);
}

TEST(HeatingBudget, PointingRatePerHzForm)
{
    const double omega = two_pi * 380e3;
    const double sx = 1e-30;
    const double m = constants::cesium133_mass;
    EXPECT_NEAR(pointing_heating_rate(omega, sx, m), m * std::pow(omega, 4) * sx / 4.0,
                m * std::pow(omega, 4) * sx * 1e-12);
}

TEST(HeatingBudget, PhaseNoisePsdScalesWithBandwidth)
{
    NoiseSpec spec;
    const double k = two_pi / 1064e-9;
    const double full = phase_noise_position_psd(spec, k);
    EXPECT_NEAR(full, spec.phase_rms * spec.phase_rms / spec.phase_bandwidth / (k * k), full * 1e-12);
    spec.phase_bandwidth *= 0.5;
    EXPECT_NEAR(phase_noise_position_psd(spec, k), 2.0 * full, full * 1e-12);
    spec.phase_bandwidth = 0.0;
    EXPECT_THROW(phase_noise_position_psd(spec, k), ConfigError);
}

TEST(HeatingBudget, ReferenceTableValues)
{
    const TrapConfig cfg;
    const DerivedParams d = derive(cfg);
    const NoiseSpec spec;
    const HeatingBudget b = heating_table(cfg, d, spec);

    const double tau_rad = 1.0 / intensity_noise_gamma(d.omega_radial, spec.intensity_rin_at_2omega_rad);
    const double tau_ax = 1.0 / intensity_noise_gamma(d.omega_axial, spec.intensity_rin_at_2omega_z);
    EXPECT_NEAR(tau_rad, 300.0, 90.0);
    EXPECT_NEAR(tau_ax, 20.0, 6.0);

    EXPECT_NEAR(row_mk(b, "AOM phase noise (axial)"), 4.0, 1.2);
    EXPECT_NEAR(row_mk(b, "laser intensity fluctuations (axial)"), 6e-2, 6e-2 * 0.4);
    EXPECT_NEAR(row_mk(b, "laser intensity fluctuations (radial)"), 4e-3, 4e-3 * 0.3);
    EXPECT_NEAR(row_mk(b, "dipole force fluctuation heating"), 1e-7, 1e-12);
}

TEST(HeatingBudget, ProvenanceAndPlaceholders)
{
    const TrapConfig cfg;
    const DerivedParams d = derive(cfg);
    ObservedHeating obs;
    obs.resonant_excitation_axial = 16.0;
    const HeatingBudget b = heating_table(cfg, d, NoiseSpec{}, obs);

    const HeatingRow* pointing = b.find("laser pointing stability (radial)");
    ASSERT_NE(pointing, nullptr);
    EXPECT_EQ(pointing->provenance, Provenance::not_observable);
    EXPECT_FALSE(pointing->rate.has_value());

    const HeatingRow* resonant = b.find("resonant excitation (axial)");
    ASSERT_NE(resonant, nullptr);
    EXPECT_EQ(resonant->provenance, Provenance::observed_placeholder);
    ASSERT_TRUE(resonant->rate.has_value());
    EXPECT_NEAR(to_millikelvin(*resonant->rate), 16.0, 1e-12);

    const HeatingRow* parametric = b.find("parametric excitation (axial)");
    ASSERT_NE(parametric, nullptr);
    EXPECT_FALSE(parametric->rate.has_value());

    EXPECT_EQ(b.find("recoil heating")->provenance, Provenance::calculated);
    EXPECT_EQ(b.find("dipole force fluctuation heating")->provenance, Provenance::estimated);
}

TEST(HeatingBudget, ZeroNoiseLeavesOnlyRecoil)
{
    const TrapConfig cfg;
    const DerivedParams d = derive(cfg);
    const NoiseSpec quiet{0.0, 0.0, 0.0, 1e6};
    const HeatingBudget b = heating_table(cfg, d, quiet);
    for (const auto& r : b.rows) {
        if (r.provenance != Provenance::calculated)
            continue;
        if (r.mechanism == "recoil heating")
            EXPECT_GT(*r.rate, 0.0);
        else
            EXPECT_EQ(*r.rate, 0.0) << r.mechanism;
    }
}

TEST(HeatingBudget, PhaseNoiseAboveBandwidthIsZero)
{
    const TrapConfig cfg;
    const DerivedParams d = derive(cfg);
    NoiseSpec narrow;
    narrow.phase_bandwidth = 100e3;  // below Omega_z / 2 pi
    EXPECT_EQ(row_mk(heating_table(cfg, d, narrow), "AOM phase noise (axial)"), 0.0);
}

TEST(HeatingBudget, RejectsNegativeNoise)
{
    NoiseSpec bad;
    bad.phase_rms = -1e-3;
    EXPECT_THROW(validate(bad), ConfigError);
}
