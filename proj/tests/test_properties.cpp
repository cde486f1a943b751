// Property suites: invariants that hold for whole families of inputs.
// Runnable standalone: ./property_tests

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <dipoletrap/experiments.hpp>
#include <dipoletrap/fitting.hpp>
#include <dipoletrap/heating_budget.hpp>

using namespace dipoletrap;

namespace {

constexpr double two_pi = 2.0 * constants::pi;

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

struct LinearFit
{
    double slope;
    double slope_error;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - my - slope * (x[i] - mx);
        ss += r * r;
    }
    return {slope, std::sqrt(ss / (n - 2.0) / sxx)};
}

// axial well with the depth on the lowering ramp
struct RampedAxialWell
{
    using vector_type = double;
    RampSchedule sched;
    double k;
    double m;
    double acceleration(double z, double t) const { return -ramp_profile(t, sched) * k * std::sin(2.0 * k * z) / m; }
    double potential(double z, double t) const
    {
        const double s = std::sin(k * z);
        return ramp_profile(t, sched) * s * s;
    }
    double mass() const { return m; }
    double energy_scale() const { return sched.U0; }
};

TransportScan scan_of(std::vector<double> khz, std::size_t shots, unsigned threads)
{
    TransportScan s;
    for (double f : khz)
        s.detunings.push_back(two_pi * f * 1e3);
    s.shots_per_point = shots;
    s.threads = threads;
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// trap model
// ---------------------------------------------------------------------------

TEST(TrapProperties, FullPotentialBoundedByDepth)
{
    const TrapConfig cfg;
    const double U = trap_depth(cfg);
    EXPECT_EQ(potential_full(0.0, 0.0, 0.0, 0.0, U, cfg), U);
    for (int iz = -20; iz <= 20; ++iz)
        for (int ir = 0; ir <= 10; ++ir)
            for (int it = 0; it < 5; ++it) {
                const double z = iz * 0.37e-3 + iz * 13e-9;
                const double v = potential_full(z, ir * 5e-6, it * 0.3e-6, two_pi * 400e3, U, cfg);
                ASSERT_GE(v, 0.0);
                ASSERT_LE(v, U);
                if (iz != 0 || ir != 0)
                    ASSERT_LT(v, U);
            }
}

TEST(TrapProperties, ForcesMatchFiniteDifferences)
{
    const TrapConfig cfg;
    const double U = trap_depth(cfg);
    const double k = wavenumber(cfg);
    for (double phase : {0.3, 1.9, 5.0})
        for (double z : {-110e-9, -20e-9, 35e-9, 95e-9}) {
            const double h = 1e-12;
            const double d = (potential_three_beam_phase(z + h, phase, U, 0.05, k) -
                              potential_three_beam_phase(z - h, phase, U, 0.05, k)) /
                             (2 * h);
            EXPECT_LT(rel(force_three_beam_phase(z, phase, U, 0.05, k), d), 1e-6);
        }
    for (const Vec3& r : {Vec3{3e-6, -5e-6, 40e-9}, Vec3{-12e-6, 8e-6, -70e-9}}) {
        const Vec3 f = force_simplified_3d(r, U, cfg);
        auto V = [&](Vec3 p) { return potential_simplified_3d(p, U, cfg); };
        const double hr = 1e-11, hz = 1e-13;
        EXPECT_LT(rel(f.x, -(V({r.x + hr, r.y, r.z}) - V({r.x - hr, r.y, r.z})) / (2 * hr)), 1e-6);
        EXPECT_LT(rel(f.y, -(V({r.x, r.y + hr, r.z}) - V({r.x, r.y - hr, r.z})) / (2 * hr)), 1e-6);
        EXPECT_LT(rel(f.z, -(V({r.x, r.y, r.z + hz}) - V({r.x, r.y, r.z - hz})) / (2 * hz)), 1e-6);
    }
}

TEST(TrapProperties, FrequenciesFromSimplifiedCurvature)
{
    TrapConfig cfg;
    cfg.gravity = 0.0;
    for (double mk : {0.5, 1.0, 1.3, 2.0}) {
        const double U = from_millikelvin(mk);
        const auto w = oscillation_frequencies(cfg, U);
        auto V = [&](Vec3 p) { return potential_simplified_3d(p, U, cfg); };
        const double hz = 1e-10, hr = 1e-8;
        const double kz = (V({0, 0, hz}) - 2 * V({0, 0, 0}) + V({0, 0, -hz})) / (hz * hz);
        const double kr = (V({hr, 0, 0}) - 2 * V({0, 0, 0}) + V({-hr, 0, 0})) / (hr * hr);
        EXPECT_LT(rel(std::sqrt(kz / cfg.atom_mass), w.axial), 1e-3);
        EXPECT_LT(rel(std::sqrt(kr / cfg.atom_mass), w.radial), 1e-3);
    }
}

TEST(TrapProperties, DerivedValuesArePure)
{
    const TrapConfig cfg;
    const DerivedParams a = derive(cfg);
    const DerivedParams b = derive(cfg);
    EXPECT_EQ(a.effective_detuning, b.effective_detuning);
    EXPECT_EQ(a.trap_depth, b.trap_depth);
    EXPECT_EQ(a.scattering_rate, b.scattering_rate);
}

// ---------------------------------------------------------------------------
// heating budget
// ---------------------------------------------------------------------------

TEST(HeatingProperties, PhaseNoiseRateScalesQuadratically)
{
    const TrapConfig cfg;
    const DerivedParams d = derive(cfg);
    NoiseSpec spec;
    const double r1 = *heating_table(cfg, d, spec).find("AOM phase noise (axial)")->rate;
    spec.phase_rms *= 3.0;
    const double r3 = *heating_table(cfg, d, spec).find("AOM phase noise (axial)")->rate;
    EXPECT_NEAR(r3 / r1, 9.0, 1e-9);
    for (const auto& row : heating_table(cfg, d, spec).rows)
        if (row.rate)
            EXPECT_GE(*row.rate, 0.0);
}

TEST(HeatingProperties, SimulatedEarlyGrowthMatchesFormula)
{
    // both sides use the displacement PSD of the standing-wave mapping
    const TrapConfig cfg;
    const DerivedParams d = derive(cfg);
    const NoiseSpec spec;
    const double f = phase_to_position_factor(PhaseMapping::standing_wave);
    const double sx = phase_noise_position_psd(spec, d.wavenumber) * f * f;
    const double formula = pointing_heating_rate(d.omega_axial, sx, cfg.atom_mass);

    const int n_traj = 24;
    const double horizon = 10e-3;
    const int n_samples = 20;
    std::vector<double> mean_energy(n_samples + 1, 0.0);
    NoiseProcess proto{0, spec.phase_bandwidth, spec.phase_rms, NoiseKind::phase};
    IntegratorSettings s;
    s.dt = default_time_step(d, &proto);
    s.max_time = horizon;
    for (int i = 0; i < n_traj; ++i) {
        NoiseProcess noise = proto;
        noise.seed = derive_key(77, i);
        const ShakenLatticeModel model(d.trap_depth, d.wavenumber, cfg.atom_mass, noise);
        const auto stride = static_cast<std::uint64_t>(std::llround(horizon / n_samples / s.dt));
        const auto trace = integrate_trace(model, TrajectoryState<double>{}, s, stride);
        for (int j = 0; j <= n_samples && j < static_cast<int>(trace.size()); ++j)
            mean_energy[j] += trace[j].energy / n_traj;
    }
    std::vector<double> t, e;
    for (int j = 0; j <= n_samples; ++j) {
        t.push_back(j * horizon / n_samples);
        e.push_back(mean_energy[j]);
    }
    ASSERT_LT(e.back(), 0.2 * d.trap_depth);
    const double slope = linear_fit(t, e).slope;
    EXPECT_GT(slope / formula, 0.5);
    EXPECT_LT(slope / formula, 2.0);
}

// ---------------------------------------------------------------------------
// dynamics
// ---------------------------------------------------------------------------

TEST(IntegratorProperties, StaticWellEnergyHasNoSecularDrift)
{
    const TrapConfig cfg;
    const DerivedParams d = derive(cfg);
    const ShakenLatticeModel model(d.trap_depth, d.wavenumber, cfg.atom_mass, NoiseProcess{1, 1e6, 0.0});
    IntegratorSettings s;
    s.dt = default_time_step(d);
    const double period = two_pi / d.omega_axial;
    s.max_time = 3000.0 * period;
    // E = 0.5 U: start at rest at the turning point
    const double z0 = std::asin(std::sqrt(0.5)) / d.wavenumber;
    const TrajectoryState<double> start{z0, 0.0, 0.0};
    const double e0 = mechanical_energy(model, z0, 0.0, 0.0);
    const auto trace = integrate_trace(model, start, s, 173);
    std::vector<double> t, err;
    double worst = 0.0;
    for (const auto& st : trace) {
        t.push_back(st.time);
        err.push_back((st.energy - e0) / e0);
        worst = std::max(worst, std::abs(err.back()));
    }
    EXPECT_LT(worst, 1e-3);
    const LinearFit fit = linear_fit(t, err);
    EXPECT_LT(std::abs(fit.slope), 3.0 * fit.slope_error + 1e-12 / s.max_time);
}

TEST(IntegratorProperties, LoweringModelConservesEnergyAtConstantDepth)
{
    const TrapConfig cfg;
    const double U = trap_depth(cfg);
    const RampSchedule flat{U, U, 3e-3, 2e-3, 0.0};
    const LoweringModel3D model(cfg, flat);
    CounterRng rng(derive_key(3, 3));
    const InitialCondition ic = sample_initial_conditions(0.4 * U, U, cfg, rng);
    IntegratorSettings s{lowering_time_step(cfg, U), 2e-3};
    const double e0 = mechanical_energy(model, ic.state.position, ic.state.velocity, 0.0);
    double worst = 0.0;
    integrate(model, ic.state, s, [&](const Vec3& x, const Vec3& v, double t) {
        worst = std::max(worst, std::abs(mechanical_energy(model, x, v, t) - e0));
        return true;
    });
    EXPECT_LT(worst / U, 2e-3);
}

TEST(IntegratorProperties, LifetimeConvergesInStep)
{
    // single escape times are chaotic in dt, so the ensemble must be large
    const TrapConfig cfg;
    LifetimeOptions opt;
    opt.n_traj = 6000;
    opt.phase_rms = 0.1;
    opt.max_time = 0.05;
    opt.master_seed = 5;
    const LifetimeResult a = simulate_lifetime_1d(cfg, opt);
    opt.convergence_factor = 0.5;
    const LifetimeResult b = simulate_lifetime_1d(cfg, opt);
    EXPECT_EQ(a.n_censored, 0u);
    EXPECT_LT(rel(b.mean, a.mean), 0.05) << a.mean << " vs " << b.mean;
}

TEST(IntegratorProperties, EscapeThresholdConvergesInStep)
{
    const TrapConfig cfg;
    const double U = trap_depth(cfg);
    EscapeMapOptions opt;
    opt.n_traj = 6;
    opt.seed = 8;
    const EscapeMapPoint a = escape_depth_map(0.35 * U, cfg, opt);
    opt.dt = 0.5 * lowering_time_step(cfg, U);
    const EscapeMapPoint b = escape_depth_map(0.35 * U, cfg, opt);
    EXPECT_LT(rel(b.U1_median, a.U1_median), 0.05);
}

// ---------------------------------------------------------------------------
// determinism under thread counts
// ---------------------------------------------------------------------------

TEST(Determinism, LifetimeIndependentOfThreads)
{
    const TrapConfig cfg;
    LifetimeOptions opt;
    opt.n_traj = 8;
    opt.phase_rms = 1e-2;
    opt.max_time = 0.2;
    opt.threads = 1;
    const LifetimeResult a = simulate_lifetime_1d(cfg, opt);
    for (unsigned threads : {2u, 5u}) {
        opt.threads = threads;
        const LifetimeResult b = simulate_lifetime_1d(cfg, opt);
        ASSERT_EQ(a.records.size(), b.records.size());
        for (std::size_t i = 0; i < a.records.size(); ++i) {
            EXPECT_EQ(a.records[i].escape_time, b.records[i].escape_time);
            EXPECT_EQ(a.records[i].censored, b.records[i].censored);
        }
        EXPECT_EQ(a.mean, b.mean);
    }
}

TEST(Determinism, EscapeMapIndependentOfThreads)
{
    const TrapConfig cfg;
    EscapeMapOptions opt;
    opt.n_traj = 5;
    opt.threads = 1;
    const EscapeMapPoint a = escape_depth_map(0.2 * trap_depth(cfg), cfg, opt);
    opt.threads = 3;
    const EscapeMapPoint b = escape_depth_map(0.2 * trap_depth(cfg), cfg, opt);
    EXPECT_EQ(a.thresholds, b.thresholds);
    EXPECT_EQ(a.U1_median, b.U1_median);
}

TEST(Determinism, ResonanceScanIndependentOfThreads)
{
    const TrapConfig cfg;
    const ResonanceScanResult a = run_resonance_scan(scan_of({360.0, 740.0}, 10, 1), cfg);
    const ResonanceScanResult b = run_resonance_scan(scan_of({360.0, 740.0}, 10, 4), cfg);
    EXPECT_EQ(a.curve.survived, b.curve.survived);
    EXPECT_EQ(a.curve.total, b.curve.total);
}

TEST(Determinism, EnergyDistributionIndependentOfThreads)
{
    const TrapConfig cfg;
    const double U = trap_depth(cfg);
    EscapeCalibration cal;
    cal.escape_depth = {gravity_cutoff_depth(cfg), U};
    cal.energy = {0.0, U};
    EnergyDistProtocol p;
    p.U1_grid = {0.03, 0.006};
    p.repetitions = 5;
    p.threads = 1;
    const EnergyDistResult a = run_energy_distribution(p, cfg, cal);
    p.threads = 3;
    const EnergyDistResult b = run_energy_distribution(p, cfg, cal);
    EXPECT_EQ(a.by_depth.survived, b.by_depth.survived);
    EXPECT_EQ(a.by_energy.abscissa, b.by_energy.abscissa);
}

// ---------------------------------------------------------------------------
// adiabatic lowering
// ---------------------------------------------------------------------------

TEST(AdiabaticProperties, InitialEnergyMonotoneInEscapeDepth)
{
    const TrapConfig cfg;
    const double U = trap_depth(cfg);
    for (const auto& shape : {axial_shape(U, cfg), radial_shape(U, cfg)}) {
        double prev = 0.0;
        for (double u1 : {0.003, 0.006, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0}) {
            const double e0 = initial_energy_from_escape_depth(u1 * U, U, shape, cfg.atom_mass);
            EXPECT_GT(e0, prev) << u1;
            EXPECT_GE(e0, u1 * U * (1.0 - 1e-12));
            prev = e0;
        }
    }
}

TEST(AdiabaticProperties, EscapeMapMonotoneAndBetweenOneDimensionalModels)
{
    // the 1D models have no gravity sag
    TrapConfig cfg;
    cfg.gravity = 0.0;
    const double U = trap_depth(cfg);
    EscapeMapOptions opt;
    opt.n_traj = 12;
    double prev = 0.0;
    for (double e : {0.1, 0.2, 0.35, 0.5, 0.7}) {
        const EscapeMapPoint p = escape_depth_map(e * U, cfg, opt);
        ASSERT_TRUE(p.valid);
        EXPECT_GT(p.U1_median, prev) << e;
        EXPECT_LE(p.U1_lo, p.U1_median);
        EXPECT_GE(p.U1_hi, p.U1_median);
        EXPECT_GT(p.U1_median, 0.0);
        EXPECT_LT(p.U1_median, e * U);
        prev = p.U1_median;

        const double ax = escape_depth_from_initial_energy(e * U, axial_shape(U, cfg), cfg.atom_mass);
        const double rad = escape_depth_from_initial_energy(e * U, radial_shape(U, cfg), cfg.atom_mass);
        const double lo = std::min(ax, rad);
        const double hi = std::max(ax, rad);
        const bool between = p.U1_median >= lo && p.U1_median <= hi;
        const double nearest = std::abs(p.U1_median - lo) < std::abs(p.U1_median - hi) ? lo : hi;
        EXPECT_TRUE(between || rel(p.U1_median, nearest) < 0.2)
            << e << ": 3D " << p.U1_median / U << " axial " << ax / U << " radial " << rad / U;
    }
}

TEST(AdiabaticProperties, ActionConservedAlongSlowRamp)
{
    const TrapConfig cfg;
    const DerivedParams d = derive(cfg);
    const double U = d.trap_depth;
    const double m = cfg.atom_mass;
    // on the 1/t^2 branch |dOmega/dt|/Omega^2 = 1/(Omega0 Tc)
    const double Tc = 1.0 / (0.017 * d.omega_axial);
    const RampSchedule sched{U, 0.01 * U, Tc, 0.0, 0.0};
    EXPECT_NEAR(adiabaticity_parameter(3.0 * Tc, sched, d.omega_axial), 0.017, 1e-9);
    const RampedAxialWell well{sched, d.wavenumber, m};
    const PotentialShape shape0 = axial_shape(U, cfg);

    for (double e0_frac : {0.1, 0.3}) {
        const double e0 = e0_frac * U;
        const double s0 = action(e0, shape0, m);
        IntegratorSettings s{two_pi / d.omega_axial / 200.0, lowering_duration(sched)};
        double worst = 0.0;
        std::uint64_t step = 0;
        integrate(well, TrajectoryState<double>{0.0, std::sqrt(2.0 * e0 / m), 0.0}, s,
                  [&](double z, double v, double t) {
                      if (++step % 50 != 0)
                          return true;
                      const double u = ramp_profile(t, sched);
                      const double e = mechanical_energy(well, z, v, t);
                      if (e > 0.9 * u)
                          return false;
                      worst = std::max(worst, rel(action(e, axial_shape(u, cfg), m), s0));
                      return true;
                  });
        EXPECT_LT(worst, 0.05) << e0_frac;
    }
}

// ---------------------------------------------------------------------------
// experiment drivers
// ---------------------------------------------------------------------------

TEST(ExperimentProperties, BinomialBookkeeping)
{
    const TrapConfig cfg;
    const ResonanceScanResult r = run_resonance_scan(scan_of({300.0, 370.0, 500.0}, 20, 0), cfg);
    for (std::size_t i = 0; i < r.curve.size(); ++i) {
        EXPECT_LE(r.curve.survived[i], r.curve.total[i]);
        const double p = r.curve.probability(i);
        if (p > 0.0 && p < 1.0)
            EXPECT_NEAR(r.curve.error(i), std::sqrt(p * (1 - p) / r.curve.total[i]), 1e-15);
    }
}

TEST(ExperimentProperties, DirectDipFollowsSquareRootOfDepth)
{
    const TrapConfig cfg;
    const double U = trap_depth(cfg);
    const double ratio = 0.69;
    const std::vector<double> grid = {320.0, 335.0, 350.0, 365.0, 380.0, 395.0, 410.0};
    auto argmin = [&](const TrapConfig& c, double scale) {
        std::vector<double> khz;
        for (double g : grid)
            khz.push_back(g * scale);
        const ResonanceScanResult r = run_resonance_scan(scan_of(khz, 60, 0), c);
        const auto p = r.curve.probabilities();
        return std::min_element(p.begin(), p.end()) - p.begin();
    };
    const auto i_full = argmin(cfg, 1.0);
    const auto i_low = argmin(with_depth(cfg, ratio * U), std::sqrt(ratio));
    EXPECT_LE(std::abs(i_full - i_low), 1) << i_full << " vs " << i_low;
}

TEST(ExperimentProperties, EnergyDistributionMonotoneInDepth)
{
    // deeper final traps keep at least as many atoms, within 2 sigma
    const TrapConfig cfg;
    const double U = trap_depth(cfg);
    EscapeCalibration cal;
    cal.escape_depth = {gravity_cutoff_depth(cfg), U};
    cal.energy = {0.0, U};
    EnergyDistProtocol p;
    p.U1_grid = {0.06, 0.024, 0.009, 0.0045};
    p.repetitions = 30;
    const EnergyDistResult r = run_energy_distribution(p, cfg, cal);
    for (std::size_t i = 1; i < r.by_depth.size(); ++i) {
        const double sigma = std::hypot(r.by_depth.error(i - 1), r.by_depth.error(i));
        EXPECT_GE(r.by_depth.probability(i - 1) + 2.0 * sigma, r.by_depth.probability(i)) << i;
    }
    EXPECT_GT(r.by_depth.probability(0), r.by_depth.probability(3));
}

// ---------------------------------------------------------------------------
// fitting
// ---------------------------------------------------------------------------

TEST(FitProperties, CdfBoundedAndMonotone)
{
    for (double kT : {1e-3, 0.066, 1.0, 50.0}) {
        double prev = 0.0;
        for (int i = 0; i <= 500; ++i) {
            const double e = kT * 40.0 * i / 500.0;
            const double c = boltzmann_cdf(e, kT);
            ASSERT_GE(c, 0.0);
            ASSERT_LE(c, 1.0);
            ASSERT_GE(c, prev);
            prev = c;
        }
    }
    // hotter ensembles have less weight below a fixed energy
    EXPECT_GT(boltzmann_cdf(1.0, 0.5), boltzmann_cdf(1.0, 1.0));
}

TEST(FitProperties, TemperatureFitScaleEquivariant)
{
    std::vector<CdfPoint> pts;
    CounterRng rng(derive_key(31, 0));
    for (double e : {0.01, 0.02, 0.04, 0.07, 0.1, 0.15, 0.2, 0.3})
        pts.push_back({e, std::clamp(boltzmann_cdf(e, 0.066) + 0.02 * rng.normal(), 0.0, 1.0), 0.03});
    const BoltzmannFit base = fit_temperature(pts, 1.0);
    for (double c : {1e-3, 0.5, 7.0, from_millikelvin(1.3)}) {
        auto scaled = pts;
        for (auto& p : scaled)
            p.energy *= c;
        const BoltzmannFit f = fit_temperature(scaled, c);
        EXPECT_LT(rel(f.kT, c * base.kT), 1e-6) << c;
        EXPECT_LT(rel(f.kT_over_U0, base.kT_over_U0), 1e-6);
    }
    std::reverse(pts.begin(), pts.end());
    EXPECT_LT(rel(fit_temperature(pts, 1.0).kT, base.kT), 1e-9);
}

TEST(FitProperties, DipFitResidualsBelowNoise)
{
    const double sigma = 0.02;
    CounterRng rng(derive_key(32, 0));
    std::vector<double> x, y, s;
    const double truth[] = {0.3, 360.0, 18.0, 0.15, 725.0, 10.0};
    for (int i = 0; i < 53; ++i) {
        const double xi = 250.0 + 12.5 * i;
        x.push_back(xi);
        y.push_back(gaussian_dips(xi, 0.88, truth, 2) + sigma * rng.normal());
        s.push_back(sigma);
    }
    const TwoGaussianFit f = fit_two_gaussians(x, y, s);
    ASSERT_FALSE(f.single_dip);
    const double params[] = {f.depths[0], f.centers[0], f.widths[0], f.depths[1], f.centers[1], f.widths[1]};
    double ss_fit = 0.0, ss_truth = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ss_fit += std::pow(y[i] - gaussian_dips(x[i], f.baseline, params, 2), 2);
        ss_truth += std::pow(y[i] - gaussian_dips(x[i], 0.88, truth, 2), 2);
    }
    // the fitted residual cannot exceed that of the generating parameters
    EXPECT_LE(ss_fit, ss_truth * (1.0 + 1e-9));
    EXPECT_LT(std::sqrt(ss_fit / x.size()), 1.5 * sigma);
    EXPECT_NEAR(f.centers[0], 360.0, 3.0);
    EXPECT_NEAR(f.centers[1], 725.0, 5.0);
}
