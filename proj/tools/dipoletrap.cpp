// dipoletrap: command-line front end for the standing-wave dipole trap simulator.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include <dipoletrap/adiabatic.hpp>
#include <dipoletrap/dynamics.hpp>
#include <dipoletrap/experiments.hpp>
#include <dipoletrap/fitting.hpp>
#include <dipoletrap/heating_budget.hpp>
#include <dipoletrap/io.hpp>
#include <dipoletrap/trap_model.hpp>

namespace fs = std::filesystem;
using namespace dipoletrap;
using io::json;

namespace {

struct CommonFlags
{
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
};

struct Context
{
    io::RunConfig cfg;
    fs::path out_dir;
    std::string command;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

Context make_context(const CommonFlags& f, const std::string& command)
{
    Context ctx;
    ctx.cfg = f.config.empty() ? io::default_config() : io::parse_config(f.config);
    ctx.out_dir = io::resolve_output_dir(f.out);
    ctx.command = command;
    fs::create_directories(ctx.out_dir);
    return ctx;
}

/// Finishes a run: writes manifest.json with the parameter echo.
void finish(const Context& ctx, std::uint64_t seed, const json& extra, const std::string& hash)
{
    io::RunManifest m;
    m.command = ctx.command;
    m.master_seed = seed;
    m.parameters = extra;
    m.config_hash = hash;
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
    io::write_json(ctx.out_dir / "manifest.json", m.to_json());
}

json parameters(const Context& ctx, const json& extra)
{
    json p = io::to_json(ctx.cfg);
    p["command_options"] = extra;
    return p;
}

std::string fmt(double v) { return io::CsvWriter::format(v); }

// ---------------------------------------------------------------------------

int cmd_params(const CommonFlags& f)
{
    Context ctx = make_context(f, "params");
    const DerivedParams d = derive(ctx.cfg.trap);
    const json p = parameters(ctx, json::object());
    const std::string hash = io::config_hash(ctx.command, p);
    struct Row
    {
        const char* name;
        double value;
        const char* unit;
    };
    const std::vector<Row> rows = {
        {"trap_depth", to_millikelvin(d.trap_depth), "mK"},
        {"omega_axial", to_kilohertz(d.omega_axial), "kHz (Omega/2pi)"},
        {"omega_radial", to_kilohertz(d.omega_radial), "kHz (Omega/2pi)"},
        {"effective_detuning", d.effective_detuning / (2.0 * constants::pi) / 1e12, "THz (Delta/2pi)"},
        {"detuning_d1", d.detuning_d1 / (2.0 * constants::pi) / 1e12, "THz (Delta/2pi)"},
        {"detuning_d2", d.detuning_d2 / (2.0 * constants::pi) / 1e12, "THz (Delta/2pi)"},
        {"scattering_rate", d.scattering_rate, "1/s"},
        {"recoil_energy", to_millikelvin(d.recoil_energy) * 1e3, "uK"},
        {"rayleigh_length", d.rayleigh_length * 1e3, "mm"},
        {"gravity_cutoff", gravity_cutoff_depth(ctx.cfg.trap) / d.trap_depth, "U0"},
    };
    io::CsvWriter csv(ctx.out_dir / "params.csv", hash, 0, {"quantity", "value", "unit"});
    for (const auto& r : rows) {
        std::printf("%-20s %14.6g  %s\n", r.name, r.value, r.unit);
        csv.row(std::vector<std::string>{r.name, fmt(r.value), r.unit});
    }
    finish(ctx, 0, p, hash);
    return io::exit_ok;
}

int cmd_heating(const CommonFlags& f)
{
    Context ctx = make_context(f, "heating-table");
    const DerivedParams d = derive(ctx.cfg.trap);
    const HeatingBudget b = heating_table(ctx.cfg.trap, d, ctx.cfg.noise, ctx.cfg.observed);
    const json p = parameters(ctx, json::object());
    const std::string hash = io::config_hash(ctx.command, p);
    io::CsvWriter csv(ctx.out_dir / "heating_table.csv", hash, 0, {"mechanism", "rate_mK_per_s", "provenance"});
    for (const auto& r : b.rows) {
        const std::string rate = r.rate ? fmt(to_millikelvin(*r.rate)) : "";
        std::printf("%-40s %14s  %s\n", r.mechanism.c_str(), r.rate ? rate.c_str() : "-", to_string(r.provenance));
        csv.row(std::vector<std::string>{"\"" + r.mechanism + "\"", rate, to_string(r.provenance)});
    }
    const double g_rad = intensity_noise_gamma(d.omega_radial, ctx.cfg.noise.intensity_rin_at_2omega_rad);
    const double g_ax = intensity_noise_gamma(d.omega_axial, ctx.cfg.noise.intensity_rin_at_2omega_z);
    std::printf("tau_radial = %.4g s, tau_axial = %.4g s\n", 1.0 / g_rad, 1.0 / g_ax);
    finish(ctx, 0, p, hash);
    return io::exit_ok;
}

int cmd_lifetime(const CommonFlags& f, std::optional<std::size_t> n, std::optional<double> max_time,
                 std::optional<double> dt)
{
    Context ctx = make_context(f, "lifetime");
    LifetimeOptions opt = ctx.cfg.protocols.lifetime;
    opt.phase_rms = ctx.cfg.noise.phase_rms;
    opt.bandwidth = ctx.cfg.noise.phase_bandwidth;
    if (f.seed)
        opt.master_seed = *f.seed;
    if (n)
        opt.n_traj = *n;
    if (max_time)
        opt.max_time = *max_time;
    if (dt)
        opt.dt = *dt;
    opt.threads = f.threads;
    const json extra = {{"n_traj", opt.n_traj}, {"seed", opt.master_seed}, {"max_time", opt.max_time},
                        {"dt", opt.dt}};
    const json p = parameters(ctx, extra);
    const std::string hash = io::config_hash(ctx.command, p);
    const LifetimeResult r = simulate_lifetime_1d(ctx.cfg.trap, opt);
    io::CsvWriter csv(ctx.out_dir / "lifetime.csv", hash, opt.master_seed, {"index", "escape_time_s", "censored"});
    for (const auto& rec : r.records)
        csv.row(std::vector<std::string>{std::to_string(rec.index), fmt(rec.escape_time), rec.censored ? "1" : "0"});
    std::printf("trajectories %zu, censored %zu, mean %.4g s, median %.4g s (dt %.3g s)\n", r.records.size(),
                r.n_censored, r.mean, r.median, r.dt);
    finish(ctx, opt.master_seed, p, hash);
    return io::exit_ok;
}

int cmd_escape_map(const CommonFlags& f, const std::vector<double>& e0, std::optional<std::size_t> n)
{
    Context ctx = make_context(f, "escape-map");
    EscapeMapOptions opt = ctx.cfg.protocols.escape_map;
    std::vector<double> energies = e0.empty() ? ctx.cfg.protocols.escape_map_energies : e0;
    if (f.seed)
        opt.seed = *f.seed;
    if (n)
        opt.n_traj = *n;
    opt.threads = f.threads;
    for (double e : energies)
        if (!(e > 0.0 && e < 1.0))
            throw io::ConfigFileError(io::exit_config, "invalid 'e0': values must lie in (0, 1)");
    const json extra = {{"E0", energies}, {"n_traj", opt.n_traj}, {"seed", opt.seed}};
    const json p = parameters(ctx, extra);
    const std::string hash = io::config_hash(ctx.command, p);
    const double depth = trap_depth(ctx.cfg.trap);
    io::CsvWriter csv(ctx.out_dir / "escape_map.csv", hash, opt.seed,
                      {"E0_over_U0", "U1_median_over_U0", "U1_lo", "U1_hi", "n", "n_aborted", "valid",
                       "U1_axial_1d", "U1_radial_1d"});
    for (double e : energies) {
        const EscapeMapPoint pt = escape_depth_map(e * depth, ctx.cfg.trap, opt);
        const double ax = escape_depth_from_initial_energy(e * depth, axial_shape(depth, ctx.cfg.trap),
                                                           ctx.cfg.trap.atom_mass);
        const double ra = escape_depth_from_initial_energy(e * depth, radial_shape(depth, ctx.cfg.trap),
                                                           ctx.cfg.trap.atom_mass);
        csv.row(std::vector<double>{e, pt.U1_median / depth, pt.U1_lo / depth, pt.U1_hi / depth,
                                    static_cast<double>(pt.n_traj), static_cast<double>(pt.n_aborted),
                                    pt.valid ? 1.0 : 0.0, ax / depth, ra / depth});
        std::printf("E0 = %.3f U0: U1_median = %.4f U0 [%.4f, %.4f]%s\n", e, pt.U1_median / depth,
                    pt.U1_lo / depth, pt.U1_hi / depth, pt.valid ? "" : " (invalid: too many aborts)");
    }
    finish(ctx, opt.seed, p, hash);
    return io::exit_ok;
}

int cmd_energy_dist(const CommonFlags& f, std::optional<std::size_t> reps, std::optional<double> kT,
                    std::optional<std::size_t> calib_n)
{
    Context ctx = make_context(f, "energy-dist");
    EnergyDistProtocol proto = ctx.cfg.protocols.energy_dist;
    CalibrationOptions cal_opt = ctx.cfg.protocols.calibration;
    if (f.seed)
        proto.seed = *f.seed;
    if (reps)
        proto.repetitions = *reps;
    if (kT)
        proto.temperature_truth = *kT;
    if (calib_n)
        cal_opt.map.n_traj = *calib_n;
    proto.threads = f.threads;
    cal_opt.map.threads = f.threads;
    cal_opt.map.seed = proto.seed;
    dipoletrap::validate(proto);
    const json extra = {{"repetitions", proto.repetitions}, {"temperature_truth", proto.temperature_truth},
                        {"seed", proto.seed}, {"calibration_n_traj", cal_opt.map.n_traj}};
    const json p = parameters(ctx, extra);
    const std::string hash = io::config_hash(ctx.command, p);

    const double depth = trap_depth(ctx.cfg.trap);
    const EscapeCalibration cal = calibrate_escape_depths(ctx.cfg.trap, cal_opt);
    const EnergyDistResult res = run_energy_distribution(proto, ctx.cfg.trap, cal);

    io::CsvWriter csv(ctx.out_dir / "energy_dist.csv", hash, proto.seed,
                      {"U1_over_U0", "abscissa", "survived", "total", "p", "p_err"});
    for (std::size_t i = 0; i < res.by_depth.size(); ++i)
        csv.row(std::vector<double>{res.by_depth.abscissa[i], res.by_energy.abscissa[i] / depth,
                                    static_cast<double>(res.by_depth.survived[i]),
                                    static_cast<double>(res.by_depth.total[i]), res.by_depth.probability(i),
                                    res.by_depth.error(i)});
    io::CsvWriter cal_csv(ctx.out_dir / "calibration.csv", hash, proto.seed, {"U1_over_U0", "E0_over_U0"});
    for (std::size_t i = 0; i < cal.escape_depth.size(); ++i)
        cal_csv.row(std::vector<double>{cal.escape_depth[i] / depth, cal.energy[i] / depth});

    json summary = {{"gravity_correction", res.gravity_correction}, {"n_aborted", res.n_aborted}};
    if (res.extrapolated_cutoff)
        summary["extrapolated_cutoff"] = *res.extrapolated_cutoff;
    summary["theoretical_cutoff"] = gravity_cutoff_depth(ctx.cfg.trap) / depth;
    try {
        const BoltzmannFit fit = fit_temperature(cdf_points(res.by_energy), depth);
        summary["kT_over_U0"] = fit.kT_over_U0;
        summary["kT_over_U0_sigma"] = std::sqrt(fit.variance) / depth;
        summary["temperature_mK"] = fit.temperature * 1e3;
        std::printf("fitted kT = %.4f U0 (T = %.4f mK), truth %.4f U0\n", fit.kT_over_U0, fit.temperature * 1e3,
                    proto.temperature_truth);
    }
    catch (const FitError& e) {
        summary["fit_error"] = e.what();
        std::printf("temperature fit failed: %s\n", e.what());
    }
    if (res.extrapolated_cutoff)
        std::printf("extrapolated gravity cutoff %.5f U0 (theory %.5f U0)\n", *res.extrapolated_cutoff,
                    gravity_cutoff_depth(ctx.cfg.trap) / depth);
    io::write_json(ctx.out_dir / "energy_dist_summary.json", summary);
    finish(ctx, proto.seed, p, hash);
    return io::exit_ok;
}

int cmd_resonance_scan(const CommonFlags& f, std::optional<std::size_t> shots, std::optional<double> depth_mk)
{
    Context ctx = make_context(f, "resonance-scan");
    TransportScan scan = ctx.cfg.protocols.scan;
    TrapConfig trap = ctx.cfg.trap;
    if (depth_mk)
        trap = with_depth(trap, from_millikelvin(*depth_mk));
    if (f.seed)
        scan.seed = *f.seed;
    if (shots)
        scan.shots_per_point = *shots;
    scan.threads = f.threads;
    const json extra = {{"shots_per_point", scan.shots_per_point}, {"seed", scan.seed},
                        {"depth_mK", to_millikelvin(trap_depth(trap))}};
    const json p = parameters(ctx, extra);
    const std::string hash = io::config_hash(ctx.command, p);

    const ResonanceScanResult res = run_resonance_scan(scan, trap);
    io::CsvWriter csv(ctx.out_dir / "resonance_scan.csv", hash, scan.seed,
                      {"abscissa", "detuning_hz", "survived", "total", "p", "p_err", "aborted"});
    for (std::size_t i = 0; i < res.curve.size(); ++i)
        csv.row(std::vector<double>{res.curve.abscissa[i], res.curve.abscissa[i] / (2.0 * constants::pi),
                                    static_cast<double>(res.curve.survived[i]),
                                    static_cast<double>(res.curve.total[i]), res.curve.probability(i),
                                    res.curve.error(i), static_cast<double>(res.aborted[i])});
    const double omega_z = oscillation_frequencies(trap, trap_depth(trap)).axial;
    json summary = {{"omega_axial_hz", omega_z / (2.0 * constants::pi)},
                    {"filter_energy_over_U0", res.filter_energy / trap_depth(trap)}};
    try {
        const TwoGaussianFit fit = fit_two_gaussians(res.curve);
        summary["centers_hz"] = {fit.centers[0] / (2.0 * constants::pi), fit.centers[1] / (2.0 * constants::pi)};
        summary["center_errors_hz"] = {fit.center_errors[0] / (2.0 * constants::pi),
                                       fit.center_errors[1] / (2.0 * constants::pi)};
        summary["depths"] = {fit.depths[0], fit.depths[1]};
        summary["baseline"] = fit.baseline;
        summary["single_dip"] = fit.single_dip;
        std::printf("dips at %.1f kHz and %.1f kHz (Omega_z/2pi = %.1f kHz), baseline %.3f%s\n",
                    fit.centers[0] / (2e3 * constants::pi), fit.centers[1] / (2e3 * constants::pi),
                    omega_z / (2e3 * constants::pi), fit.baseline, fit.single_dip ? " [single dip]" : "");
    }
    catch (const FitError& e) {
        summary["fit_error"] = e.what();
        std::printf("dip fit failed: %s\n", e.what());
    }
    io::write_json(ctx.out_dir / "resonance_scan_summary.json", summary);
    finish(ctx, scan.seed, p, hash);
    return io::exit_ok;
}

int cmd_fit(const CommonFlags& f, const std::string& curve_path, const std::string& kind)
{
    Context ctx = make_context(f, "fit");
    const SurvivalCurve curve = io::read_survival_csv(curve_path);
    const json extra = {{"curve", curve_path}, {"kind", kind}};
    const json p = parameters(ctx, extra);
    const std::string hash = io::config_hash(ctx.command, p);
    const DerivedParams d = derive(ctx.cfg.trap);
    json report = {{"kind", kind}, {"curve", curve_path}};
    if (kind == "temperature") {
        // abscissa in units of U0
        const BoltzmannFit fit = fit_temperature(cdf_points(curve), 1.0);
        const double kT = fit.kT * d.trap_depth;
        report["kT_over_U0"] = fit.kT;
        report["kT_over_U0_sigma"] = std::sqrt(fit.variance);
        report["temperature_mK"] = to_millikelvin(kT);
        report["mean_quantum_number"] = mean_quantum_number(kT, d.omega_axial);
        report["kT_over_hbar_omega"] = thermal_occupation_ratio(kT, d.omega_axial);
        report["residual_norm"] = fit.residual_norm;
    }
    else if (kind == "dips") {
        const TwoGaussianFit fit = fit_two_gaussians(curve);
        report["centers"] = {fit.centers[0], fit.centers[1]};
        report["center_errors"] = {fit.center_errors[0], fit.center_errors[1]};
        report["depths"] = {fit.depths[0], fit.depths[1]};
        report["widths"] = {fit.widths[0], fit.widths[1]};
        report["baseline"] = fit.baseline;
        report["single_dip"] = fit.single_dip;
        report["depth_from_first_center_mK"] = to_millikelvin(depth_from_measured_frequency(fit.centers[0], ctx.cfg.trap));
    }
    else if (kind == "cutoff") {
        const CutoffFit fit = gravity_cutoff_extrapolation(curve);
        report["cutoff"] = fit.cutoff;
        report["slope"] = fit.slope;
        report["n_points"] = fit.n_points;
    }
    else {
        throw io::ConfigFileError(io::exit_usage, "unknown fit kind '" + kind + "' (temperature, dips, cutoff)");
    }
    std::cout << report.dump(2) << '\n';
    io::write_json(ctx.out_dir / "fit.json", report);
    finish(ctx, 0, p, hash);
    return io::exit_ok;
}

void add_common(CLI::App* sub, CommonFlags& f)
{
    sub->add_option("--config", f.config, "JSON configuration file (defaults: built-in reference parameters)");
    sub->add_option("--out", f.out, "output directory (default: $DIPOLETRAP_OUT or ./out)");
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--threads", f.threads, "worker threads (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Single-atom standing-wave dipole trap simulator"};
    app.require_subcommand(1);
    CommonFlags f;

    auto* params = app.add_subcommand("params", "derived trap parameters");
    add_common(params, f);
    auto* heating = app.add_subcommand("heating-table", "heating budget table");
    add_common(heating, f);

    auto* lifetime = app.add_subcommand("lifetime", "phase-noise lifetime Monte Carlo");
    add_common(lifetime, f);
    std::optional<std::size_t> life_n;
    std::optional<double> life_max, life_dt;
    lifetime->add_option("--n", life_n, "number of trajectories");
    lifetime->add_option("--max-time", life_max, "censoring horizon (s)");
    lifetime->add_option("--dt", life_dt, "time step (s)");

    auto* emap = app.add_subcommand("escape-map", "3D escape depth versus initial energy");
    add_common(emap, f);
    std::vector<double> e0;
    std::optional<std::size_t> emap_n;
    emap->add_option("--e0", e0, "initial energies in units of U0")->delimiter(',');
    emap->add_option("--n", emap_n, "trajectories per energy");

    auto* edist = app.add_subcommand("energy-dist", "energy-distribution protocol");
    add_common(edist, f);
    std::optional<std::size_t> reps, calib_n;
    std::optional<double> kT;
    edist->add_option("--reps", reps, "repetitions per U1 point");
    edist->add_option("--kT", kT, "true temperature kT/U0");
    edist->add_option("--calibration-n", calib_n, "trajectories per calibration energy");

    auto* scan = app.add_subcommand("resonance-scan", "transport resonance scan");
    add_common(scan, f);
    std::optional<std::size_t> shots;
    std::optional<double> depth_mk;
    scan->add_option("--shots", shots, "shots per detuning");
    scan->add_option("--depth-mK", depth_mk, "rescale the power to this trap depth (mK)");

    auto* fit = app.add_subcommand("fit", "fit a survival-curve CSV");
    add_common(fit, f);
    std::string curve, kind = "temperature";
    fit->add_option("--curve", curve, "curve CSV (abscissa,survived,total columns)")->required();
    fit->add_option("--kind", kind, "temperature | dips | cutoff");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? io::exit_ok : io::exit_usage;
    }

    try {
        if (params->parsed())
            return cmd_params(f);
        if (heating->parsed())
            return cmd_heating(f);
        if (lifetime->parsed())
            return cmd_lifetime(f, life_n, life_max, life_dt);
        if (emap->parsed())
            return cmd_escape_map(f, e0, emap_n);
        if (edist->parsed())
            return cmd_energy_dist(f, reps, kT, calib_n);
        if (scan->parsed())
            return cmd_resonance_scan(f, shots, depth_mk);
        if (fit->parsed())
            return cmd_fit(f, curve, kind);
    }
    catch (const io::ConfigFileError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code();
    }
    catch (const ConfigError& e) {
        std::cerr << "error: invalid configuration: " << e.what() << '\n';
        return io::exit_config;
    }
    catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io::exit_config;
    }
    catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return io::exit_numerical;
    }
    std::cerr << app.help() << '\n';
    return io::exit_usage;
}
