#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adiabatic.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "heating_budget.hpp"
#include "trap_model.hpp"

/// Configuration files, run manifests and CSV output for the command-line
/// tool.
namespace dipoletrap::io {

using nlohmann::json;

inline constexpr const char* tool_version = "1.0.0";

enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_config = 2,
    exit_numerical = 3,
    exit_missing_file = 4,
    exit_syntax = 5,
};

/// Configuration failure carrying the process exit code to report.
class ConfigFileError : public std::runtime_error
{
public:
    ConfigFileError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
    int code() const { return code_; }

private:
    int code_;
};

struct ScanGrid
{
    double start_hz = 250e3;
    double stop_hz = 900e3;
    std::size_t points = 53;
};

struct Protocols
{
    LifetimeOptions lifetime;
    std::vector<double> escape_map_energies = {0.1, 0.2, 0.35, 0.5, 0.7};  // E0/U0
    EscapeMapOptions escape_map;
    EnergyDistProtocol energy_dist;
    CalibrationOptions calibration;
    TransportScan scan;
    ScanGrid scan_grid;
};

struct RunConfig
{
    TrapConfig trap;
    NoiseSpec noise;
    ObservedHeating observed;
    Protocols protocols;
};

// ---------------------------------------------------------------------------
// Strict JSON reading
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed)
{
    if (!obj.is_object())
        throw ConfigFileError(exit_config, "section '" + section + "' must be an object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* a : allowed)
            known = known || item.key() == a;
        if (!known)
            throw ConfigFileError(exit_config, "unknown key '" + section + "." + item.key() + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& section)
{
    if (!obj.contains(key))
        return;
    try {
        out = obj.at(key).get<T>();
    }
    catch (const json::exception&) {
        throw ConfigFileError(exit_config, "key '" + section + "." + key + "' has the wrong type");
    }
}

inline void read_optional(const json& obj, const char* key, std::optional<double>& out, const std::string& section)
{
    if (!obj.contains(key))
        return;
    if (obj.at(key).is_null()) {
        out.reset();
        return;
    }
    double v = 0.0;
    read(obj, key, v, section);
    out = v;
}

inline PhaseMapping parse_mapping(const std::string& s)
{
    if (s == "standing_wave")
        return PhaseMapping::standing_wave;
    if (s == "full_phase")
        return PhaseMapping::full_phase;
    throw ConfigFileError(exit_config, "phase_mapping must be 'standing_wave' or 'full_phase'");
}

inline const char* mapping_name(PhaseMapping m)
{
    return m == PhaseMapping::standing_wave ? "standing_wave" : "full_phase";
}

inline RampShape parse_ramp_shape(const std::string& s)
{
    if (s == "smooth")
        return RampShape::smooth;
    if (s == "linear")
        return RampShape::linear;
    throw ConfigFileError(exit_config, "ramp_shape must be 'smooth' or 'linear'");
}

}  // namespace detail

/// Applies a parsed JSON document on top of `cfg`. Unknown keys, wrong types
/// and invariant violations raise ConfigFileError with exit_config.
inline void apply_json(const json& doc, RunConfig& cfg)
{
    using detail::check_keys;
    using detail::read;
    detail::check_keys(doc, "<root>", {"trap", "noise", "observed_heating", "protocols"});

    if (doc.contains("trap")) {
        const json& t = doc["trap"];
        const std::string s = "trap";
        check_keys(t, s,
                   {"wavelength_trap", "wavelength_d1", "wavelength_d2", "linewidth", "saturation_intensity",
                    "total_power", "waist", "atom_mass", "gravity", "reflected_amplitude",
                    "reflected_wavenumber_ratio"});
        read(t, "wavelength_trap", cfg.trap.wavelength_trap, s);
        read(t, "wavelength_d1", cfg.trap.wavelength_d1, s);
        read(t, "wavelength_d2", cfg.trap.wavelength_d2, s);
        read(t, "linewidth", cfg.trap.linewidth, s);
        read(t, "saturation_intensity", cfg.trap.saturation_intensity, s);
        read(t, "total_power", cfg.trap.total_power, s);
        read(t, "waist", cfg.trap.waist, s);
        read(t, "atom_mass", cfg.trap.atom_mass, s);
        read(t, "gravity", cfg.trap.gravity, s);
        read(t, "reflected_amplitude", cfg.trap.reflected_amplitude, s);
        read(t, "reflected_wavenumber_ratio", cfg.trap.reflected_wavenumber_ratio, s);
    }
    if (doc.contains("noise")) {
        const json& n = doc["noise"];
        const std::string s = "noise";
        check_keys(n, s,
                   {"intensity_rin_at_2omega_rad", "intensity_rin_at_2omega_z", "phase_rms", "phase_bandwidth"});
        read(n, "intensity_rin_at_2omega_rad", cfg.noise.intensity_rin_at_2omega_rad, s);
        read(n, "intensity_rin_at_2omega_z", cfg.noise.intensity_rin_at_2omega_z, s);
        read(n, "phase_rms", cfg.noise.phase_rms, s);
        read(n, "phase_bandwidth", cfg.noise.phase_bandwidth, s);
    }
    if (doc.contains("observed_heating")) {
        const json& o = doc["observed_heating"];
        const std::string s = "observed_heating";
        check_keys(o, s, {"aom_phase_noise_axial", "resonant_excitation_axial", "parametric_excitation_axial"});
        detail::read_optional(o, "aom_phase_noise_axial", cfg.observed.aom_phase_noise_axial, s);
        detail::read_optional(o, "resonant_excitation_axial", cfg.observed.resonant_excitation_axial, s);
        detail::read_optional(o, "parametric_excitation_axial", cfg.observed.parametric_excitation_axial, s);
    }
    if (doc.contains("protocols")) {
        const json& p = doc["protocols"];
        check_keys(p, "protocols", {"lifetime", "escape_map", "energy_dist", "resonance_scan"});
        Protocols& pr = cfg.protocols;
        if (p.contains("lifetime")) {
            const json& l = p["lifetime"];
            const std::string s = "protocols.lifetime";
            check_keys(l, s, {"n_traj", "seed", "max_time", "dt", "phase_mapping"});
            read(l, "n_traj", pr.lifetime.n_traj, s);
            read(l, "seed", pr.lifetime.master_seed, s);
            read(l, "max_time", pr.lifetime.max_time, s);
            read(l, "dt", pr.lifetime.dt, s);
            if (l.contains("phase_mapping")) {
                std::string m;
                read(l, "phase_mapping", m, s);
                pr.lifetime.mapping = detail::parse_mapping(m);
            }
        }
        if (p.contains("escape_map")) {
            const json& e = p["escape_map"];
            const std::string s = "protocols.escape_map";
            check_keys(e, s, {"E0", "n_traj", "seed", "Tc", "wait", "bracket", "dt"});
            read(e, "E0", pr.escape_map_energies, s);
            read(e, "n_traj", pr.escape_map.n_traj, s);
            read(e, "seed", pr.escape_map.seed, s);
            read(e, "Tc", pr.escape_map.Tc, s);
            read(e, "wait", pr.escape_map.wait, s);
            read(e, "bracket", pr.escape_map.bracket, s);
            read(e, "dt", pr.escape_map.dt, s);
        }
        if (p.contains("energy_dist")) {
            const json& e = p["energy_dist"];
            const std::string s = "protocols.energy_dist";
            check_keys(e, s,
                       {"U1_grid", "repetitions", "Tc", "wait", "rampup", "temperature_truth", "gravity_correction",
                        "seed", "dt", "calibration_E0", "calibration_n_traj"});
            auto& ed = pr.energy_dist;
            read(e, "U1_grid", ed.U1_grid, s);
            read(e, "repetitions", ed.repetitions, s);
            read(e, "Tc", ed.Tc, s);
            read(e, "wait", ed.wait, s);
            read(e, "rampup", ed.rampup, s);
            read(e, "temperature_truth", ed.temperature_truth, s);
            read(e, "seed", ed.seed, s);
            read(e, "dt", ed.dt, s);
            if (e.contains("gravity_correction")) {
                const json& g = e["gravity_correction"];
                if (g.is_string() && g.get<std::string>() == "extrapolated") {
                    ed.correction_mode = GravityCorrectionMode::extrapolated;
                }
                else if (g.is_number()) {
                    ed.correction_mode = GravityCorrectionMode::fixed;
                    ed.gravity_correction = g.get<double>();
                }
                else {
                    throw ConfigFileError(exit_config,
                                          "key '" + s + ".gravity_correction' must be a number or \"extrapolated\"");
                }
            }
            read(e, "calibration_E0", pr.calibration.energies, s);
            read(e, "calibration_n_traj", pr.calibration.map.n_traj, s);
        }
        if (p.contains("resonance_scan")) {
            const json& r = p["resonance_scan"];
            const std::string s = "protocols.resonance_scan";
            check_keys(r, s,
                       {"detuning_start_hz", "detuning_stop_hz", "points", "shots_per_point", "ramp_time",
                        "ramp_shape", "hold_exposure", "filter_depth", "filter_lower_time", "filter_wait",
                        "temperature", "transport_distance", "seed", "dt"});
            auto& sc = pr.scan;
            read(r, "detuning_start_hz", pr.scan_grid.start_hz, s);
            read(r, "detuning_stop_hz", pr.scan_grid.stop_hz, s);
            read(r, "points", pr.scan_grid.points, s);
            read(r, "shots_per_point", sc.shots_per_point, s);
            read(r, "ramp_time", sc.ramp_time, s);
            if (r.contains("ramp_shape")) {
                std::string m;
                read(r, "ramp_shape", m, s);
                sc.ramp_shape = detail::parse_ramp_shape(m);
            }
            read(r, "hold_exposure", sc.hold_exposure, s);
            read(r, "filter_depth", sc.filter_depth, s);
            read(r, "filter_lower_time", sc.filter_lower_time, s);
            read(r, "filter_wait", sc.filter_wait, s);
            read(r, "temperature", sc.temperature, s);
            read(r, "transport_distance", sc.transport_distance, s);
            read(r, "seed", sc.seed, s);
            read(r, "dt", sc.dt, s);
        }
    }
}

/// Validates every section; invariant violations become exit_config errors
/// naming the offending field.
inline void validate(RunConfig& cfg)
{
    try {
        dipoletrap::validate(cfg.trap);
        dipoletrap::validate(cfg.noise);
        if (cfg.protocols.scan_grid.points < 2)
            throw ConfigError("points", "scan needs at least 2 points");
        if (!(cfg.protocols.scan_grid.start_hz > 0.0 &&
              cfg.protocols.scan_grid.stop_hz > cfg.protocols.scan_grid.start_hz))
            throw ConfigError("detuning_start_hz", "requires 0 < start < stop");
        cfg.protocols.scan.detunings = detuning_grid_hz(cfg.protocols.scan_grid.start_hz,
                                                        cfg.protocols.scan_grid.stop_hz,
                                                        cfg.protocols.scan_grid.points);
        dipoletrap::validate(cfg.protocols.energy_dist);
        dipoletrap::validate(cfg.protocols.scan);
        for (double e : cfg.protocols.escape_map_energies)
            if (!(e > 0.0 && e < 1.0))
                throw ConfigError("E0", "escape-map energies must lie in (0, 1)");
    }
    catch (const ConfigError& e) {
        throw ConfigFileError(exit_config, std::string("invalid configuration: ") + e.what());
    }
}

inline RunConfig parse_config_text(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    }
    catch (const json::parse_error& e) {
        throw ConfigFileError(exit_syntax, std::string("malformed JSON: ") + e.what());
    }
    RunConfig cfg;
    apply_json(doc, cfg);
    validate(cfg);
    return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigFileError(exit_missing_file, "cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Defaults only, validated.
inline RunConfig default_config()
{
    RunConfig cfg;
    validate(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// Echo, hashing and manifests
// ---------------------------------------------------------------------------

inline json to_json(const RunConfig& c)
{
    const auto& t = c.trap;
    const auto& p = c.protocols;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["trap"] = {{"wavelength_trap", t.wavelength_trap},
                 {"wavelength_d1", t.wavelength_d1},
                 {"wavelength_d2", t.wavelength_d2},
                 {"linewidth", t.linewidth},
                 {"saturation_intensity", t.saturation_intensity},
                 {"total_power", t.total_power},
                 {"waist", t.waist},
                 {"atom_mass", t.atom_mass},
                 {"gravity", t.gravity},
                 {"reflected_amplitude", t.reflected_amplitude},
                 {"reflected_wavenumber_ratio", t.reflected_wavenumber_ratio}};
    j["noise"] = {{"intensity_rin_at_2omega_rad", c.noise.intensity_rin_at_2omega_rad},
                  {"intensity_rin_at_2omega_z", c.noise.intensity_rin_at_2omega_z},
                  {"phase_rms", c.noise.phase_rms},
                  {"phase_bandwidth", c.noise.phase_bandwidth}};
    j["observed_heating"] = {{"aom_phase_noise_axial", opt(c.observed.aom_phase_noise_axial)},
                             {"resonant_excitation_axial", opt(c.observed.resonant_excitation_axial)},
                             {"parametric_excitation_axial", opt(c.observed.parametric_excitation_axial)}};
    const auto& ed = p.energy_dist;
    json correction = ed.correction_mode == GravityCorrectionMode::extrapolated ? json("extrapolated")
                                                                               : json(ed.gravity_correction);
    j["protocols"] = {
        {"lifetime",
         {{"n_traj", p.lifetime.n_traj},
          {"seed", p.lifetime.master_seed},
          {"max_time", p.lifetime.max_time},
          {"dt", p.lifetime.dt},
          {"phase_mapping", detail::mapping_name(p.lifetime.mapping)}}},
        {"escape_map",
         {{"E0", p.escape_map_energies},
          {"n_traj", p.escape_map.n_traj},
          {"seed", p.escape_map.seed},
          {"Tc", p.escape_map.Tc},
          {"wait", p.escape_map.wait},
          {"bracket", p.escape_map.bracket},
          {"dt", p.escape_map.dt}}},
        {"energy_dist",
         {{"U1_grid", ed.U1_grid},
          {"repetitions", ed.repetitions},
          {"Tc", ed.Tc},
          {"wait", ed.wait},
          {"rampup", ed.rampup},
          {"temperature_truth", ed.temperature_truth},
          {"gravity_correction", correction},
          {"seed", ed.seed},
          {"dt", ed.dt},
          {"calibration_E0", p.calibration.energies},
          {"calibration_n_traj", p.calibration.map.n_traj}}},
        {"resonance_scan",
         {{"detuning_start_hz", p.scan_grid.start_hz},
          {"detuning_stop_hz", p.scan_grid.stop_hz},
          {"points", p.scan_grid.points},
          {"shots_per_point", p.scan.shots_per_point},
          {"ramp_time", p.scan.ramp_time},
          {"ramp_shape", p.scan.ramp_shape == RampShape::smooth ? "smooth" : "linear"},
          {"hold_exposure", p.scan.hold_exposure},
          {"filter_depth", p.scan.filter_depth},
          {"filter_lower_time", p.scan.filter_lower_time},
          {"filter_wait", p.scan.filter_wait},
          {"temperature", p.scan.temperature},
          {"transport_distance", p.scan.transport_distance},
          {"seed", p.scan.seed},
          {"dt", p.scan.dt}}}};
    return j;
}

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& data)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct RunManifest
{
    std::string config_hash;
    std::uint64_t master_seed = 0;
    std::string command;
    json parameters;
    std::string version = tool_version;
    double wall_time = 0.0;  // s

    json to_json() const
    {
        return {{"config_hash", config_hash}, {"master_seed", master_seed}, {"command", command},
                {"parameters", parameters},   {"tool_version", version},   {"wall_time", wall_time}};
    }
};

/// Hash over the command and the full parameter echo, so that two runs with
/// the same manifest hash produce the same data.
inline std::string config_hash(const std::string& command, const json& parameters)
{
    return fnv1a_hex(command + "\n" + parameters.dump());
}

/// Output directory: explicit flag, else $DIPOLETRAP_OUT, else "out".
inline std::filesystem::path resolve_output_dir(const std::string& flag)
{
    if (!flag.empty())
        return flag;
    if (const char* env = std::getenv("DIPOLETRAP_OUT"); env != nullptr && *env != '\0')
        return env;
    return "out";
}

inline void write_json(const std::filesystem::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

/// CSV with a `# config_hash=..., seed=...` comment line and a header row.
/// Numbers are printed with %.10g so the files are byte-stable.
class CsvWriter
{
public:
    CsvWriter(const std::filesystem::path& path, const std::string& hash, std::uint64_t seed,
              const std::vector<std::string>& header)
        : out_(path)
    {
        if (!out_)
            throw std::runtime_error("cannot write '" + path.string() + "'");
        out_ << "# config_hash=" << hash << ", seed=" << seed << '\n';
        for (std::size_t i = 0; i < header.size(); ++i)
            out_ << (i ? "," : "") << header[i];
        out_ << '\n';
    }

    void row(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

    void row(const std::vector<double>& values)
    {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values)
            cells.push_back(format(v));
        row(cells);
    }

    static std::string format(double v)
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return buf;
    }

private:
    std::ofstream out_;
};

/// Reads a survival-curve CSV written by the tool: comment lines are
/// skipped, the header must contain `abscissa`, `survived` and `total`.
inline SurvivalCurve read_survival_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigFileError(exit_missing_file, "cannot open '" + path.string() + "'");
    std::string line;
    std::vector<std::string> header;
    SurvivalCurve curve;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ','))
            out.push_back(cell);
        return out;
    };
    int ia = -1, is = -1, it = -1;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const auto cells = split(line);
        if (header.empty()) {
            header = cells;
            for (std::size_t i = 0; i < header.size(); ++i) {
                if (header[i] == "abscissa")
                    ia = static_cast<int>(i);
                if (header[i] == "survived")
                    is = static_cast<int>(i);
                if (header[i] == "total")
                    it = static_cast<int>(i);
            }
            if (ia < 0 || is < 0 || it < 0)
                throw ConfigFileError(exit_syntax, "curve CSV needs abscissa, survived and total columns");
            continue;
        }
        try {
            curve.push(std::stod(cells.at(ia)), std::stoull(cells.at(is)), std::stoull(cells.at(it)));
        }
        catch (const std::exception&) {
            throw ConfigFileError(exit_syntax, "malformed row in '" + path.string() + "': " + line);
        }
    }
    return curve;
}

}  // namespace dipoletrap::io
