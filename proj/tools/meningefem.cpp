// meningefem command-line front end.
//
// Subcommands: mesh (gen | quality), simulate, synth, calibrate.
// Exit codes: 0 success, 1 usage or input validation, 2 runtime failure,
// 3 calibration finished without converging.

#include "mfe/mfe.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitNotConverged = 3;

struct CommonFlags {
    std::string out_dir = ".";
    int threads = 1;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonFlags& cf) {
    cmd->add_option("--out", cf.out_dir, "Output directory (created if missing)");
    cmd->add_option("--threads", cf.threads, "Worker threads (0 = hardware)")
        ->check(CLI::Range(0, 1024));
    cmd->add_flag("--force", cf.force, "Overwrite existing output files");
}

// Collision policy: refuse to overwrite any artifact unless --force.
class OutputSet {
public:
    OutputSet(std::string dir, bool force) : dir_(std::move(dir)), force_(force) {}

    std::string reserve(const std::string& name) {
        const fs::path p = fs::path(dir_) / name;
        if (!force_ && fs::exists(p))
            throw mfe::ConfigError("output '" + p.string() +
                                   "' already exists (pass --force to overwrite)");
        paths_.push_back(p.string());
        return p.string();
    }

    void prepare_dir() const {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec && !fs::is_directory(dir_))
            throw mfe::Error("cannot create output directory '" + dir_ + "': " + ec.message());
    }

    const std::vector<std::string>& paths() const { return paths_; }

private:
    std::string dir_;
    bool force_;
    std::vector<std::string> paths_;
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw mfe::Error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw mfe::Error("failed writing '" + path + "'");
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

mfe::SimulationConfig load_config_checked(const std::string& path) {
    mfe::SimulationConfig c = mfe::load_config(path);
    c.validate();
    return c;
}

// ---------------------------------------------------------------- mesh gen

struct MeshGenArgs {
    CommonFlags common;
    std::vector<double> dims;
    double size = 0.0;
    std::vector<std::string> layer_flags;
    std::vector<std::string> rigid;
    std::optional<double> cohesive_at;
    std::string law_name = "interface";
};

int run_mesh_gen(const MeshGenArgs& a) {
    if (a.dims.size() != 3)
        throw mfe::ConfigError("--dims needs exactly three values (x y z, metres)");
    std::vector<mfe::LayerSpec> layers;
    for (const auto& s : a.layer_flags) {
        const auto colon = s.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 >= s.size())
            throw mfe::ConfigError("--layers entries look like name:thickness, got '" + s +
                                   "'");
        mfe::LayerSpec layer;
        layer.material = s.substr(0, colon);
        try {
            layer.thickness = std::stod(s.substr(colon + 1));
        } catch (const std::exception&) {
            throw mfe::ConfigError("cannot parse layer thickness in '" + s + "'");
        }
        layers.push_back(layer);
    }
    if (layers.empty()) layers.push_back({"brain", a.dims[2], false});
    for (const auto& name : a.rigid) {
        bool found = false;
        for (auto& l : layers)
            if (l.material == name) {
                l.rigid = true;
                found = true;
            }
        if (!found)
            throw mfe::ConfigError("--rigid names unknown layer '" + name + "'");
    }

    OutputSet outs(a.common.out_dir, a.common.force);
    outs.prepare_dir();
    const std::string mesh_path = outs.reserve("sample.mesh.json");
    const std::string manifest_path = outs.reserve("mesh_gen.manifest.json");

    Timer timer;
    const mfe::Mesh mesh = mfe::generate_sample_mesh(
        {a.dims[0], a.dims[1], a.dims[2]}, a.size, layers, a.cohesive_at, a.law_name);
    mfe::save_mesh(mesh, mesh_path);

    const auto q = mfe::mesh_quality(mesh);
    std::printf("mesh: %zu nodes, %zu hex elements, %zu cohesive elements\n",
                mesh.nodes.size(), mesh.hexes.size(), mesh.cohesives.size());
    std::printf("scaled Jacobian: min %.4f mean %.4f\n", q.min, q.mean);
    std::printf("wrote %s\n", mesh_path.c_str());

    mfe::RunManifest m;
    m.command = "mesh gen";
    m.threads = a.common.threads;
    m.parameters["dims_m"] = a.dims;
    m.parameters["element_size_m"] = a.size;
    m.parameters["layers"] = json::array();
    for (const auto& l : layers)
        m.parameters["layers"].push_back(
            {{"material", l.material}, {"thickness_m", l.thickness}, {"rigid", l.rigid}});
    if (a.cohesive_at) m.parameters["cohesive_at_m"] = *a.cohesive_at;
    m.parameters["law"] = a.law_name;
    m.add_output(mesh_path);
    m.duration_seconds = timer.seconds();
    mfe::save_manifest(m, manifest_path);
    return kExitOk;
}

// ------------------------------------------------------------ mesh quality

struct MeshQualityArgs {
    CommonFlags common;
    std::string mesh_path;
    double threshold = 0.2;
};

int run_mesh_quality(const MeshQualityArgs& a) {
    const mfe::Mesh mesh = mfe::load_mesh(a.mesh_path);
    mfe::validate(mesh);
    const auto q = mfe::mesh_quality(mesh, a.threshold);

    OutputSet outs(a.common.out_dir, a.common.force);
    outs.prepare_dir();
    const std::string report_path = outs.reserve("quality.json");
    const std::string manifest_path = outs.reserve("mesh_quality.manifest.json");

    Timer timer;
    json report;
    report["element_count"] = q.element_count;
    report["min_scaled_jacobian"] = q.min;
    report["mean_scaled_jacobian"] = q.mean;
    report["threshold"] = q.threshold;
    report["below_threshold"] = q.below_threshold;
    report["below_threshold_count"] = q.below_threshold.size();
    report["histogram"] = q.histogram;
    mfe::save_json(report, report_path);

    std::printf("elements: %zu\n", q.element_count);
    std::printf("scaled Jacobian: min %.6f mean %.6f\n", q.min, q.mean);
    std::printf("below threshold %.2f: %zu\n", q.threshold, q.below_threshold.size());

    mfe::RunManifest m;
    m.command = "mesh quality";
    m.threads = a.common.threads;
    m.add_input(a.mesh_path);
    m.parameters["threshold"] = a.threshold;
    m.add_output(report_path);
    m.duration_seconds = timer.seconds();
    mfe::save_manifest(m, manifest_path);
    return kExitOk;
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
    CommonFlags common;
    std::string mesh_path;
    std::string config_path;
    bool dry_run = false;
};

int run_simulate(const SimulateArgs& a) {
    mfe::Mesh mesh = mfe::load_mesh(a.mesh_path);
    mfe::validate(mesh);
    mfe::SimulationConfig config = load_config_checked(a.config_path);
    config.threads = a.common.threads;

    OutputSet outs(a.common.out_dir, a.common.force);
    outs.prepare_dir();
    const std::string manifest_path = outs.reserve("simulate.manifest.json");

    mfe::RunManifest m;
    m.command = "simulate";
    m.threads = a.common.threads;
    m.add_input(a.mesh_path);
    m.add_input(a.config_path);
    m.parameters["config"] = mfe::config_to_json(config);
    m.parameters["dry_run"] = a.dry_run;

    Timer timer;
    if (a.dry_run) {
        mfe::ExplicitSolver solver(mesh, config);
        const double dt = solver.reference_dt();
        const double t_end = solver.end_time();
        std::printf("dry run: %zu hex elements, %zu cohesive integration points\n",
                    solver.hex_count(), solver.cohesive_ip_count());
        std::printf("stable dt: %.6e s\n", dt);
        std::printf("end time: %.6e s, estimated steps: %.0f\n", t_end,
                    std::ceil(t_end / dt));
        m.duration_seconds = timer.seconds();
        mfe::save_manifest(m, manifest_path);
        return kExitOk;
    }

    const std::string curve_path = outs.reserve("curve.csv");
    const std::string energy_path = outs.reserve("energy.csv");
    const std::string svg_path = outs.reserve("curve.svg");

    const mfe::RunResult rr = mfe::run(mesh, config);
    mfe::save_curve_csv(rr.curve, curve_path);
    write_text(energy_path, mfe::energy_csv(rr.history));
    mfe::save_curve_svg({{"simulation", rr.curve}}, svg_path, "force vs displacement");

    const auto audit = mfe::energy_report(rr.history);
    std::printf("steps: %zu, final time %.6e s, peak force %.6f N\n", rr.steps,
                rr.final_time, rr.curve.peak_force());
    std::printf("energy imbalance max %.3e, quasi-static: %s\n", audit.max_imbalance,
                audit.quasi_static ? "yes" : "no");
    if (rr.interface_fully_failed)
        std::printf("interface fully failed at t %.6e s (displacement %.6e m)\n",
                    rr.failure_complete_time, rr.failure_complete_displacement);

    m.add_output(curve_path);
    m.add_output(energy_path);
    m.add_output(svg_path);
    m.duration_seconds = timer.seconds();
    mfe::save_manifest(m, manifest_path);
    return kExitOk;
}

// --------------------------------------------------------------------- synth

struct SynthArgs {
    CommonFlags common;
    std::string mesh_path;
    std::string config_path;
    double noise = 0.0;
    std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
    mfe::Mesh mesh = mfe::load_mesh(a.mesh_path);
    mfe::validate(mesh);
    mfe::SimulationConfig config = load_config_checked(a.config_path);
    config.threads = a.common.threads;

    OutputSet outs(a.common.out_dir, a.common.force);
    outs.prepare_dir();
    const std::string target_path = outs.reserve("target.csv");
    const std::string manifest_path = outs.reserve("synth.manifest.json");

    Timer timer;
    const mfe::ForceDisplacementCurve target =
        mfe::synthesize_target(mesh, config, a.noise, a.seed);
    mfe::save_curve_csv(target, target_path);
    std::printf("wrote %s (%zu samples, peak force %.6f N)\n", target_path.c_str(),
                target.size(), target.peak_force());

    mfe::RunManifest m;
    m.command = "synth";
    m.threads = a.common.threads;
    m.add_input(a.mesh_path);
    m.add_input(a.config_path);
    m.parameters["config"] = mfe::config_to_json(config);
    m.parameters["noise_fraction"] = a.noise;
    m.seed = a.seed;
    m.add_output(target_path);
    m.duration_seconds = timer.seconds();
    mfe::save_manifest(m, manifest_path);
    return kExitOk;
}

// ----------------------------------------------------------------- calibrate

struct CalibrateArgs {
    CommonFlags common;
    std::string stage;
    std::string target_path;
    std::string mesh_path;
    std::string config_path;
    std::string settings_path;   // optional optimizer settings / bound overrides
    std::string tissue_params;   // interface stage input
    bool fit_alpha = false;
};

void parse_settings(const std::string& path, mfe::OptimizerSettings& settings,
                    std::vector<mfe::ParamSpec>& overrides, bool& fit_alpha) {
    std::ifstream in(path);
    if (!in) throw mfe::ConfigError("cannot open settings file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw mfe::ConfigError("settings file '" + path + "': " + e.what());
    }
    if (j.contains("algorithm")) {
        const std::string alg = j.at("algorithm").get<std::string>();
        if (alg == "sqp")
            settings.algorithm = mfe::OptimAlgorithm::Sqp;
        else if (alg == "nelder-mead")
            settings.algorithm = mfe::OptimAlgorithm::NelderMead;
        else
            throw mfe::ConfigError("settings: unknown algorithm '" + alg + "'");
    }
    if (j.contains("max_iterations")) settings.max_iterations = j.at("max_iterations").get<int>();
    if (j.contains("objective_rel_tol"))
        settings.objective_rel_tol = j.at("objective_rel_tol").get<double>();
    if (j.contains("fd_relative_step"))
        settings.fd_relative_step = j.at("fd_relative_step").get<double>();
    if (j.contains("fit_alpha")) fit_alpha = j.at("fit_alpha").get<bool>();
    if (j.contains("parameters"))
        for (const auto& p : j.at("parameters")) {
            mfe::ParamSpec spec;
            spec.name = p.at("name").get<std::string>();
            spec.lower = p.at("lower").get<double>();
            spec.upper = p.at("upper").get<double>();
            spec.initial = p.at("initial").get<double>();
            overrides.push_back(spec);
        }
}

mfe::OgdenParams load_tissue_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw mfe::ConfigError("cannot open tissue parameters file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw mfe::ConfigError("tissue parameters '" + path + "': " + e.what());
    }
    mfe::OgdenParams p;
    try {
        const auto& src = j.contains("ogden") ? j.at("ogden") : j;
        p.mu = {src.at("mu_Pa").at(0).get<double>(), src.at("mu_Pa").at(1).get<double>()};
        p.alpha = {src.at("alpha").at(0).get<double>(), src.at("alpha").at(1).get<double>()};
        p.D = {src.at("D_per_Pa").at(0).get<double>(), src.at("D_per_Pa").at(1).get<double>()};
    } catch (const json::exception& e) {
        throw mfe::ConfigError("tissue parameters '" + path + "': " + e.what());
    }
    p.validate();
    return p;
}

std::string trace_csv(const mfe::CalibrationResult& r) {
    std::string out = "iteration";
    for (const auto& n : r.parameter_names) out += "," + n;
    out += ",objective\n";
    char buf[64];
    for (const auto& rec : r.trace) {
        out += std::to_string(rec.iteration);
        for (double v : rec.params) {
            std::snprintf(buf, sizeof buf, ",%.12g", v);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, ",%.12g", rec.objective);
        out += buf;
        out += "\n";
    }
    return out;
}

int run_calibrate(const CalibrateArgs& a) {
    if (a.stage != "tissue" && a.stage != "interface")
        throw mfe::ConfigError("--stage must be 'tissue' or 'interface'");
    if (a.stage == "interface" && a.tissue_params.empty())
        throw mfe::ConfigError("interface stage needs --tissue-params (stage-1 output)");

    mfe::Mesh mesh = mfe::load_mesh(a.mesh_path);
    mfe::validate(mesh);
    mfe::SimulationConfig config = load_config_checked(a.config_path);
    config.threads = a.common.threads;
    const mfe::ForceDisplacementCurve target = mfe::load_curve_csv(a.target_path);

    mfe::OptimizerSettings settings = a.stage == "tissue" ? mfe::tissue_stage_settings()
                                                          : mfe::interface_stage_settings();
    std::vector<mfe::ParamSpec> overrides;
    bool fit_alpha = a.fit_alpha;
    if (!a.settings_path.empty()) parse_settings(a.settings_path, settings, overrides, fit_alpha);

    OutputSet outs(a.common.out_dir, a.common.force);
    outs.prepare_dir();
    const std::string report_path = outs.reserve("calibration.json");
    const std::string trace_path = outs.reserve("trace.csv");
    const std::string fitted_path = outs.reserve("fitted.csv");
    const std::string overlay_path = outs.reserve("overlay.svg");
    const std::string manifest_path = outs.reserve("calibrate.manifest.json");
    std::string tissue_out;
    if (a.stage == "tissue") tissue_out = outs.reserve("tissue_params.json");

    mfe::RunManifest m;
    m.command = "calibrate " + a.stage;
    m.threads = a.common.threads;
    m.add_input(a.mesh_path);
    m.add_input(a.config_path);
    m.add_input(a.target_path);
    if (!a.settings_path.empty()) m.add_input(a.settings_path);
    if (!a.tissue_params.empty()) m.add_input(a.tissue_params);
    m.parameters["config"] = mfe::config_to_json(config);
    m.parameters["stage"] = a.stage;

    Timer timer;
    json report;
    mfe::CalibrationResult result;
    mfe::ForceDisplacementCurve fitted;

    if (a.stage == "tissue") {
        const auto mode = fit_alpha ? mfe::TissueFitMode::MuAndAlpha : mfe::TissueFitMode::MuOnly;
        const mfe::TissueCalibration cal = mfe::calibrate_tissue(
            target, mesh, config, mode, settings, overrides.empty() ? nullptr : &overrides);
        result = cal.result;
        fitted = cal.fitted;

        json params;
        params["mu_Pa"] = cal.params.mu;
        params["alpha"] = cal.params.alpha;
        params["D_per_Pa"] = cal.params.D;
        params["mu0_Pa"] = cal.params.mu0();
        params["K0_Pa"] = cal.params.K0();
        mfe::save_json(params, tissue_out);
        report["tissue"] = params;
        m.parameters["fit_alpha"] = fit_alpha;
    } else {
        const mfe::OgdenParams tissue = load_tissue_params(a.tissue_params);
        const mfe::InterfaceCalibration cal = mfe::calibrate_interface(
            target, mesh, config, tissue, settings, overrides.empty() ? nullptr : &overrides);
        result = cal.result;
        fitted = cal.fitted;
        report["law"] = mfe::law_to_json(cal.law);
    }

    report["stage"] = a.stage;
    report["converged"] = result.converged;
    report["iterations"] = result.iterations;
    report["objective_N_m"] = result.objective_value;
    report["peak_force_error_pct"] = result.peak_force_error_pct;
    report["parameters"] = result.parameters;
    mfe::save_json(report, report_path);
    write_text(trace_path, trace_csv(result));
    mfe::save_curve_csv(fitted, fitted_path);
    mfe::save_curve_svg({{"target", target}, {"fitted", fitted}}, overlay_path,
                        a.stage + " calibration");

    std::printf("stage %s: %s after %d iterations, objective %.6g\n", a.stage.c_str(),
                result.converged ? "converged" : "did not converge", result.iterations,
                result.objective_value);
    for (const auto& [k, v] : result.parameters) std::printf("  %s = %.6g\n", k.c_str(), v);
    std::printf("peak force error: %.3f %%\n", result.peak_force_error_pct);

    m.add_output(report_path);
    m.add_output(trace_path);
    m.add_output(fitted_path);
    m.add_output(overlay_path);
    if (!tissue_out.empty()) m.add_output(tissue_out);
    m.duration_seconds = timer.seconds();
    mfe::save_manifest(m, manifest_path);

    return result.converged ? kExitOk : kExitNotConverged;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"meningefem: explicit-dynamics brain-tissue and brain-skull interface "
                 "models with two-stage parameter calibration"};
    app.require_subcommand(1);

    MeshGenArgs mesh_gen;
    MeshQualityArgs mesh_quality;
    SimulateArgs simulate;
    SynthArgs synth;
    CalibrateArgs calibrate;

    CLI::App* mesh_cmd = app.add_subcommand("mesh", "Generate or inspect sample meshes");
    mesh_cmd->require_subcommand(1);
    {
        CLI::App* gen = mesh_cmd->add_subcommand("gen", "Generate a layered box mesh");
        gen->add_option("--dims", mesh_gen.dims, "Sample dimensions x y z in metres")
            ->expected(3)
            ->required();
        gen->add_option("--size", mesh_gen.size, "Target hex edge length in metres")
            ->required();
        gen->add_option("--layers", mesh_gen.layer_flags,
                        "Layers bottom-up as name:thickness_m");
        gen->add_option("--rigid", mesh_gen.rigid, "Layer names to treat as rigid");
        gen->add_option("--cohesive-at", mesh_gen.cohesive_at,
                        "Height of the cohesive plane in metres");
        gen->add_option("--law", mesh_gen.law_name, "Cohesive law name for the plane");
        add_common(gen, mesh_gen.common);

        CLI::App* quality = mesh_cmd->add_subcommand("quality", "Report scaled Jacobians");
        quality->add_option("--in", mesh_quality.mesh_path, "Mesh file")->required();
        quality->add_option("--threshold", mesh_quality.threshold,
                            "Flag elements below this scaled Jacobian");
        add_common(quality, mesh_quality.common);
    }

    CLI::App* sim_cmd = app.add_subcommand("simulate", "Run one forward simulation");
    sim_cmd->add_option("--mesh", simulate.mesh_path, "Mesh file")->required();
    sim_cmd->add_option("--config", simulate.config_path, "Simulation config")->required();
    sim_cmd->add_flag("--dry-run", simulate.dry_run,
                      "Validate, print dt and step estimate, write only the manifest");
    add_common(sim_cmd, simulate.common);

    CLI::App* synth_cmd =
        app.add_subcommand("synth", "Produce a synthetic target curve (100 Hz equivalent)");
    synth_cmd->add_option("--mesh", synth.mesh_path, "Mesh file")->required();
    synth_cmd->add_option("--config", synth.config_path, "Simulation config")->required();
    synth_cmd->add_option("--noise", synth.noise, "Multiplicative noise fraction")
        ->check(CLI::Range(0.0, 0.999));
    synth_cmd->add_option("--seed", synth.seed, "Noise seed");
    add_common(synth_cmd, synth.common);

    CLI::App* cal_cmd = app.add_subcommand("calibrate", "Fit parameters to a target curve");
    cal_cmd->add_option("--stage", calibrate.stage, "tissue or interface")->required();
    cal_cmd->add_option("--target", calibrate.target_path, "Target curve CSV")->required();
    cal_cmd->add_option("--mesh", calibrate.mesh_path, "Mesh file")->required();
    cal_cmd->add_option("--config", calibrate.config_path, "Simulation config")->required();
    cal_cmd->add_option("--settings", calibrate.settings_path,
                        "Optimizer settings / bound overrides (JSON)");
    cal_cmd->add_option("--tissue-params", calibrate.tissue_params,
                        "Stage-1 tissue parameters (interface stage)");
    cal_cmd->add_flag("--fit-alpha", calibrate.fit_alpha,
                      "Also fit the Ogden exponents (tissue stage)");
    add_common(cal_cmd, calibrate.common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (mesh_cmd->parsed()) {
            if (mesh_cmd->get_subcommand("gen")->parsed()) return run_mesh_gen(mesh_gen);
            return run_mesh_quality(mesh_quality);
        }
        if (sim_cmd->parsed()) return run_simulate(simulate);
        if (synth_cmd->parsed()) return run_synth(synth);
        if (cal_cmd->parsed()) return run_calibrate(calibrate);
    } catch (const mfe::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const mfe::MeshError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const mfe::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
