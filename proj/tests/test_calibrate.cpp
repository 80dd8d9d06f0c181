#include "mfe/calibrate.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

using namespace mfe;

namespace {

ForceDisplacementCurve line_curve(double d_end, std::size_t n, double slope) {
    ForceDisplacementCurve c;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = d_end * static_cast<double>(i) / static_cast<double>(n - 1);
        c.displacement.push_back(d);
        c.force.push_back(slope * d);
    }
    return c;
}

// 1-D analytic problem: forward emits a flat curve at height (x - 3)^2, the
// target is flat zero, so the L1 objective is proportional to (x - 3)^2.
CalibrationProblem quadratic_problem(double lower, double upper, double start) {
    CalibrationProblem p;
    p.free_parameters = {{"x", lower, upper, start}};
    p.target = line_curve(1.0, 11, 0.0);
    p.fit_window = {0.0, 1.0};
    p.forward = [](const std::map<std::string, double>& v) {
        ForceDisplacementCurve c;
        const double x = v.at("x");
        for (int i = 0; i <= 10; ++i) {
            c.displacement.push_back(0.1 * i);
            c.force.push_back((x - 3.0) * (x - 3.0));
        }
        return c;
    };
    return p;
}

MaterialSpec brain_spec() {
    MaterialSpec m;
    m.name = "brain";
    m.model = MaterialModel::Ogden2;
    m.ogden.mu = {800.0, 386.7};
    m.ogden.alpha = {-8.0, 16.0};
    m.ogden.D = {d1_from_poisson(m.ogden.mu0(), 0.49), 0.0};
    m.nu = 0.49;
    m.density = 1000.0;
    return m;
}

SimulationConfig tissue_config() {
    SimulationConfig cfg;
    cfg.materials["brain"] = brain_spec();
    cfg.total_pull = 1.6e-3;
    cfg.loading_rate = 3e-4;
    cfg.time_compression = 15.0;
    cfg.loading_direction = Vec3(1, 0, 0);
    cfg.driven_set = "top";
    cfg.fixed_set = "bottom";
    cfg.threads = 1;
    return cfg;
}

CohesiveLaw s1_law() {
    CohesiveLaw law;
    law.name = "interface";
    law.Enn = 61e3;
    law.Ess = 11e3;
    law.Ett = 11e3;
    law.tn0 = 3000.0;
    law.ts0 = 2100.0;
    law.tt0 = 2100.0;
    law.G = 0.48;
    law.T0 = 1e-3;
    return law;
}

SimulationConfig stack_config() {
    SimulationConfig cfg = tissue_config();
    MaterialSpec skull;
    skull.name = "skull";
    skull.model = MaterialModel::Rigid;
    skull.density = 1600.0;
    cfg.materials["skull"] = skull;
    cfg.laws["interface"] = s1_law();
    cfg.total_pull = 2.8e-3;
    cfg.time_compression = 100.0;
    cfg.driven_set = "skull";
    return cfg;
}

Mesh stack_mesh() {
    return generate_sample_mesh(Vec3(0.004, 0.004, 0.006), 2e-3,
                                {{"brain", 0.004, false}, {"skull", 0.002, true}}, 0.004,
                                "interface");
}

}  // namespace

TEST_CASE("problem validation") {
    CalibrationProblem p = quadratic_problem(0.0, 10.0, 0.0);
    REQUIRE_NOTHROW(p.validate());

    CalibrationProblem bad = p;
    bad.free_parameters.clear();
    REQUIRE_THROWS_AS(bad.validate(), CalibrationError);
    bad = p;
    bad.free_parameters[0].lower = 5.0;
    bad.free_parameters[0].upper = 5.0;
    REQUIRE_THROWS_AS(bad.validate(), CalibrationError);
    bad = p;
    bad.free_parameters[0].initial = 12.0;
    REQUIRE_THROWS_AS(bad.validate(), CalibrationError);
    bad = p;
    bad.fit_window = {0.5, 0.5};
    REQUIRE_THROWS_AS(bad.validate(), CalibrationError);
    bad = p;
    bad.fit_window = {0.0, 2.0};  // beyond the target range
    REQUIRE_THROWS_AS(bad.validate(), CalibrationError);
    bad = p;
    bad.target.displacement.resize(1);
    bad.target.force.resize(1);
    REQUIRE_THROWS_AS(bad.validate(), CalibrationError);
    bad = p;
    bad.forward = nullptr;
    REQUIRE_THROWS_AS(bad.validate(), CalibrationError);
}

TEST_CASE("objective evaluation") {
    SECTION("constant offset sums over the window") {
        CalibrationProblem p;
        p.free_parameters = {{"c", 0.0, 1.0, 0.1}};
        p.target = line_curve(1.0, 11, 2.0);
        p.fit_window = {0.0, 1.0};
        p.forward = [&](const std::map<std::string, double>& v) {
            ForceDisplacementCurve c = line_curve(1.0, 11, 2.0);
            for (auto& f : c.force) f += v.at("c");
            return c;
        };
        REQUIRE(mfe::objective({0.05}, p) == Catch::Approx(0.05 * 11).epsilon(1e-12));
        REQUIRE(mfe::objective({0.0}, p) == 0.0);  // self-consistency
    }

    SECTION("forward failure returns the penalty") {
        CalibrationProblem p = quadratic_problem(0.0, 10.0, 0.0);
        p.target = line_curve(1.0, 11, 3.0);  // peak force 3 inside the window
        p.forward = [](const std::map<std::string, double>&) -> ForceDisplacementCurve {
            throw SolverError("boom");
        };
        bool failed = false;
        REQUIRE(mfe::objective({1.0}, p, &failed) == Catch::Approx(3e6).epsilon(1e-12));
        REQUIRE(failed);
        REQUIRE(p.penalty_value() == Catch::Approx(3e6).epsilon(1e-12));
    }

    SECTION("curve not covering the window is penalised") {
        CalibrationProblem p = quadratic_problem(0.0, 10.0, 0.0);
        p.forward = [](const std::map<std::string, double>&) {
            return line_curve(0.4, 5, 1.0);  // stops at 0.4 < window end 1.0
        };
        bool failed = false;
        mfe::objective({1.0}, p, &failed);
        REQUIRE(failed);
    }

    SECTION("size mismatch throws") {
        CalibrationProblem p = quadratic_problem(0.0, 10.0, 0.0);
        REQUIRE_THROWS_AS(mfe::objective(std::vector<double>{1.0, 2.0}, p), CalibrationError);
    }
}

TEST_CASE("sqp on analytic objectives") {
    SECTION("interior minimum") {
        CalibrationProblem p = quadratic_problem(0.0, 10.0, 0.0);
        const CalibrationResult r = sqp_minimize(p);
        REQUIRE(r.converged);
        REQUIRE(r.parameters.at("x") == Catch::Approx(3.0).margin(1e-3));
    }
    SECTION("active bound") {
        CalibrationProblem p = quadratic_problem(0.0, 2.0, 0.5);
        const CalibrationResult r = sqp_minimize(p);
        REQUIRE(r.converged);
        REQUIRE(r.parameters.at("x") == Catch::Approx(2.0).margin(1e-6));
    }
    SECTION("iteration cap reports non-convergence") {
        CalibrationProblem p = quadratic_problem(0.0, 10.0, 0.0);
        p.settings.max_iterations = 1;
        p.settings.objective_rel_tol = 0.0;
        p.settings.gradient_tol = 0.0;
        const CalibrationResult r = optimize(p);
        REQUIRE_FALSE(r.converged);
        REQUIRE(r.iterations == 1);
    }
    SECTION("all-penalty objective aborts") {
        CalibrationProblem p = quadratic_problem(0.0, 10.0, 0.0);
        p.target = line_curve(1.0, 11, 3.0);
        p.forward = [](const std::map<std::string, double>&) -> ForceDisplacementCurve {
            throw SolverError("always fails");
        };
        REQUIRE_THROWS_AS(sqp_minimize(p), CalibrationError);
    }
}

TEST_CASE("nelder mead on analytic objectives") {
    CalibrationProblem p = quadratic_problem(0.0, 10.0, 0.0);
    p.settings.algorithm = OptimAlgorithm::NelderMead;
    p.settings.objective_rel_tol = 1e-12;
    p.settings.max_iterations = 200;
    const CalibrationResult r = optimize(p);
    REQUIRE(r.converged);
    REQUIRE(r.parameters.at("x") == Catch::Approx(3.0).margin(1e-3));

    CalibrationProblem pb = quadratic_problem(0.0, 2.0, 0.5);
    pb.settings = p.settings;
    const CalibrationResult rb = optimize(pb);
    REQUIRE(rb.parameters.at("x") == Catch::Approx(2.0).margin(1e-3));

    // the trace starts at the initial point and never loses ground
    REQUIRE(r.trace.front().iteration == 0);
    for (std::size_t i = 1; i < r.trace.size(); ++i)
        REQUIRE(r.trace[i].objective <= r.trace[i - 1].objective + 1e-15);
}

TEST_CASE("tissue problem construction") {
    const double L = 5e-3;
    const Mesh mesh = generate_sample_mesh(Vec3(L, L, L), L, {{"brain", L}});
    SimulationConfig cfg = tissue_config();
    const ForceDisplacementCurve target = line_curve(2e-3, 30, 10.0);

    CalibrationProblem p = make_tissue_problem(target, mesh, cfg, TissueFitMode::MuOnly);
    REQUIRE(p.free_parameters.size() == 2u);
    REQUIRE(p.free_parameters[0].name == "mu1");
    REQUIRE(p.free_parameters[1].name == "mu2");
    REQUIRE(p.fixed_parameters.at("alpha1") == -8.0);
    REQUIRE(p.fixed_parameters.at("alpha2") == 16.0);
    REQUIRE(p.fit_window.second == Catch::Approx(0.3 * L).epsilon(1e-12));

    CalibrationProblem pa = make_tissue_problem(target, mesh, cfg, TissueFitMode::MuAndAlpha);
    REQUIRE(pa.free_parameters.size() == 4u);

    SimulationConfig two = cfg;
    two.materials["brain2"] = brain_spec();
    two.materials["brain2"].name = "brain2";
    REQUIRE_THROWS_AS(make_tissue_problem(target, mesh, two, TissueFitMode::MuOnly),
                      CalibrationError);
    SimulationConfig none = cfg;
    none.materials["brain"].model = MaterialModel::Rigid;
    REQUIRE_THROWS_AS(make_tissue_problem(target, mesh, none, TissueFitMode::MuOnly),
                      CalibrationError);
}

TEST_CASE("interface problem construction") {
    const Mesh mesh = stack_mesh();
    SimulationConfig cfg = stack_config();
    ForceDisplacementCurve target;
    for (int i = 0; i <= 100; ++i) {
        const double d = 2.8e-3 * i / 100.0;
        target.displacement.push_back(d);
        target.force.push_back(d < 1e-3 ? d : 2e-3 - d);  // peak at 1 mm
    }
    CalibrationProblem p =
        make_interface_problem(target, mesh, cfg, cfg.materials.at("brain").ogden);
    REQUIRE(p.free_parameters.size() == 3u);
    REQUIRE(p.free_parameters[0].name == "tn0");
    REQUIRE(p.free_parameters[1].name == "ts0");
    REQUIRE(p.free_parameters[2].name == "G");
    REQUIRE(p.fit_window.second == Catch::Approx(1.25e-3).epsilon(1e-9));

    const Mesh plain = generate_sample_mesh(Vec3(4e-3, 4e-3, 4e-3), 2e-3, {{"brain", 4e-3}});
    REQUIRE_THROWS_AS(
        make_interface_problem(target, plain, cfg, cfg.materials.at("brain").ogden),
        CalibrationError);

    SimulationConfig no_law = cfg;
    no_law.laws.clear();
    REQUIRE_THROWS_AS(
        make_interface_problem(target, mesh, no_law, cfg.materials.at("brain").ogden),
        CalibrationError);
}

TEST_CASE("synthetic targets are seeded and bounded") {
    const double L = 5e-3;
    const Mesh mesh = generate_sample_mesh(Vec3(L, L, L), L, {{"brain", L}});
    SimulationConfig cfg = tissue_config();
    cfg.total_pull = 1e-3;

    const ForceDisplacementCurve clean = synthesize_target(mesh, cfg);
    const ForceDisplacementCurve again = synthesize_target(mesh, cfg);
    REQUIRE(clean.displacement == again.displacement);
    REQUIRE(clean.force == again.force);

    const ForceDisplacementCurve n1 = synthesize_target(mesh, cfg, 0.02, 7);
    const ForceDisplacementCurve n2 = synthesize_target(mesh, cfg, 0.02, 7);
    const ForceDisplacementCurve n3 = synthesize_target(mesh, cfg, 0.02, 8);
    REQUIRE(n1.force == n2.force);
    REQUIRE(n1.force != n3.force);
    REQUIRE(n1.displacement == clean.displacement);
    for (std::size_t i = 0; i < clean.size(); ++i)
        REQUIRE(std::abs(n1.force[i] - clean.force[i]) <= 0.02 * std::abs(clean.force[i]) + 1e-18);

    // 100 Hz sampling of the physical experiment: displacement step = rate/100
    REQUIRE(clean.displacement[1] - clean.displacement[0] ==
            Catch::Approx(cfg.loading_rate / 100.0).epsilon(1e-9));

    REQUIRE_THROWS_AS(synthesize_target(mesh, cfg, -0.1), ConfigError);
    REQUIRE_THROWS_AS(synthesize_target(mesh, cfg, 1.0), ConfigError);
}

TEST_CASE("tissue round trip on a single element") {
    const double L = 5e-3;
    const Mesh mesh = generate_sample_mesh(Vec3(L, L, L), L, {{"brain", L}});
    const SimulationConfig cfg = tissue_config();
    const ForceDisplacementCurve target = synthesize_target(mesh, cfg);

    SimulationConfig start = cfg;
    start.materials["brain"].ogden.mu = {400.0, 200.0};
    start.materials["brain"].ogden.D = {
        d1_from_poisson(start.materials["brain"].ogden.mu0(), 0.49), 0.0};
    const TissueCalibration cal = calibrate_tissue(target, mesh, start);
    const double mu0 = cal.params.mu0();
    REQUIRE(std::abs(mu0 - 1186.7) / 1186.7 < 0.05);
    REQUIRE(cal.result.peak_force_error_pct < 5.0);
    REQUIRE(cal.fitted.size() > 0u);

    std::vector<ParamSpec> bogus = {{"mu9", 1.0, 2.0, 1.5}};
    REQUIRE_THROWS_AS(calibrate_tissue(target, mesh, start, TissueFitMode::MuOnly,
                                       tissue_stage_settings(), &bogus),
                      CalibrationError);
}

TEST_CASE("zero-force target drives mu to the lower bounds") {
    const double L = 5e-3;
    const Mesh mesh = generate_sample_mesh(Vec3(L, L, L), L, {{"brain", L}});
    const SimulationConfig cfg = tissue_config();
    ForceDisplacementCurve target = line_curve(1.6e-3, 33, 0.0);

    OptimizerSettings st = tissue_stage_settings();
    st.max_iterations = 60;
    const TissueCalibration cal = calibrate_tissue(target, mesh, cfg, TissueFitMode::MuOnly, st);
    REQUIRE(cal.result.converged);
    REQUIRE(cal.result.parameters.at("mu1") == Catch::Approx(50.0).margin(1.0));
    REQUIRE(cal.result.parameters.at("mu2") == Catch::Approx(50.0).margin(1.0));
}

TEST_CASE("staged interface search recovers an analytic law") {
    // The forward mimics an interface test: peak force mixes the two
    // strengths, peak position tracks G, tail width tracks the strength
    // ratio. Identifiable in all three parameters, instant to evaluate.
    const Mesh mesh = stack_mesh();
    const CohesiveLaw law = s1_law();
    const double area = 0.004 * 0.004;

    auto model = [area](const std::map<std::string, double>& v) {
        const double p = area * (0.7 * v.at("ts0") + 0.1 * v.at("tn0"));
        const double dp = 1e-3 * v.at("G") / 0.5;
        const double w = 0.5 + 0.3 * v.at("tn0") / (v.at("tn0") + 2.0 * v.at("ts0"));
        ForceDisplacementCurve c;
        for (int i = 0; i <= 400; ++i) {
            const double d = 4e-3 * i / 400.0;
            double f;
            if (d <= dp)
                f = p * d / dp;
            else
                f = std::max(0.0, p * (1.0 - (d - dp) / (w * dp)));
            c.displacement.push_back(d);
            c.force.push_back(f);
        }
        return c;
    };

    CalibrationProblem p;
    p.free_parameters = {
        {"tn0", 500.0, 20000.0, 1500.0},
        {"ts0", 500.0, 20000.0, 1200.0},
        {"G", 0.05, 5.0, 0.25},
    };
    p.forward = model;
    p.target = p.forward({{"tn0", 3000.0}, {"ts0", 2100.0}, {"G", 0.48}});
    p.fit_window = {0.0, 1.25 * 1e-3 * 0.48 / 0.5};
    p.settings = interface_stage_settings();

    const CalibrationResult r = calibdetail::staged_interface_search(p, mesh, law);
    REQUIRE(std::abs(r.parameters.at("tn0") - 3000.0) / 3000.0 < 0.10);
    REQUIRE(std::abs(r.parameters.at("ts0") - 2100.0) / 2100.0 < 0.10);
    REQUIRE(std::abs(r.parameters.at("G") - 0.48) / 0.48 < 0.10);
    REQUIRE(r.trace.size() >= 2u);
    REQUIRE(r.trace.front().iteration == 0);

    // determinism: the search has no random state
    const CalibrationResult r2 = calibdetail::staged_interface_search(p, mesh, law);
    REQUIRE(r2.parameters.at("tn0") == r.parameters.at("tn0"));
    REQUIRE(r2.parameters.at("ts0") == r.parameters.at("ts0"));
    REQUIRE(r2.parameters.at("G") == r.parameters.at("G"));
    REQUIRE(r2.objective_value == r.objective_value);
}
