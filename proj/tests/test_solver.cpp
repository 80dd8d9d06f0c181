#include "mfe/solver.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "support/oracles.hpp"

using namespace mfe;

namespace {

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

SimulationConfig tissue_config() {
    SimulationConfig cfg;
    cfg.materials["brain"] = brain_spec();
    cfg.total_pull = 1.5e-3;
    cfg.loading_rate = 3e-4;
    cfg.time_compression = 15.0;
    cfg.loading_direction = Vec3(1, 0, 0);
    cfg.driven_set = "top";
    cfg.fixed_set = "bottom";
    cfg.threads = 1;
    return cfg;
}

SimulationConfig stack_config() {
    SimulationConfig cfg;
    cfg.materials["brain"] = brain_spec();
    MaterialSpec skull;
    skull.name = "skull";
    skull.model = MaterialModel::Rigid;
    skull.density = 1600.0;
    cfg.materials["skull"] = skull;
    cfg.laws["interface"] = s1_law();
    cfg.total_pull = 2.8e-3;
    cfg.loading_rate = 3e-4;
    cfg.time_compression = 100.0;
    cfg.loading_direction = Vec3(1, 0, 0);
    cfg.driven_set = "skull";
    cfg.fixed_set = "bottom";
    cfg.threads = 1;
    return cfg;
}

Mesh stack_mesh() {
    return generate_sample_mesh(Vec3(0.004, 0.004, 0.006), 2e-3,
                                {{"brain", 0.004, false}, {"skull", 0.002, true}}, 0.004,
                                "interface");
}

// single free-floating hex, no constraint sets
Mesh free_hex_mesh(double L) {
    Mesh m;
    const std::array<Vec3, 8> x = {Vec3(0, 0, 0), Vec3(L, 0, 0), Vec3(L, L, 0), Vec3(0, L, 0),
                                   Vec3(0, 0, L), Vec3(L, 0, L), Vec3(L, L, L), Vec3(0, L, L)};
    for (int i = 0; i < 8; ++i) m.nodes.push_back({i, x[static_cast<std::size_t>(i)]});
    HexElement h;
    h.conn = {0, 1, 2, 3, 4, 5, 6, 7};
    h.material = "brain";
    m.hexes.push_back(h);
    return m;
}

}  // namespace

TEST_CASE("simulation config validation") {
    SimulationConfig cfg = tissue_config();
    REQUIRE_NOTHROW(cfg.validate());

    SimulationConfig bad = cfg;
    bad.total_pull = -1.0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.loading_rate = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.time_compression = 0.5;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.loading_direction = Vec3::Zero();
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.dt_safety = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.dt_safety = 1.5;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.mass_damping = -1.0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.materials["oops"] = brain_spec();  // key does not match record name
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("derived sample height skips rigid layers") {
    const Mesh mesh = stack_mesh();
    SimulationConfig cfg = stack_config();
    REQUIRE(derive_sample_height(mesh, cfg) == Catch::Approx(0.004).epsilon(1e-14));
    cfg.sample_height = 0.0123;
    REQUIRE(derive_sample_height(mesh, cfg) == 0.0123);

    // a mesh where everything is rigid cannot define a shear strain
    SimulationConfig all_rigid = stack_config();
    all_rigid.materials["brain"].model = MaterialModel::Rigid;
    REQUIRE_THROWS_AS(derive_sample_height(mesh, all_rigid), ConfigError);
}

TEST_CASE("lumped mass") {
    const double L = 5e-3;
    const Mesh mesh = generate_sample_mesh(Vec3(L, L, L), L, {{"brain", L}});
    const auto mass = lump_mass(mesh, {{"brain", 1234.0}});
    REQUIRE(mass.size() == 8u);
    for (double m : mass) REQUIRE(m == Catch::Approx(1234.0 * L * L * L / 8.0).epsilon(1e-14));

    const Mesh stack = stack_mesh();
    const auto ms = lump_mass(stack, {{"brain", 1000.0}, {"skull", 1600.0}});
    double total = 0.0;
    for (double m : ms) total += m;
    const double expected = 1000.0 * 0.004 * 0.004 * 0.004 + 1600.0 * 0.004 * 0.004 * 0.002;
    REQUIRE(total == Catch::Approx(expected).epsilon(1e-12));

    REQUIRE_THROWS_AS(lump_mass(stack, {{"brain", 1000.0}}), ConfigError);
}

TEST_CASE("smooth ramp") {
    REQUIRE(smooth_step(0.0, 0.0, 2.0) == 0.0);
    REQUIRE(smooth_step(2.0, 0.0, 2.0) == 1.0);
    REQUIRE(smooth_step(1.0, 0.0, 2.0) == Catch::Approx(0.5).epsilon(1e-14));
    REQUIRE(smooth_step(-1.0, 0.0, 2.0) == 0.0);
    REQUIRE(smooth_step(3.0, 0.0, 2.0) == 1.0);

    double last = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double v = smooth_step(2.0 * i / 100.0, 0.0, 2.0);
        REQUIRE(v >= last);
        last = v;
    }

    // rate is the derivative, and the ramp starts and ends at rest
    for (double t : {0.3, 0.9, 1.7}) {
        const double h = 1e-6;
        const double fd = (smooth_step(t + h, 0.0, 2.0) - smooth_step(t - h, 0.0, 2.0)) / (2 * h);
        REQUIRE(smooth_step_rate(t, 0.0, 2.0) == Catch::Approx(fd).margin(1e-8));
    }
    REQUIRE(smooth_step_rate(0.0, 0.0, 2.0) == 0.0);
    REQUIRE(smooth_step_rate(2.0, 0.0, 2.0) == 0.0);
}

TEST_CASE("energy report") {
    std::vector<LedgerSample> hist(3);
    hist[0].external_work = 0.0;
    hist[1].external_work = 1.0;
    hist[1].internal = 0.98;
    hist[1].kinetic = 0.02;
    hist[2].external_work = 2.0;
    hist[2].internal = 1.99;
    hist[2].kinetic = 0.005;
    const EnergyReport r = energy_report(hist);
    REQUIRE(r.max_imbalance <= 0.005);
    REQUIRE(r.flagged_rows == 1u);  // row 1 holds 2% kinetic against 0.98 stored
    REQUIRE_FALSE(r.quasi_static);
    REQUIRE(r.max_kinetic_ratio == Catch::Approx(0.02 / 0.98).epsilon(1e-12));

    REQUIRE_THROWS_AS(energy_report({}), ConfigError);
}

TEST_CASE("reference time step") {
    const double L = 5e-3;
    const Mesh mesh = generate_sample_mesh(Vec3(L, L, L), L, {{"brain", L}});
    SimulationConfig cfg = tissue_config();
    const auto m = brain_spec();
    const double c = wave_speed(m.ogden.mu0(), m.ogden.K0(), m.density);
    const double expected = cfg.dt_safety * L / (1.35 * c);
    REQUIRE(stable_dt(mesh, cfg) == Catch::Approx(expected).epsilon(1e-12));

    // cohesive stiffness can only shrink the step
    const Mesh stack = stack_mesh();
    SimulationConfig scfg = stack_config();
    const double dt_hex_only = 2e-3 / (1.35 * c);
    REQUIRE(stable_dt(stack, scfg) < scfg.dt_safety * dt_hex_only);
    REQUIRE(stable_dt(stack, scfg) > 0.0);
}

TEST_CASE("patch test: affine fields produce zero interior residual") {
    const Mesh mesh = generate_sample_mesh(Vec3(0.015, 0.015, 0.015), 5e-3, {{"brain", 0.015}});
    SimulationConfig cfg = tissue_config();
    cfg.total_pull = 0.0;
    ExplicitSolver solver(mesh, cfg);

    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> a(-0.15, 0.15);
    Mat3 A;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) A(i, j) = a(rng);

    std::vector<Vec3> u(mesh.nodes.size());
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) u[i] = A * mesh.nodes[i].position;
    const auto& f = solver.eval_at(u);

    double f_max = 0.0;
    for (const auto& fi : f) f_max = std::max(f_max, fi.norm());
    REQUIRE(f_max > 0.0);
    std::size_t interior = 0;
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        const Vec3& p = mesh.nodes[i].position;
        const bool inside = p[0] > 1e-9 && p[0] < 0.015 - 1e-9 && p[1] > 1e-9 &&
                            p[1] < 0.015 - 1e-9 && p[2] > 1e-9 && p[2] < 0.015 - 1e-9;
        if (!inside) continue;
        ++interior;
        REQUIRE(f[i].norm() <= 1e-10 * f_max);
    }
    REQUIRE(interior == 8u);  // 3x3x3 elements leave a 2x2x2 interior grid

    REQUIRE_THROWS_AS(solver.eval_at(std::vector<Vec3>(3)), ConfigError);
}

TEST_CASE("free flight conserves momentum") {
    Mesh mesh = free_hex_mesh(5e-3);
    SimulationConfig cfg;
    cfg.materials["brain"] = brain_spec();
    cfg.total_pull = 0.0;
    cfg.driven_set.clear();
    cfg.fixed_set.clear();
    ExplicitSolver solver(mesh, cfg);
    const Vec3 v0(0.3, -0.1, 0.2);
    solver.set_velocity(v0);
    const Vec3 p0 = solver.momentum();

    const double dt = 0.5 * solver.reference_dt();
    for (int k = 0; k < 200; ++k) solver.step(dt);
    REQUIRE((solver.momentum() - p0).norm() <= 1e-12 * p0.norm());

    // uniform translation never strains the element
    REQUIRE(solver.internal_energy() <= 1e-18);
    const auto& u = solver.displacements();
    for (const auto& ui : u) REQUIRE((ui - u[0]).norm() <= 1e-15);

    REQUIRE_THROWS_AS(solver.step(0.0), SolverError);
}

TEST_CASE("single element shear tracks the static oracle") {
    const double L = 5e-3;
    const Mesh mesh = generate_sample_mesh(Vec3(L, L, L), L, {{"brain", L}});
    const SimulationConfig cfg = tissue_config();
    const RunResult rr = run(mesh, cfg);

    REQUIRE(rr.steps > 100u);
    REQUIRE(rr.final_time == Catch::Approx(cfg.total_pull /
                                           (cfg.loading_rate * cfg.time_compression))
                                 .epsilon(1e-9));

    const OgdenParams mat = brain_spec().ogden;
    double peak = 0.0;
    for (std::size_t i = 0; i < rr.curve.size(); ++i)
        peak = std::max(peak, std::abs(oracle::static_cube_shear_reaction(
                                  L, rr.curve.displacement[i] / L, mat)));
    for (std::size_t i = 0; i < rr.curve.size(); ++i) {
        const double ref =
            oracle::static_cube_shear_reaction(L, rr.curve.displacement[i] / L, mat);
        const double tol = 0.02 * std::max(std::abs(ref), 0.02 * peak);
        REQUIRE(std::abs(rr.curve.force[i] - ref) <= tol);
    }

    const EnergyReport er = energy_report(rr.history);
    REQUIRE(er.max_imbalance < 0.02);
    REQUIRE(er.max_kinetic_ratio < 0.05);
    REQUIRE(er.quasi_static);
}

TEST_CASE("stack run fails the interface and settles") {
    const Mesh mesh = stack_mesh();
    const SimulationConfig cfg = stack_config();
    const RunResult rr = run(mesh, cfg);

    REQUIRE(rr.interface_initiated);
    REQUIRE(rr.interface_fully_failed);
    REQUIRE(rr.first_initiation_displacement < rr.failure_complete_displacement);
    REQUIRE(rr.dt_min_used <= rr.dt_reference);

    const double peak = rr.curve.peak_force();
    REQUIRE(peak > 0.0);
    double tail = 0.0;
    for (std::size_t i = 0; i < rr.curve.size(); ++i)
        if (rr.curve.displacement[i] >= rr.failure_complete_displacement)
            tail = std::max(tail, std::abs(rr.curve.force[i]));
    REQUIRE(tail <= 0.05 * peak);

    // every joule spent on the interface is accounted for: complete failure
    // of the whole plane dissipates G per unit area
    const double A = 0.004 * 0.004;
    const double dissipated = rr.history.back().cohesive_dissipated;
    REQUIRE(dissipated == Catch::Approx(cfg.laws.at("interface").G * A).epsilon(0.10));

    const EnergyReport er = energy_report(rr.history);
    REQUIRE(er.max_imbalance < 0.05);
}

TEST_CASE("curves are bit-identical across thread counts") {
    const Mesh mesh = stack_mesh();
    SimulationConfig cfg = stack_config();
    std::string first;
    for (int threads : {1, 2, 8}) {
        cfg.threads = threads;
        const RunResult rr = run(mesh, cfg);
        const std::string csv = curve_to_csv(rr.curve);
        if (first.empty())
            first = csv;
        else
            REQUIRE(csv == first);
    }
}

TEST_CASE("mass damping feeds the ledger") {
    const Mesh mesh = stack_mesh();
    SimulationConfig cfg = stack_config();
    cfg.total_pull = 1e-3;  // stay below initiation, just exercise the ledger
    cfg.mass_damping = 5.0;
    const RunResult rr = run(mesh, cfg);
    REQUIRE(rr.history.back().damping_work > 0.0);
    const EnergyReport er = energy_report(rr.history);
    REQUIRE(er.max_imbalance < 0.02);
}

TEST_CASE("violent loading aborts instead of lying") {
    const Mesh mesh = stack_mesh();
    SimulationConfig cfg = stack_config();
    cfg.time_compression = 2e5;  // platen at 60 m/s: nowhere near quasi-static
    REQUIRE_THROWS_AS(run(mesh, cfg), SolverError);
}

TEST_CASE("output interval controls the ledger cadence") {
    const double L = 5e-3;
    const Mesh mesh = generate_sample_mesh(Vec3(L, L, L), L, {{"brain", L}});
    SimulationConfig cfg = tissue_config();
    cfg.output_interval = 0.05;
    const RunResult rr = run(mesh, cfg);
    const double t_end = cfg.total_pull / (cfg.loading_rate * cfg.time_compression);
    REQUIRE(rr.history.size() >= static_cast<std::size_t>(t_end / 0.05));
    for (std::size_t i = 2; i < rr.history.size(); ++i) {
        const double gap = rr.history[i].time - rr.history[i - 1].time;
        REQUIRE(gap >= 0.04);
    }
}
