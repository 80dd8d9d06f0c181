#pragma once

// Explicit central-difference dynamics with prescribed-displacement loading.
//
// Time marching: v(n+1/2) = v(n-1/2) + dt a(n), u(n+1) = u(n) + dt v(n+1/2).
// Driven nodes follow smooth_step(t) * total_pull * direction exactly; fixed
// nodes stay pinned. The step size adapts each step to a tangent-stiffness
// wave-speed bound so the severe Ogden stiffening at large stretch cannot
// outrun a step chosen at the reference state.
//
// Energy bookkeeping is the honest kind: external work is the trapezoid of
// the constraint forces (internal force plus the inertial term of the driven
// masses) over the prescribed motion, and the balance check compares it with
// kinetic + stored + irreversibly dissipated energy. Runs that stray more
// than 5 percent are aborted as non-quasi-static.

#include "mfe/cohesive_element.hpp"
#include "mfe/core.hpp"
#include "mfe/curve.hpp"
#include "mfe/hex_element.hpp"
#include "mfe/material.hpp"
#include "mfe/mesh.hpp"
#include "mfe/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mfe {

struct SimulationConfig {
    std::map<std::string, MaterialSpec> materials;
    std::map<std::string, CohesiveLaw> laws;

    double total_pull = 0.0;        // m
    double loading_rate = 3.0e-4;   // m/s, physical platen speed
    double time_compression = 100.0;
    Vec3 loading_direction{1.0, 0.0, 0.0};
    std::string driven_set = "top";
    std::string fixed_set = "bottom";
    double hourglass_coefficient = 0.05;
    double dt_safety = 0.9;
    double output_interval = 0.0;   // s, 0 picks ~512 ledger rows per run
    double mass_damping = 0.0;      // 1/s, off by default
    double sample_height = 0.0;     // m, 0 derives it from the deformable layers
    int threads = 1;                // 0 = hardware concurrency

    void validate() const {
        if (total_pull < 0.0)
            throw ConfigError("config: total_pull must be non-negative");
        if (!(loading_rate > 0.0))
            throw ConfigError("config: loading_rate must be positive");
        if (!(time_compression >= 1.0))
            throw ConfigError("config: time_compression must be >= 1");
        if (!(loading_direction.norm() > 1e-12))
            throw ConfigError("config: loading_direction must be nonzero");
        if (hourglass_coefficient < 0.0)
            throw ConfigError("config: hourglass_coefficient must be non-negative");
        if (!(dt_safety > 0.0 && dt_safety <= 1.0))
            throw ConfigError("config: dt_safety must lie in (0, 1]");
        if (output_interval < 0.0)
            throw ConfigError("config: output_interval must be non-negative");
        if (mass_damping < 0.0)
            throw ConfigError("config: mass_damping must be non-negative");
        if (sample_height < 0.0)
            throw ConfigError("config: sample_height must be non-negative");
        if (threads < 0)
            throw ConfigError("config: threads must be non-negative");
        for (const auto& [name, m] : materials) {
            if (m.name != name)
                throw ConfigError("config: material map key '" + name +
                                  "' disagrees with record name '" + m.name + "'");
            m.validate();
        }
        for (const auto& [name, l] : laws) {
            if (l.name != name)
                throw ConfigError("config: law map key '" + name +
                                  "' disagrees with record name '" + l.name + "'");
            l.validate();
        }
    }
};

// Height of the deformable stack along z, used to express displacements as
// shear strains. Rigid layers (the skull) do not count.
inline double derive_sample_height(const Mesh& mesh, const SimulationConfig& config) {
    if (config.sample_height > 0.0) return config.sample_height;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& h : mesh.hexes) {
        auto it = config.materials.find(h.material);
        if (it != config.materials.end() && it->second.model == MaterialModel::Rigid)
            continue;
        for (auto id : h.conn) {
            const double z = mesh.nodes[static_cast<std::size_t>(id)].position[2];
            lo = std::min(lo, z);
            hi = std::max(hi, z);
        }
    }
    if (!(hi > lo))
        throw ConfigError("config: cannot derive sample height (no deformable elements)");
    return hi - lo;
}

inline std::vector<double> lump_mass(const Mesh& mesh,
                                     const std::map<std::string, double>& densities) {
    std::vector<double> mass(mesh.nodes.size(), 0.0);
    for (std::size_t e = 0; e < mesh.hexes.size(); ++e) {
        const auto& h = mesh.hexes[e];
        auto it = densities.find(h.material);
        if (it == densities.end())
            throw ConfigError("lump_mass: no density for material '" + h.material + "'");
        const double V = hex_volume(gather_positions(mesh, h.conn));
        if (!(V > 0.0))
            throw MeshError("lump_mass: hex " + std::to_string(e) +
                            " has non-positive volume " + std::to_string(V));
        const double share = it->second * V / 8.0;
        for (auto id : h.conn)
            mass[static_cast<std::size_t>(id)] += share;
    }
    return mass;
}

struct LedgerSample {
    double time = 0.0;
    double displacement = 0.0;
    double force = 0.0;
    double kinetic = 0.0;
    double internal = 0.0;
    double hourglass = 0.0;
    double cohesive_stored = 0.0;
    double cohesive_dissipated = 0.0;
    double external_work = 0.0;
    double damping_work = 0.0;
    double imbalance = 0.0; // relative
    double damage_mean = 0.0;
    double damage_max = 0.0;
    double failed_fraction = 0.0;
};

struct RunResult {
    ForceDisplacementCurve curve;
    std::vector<LedgerSample> history;
    std::size_t steps = 0;
    double final_time = 0.0;
    double dt_reference = 0.0;
    double dt_min_used = 0.0;
    bool interface_initiated = false;
    double first_initiation_time = 0.0;
    double first_initiation_displacement = 0.0;
    bool interface_fully_failed = false;
    double failure_complete_time = 0.0;
    double failure_complete_displacement = 0.0;
};

struct EnergyReport {
    double max_imbalance = 0.0;     // residual / run energy scale
    double max_kinetic_ratio = 0.0; // kinetic / stored elastic energy
    std::size_t flagged_rows = 0;   // rows with kinetic > 5% of stored
    bool quasi_static = true;
};

// The imbalance residual is normalized by the run's peak energy scale, not
// the instantaneous one: near t = 0 every term vanishes and a pointwise
// ratio is 0/0 noise. For the same reason the kinetic ratio uses a floor of
// 1e-3 of the peak stored energy.
inline EnergyReport energy_report(const std::vector<LedgerSample>& history) {
    if (history.empty())
        throw ConfigError("energy_report: empty history");
    EnergyReport r;
    double scale = 0.0, u_max = 0.0, residual_max = 0.0;
    for (const auto& s : history) {
        const double stored = s.internal + s.hourglass + s.cohesive_stored;
        u_max = std::max(u_max, stored);
        scale = std::max({scale, std::abs(s.external_work), s.kinetic, stored});
    }
    const double floor = 1e-3 * u_max;
    for (const auto& s : history) {
        const double stored = s.internal + s.hourglass + s.cohesive_stored;
        const double rhs =
            s.kinetic + stored + s.cohesive_dissipated + s.damping_work;
        residual_max = std::max(residual_max, std::abs(s.external_work - rhs));
        const double denom = std::max(stored, floor);
        if (denom > 0.0) {
            const double ratio = s.kinetic / denom;
            r.max_kinetic_ratio = std::max(r.max_kinetic_ratio, ratio);
            if (s.kinetic > 0.05 * denom) ++r.flagged_rows;
        }
    }
    r.max_imbalance = residual_max / std::max(scale, 1e-15);
    r.quasi_static = r.flagged_rows == 0;
    return r;
}

inline std::string energy_csv(const std::vector<LedgerSample>& history) {
    std::string out =
        "time_s,displacement_m,force_N,kinetic_J,internal_J,hourglass_J,"
        "cohesive_stored_J,cohesive_dissipated_J,external_work_J,damping_work_J,"
        "imbalance_rel,damage_mean,damage_max,failed_fraction\n";
    char buf[420];
    for (const auto& s : history) {
        std::snprintf(buf, sizeof(buf),
                      "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,"
                      "%.12g,%.12g,%.12g,%.12g\n",
                      s.time, s.displacement, s.force, s.kinetic, s.internal, s.hourglass,
                      s.cohesive_stored, s.cohesive_dissipated, s.external_work,
                      s.damping_work, s.imbalance, s.damage_mean, s.damage_max,
                      s.failed_fraction);
        out += buf;
    }
    return out;
}

class ExplicitSolver {
public:
    ExplicitSolver(const Mesh& mesh, const SimulationConfig& config)
        : mesh_(mesh), config_(config) {
        validate(mesh_);
        config_.validate();
        dir_ = config_.loading_direction.normalized();
        n_ = mesh_.nodes.size();
        X_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) X_[i] = mesh_.nodes[i].position;
        u_.assign(n_, Vec3::Zero());
        v_.assign(n_, Vec3::Zero());
        f_.assign(n_, Vec3::Zero());

        bind_materials();
        bind_constraints();
        build_operators();
        build_mass();
        compute_reference_dt();

        t_end_ = config_.total_pull > 0.0
                     ? config_.total_pull / (config_.loading_rate * config_.time_compression)
                     : 0.0;
        eval_forces();
        dt_next_ = next_dt();
        dt_min_used_ = dt_next_;
    }

    double reference_dt() const { return dt_ref_; }
    double end_time() const { return t_end_; }
    double time() const { return t_; }
    double reaction() const { return reaction_; }
    double internal_energy() const { return internal_; }
    double hourglass_energy() const { return hourglass_; }
    double external_work() const { return external_work_; }
    double kinetic() const { return kinetic_energy(); }
    double cohesive_stored() const { return coh_stored_; }
    double cohesive_dissipated_true() const { return coh_dissipated_true_; }
    double cohesive_dissipated_effective() const { return coh_dissipated_eff_; }
    std::size_t initiated_ips() const { return initiated_ips_; }
    std::size_t failed_ips() const { return failed_ips_; }
    const std::vector<std::array<CohesiveState, 4>>& cohesive_states() const {
        return coh_states_;
    }
    std::size_t hex_count() const { return hex_ops_.size(); }
    std::size_t cohesive_ip_count() const { return 4 * coh_ops_.size(); }
    const std::vector<double>& mass() const { return mass_; }
    const std::vector<Vec3>& velocities() const { return v_; }
    const std::vector<Vec3>& displacements() const { return u_; }
    const std::vector<Vec3>& internal_forces() const { return f_; }

    // Testing hooks: evaluate forces at an arbitrary displacement field (note
    // that cohesive states advance), or start a free-floating body moving.
    const std::vector<Vec3>& eval_at(const std::vector<Vec3>& u_field) {
        if (u_field.size() != n_)
            throw ConfigError("eval_at: displacement field size mismatch");
        u_ = u_field;
        eval_forces();
        return f_;
    }
    void set_velocity(const Vec3& v0) {
        for (auto& v : v_) v = v0;
    }

    Vec3 momentum() const {
        Vec3 p = Vec3::Zero();
        for (std::size_t i = 0; i < n_; ++i) p += mass_[i] * v_[i];
        return p;
    }

    // One central-difference step of size dt from the current state.
    void step(double dt) {
        if (!(dt > 0.0))
            throw SolverError("step: dt must be positive");
        const double c = config_.mass_damping;
        std::vector<Vec3> f_old_driven(driven_.size());
        std::vector<Vec3> u_old_driven(driven_.size());
        for (std::size_t k = 0; k < driven_.size(); ++k) {
            f_old_driven[k] = f_[driven_[k]];
            u_old_driven[k] = u_[driven_[k]];
        }

        for (std::size_t i : free_) {
            const Vec3 a = -f_[i] / mass_[i] - c * v_[i];
            v_[i] += dt * a;
            u_[i] += dt * v_[i];
            if (c > 0.0) damping_work_ += c * mass_[i] * v_[i].squaredNorm() * dt;
        }
        const double t_new = t_ + dt;
        if (t_end_ > 0.0) {
            const double xi = smooth_step(t_new, 0.0, t_end_);
            const Vec3 target = xi * config_.total_pull * dir_;
            for (std::size_t i : driven_) {
                v_[i] = (target - u_[i]) / dt;
                u_[i] = target;
            }
        }
        t_ = t_new;
        prev_dt_ = dt;

        eval_forces();

        for (std::size_t k = 0; k < driven_.size(); ++k) {
            const std::size_t i = driven_[k];
            external_work_ += 0.5 * (f_old_driven[k] + f_[i]).dot(u_[i] - u_old_driven[k]);
        }
        external_work_ += kinetic_driven(t_) - kinetic_driven(t_ - dt);

        dt_next_ = next_dt();
        dt_min_used_ = std::min(dt_min_used_, dt_next_);
        ++steps_;
    }

    double displacement() const {
        return t_end_ > 0.0 ? smooth_step(t_, 0.0, t_end_) * config_.total_pull : 0.0;
    }

    LedgerSample sample() const {
        LedgerSample s;
        s.time = t_;
        s.displacement = displacement();
        s.force = reaction_;
        s.kinetic = kinetic_energy();
        s.internal = internal_;
        s.hourglass = hourglass_;
        s.cohesive_stored = coh_stored_;
        s.cohesive_dissipated = coh_dissipated_true_;
        s.external_work = external_work_;
        s.damping_work = damping_work_;
        const double rhs = s.kinetic + s.internal + s.hourglass + s.cohesive_stored +
                           s.cohesive_dissipated + s.damping_work;
        s.imbalance = std::abs(s.external_work - rhs) /
                      std::max({std::abs(s.external_work), s.kinetic, 1e-15});
        if (!coh_ops_.empty()) {
            s.damage_mean = damage_sum_ / static_cast<double>(4 * coh_ops_.size());
            s.damage_max = damage_max_;
            s.failed_fraction = static_cast<double>(failed_ips_) /
                                static_cast<double>(4 * coh_ops_.size());
        }
        return s;
    }

    RunResult run() {
        RunResult out;
        out.dt_reference = dt_ref_;
        out.curve.direction = dir_;
        out.curve.nominal_rate = config_.loading_rate;
        out.curve.append(0.0, reaction_);
        out.history.push_back(sample());
        if (t_end_ <= 0.0) {
            out.dt_min_used = dt_ref_;
            return out;
        }

        const double dt_out = config_.output_interval > 0.0 ? config_.output_interval
                                                            : t_end_ / 512.0;
        double next_out = dt_out;
        double run_scale = 0.0; // peak energy magnitude seen so far
        const double t_stop = t_end_ * (1.0 - 1e-14);
        while (t_ < t_stop) {
            const double dt = std::min(dt_next_, t_end_ - t_);
            step(dt);
            out.curve.append(displacement(), reaction_);
            if (!std::isfinite(reaction_ + internal_ + hourglass_))
                throw SolverError("run: non-finite state at t = " + std::to_string(t_) +
                                  " s; last valid time " + std::to_string(t_ - dt) + " s");
            if (!coh_ops_.empty()) {
                if (!out.interface_initiated && initiated_ips_ > 0) {
                    out.interface_initiated = true;
                    out.first_initiation_time = t_;
                    out.first_initiation_displacement = displacement();
                }
                if (!out.interface_fully_failed && failed_ips_ == 4 * coh_ops_.size()) {
                    out.interface_fully_failed = true;
                    out.failure_complete_time = t_;
                    out.failure_complete_displacement = displacement();
                }
            }
            if (t_ >= next_out - 1e-15 || t_ >= t_stop) {
                const LedgerSample s = sample();
                out.history.push_back(s);
                next_out += dt_out;
                // The abort residual is measured against the largest energy
                // scale reached so far; instantaneous ratios are 0/0 noise
                // during the quiescent start of the ramp.
                const double stored = s.internal + s.hourglass + s.cohesive_stored;
                run_scale = std::max(
                    {run_scale, std::abs(s.external_work), s.kinetic, stored});
                const double residual = std::abs(
                    s.external_work -
                    (s.kinetic + stored + s.cohesive_dissipated + s.damping_work));
                if (run_scale > 0.0 && residual > 0.05 * run_scale)
                    throw SolverError(
                        "run: energy imbalance " +
                        std::to_string(100.0 * residual / run_scale) + "% at t = " +
                        std::to_string(t_) +
                        " s exceeds 5%; the run is not quasi-static (reduce "
                        "time_compression or dt_safety)");
            }
            if (steps_ > 50'000'000)
                throw SolverError("run: step budget exhausted; configuration runaway");
        }
        out.steps = steps_;
        out.final_time = t_;
        out.dt_min_used = dt_min_used_;
        return out;
    }

private:
    void bind_materials() {
        mat_index_.clear();
        materials_.clear();
        std::map<std::string, std::size_t> index;
        for (const auto& h : mesh_.hexes) {
            auto it = index.find(h.material);
            if (it == index.end()) {
                auto rec = config_.materials.find(h.material);
                if (rec == config_.materials.end())
                    throw ConfigError("solver: mesh references material '" + h.material +
                                      "' which the config does not define");
                index.emplace(h.material, materials_.size());
                materials_.push_back(rec->second);
            }
        }
        for (const auto& h : mesh_.hexes)
            mat_index_.push_back(index.at(h.material));

        law_index_.clear();
        laws_.clear();
        std::map<std::string, std::size_t> lindex;
        for (const auto& ce : mesh_.cohesives) {
            auto it = lindex.find(ce.law);
            if (it == lindex.end()) {
                auto rec = config_.laws.find(ce.law);
                if (rec == config_.laws.end())
                    throw ConfigError("solver: mesh references cohesive law '" + ce.law +
                                      "' which the config does not define");
                lindex.emplace(ce.law, laws_.size());
                laws_.push_back(rec->second);
            }
        }
        for (const auto& ce : mesh_.cohesives)
            law_index_.push_back(lindex.at(ce.law));
    }

    void bind_constraints() {
        std::vector<std::uint8_t> kind(n_, 0); // 0 free, 1 driven, 2 fixed
        if (!config_.driven_set.empty())
            for (auto id : mesh_.node_set(config_.driven_set))
                kind[static_cast<std::size_t>(id)] = 1;
        if (!config_.fixed_set.empty())
            for (auto id : mesh_.node_set(config_.fixed_set)) {
                auto& k = kind[static_cast<std::size_t>(id)];
                if (k == 1)
                    throw ConfigError("solver: node " + std::to_string(id) +
                                      " is in both the driven and the fixed set");
                k = 2;
            }
        for (std::size_t i = 0; i < n_; ++i) {
            if (kind[i] == 0) free_.push_back(i);
            else if (kind[i] == 1) driven_.push_back(i);
        }
        constrained_ = kind;
    }

    void build_operators() {
        for (std::size_t e = 0; e < mesh_.hexes.size(); ++e) {
            const auto& spec = materials_[mat_index_[e]];
            if (spec.model == MaterialModel::Rigid) continue;
            const auto X = gather_positions(mesh_, mesh_.hexes[e].conn);
            hex_ops_.push_back(HexOperator::build(X, mesh_.hexes[e].conn,
                                                  config_.hourglass_coefficient,
                                                  spec.ogden.mu0(), e));
            hex_ids_.push_back(e);
            hex_mats_.push_back(mat_index_[e]);
        }
        hex_buf_.resize(hex_ops_.size());

        for (std::size_t e = 0; e < mesh_.cohesives.size(); ++e) {
            const auto& ce = mesh_.cohesives[e];
            const auto X = gather_positions(mesh_, ce.conn);
            coh_ops_.push_back(CohesiveOperator::build(X, ce.conn, ce.law, e));
            coh_laws_.push_back(law_index_[e]);
        }
        coh_states_.assign(coh_ops_.size(), {});
        coh_buf_.resize(coh_ops_.size());
    }

    void build_mass() {
        std::map<std::string, double> rho;
        for (const auto& m : materials_) rho[m.name] = m.density;
        mass_ = lump_mass(mesh_, rho);
        for (std::size_t i : free_)
            if (!(mass_[i] > 0.0))
                throw MeshError("solver: unconstrained node " + std::to_string(i) +
                                " carries no mass (not attached to any hex)");
        driven_mass_ = 0.0;
        for (std::size_t i : driven_) driven_mass_ += mass_[i];

        coh_dt_.resize(coh_ops_.size());
        for (std::size_t k = 0; k < coh_ops_.size(); ++k) {
            const auto& op = coh_ops_[k];
            const auto& law = laws_[coh_laws_[k]];
            double m_min = std::numeric_limits<double>::infinity();
            for (auto id : op.conn) {
                const double m = mass_[static_cast<std::size_t>(id)];
                if (m > 0.0) m_min = std::min(m_min, m);
            }
            if (!std::isfinite(m_min))
                throw MeshError("solver: cohesive element with massless nodes");
            const double e_max = std::max({law.Enn, law.Ess, law.Ett});
            // Worst linear mode: the two faces move apart in antiphase, every
            // integration point loaded, so the nodal stiffness is bounded by
            // twice the whole-element membrane stiffness against the lightest
            // attached mass. dt_crit = 2 sqrt(m / k).
            const double k_el = 2.0 * e_max * op.area0 / law.T0;
            coh_dt_[k] = 2.0 * std::sqrt(m_min / k_el);
            coh_dt_min_ = std::min(coh_dt_min_, coh_dt_[k]);
        }
    }

    // An assembled lumped-mass grid of mean-gradient hexes carries short-wave
    // modes about 17 percent above the single-element 2c/L estimate (measured
    // by power iteration on a regular mesh), so the classic L/c bound gets a
    // dispersion divisor with margin on top.
    static constexpr double kHexDispersion = 1.35;

    // Nodes shared by a hex and a cohesive face feel both stiffnesses at
    // once, so the frequencies add in quadrature: 1/dt^2 = 1/dt_hex^2 +
    // 1/dt_coh^2. Either bound alone is provably unsafe there (observed as
    // slow kinetic-energy growth after complete interface failure).
    static double combine_dt(double dt_hex, double dt_coh) {
        const double a = std::isfinite(dt_hex) ? 1.0 / (dt_hex * dt_hex) : 0.0;
        const double b = std::isfinite(dt_coh) ? 1.0 / (dt_coh * dt_coh) : 0.0;
        const double s = a + b;
        return s > 0.0 ? 1.0 / std::sqrt(s) : std::numeric_limits<double>::infinity();
    }

    void compute_reference_dt() {
        double dt_hex = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < hex_ops_.size(); ++k) {
            const auto& spec = materials_[hex_mats_[k]];
            const auto im = initial_moduli(spec.ogden);
            const double c = wave_speed(im.mu0, im.K0, spec.density);
            dt_hex = std::min(dt_hex, hex_ops_[k].L0_min / (kHexDispersion * c));
        }
        const double dt = config_.dt_safety * combine_dt(dt_hex, coh_dt_min_);
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw ConfigError("solver: stable time step is not positive "
                              "(no deformable elements?)");
        dt_ref_ = dt;
    }

    double next_dt() const {
        const double dt = config_.dt_safety * combine_dt(adaptive_bound_, coh_dt_min_);
        return std::min(dt, dt_ref_);
    }

    double kinetic_driven(double t) const {
        if (t_end_ <= 0.0 || driven_.empty()) return 0.0;
        const double v = config_.total_pull * smooth_step_rate(t, 0.0, t_end_);
        return 0.5 * driven_mass_ * v * v;
    }

    // Free-node leapfrog velocities live at half steps; synchronize them to
    // the sample time with a half kick of the step just taken. Driven-node
    // kinetic energy is analytic so it cancels exactly against the inertial
    // part of the external work.
    double kinetic_energy() const {
        double ke = kinetic_driven(t_);
        const double c = config_.mass_damping;
        for (std::size_t i : free_) {
            const Vec3 a = -f_[i] / mass_[i] - c * v_[i];
            const Vec3 v_hat = v_[i] + 0.5 * prev_dt_ * a;
            ke += 0.5 * mass_[i] * v_hat.squaredNorm();
        }
        return ke;
    }

    void eval_forces() {
        const int threads = config_.threads;

        parallel_for(hex_ops_.size(), threads, [&](std::size_t b, std::size_t e) {
            for (std::size_t k = b; k < e; ++k) {
                const auto& op = hex_ops_[k];
                std::array<Vec3, 8> Xe, ue;
                for (int i = 0; i < 8; ++i) {
                    const auto id = static_cast<std::size_t>(op.conn[static_cast<std::size_t>(i)]);
                    Xe[static_cast<std::size_t>(i)] = X_[id];
                    ue[static_cast<std::size_t>(i)] = u_[id];
                }
                const auto& spec = materials_[hex_mats_[k]];
                try {
                    hex_buf_[k] = hex_evaluate(op, Xe, ue, spec.ogden, spec.density);
                } catch (const NumericRangeError& err) {
                    throw SolverError("hex " + std::to_string(hex_ids_[k]) +
                                      " failed at t = " + std::to_string(t_) + " s: " +
                                      err.what());
                }
            }
        });

        parallel_for(coh_ops_.size(), threads, [&](std::size_t b, std::size_t e) {
            for (std::size_t k = b; k < e; ++k) {
                const auto& op = coh_ops_[k];
                std::array<Vec3, 8> Xe, ue;
                for (int i = 0; i < 8; ++i) {
                    const auto id = static_cast<std::size_t>(op.conn[static_cast<std::size_t>(i)]);
                    Xe[static_cast<std::size_t>(i)] = X_[id];
                    ue[static_cast<std::size_t>(i)] = u_[id];
                }
                coh_buf_[k] = cohesive_evaluate(op, Xe, ue, laws_[coh_laws_[k]],
                                                coh_states_[k]);
            }
        });

        // Serial fixed-order assembly keeps results bit-identical across
        // thread counts.
        for (auto& f : f_) f.setZero();
        internal_ = 0.0;
        hourglass_ = 0.0;
        adaptive_bound_ = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < hex_ops_.size(); ++k) {
            const auto& op = hex_ops_[k];
            const auto& r = hex_buf_[k];
            for (int i = 0; i < 8; ++i)
                f_[static_cast<std::size_t>(op.conn[static_cast<std::size_t>(i)])] +=
                    r.f_int[static_cast<std::size_t>(i)];
            internal_ += r.energy_elastic;
            hourglass_ += r.energy_hourglass;
            adaptive_bound_ = std::min(adaptive_bound_,
                                       r.L_min / (kHexDispersion * r.wave_speed));
        }
        coh_stored_ = 0.0;
        coh_dissipated_eff_ = 0.0;
        double coh_work_true = 0.0;
        damage_sum_ = 0.0;
        damage_max_ = 0.0;
        failed_ips_ = 0;
        initiated_ips_ = 0;
        for (std::size_t k = 0; k < coh_ops_.size(); ++k) {
            const auto& op = coh_ops_[k];
            const auto& r = coh_buf_[k];
            for (int i = 0; i < 8; ++i)
                f_[static_cast<std::size_t>(op.conn[static_cast<std::size_t>(i)])] +=
                    r.f_int[static_cast<std::size_t>(i)];
            coh_stored_ += r.recoverable;
            coh_dissipated_eff_ += r.dissipated;
            coh_work_true += r.work_true;
            damage_sum_ += 4.0 * r.damage_mean;
            damage_max_ = std::max(damage_max_, r.damage_max);
            for (const auto& st : coh_states_[k]) {
                if (st.initiated) ++initiated_ips_;
                if (st.damage >= 1.0 - 1e-9) ++failed_ips_;
            }
        }
        coh_dissipated_true_ = std::max(0.0, coh_work_true - coh_stored_);

        reaction_ = 0.0;
        for (std::size_t i : driven_) reaction_ += f_[i].dot(dir_);
    }

    const Mesh& mesh_;
    SimulationConfig config_;
    Vec3 dir_ = Vec3::UnitX();
    std::size_t n_ = 0;

    std::vector<Vec3> X_, u_, v_, f_;
    std::vector<double> mass_;
    std::vector<std::size_t> free_, driven_;
    std::vector<std::uint8_t> constrained_;
    double driven_mass_ = 0.0;

    std::vector<MaterialSpec> materials_;
    std::vector<CohesiveLaw> laws_;
    std::vector<std::size_t> mat_index_, law_index_;

    std::vector<HexOperator> hex_ops_;
    std::vector<std::size_t> hex_ids_, hex_mats_;
    std::vector<HexEvalResult> hex_buf_;
    std::vector<CohesiveOperator> coh_ops_;
    std::vector<std::size_t> coh_laws_;
    std::vector<std::array<CohesiveState, 4>> coh_states_;
    std::vector<CohesiveEvalResult> coh_buf_;
    std::vector<double> coh_dt_;
    double coh_dt_min_ = std::numeric_limits<double>::infinity();

    double t_ = 0.0;
    double t_end_ = 0.0;
    double dt_ref_ = 0.0;
    double dt_next_ = 0.0;
    double prev_dt_ = 0.0;
    double dt_min_used_ = 0.0;
    std::size_t steps_ = 0;

    double reaction_ = 0.0;
    double internal_ = 0.0;
    double hourglass_ = 0.0;
    double coh_stored_ = 0.0;
    double coh_dissipated_eff_ = 0.0;
    double coh_dissipated_true_ = 0.0;
    double external_work_ = 0.0;
    double damping_work_ = 0.0;
    double adaptive_bound_ = 0.0;
    double damage_sum_ = 0.0;
    double damage_max_ = 0.0;
    std::size_t failed_ips_ = 0;
    std::size_t initiated_ips_ = 0;
};

inline double stable_dt(const Mesh& mesh, const SimulationConfig& config) {
    return ExplicitSolver(mesh, config).reference_dt();
}

inline RunResult run(const Mesh& mesh, const SimulationConfig& config) {
    return ExplicitSolver(mesh, config).run();
}

} // namespace mfe
