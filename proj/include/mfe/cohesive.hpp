#pragma once

// Traction-separation law with damage for a zero-thickness interface.
//
// Elastic branch: nominal strains eps = delta / T0, uncoupled stiffness
// t = diag(Enn, Ess, Ett) * eps. Initiation by the max nominal stress
// criterion (compression excluded from the normal term). After initiation a
// scalar damage variable drives linear softening calibrated so the energy
// released on a radial path to full failure equals the fracture energy G:
//
//   delta_fail = 2 G / t_eff0,  t_eff0 = |(<tn>, ts, tt)| at initiation
//   D = delta_fail (delta_max - delta_init) / (delta_max (delta_fail - delta_init))
//
// Damage scales tension and shear; a closing interface keeps full normal
// stiffness no matter how damaged it is.

#include "mfe/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mfe {

struct ModeVec {
    double n = 0.0;
    double s = 0.0;
    double t = 0.0;
};

struct CohesiveLaw {
    std::string name;
    double Enn = 0.0; // Pa
    double Ess = 0.0;
    double Ett = 0.0;
    double tn0 = 0.0; // Pa
    double ts0 = 0.0;
    double tt0 = 0.0;
    double G = 0.0;  // N/m, energy per interface area
    double T0 = 1e-3; // m, constitutive thickness
    bool tangential_isotropic = true;

    void validate() const {
        auto pos = [&](double v, const char* what) {
            if (!(v > 0.0))
                throw ConfigError("cohesive law '" + name + "': " + what +
                                  " must be positive");
        };
        pos(Enn, "Enn");
        pos(Ess, "Ess");
        pos(Ett, "Ett");
        pos(tn0, "tn0");
        pos(ts0, "ts0");
        pos(tt0, "tt0");
        pos(G, "G");
        pos(T0, "T0");
        if (tangential_isotropic && ts0 != tt0)
            throw ConfigError("cohesive law '" + name +
                              "': ts0 and tt0 must match under tangential isotropy");
    }
};

struct CohesiveState {
    double damage = 0.0;
    double delta_max = 0.0;  // largest effective separation seen
    double delta_init = 0.0; // effective separation at initiation
    double delta_fail = 0.0; // effective separation at full failure
    double t_eff0 = 0.0;     // effective traction at initiation
    bool initiated = false;
    double dissipated = 0.0; // J/m^2, monotone

    // Trapezoid ledgers over the loading history.
    double work_eff = 0.0;  // integral of t_eff d(delta_m)
    double work_true = 0.0; // integral of t . d(delta), all components
    double prev_delta_m = 0.0;
    double prev_t_eff = 0.0;
    ModeVec prev_separation{};
    ModeVec prev_traction{};
};

inline ModeVec nominal_strains(const ModeVec& separation, const CohesiveLaw& law) {
    return {separation.n / law.T0, separation.s / law.T0, separation.t / law.T0};
}

inline ModeVec elastic_traction(const ModeVec& separation, const CohesiveLaw& law) {
    const ModeVec e = nominal_strains(separation, law);
    return {law.Enn * e.n, law.Ess * e.s, law.Ett * e.t};
}

// Max nominal stress ratio; >= 1 means initiation. Compression never counts.
inline double initiation_index(const ModeVec& traction, const CohesiveLaw& law) {
    const double fn = std::max(traction.n, 0.0) / law.tn0;
    const double fs = std::abs(traction.s) / law.ts0;
    const double ft = std::abs(traction.t) / law.tt0;
    return std::max({fn, fs, ft});
}

inline double effective_separation(const ModeVec& separation) {
    const double dn = std::max(separation.n, 0.0);
    return std::sqrt(dn * dn + separation.s * separation.s + separation.t * separation.t);
}

inline double effective_traction(const ModeVec& traction) {
    const double tn = std::max(traction.n, 0.0);
    return std::sqrt(tn * tn + traction.s * traction.s + traction.t * traction.t);
}

struct CohesiveUpdate {
    ModeVec traction;
    CohesiveState state;
};

// Advance one integration point by one step. Pure: the caller owns the state.
inline CohesiveUpdate update(const CohesiveState& state, const ModeVec& separation,
                             const CohesiveLaw& law) {
    const ModeVec t_el = elastic_traction(separation, law);
    const double delta_m = effective_separation(separation);

    CohesiveState ns = state;
    if (!ns.initiated && initiation_index(t_el, law) >= 1.0) {
        ns.initiated = true;
        ns.delta_init = delta_m;
        ns.t_eff0 = effective_traction(t_el);
        ns.delta_fail = 2.0 * law.G / ns.t_eff0;
        if (!(ns.delta_fail > ns.delta_init)) {
            const double g_min = 0.5 * ns.t_eff0 * ns.delta_init;
            throw CohesiveLawError(
                "cohesive law '" + law.name + "': G = " + std::to_string(law.G) +
                " N/m admits no softening branch; initiation already stores " +
                std::to_string(g_min) + " J/m^2, so G must exceed that");
        }
        ns.delta_max = delta_m;
    }
    if (ns.initiated) {
        ns.delta_max = std::max(ns.delta_max, delta_m);
        const double d = ns.delta_fail * (ns.delta_max - ns.delta_init) /
                         (ns.delta_max * (ns.delta_fail - ns.delta_init));
        ns.damage = std::max(state.damage, std::clamp(d, 0.0, 1.0));
    }

    ModeVec t;
    const double keep = 1.0 - ns.damage;
    t.n = separation.n < 0.0 ? t_el.n : keep * t_el.n;
    t.s = keep * t_el.s;
    t.t = keep * t_el.t;

    const double t_eff = effective_traction(t);
    ns.work_eff += 0.5 * (state.prev_t_eff + t_eff) * (delta_m - state.prev_delta_m);
    ns.work_true += 0.5 * ((state.prev_traction.n + t.n) * (separation.n - state.prev_separation.n) +
                           (state.prev_traction.s + t.s) * (separation.s - state.prev_separation.s) +
                           (state.prev_traction.t + t.t) * (separation.t - state.prev_separation.t));
    ns.prev_delta_m = delta_m;
    ns.prev_t_eff = t_eff;
    ns.prev_separation = separation;
    ns.prev_traction = t;
    ns.dissipated = std::max(state.dissipated,
                             std::max(0.0, ns.work_eff - 0.5 * t_eff * delta_m));
    return {t, ns};
}

// Energy per unit area irreversibly spent at this point so far. Reaches G on
// any radial separation path driven to full failure.
inline double dissipated_energy(const CohesiveState& state) {
    return state.dissipated;
}

// Elastic energy per unit area recoverable by unloading from the current
// point (linear branches make this exact).
inline double recoverable_energy(const CohesiveState& state) {
    const ModeVec& t = state.prev_traction;
    const ModeVec& d = state.prev_separation;
    return 0.5 * (t.n * d.n + t.s * d.s + t.t * d.t);
}

} // namespace mfe
