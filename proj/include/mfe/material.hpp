#pragma once

// Two-term Ogden hyperelasticity with a polynomial volumetric part.
//
//   W = sum_i 2 mu_i / alpha_i^2 (lb1^a_i + lb2^a_i + lb3^a_i - 3)
//     + sum_i (1/D_i) (J - 1)^(2i)
//
// lb_a are the deviatoric principal stretches J^(-1/3) lambda_a. Principal
// Cauchy stresses follow from the spectral form; the volumetric column adds
// sum_i (2i/D_i)(J-1)^(2i-1) to every principal value.

#include "mfe/core.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <string>

namespace mfe {

struct OgdenParams {
    std::array<double, 2> mu{0.0, 0.0};    // Pa
    std::array<double, 2> alpha{0.0, 0.0}; // dimensionless, nonzero
    std::array<double, 2> D{0.0, 0.0};     // 1/Pa; D[1] == 0 drops the quartic term

    double mu0() const { return mu[0] + mu[1]; }
    double K0() const { return 2.0 / D[0]; }

    void validate() const {
        if (!(mu0() > 0.0))
            throw ConfigError("ogden: ground-state shear modulus mu1+mu2 must be positive");
        for (double a : alpha)
            if (a == 0.0)
                throw ConfigError("ogden: alpha exponents must be nonzero");
        if (!(D[0] > 0.0))
            throw ConfigError("ogden: D1 must be positive");
        if (D[1] < 0.0)
            throw ConfigError("ogden: D2 must be non-negative");
    }
};

// D1 for a target Poisson ratio via K0 = 2 mu0 (1+nu) / (3 (1-2 nu)).
inline double d1_from_poisson(double mu0, double nu) {
    if (!(mu0 > 0.0))
        throw ConfigError("d1_from_poisson: mu0 must be positive");
    if (!(nu >= 0.0 && nu < 0.5))
        throw ConfigError("d1_from_poisson: nu must lie in [0, 0.5)");
    const double K0 = 2.0 * mu0 * (1.0 + nu) / (3.0 * (1.0 - 2.0 * nu));
    return 2.0 / K0;
}

struct InitialModuli {
    double mu0;
    double K0;
};

inline InitialModuli initial_moduli(const OgdenParams& p) {
    return {p.mu0(), p.K0()};
}

// Spectral decomposition of a deformation gradient: J, deviatoric principal
// stretches, and the principal directions of the left stretch (eigenvectors
// of b = F F^T, as columns).
struct DeformationState {
    Mat3 F;
    double J = 1.0;
    Vec3 lambda_bar{1.0, 1.0, 1.0};
    Mat3 directions = Mat3::Identity();

    static DeformationState from_deformation_gradient(const Mat3& F) {
        DeformationState s;
        s.F = F;
        s.J = F.determinant();
        if (!(s.J > 0.0) || !std::isfinite(s.J))
            throw NumericRangeError("deformation state: det F = " + std::to_string(s.J) +
                                    " is not positive");
        const Mat3 b = F * F.transpose();
        Eigen::SelfAdjointEigenSolver<Mat3> eig(b);
        if (eig.info() != Eigen::Success)
            throw NumericRangeError("deformation state: eigen decomposition failed");
        const double Jm13 = std::cbrt(1.0 / s.J);
        for (int a = 0; a < 3; ++a) {
            const double ev = eig.eigenvalues()[a];
            if (!(ev > 0.0))
                throw NumericRangeError("deformation state: b has a non-positive eigenvalue");
            s.lambda_bar[a] = Jm13 * std::sqrt(ev);
        }
        s.directions = eig.eigenvectors();
        return s;
    }
};

inline double strain_energy(const DeformationState& s, const OgdenParams& p) {
    double W = 0.0;
    for (int i = 0; i < 2; ++i) {
        if (p.mu[i] == 0.0) continue;
        const double a = p.alpha[i];
        const double sum = std::pow(s.lambda_bar[0], a) + std::pow(s.lambda_bar[1], a) +
                           std::pow(s.lambda_bar[2], a);
        W += 2.0 * p.mu[i] / (a * a) * (sum - 3.0);
    }
    const double Jm1 = s.J - 1.0;
    W += Jm1 * Jm1 / p.D[0];
    if (p.D[1] > 0.0)
        W += Jm1 * Jm1 * Jm1 * Jm1 / p.D[1];
    if (!std::isfinite(W))
        throw NumericRangeError("strain_energy: non-finite value (J = " + std::to_string(s.J) +
                                ")");
    return W;
}

// Principal Cauchy stresses in the order of s.lambda_bar.
inline Vec3 principal_cauchy_stress(const DeformationState& s, const OgdenParams& p) {
    Vec3 sig = Vec3::Zero();
    for (int i = 0; i < 2; ++i) {
        if (p.mu[i] == 0.0) continue;
        const double a = p.alpha[i];
        const Vec3 pw{std::pow(s.lambda_bar[0], a), std::pow(s.lambda_bar[1], a),
                      std::pow(s.lambda_bar[2], a)};
        const double mean = pw.sum() / 3.0;
        sig += (2.0 * p.mu[i] / (a * s.J)) * (pw - Vec3::Constant(mean));
    }
    const double Jm1 = s.J - 1.0;
    double pvol = 2.0 * Jm1 / p.D[0];
    if (p.D[1] > 0.0)
        pvol += 4.0 * Jm1 * Jm1 * Jm1 / p.D[1];
    sig += Vec3::Constant(pvol);
    return sig;
}

inline Mat3 cauchy_stress(const DeformationState& s, const OgdenParams& p) {
    const Vec3 sig = principal_cauchy_stress(s, p);
    Mat3 out = Mat3::Zero();
    for (int a = 0; a < 3; ++a) {
        const Vec3 n = s.directions.col(a);
        out += sig[a] * (n * n.transpose());
    }
    if (!out.allFinite())
        throw NumericRangeError("cauchy_stress: non-finite result");
    return out;
}

inline Mat3 cauchy_stress(const Mat3& F, const OgdenParams& p) {
    return cauchy_stress(DeformationState::from_deformation_gradient(F), p);
}

// Tangent bounds used for the adaptive stable-step estimate. The shear bound
// replaces each mu_i by mu_i * max_a(lambda_bar_a^alpha_i), which dominates the
// principal shear tangent for this energy; the bulk bound is d^2Wvol/dJ^2.
struct ModulusBound {
    double mu_eff;
    double K_eff;
};

inline ModulusBound tangent_modulus_bound(const DeformationState& s, const OgdenParams& p) {
    double mu_eff = 0.0;
    for (int i = 0; i < 2; ++i) {
        if (p.mu[i] == 0.0) continue;
        const double a = p.alpha[i];
        double m = 0.0;
        for (int k = 0; k < 3; ++k)
            m = std::max(m, std::pow(s.lambda_bar[k], a));
        mu_eff += p.mu[i] * m;
    }
    const double Jm1 = s.J - 1.0;
    double K_eff = 2.0 / p.D[0];
    if (p.D[1] > 0.0)
        K_eff += 12.0 * Jm1 * Jm1 / p.D[1];
    return {mu_eff, K_eff};
}

// Dilatational wave speed from given moduli.
inline double wave_speed(double mu, double K, double density) {
    if (!(density > 0.0))
        throw ConfigError("wave_speed: density must be positive");
    return std::sqrt((K + 4.0 * mu / 3.0) / density);
}

enum class MaterialModel { Ogden2, Rigid };

// Named material record as it appears in run configurations. When the record
// was specified through a Poisson ratio, nu is remembered so calibration can
// recompute D1 from trial moduli.
struct MaterialSpec {
    std::string name;
    MaterialModel model = MaterialModel::Ogden2;
    OgdenParams ogden;
    std::optional<double> nu;
    double density = 1000.0; // kg/m^3

    void validate() const {
        if (name.empty())
            throw ConfigError("material: name must not be empty");
        if (!(density > 0.0))
            throw ConfigError("material '" + name + "': density must be positive");
        if (model == MaterialModel::Ogden2)
            ogden.validate();
    }
};

} // namespace mfe
