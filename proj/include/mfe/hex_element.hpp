#pragma once

// Single-point (mean gradient) trilinear hex with stiffness hourglass control.
//
// The discrete gradient vectors B0_i = d(V0)/dX_i are integrated exactly over
// the reference element, so F = (1/V0) sum_i x_i B0_i^T is the volume-averaged
// deformation gradient and the nodal force P(F) B0_i is the exact gradient of
// the discrete energy V0 W(F). Hourglass shape vectors are orthogonalized
// against affine fields; their generalized displacements q_m vanish on any
// linear motion, so the control never pollutes the patch test.

#include "mfe/core.hpp"
#include "mfe/material.hpp"
#include "mfe/mesh.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace mfe {

namespace hexdetail {

inline constexpr std::array<std::array<double, 3>, 8> kCornerXi{{
    {-1.0, -1.0, -1.0},
    {+1.0, -1.0, -1.0},
    {+1.0, +1.0, -1.0},
    {-1.0, +1.0, -1.0},
    {-1.0, -1.0, +1.0},
    {+1.0, -1.0, +1.0},
    {+1.0, +1.0, +1.0},
    {-1.0, +1.0, +1.0},
}};

// Hourglass base patterns: xi*eta, xi*zeta, eta*zeta, xi*eta*zeta.
inline constexpr std::array<std::array<double, 8>, 4> kHourglassBase{{
    {1, -1, 1, -1, 1, -1, 1, -1},
    {1, -1, -1, 1, -1, 1, 1, -1},
    {1, 1, -1, -1, -1, -1, 1, 1},
    {-1, 1, -1, 1, 1, -1, 1, -1},
}};

inline Vec3 shape_gradient_xi(int i, const Vec3& xi) {
    const auto& c = kCornerXi[static_cast<std::size_t>(i)];
    return Vec3(0.125 * c[0] * (1.0 + c[1] * xi[1]) * (1.0 + c[2] * xi[2]),
                0.125 * c[1] * (1.0 + c[0] * xi[0]) * (1.0 + c[2] * xi[2]),
                0.125 * c[2] * (1.0 + c[0] * xi[0]) * (1.0 + c[1] * xi[1]));
}

inline constexpr std::array<std::array<int, 2>, 12> kEdges{{
    {0, 1}, {1, 2}, {2, 3}, {3, 0},
    {4, 5}, {5, 6}, {6, 7}, {7, 4},
    {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

inline double min_edge_length(const std::array<Vec3, 8>& x) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& e : kEdges)
        m = std::min(m, (x[static_cast<std::size_t>(e[1])] -
                         x[static_cast<std::size_t>(e[0])]).norm());
    return m;
}

} // namespace hexdetail

// Exact volume of a trilinear hex (2x2x2 Gauss integrates the triquadratic
// Jacobian determinant exactly).
inline double hex_volume(const std::array<Vec3, 8>& x) {
    const double g = 1.0 / std::sqrt(3.0);
    double V = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                const Vec3 xi((a ? g : -g), (b ? g : -g), (c ? g : -g));
                Mat3 J = Mat3::Zero();
                for (int i = 0; i < 8; ++i)
                    J += x[static_cast<std::size_t>(i)] *
                         hexdetail::shape_gradient_xi(i, xi).transpose();
                V += J.determinant();
            }
    return V;
}

struct HexOperator {
    std::array<std::int64_t, 8> conn{};
    std::array<Vec3, 8> B0{};
    double V0 = 0.0;
    double L0_min = 0.0;
    std::array<std::array<double, 8>, 4> gamma{};
    double hg_k = 0.0; // N/m

    static HexOperator build(const std::array<Vec3, 8>& X,
                             const std::array<std::int64_t, 8>& conn,
                             double hourglass_coefficient, double mu0,
                             std::size_t element_index) {
        HexOperator op;
        op.conn = conn;
        const double g = 1.0 / std::sqrt(3.0);
        for (auto& b : op.B0) b.setZero();
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int c = 0; c < 2; ++c) {
                    const Vec3 xi((a ? g : -g), (b ? g : -g), (c ? g : -g));
                    Mat3 J = Mat3::Zero();
                    std::array<Vec3, 8> dxi;
                    for (int i = 0; i < 8; ++i) {
                        dxi[static_cast<std::size_t>(i)] = hexdetail::shape_gradient_xi(i, xi);
                        J += X[static_cast<std::size_t>(i)] *
                             dxi[static_cast<std::size_t>(i)].transpose();
                    }
                    const double detJ = J.determinant();
                    if (!(detJ > 0.0))
                        throw MeshError("hex " + std::to_string(element_index) +
                                        " is inverted or degenerate in the reference "
                                        "configuration (det J = " +
                                        std::to_string(detJ) + ")");
                    const Mat3 JinvT = J.inverse().transpose();
                    for (int i = 0; i < 8; ++i)
                        op.B0[static_cast<std::size_t>(i)] +=
                            detJ * (JinvT * dxi[static_cast<std::size_t>(i)]);
                    op.V0 += detJ;
                }
        op.L0_min = hexdetail::min_edge_length(X);

        for (int m = 0; m < 4; ++m) {
            const auto& h = hexdetail::kHourglassBase[static_cast<std::size_t>(m)];
            Vec3 s = Vec3::Zero();
            for (int i = 0; i < 8; ++i)
                s += h[static_cast<std::size_t>(i)] * X[static_cast<std::size_t>(i)];
            for (int i = 0; i < 8; ++i)
                op.gamma[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] =
                    h[static_cast<std::size_t>(i)] -
                    op.B0[static_cast<std::size_t>(i)].dot(s) / op.V0;
        }
        op.hg_k = hourglass_coefficient * mu0 * std::cbrt(op.V0);
        return op;
    }
};

struct HexEvalResult {
    std::array<Vec3, 8> f_int{};   // N, gradient of the element energy
    double energy_elastic = 0.0;   // J
    double energy_hourglass = 0.0; // J
    double wave_speed = 0.0;       // m/s, tangent bound
    double L_min = 0.0;            // m, current minimum edge
};

// u = nodal displacements, X = reference positions (both gathered in element
// order). Throws NumericRangeError when the averaged gradient inverts.
inline HexEvalResult hex_evaluate(const HexOperator& op, const std::array<Vec3, 8>& X,
                                  const std::array<Vec3, 8>& u, const OgdenParams& mat,
                                  double density) {
    HexEvalResult r;
    Mat3 F = Mat3::Identity();
    for (int i = 0; i < 8; ++i)
        F += u[static_cast<std::size_t>(i)] *
             op.B0[static_cast<std::size_t>(i)].transpose() / op.V0;

    const DeformationState state = DeformationState::from_deformation_gradient(F);
    const Mat3 sigma = cauchy_stress(state, mat);
    const Mat3 P = state.J * sigma * F.inverse().transpose();
    for (int i = 0; i < 8; ++i)
        r.f_int[static_cast<std::size_t>(i)] = P * op.B0[static_cast<std::size_t>(i)];
    r.energy_elastic = op.V0 * strain_energy(state, mat);

    for (int m = 0; m < 4; ++m) {
        Vec3 q = Vec3::Zero();
        const auto& gm = op.gamma[static_cast<std::size_t>(m)];
        for (int i = 0; i < 8; ++i)
            q += gm[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(i)];
        for (int i = 0; i < 8; ++i)
            r.f_int[static_cast<std::size_t>(i)] += op.hg_k * gm[static_cast<std::size_t>(i)] * q;
        r.energy_hourglass += 0.5 * op.hg_k * q.squaredNorm();
    }

    const ModulusBound mb = tangent_modulus_bound(state, mat);
    r.wave_speed = wave_speed(mb.mu_eff, mb.K_eff, density);
    std::array<Vec3, 8> x;
    for (int i = 0; i < 8; ++i)
        x[static_cast<std::size_t>(i)] = X[static_cast<std::size_t>(i)] +
                                         u[static_cast<std::size_t>(i)];
    r.L_min = hexdetail::min_edge_length(x);
    return r;
}

} // namespace mfe
