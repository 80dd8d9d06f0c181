#pragma once

// Zero-thickness 8-node cohesive element: paired bilinear quads with a 2x2
// Gauss rule on the midplane. Separation is the interpolated displacement jump
// expressed in the reference midplane frame (normal, then first tangent along
// the xi direction), fixed at build time. A frame following the deformed
// midplane is attractive but becomes meaningless once the faces have slid
// macroscopically: the averaged "midplane" of laterally diverged node pairs
// tilts with any contact bounce, the tilt projects the accumulated slip into
// the normal separation, and the resulting slip-proportional feedback is a
// genuine flutter (observed as exponential post-failure energy growth at a
// rate independent of dt). The fixed frame is exact for the flat interfaces
// this code targets and keeps the per-component work ledger exact. Forces are
// equal and opposite on the two faces, so the element transmits no net force
// or spurious momentum.

#include "mfe/cohesive.hpp"
#include "mfe/core.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

namespace mfe {

namespace cohdetail {

inline constexpr double kG = 0.57735026918962576; // 1/sqrt(3)

inline constexpr std::array<std::array<double, 2>, 4> kIp{{
    {-kG, -kG}, {+kG, -kG}, {+kG, +kG}, {-kG, +kG},
}};

inline double shape(int i, double xi, double eta) {
    switch (i) {
        case 0: return 0.25 * (1.0 - xi) * (1.0 - eta);
        case 1: return 0.25 * (1.0 + xi) * (1.0 - eta);
        case 2: return 0.25 * (1.0 + xi) * (1.0 + eta);
        default: return 0.25 * (1.0 - xi) * (1.0 + eta);
    }
}

inline std::array<double, 2> shape_grad(int i, double xi, double eta) {
    switch (i) {
        case 0: return {-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)};
        case 1: return {+0.25 * (1.0 - eta), -0.25 * (1.0 + xi)};
        case 2: return {+0.25 * (1.0 + eta), +0.25 * (1.0 + xi)};
        default: return {-0.25 * (1.0 + eta), +0.25 * (1.0 - xi)};
    }
}

} // namespace cohdetail

struct CohesiveOperator {
    std::array<std::int64_t, 8> conn{};
    std::string law;
    std::array<double, 4> dA0{}; // reference area weight per integration point
    std::array<Vec3, 4> nrm{};   // reference frame per integration point
    std::array<Vec3, 4> t1{};
    std::array<Vec3, 4> t2{};
    double area0 = 0.0;

    static CohesiveOperator build(const std::array<Vec3, 8>& X,
                                  const std::array<std::int64_t, 8>& conn,
                                  const std::string& law, std::size_t element_index) {
        CohesiveOperator op;
        op.conn = conn;
        op.law = law;
        std::array<Vec3, 4> mid;
        double scale = 0.0;
        for (int i = 0; i < 4; ++i) {
            mid[static_cast<std::size_t>(i)] =
                0.5 * (X[static_cast<std::size_t>(i)] + X[static_cast<std::size_t>(i + 4)]);
            scale = std::max(scale, mid[static_cast<std::size_t>(i)].norm());
        }
        for (int g = 0; g < 4; ++g) {
            const auto [xi, eta] = cohdetail::kIp[static_cast<std::size_t>(g)];
            Vec3 txi = Vec3::Zero(), teta = Vec3::Zero();
            for (int i = 0; i < 4; ++i) {
                const auto d = cohdetail::shape_grad(i, xi, eta);
                txi += d[0] * mid[static_cast<std::size_t>(i)];
                teta += d[1] * mid[static_cast<std::size_t>(i)];
            }
            const Vec3 nv = txi.cross(teta);
            const double a = nv.norm();
            if (!(a > 1e-20 * std::max(1.0, scale * scale)))
                throw MeshError("cohesive " + std::to_string(element_index) +
                                " has a degenerate reference midplane");
            op.dA0[static_cast<std::size_t>(g)] = a;
            op.area0 += a;
            op.nrm[static_cast<std::size_t>(g)] = nv / a;
            op.t1[static_cast<std::size_t>(g)] = txi.normalized();
            op.t2[static_cast<std::size_t>(g)] =
                op.nrm[static_cast<std::size_t>(g)].cross(op.t1[static_cast<std::size_t>(g)]);
        }
        return op;
    }
};

struct CohesiveEvalResult {
    std::array<Vec3, 8> f_int{};
    double recoverable = 0.0;   // J, elastic energy held at the interface
    double dissipated = 0.0;    // J, via the effective-separation ledger
    double work_true = 0.0;     // J, integral of t . d(delta) over history
    double damage_max = 0.0;
    double damage_mean = 0.0;
    double delta_n_min = 0.0;   // most negative normal separation seen this call
};

// Advances the four integration-point states in place.
inline CohesiveEvalResult cohesive_evaluate(const CohesiveOperator& op,
                                            const std::array<Vec3, 8>& X,
                                            const std::array<Vec3, 8>& u,
                                            const CohesiveLaw& law,
                                            std::array<CohesiveState, 4>& states) {
    (void)X;
    CohesiveEvalResult r;
    for (auto& f : r.f_int) f.setZero(); // Eigen default-constructs uninitialized

    for (int g = 0; g < 4; ++g) {
        const auto [xi, eta] = cohdetail::kIp[static_cast<std::size_t>(g)];
        Vec3 jump = Vec3::Zero();
        std::array<double, 4> N;
        for (int i = 0; i < 4; ++i) {
            N[static_cast<std::size_t>(i)] = cohdetail::shape(i, xi, eta);
            jump += N[static_cast<std::size_t>(i)] *
                    (u[static_cast<std::size_t>(i + 4)] - u[static_cast<std::size_t>(i)]);
        }
        const Vec3& nrm = op.nrm[static_cast<std::size_t>(g)];
        const Vec3& t1 = op.t1[static_cast<std::size_t>(g)];
        const Vec3& t2 = op.t2[static_cast<std::size_t>(g)];

        const ModeVec sep{jump.dot(nrm), jump.dot(t1), jump.dot(t2)};
        auto& st = states[static_cast<std::size_t>(g)];
        const CohesiveUpdate up = update(st, sep, law);
        st = up.state;

        const double w = op.dA0[static_cast<std::size_t>(g)];
        const Vec3 T = up.traction.n * nrm + up.traction.s * t1 + up.traction.t * t2;
        for (int i = 0; i < 4; ++i) {
            const Vec3 f = (N[static_cast<std::size_t>(i)] * w) * T;
            r.f_int[static_cast<std::size_t>(i + 4)] += f;
            r.f_int[static_cast<std::size_t>(i)] -= f;
        }
        r.recoverable += recoverable_energy(st) * w;
        r.dissipated += dissipated_energy(st) * w;
        r.work_true += st.work_true * w;
        r.damage_max = std::max(r.damage_max, st.damage);
        r.damage_mean += 0.25 * st.damage;
        r.delta_n_min = std::min(r.delta_n_min, sep.n);
    }
    return r;
}

} // namespace mfe
