#include "mfe/cohesive_element.hpp"
#include "mfe/hex_element.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "support/oracles.hpp"

using namespace mfe;

namespace {

std::array<Vec3, 8> unit_cube(double L = 1.0) {
    return {Vec3(0, 0, 0), Vec3(L, 0, 0), Vec3(L, L, 0), Vec3(0, L, 0),
            Vec3(0, 0, L), Vec3(L, 0, L), Vec3(L, L, L), Vec3(0, L, L)};
}

std::array<std::int64_t, 8> iota_conn() { return {0, 1, 2, 3, 4, 5, 6, 7}; }

OgdenParams brain() {
    OgdenParams p;
    p.mu = {800.0, 386.7};
    p.alpha = {-8.0, 16.0};
    p.D = {d1_from_poisson(p.mu0(), 0.49), 0.0};
    return p;
}

// 4x4x4 Gauss volume, independent of the 2x2x2 rule in hex_volume.
double volume_highorder(const std::array<Vec3, 8>& x) {
    static const double gp[4] = {-0.8611363115940526, -0.3399810435848563,
                                 0.3399810435848563, 0.8611363115940526};
    static const double gw[4] = {0.3478548451374538, 0.6521451548625461,
                                 0.6521451548625461, 0.3478548451374538};
    double V = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c) {
                const Vec3 xi(gp[a], gp[b], gp[c]);
                Mat3 J = Mat3::Zero();
                for (int i = 0; i < 8; ++i)
                    J += x[static_cast<std::size_t>(i)] *
                         hexdetail::shape_gradient_xi(i, xi).transpose();
                V += gw[a] * gw[b] * gw[c] * J.determinant();
            }
    return V;
}

double total_energy(const HexOperator& op, const std::array<Vec3, 8>& X,
                    const std::array<Vec3, 8>& u, const OgdenParams& mat) {
    const HexEvalResult r = hex_evaluate(op, X, u, mat, 1000.0);
    return r.energy_elastic + r.energy_hourglass;
}

}  // namespace

TEST_CASE("hex volume") {
    REQUIRE(hex_volume(unit_cube()) == Catch::Approx(1.0).epsilon(1e-14));
    auto box = unit_cube();
    for (auto& p : box) {
        p[0] *= 0.02;
        p[1] *= 0.03;
        p[2] *= 0.015;
    }
    REQUIRE(hex_volume(box) == Catch::Approx(0.02 * 0.03 * 0.015).epsilon(1e-14));

    // sheared parallelepiped keeps its volume
    Mat3 A = Mat3::Identity();
    A(0, 2) = 0.7;
    A(1, 0) = -0.3;
    auto par = unit_cube();
    for (auto& p : par) p = A * p;
    REQUIRE(hex_volume(par) == Catch::Approx(1.0).epsilon(1e-13));

    // trilinear (non-affine) shapes against an independent high-order rule
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> pert(-0.2, 0.2);
    for (int k = 0; k < 50; ++k) {
        auto x = unit_cube();
        for (auto& p : x) p += Vec3(pert(rng), pert(rng), pert(rng));
        REQUIRE(hex_volume(x) == Catch::Approx(volume_highorder(x)).epsilon(1e-12));
    }
}

TEST_CASE("hex operator discrete gradients") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> pert(-0.15, 0.15);
    for (int k = 0; k < 25; ++k) {
        auto X = unit_cube(0.005);
        for (auto& p : X) p += 0.005 * Vec3(pert(rng), pert(rng), pert(rng));
        const auto op = HexOperator::build(X, iota_conn(), 0.05, 1186.7, 0);

        REQUIRE(op.V0 == Catch::Approx(hex_volume(X)).epsilon(1e-13));
        REQUIRE(op.L0_min > 0.0);

        double bscale = 0.0;
        Vec3 bsum = Vec3::Zero();
        Mat3 part = Mat3::Zero();
        for (int i = 0; i < 8; ++i) {
            bsum += op.B0[static_cast<std::size_t>(i)];
            bscale += op.B0[static_cast<std::size_t>(i)].norm();
            part += X[static_cast<std::size_t>(i)] *
                    op.B0[static_cast<std::size_t>(i)].transpose();
        }
        // translation invariance and linear completeness
        REQUIRE(bsum.norm() <= 1e-13 * bscale);
        REQUIRE((part - op.V0 * Mat3::Identity()).norm() <= 1e-12 * op.V0);

        // hourglass vectors are orthogonal to every affine field
        for (int m = 0; m < 4; ++m) {
            double s = 0.0;
            Vec3 sx = Vec3::Zero();
            for (int i = 0; i < 8; ++i) {
                s += op.gamma[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
                sx += op.gamma[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] *
                      X[static_cast<std::size_t>(i)];
            }
            REQUIRE(std::abs(s) <= 1e-10);
            REQUIRE(sx.norm() <= 1e-10 * 0.005);
        }
    }
}

TEST_CASE("inverted reference hex is rejected") {
    auto X = unit_cube();
    std::swap(X[0], X[4]);
    std::swap(X[1], X[5]);
    std::swap(X[2], X[6]);
    std::swap(X[3], X[7]);
    REQUIRE_THROWS_AS(HexOperator::build(X, iota_conn(), 0.05, 1186.7, 3), MeshError);
}

TEST_CASE("hex internal force is the gradient of the element energy") {
    const OgdenParams mat = brain();
    const double L = 0.005;
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> pert(-0.12, 0.12);

    auto X = unit_cube(L);
    X[6] += L * Vec3(0.08, -0.05, 0.06);  // non-cuboid reference
    const auto op = HexOperator::build(X, iota_conn(), 0.05, mat.mu0(), 0);

    for (int trial = 0; trial < 6; ++trial) {
        std::array<Vec3, 8> u;
        for (auto& ui : u) ui = L * Vec3(pert(rng), pert(rng), pert(rng));
        const HexEvalResult r = hex_evaluate(op, X, u, mat, 1000.0);
        REQUIRE(r.energy_hourglass > 0.0);  // random field activates the control

        const double h = 1e-7 * L;
        double fscale = 0.0;
        for (const auto& f : r.f_int) fscale = std::max(fscale, f.norm());
        for (int i = 0; i < 8; ++i) {
            for (int c = 0; c < 3; ++c) {
                auto up = u, um = u;
                up[static_cast<std::size_t>(i)][c] += h;
                um[static_cast<std::size_t>(i)][c] -= h;
                const double fd =
                    (total_energy(op, X, up, mat) - total_energy(op, X, um, mat)) / (2.0 * h);
                REQUIRE(r.f_int[static_cast<std::size_t>(i)][c] ==
                        Catch::Approx(fd).margin(2e-5 * fscale));
            }
        }
    }
}

TEST_CASE("hex element at rest and under affine motion") {
    const OgdenParams mat = brain();
    const auto X = unit_cube(0.005);
    const auto op = HexOperator::build(X, iota_conn(), 0.05, mat.mu0(), 0);

    SECTION("zero displacement, zero response") {
        std::array<Vec3, 8> u;
        for (auto& ui : u) ui.setZero();
        const HexEvalResult r = hex_evaluate(op, X, u, mat, 1000.0);
        REQUIRE(r.energy_elastic == 0.0);
        REQUIRE(r.energy_hourglass == 0.0);
        for (const auto& f : r.f_int) REQUIRE(f.norm() <= 1e-12);
        REQUIRE(r.wave_speed ==
                Catch::Approx(wave_speed(mat.mu0(), mat.K0(), 1000.0)).epsilon(1e-12));
        REQUIRE(r.L_min == Catch::Approx(0.005).epsilon(1e-14));
    }

    SECTION("affine fields leave the hourglass control silent") {
        std::mt19937_64 rng(43);
        std::uniform_real_distribution<double> a(-0.2, 0.2);
        Mat3 A;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) A(i, j) = a(rng);
        std::array<Vec3, 8> u;
        for (int i = 0; i < 8; ++i) u[static_cast<std::size_t>(i)] = A * X[static_cast<std::size_t>(i)];
        const HexEvalResult r = hex_evaluate(op, X, u, mat, 1000.0);
        REQUIRE(r.energy_hourglass <= 1e-20);
        REQUIRE(r.energy_elastic > 0.0);
    }

    SECTION("rigid rotation carries no force") {
        std::mt19937_64 rng(47);
        const Mat3 R = oracle::random_rotation(rng);
        std::array<Vec3, 8> u;
        for (int i = 0; i < 8; ++i)
            u[static_cast<std::size_t>(i)] = (R - Mat3::Identity()) * X[static_cast<std::size_t>(i)];
        const HexEvalResult r = hex_evaluate(op, X, u, mat, 1000.0);
        for (const auto& f : r.f_int)
            REQUIRE(f.norm() <= 1e-8 * mat.K0() * 0.005 * 0.005);
    }

    SECTION("collapse to negative volume throws") {
        std::array<Vec3, 8> u;
        for (int i = 0; i < 8; ++i)
            u[static_cast<std::size_t>(i)] = Vec3(0, 0, -2.0 * X[static_cast<std::size_t>(i)][2]);
        REQUIRE_THROWS_AS(hex_evaluate(op, X, u, mat, 1000.0), NumericRangeError);
    }
}

namespace {

std::array<Vec3, 8> flat_interface(double a, double b) {
    // coincident quad pair spanning [0,a] x [0,b] at z = 0
    return {Vec3(0, 0, 0), Vec3(a, 0, 0), Vec3(a, b, 0), Vec3(0, b, 0),
            Vec3(0, 0, 0), Vec3(a, 0, 0), Vec3(a, b, 0), Vec3(0, b, 0)};
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

}  // namespace

TEST_CASE("cohesive operator geometry") {
    const auto op = CohesiveOperator::build(flat_interface(0.004, 0.002), iota_conn(),
                                            "interface", 0);
    REQUIRE(op.area0 == Catch::Approx(0.004 * 0.002).epsilon(1e-14));
    for (int g = 0; g < 4; ++g) {
        REQUIRE((op.nrm[static_cast<std::size_t>(g)] - Vec3(0, 0, 1)).norm() <= 1e-14);
        REQUIRE((op.t1[static_cast<std::size_t>(g)] - Vec3(1, 0, 0)).norm() <= 1e-14);
        REQUIRE((op.t2[static_cast<std::size_t>(g)] - Vec3(0, 1, 0)).norm() <= 1e-14);
        REQUIRE(op.nrm[static_cast<std::size_t>(g)]
                    .dot(op.t1[static_cast<std::size_t>(g)]) == 0.0);
    }

    std::array<Vec3, 8> degenerate;
    for (auto& p : degenerate) p = Vec3(1, 2, 3);
    REQUIRE_THROWS_AS(CohesiveOperator::build(degenerate, iota_conn(), "interface", 7),
                      MeshError);
}

TEST_CASE("cohesive element forces") {
    const CohesiveLaw law = s1_law();
    const auto X = flat_interface(0.002, 0.002);
    const double A = 0.002 * 0.002;
    const auto op = CohesiveOperator::build(X, iota_conn(), law.name, 0);

    SECTION("zero jump, exactly zero forces") {
        std::array<CohesiveState, 4> states{};
        std::array<Vec3, 8> u;
        for (auto& ui : u) ui.setZero();
        const auto r = cohesive_evaluate(op, X, u, law, states);
        for (const auto& f : r.f_int) {
            REQUIRE(f[0] == 0.0);
            REQUIRE(f[1] == 0.0);
            REQUIRE(f[2] == 0.0);
        }
        REQUIRE(r.recoverable == 0.0);
        REQUIRE(r.dissipated == 0.0);
    }

    SECTION("uniform normal opening") {
        std::array<CohesiveState, 4> states{};
        const double d = 1e-5;  // below initiation
        std::array<Vec3, 8> u;
        for (int i = 0; i < 4; ++i) u[static_cast<std::size_t>(i)].setZero();
        for (int i = 4; i < 8; ++i) u[static_cast<std::size_t>(i)] = Vec3(0, 0, d);
        const auto r = cohesive_evaluate(op, X, u, law, states);
        const double tn = law.Enn * d / law.T0;
        Vec3 sum = Vec3::Zero();
        for (int i = 0; i < 4; ++i) {
            const Vec3 ftop = r.f_int[static_cast<std::size_t>(i + 4)];
            // equal and opposite across the interface, quarter of t*A per node
            REQUIRE((ftop + r.f_int[static_cast<std::size_t>(i)]).norm() == 0.0);
            REQUIRE(ftop[2] == Catch::Approx(0.25 * tn * A).epsilon(1e-12));
            REQUIRE(std::abs(ftop[0]) <= 1e-18);
            sum += ftop + r.f_int[static_cast<std::size_t>(i)];
        }
        REQUIRE(sum.norm() == 0.0);
        REQUIRE(r.recoverable == Catch::Approx(0.5 * tn * d * A).epsilon(1e-12));
        REQUIRE(r.dissipated == 0.0);
        REQUIRE(r.damage_max == 0.0);
    }

    SECTION("uniform tangential slide tracks Ess") {
        std::array<CohesiveState, 4> states{};
        const double d = 2e-5;
        std::array<Vec3, 8> u;
        for (int i = 0; i < 4; ++i) u[static_cast<std::size_t>(i)].setZero();
        for (int i = 4; i < 8; ++i) u[static_cast<std::size_t>(i)] = Vec3(d, 0, 0);
        const auto r = cohesive_evaluate(op, X, u, law, states);
        const double ts = law.Ess * d / law.T0;
        for (int i = 0; i < 4; ++i)
            REQUIRE(r.f_int[static_cast<std::size_t>(i + 4)][0] ==
                    Catch::Approx(0.25 * ts * A).epsilon(1e-12));
    }

    SECTION("driving the element to failure dissipates G per unit area") {
        std::array<CohesiveState, 4> states{};
        const double d_end = 8e-4;
        CohesiveEvalResult r{};
        std::array<Vec3, 8> u;
        for (auto& ui : u) ui.setZero();
        for (int step = 1; step <= 3000; ++step) {
            const double d = d_end * step / 3000.0;
            for (int i = 4; i < 8; ++i) u[static_cast<std::size_t>(i)] = Vec3(0, 0, d);
            r = cohesive_evaluate(op, X, u, law, states);
        }
        REQUIRE(r.damage_max == 1.0);
        REQUIRE(r.damage_mean == 1.0);
        REQUIRE(r.dissipated == Catch::Approx(law.G * A).epsilon(5e-3));
        REQUIRE(r.work_true == Catch::Approx(law.G * A).epsilon(5e-3));
        REQUIRE(r.recoverable <= 1e-12);
        for (const auto& f : r.f_int) REQUIRE(f.norm() <= 1e-12);

        // closing the failed interface still reacts in compression
        for (int i = 4; i < 8; ++i) u[static_cast<std::size_t>(i)] = Vec3(0, 0, -1e-5);
        r = cohesive_evaluate(op, X, u, law, states);
        REQUIRE(r.delta_n_min == Catch::Approx(-1e-5).epsilon(1e-12));
        REQUIRE(r.f_int[4][2] < 0.0);
    }
}
