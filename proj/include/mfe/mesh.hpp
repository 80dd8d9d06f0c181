#pragma once

// Hexahedral mesh container, structured sample generator, and quality checks.
//
// Hex connectivity: nodes 0-3 form the bottom face, counterclockwise about the
// outward +z of the element, nodes 4-7 the top face with node i+4 above node i.
// Cohesive elements reuse the same layout: 0-3 on the lower side of the
// interface, 4-7 the paired nodes on the upper side.

#include "mfe/core.hpp"
#include "mfe/material.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mfe {

struct Node {
    std::int64_t id = 0;
    Vec3 position = Vec3::Zero();
};

struct HexElement {
    std::array<std::int64_t, 8> conn{};
    std::string material;
};

struct CohesiveElement {
    std::array<std::int64_t, 8> conn{};
    std::string law;
    double reference_thickness = 0.0; // m, 0 for coincident node pairs
};

struct Mesh {
    std::vector<Node> nodes;
    std::vector<HexElement> hexes;
    std::vector<CohesiveElement> cohesives;
    std::map<std::string, std::vector<std::int64_t>> node_sets; // sorted ids
    std::map<std::string, MaterialSpec> materials;              // advisory records

    const std::vector<std::int64_t>& node_set(const std::string& name) const {
        auto it = node_sets.find(name);
        if (it == node_sets.end())
            throw MeshError("mesh: node set '" + name + "' does not exist");
        return it->second;
    }
};

namespace detail {

// Corner -> (three adjacent corners) ordered so the edge triple product is
// positive on a right-handed reference hex.
inline constexpr std::array<std::array<int, 3>, 8> kCornerNeighbors{{
    {1, 3, 4},
    {2, 0, 5},
    {3, 1, 6},
    {0, 2, 7},
    {7, 5, 0},
    {4, 6, 1},
    {5, 7, 2},
    {6, 4, 3},
}};

} // namespace detail

// Minimum over the 8 corners of the triple product of unit edge vectors. +1
// for a cuboid, <= 0 once a corner inverts. Degenerate (zero-length) edges
// yield 0. Each edge is normalized before the product: sqrt(x*x) round-trips
// exactly in binary floating point, so right-angled corners score exactly 1
// at any edge length, which dividing one rounded product by another does not.
inline double scaled_jacobian(const std::array<Vec3, 8>& x) {
    double min_sj = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 8; ++c) {
        const auto& nb = detail::kCornerNeighbors[c];
        const Vec3 e0 = x[nb[0]] - x[c];
        const Vec3 e1 = x[nb[1]] - x[c];
        const Vec3 e2 = x[nb[2]] - x[c];
        double sj = 0.0;
        if (e0.norm() > 0.0 && e1.norm() > 0.0 && e2.norm() > 0.0) {
            sj = e0.normalized().dot(e1.normalized().cross(e2.normalized()));
            sj = std::clamp(sj, -1.0, 1.0);
        }
        min_sj = std::min(min_sj, sj);
    }
    return min_sj;
}

inline std::array<Vec3, 8> gather_positions(const Mesh& mesh, const std::array<std::int64_t, 8>& conn) {
    std::array<Vec3, 8> x;
    for (int i = 0; i < 8; ++i)
        x[i] = mesh.nodes[static_cast<std::size_t>(conn[i])].position;
    return x;
}

inline double scaled_jacobian(const Mesh& mesh, const HexElement& e) {
    return scaled_jacobian(gather_positions(mesh, e.conn));
}

struct QualityReport {
    std::size_t element_count = 0;
    double min = 1.0;
    double mean = 0.0;
    std::array<std::size_t, 20> histogram{}; // bins over [-1, 1], width 0.1
    double threshold = 0.2;
    std::vector<std::size_t> below_threshold; // element indices
};

inline QualityReport mesh_quality(const Mesh& mesh, double threshold = 0.2) {
    QualityReport r;
    r.threshold = threshold;
    r.element_count = mesh.hexes.size();
    if (mesh.hexes.empty()) {
        r.min = 0.0;
        return r;
    }
    double sum = 0.0;
    r.min = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < mesh.hexes.size(); ++e) {
        const double sj = scaled_jacobian(mesh, mesh.hexes[e]);
        sum += sj;
        r.min = std::min(r.min, sj);
        const int bin = std::clamp(static_cast<int>((sj + 1.0) / 0.1), 0, 19);
        ++r.histogram[static_cast<std::size_t>(bin)];
        if (sj < threshold)
            r.below_threshold.push_back(e);
    }
    r.mean = sum / static_cast<double>(mesh.hexes.size());
    return r;
}

// Structural validation. Throws MeshError naming the first offender.
inline void validate(const Mesh& mesh) {
    const std::int64_t n = static_cast<std::int64_t>(mesh.nodes.size());
    for (std::int64_t i = 0; i < n; ++i) {
        const Node& nd = mesh.nodes[static_cast<std::size_t>(i)];
        if (nd.id != i)
            throw MeshError("mesh: node ids must be dense and ordered; slot " +
                            std::to_string(i) + " holds id " + std::to_string(nd.id));
        if (!nd.position.allFinite())
            throw MeshError("mesh: node " + std::to_string(i) + " has a non-finite position");
    }
    auto check_conn = [&](const std::array<std::int64_t, 8>& conn, const std::string& what,
                          std::size_t idx) {
        for (int i = 0; i < 8; ++i) {
            if (conn[i] < 0 || conn[i] >= n)
                throw MeshError("mesh: " + what + " " + std::to_string(idx) +
                                " references node " + std::to_string(conn[i]) +
                                " outside [0, " + std::to_string(n) + ")");
            for (int j = 0; j < i; ++j)
                if (conn[i] == conn[j])
                    throw MeshError("mesh: " + what + " " + std::to_string(idx) +
                                    " repeats node " + std::to_string(conn[i]));
        }
    };
    for (std::size_t e = 0; e < mesh.hexes.size(); ++e) {
        check_conn(mesh.hexes[e].conn, "hex", e);
        if (mesh.hexes[e].material.empty())
            throw MeshError("mesh: hex " + std::to_string(e) + " has an empty material name");
    }
    for (std::size_t e = 0; e < mesh.cohesives.size(); ++e) {
        check_conn(mesh.cohesives[e].conn, "cohesive", e);
        if (mesh.cohesives[e].law.empty())
            throw MeshError("mesh: cohesive " + std::to_string(e) + " has an empty law name");
    }
    for (const auto& [name, ids] : mesh.node_sets) {
        if (name.empty())
            throw MeshError("mesh: node set with empty name");
        for (std::int64_t id : ids)
            if (id < 0 || id >= n)
                throw MeshError("mesh: node set '" + name + "' references node " +
                                std::to_string(id) + " outside [0, " + std::to_string(n) + ")");
    }
}

struct LayerSpec {
    std::string material;
    double thickness = 0.0; // m
    bool rigid = false;
};

namespace detail {

inline std::int64_t snap_count(double length, double h, const std::string& what) {
    const double ratio = length / h;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
        throw MeshError("mesh generation: " + what + " (" + std::to_string(length) +
                        " m) is not an integer multiple of the element size");
    return static_cast<std::int64_t>(rounded);
}

} // namespace detail

// Structured block of identical cubes: dims = (x, y, z) extent in metres,
// layers stacked along z in order. An optional cohesive plane splits the node
// grid at a layer interface with a sheet of zero-thickness cohesive elements.
// Node sets: "bottom" (z = 0), "top" (z = dims.z), "skull" (nodes of rigid
// layers, when present).
inline Mesh generate_sample_mesh(const Vec3& dims, double element_size,
                                 const std::vector<LayerSpec>& layers,
                                 std::optional<double> cohesive_plane = std::nullopt,
                                 const std::string& law_name = "interface") {
    if (!(element_size > 0.0))
        throw MeshError("mesh generation: element size must be positive");
    for (int k = 0; k < 3; ++k)
        if (!(dims[k] > 0.0))
            throw MeshError("mesh generation: dimensions must be positive");
    if (layers.empty())
        throw MeshError("mesh generation: at least one layer is required");

    const std::int64_t nx = detail::snap_count(dims[0], element_size, "x extent");
    const std::int64_t ny = detail::snap_count(dims[1], element_size, "y extent");
    std::vector<std::int64_t> layer_cells;
    std::int64_t nz = 0;
    double total = 0.0;
    for (const auto& L : layers) {
        if (!(L.thickness > 0.0))
            throw MeshError("mesh generation: layer '" + L.material +
                            "' must have positive thickness");
        layer_cells.push_back(detail::snap_count(L.thickness, element_size,
                                                 "layer '" + L.material + "' thickness"));
        nz += layer_cells.back();
        total += L.thickness;
    }
    if (std::abs(total - dims[2]) > 1e-9 * dims[2])
        throw MeshError("mesh generation: layer thicknesses sum to " + std::to_string(total) +
                        " m, expected " + std::to_string(dims[2]) + " m");

    // Locate the cohesive plane on a layer interface.
    std::int64_t plane_k = -1; // node-layer index of the split
    if (cohesive_plane) {
        double z = 0.0;
        std::int64_t k = 0;
        for (std::size_t li = 0; li + 1 < layers.size(); ++li) {
            z += layers[li].thickness;
            k += layer_cells[li];
            if (std::abs(*cohesive_plane - z) <= 1e-9 * dims[2]) {
                plane_k = k;
                break;
            }
        }
        if (plane_k < 0)
            throw MeshError("mesh generation: cohesive plane at " +
                            std::to_string(*cohesive_plane) +
                            " m does not coincide with an interior layer interface");
    }

    Mesh mesh;
    const std::int64_t npx = nx + 1, npy = ny + 1, npz = nz + 1;
    const std::int64_t n_base = npx * npy * npz;
    auto base_id = [&](std::int64_t ix, std::int64_t iy, std::int64_t iz) {
        return (iz * npy + iy) * npx + ix;
    };
    mesh.nodes.reserve(static_cast<std::size_t>(n_base + (plane_k >= 0 ? npx * npy : 0)));
    for (std::int64_t iz = 0; iz < npz; ++iz)
        for (std::int64_t iy = 0; iy < npy; ++iy)
            for (std::int64_t ix = 0; ix < npx; ++ix)
                mesh.nodes.push_back({base_id(ix, iy, iz),
                                      Vec3(static_cast<double>(ix) * element_size,
                                           static_cast<double>(iy) * element_size,
                                           static_cast<double>(iz) * element_size)});
    // Duplicate the split plane; elements above reference the copies.
    auto dup_id = [&](std::int64_t ix, std::int64_t iy) { return n_base + iy * npx + ix; };
    if (plane_k >= 0)
        for (std::int64_t iy = 0; iy < npy; ++iy)
            for (std::int64_t ix = 0; ix < npx; ++ix)
                mesh.nodes.push_back({dup_id(ix, iy),
                                      mesh.nodes[static_cast<std::size_t>(
                                                     base_id(ix, iy, plane_k))].position});

    auto node_ref = [&](std::int64_t ix, std::int64_t iy, std::int64_t iz, bool above_plane) {
        if (plane_k >= 0 && iz == plane_k && above_plane)
            return dup_id(ix, iy);
        return base_id(ix, iy, iz);
    };

    std::set<std::int64_t> skull_nodes;
    std::int64_t ez0 = 0;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& L = layers[li];
        for (std::int64_t ez = ez0; ez < ez0 + layer_cells[li]; ++ez) {
            const bool above = plane_k >= 0 && ez >= plane_k;
            for (std::int64_t ey = 0; ey < ny; ++ey)
                for (std::int64_t ex = 0; ex < nx; ++ex) {
                    HexElement h;
                    h.material = L.material;
                    h.conn = {node_ref(ex, ey, ez, above),
                              node_ref(ex + 1, ey, ez, above),
                              node_ref(ex + 1, ey + 1, ez, above),
                              node_ref(ex, ey + 1, ez, above),
                              node_ref(ex, ey, ez + 1, above),
                              node_ref(ex + 1, ey, ez + 1, above),
                              node_ref(ex + 1, ey + 1, ez + 1, above),
                              node_ref(ex, ey + 1, ez + 1, above)};
                    mesh.hexes.push_back(h);
                    if (L.rigid)
                        for (auto id : h.conn)
                            skull_nodes.insert(id);
                }
        }
        ez0 += layer_cells[li];
        MaterialSpec ms;
        ms.name = L.material;
        ms.model = L.rigid ? MaterialModel::Rigid : MaterialModel::Ogden2;
        mesh.materials.emplace(L.material, ms);
    }

    if (plane_k >= 0)
        for (std::int64_t ey = 0; ey < ny; ++ey)
            for (std::int64_t ex = 0; ex < nx; ++ex) {
                CohesiveElement c;
                c.law = law_name;
                c.conn = {base_id(ex, ey, plane_k),     base_id(ex + 1, ey, plane_k),
                          base_id(ex + 1, ey + 1, plane_k), base_id(ex, ey + 1, plane_k),
                          dup_id(ex, ey),               dup_id(ex + 1, ey),
                          dup_id(ex + 1, ey + 1),       dup_id(ex, ey + 1)};
                mesh.cohesives.push_back(c);
            }

    std::vector<std::int64_t> bottom, top;
    for (std::int64_t iy = 0; iy < npy; ++iy)
        for (std::int64_t ix = 0; ix < npx; ++ix) {
            bottom.push_back(base_id(ix, iy, 0));
            top.push_back(base_id(ix, iy, nz));
        }
    std::sort(bottom.begin(), bottom.end());
    std::sort(top.begin(), top.end());
    mesh.node_sets["bottom"] = std::move(bottom);
    mesh.node_sets["top"] = std::move(top);
    if (!skull_nodes.empty())
        mesh.node_sets["skull"] = std::vector<std::int64_t>(skull_nodes.begin(),
                                                            skull_nodes.end());
    validate(mesh);
    return mesh;
}

} // namespace mfe
