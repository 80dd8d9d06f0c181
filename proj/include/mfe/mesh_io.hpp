#pragma once

// JSON mesh persistence. Node ids are implicit array indices; every field is
// validated on load so a broken file fails with a message naming the culprit.

#include "mfe/mesh.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace mfe {

inline nlohmann::json mesh_to_json(const Mesh& mesh) {
    nlohmann::json j;
    j["units"] = "m";
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const auto& n : mesh.nodes)
        nodes.push_back({n.position[0], n.position[1], n.position[2]});
    auto& hexes = j["hexes"] = nlohmann::json::array();
    for (const auto& h : mesh.hexes) {
        nlohmann::json e;
        e["conn"] = h.conn;
        e["material"] = h.material;
        hexes.push_back(e);
    }
    auto& coh = j["cohesives"] = nlohmann::json::array();
    for (const auto& c : mesh.cohesives) {
        nlohmann::json e;
        e["conn"] = c.conn;
        e["law"] = c.law;
        if (c.reference_thickness != 0.0)
            e["reference_thickness"] = c.reference_thickness;
        coh.push_back(e);
    }
    auto& sets = j["node_sets"] = nlohmann::json::object();
    for (const auto& [name, ids] : mesh.node_sets)
        sets[name] = ids;
    return j;
}

inline Mesh mesh_from_json(const nlohmann::json& j) {
    Mesh mesh;
    if (!j.is_object())
        throw MeshError("mesh file: top level must be a JSON object");
    if (!j.contains("units") || j.at("units") != "m")
        throw MeshError("mesh file: missing or unsupported 'units' (expected \"m\")");
    if (!j.contains("nodes") || !j.at("nodes").is_array())
        throw MeshError("mesh file: 'nodes' array is required");

    std::int64_t id = 0;
    for (const auto& row : j.at("nodes")) {
        if (!row.is_array() || row.size() != 3)
            throw MeshError("mesh file: node " + std::to_string(id) +
                            " must be an array of 3 coordinates");
        mesh.nodes.push_back({id, Vec3(row[0].get<double>(), row[1].get<double>(),
                                       row[2].get<double>())});
        ++id;
    }

    auto read_conn = [](const nlohmann::json& e, const std::string& what, std::size_t idx) {
        if (!e.contains("conn") || !e.at("conn").is_array() || e.at("conn").size() != 8)
            throw MeshError("mesh file: " + what + " " + std::to_string(idx) +
                            " needs a 'conn' array of 8 node ids");
        std::array<std::int64_t, 8> conn{};
        for (int i = 0; i < 8; ++i)
            conn[static_cast<std::size_t>(i)] = e.at("conn")[static_cast<std::size_t>(i)]
                                                    .get<std::int64_t>();
        return conn;
    };

    if (j.contains("hexes")) {
        std::size_t idx = 0;
        for (const auto& e : j.at("hexes")) {
            HexElement h;
            h.conn = read_conn(e, "hex", idx);
            if (!e.contains("material") || !e.at("material").is_string())
                throw MeshError("mesh file: hex " + std::to_string(idx) +
                                " needs a 'material' name");
            h.material = e.at("material").get<std::string>();
            mesh.hexes.push_back(h);
            ++idx;
        }
    }
    if (j.contains("cohesives")) {
        std::size_t idx = 0;
        for (const auto& e : j.at("cohesives")) {
            CohesiveElement c;
            c.conn = read_conn(e, "cohesive", idx);
            if (!e.contains("law") || !e.at("law").is_string())
                throw MeshError("mesh file: cohesive " + std::to_string(idx) +
                                " needs a 'law' name");
            c.law = e.at("law").get<std::string>();
            if (e.contains("reference_thickness"))
                c.reference_thickness = e.at("reference_thickness").get<double>();
            mesh.cohesives.push_back(c);
            ++idx;
        }
    }
    if (j.contains("node_sets")) {
        if (!j.at("node_sets").is_object())
            throw MeshError("mesh file: 'node_sets' must be an object");
        for (const auto& [name, ids] : j.at("node_sets").items()) {
            std::vector<std::int64_t> v;
            for (const auto& e : ids)
                v.push_back(e.get<std::int64_t>());
            mesh.node_sets[name] = std::move(v);
        }
    }
    validate(mesh);
    return mesh;
}

inline std::string mesh_to_string(const Mesh& mesh) {
    return mesh_to_json(mesh).dump(1) + "\n";
}

inline Mesh mesh_from_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw MeshError(std::string("mesh file: JSON parse failed: ") + e.what());
    }
    try {
        return mesh_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw MeshError(std::string("mesh file: malformed field: ") + e.what());
    }
}

inline void save_mesh(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw MeshError("mesh file: cannot open '" + path + "' for writing");
    out << mesh_to_string(mesh);
    if (!out)
        throw MeshError("mesh file: write to '" + path + "' failed");
}

inline Mesh load_mesh(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw MeshError("mesh file: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return mesh_from_string(buf.str());
}

} // namespace mfe
