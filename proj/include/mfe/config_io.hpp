#pragma once

// Run-configuration files: JSON with unit-suffixed keys mirroring
// SimulationConfig, plus the material and cohesive-law record arrays.
// Unknown top-level keys are rejected so typos fail loudly.

#include "mfe/cohesive.hpp"
#include "mfe/material.hpp"
#include "mfe/solver.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace mfe {

inline MaterialSpec material_from_json(const nlohmann::json& j) {
    MaterialSpec m;
    if (!j.contains("name") || !j.at("name").is_string())
        throw ConfigError("material record: 'name' is required");
    m.name = j.at("name").get<std::string>();
    const std::string model = j.value("model", std::string("ogden2"));
    if (model == "rigid") {
        m.model = MaterialModel::Rigid;
    } else if (model == "ogden2") {
        m.model = MaterialModel::Ogden2;
        auto need = [&](const char* key) {
            if (!j.contains(key))
                throw ConfigError("material '" + m.name + "': '" + std::string(key) +
                                  "' is required for model ogden2");
            return j.at(key);
        };
        const auto mu = need("mu");
        const auto alpha = need("alpha");
        if (!mu.is_array() || mu.size() != 2 || !alpha.is_array() || alpha.size() != 2)
            throw ConfigError("material '" + m.name +
                              "': 'mu' and 'alpha' must be arrays of 2 numbers");
        for (int i = 0; i < 2; ++i) {
            m.ogden.mu[static_cast<std::size_t>(i)] = mu[static_cast<std::size_t>(i)].get<double>();
            m.ogden.alpha[static_cast<std::size_t>(i)] =
                alpha[static_cast<std::size_t>(i)].get<double>();
        }
        if (j.contains("nu") && j.contains("D"))
            throw ConfigError("material '" + m.name + "': give either 'nu' or 'D', not both");
        if (j.contains("nu")) {
            m.nu = j.at("nu").get<double>();
            m.ogden.D = {d1_from_poisson(m.ogden.mu0(), *m.nu), 0.0};
        } else if (j.contains("D")) {
            const auto D = j.at("D");
            if (!D.is_array() || D.size() != 2)
                throw ConfigError("material '" + m.name + "': 'D' must be an array of 2");
            m.ogden.D = {D[0].get<double>(), D[1].get<double>()};
        } else {
            throw ConfigError("material '" + m.name + "': one of 'nu' or 'D' is required");
        }
    } else {
        throw ConfigError("material '" + m.name + "': unknown model '" + model + "'");
    }
    m.density = j.value("density", 1000.0);
    m.validate();
    return m;
}

inline nlohmann::json material_to_json(const MaterialSpec& m) {
    nlohmann::json j;
    j["name"] = m.name;
    j["density"] = m.density;
    if (m.model == MaterialModel::Rigid) {
        j["model"] = "rigid";
        return j;
    }
    j["model"] = "ogden2";
    j["mu"] = {m.ogden.mu[0], m.ogden.mu[1]};
    j["alpha"] = {m.ogden.alpha[0], m.ogden.alpha[1]};
    if (m.nu)
        j["nu"] = *m.nu;
    else
        j["D"] = {m.ogden.D[0], m.ogden.D[1]};
    return j;
}

inline CohesiveLaw law_from_json(const nlohmann::json& j) {
    CohesiveLaw law;
    if (!j.contains("name") || !j.at("name").is_string())
        throw ConfigError("cohesive law record: 'name' is required");
    law.name = j.at("name").get<std::string>();
    auto need = [&](const char* key) {
        if (!j.contains(key))
            throw ConfigError("cohesive law '" + law.name + "': '" + std::string(key) +
                              "' is required");
        return j.at(key).get<double>();
    };
    law.Enn = need("Enn_Pa");
    law.Ess = need("Ess_Pa");
    law.Ett = need("Ett_Pa");
    law.tn0 = need("tn0_Pa");
    law.ts0 = need("ts0_Pa");
    law.tt0 = need("tt0_Pa");
    law.G = need("G_N_per_m");
    law.T0 = need("T0_m");
    law.tangential_isotropic = j.value("tangential_isotropic", true);
    law.validate();
    return law;
}

inline nlohmann::json law_to_json(const CohesiveLaw& law) {
    nlohmann::json j;
    j["name"] = law.name;
    j["Enn_Pa"] = law.Enn;
    j["Ess_Pa"] = law.Ess;
    j["Ett_Pa"] = law.Ett;
    j["tn0_Pa"] = law.tn0;
    j["ts0_Pa"] = law.ts0;
    j["tt0_Pa"] = law.tt0;
    j["G_N_per_m"] = law.G;
    j["T0_m"] = law.T0;
    if (!law.tangential_isotropic) j["tangential_isotropic"] = false;
    return j;
}

inline SimulationConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ConfigError("config file: top level must be a JSON object");
    static const std::set<std::string> known{
        "materials",        "cohesive_laws",      "total_pull_m",
        "loading_rate_m_per_s", "time_compression", "loading_direction",
        "driven_set",       "fixed_set",          "hourglass_coefficient",
        "dt_safety",        "output_interval_s",  "mass_damping_per_s",
        "sample_height_m",
    };
    for (const auto& [key, val] : j.items())
        if (!known.count(key))
            throw ConfigError("config file: unknown key '" + key + "'");

    SimulationConfig c;
    if (j.contains("materials"))
        for (const auto& rec : j.at("materials")) {
            MaterialSpec m = material_from_json(rec);
            if (c.materials.count(m.name))
                throw ConfigError("config file: duplicate material '" + m.name + "'");
            c.materials.emplace(m.name, std::move(m));
        }
    if (j.contains("cohesive_laws"))
        for (const auto& rec : j.at("cohesive_laws")) {
            CohesiveLaw law = law_from_json(rec);
            if (c.laws.count(law.name))
                throw ConfigError("config file: duplicate cohesive law '" + law.name + "'");
            c.laws.emplace(law.name, std::move(law));
        }
    c.total_pull = j.value("total_pull_m", c.total_pull);
    c.loading_rate = j.value("loading_rate_m_per_s", c.loading_rate);
    c.time_compression = j.value("time_compression", c.time_compression);
    if (j.contains("loading_direction")) {
        const auto d = j.at("loading_direction");
        if (!d.is_array() || d.size() != 3)
            throw ConfigError("config file: 'loading_direction' must be 3 numbers");
        c.loading_direction = Vec3(d[0].get<double>(), d[1].get<double>(), d[2].get<double>());
    }
    c.driven_set = j.value("driven_set", c.driven_set);
    c.fixed_set = j.value("fixed_set", c.fixed_set);
    c.hourglass_coefficient = j.value("hourglass_coefficient", c.hourglass_coefficient);
    c.dt_safety = j.value("dt_safety", c.dt_safety);
    c.output_interval = j.value("output_interval_s", c.output_interval);
    c.mass_damping = j.value("mass_damping_per_s", c.mass_damping);
    c.sample_height = j.value("sample_height_m", c.sample_height);
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const SimulationConfig& c) {
    nlohmann::json j;
    auto& mats = j["materials"] = nlohmann::json::array();
    for (const auto& [name, m] : c.materials) mats.push_back(material_to_json(m));
    auto& laws = j["cohesive_laws"] = nlohmann::json::array();
    for (const auto& [name, l] : c.laws) laws.push_back(law_to_json(l));
    j["total_pull_m"] = c.total_pull;
    j["loading_rate_m_per_s"] = c.loading_rate;
    j["time_compression"] = c.time_compression;
    j["loading_direction"] = {c.loading_direction[0], c.loading_direction[1],
                              c.loading_direction[2]};
    j["driven_set"] = c.driven_set;
    j["fixed_set"] = c.fixed_set;
    j["hourglass_coefficient"] = c.hourglass_coefficient;
    j["dt_safety"] = c.dt_safety;
    j["output_interval_s"] = c.output_interval;
    j["mass_damping_per_s"] = c.mass_damping;
    j["sample_height_m"] = c.sample_height;
    return j;
}

inline SimulationConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("config file: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "': JSON parse failed: " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "': malformed field: " + e.what());
    }
}

inline void save_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("cannot open '" + path + "' for writing");
    out << j.dump(1) << "\n";
    if (!out)
        throw ConfigError("write to '" + path + "' failed");
}

} // namespace mfe
