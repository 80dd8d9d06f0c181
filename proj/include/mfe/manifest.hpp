#pragma once

// Reproducibility manifest written next to every CLI output. Records the tool
// version, the resolved inputs with content digests, the seed and thread
// count, so a run can be traced back without trusting shell history.

#include "mfe/core.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace mfe {

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string digest_hex(std::uint64_t h) {
    static const char* hexd = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = hexd[h & 0xf];
        h >>= 4;
    }
    return s;
}

inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for digesting");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return digest_hex(fnv1a64(bytes.data(), bytes.size()));
}

struct ManifestEntry {
    std::string path;
    std::string digest;
};

struct RunManifest {
    std::string command;
    std::vector<ManifestEntry> inputs;
    std::vector<ManifestEntry> outputs;
    nlohmann::json parameters = nlohmann::json::object();
    std::optional<std::uint64_t> seed;
    int threads = 1;
    double duration_seconds = 0.0; // wall clock; the one field allowed to vary between runs

    void add_input(const std::string& path) { inputs.push_back({path, file_digest(path)}); }
    void add_output(const std::string& path) { outputs.push_back({path, file_digest(path)}); }
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    nlohmann::json j;
    j["tool"] = "meningefem";
    j["version"] = kVersion;
    j["command"] = m.command;
    j["inputs"] = nlohmann::json::array();
    for (const auto& e : m.inputs) j["inputs"].push_back({{"path", e.path}, {"digest", e.digest}});
    j["outputs"] = nlohmann::json::array();
    for (const auto& e : m.outputs)
        j["outputs"].push_back({{"path", e.path}, {"digest", e.digest}});
    j["parameters"] = m.parameters;
    if (m.seed) j["seed"] = *m.seed;
    j["threads"] = m.threads;
    j["duration_s"] = m.duration_seconds;
    return j;
}

inline void save_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << manifest_to_json(m).dump(1) << "\n";
    if (!out) throw Error("failed writing '" + path + "'");
}

} // namespace mfe
