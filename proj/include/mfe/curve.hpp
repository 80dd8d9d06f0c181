#pragma once

// Force-displacement records: sampling, linear interpolation, resampling onto
// a uniform displacement grid, and the two-column CSV round trip.

#include "mfe/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mfe {

struct ForceDisplacementCurve {
    std::vector<double> displacement; // m, non-decreasing
    std::vector<double> force;        // N
    Vec3 direction{1.0, 0.0, 0.0};    // loading direction metadata
    double nominal_rate = 0.0;        // m/s, physical loading rate metadata

    std::size_t size() const { return displacement.size(); }
    bool empty() const { return displacement.empty(); }

    void append(double d, double f) {
        if (!displacement.empty() && d < displacement.back() - 1e-15)
            throw ConfigError("curve: displacement samples must be non-decreasing");
        displacement.push_back(d);
        force.push_back(f);
    }

    void validate() const {
        if (displacement.size() != force.size())
            throw ConfigError("curve: displacement and force lengths differ");
        for (std::size_t i = 0; i < displacement.size(); ++i) {
            if (!std::isfinite(displacement[i]) || !std::isfinite(force[i]))
                throw ConfigError("curve: non-finite sample at row " + std::to_string(i));
            if (i > 0 && displacement[i] < displacement[i - 1] - 1e-15)
                throw ConfigError("curve: displacement decreases at row " + std::to_string(i));
        }
    }

    double max_displacement() const {
        return displacement.empty() ? 0.0 : displacement.back();
    }

    double peak_force() const {
        double p = 0.0;
        for (double f : force) p = std::max(p, f);
        return p;
    }

    // Linear interpolation. Constant extrapolation beyond the recorded range.
    double interpolate(double d) const {
        if (displacement.empty())
            throw ConfigError("curve: cannot interpolate an empty curve");
        if (d <= displacement.front()) return force.front();
        if (d >= displacement.back()) return force.back();
        auto it = std::upper_bound(displacement.begin(), displacement.end(), d);
        const std::size_t hi = static_cast<std::size_t>(it - displacement.begin());
        const std::size_t lo = hi - 1;
        const double span = displacement[hi] - displacement[lo];
        if (span <= 0.0) return force[hi];
        const double w = (d - displacement[lo]) / span;
        return (1.0 - w) * force[lo] + w * force[hi];
    }

    ForceDisplacementCurve resample_uniform(double step) const {
        if (!(step > 0.0))
            throw ConfigError("curve: resample step must be positive");
        ForceDisplacementCurve out;
        out.direction = direction;
        out.nominal_rate = nominal_rate;
        if (displacement.empty()) return out;
        const double d_end = displacement.back();
        const std::size_t n = static_cast<std::size_t>(std::floor(d_end / step + 1e-9));
        out.displacement.reserve(n + 1);
        out.force.reserve(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            const double d = static_cast<double>(i) * step;
            out.displacement.push_back(d);
            out.force.push_back(interpolate(d));
        }
        return out;
    }
};

inline std::string curve_to_csv(const ForceDisplacementCurve& c) {
    std::string out = "displacement_m,force_N\n";
    char buf[80];
    for (std::size_t i = 0; i < c.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", c.displacement[i], c.force[i]);
        out += buf;
    }
    return out;
}

inline ForceDisplacementCurve curve_from_csv_text(const std::string& text) {
    ForceDisplacementCurve c;
    std::istringstream in(text);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++row;
        if (line.empty()) continue;
        if (row == 1 && line.find("displacement") != std::string::npos) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ConfigError("curve csv: row " + std::to_string(row) +
                              " is not 'displacement,force'");
        try {
            const double d = std::stod(line.substr(0, comma));
            const double f = std::stod(line.substr(comma + 1));
            c.displacement.push_back(d);
            c.force.push_back(f);
        } catch (const std::exception&) {
            throw ConfigError("curve csv: row " + std::to_string(row) +
                              " has a malformed number");
        }
    }
    c.validate();
    return c;
}

inline void save_curve_csv(const ForceDisplacementCurve& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("curve csv: cannot open '" + path + "' for writing");
    out << curve_to_csv(c);
    if (!out)
        throw ConfigError("curve csv: write to '" + path + "' failed");
}

inline ForceDisplacementCurve load_curve_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("curve csv: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return curve_from_csv_text(buf.str());
}

} // namespace mfe
