#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "osch/action.hpp"
#include "osch/control.hpp"
#include "osch/experiments.hpp"
#include "osch/limit.hpp"
#include "osch/sde.hpp"

namespace osch {

// ---------------------------------------------------------------------------
// Deterministic text output
// ---------------------------------------------------------------------------

/// Shortest exact decimal for a double (round-trips, deterministic).
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[32];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        std::sscanf(shorter, "%lf", &back);
        if (back == v) return shorter;
    }
    return buf;
}

inline void write_file(const std::string& path, const std::string& content, bool gzip = false) {
    if (gzip) {
        gzFile gz = gzopen((path + ".gz").c_str(), "wb9");
        if (!gz) throw std::runtime_error("cannot open for writing: " + path + ".gz");
        if (gzwrite(gz, content.data(), static_cast<unsigned>(content.size())) !=
            static_cast<int>(content.size())) {
            gzclose(gz);
            throw std::runtime_error("gzip write failed: " + path + ".gz");
        }
        gzclose(gz);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
}

inline std::string csv_document(const std::vector<std::string>& header,
                                const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        out += header[i];
        out += i + 1 < header.size() ? ',' : '\n';
    }
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out += format_double(row[i]);
            out += i + 1 < row.size() ? ',' : '\n';
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Git-style content hash (SHA-1 over a blob header + payload)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string sha1_hex(const std::string& data) {
    auto rol = [](std::uint32_t v, int s) { return (v << s) | (v >> (32 - s)); };
    std::uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
    std::string msg = data;
    const std::uint64_t bitlen = static_cast<std::uint64_t>(msg.size()) * 8;
    msg.push_back(static_cast<char>(0x80));
    while (msg.size() % 64 != 56) msg.push_back('\0');
    for (int i = 7; i >= 0; --i) msg.push_back(static_cast<char>((bitlen >> (8 * i)) & 0xFF));
    for (std::size_t chunk = 0; chunk < msg.size(); chunk += 64) {
        std::uint32_t w[80];
        for (int i = 0; i < 16; ++i) {
            w[i] = (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * i])) << 24) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * i + 1])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * i + 2])) << 8) |
                   static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * i + 3]));
        }
        for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int i = 0; i < 80; ++i) {
            std::uint32_t f, k;
            if (i < 20) { f = (b & c) | (~b & d); k = 0x5A827999u; }
            else if (i < 40) { f = b ^ c ^ d; k = 0x6ED9EBA1u; }
            else if (i < 60) { f = (b & c) | (b & d) | (c & d); k = 0x8F1BBCDCu; }
            else { f = b ^ c ^ d; k = 0xCA62C1D6u; }
            const std::uint32_t tmp = rol(a, 5) + f + e + k + w[i];
            e = d; d = c; c = rol(b, 30); b = a; a = tmp;
        }
        h[0] += a; h[1] += b; h[2] += c; h[3] += d; h[4] += e;
    }
    char hex[41];
    std::snprintf(hex, sizeof(hex), "%08x%08x%08x%08x%08x", h[0], h[1], h[2], h[3], h[4]);
    return hex;
}

} // namespace detail

inline std::string git_blob_hash(const std::string& content) {
    return detail::sha1_hex("blob " + std::to_string(content.size()) + '\0' + content);
}

// ---------------------------------------------------------------------------
// JSON views of result types
// ---------------------------------------------------------------------------

inline nlohmann::json state_json(const State& x) {
    nlohmann::json arr = nlohmann::json::array();
    for (int i = 0; i < x.size(); ++i) arr.push_back(x[i]);
    return arr;
}

inline nlohmann::json complex_json(const Complex& z) {
    return nlohmann::json{{"re", z.real()}, {"im", z.imag()}};
}

inline nlohmann::json equilibrium_json(const Equilibrium& eq) {
    nlohmann::json roots = nlohmann::json::array();
    for (const auto& z : eq.roots) roots.push_back(complex_json(z));
    return nlohmann::json{{"point", state_json(eq.point)},
                          {"rho", eq.rho},
                          {"roots", roots},
                          {"unstable_count", eq.unstable_count},
                          {"assumption4", eq.assumption4}};
}

inline nlohmann::json orbit_json(const Orbit& orb, const std::string& sample_csv) {
    nlohmann::json mult = nlohmann::json::array();
    for (const auto& z : orb.floquet) mult.push_back(complex_json(z));
    return nlohmann::json{{"anchor", state_json(orb.anchor)},
                          {"period", orb.period},
                          {"floquet", mult},
                          {"stable", orb.stable},
                          {"closure_residual", orb.closure_residual},
                          {"samples_csv", sample_csv}};
}

inline nlohmann::json record_json(const StudyRecord& r) {
    return nlohmann::json{{"key", r.key},
                          {"estimate", r.estimate},
                          {"std_error", r.std_error},
                          {"replicas", r.replicas},
                          {"flagged", r.flagged}};
}

inline nlohmann::json fit_json(const LinearFit& f) {
    return nlohmann::json{{"slope", f.slope},
                          {"intercept", f.intercept},
                          {"slope_se", f.slope_se},
                          {"r_squared", f.r_squared},
                          {"points", f.n}};
}

inline std::string control_csv(const Control& ctl) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < ctl.values.size(); ++i) {
        rows.push_back({static_cast<double>(i) * ctl.dt, ctl.values[i](0), ctl.values[i](1)});
    }
    return csv_document({"t", "h1dot", "h2dot"}, rows);
}

inline std::string path_csv(const Path& path) {
    std::vector<std::string> header{"t"};
    const int n = path.states.empty() ? 0 : static_cast<int>(path.states.front().size());
    for (int i = 1; i <= n; ++i) header.push_back("x" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    rows.reserve(path.states.size());
    for (std::size_t k = 0; k < path.states.size(); ++k) {
        std::vector<double> row{path.time(k)};
        for (int i = 0; i < n; ++i) row.push_back(path.states[k][i]);
        rows.push_back(std::move(row));
    }
    return csv_document(header, rows);
}

inline std::string events_csv(const EventRecord& ev) {
    std::vector<std::vector<double>> rows;
    std::size_t i = 0, j = 0;
    while (i < ev.times1.size() || j < ev.times2.size()) {
        const bool take1 = j >= ev.times2.size() ||
                           (i < ev.times1.size() && ev.times1[i] <= ev.times2[j]);
        if (take1) {
            rows.push_back({1.0, ev.times1[i++]});
        } else {
            rows.push_back({2.0, ev.times2[j++]});
        }
    }
    return csv_document({"population", "time"}, rows);
}

} // namespace osch
