#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "osch/model.hpp"

namespace osch {

using json = nlohmann::json;

namespace detail {

// Inserts a dotted key ("f1.fmin") into a nested json object.
inline void insert_dotted(json& root, const std::string& key, const json& value) {
    json* node = &root;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = key.find('.', start);
        if (dot == std::string::npos) {
            (*node)[key.substr(start)] = value;
            return;
        }
        node = &(*node)[key.substr(start, dot - start)];
        start = dot + 1;
    }
}

inline json parse_scalar(const std::string& raw) {
    try {
        return json::parse(raw);
    } catch (const json::parse_error&) {
        return json(raw); // bare string value
    }
}

} // namespace detail

/// Parses a config document: JSON if it starts with '{', otherwise a flat
/// `key = value` text format with dotted keys for nesting. Lines starting
/// with '#' are comments.
inline json parse_config(const std::string& text) {
    const std::size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        return json::parse(text);
    }
    json root = json::object();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t h = line.find('#');
        if (h != std::string::npos) line.erase(h);
        std::size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw validation_error({"config line " + std::to_string(lineno) + ": expected key = value"});
        }
        std::string key = line.substr(a, eq - a);
        key.erase(key.find_last_not_of(" \t") + 1);
        std::string val = line.substr(eq + 1);
        const std::size_t b = val.find_first_not_of(" \t");
        if (b == std::string::npos) {
            throw validation_error({"config line " + std::to_string(lineno) + ": missing value"});
        }
        val = val.substr(b);
        val.erase(val.find_last_not_of(" \t\r") + 1);
        detail::insert_dotted(root, key, detail::parse_scalar(val));
    }
    return root;
}

namespace detail {

inline double get_num(const json& cfg, const std::string& key, std::vector<std::string>& bad) {
    if (!cfg.contains(key)) {
        bad.push_back("missing field: " + key);
        return 0.0;
    }
    if (!cfg.at(key).is_number()) {
        bad.push_back("field is not a number: " + key);
        return 0.0;
    }
    return cfg.at(key).get<double>();
}

inline RateSpec get_rate(const json& cfg, const std::string& key, std::vector<std::string>& bad) {
    RateSpec f;
    if (!cfg.contains(key) || !cfg.at(key).is_object()) {
        bad.push_back("missing rate-function block: " + key);
        return f;
    }
    const json& sub = cfg.at(key);
    std::vector<std::string> sub_bad;
    f.fmin = get_num(sub, "fmin", sub_bad);
    f.fmax = get_num(sub, "fmax", sub_bad);
    f.slope = get_num(sub, "slope", sub_bad);
    f.center = get_num(sub, "center", sub_bad);
    for (const auto& msg : sub_bad) bad.push_back(key + ": " + msg);
    return f;
}

} // namespace detail

/// Builds and validates a Model from a parsed config. Units: nu in 1/time,
/// slope in 1/state-unit, center in state-units, fmin/fmax in events/time.
inline Model make_model(const json& cfg) {
    std::vector<std::string> bad;
    Model m;
    m.k12.n = static_cast<int>(detail::get_num(cfg, "n1", bad));
    m.k21.n = static_cast<int>(detail::get_num(cfg, "n2", bad));
    m.k12.nu = detail::get_num(cfg, "nu1", bad);
    m.k21.nu = detail::get_num(cfg, "nu2", bad);
    m.k12.c = detail::get_num(cfg, "c1", bad);
    m.k21.c = detail::get_num(cfg, "c2", bad);
    m.p1 = detail::get_num(cfg, "p1", bad);
    m.p2 = detail::get_num(cfg, "p2", bad);
    m.f1 = detail::get_rate(cfg, "f1", bad);
    m.f2 = detail::get_rate(cfg, "f2", bad);
    if (!bad.empty()) throw validation_error(std::move(bad));
    return validate_model(m);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error({"cannot open file: " + path});
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Model load_model_file(const std::string& path) {
    return make_model(parse_config(read_file(path)));
}

/// The n1=n2=1 negative-feedback workhorse used across tests and docs.
/// Centering each sigmoid at the other population's feedback level puts the
/// equilibrium exactly at (1/2, 1/2, -1/2, -1/2) with rho = -16, so the
/// oscillation condition holds with a wide margin and the characteristic
/// roots have the closed form -1 + 2 exp(i pi (2k+1)/4).
inline Model benchmark_model() {
    Model m;
    m.k12 = {+1.0, 1.0, 1};
    m.k21 = {-1.0, 1.0, 1};
    m.f1 = {0.25, 0.75, 32.0, 0.5};
    m.f2 = {0.25, 0.75, 32.0, -0.5};
    m.p1 = m.p2 = 0.5;
    return validate_model(m);
}

inline json benchmark_config() {
    return json{{"n1", 1},
                {"n2", 1},
                {"nu1", 1.0},
                {"nu2", 1.0},
                {"c1", 1.0},
                {"c2", -1.0},
                {"p1", 0.5},
                {"p2", 0.5},
                {"f1", {{"fmin", 0.25}, {"fmax", 0.75}, {"slope", 32.0}, {"center", 0.5}}},
                {"f2", {{"fmin", 0.25}, {"fmax", 0.75}, {"slope", 32.0}, {"center", -0.5}}}};
}

} // namespace osch
