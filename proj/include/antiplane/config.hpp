#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "antiplane/assembly.hpp"
#include "antiplane/vi_solver.hpp"

namespace antiplane {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Minimal TOML subset: [section] headers, `key = value` lines, values are
// booleans, numbers, quoted strings, or flat arrays of numbers. Enough for the
// run configuration; no nested tables.
namespace toml {

struct Value {
    std::variant<bool, double, std::string, std::vector<double>> v;

    bool as_bool(const std::string& key) const {
        if (auto* b = std::get_if<bool>(&v)) return *b;
        throw ConfigError("key '" + key + "' must be a boolean");
    }
    double as_number(const std::string& key) const {
        if (auto* d = std::get_if<double>(&v)) return *d;
        throw ConfigError("key '" + key + "' must be a number");
    }
    const std::string& as_string(const std::string& key) const {
        if (auto* s = std::get_if<std::string>(&v)) return *s;
        throw ConfigError("key '" + key + "' must be a string");
    }
    const std::vector<double>& as_array(const std::string& key) const {
        if (auto* a = std::get_if<std::vector<double>>(&v)) return *a;
        throw ConfigError("key '" + key + "' must be an array of numbers");
    }
};

using Table = std::map<std::string, std::map<std::string, Value>>;

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline Value parse_value(std::string text, int line) {
    text = trim(text);
    if (text.empty()) throw ConfigError("line " + std::to_string(line) + ": missing value");
    if (text == "true") return Value{true};
    if (text == "false") return Value{false};
    if (text.front() == '"') {
        if (text.size() < 2 || text.back() != '"')
            throw ConfigError("line " + std::to_string(line) + ": unterminated string");
        return Value{text.substr(1, text.size() - 2)};
    }
    if (text.front() == '[') {
        if (text.back() != ']')
            throw ConfigError("line " + std::to_string(line) + ": unterminated array");
        std::vector<double> arr;
        std::string inner = text.substr(1, text.size() - 2);
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            try {
                std::size_t used = 0;
                arr.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("line " + std::to_string(line) + ": bad array element '" +
                                  item + "'");
            }
        }
        return Value{arr};
    }
    try {
        std::size_t used = 0;
        const double d = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return Value{d};
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": cannot parse value '" + text + "'");
    }
}

inline Table parse(std::istream& in) {
    Table table;
    std::string section = "";
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        // strip comments outside strings
        bool in_str = false;
        std::string code;
        for (char ch : raw) {
            if (ch == '"') in_str = !in_str;
            if (ch == '#' && !in_str) break;
            code += ch;
        }
        code = trim(code);
        if (code.empty()) continue;
        if (code.front() == '[') {
            if (code.back() != ']')
                throw ConfigError("line " + std::to_string(line) + ": malformed section header");
            section = trim(code.substr(1, code.size() - 2));
            continue;
        }
        const auto eq = code.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
        const std::string key = trim(code.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(line) + ": empty key");
        table[section][key] = parse_value(code.substr(eq + 1), line);
    }
    return table;
}

inline Table parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in);
}

}  // namespace toml

inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// A built-in space x time data family.
struct DataFamily {
    std::string family = "constant";  // constant | ramp | sinusoid
    double amp = 0.0;
    double kx = 1.0, ky = 1.0, omega = 1.0;

    ScalarData make() const {
        const double a = amp, kx_ = kx, ky_ = ky, om = omega;
        if (family == "constant") return [a](double, double, double) { return a; };
        if (family == "ramp") return [a](double, double, double t) { return a * t; };
        if (family == "sinusoid")
            return [=](double x, double y, double t) {
                return a * std::cos(M_PI * kx_ * x) * std::cos(M_PI * ky_ * y) *
                       std::cos(om * t);
            };
        throw ConfigError("unknown data family '" + family + "'");
    }
};

struct RunConfig {
    // mesh
    std::string mesh_source = "generated";  // generated | file
    std::string mesh_path;
    double width = 1.0, height = 1.0;
    int nx = 8, ny = 8;
    TaggingRule tagging = TaggingRule::standard();

    // material (single-region constants)
    double alpha = 1.0, mu = 1.0, e = 0.0, beta = 1.0;
    Eigen::Vector2d Me{0.0, 0.0};
    Eigen::Matrix2d K = Eigen::Matrix2d::Identity();
    double ke = 0.0;

    // friction
    std::string friction_family = "tresca";
    double r0 = 0.0, fr_a = 0.0, fr_b = 0.0, fr_rmax = 1e300;
    bool heating = false;
    bool strict_q2_zero = false;

    // time
    double T = 1.0;
    int N = 10;

    // solver
    SolverOptions solver;
    std::string theta_coupling = "lagged";  // lagged | iterate
    double coupling_tol = 1e-10;
    int max_coupling_iters = 50;

    // output
    std::string csv_path = "run.csv";
    std::string vtk_dir;
    int snapshot_stride = 0;  // 0 disables snapshots

    // data
    DataFamily f0, f2, q0, q2, p, theta_R;
    unsigned seed = 1234;

    std::uint64_t config_hash = 0;

    FrictionLaw make_law() const {
        FrictionLaw law;
        if (friction_family == "tresca") law = FrictionLaw::tresca(r0);
        else if (friction_family == "affine_saturating")
            law = FrictionLaw::affine_saturating(fr_a, fr_b);
        else if (friction_family == "linear_capped")
            law = FrictionLaw::linear_capped(fr_a, fr_b, fr_rmax);
        else
            throw ConfigError("unknown friction family '" + friction_family + "'");
        if (heating) law.enable_heating();
        return law;
    }

    BoundaryData make_data() const {
        BoundaryData d;
        d.f0 = f0.make();
        d.f2 = f2.make();
        d.q0 = q0.make();
        d.q2 = strict_q2_zero ? BoundaryData::zero() : q2.make();
        d.p = p.make();
        d.theta_R = theta_R.make();
        return d;
    }

    Mesh make_mesh() const {
        if (mesh_source == "generated") return generate_rect_mesh(width, height, nx, ny, tagging);
        if (mesh_source == "file") return load_mesh(mesh_path);
        throw ConfigError("mesh source must be 'generated' or 'file'");
    }

    MaterialField make_material(const Mesh& mesh) const {
        return MaterialField::constant(mesh, alpha, mu, e, beta, Me, K, ke);
    }

    static RunConfig load(const std::string& path);
};

namespace detail {

inline SideTag parse_side_tag(const std::string& text) {
    SideTag tag;
    const auto colon = text.find(':');
    const std::string mech = colon == std::string::npos ? text : text.substr(0, colon);
    if (mech == "G1") tag.mech = MechTag::G1;
    else if (mech == "G2") tag.mech = MechTag::G2;
    else if (mech == "G3") tag.mech = MechTag::G3;
    else throw ConfigError("unknown mech tag '" + mech + "'");
    if (colon == std::string::npos) {
        if (tag.mech != MechTag::G3)
            throw ConfigError("side tagged " + mech + " needs an elec tag, e.g. '" + mech + ":Ga'");
        tag.elec = ElecTag::None;
    } else {
        const std::string elec = text.substr(colon + 1);
        if (elec == "Ga") tag.elec = ElecTag::Ga;
        else if (elec == "Gb") tag.elec = ElecTag::Gb;
        else throw ConfigError("unknown elec tag '" + elec + "'");
        if (tag.mech == MechTag::G3) throw ConfigError("elec tag on contact boundary");
    }
    return tag;
}

inline DataFamily parse_family(const std::map<std::string, toml::Value>& sec,
                               const std::string& field) {
    DataFamily f;
    auto get = [&](const std::string& suffix) -> const toml::Value* {
        auto it = sec.find(field + "_" + suffix);
        return it == sec.end() ? nullptr : &it->second;
    };
    if (const auto* v = get("family")) f.family = v->as_string(field + "_family");
    if (const auto* v = get("amp")) f.amp = v->as_number(field + "_amp");
    if (const auto* v = get("kx")) f.kx = v->as_number(field + "_kx");
    if (const auto* v = get("ky")) f.ky = v->as_number(field + "_ky");
    if (const auto* v = get("omega")) f.omega = v->as_number(field + "_omega");
    return f;
}

}  // namespace detail

inline RunConfig RunConfig::load(const std::string& path) {
    std::ifstream raw(path);
    if (!raw) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << raw.rdbuf();
    const std::string text = buf.str();

    std::istringstream in(text);
    const toml::Table t = toml::parse(in);
    RunConfig c;
    c.config_hash = fnv1a(text);

    auto section = [&](const std::string& name) -> const std::map<std::string, toml::Value>* {
        auto it = t.find(name);
        return it == t.end() ? nullptr : &it->second;
    };
    auto num = [](const std::map<std::string, toml::Value>& s, const std::string& k, double& out) {
        auto it = s.find(k);
        if (it != s.end()) out = it->second.as_number(k);
    };
    auto integer = [](const std::map<std::string, toml::Value>& s, const std::string& k, int& out) {
        auto it = s.find(k);
        if (it != s.end()) out = int(it->second.as_number(k));
    };
    auto str = [](const std::map<std::string, toml::Value>& s, const std::string& k,
                  std::string& out) {
        auto it = s.find(k);
        if (it != s.end()) out = it->second.as_string(k);
    };

    if (const auto* s = section("mesh")) {
        str(*s, "source", c.mesh_source);
        str(*s, "path", c.mesh_path);
        num(*s, "width", c.width);
        num(*s, "height", c.height);
        integer(*s, "nx", c.nx);
        integer(*s, "ny", c.ny);
        std::string tag;
        for (auto [key, side] : std::initializer_list<std::pair<const char*, Side>>{
                 {"bottom", Side::Bottom}, {"top", Side::Top}, {"left", Side::Left},
                 {"right", Side::Right}}) {
            tag.clear();
            str(*s, key, tag);
            if (tag.empty()) continue;
            const SideTag st = detail::parse_side_tag(tag);
            switch (side) {
                case Side::Bottom: c.tagging.bottom = st; break;
                case Side::Top: c.tagging.top = st; break;
                case Side::Left: c.tagging.left = st; break;
                case Side::Right: c.tagging.right = st; break;
            }
        }
    }
    if (const auto* s = section("material")) {
        num(*s, "alpha", c.alpha);
        num(*s, "mu", c.mu);
        num(*s, "e", c.e);
        num(*s, "beta", c.beta);
        num(*s, "ke", c.ke);
        if (auto it = s->find("me"); it != s->end()) {
            const auto& a = it->second.as_array("me");
            if (a.size() != 2) throw ConfigError("material.me must have 2 entries");
            c.Me << a[0], a[1];
        }
        if (auto it = s->find("k"); it != s->end()) {
            const auto& a = it->second.as_array("k");
            if (a.size() != 3) throw ConfigError("material.k must be [k11, k12, k22]");
            c.K << a[0], a[1], a[1], a[2];
        }
    }
    if (const auto* s = section("friction")) {
        str(*s, "family", c.friction_family);
        num(*s, "r0", c.r0);
        num(*s, "a", c.fr_a);
        num(*s, "b", c.fr_b);
        num(*s, "r_max", c.fr_rmax);
        if (auto it = s->find("heating"); it != s->end())
            c.heating = it->second.as_bool("heating");
        if (auto it = s->find("strict_q2_zero"); it != s->end())
            c.strict_q2_zero = it->second.as_bool("strict_q2_zero");
    }
    if (const auto* s = section("time")) {
        num(*s, "T", c.T);
        integer(*s, "N", c.N);
    }
    if (const auto* s = section("solver")) {
        num(*s, "tol", c.solver.tol);
        integer(*s, "max_outer", c.solver.max_outer);
        integer(*s, "max_newton", c.solver.max_newton);
        num(*s, "velocity_scale", c.solver.velocity_scale);
        num(*s, "slip_tol", c.solver.slip_tol);
        if (auto it = s->find("eps_schedule"); it != s->end())
            c.solver.eps_schedule = it->second.as_array("eps_schedule");
        std::string policy;
        str(*s, "gate_policy", policy);
        if (policy == "abort") c.solver.gate_policy = GatePolicy::Abort;
        else if (policy == "warn" || policy.empty()) c.solver.gate_policy = GatePolicy::Warn;
        else throw ConfigError("gate_policy must be 'warn' or 'abort'");
        str(*s, "theta_coupling", c.theta_coupling);
        if (c.theta_coupling != "lagged" && c.theta_coupling != "iterate")
            throw ConfigError("theta_coupling must be 'lagged' or 'iterate'");
        num(*s, "coupling_tol", c.coupling_tol);
    }
    if (const auto* s = section("output")) {
        str(*s, "csv", c.csv_path);
        str(*s, "vtk_dir", c.vtk_dir);
        integer(*s, "stride", c.snapshot_stride);
    }
    if (const auto* s = section("data")) {
        c.f0 = detail::parse_family(*s, "f0");
        c.f2 = detail::parse_family(*s, "f2");
        c.q0 = detail::parse_family(*s, "q0");
        c.q2 = detail::parse_family(*s, "q2");
        c.p = detail::parse_family(*s, "p");
        c.theta_R = detail::parse_family(*s, "theta_R");
        double seed = double(c.seed);
        num(*s, "seed", seed);
        c.seed = unsigned(seed);
    }

    if (c.T <= 0.0 || c.N < 1) throw ConfigError("time grid requires T > 0 and N >= 1");
    if (c.solver.tol <= 0.0) throw ConfigError("solver tolerance must be positive");
    for (double ep : c.solver.eps_schedule)
        if (ep <= 0.0) throw ConfigError("eps schedule entries must be positive");
    return c;
}

}  // namespace antiplane
