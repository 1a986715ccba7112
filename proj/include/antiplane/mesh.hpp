#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace antiplane {

struct MeshError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class MechTag { G1, G2, G3 };
enum class ElecTag { Ga, Gb, None };

inline const char* to_string(MechTag t) {
    switch (t) {
        case MechTag::G1: return "G1";
        case MechTag::G2: return "G2";
        default: return "G3";
    }
}
inline const char* to_string(ElecTag t) {
    switch (t) {
        case ElecTag::Ga: return "Ga";
        case ElecTag::Gb: return "Gb";
        default: return "-";
    }
}

struct Node {
    double x = 0.0;
    double y = 0.0;
};

struct BoundaryEdge {
    int a = -1;
    int b = -1;
    MechTag mech = MechTag::G3;
    ElecTag elec = ElecTag::None;
};

// Conforming triangular mesh of the cross-section with a disjoint mechanical
// tagging of the boundary (G1 clamped, G2 traction, G3 contact) and an
// electric partition of G1 u G2 into Ga (grounded) and Gb (charged).
struct Mesh {
    std::vector<Node> nodes;
    std::vector<std::array<int, 3>> triangles;  // counterclockwise
    std::vector<BoundaryEdge> boundary_edges;

    static double signed_area(const Node& p, const Node& q, const Node& r) {
        return 0.5 * ((q.x - p.x) * (r.y - p.y) - (r.x - p.x) * (q.y - p.y));
    }

    double triangle_area(int k) const {
        const auto& t = triangles[k];
        return signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
    }

    double edge_length(const BoundaryEdge& e) const {
        const double dx = nodes[e.b].x - nodes[e.a].x;
        const double dy = nodes[e.b].y - nodes[e.a].y;
        return std::sqrt(dx * dx + dy * dy);
    }

    double boundary_measure(MechTag tag) const {
        double s = 0.0;
        for (const auto& e : boundary_edges)
            if (e.mech == tag) s += edge_length(e);
        return s;
    }

    double boundary_measure(ElecTag tag) const {
        double s = 0.0;
        for (const auto& e : boundary_edges)
            if (e.elec == tag) s += edge_length(e);
        return s;
    }

    double total_area() const {
        double s = 0.0;
        for (std::size_t k = 0; k < triangles.size(); ++k) s += triangle_area(int(k));
        return s;
    }

    void validate() const;
};

inline void Mesh::validate() const {
    const int n = int(nodes.size());
    for (std::size_t k = 0; k < triangles.size(); ++k) {
        for (int v : triangles[k])
            if (v < 0 || v >= n)
                throw MeshError("node index out of range, triangle " + std::to_string(k));
        if (triangle_area(int(k)) <= 0.0)
            throw MeshError("nonpositive area, triangle " + std::to_string(k));
    }
    // edge -> incident triangle count
    std::map<std::pair<int, int>, int> count;
    auto key = [](int a, int b) { return std::make_pair(std::min(a, b), std::max(a, b)); };
    for (const auto& t : triangles) {
        count[key(t[0], t[1])]++;
        count[key(t[1], t[2])]++;
        count[key(t[2], t[0])]++;
    }
    for (const auto& [e, c] : count)
        if (c > 2)
            throw MeshError("edge shared by more than two triangles");
    std::map<std::pair<int, int>, int> btagged;
    for (std::size_t i = 0; i < boundary_edges.size(); ++i) {
        const auto& e = boundary_edges[i];
        if (e.a < 0 || e.a >= n || e.b < 0 || e.b >= n || e.a == e.b)
            throw MeshError("invalid boundary edge " + std::to_string(i));
        auto it = count.find(key(e.a, e.b));
        if (it == count.end() || it->second != 1)
            throw MeshError("boundary edge " + std::to_string(i) + " is not a boundary edge of the triangulation");
        if (++btagged[key(e.a, e.b)] > 1)
            throw MeshError("boundary edge " + std::to_string(i) + " tagged twice");
        if (e.mech == MechTag::G3 && e.elec != ElecTag::None)
            throw MeshError("elec tag on contact boundary");
        if (e.mech != MechTag::G3 && e.elec == ElecTag::None)
            throw MeshError("missing elec tag on edge of G1 u G2");
    }
    for (const auto& [e, c] : count)
        if (c == 1 && btagged.find(e) == btagged.end())
            throw MeshError("untagged topological boundary edge");
    if (boundary_measure(MechTag::G1) <= 0.0) throw MeshError("measure(Gamma_1) = 0");
    if (boundary_measure(ElecTag::Ga) <= 0.0) throw MeshError("measure(Gamma_a) = 0");
    if (boundary_measure(ElecTag::Gb) <= 0.0) throw MeshError("measure(Gamma_b) = 0");
}

enum class Side { Bottom, Right, Top, Left };

struct SideTag {
    MechTag mech = MechTag::G2;
    ElecTag elec = ElecTag::Gb;
};

// Assigns each rectangle side one mechanical tag and (off G3) one electric tag.
struct TaggingRule {
    SideTag bottom, right, top, left;

    const SideTag& operator[](Side s) const {
        switch (s) {
            case Side::Bottom: return bottom;
            case Side::Right: return right;
            case Side::Top: return top;
            default: return left;
        }
    }

    // bottom contact, clamped grounded top, charged lateral sides
    static TaggingRule standard() {
        TaggingRule r;
        r.bottom = {MechTag::G3, ElecTag::None};
        r.top = {MechTag::G1, ElecTag::Ga};
        r.left = {MechTag::G2, ElecTag::Gb};
        r.right = {MechTag::G2, ElecTag::Gb};
        return r;
    }
};

// Structured criss-cross triangulation of [0,width] x [0,height]; the cell
// diagonal alternates with (i+j) parity so that refinement studies carry no
// directional bias.
inline Mesh generate_rect_mesh(double width, double height, int nx, int ny,
                               const TaggingRule& tagging = TaggingRule::standard()) {
    if (nx < 1 || ny < 1) throw MeshError("nx and ny must be >= 1");
    if (width <= 0.0 || height <= 0.0) throw MeshError("width and height must be positive");

    Mesh m;
    m.nodes.reserve(std::size_t(nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            m.nodes.push_back({width * i / nx, height * j / ny});

    auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };

    m.triangles.reserve(std::size_t(2) * nx * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int v00 = vid(i, j), v10 = vid(i + 1, j);
            const int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
            if ((i + j) % 2 == 0) {
                m.triangles.push_back({v00, v10, v11});
                m.triangles.push_back({v00, v11, v01});
            } else {
                m.triangles.push_back({v00, v10, v01});
                m.triangles.push_back({v10, v11, v01});
            }
        }
    }

    auto add_side = [&](Side s) {
        const SideTag& tag = tagging[s];
        auto push = [&](int a, int b) { m.boundary_edges.push_back({a, b, tag.mech, tag.elec}); };
        switch (s) {
            case Side::Bottom:
                for (int i = 0; i < nx; ++i) push(vid(i, 0), vid(i + 1, 0));
                break;
            case Side::Right:
                for (int j = 0; j < ny; ++j) push(vid(nx, j), vid(nx, j + 1));
                break;
            case Side::Top:
                for (int i = 0; i < nx; ++i) push(vid(i + 1, ny), vid(i, ny));
                break;
            case Side::Left:
                for (int j = 0; j < ny; ++j) push(vid(0, j + 1), vid(0, j));
                break;
        }
    };
    add_side(Side::Bottom);
    add_side(Side::Right);
    add_side(Side::Top);
    add_side(Side::Left);
    return m;
}

inline MechTag parse_mech_tag(const std::string& s, int line) {
    if (s == "G1") return MechTag::G1;
    if (s == "G2") return MechTag::G2;
    if (s == "G3") return MechTag::G3;
    throw MeshError("line " + std::to_string(line) + ": unknown mech tag '" + s + "'");
}
inline ElecTag parse_elec_tag(const std::string& s, int line) {
    if (s == "Ga") return ElecTag::Ga;
    if (s == "Gb") return ElecTag::Gb;
    if (s == "-") return ElecTag::None;
    throw MeshError("line " + std::to_string(line) + ": unknown elec tag '" + s + "'");
}

inline Mesh load_mesh(std::istream& in) {
    Mesh m;
    int line = 0;
    std::string word;
    auto next_line = [&](std::istringstream& ls) {
        std::string raw;
        while (std::getline(in, raw)) {
            ++line;
            if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
            ls = std::istringstream(raw);
            return;
        }
        throw MeshError("line " + std::to_string(line + 1) + ": unexpected end of file");
    };
    auto expect_count = [&](const std::string& kw) {
        std::istringstream ls;
        next_line(ls);
        std::string k;
        long n = -1;
        if (!(ls >> k >> n) || k != kw || n < 0)
            throw MeshError("line " + std::to_string(line) + ": expected '" + kw + " N'");
        return n;
    };

    const long nn = expect_count("nodes");
    for (long i = 0; i < nn; ++i) {
        std::istringstream ls;
        next_line(ls);
        Node p;
        if (!(ls >> p.x >> p.y))
            throw MeshError("line " + std::to_string(line) + ": expected 'x y'");
        m.nodes.push_back(p);
    }
    const long nt = expect_count("triangles");
    for (long i = 0; i < nt; ++i) {
        std::istringstream ls;
        next_line(ls);
        std::array<int, 3> t{};
        if (!(ls >> t[0] >> t[1] >> t[2]))
            throw MeshError("line " + std::to_string(line) + ": expected 'i j k'");
        m.triangles.push_back(t);
    }
    const long nb = expect_count("bedges");
    for (long i = 0; i < nb; ++i) {
        std::istringstream ls;
        next_line(ls);
        BoundaryEdge e;
        std::string mech, elec;
        if (!(ls >> e.a >> e.b >> mech >> elec))
            throw MeshError("line " + std::to_string(line) + ": expected 'i j MECH ELEC'");
        e.mech = parse_mech_tag(mech, line);
        e.elec = parse_elec_tag(elec, line);
        m.boundary_edges.push_back(e);
    }
    return m;
}

inline Mesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MeshError("cannot open mesh file '" + path + "'");
    return load_mesh(in);
}

inline void save_mesh(const Mesh& m, std::ostream& out) {
    out << "nodes " << m.nodes.size() << "\n";
    char buf[64];
    for (const auto& p : m.nodes) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", p.x, p.y);
        out << buf;
    }
    out << "triangles " << m.triangles.size() << "\n";
    for (const auto& t : m.triangles) out << t[0] << " " << t[1] << " " << t[2] << "\n";
    out << "bedges " << m.boundary_edges.size() << "\n";
    for (const auto& e : m.boundary_edges)
        out << e.a << " " << e.b << " " << to_string(e.mech) << " " << to_string(e.elec) << "\n";
}

inline void save_mesh(const Mesh& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MeshError("cannot open '" + path + "' for writing");
    save_mesh(m, out);
}

}  // namespace antiplane
