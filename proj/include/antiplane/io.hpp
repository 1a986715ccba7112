#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "antiplane/config.hpp"
#include "antiplane/stepper.hpp"

namespace antiplane {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One row of the per-step log.
struct StepRecord {
    long step = 0;
    double t = 0.0;
    int outer_iters = 0;
    int newton_iters = 0;
    double vi_residual = 0.0;
    double norm_w_V = 0.0;
    double norm_u_V = 0.0;
    double norm_phi_W = 0.0;
    double norm_theta_E = 0.0;
    int stick_count = 0;
    int slip_count = 0;
    double max_traction = 0.0;
    double gate_margin = 0.0;
};

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct ProvenanceInfo {
    std::uint64_t config_hash = 0;
    std::uint64_t mesh_hash = 0;
    double alpha_star = 0.0;
    double trace_constant = 0.0;
    double Z0 = 0.0;
};

class CsvWriter {
public:
    CsvWriter(const std::string& path, const ProvenanceInfo& prov) : out_(path) {
        if (!out_) throw IoError("cannot open output file '" + path + "'");
        char hex[32];
        std::snprintf(hex, sizeof(hex), "%016llx", (unsigned long long)prov.config_hash);
        out_ << "# config_hash = " << hex << "\n";
        std::snprintf(hex, sizeof(hex), "%016llx", (unsigned long long)prov.mesh_hash);
        out_ << "# mesh_hash = " << hex << "\n";
        out_ << "# alpha_star = " << format_g17(prov.alpha_star) << "\n";
        out_ << "# trace_constant = " << format_g17(prov.trace_constant) << "\n";
        out_ << "# Z0 = " << format_g17(prov.Z0) << "\n";
        out_ << "step,t,outer_iters,newton_iters,vi_residual,norm_w_V,norm_u_V,norm_phi_W,"
                "norm_theta_E,stick_count,slip_count,max_traction,gate_margin\n";
        out_.flush();
    }

    void row(const StepRecord& r) {
        out_ << r.step << ',' << format_g17(r.t) << ',' << r.outer_iters << ','
             << r.newton_iters << ',' << format_g17(r.vi_residual) << ','
             << format_g17(r.norm_w_V) << ',' << format_g17(r.norm_u_V) << ','
             << format_g17(r.norm_phi_W) << ',' << format_g17(r.norm_theta_E) << ','
             << r.stick_count << ',' << r.slip_count << ',' << format_g17(r.max_traction)
             << ',' << format_g17(r.gate_margin) << '\n';
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

// Legacy ASCII VTK (unstructured grid) snapshot with nodal scalar fields.
inline void write_vtk(const std::string& path, const Mesh& mesh,
                      const std::vector<std::pair<std::string, std::vector<double>>>& fields) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open output file '" + path + "'");
    out << "# vtk DataFile Version 3.0\n";
    out << "antiplane snapshot\n";
    out << "ASCII\n";
    out << "DATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.nodes.size() << " double\n";
    for (const auto& n : mesh.nodes)
        out << format_g17(n.x) << ' ' << format_g17(n.y) << " 0\n";
    out << "CELLS " << mesh.triangles.size() << ' ' << 4 * mesh.triangles.size() << "\n";
    for (const auto& tri : mesh.triangles)
        out << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << "\n";
    out << "CELL_TYPES " << mesh.triangles.size() << "\n";
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) out << "5\n";
    out << "POINT_DATA " << mesh.nodes.size() << "\n";
    for (const auto& [name, values] : fields) {
        if (values.size() != mesh.nodes.size())
            throw IoError("field '" + name + "' size does not match node count");
        out << "SCALARS " << name << " double 1\n";
        out << "LOOKUP_TABLE default\n";
        for (double v : values) out << format_g17(v) << "\n";
    }
}

inline std::vector<double> nodal_values(const NodalField& f) {
    std::vector<double> out(f.space->mesh->nodes.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.at_node(int(i));
    return out;
}

}  // namespace antiplane
