#ifndef SINGMAX_IO_HPP
#define SINGMAX_IO_HPP

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "singmax/coupled.hpp"

namespace singmax {

// Ordered JSON keeps reruns byte-identical.
using json = nlohmann::ordered_json;

inline void ensure_dir(const std::filesystem::path& p) {
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw config_error("cannot create directory '" + p.string() + "': " + ec.message());
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw config_error("cannot write '" + p.string() + "'");
    return out;
}

// Minimal CSV writer; all floating point at 17 significant digits.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& p, const std::vector<std::string>& header)
        : out_(open_out(p)) {
        for (std::size_t i = 0; i < header.size(); ++i)
            out_ << (i ? "," : "") << header[i];
        out_ << "\n";
    }
    void row(const std::vector<double>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << (i ? "," : "") << fmt17(cells[i]);
        out_ << "\n";
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    static CsvTable read(const std::filesystem::path& p) {
        std::ifstream in(p);
        if (!in) throw config_error("cannot read '" + p.string() + "'");
        CsvTable t;
        std::string line;
        auto split = [](const std::string& s) {
            std::vector<std::string> cells;
            std::size_t start = 0;
            while (true) {
                const auto comma = s.find(',', start);
                cells.push_back(s.substr(start, comma - start));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            return cells;
        };
        if (std::getline(in, line)) t.header = split(line);
        while (std::getline(in, line))
            if (!line.empty()) t.rows.push_back(split(line));
        return t;
    }

    int col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return int(i);
        throw config_error("csv: missing column '" + name + "'");
    }
};

inline void write_json_file(const std::filesystem::path& p, const json& j) {
    open_out(p) << j.dump(2) << "\n";
}

inline json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw config_error("cannot read '" + p.string() + "'");
    return json::parse(in);
}

inline json mesh_descriptor(const Mesh& m) {
    return json{{"dimension", m.dimension()},
                {"extents", {m.lo(), m.hi()}},
                {"resolution", m.resolution()}};
}

inline MeshPtr mesh_from_descriptor(const json& j) {
    return build_mesh(j.at("dimension").get<int>(), j.at("extents")[0].get<double>(),
                      j.at("extents")[1].get<double>(), j.at("resolution").get<int>());
}

inline void write_nodes_csv(const std::filesystem::path& p, const Mesh& m) {
    CsvWriter w(p, {"index", "x", "y", "dist", "is_boundary"});
    for (std::size_t k = 0; k < m.node_count(); ++k) {
        const auto& c = m.node(k);
        w.row(std::vector<std::string>{std::to_string(k), fmt17(c[0]), fmt17(c[1]),
                                       fmt17(m.dist(k)), m.is_boundary(k) ? "1" : "0"});
    }
}

inline void write_grid_function_csv(const std::filesystem::path& p, const GridFunction& f) {
    CsvWriter w(p, {"index", "value"});
    for (std::size_t k = 0; k < f.size(); ++k)
        w.row(std::vector<std::string>{std::to_string(k), fmt17(f[k])});
}

inline GridFunction read_grid_function_csv(const std::filesystem::path& p, MeshPtr mesh) {
    const CsvTable t = CsvTable::read(p);
    const int vc = t.col("value");
    std::vector<double> vals;
    vals.reserve(t.rows.size());
    for (const auto& r : t.rows) vals.push_back(std::stod(r[vc]));
    return GridFunction(std::move(mesh), std::move(vals));
}

inline void write_trace_csv(const std::filesystem::path& p, const ConvergenceTrace& t) {
    CsvWriter w(p, {"n", "linf", "h1", "l2_diff", "inner_iters", "residual"});
    for (const auto& s : t.steps)
        w.row(std::vector<double>{s.n, s.linf, s.h1, s.l2_diff, double(s.inner_iters),
                                  s.residual});
}

inline void write_outer_csv(const std::filesystem::path& p, const std::vector<OuterStep>& steps) {
    CsvWriter w(p, {"step", "u_diff", "v_diff", "u_residual", "v_residual", "inner_iters"});
    for (std::size_t i = 0; i < steps.size(); ++i)
        w.row(std::vector<double>{double(i + 1), steps[i].u_diff, steps[i].v_diff,
                                  steps[i].u_residual, steps[i].v_residual,
                                  double(steps[i].inner_iters)});
}

inline json diagnostics_json(const DiagnosticsReport& d) {
    json gates = json::array();
    for (const auto& g : d.gates)
        gates.push_back(json{{"name", g.name},
                             {"anchor", g.anchor},
                             {"status", gate_status_name(g.status)},
                             {"measured", g.measured},
                             {"tolerance", g.tolerance},
                             {"detail", g.detail}});
    return json{{"all_pass", d.all_pass()}, {"gates", gates}};
}

inline json barrier_json(const BarrierReport& b) {
    return json{{"min_margin", b.min_margin},
                {"violation_fraction", b.violation_fraction},
                {"implied_c", b.implied_c},
                {"tau", b.tau},
                {"margin_tol", b.margin_tol}};
}

} // namespace singmax

#endif
