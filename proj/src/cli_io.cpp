#include "gradhom/cli_io.hpp"

#include "gradhom/errors.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace gradhom {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

MicroMaterial RunConfig::material() const {
    MicroMaterial m;
    m.youngs_matrix = youngs_matrix;
    m.poisson_matrix = poisson_matrix;
    switch (inclusion_model) {
    case InclusionModel::regularized:
        m.youngs_inclusion = 1e-8 * youngs_matrix;
        m.poisson_inclusion = poisson_matrix;
        break;
    case InclusionModel::paper:
        m.youngs_inclusion = 1e-30;
        m.poisson_inclusion = 1e-30;
        break;
    case InclusionModel::explicit_values:
        m.youngs_inclusion = youngs_inclusion;
        m.poisson_inclusion = poisson_inclusion;
        break;
    }
    return m;
}

SolverSettings RunConfig::cell_solver(std::string* note) const {
    SolverSettings s = solver;
    const MicroMaterial m = material();
    if (s.preconditioner == Preconditioner::diagonal && m.youngs_inclusion < 1e-12 * m.youngs_matrix) {
        s.preconditioner = Preconditioner::cholesky;
        if (note)
            *note = "inclusion contrast below 1e-12: diagonal-preconditioned CG stagnates on the void dofs, "
                    "cell problems use the cholesky preconditioner instead";
    }
    return s;
}

// ---------------------------------------------------------------- config

namespace {

/// Line numbers of sections and keys, found by scanning the raw text.
class LineIndex {
public:
    explicit LineIndex(const std::string& text) {
        std::istringstream in(text);
        std::string line, section;
        int n = 0;
        while (std::getline(in, line)) {
            ++n;
            const auto first = line.find_first_not_of(" \t");
            if (first == std::string::npos || line[first] == ';' || line[first] == '#') continue;
            if (line[first] == '[') {
                const auto close = line.find(']', first);
                section = trim(line.substr(first + 1, close - first - 1));
                sections_.emplace(section, n);
                continue;
            }
            const auto eq = line.find('=');
            if (eq != std::string::npos) keys_.emplace(section + "." + trim(line.substr(0, eq)), n);
        }
    }

    int key(const std::string& path) const {
        const auto it = keys_.find(path);
        return it == keys_.end() ? 0 : it->second;
    }
    int section(const std::string& name) const {
        const auto it = sections_.find(name);
        return it == sections_.end() ? 0 : it->second;
    }

    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

private:
    std::map<std::string, int> keys_;
    std::map<std::string, int> sections_;
};

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"geometry", {"cell_size", "wall_thickness", "repetitions", "epsilon"}},
        {"material", {"youngs_matrix", "poisson_matrix", "inclusion_model", "youngs_inclusion", "poisson_inclusion"}},
        {"mesh", {"elements_per_cell", "file"}},
        {"solver", {"rel_tol", "abs_tol", "max_iter", "preconditioner", "psi_source"}},
        {"validate",
         {"macro_sizes", "thetas", "micro_elements_per_cell", "macro_elements", "classical_element", "rel_tol",
          "abs_tol", "max_iter", "preconditioner", "tensors"}},
        {"sweep", {"cell_sizes"}},
        {"output", {"directory"}},
    };
    return keys;
}

class Reader {
public:
    Reader(const pt::ptree& tree, const LineIndex& lines) : tree_(tree), lines_(lines) {}

    std::optional<std::string> raw(const std::string& path) const {
        const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(path, '.'));
        if (!v) return std::nullopt;
        return LineIndex::trim(*v);
    }

    std::string required(const std::string& path) const {
        auto v = raw(path);
        if (!v || v->empty()) {
            const std::string section = path.substr(0, path.find('.'));
            throw ConfigError("missing required key '" + path + "'", lines_.section(section));
        }
        return *v;
    }

    double number(const std::string& path, const std::string& text) const {
        double v = 0.0;
        const char* end = text.data() + text.size();
        const auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec != std::errc() || ptr != end || !std::isfinite(v))
            throw ConfigError("'" + path + "' expects a number, got '" + text + "'", lines_.key(path));
        return v;
    }

    long integer(const std::string& path, const std::string& text) const {
        long v = 0;
        const char* end = text.data() + text.size();
        const auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec != std::errc() || ptr != end)
            throw ConfigError("'" + path + "' expects an integer, got '" + text + "'", lines_.key(path));
        return v;
    }

    void get(const std::string& path, double& out) const {
        if (auto v = raw(path)) out = number(path, *v);
    }
    void get(const std::string& path, int& out) const {
        if (auto v = raw(path)) out = static_cast<int>(integer(path, *v));
    }
    void get(const std::string& path, long& out) const {
        if (auto v = raw(path)) out = integer(path, *v);
    }
    double required_number(const std::string& path) const { return number(path, required(path)); }

    std::vector<double> list(const std::string& path) const {
        std::vector<double> out;
        auto v = raw(path);
        if (!v) return out;
        std::string item;
        std::istringstream in(*v);
        while (std::getline(in, item, ',')) {
            item = LineIndex::trim(item);
            if (!item.empty()) out.push_back(number(path, item));
        }
        return out;
    }

    /// Runs fn and re-throws ConfigErrors without a line at the key's line.
    template <typename Fn>
    auto at(const std::string& path, Fn&& fn) const {
        try {
            return fn();
        } catch (const ConfigError& e) {
            if (e.line() > 0) throw;
            throw ConfigError(e.what(), lines_.key(path));
        } catch (const Error& e) {
            throw ConfigError(e.what(), lines_.key(path));
        }
    }

    int line(const std::string& path) const { return lines_.key(path); }

private:
    const pt::ptree& tree_;
    const LineIndex& lines_;
};

} // namespace

RunConfig parse_config(std::istream& in, const std::string& source) {
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    pt::ptree tree;
    try {
        std::istringstream s(text);
        pt::read_ini(s, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(e.message(), static_cast<int>(e.line()));
    }
    const LineIndex lines(text);
    for (const auto& [section, body] : tree) {
        const auto known = known_keys().find(section);
        if (known == known_keys().end()) throw ConfigError("unknown section [" + section + "]", lines.section(section));
        if (!body.data().empty() && body.empty())
            throw ConfigError("key '" + section + "' outside any section", lines.key("." + section));
        for (const auto& [key, value] : body)
            if (!known->second.count(key))
                throw ConfigError("unknown key '" + key + "' in [" + section + "]", lines.key(section + "." + key));
    }

    const Reader r(tree, lines);
    RunConfig cfg;
    cfg.source = source;

    cfg.geometry.cell_size = r.required_number("geometry.cell_size");
    cfg.geometry.wall_thickness = r.required_number("geometry.wall_thickness");
    r.get("geometry.repetitions", cfg.geometry.repetitions);
    r.get("geometry.epsilon", cfg.geometry.epsilon);
    r.at("geometry", [&] {
        cfg.geometry.validate();
        return 0;
    });

    cfg.youngs_matrix = r.required_number("material.youngs_matrix");
    cfg.poisson_matrix = r.required_number("material.poisson_matrix");
    if (auto model = r.raw("material.inclusion_model")) {
        if (*model == "regularized")
            cfg.inclusion_model = InclusionModel::regularized;
        else if (*model == "paper")
            cfg.inclusion_model = InclusionModel::paper;
        else if (*model == "explicit")
            cfg.inclusion_model = InclusionModel::explicit_values;
        else
            throw ConfigError("inclusion_model must be regularized, paper or explicit, got '" + *model + "'",
                              r.line("material.inclusion_model"));
    }
    if (cfg.inclusion_model == InclusionModel::explicit_values) {
        cfg.youngs_inclusion = r.required_number("material.youngs_inclusion");
        cfg.poisson_inclusion = r.required_number("material.poisson_inclusion");
    } else if (r.raw("material.youngs_inclusion") || r.raw("material.poisson_inclusion")) {
        throw ConfigError("inclusion moduli are only read with inclusion_model = explicit",
                          std::max(r.line("material.youngs_inclusion"), r.line("material.poisson_inclusion")));
    }
    r.at("material.youngs_matrix", [&] {
        cfg.material().validate();
        return 0;
    });

    if (auto file = r.raw("mesh.file")) {
        fs::path p(*file);
        if (p.is_relative() && source != "<config>") p = fs::path(source).parent_path() / p;
        if (!fs::exists(p)) throw ConfigError("mesh file '" + p.string() + "' does not exist", r.line("mesh.file"));
        cfg.mesh_file = p;
        r.get("mesh.elements_per_cell", cfg.elements_per_cell);
    } else {
        cfg.elements_per_cell = static_cast<int>(r.integer("mesh.elements_per_cell", r.required("mesh.elements_per_cell")));
    }
    if (cfg.elements_per_cell < 10)
        throw ConfigError("elements_per_cell must be at least 10", r.line("mesh.elements_per_cell"));

    r.get("solver.rel_tol", cfg.solver.rel_tol);
    r.get("solver.abs_tol", cfg.solver.abs_tol);
    r.get("solver.max_iter", cfg.solver.max_iterations);
    if (auto p = r.raw("solver.preconditioner"))
        cfg.solver.preconditioner = r.at("solver.preconditioner", [&] { return parse_preconditioner(*p); });
    if (auto p = r.raw("solver.psi_source"))
        cfg.psi_source = r.at("solver.psi_source", [&] { return parse_source_distribution(*p); });
    if (!(cfg.solver.rel_tol > 0.0) || !(cfg.solver.abs_tol >= 0.0) || cfg.solver.max_iterations < 0)
        throw ConfigError("solver tolerances must be positive and max_iter non-negative", lines.section("solver"));

    if (auto v = r.list("validate.macro_sizes"); !v.empty()) cfg.macro_sizes = v;
    else if (r.raw("validate.macro_sizes")) throw ConfigError("macro_sizes is empty", r.line("validate.macro_sizes"));
    if (auto v = r.list("validate.thetas"); !v.empty()) cfg.thetas = v;
    r.get("validate.micro_elements_per_cell", cfg.micro_elements_per_cell);
    r.get("validate.macro_elements", cfg.macro_elements);
    if (auto e = r.raw("validate.classical_element"))
        cfg.classical_element = r.at("validate.classical_element", [&] { return parse_macro_element(*e); });
    r.get("validate.rel_tol", cfg.specimen_solver.rel_tol);
    r.get("validate.abs_tol", cfg.specimen_solver.abs_tol);
    r.get("validate.max_iter", cfg.specimen_solver.max_iterations);
    if (auto p = r.raw("validate.preconditioner"))
        cfg.specimen_solver.preconditioner = r.at("validate.preconditioner", [&] { return parse_preconditioner(*p); });
    if (auto t = r.raw("validate.tensors")) {
        fs::path p(*t);
        if (p.is_relative() && source != "<config>") p = fs::path(source).parent_path() / p;
        if (!fs::exists(p)) throw ConfigError("tensor file '" + p.string() + "' does not exist", r.line("validate.tensors"));
        cfg.tensors_file = p;
    }
    for (double t : cfg.thetas)
        if (!(std::abs(t) <= 0.2)) throw ConfigError("rotations must lie in [-0.2, 0.2] rad", r.line("validate.thetas"));
    for (double size : cfg.macro_sizes) {
        SpecimenSpec spec;
        spec.macro_size = size;
        spec.cell_size = cfg.geometry.cell_size;
        spec.wall_fraction = cfg.geometry.wall_thickness / cfg.geometry.cell_size;
        spec.thetas = cfg.thetas;
        spec.micro_elements_per_cell = cfg.micro_elements_per_cell;
        spec.macro_elements = cfg.macro_elements;
        r.at("validate.macro_sizes", [&] {
            spec.validate();
            return 0;
        });
    }

    if (r.raw("sweep.cell_sizes")) {
        cfg.cell_sizes = r.list("sweep.cell_sizes");
        if (cfg.cell_sizes.empty()) throw ConfigError("sweep.cell_sizes is empty", r.line("sweep.cell_sizes"));
        for (double s : cfg.cell_sizes)
            if (!(s > 0.0)) throw ConfigError("sweep cell sizes must be positive", r.line("sweep.cell_sizes"));
    }

    if (auto d = r.raw("output.directory")) cfg.output_dir = *d;
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    try {
        return parse_config(in, path.string());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------- hashing

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex_hash(std::uint64_t h) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

namespace {

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
}

std::string inclusion_name(InclusionModel m) {
    switch (m) {
    case InclusionModel::regularized: return "regularized";
    case InclusionModel::paper: return "paper";
    case InclusionModel::explicit_values: return "explicit";
    }
    return "?";
}

std::string geometry_block(const RunConfig& c) {
    const MicroMaterial m = c.material();
    std::ostringstream s;
    s << "cell_size=" << format_double(c.geometry.cell_size) << ";wall=" << format_double(c.geometry.wall_thickness)
      << ";n=" << c.geometry.repetitions << ";eps=" << format_double(c.geometry.epsilon)
      << ";Em=" << format_double(m.youngs_matrix) << ";num=" << format_double(m.poisson_matrix)
      << ";Ei=" << format_double(m.youngs_inclusion) << ";nui=" << format_double(m.poisson_inclusion)
      << ";m=" << c.elements_per_cell << ";mesh=" << (c.mesh_file ? c.mesh_file->string() : "")
      << ";psi=" << to_string(c.psi_source);
    return s.str();
}

std::string solver_block(const SolverSettings& s) {
    return "rel=" + format_double(s.rel_tol) + ";abs=" + format_double(s.abs_tol) +
           ";max=" + std::to_string(s.max_iterations) + ";pc=" + to_string(s.preconditioner);
}

} // namespace

std::string geometry_hash(const RunConfig& cfg) { return hex_hash(fnv1a(geometry_block(cfg))); }

std::string config_hash(const RunConfig& cfg) {
    std::ostringstream s;
    s << geometry_block(cfg) << "|inclusion=" << inclusion_name(cfg.inclusion_model) << "|" << solver_block(cfg.solver)
      << "|sizes=" << join(cfg.macro_sizes) << "|thetas=" << join(cfg.thetas) << "|mm=" << cfg.micro_elements_per_cell
      << "|me=" << cfg.macro_elements << "|ce=" << to_string(cfg.classical_element) << "|"
      << solver_block(cfg.specimen_solver) << "|tensors=" << (cfg.tensors_file ? cfg.tensors_file->string() : "")
      << "|sweep=" << join(cfg.cell_sizes);
    return hex_hash(fnv1a(s.str()));
}

// ---------------------------------------------------------------- output

namespace {

void write_header(std::ostream& out, const RunConfig& cfg) {
    out << "# gradhom " << kToolVersion << "\n# config_hash=" << config_hash(cfg)
        << "\n# geometry_hash=" << geometry_hash(cfg) << "\n";
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    return out;
}

std::string c_label(int r, int c) {
    const auto& a = kVoigtStrain[static_cast<std::size_t>(r)];
    const auto& b = kVoigtStrain[static_cast<std::size_t>(c)];
    return "C_" + index_label({a[0], a[1], b[0], b[1]});
}

std::string d_label(int r, int c) {
    const auto& a = kVoigtGradient[static_cast<std::size_t>(r)];
    const auto& b = kVoigtGradient[static_cast<std::size_t>(c)];
    return "D_" + index_label({a[0], a[1], a[2], b[0], b[1], b[2]});
}

fs::path output_dir(const RunConfig& cfg, const CommandOptions& opts) {
    const fs::path dir = opts.output_dir ? *opts.output_dir : cfg.output_dir;
    fs::create_directories(dir);
    return dir;
}

PeriodicMesh cell_mesh(const RunConfig& cfg, const CellGeometry& geom) {
    if (cfg.mesh_file) return import_mesh(*cfg.mesh_file);
    return build_square_lattice_rve(geom, cfg.elements_per_cell);
}

bool homogeneous_input(const RunConfig& cfg, const PeriodicMesh& mesh) {
    const MicroMaterial m = cfg.material();
    if (m.youngs_inclusion == m.youngs_matrix && m.poisson_inclusion == m.poisson_matrix) return true;
    return mesh.phase_fraction(Phase::inclusion) == 0.0;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m, int width = 14) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out << "  ";
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << std::setw(width) << format_double(m(r, c)) << ' ';
        out << '\n';
    }
}

void write_report(std::ostream& out, const RunConfig& cfg, const PeriodicMesh& mesh, const EffectiveTensors& t,
                  const SolverSettings& used, const std::vector<std::string>& notes) {
    const MicroMaterial m = cfg.material();
    write_header(out, cfg);
    out << "\n[input]\n"
        << "config: " << cfg.source << "\n"
        << "cell size l: " << format_double(cfg.geometry.cell_size) << " mm, wall thickness t: "
        << format_double(cfg.geometry.wall_thickness) << " mm, repetitions: " << cfg.geometry.repetitions
        << ", epsilon: " << format_double(t.epsilon) << "\n"
        << "matrix E = " << format_double(m.youngs_matrix) << " MPa, nu = " << format_double(m.poisson_matrix)
        << "; inclusion (" << inclusion_name(cfg.inclusion_model) << ") E = " << format_double(m.youngs_inclusion)
        << " MPa, nu = " << format_double(m.poisson_inclusion) << "\n";
    out << "\n[mesh]\n"
        << "source: " << (cfg.mesh_file ? cfg.mesh_file->string() : "structured square lattice") << "\n"
        << "nodes: " << mesh.node_count() << ", elements: " << mesh.element_count()
        << ", periodic pairs: " << mesh.periodic_pairs.size() << " + corner group\n"
        << "width (local): " << format_double(mesh.width) << ", area: " << format_double(mesh.area()) << "\n"
        << "inclusion fraction: mesh " << format_double(mesh.phase_fraction(Phase::inclusion)) << ", analytic "
        << format_double(cfg.geometry.inclusion_fraction()) << "\n";
    for (const auto& n : mesh.notes) out << "note: " << n << "\n";
    out << "\n[solver]\n"
        << "conjugate gradients, preconditioner " << to_string(used.preconditioner) << ", rel_tol "
        << format_double(used.rel_tol) << ", abs_tol " << format_double(used.abs_tol) << "\n"
        << "total iterations (12 solves): " << t.diagnostics.total_iterations
        << ", worst final/initial residual: " << format_double(t.diagnostics.worst_residual) << "\n";
    out << "\n[assumptions]\n"
        << "plane strain: lambda = E nu / ((1 + nu)(1 - 2 nu)), mu = E / (2 (1 + nu))\n"
        << "fluctuations phi and psi are periodic with zero volume mean per component\n"
        << "second moment I_kn = eps^2 (1/V) int y_k y_n dV (volume-normalized)\n"
        << "correction D_abcdef = Dbar_abcdef - C_abde I_cf\n"
        << "psi body-force term -C^M distributed by " << to_string(cfg.psi_source)
        << (cfg.psi_source == SourceDistribution::stiffness ? " (weight E_phase / <E>)" : " (uniform over the cell)")
        << "\n"
        << "units: mm, MPa, N (D = MPa mm^2)\n";
    for (const auto& n : notes) out << "note: " << n << "\n";
    out << "\n[effective tensors]\n"
        << "C (MPa), Voigt 11, 22, 12:\n";
    write_matrix(out, t.C);
    out << "D (N), Voigt 111, 221, 122, 222, 112, 121:\n";
    write_matrix(out, t.D);
    out << "I (mm^2):\n";
    write_matrix(out, t.I_bar);
    const auto& d = t.diagnostics;
    out << "\n[diagnostics]\n"
        << "consistency <C L> vs <L^T C L> (relative): " << format_double(d.phi_consistency) << "\n"
        << "C asymmetry before symmetrizing: " << format_double(d.classical_asymmetry) << "\n"
        << "D asymmetry before symmetrizing: " << format_double(d.gradient_asymmetry) << "\n"
        << "|G|: " << format_double(d.g_norm) << " N/mm, relative to sqrt(|C| |D|): " << format_double(d.g_relative)
        << "\n"
        << "D4 block defect (relative to max |D|): " << format_double(d.d4_defect) << "\n"
        << "max |<phi>| / w: " << format_double(d.phi_mean) << ", max |<psi>| / w^2: " << format_double(d.psi_mean)
        << "\n"
        << "max |<d phi / d y>|: " << format_double(d.mean_gradient) << "\n";
    const Eigen::SelfAdjointEigenSolver<Voigt3> ce(t.C);
    out << "smallest eigenvalue of C: " << format_double(ce.eigenvalues().minCoeff()) << " MPa\n";
    out << "smallest eigenvalue of the D form: " << format_double(gradient_form_min_eigenvalue(t.gradient)) << " N\n";
    if (homogeneous_input(cfg, mesh)) {
        const double dmax = t.D.cwiseAbs().maxCoeff();
        out << (dmax <= 1e-6 ? "compatibility check passed: D ≈ 0" : "compatibility check FAILED: D does not vanish")
            << " (max |D| = " << format_double(dmax) << " N)\n";
    }
}

Eigen::VectorXd* no_field = nullptr;

} // namespace

void write_effective_csv(std::ostream& out, const EffectiveTensors& t, const RunConfig& cfg) {
    write_header(out, cfg);
    out << "tensor,row,col,component,value,unit\n";
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            out << "C," << r + 1 << ',' << c + 1 << ',' << c_label(r, c) << ',' << format_double(t.C(r, c)) << ",MPa\n";
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c)
            out << "D," << r + 1 << ',' << c + 1 << ',' << d_label(r, c) << ',' << format_double(t.D(r, c)) << ",N\n";
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            out << "I," << r + 1 << ',' << c + 1 << ",I_" << index_label({r, c}) << ','
                << format_double(t.I_bar(r, c)) << ",mm^2\n";
    out << "epsilon,1,1,epsilon," << format_double(t.epsilon) << ",-\n";
}

TensorFile read_effective_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open tensor file '" + path.string() + "'");
    TensorFile f;
    std::string line;
    int n = 0;
    bool header = false;
    int c_count = 0, d_count = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = LineIndex::trim(line.substr(1, eq - 1));
            const std::string value = LineIndex::trim(line.substr(eq + 1));
            if (key == "config_hash") f.config_hash = value;
            if (key == "geometry_hash") f.geometry_hash = value;
            continue;
        }
        if (!header) {
            header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream s(line);
        while (std::getline(s, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw ConfigError(path.string() + ": expected 6 columns", n);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(cells[4].data(), cells[4].data() + cells[4].size(), value);
        if (ec != std::errc()) throw ConfigError(path.string() + ": bad value '" + cells[4] + "'", n);
        const int r = std::atoi(cells[1].c_str()) - 1, c = std::atoi(cells[2].c_str()) - 1;
        if (cells[0] == "C" && r >= 0 && r < 3 && c >= 0 && c < 3) {
            f.C(r, c) = value;
            ++c_count;
        } else if (cells[0] == "D" && r >= 0 && r < 6 && c >= 0 && c < 6) {
            f.D(r, c) = value;
            ++d_count;
        } else if (cells[0] == "epsilon") {
            f.epsilon = value;
        }
    }
    if (c_count != 9 || d_count != 36)
        throw ConfigError(path.string() + ": incomplete tensor file (need 9 C and 36 D entries)");
    return f;
}

// ---------------------------------------------------------------- commands

int cmd_homogenize(const RunConfig& cfg, const CommandOptions& opts, std::ostream& log) {
    const fs::path dir = output_dir(cfg, opts);
    std::vector<std::string> notes;
    std::string note;
    const SolverSettings settings = cfg.cell_solver(&note);
    if (!note.empty()) notes.push_back(note);

    const PeriodicMesh mesh = cell_mesh(cfg, cfg.geometry);
    log << "mesh: " << mesh.node_count() << " nodes, " << mesh.element_count() << " elements\n";
    if (opts.mesh_export) {
        if (*opts.mesh_export == "vtk")
            export_vtk(mesh, dir / "rve_mesh.vtk");
        else if (*opts.mesh_export == "mesh")
            export_mesh(mesh, dir / "rve.mesh");
        else
            throw ConfigError("--mesh-export expects vtk or mesh, got '" + *opts.mesh_export + "'");
    }
    CellSolution fields;
    const EffectiveTensors t =
        homogenize(mesh, cfg.material(), cfg.geometry.epsilon, settings, opts.dump_fields ? &fields : nullptr, 1e-8,
                   cfg.psi_source);
    {
        auto out = open_output(dir / "effective_tensors.csv");
        write_effective_csv(out, t, cfg);
    }
    {
        auto out = open_output(dir / "report.txt");
        write_report(out, cfg, mesh, t, settings, notes);
    }
    if (opts.dump_fields) {
        std::vector<PointField> pf;
        std::vector<std::string> names;
        names.reserve(12);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) names.push_back("phi_" + index_label({a, b}));
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int c = 0; c < 2; ++c) names.push_back("psi_" + index_label({a, b, c}));
        for (int s = 0; s < 4; ++s) pf.push_back({names[static_cast<std::size_t>(s)], &fields.phi.field[s]});
        for (int s = 0; s < 8; ++s) pf.push_back({names[static_cast<std::size_t>(4 + s)], &fields.psi.field[s]});
        export_vtk(mesh, dir / "cell_fields.vtk", pf);
    }
    (void)no_field;
    log << "C (MPa):\n" << t.C << "\nD (N):\n" << t.D << "\nwrote " << (dir / "effective_tensors.csv").string()
        << " and " << (dir / "report.txt").string() << "\n";
    return 0;
}

namespace {

void write_curve(const fs::path& path, const EnergyCurve& c, const RunConfig& cfg) {
    auto out = open_output(path);
    write_header(out, cfg);
    out << "# model=" << to_string(c.model) << " k=" << format_double(c.stiffness)
        << " fit_residual=" << format_double(c.fit_residual) << "\n";
    out << "theta,energy_mJ\n";
    for (const auto& s : c.samples) out << format_double(s.theta) << ',' << format_double(s.energy) << '\n';
}

std::string size_tag(double v) {
    std::string s = format_double(v);
    for (auto& ch : s)
        if (ch == '.') ch = 'p';
    return s;
}

} // namespace

int cmd_validate(const RunConfig& cfg, const CommandOptions& opts, std::ostream& log) {
    const fs::path dir = output_dir(cfg, opts);
    std::vector<std::string> warnings;
    EffectiveTensors tensors;
    std::string source;
    if (cfg.tensors_file) {
        const TensorFile f = read_effective_csv(*cfg.tensors_file);
        if (f.geometry_hash != geometry_hash(cfg))
            warnings.push_back("stale tensors: geometry hash of " + cfg.tensors_file->string() + " is " +
                               f.geometry_hash + ", current geometry block hashes to " + geometry_hash(cfg) +
                               " (cell size, wall, material or mesh differ)");
        tensors.C = f.C;
        tensors.D = f.D;
        tensors.classical = voigt_unpack(f.C);
        tensors.gradient = voigt_unpack(f.D);
        tensors.epsilon = f.epsilon;
        source = cfg.tensors_file->string();
    } else {
        std::string note;
        const SolverSettings settings = cfg.cell_solver(&note);
        if (!note.empty()) warnings.push_back(note);
        CellGeometry geom = cfg.geometry;
        const PeriodicMesh mesh = cell_mesh(cfg, geom);
        tensors = homogenize(mesh, cfg.material(), geom.epsilon, settings, nullptr, 1e-8, cfg.psi_source);
        source = "computed inline (" + std::to_string(mesh.element_count()) + " elements)";
    }

    std::vector<SpecimenResult> results;
    for (double size : cfg.macro_sizes) {
        SpecimenSpec spec;
        spec.macro_size = size;
        spec.cell_size = cfg.geometry.cell_size;
        spec.wall_fraction = cfg.geometry.wall_thickness / cfg.geometry.cell_size;
        spec.thetas = cfg.thetas;
        spec.micro_elements_per_cell = cfg.micro_elements_per_cell;
        spec.macro_elements = cfg.macro_elements;
        spec.classical_element = cfg.classical_element;
        log << "specimen L = " << size << " mm (" << spec.cells_per_edge() << "x" << spec.cells_per_edge()
            << " cells)\n";
        results.push_back(run_specimen(spec, cfg.material(), tensors, cfg.specimen_solver));
        const SpecimenResult& r = results.back();
        const std::string tag = "L" + size_tag(size);
        write_curve(dir / ("curve_" + tag + "_micro.csv"), r.micro, cfg);
        write_curve(dir / ("curve_" + tag + "_classical.csv"), r.classical, cfg);
        write_curve(dir / ("curve_" + tag + "_gradient.csv"), r.gradient, cfg);
        for (const EnergyCurve* c : {&r.micro, &r.classical, &r.gradient})
            for (const auto& w : c->warnings) warnings.push_back(tag + " " + to_string(c->model) + ": " + w);
    }
    const std::vector<StudyRow> rows = study_rows(results);
    {
        auto out = open_output(dir / "size_effect.csv");
        write_header(out, cfg);
        out << "L_over_l,cells,model,k_coefficient,rel_error_vs_micro\n";
        for (const auto& row : rows)
            out << row.cells_per_edge << ',' << row.cells << ',' << to_string(row.model) << ','
                << format_double(row.stiffness) << ',' << format_double(row.rel_error) << '\n';
    }
    {
        auto out = open_output(dir / "validation_report.txt");
        write_header(out, cfg);
        out << "\neffective tensors: " << source << "\nC (MPa):\n";
        write_matrix(out, tensors.C);
        out << "D (N):\n";
        write_matrix(out, tensors.D);
        out << "\nspecimen: clamped at X1 = 0 (u = 0), X1 = L rotated: u1 = -theta (X2 - L/2), u2 = 0\n"
            << "gradient model: Bogner-Fox-Schmidt rectangles, u and u_,2 prescribed on both edges, "
            << "no higher-order tractions\n"
            << "classical model: " << to_string(cfg.classical_element) << " elements\n"
            << "micro model: " << cfg.micro_elements_per_cell << " elements per cell edge\n\n"
            << "L/l  model      k (mJ/rad^2)    rel. error vs micro\n";
        for (const auto& row : rows)
            out << std::setw(3) << row.cells_per_edge << "  " << std::left << std::setw(9) << to_string(row.model)
                << std::right << "  " << std::setw(14) << format_double(row.stiffness) << "  "
                << format_double(row.rel_error) << '\n';
        for (const auto& w : warnings) out << "warning: " << w << "\n";
    }
    for (const auto& w : warnings) log << "warning: " << w << "\n";
    log << "wrote " << 3 * results.size() << " curves and " << rows.size() << " study rows to " << dir.string()
        << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const CommandOptions& opts, std::ostream& log) {
    if (cfg.cell_sizes.empty()) throw ConfigError("sweep needs [sweep] cell_sizes");
    const fs::path dir = output_dir(cfg, opts);
    std::string note;
    const SolverSettings settings = cfg.cell_solver(&note);
    if (!note.empty()) log << "note: " << note << "\n";
    const double fraction = cfg.geometry.wall_thickness / cfg.geometry.cell_size;
    std::vector<EffectiveTensors> results;
    for (double size : cfg.cell_sizes) {
        CellGeometry geom = cfg.geometry;
        geom.cell_size = size;
        geom.wall_thickness = fraction * size;
        geom.validate();
        if (cfg.mesh_file) throw ConfigError("sweep rebuilds the lattice per size and cannot use [mesh] file");
        const PeriodicMesh mesh = build_square_lattice_rve(geom, cfg.elements_per_cell);
        results.push_back(homogenize(mesh, cfg.material(), geom.epsilon, settings, nullptr, 1e-8, cfg.psi_source));
        log << "cell size " << size << ": D_221221 = " << results.back().D(1, 1) << " N\n";
    }
    auto out = open_output(dir / "sweep.csv");
    write_header(out, cfg);
    out << "cell_size,tensor,component,value,ratio\n";
    const EffectiveTensors& ref = results.front();
    const double c_scale = ref.C.cwiseAbs().maxCoeff(), d_scale = ref.D.cwiseAbs().maxCoeff();
    auto ratio = [](double v, double r, double scale) {
        return std::abs(r) > 1e-9 * scale ? format_double(v / r) : std::string();
    };
    for (std::size_t k = 0; k < results.size(); ++k) {
        const std::string size = format_double(cfg.cell_sizes[k]);
        for (int r = 0; r < 3; ++r)
            for (int c = r; c < 3; ++c)
                out << size << ",C," << c_label(r, c) << ',' << format_double(results[k].C(r, c)) << ','
                    << ratio(results[k].C(r, c), ref.C(r, c), c_scale) << '\n';
        for (int r = 0; r < 6; ++r)
            for (int c = r; c < 6; ++c)
                out << size << ",D," << d_label(r, c) << ',' << format_double(results[k].D(r, c)) << ','
                    << ratio(results[k].D(r, c), ref.D(r, c), d_scale) << '\n';
    }
    log << "wrote " << (dir / "sweep.csv").string() << "\n";
    return 0;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Strain-gradient homogenization of periodic lattices"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    std::string config;
    std::string output;
    bool dump = false;
    std::string mesh_export;
    auto add = [&](const char* name, const char* help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", config, "INI configuration file")->required();
        sub->add_option("--output", output, "output directory (overrides [output] directory)");
        sub->add_flag("--dump-fields", dump, "write phi and psi as VTK point data");
        sub->add_option("--mesh-export", mesh_export, "export the cell mesh (vtk or mesh)");
        return sub;
    };
    CLI::App* hom = add("homogenize", "compute effective C and D of the cell");
    CLI::App* val = add("validate", "run the micro / classical / gradient specimen study");
    CLI::App* swp = add("sweep", "homogenize over a list of cell sizes");
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }
    try {
        const RunConfig cfg = load_config(config);
        CommandOptions opts;
        if (!output.empty()) opts.output_dir = output;
        opts.dump_fields = dump;
        if (!mesh_export.empty()) opts.mesh_export = mesh_export;
        if (hom->parsed()) return cmd_homogenize(cfg, opts, out);
        if (val->parsed()) return cmd_validate(cfg, opts, out);
        if (swp->parsed()) return cmd_sweep(cfg, opts, out);
        return 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace gradhom
