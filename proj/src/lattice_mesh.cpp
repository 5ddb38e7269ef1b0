#include "gradhom/lattice_mesh.hpp"

#include "gradhom/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gradhom {

std::string to_string(Phase p) { return p == Phase::matrix ? "matrix" : "inclusion"; }

double CellGeometry::inclusion_fraction() const {
    const double r = 1.0 - wall_thickness / cell_size;
    return r * r;
}

void CellGeometry::validate() const {
    std::ostringstream msg;
    if (!(cell_size > 0.0))
        msg << "cell size must be positive (got " << cell_size << ")";
    else if (!(wall_thickness > 0.0) || wall_thickness > cell_size)
        msg << "wall thickness must satisfy 0 < t <= l (got t=" << wall_thickness << ", l=" << cell_size << ")";
    else if (repetitions < 1)
        msg << "repetitions must be a positive integer (got " << repetitions << ")";
    else if (!(epsilon > 0.0))
        msg << "homothetic ratio must be positive (got " << epsilon << ")";
    if (!msg.str().empty()) throw ResolutionError(msg.str());
}

void MicroMaterial::validate() const {
    auto check = [](const char* phase, double e, double nu) {
        if (!(e > 0.0) || !(nu > -1.0) || !(nu < 0.5)) {
            std::ostringstream msg;
            msg << phase << " material needs E > 0 and -1 < nu < 0.5 (got E=" << e << ", nu=" << nu << ")";
            throw MaterialError(msg.str());
        }
    };
    check("matrix", youngs_matrix, poisson_matrix);
    check("inclusion", youngs_inclusion, poisson_inclusion);
}

Tensor4 MicroMaterial::stiffness(Phase p) const {
    return p == Phase::matrix ? isotropic_stiffness(youngs_matrix, poisson_matrix)
                              : isotropic_stiffness(youngs_inclusion, poisson_inclusion);
}

double PeriodicMesh::element_area(std::size_t e) const {
    const auto& q = elements[e];
    double a = 0.0;
    for (int k = 0; k < 4; ++k) {
        const auto& p0 = nodes[q[k]];
        const auto& p1 = nodes[q[(k + 1) % 4]];
        a += p0.x() * p1.y() - p1.x() * p0.y();
    }
    return 0.5 * a;
}

double PeriodicMesh::area() const {
    double a = 0.0;
    for (std::size_t e = 0; e < elements.size(); ++e) a += element_area(e);
    return a;
}

double PeriodicMesh::phase_fraction(Phase p) const {
    double a = 0.0;
    for (std::size_t e = 0; e < elements.size(); ++e)
        if (phases[e] == p) a += element_area(e);
    return a / area();
}

Eigen::Vector2d PeriodicMesh::centroid() const {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    double a = 0.0;
    for (std::size_t e = 0; e < elements.size(); ++e) {
        Eigen::Vector2d m = Eigen::Vector2d::Zero();
        for (int k : elements[e]) m += nodes[k];
        const double ae = element_area(e);
        c += 0.25 * ae * m;
        a += ae;
    }
    return c / a;
}

void PeriodicMesh::validate() const {
    const auto n = static_cast<int>(nodes.size());
    if (phases.size() != elements.size()) throw MeshFormatError("phase tag count differs from element count");
    for (std::size_t e = 0; e < elements.size(); ++e) {
        for (int k : elements[e])
            if (k < 0 || k >= n) throw MeshFormatError("element " + std::to_string(e) + " references missing node");
        if (!(element_area(e) > 0.0))
            throw MeshFormatError("element " + std::to_string(e) + " is not counter-clockwise or is degenerate");
    }
    const double tol = 1e-12 * width;
    std::vector<int> role(nodes.size(), 0); // 1 master, 2 slave
    auto mark = [&](int master, int slave) {
        if (role[master] == 2 || role[slave] == 1)
            throw PairingError("node " + std::to_string(role[master] == 2 ? master : slave) +
                               " is both master and slave");
        role[master] = 1;
        role[slave] = 2;
    };
    for (const auto& p : periodic_pairs) {
        if ((nodes[p.slave] - nodes[p.master] - p.shift).norm() > tol)
            throw PairingError("slave node " + std::to_string(p.slave) + " is not a translate of master " +
                               std::to_string(p.master));
        if (std::abs(p.shift.norm() - width) > tol)
            throw PairingError("pair shift differs from the RVE edge length");
        mark(p.master, p.slave);
    }
    if (periodic()) {
        const Eigen::Vector2d& c0 = nodes[corner_group[0]];
        const std::array<Eigen::Vector2d, 4> offsets{Eigen::Vector2d(0, 0), Eigen::Vector2d(width, 0),
                                                      Eigen::Vector2d(0, width), Eigen::Vector2d(width, width)};
        for (int k = 1; k < 4; ++k) {
            if ((nodes[corner_group[k]] - c0 - offsets[k]).norm() > tol)
                throw PairingError("corner group is not a lattice translate of its master");
            mark(corner_group[0], corner_group[k]);
        }
    }
}

PeriodicMesh build_structured_mesh(int nx, double width, const Eigen::Vector2d& origin,
                                   const std::function<Phase(const Eigen::Vector2d&)>& phase_at) {
    if (nx < 1) throw ResolutionError("structured mesh needs at least one element per edge");
    PeriodicMesh mesh;
    mesh.width = width;
    const int np = nx + 1;
    mesh.nodes.reserve(static_cast<std::size_t>(np) * np);
    auto coord = [&](int i) { return width * static_cast<double>(i) / nx; };
    for (int j = 0; j < np; ++j)
        for (int i = 0; i < np; ++i) mesh.nodes.emplace_back(origin.x() + coord(i), origin.y() + coord(j));
    mesh.elements.reserve(static_cast<std::size_t>(nx) * nx);
    mesh.phases.reserve(static_cast<std::size_t>(nx) * nx);
    for (int j = 0; j < nx; ++j)
        for (int i = 0; i < nx; ++i) {
            const int n0 = j * np + i;
            mesh.elements.push_back({n0, n0 + 1, n0 + np + 1, n0 + np});
            const Eigen::Vector2d c = 0.25 * (mesh.nodes[n0] + mesh.nodes[n0 + 1] + mesh.nodes[n0 + np + 1] +
                                              mesh.nodes[n0 + np]);
            mesh.phases.push_back(phase_at(c));
        }
    return mesh;
}

namespace {

// Number of element layers of the half wall (t/2) that lie in the matrix, by
// the centroid rule, and a note if the wall does not fall on a layer boundary.
int half_wall_layers(const CellGeometry& geom, int per_cell, std::vector<std::string>& notes) {
    if (per_cell < 10)
        throw ResolutionError("at least 10 elements per cell edge are required (got " + std::to_string(per_cell) +
                              ")");
    if (geom.wall_thickness >= geom.cell_size) return per_cell;
    const double exact = geom.wall_thickness / geom.cell_size * per_cell / 2.0;
    int layers = 0;
    while (layers < per_cell / 2 && layers + 0.5 < exact - 1e-9) ++layers;
    if (layers == 0) {
        std::ostringstream msg;
        msg << "wall thickness " << geom.wall_thickness << " is not resolvable with " << per_cell
            << " elements per cell edge: the half wall spans " << exact << " element layers";
        throw ResolutionError(msg.str());
    }
    if (std::abs(exact - layers) > 1e-9) {
        std::ostringstream msg;
        msg << "half wall of " << exact << " element layers snapped to " << layers
            << " layers; effective wall thickness " << 2.0 * layers * geom.cell_size / per_cell;
        notes.push_back(msg.str());
    }
    return layers;
}

PeriodicMesh lattice_grid(const CellGeometry& geom, int per_cell, const Eigen::Vector2d& origin) {
    geom.validate();
    std::vector<std::string> notes;
    const int layers = half_wall_layers(geom, per_cell, notes);
    const int nx = geom.repetitions * per_cell;
    const double width = geom.rve_width();
    const double h = width / nx;
    // Phase from integer element indices so cells are exact copies of each other.
    auto phase_at = [&](const Eigen::Vector2d& c) {
        const int i = std::clamp(static_cast<int>(std::floor((c.x() - origin.x()) / h)), 0, nx - 1);
        const int j = std::clamp(static_cast<int>(std::floor((c.y() - origin.y()) / h)), 0, nx - 1);
        auto in_wall = [&](int k) {
            const int local = k % per_cell;
            return std::min(local, per_cell - 1 - local) < layers;
        };
        return in_wall(i) || in_wall(j) ? Phase::matrix : Phase::inclusion;
    };
    PeriodicMesh mesh = build_structured_mesh(nx, width, origin, phase_at);
    mesh.notes = std::move(notes);
    return mesh;
}

} // namespace

PeriodicMesh build_square_lattice_grid(const CellGeometry& geom, int per_cell, const Eigen::Vector2d& origin) {
    return lattice_grid(geom, per_cell, origin);
}

PeriodicMesh build_square_lattice_rve(const CellGeometry& geom, int per_cell) {
    const double half = 0.5 * geom.rve_width();
    PeriodicMesh mesh = lattice_grid(geom, per_cell, Eigen::Vector2d(-half, -half));
    const int nx = geom.repetitions * per_cell;
    const int np = nx + 1;
    const double w = mesh.width;
    mesh.periodic_pairs.reserve(2 * static_cast<std::size_t>(nx));
    for (int j = 0; j < nx; ++j) mesh.periodic_pairs.push_back({j * np, j * np + nx, Eigen::Vector2d(w, 0.0)});
    for (int i = 0; i < nx; ++i) mesh.periodic_pairs.push_back({i, nx * np + i, Eigen::Vector2d(0.0, w)});
    mesh.corner_group = {0, nx, nx * np, nx * np + nx};
    // Slaves take the exact translate of their master.
    for (const auto& p : mesh.periodic_pairs) mesh.nodes[p.slave] = mesh.nodes[p.master] + p.shift;
    mesh.nodes[mesh.corner_group[3]] = mesh.nodes[0] + Eigen::Vector2d(w, w);
    return mesh;
}

void pair_periodic_boundary(PeriodicMesh& mesh, double rel_tol) {
    if (mesh.nodes.empty()) throw PairingError("cannot pair an empty mesh");
    Eigen::Vector2d lo = mesh.nodes.front(), hi = mesh.nodes.front();
    for (const auto& p : mesh.nodes) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double w = hi.x() - lo.x();
    if (std::abs((hi.y() - lo.y()) - w) > rel_tol * w)
        throw PairingError("periodic meshes must be square");
    mesh.width = w;
    const double tol = rel_tol * w;
    auto near = [tol](double a, double b) { return std::abs(a - b) <= tol; };

    // side 0: x, side 1: y. Collect (coordinate along the edge, node) on each face.
    std::vector<std::string> unmatched;
    std::vector<PeriodicPair> pairs;
    for (int axis = 0; axis < 2; ++axis) {
        const int along = 1 - axis;
        std::vector<std::pair<double, int>> low, high;
        for (int k = 0; k < static_cast<int>(mesh.nodes.size()); ++k) {
            const auto& p = mesh.nodes[k];
            if (near(p[axis], lo[axis]) && !near(p[along], hi[along])) low.emplace_back(p[along], k);
            if (near(p[axis], hi[axis]) && !near(p[along], hi[along])) high.emplace_back(p[along], k);
        }
        std::sort(low.begin(), low.end());
        std::sort(high.begin(), high.end());
        std::vector<bool> used(high.size(), false);
        for (const auto& [s, master] : low) {
            auto it = std::lower_bound(high.begin(), high.end(), std::make_pair(s - tol, -1));
            if (it != high.end() && near(it->first, s)) {
                used[it - high.begin()] = true;
                Eigen::Vector2d shift = Eigen::Vector2d::Zero();
                shift[axis] = w;
                pairs.push_back({master, it->second, shift});
            } else {
                const auto& p = mesh.nodes[master];
                unmatched.push_back("(" + std::to_string(p.x()) + ", " + std::to_string(p.y()) + ")");
            }
        }
        for (std::size_t h = 0; h < high.size(); ++h)
            if (!used[h]) {
                const auto& p = mesh.nodes[high[h].second];
                unmatched.push_back("(" + std::to_string(p.x()) + ", " + std::to_string(p.y()) + ")");
            }
    }
    std::array<int, 4> corners{-1, -1, -1, -1};
    const std::array<Eigen::Vector2d, 4> corner_at{lo, Eigen::Vector2d(hi.x(), lo.y()), Eigen::Vector2d(lo.x(), hi.y()),
                                                   hi};
    for (int k = 0; k < static_cast<int>(mesh.nodes.size()); ++k)
        for (int c = 0; c < 4; ++c)
            if (near(mesh.nodes[k].x(), corner_at[c].x()) && near(mesh.nodes[k].y(), corner_at[c].y())) corners[c] = k;
    for (int c = 0; c < 4; ++c)
        if (corners[c] < 0) unmatched.push_back("missing corner node");
    if (!unmatched.empty()) {
        std::string msg = "periodic boundary nodes without a partner:";
        for (const auto& s : unmatched) msg += " " + s;
        throw PairingError(msg);
    }
    mesh.periodic_pairs = std::move(pairs);
    mesh.corner_group = corners;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

} // namespace

void write_mesh(const PeriodicMesh& mesh, std::ostream& out) {
    out << "gradhom-mesh v1\n" << mesh.nodes.size() << "\n";
    for (const auto& p : mesh.nodes) out << format_double(p.x()) << ' ' << format_double(p.y()) << '\n';
    out << mesh.elements.size() << "\n";
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto& q = mesh.elements[e];
        out << q[0] << ' ' << q[1] << ' ' << q[2] << ' ' << q[3] << ' ' << to_string(mesh.phases[e]) << '\n';
    }
}

void export_mesh(const PeriodicMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    write_mesh(mesh, out);
}

PeriodicMesh read_mesh(std::istream& in, const std::string& source) {
    int line_no = 0;
    std::string line;
    auto next = [&]() -> std::istringstream {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") != std::string::npos && line[line.find_first_not_of(" \t")] != '#')
                return std::istringstream(line);
        }
        throw MeshFormatError(source + ": unexpected end of file after line " + std::to_string(line_no));
    };
    auto fail = [&](const std::string& what) {
        throw MeshFormatError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    {
        auto s = next();
        std::string magic, version, extra;
        s >> magic >> version;
        if (magic != "gradhom-mesh" || version != "v1" || (s >> extra)) fail("expected header 'gradhom-mesh v1'");
    }
    auto read_count = [&]() {
        auto s = next();
        long n = -1;
        std::string extra;
        if (!(s >> n) || n < 0 || (s >> extra)) fail("expected a non-negative count");
        return static_cast<std::size_t>(n);
    };
    PeriodicMesh mesh;
    const std::size_t n_nodes = read_count();
    mesh.nodes.reserve(n_nodes);
    for (std::size_t k = 0; k < n_nodes; ++k) {
        auto s = next();
        std::string xs, ys, extra;
        if (!(s >> xs >> ys) || (s >> extra)) fail("expected 'x y'");
        double x = 0, y = 0;
        auto rx = std::from_chars(xs.data(), xs.data() + xs.size(), x);
        auto ry = std::from_chars(ys.data(), ys.data() + ys.size(), y);
        if (rx.ec != std::errc() || ry.ec != std::errc() || rx.ptr != xs.data() + xs.size() ||
            ry.ptr != ys.data() + ys.size())
            fail("malformed coordinate");
        mesh.nodes.emplace_back(x, y);
    }
    const std::size_t n_elems = read_count();
    mesh.elements.reserve(n_elems);
    for (std::size_t e = 0; e < n_elems; ++e) {
        auto s = next();
        std::vector<std::string> tok;
        for (std::string t; s >> t;) tok.push_back(t);
        if (tok.size() != 5) fail("expected a quadrilateral 'n0 n1 n2 n3 phase' (" + std::to_string(tok.size()) +
                                  " fields found)");
        std::array<int, 4> q{};
        for (int k = 0; k < 4; ++k) {
            auto r = std::from_chars(tok[k].data(), tok[k].data() + tok[k].size(), q[k]);
            if (r.ec != std::errc() || r.ptr != tok[k].data() + tok[k].size() || q[k] < 0 ||
                q[k] >= static_cast<int>(n_nodes))
                fail("invalid node index '" + tok[k] + "'");
        }
        Phase ph;
        if (tok[4] == "matrix" || tok[4] == "0")
            ph = Phase::matrix;
        else if (tok[4] == "inclusion" || tok[4] == "1")
            ph = Phase::inclusion;
        else
            fail("unknown phase '" + tok[4] + "'");
        mesh.elements.push_back(q);
        mesh.phases.push_back(ph);
    }
    return mesh;
}

PeriodicMesh import_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MeshFormatError("cannot open mesh file " + path.string());
    PeriodicMesh mesh = read_mesh(in, path.string());
    pair_periodic_boundary(mesh);
    // Shift so the geometric centre sits at y = 0.
    const Eigen::Vector2d c = mesh.centroid();
    if (c.norm() > 1e-12 * mesh.width) {
        for (auto& p : mesh.nodes) p -= c;
        mesh.notes.push_back("imported mesh recentred on its centroid");
    }
    mesh.validate();
    return mesh;
}

void export_vtk(const PeriodicMesh& mesh, const std::filesystem::path& path, const std::vector<PointField>& fields) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "# vtk DataFile Version 3.0\ngradhom mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.nodes.size() << " double\n";
    for (const auto& p : mesh.nodes) out << format_double(p.x()) << ' ' << format_double(p.y()) << " 0\n";
    out << "CELLS " << mesh.elements.size() << ' ' << 5 * mesh.elements.size() << '\n';
    for (const auto& q : mesh.elements) out << "4 " << q[0] << ' ' << q[1] << ' ' << q[2] << ' ' << q[3] << '\n';
    out << "CELL_TYPES " << mesh.elements.size() << '\n';
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) out << "9\n";
    out << "CELL_DATA " << mesh.elements.size() << "\nSCALARS phase int 1\nLOOKUP_TABLE default\n";
    for (auto p : mesh.phases) out << static_cast<int>(p) << '\n';
    if (!fields.empty()) {
        out << "POINT_DATA " << mesh.nodes.size() << '\n';
        for (const auto& f : fields) {
            out << "VECTORS " << f.name << " double\n";
            for (std::size_t k = 0; k < mesh.nodes.size(); ++k)
                out << format_double((*f.values)[2 * k]) << ' ' << format_double((*f.values)[2 * k + 1]) << " 0\n";
        }
    }
}

} // namespace gradhom
