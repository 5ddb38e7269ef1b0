#pragma once

#include "gradhom/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace gradhom {

enum class Phase : std::uint8_t { matrix = 0, inclusion = 1 };

std::string to_string(Phase p);

/// Square-lattice basic cell. Lengths are in mm in global coordinates; the
/// mesh itself lives in local coordinates y = (X - Xc) / epsilon.
struct CellGeometry {
    double cell_size = 1.0;       // l
    double wall_thickness = 0.1;  // t
    int repetitions = 1;          // RVE holds repetitions x repetitions cells
    double epsilon = 1.0;         // homothetic ratio

    double local_cell_size() const { return cell_size / epsilon; }
    /// RVE edge length w = n l / epsilon in local coordinates.
    double rve_width() const { return repetitions * cell_size / epsilon; }
    double inclusion_fraction() const;

    /// Throws ResolutionError on violated invariants.
    void validate() const;
};

/// Isotropic two-phase material (E in MPa).
struct MicroMaterial {
    double youngs_matrix = 100.0;
    double poisson_matrix = 0.3;
    double youngs_inclusion = 1e-30;
    double poisson_inclusion = 1e-30;

    void validate() const;
    Tensor4 stiffness(Phase p) const;
    static MicroMaterial homogeneous(double youngs, double poisson) {
        return {youngs, poisson, youngs, poisson};
    }
};

struct PeriodicPair {
    int master;
    int slave;
    Eigen::Vector2d shift; // slave = master + shift
};

/// Quadrilateral mesh of a square domain. Periodic meshes carry master/slave
/// pairs: left -> right for every left-edge node except the top corner,
/// bottom -> top for every bottom-edge node except the right corner, and the
/// four corners in corner_group with corner_group[0] as their master.
struct PeriodicMesh {
    std::vector<Eigen::Vector2d> nodes;
    std::vector<std::array<int, 4>> elements; // counter-clockwise
    std::vector<Phase> phases;
    std::vector<PeriodicPair> periodic_pairs;
    std::array<int, 4> corner_group{-1, -1, -1, -1};
    double width = 0.0;
    std::vector<std::string> notes;

    bool periodic() const { return corner_group[0] >= 0; }
    std::size_t node_count() const { return nodes.size(); }
    std::size_t element_count() const { return elements.size(); }

    double element_area(std::size_t e) const;
    double area() const;
    double phase_fraction(Phase p) const;
    Eigen::Vector2d centroid() const;

    /// Checks topology, orientation and the pair translations. Throws
    /// MeshFormatError or PairingError.
    void validate() const;
};

/// Structured mesh of [origin, origin + width]^2 with nx x nx elements, phase
/// picked at each element centroid. No periodic pairs.
PeriodicMesh build_structured_mesh(int nx, double width, const Eigen::Vector2d& origin,
                                   const std::function<Phase(const Eigen::Vector2d&)>& phase_at);

/// n x n square-lattice cells centred at y = 0, walls of width t centred on the
/// cell boundaries, periodic pairs populated. elements_per_cell_edge >= 10 and
/// the half wall must resolve to at least one element layer; a half wall that
/// falls between layers is snapped to the nearest layer boundary and noted.
PeriodicMesh build_square_lattice_rve(const CellGeometry& geom, int elements_per_cell_edge);

/// Same lattice without periodic pairing; used for the micro-resolved specimen.
PeriodicMesh build_square_lattice_grid(const CellGeometry& geom, int elements_per_cell_edge,
                                       const Eigen::Vector2d& origin);

/// Rebuilds periodic_pairs and corner_group by coordinate matching with
/// tolerance rel_tol * width. Throws PairingError listing unmatched nodes.
void pair_periodic_boundary(PeriodicMesh& mesh, double rel_tol = 1e-8);

/// `gradhom-mesh v1` text format.
void write_mesh(const PeriodicMesh& mesh, std::ostream& out);
void export_mesh(const PeriodicMesh& mesh, const std::filesystem::path& path);
PeriodicMesh read_mesh(std::istream& in, const std::string& source = "<stream>");
PeriodicMesh import_mesh(const std::filesystem::path& path);

/// Named nodal vector field (2 components per node) for VTK output.
struct PointField {
    std::string name;
    const Eigen::VectorXd* values;
};

/// Legacy-VTK ASCII unstructured grid with a phase cell field.
void export_vtk(const PeriodicMesh& mesh, const std::filesystem::path& path,
                const std::vector<PointField>& fields = {});

} // namespace gradhom
