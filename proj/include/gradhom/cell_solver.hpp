#pragma once

#include "gradhom/fem_core.hpp"
#include "gradhom/lattice_mesh.hpp"
#include "gradhom/tensor.hpp"

#include <array>
#include <string>

namespace gradhom {

// Field slots: phi(a, b) at 2a + b, psi(a, b, c) at 4a + 2b + c (zero based).
inline constexpr int phi_slot(int a, int b) { return 2 * a + b; }
inline constexpr int psi_slot(int a, int b, int c) { return 4 * a + 2 * b + c; }

/// First-order fluctuations phi_ab (nodal, 2 dofs per node, local length units).
struct PhiFields {
    std::array<Eigen::VectorXd, 4> field;
    std::array<SolveReport, 4> report;

    const Eigen::VectorXd& operator()(int a, int b) const { return field[phi_slot(a, b)]; }
};

/// Second-order fluctuations psi_abc (local length squared).
struct PsiFields {
    std::array<Eigen::VectorXd, 8> field;
    std::array<SolveReport, 8> report;

    const Eigen::VectorXd& operator()(int a, int b, int c) const { return field[psi_slot(a, b, c)]; }
};

struct CellSolution {
    PhiFields phi;
    PsiFields psi;
};

/// C^M = <L^T C L> with diagnostics of the identity <C L> = <L^T C L>.
struct ClassicalTensor {
    Tensor4 stiffness;            // symmetrized C^M
    Tensor4 mean_stress;          // <C_ijkl L_abkl> stored as (i, j, a, b)
    double asymmetry = 0.0;       // symmetry defect before symmetrizing
    double consistency = 0.0;     // max |<C L> - <L^T C L>| / max |C^M|
};

/// How the -C^M term of the psi problem (the macroscopic body force) is spread
/// over the cell. uniform puts it on every point, including voids; stiffness
/// weights it by the local Young's modulus relative to its cell mean, so a
/// near-void phase carries none of it. Both coincide for homogeneous material.
enum class SourceDistribution { uniform, stiffness };

SourceDistribution parse_source_distribution(const std::string& name);
std::string to_string(SourceDistribution d);

/// Assembled and condensed cell problem shared by all twelve solves; the
/// stiffness is factored or preconditioned once.
class CellProblem {
public:
    CellProblem(const PeriodicMesh& mesh, const MicroMaterial& material, const SolverSettings& settings,
                SourceDistribution source = SourceDistribution::stiffness);
    /// element_density: weight of the -C^M term per element (cell mean 1).
    CellProblem(const PeriodicMesh& mesh, std::vector<Tensor4> element_tensors, std::vector<double> element_density,
                const SolverSettings& settings);

    CellProblem(const CellProblem&) = delete;
    CellProblem& operator=(const CellProblem&) = delete;

    PhiFields solve_phi() const;
    ClassicalTensor compute_classical(const PhiFields& phi) const;
    /// Throws ConsistencyError if the source mean exceeds 1e-6 of max |C^M|.
    PsiFields solve_psi(const PhiFields& phi, const Tensor4& classical) const;

    /// Load vector of the phi_ab problem: -integral of C_ijab dv_i/dy_j.
    Eigen::VectorXd phi_load(int a, int b) const;
    /// Load vector of the psi_abc problem.
    Eigen::VectorXd psi_load(const PhiFields& phi, const Tensor4& classical, int a, int b, int c) const;
    /// (1/V) integral of (C_ickl L_abkl - rho C^M_icab), indexed (i) for given a, b, c.
    Eigen::Vector2d psi_source_mean(const PhiFields& phi, const Tensor4& classical, int a, int b, int c) const;

    const PeriodicMesh& mesh() const { return *mesh_; }
    const LinearSystem& system() const { return system_; }
    const PeriodicSystem& periodic_system() const { return periodic_; }
    const Tensor4& element_tensor(std::size_t e) const { return system_.element_stiffness_tensor[e]; }
    double element_density(std::size_t e) const { return density_[e]; }
    double volume() const { return system_.volume; }

private:
    const PeriodicMesh* mesh_;
    LinearSystem system_;
    PeriodicSystem periodic_;
    std::vector<double> density_;
    SolverSettings settings_;
    std::unique_ptr<PeriodicSolver> solver_;
};

PhiFields solve_phi(const PeriodicMesh& mesh, const MicroMaterial& material, const SolverSettings& settings = {});
ClassicalTensor compute_CM(const PeriodicMesh& mesh, const MicroMaterial& material, const PhiFields& phi);
PsiFields solve_psi(const PeriodicMesh& mesh, const MicroMaterial& material, const PhiFields& phi,
                    const Tensor4& classical, const SolverSettings& settings = {},
                    SourceDistribution source = SourceDistribution::stiffness);

/// Per-element weights of the -C^M term, normalized to unit cell mean.
std::vector<double> source_density(const PeriodicMesh& mesh, const MicroMaterial& material, SourceDistribution d);

/// L_abij = d_ia d_jb + d phi_abi / d y_j at a quadrature point.
Tensor4 localization_L(const PeriodicMesh& mesh, std::size_t e, const Q4Point& q, const PhiFields& phi);

} // namespace gradhom
