#pragma once

#include "gradhom/cell_solver.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gradhom {

/// L and M at one quadrature point.
struct LocalizationPoint {
    std::size_t element = 0;
    Eigen::Vector2d y;
    double weight = 0.0; // quadrature weight times det J
    Tensor4 L;           // (a, b, i, j)
    Tensor5 M;           // (a, b, c, i, j)
};

using LocalizationFields = std::vector<LocalizationPoint>;

/// Calls fn(point) for every 2x2 Gauss point of the mesh in element order.
/// L_abij = d_ia d_jb + d_j phi_abi,
/// M_abcij = y_c L_abij + phi_abi d_jc + d_j psi_abci.
void for_each_localization(const PeriodicMesh& mesh, const CellSolution& cell,
                           const std::function<void(const LocalizationPoint&)>& fn);

LocalizationFields localization_fields(const PeriodicMesh& mesh, const CellSolution& cell);

/// Volume integrals before the correction.
struct RawEffective {
    Tensor4 C; // (1/V) int C L L
    Tensor6 D; // eps^2 / V int C M M, (a, b, c, d, e, f)
    Tensor5 G; // 2 eps / V int C L M, (a, b, c, d, e)
};

RawEffective integrate_effective(const CellProblem& problem, const CellSolution& cell, double epsilon);

/// I_kn = eps^2 (1/V) int y_k y_n dV.
Eigen::Matrix2d second_moment(const PeriodicMesh& mesh, double epsilon);

/// D^M_abcdef = Dbar_abcdef - C^M_abde I_cf.
Tensor6 apply_correction(const Tensor4& classical, const Tensor6& raw_gradient, const Eigen::Matrix2d& moment);

/// Largest entry of the D4 block defect: the two diagonal 3x3 blocks of
/// Voigt D differ, or the off-diagonal blocks are nonzero. Relative to
/// max |D|.
double d4_block_defect(const Voigt6& d);

struct CellDiagnostics {
    double phi_consistency = 0.0;  // <C L> against <L^T C L>, relative
    double classical_asymmetry = 0.0;
    double gradient_asymmetry = 0.0;
    double g_relative = 0.0;       // |G| / sqrt(|C| |D|)
    double g_norm = 0.0;
    double d4_defect = 0.0;
    double phi_mean = 0.0;         // largest |<phi>| / w
    double psi_mean = 0.0;         // largest |<psi>| / w^2
    double mean_gradient = 0.0;    // largest |<d phi / d y>|
    long total_iterations = 0;
    double worst_residual = 0.0;   // largest relative final residual
};

struct EffectiveTensors {
    Tensor4 classical;      // C^M, symmetrized
    Tensor6 gradient;       // D^M, symmetrized
    Voigt3 C;
    Voigt6 D;
    Tensor5 G;
    Eigen::Matrix2d I_bar = Eigen::Matrix2d::Zero();
    double epsilon = 1.0;
    double volume = 0.0;
    CellDiagnostics diagnostics;
};

/// Whole pipeline on a prepared mesh: phi, C^M, psi, integrals, correction.
/// Throws ConsistencyError if the consistency identity fails by more than
/// consistency_tol.
EffectiveTensors homogenize(const PeriodicMesh& mesh, const MicroMaterial& material, double epsilon,
                            const SolverSettings& settings = {}, CellSolution* fields = nullptr,
                            double consistency_tol = 1e-8, SourceDistribution source = SourceDistribution::stiffness);

} // namespace gradhom
