#pragma once

#include "gradhom/effective_tensors.hpp"

#include <string>
#include <vector>

namespace gradhom {

enum class Model { micro, classical, gradient };
std::string to_string(Model m);

enum class MacroElement { hermite, bilinear };
MacroElement parse_macro_element(const std::string& name);
std::string to_string(MacroElement e);

/// Square specimen [0, L]^2 clamped at X1 = 0 with a linearized rotation
/// theta of the edge X1 = L about its midpoint.
struct SpecimenSpec {
    double macro_size = 2.0;         // L (mm)
    double cell_size = 1.0;          // l (mm)
    double wall_fraction = 0.1;      // t / l
    std::vector<double> thetas{0.0, 0.05, 0.1, 0.15, 0.2};
    int micro_elements_per_cell = 20;
    int macro_elements = 20;         // per edge
    MacroElement classical_element = MacroElement::hermite;

    int cells_per_edge() const;      // L / l, throws ConfigError unless integral
    void validate() const;
};

struct EnergySample {
    double theta;
    double energy; // mJ (per mm thickness)
};

struct EnergyCurve {
    Model model = Model::micro;
    std::vector<EnergySample> samples;
    double stiffness = 0.0;       // k of E = k theta^2 / 2, least squares
    double fit_residual = 0.0;    // relative residual of the quadratic fit
    std::vector<std::string> warnings;

    double energy_at(double theta) const; // from the fit
};

/// Least-squares k with the relative residual ||E - k theta^2/2|| / ||E||.
void fit_quadratic(EnergyCurve& curve);

/// Bogner-Fox-Schmidt bicubic Hermite rectangle: 16 scalar shape functions
/// ordered node-major (corners counter-clockwise from the lower left), dofs
/// (u, u_,1, u_,2, u_,12) per node.
struct HermiteRectangle {
    double hx, hy;

    /// Shape values and their first and second derivatives at (s, t) in [0,1]^2.
    void evaluate(double s, double t, Eigen::Matrix<double, 16, 1>& n, Eigen::Matrix<double, 16, 2>& dn,
                  Eigen::Matrix<double, 16, 3>& ddn) const; // ddn columns: ,11 ,22 ,12
};

/// Stiffness of a BFS element for the energy
/// 1/2 int C_ijkl u_i,j u_k,l + D_abcdef u_a,bc u_d,ef; 32 dofs ordered
/// 16 * component + shape.
Eigen::MatrixXd hermite_element_stiffness(const HermiteRectangle& el, const Tensor4& c, const Tensor6* d);

/// Smallest eigenvalue of D as a quadratic form on second gradients
/// u_a,bc (symmetric in b, c).
double gradient_form_min_eigenvalue(const Tensor6& d);

EnergyCurve micro_reference_solve(const SpecimenSpec& spec, const MicroMaterial& material,
                                  const SolverSettings& settings = {});
EnergyCurve macro_classical_solve(const SpecimenSpec& spec, const Tensor4& classical,
                                  const SolverSettings& settings = {});
EnergyCurve macro_gradient_solve(const SpecimenSpec& spec, const Tensor4& classical, const Tensor6& gradient,
                                 const SolverSettings& settings = {});

struct StudyRow {
    int cells_per_edge = 0;
    int cells = 0;
    Model model = Model::micro;
    double stiffness = 0.0;
    double rel_error = 0.0; // (k - k_micro) / k_micro
};

struct SpecimenResult {
    SpecimenSpec spec;
    EffectiveTensors tensors;
    EnergyCurve micro, classical, gradient;
};

/// Runs the three models of one specimen with given effective tensors.
SpecimenResult run_specimen(const SpecimenSpec& spec, const MicroMaterial& material, const EffectiveTensors& tensors,
                            const SolverSettings& settings);

/// Study rows (micro, classical, gradient per specimen) with errors
/// relative to the micro stiffness.
std::vector<StudyRow> study_rows(const std::vector<SpecimenResult>& specimens);

/// Homogenizes the basic cell of each specimen and runs the three models.
/// Rows are ordered by specimen, then micro, classical, gradient.
struct StudyResult {
    std::vector<SpecimenResult> specimens;
    std::vector<StudyRow> rows;
};

StudyResult size_effect_study(const std::vector<SpecimenSpec>& specs, const MicroMaterial& material,
                              const SolverSettings& cell_settings, const SolverSettings& specimen_settings,
                              SourceDistribution psi_source = SourceDistribution::stiffness);

} // namespace gradhom
