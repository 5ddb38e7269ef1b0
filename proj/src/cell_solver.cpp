#include "gradhom/cell_solver.hpp"

#include "gradhom/errors.hpp"

#include <sstream>

namespace gradhom {

namespace {

std::vector<Tensor4> phase_tensors(const PeriodicMesh& mesh, const MicroMaterial& material) {
    const Tensor4 cm = material.stiffness(Phase::matrix);
    const Tensor4 ci = material.stiffness(Phase::inclusion);
    std::vector<Tensor4> t;
    t.reserve(mesh.element_count());
    for (Phase p : mesh.phases) t.push_back(p == Phase::matrix ? cm : ci);
    return t;
}

std::string label(std::initializer_list<int> idx) { return index_label(idx); }

} // namespace

SourceDistribution parse_source_distribution(const std::string& name) {
    if (name == "uniform") return SourceDistribution::uniform;
    if (name == "stiffness") return SourceDistribution::stiffness;
    throw ConfigError("unknown psi source distribution '" + name + "' (expected stiffness or uniform)");
}

std::string to_string(SourceDistribution d) { return d == SourceDistribution::uniform ? "uniform" : "stiffness"; }

std::vector<double> source_density(const PeriodicMesh& mesh, const MicroMaterial& material, SourceDistribution d) {
    std::vector<double> rho(mesh.element_count(), 1.0);
    if (d == SourceDistribution::uniform) return rho;
    double weighted = 0.0, area = 0.0;
    for (std::size_t e = 0; e < rho.size(); ++e) {
        rho[e] = mesh.phases[e] == Phase::matrix ? material.youngs_matrix : material.youngs_inclusion;
        const double a = mesh.element_area(e);
        weighted += rho[e] * a;
        area += a;
    }
    const double mean = weighted / area;
    if (!(mean > 0.0)) throw MaterialError("cell has no stiff phase to carry the psi source term");
    for (auto& r : rho) r /= mean;
    return rho;
}

CellProblem::CellProblem(const PeriodicMesh& mesh, const MicroMaterial& material, const SolverSettings& settings,
                         SourceDistribution source)
    : CellProblem(mesh, phase_tensors(mesh, material), source_density(mesh, material, source), settings) {}

CellProblem::CellProblem(const PeriodicMesh& mesh, std::vector<Tensor4> element_tensors,
                         std::vector<double> element_density, const SolverSettings& settings)
    : mesh_(&mesh), system_(assemble(mesh, element_tensors)), periodic_(condense_periodic_zero_mean(system_, mesh)),
      density_(std::move(element_density)), settings_(settings),
      solver_(std::make_unique<PeriodicSolver>(periodic_, settings)) {
    if (density_.size() != mesh.element_count()) throw Error("one source density per element required");
}

Tensor4 localization_L(const PeriodicMesh& mesh, std::size_t e, const Q4Point& q, const PhiFields& phi) {
    Tensor4 l;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const Eigen::Matrix2d g = field_gradient(mesh, e, q, phi(a, b));
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) l(a, b, i, j) = kronecker(i, a) * kronecker(j, b) + g(i, j);
        }
    return l;
}

Eigen::VectorXd CellProblem::phi_load(int a, int b) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(system_.dof_count());
    for_each_quadrature_point(*mesh_, QuadratureRule::gauss(2), [&](std::size_t e, const Q4Point& q, double w) {
        const Tensor4& c = element_tensor(e);
        const auto& nodes = mesh_->elements[e];
        for (int n = 0; n < 4; ++n)
            for (int i = 0; i < 2; ++i) {
                double s = 0.0;
                for (int j = 0; j < 2; ++j) s += c(i, j, a, b) * q.grad(n, j);
                f[2 * nodes[n] + i] -= w * s;
            }
    });
    return f;
}

PhiFields CellProblem::solve_phi() const {
    PhiFields phi;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const int s = phi_slot(a, b);
            try {
                phi.field[s] = solver_->solve(phi_load(a, b), &phi.report[s]);
            } catch (const SolverError& err) {
                throw SolverError("phi_" + label({a, b}) + ": " + err.what(), err.residual(), err.iterations());
            }
        }
    return phi;
}

ClassicalTensor CellProblem::compute_classical(const PhiFields& phi) const {
    Tensor4 energy; // (a, b, c, d)
    Tensor4 stress; // (i, j, a, b)
    for_each_quadrature_point(*mesh_, QuadratureRule::gauss(2), [&](std::size_t e, const Q4Point& q, double w) {
        const Tensor4& c = element_tensor(e);
        const Tensor4 l = localization_L(*mesh_, e, q, phi);
        // cl(i, j, a, b) = C_ijkl L_abkl
        Tensor4 cl;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b) {
                        double s = 0.0;
                        for (int k = 0; k < 2; ++k)
                            for (int m = 0; m < 2; ++m) s += c(i, j, k, m) * l(a, b, k, m);
                        cl(i, j, a, b) = s;
                    }
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int cc = 0; cc < 2; ++cc)
                    for (int d = 0; d < 2; ++d) {
                        double s = 0.0;
                        for (int i = 0; i < 2; ++i)
                            for (int j = 0; j < 2; ++j) s += l(a, b, i, j) * cl(i, j, cc, d);
                        energy(a, b, cc, d) += w * s;
                    }
        stress += w * cl;
    });
    const double inv_v = 1.0 / volume();
    energy *= inv_v;
    stress *= inv_v;
    ClassicalTensor out;
    out.asymmetry = symmetry_defect(energy);
    out.stiffness = symmetrized(energy);
    out.mean_stress = stress;
    const double scale = out.stiffness.max_abs();
    double worst = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    worst = std::max(worst, std::abs(stress(i, j, a, b) - energy(i, j, a, b)));
    out.consistency = scale > 0.0 ? worst / scale : 0.0;
    return out;
}

Eigen::Vector2d CellProblem::psi_source_mean(const PhiFields& phi, const Tensor4& cm, int a, int b, int c) const {
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    for_each_quadrature_point(*mesh_, QuadratureRule::gauss(2), [&](std::size_t e, const Q4Point& q, double w) {
        const Tensor4& cc = element_tensor(e);
        const Eigen::Matrix2d g = field_gradient(*mesh_, e, q, phi(a, b));
        for (int i = 0; i < 2; ++i) {
            double v = -density_[e] * cm(i, c, a, b);
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) v += cc(i, c, k, l) * (kronecker(k, a) * kronecker(l, b) + g(k, l));
            s[i] += w * v;
        }
    });
    return s / volume();
}

Eigen::VectorXd CellProblem::psi_load(const PhiFields& phi, const Tensor4& cm, int a, int b, int c) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(system_.dof_count());
    for_each_quadrature_point(*mesh_, QuadratureRule::gauss(2), [&](std::size_t e, const Q4Point& q, double w) {
        const Tensor4& cc = element_tensor(e);
        const Eigen::Matrix2d g = field_gradient(*mesh_, e, q, phi(a, b));
        const Eigen::Vector2d v = field_value(*mesh_, e, q, phi(a, b));
        // source_i = C_ickl L_abkl - rho C^M_icab ; flux_ij = C_ijkc phi_abk
        Eigen::Vector2d source;
        Eigen::Matrix2d flux;
        for (int i = 0; i < 2; ++i) {
            double s = -density_[e] * cm(i, c, a, b);
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) s += cc(i, c, k, l) * (kronecker(k, a) * kronecker(l, b) + g(k, l));
            source[i] = s;
            for (int j = 0; j < 2; ++j) flux(i, j) = cc(i, j, 0, c) * v[0] + cc(i, j, 1, c) * v[1];
        }
        const auto& nodes = mesh_->elements[e];
        for (int n = 0; n < 4; ++n)
            for (int i = 0; i < 2; ++i)
                f[2 * nodes[n] + i] +=
                    w * (source[i] * q.shape[n] - flux(i, 0) * q.grad(n, 0) - flux(i, 1) * q.grad(n, 1));
    });
    return f;
}

PsiFields CellProblem::solve_psi(const PhiFields& phi, const Tensor4& cm) const {
    const double scale = cm.max_abs();
    PsiFields psi;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                const Eigen::Vector2d mean = psi_source_mean(phi, cm, a, b, c);
                if (mean.cwiseAbs().maxCoeff() > 1e-6 * scale) {
                    std::ostringstream msg;
                    msg << "psi_" << label({a, b, c}) << ": source term has mean (" << mean[0] << ", " << mean[1]
                        << "), more than 1e-6 of |C^M| = " << scale
                        << "; the classical tensor does not belong to these phi fields";
                    throw ConsistencyError(msg.str());
                }
                const int s = psi_slot(a, b, c);
                try {
                    psi.field[s] = solver_->solve(psi_load(phi, cm, a, b, c), &psi.report[s]);
                } catch (const SolverError& err) {
                    throw SolverError("psi_" + label({a, b, c}) + ": " + err.what(), err.residual(), err.iterations());
                }
            }
    return psi;
}

PhiFields solve_phi(const PeriodicMesh& mesh, const MicroMaterial& material, const SolverSettings& settings) {
    return CellProblem(mesh, material, settings).solve_phi();
}

ClassicalTensor compute_CM(const PeriodicMesh& mesh, const MicroMaterial& material, const PhiFields& phi) {
    return CellProblem(mesh, material, SolverSettings{}).compute_classical(phi);
}

PsiFields solve_psi(const PeriodicMesh& mesh, const MicroMaterial& material, const PhiFields& phi,
                    const Tensor4& classical, const SolverSettings& settings, SourceDistribution source) {
    return CellProblem(mesh, material, settings, source).solve_psi(phi, classical);
}

} // namespace gradhom
