#include "gradhom/effective_tensors.hpp"

#include "gradhom/errors.hpp"

#include <sstream>

namespace gradhom {

void for_each_localization(const PeriodicMesh& mesh, const CellSolution& cell,
                           const std::function<void(const LocalizationPoint&)>& fn) {
    LocalizationPoint p;
    for_each_quadrature_point(mesh, QuadratureRule::gauss(2), [&](std::size_t e, const Q4Point& q, double w) {
        p.element = e;
        p.y = q.position;
        p.weight = w;
        p.L = localization_L(mesh, e, q, cell.phi);
        p.M = Tensor5{};
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                const Eigen::Vector2d phi = field_value(mesh, e, q, cell.phi(a, b));
                for (int c = 0; c < 2; ++c) {
                    const Eigen::Matrix2d dpsi = field_gradient(mesh, e, q, cell.psi(a, b, c));
                    for (int i = 0; i < 2; ++i)
                        for (int j = 0; j < 2; ++j)
                            p.M(a, b, c, i, j) = p.y[c] * p.L(a, b, i, j) + phi[i] * kronecker(j, c) + dpsi(i, j);
                }
            }
        fn(p);
    });
}

LocalizationFields localization_fields(const PeriodicMesh& mesh, const CellSolution& cell) {
    LocalizationFields out;
    out.reserve(mesh.element_count() * 4);
    for_each_localization(mesh, cell, [&](const LocalizationPoint& p) { out.push_back(p); });
    return out;
}

RawEffective integrate_effective(const CellProblem& problem, const CellSolution& cell, double epsilon) {
    RawEffective r;
    for_each_localization(problem.mesh(), cell, [&](const LocalizationPoint& p) {
        const Tensor4& c = problem.element_tensor(p.element);
        // cl(i, j, a, b) = C_ijkl L_abkl, cm(i, j, a, b, c) = C_ijkl M_abckl
        Tensor4 cl;
        Tensor5 cm;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    for (int l = 0; l < 2; ++l) {
                        const double cijkl = c(i, j, k, l);
                        if (cijkl == 0.0) continue;
                        for (int a = 0; a < 2; ++a)
                            for (int b = 0; b < 2; ++b) {
                                cl(i, j, a, b) += cijkl * p.L(a, b, k, l);
                                for (int cc = 0; cc < 2; ++cc) cm(i, j, a, b, cc) += cijkl * p.M(a, b, cc, k, l);
                            }
                    }
        for (std::size_t s = 0; s < 16; ++s) {
            const int a = (s >> 3) & 1, b = (s >> 2) & 1, cc = (s >> 1) & 1, d = s & 1;
            double v = 0.0;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) v += p.L(a, b, i, j) * cl(i, j, cc, d);
            r.C[s] += p.weight * v;
        }
        for (std::size_t s = 0; s < 64; ++s) {
            const int a = (s >> 5) & 1, b = (s >> 4) & 1, cc = (s >> 3) & 1;
            const int d = (s >> 2) & 1, e = (s >> 1) & 1, f = s & 1;
            double v = 0.0;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) v += p.M(a, b, cc, i, j) * cm(i, j, d, e, f);
            r.D[s] += p.weight * v;
        }
        for (std::size_t s = 0; s < 32; ++s) {
            const int a = (s >> 4) & 1, b = (s >> 3) & 1, cc = (s >> 2) & 1;
            const int d = (s >> 1) & 1, e = s & 1;
            double v = 0.0;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) v += p.L(a, b, i, j) * cm(i, j, cc, d, e);
            r.G[s] += p.weight * v;
        }
    });
    const double inv_v = 1.0 / problem.volume();
    r.C *= inv_v;
    r.D *= epsilon * epsilon * inv_v;
    r.G *= 2.0 * epsilon * inv_v;
    return r;
}

Eigen::Matrix2d second_moment(const PeriodicMesh& mesh, double epsilon) {
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    double volume = 0.0;
    for_each_quadrature_point(mesh, QuadratureRule::gauss(2), [&](std::size_t, const Q4Point& q, double w) {
        m += w * q.position * q.position.transpose();
        volume += w;
    });
    return epsilon * epsilon * m / volume;
}

Tensor6 apply_correction(const Tensor4& classical, const Tensor6& raw_gradient, const Eigen::Matrix2d& moment) {
    Tensor6 d = raw_gradient;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int dd = 0; dd < 2; ++dd)
                    for (int e = 0; e < 2; ++e)
                        for (int f = 0; f < 2; ++f) d(a, b, c, dd, e, f) -= classical(a, b, dd, e) * moment(c, f);
    return d;
}

double d4_block_defect(const Voigt6& d) {
    const double scale = d.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;
    const double diag = (d.topLeftCorner<3, 3>() - d.bottomRightCorner<3, 3>()).cwiseAbs().maxCoeff();
    const double off = std::max(d.topRightCorner<3, 3>().cwiseAbs().maxCoeff(),
                                d.bottomLeftCorner<3, 3>().cwiseAbs().maxCoeff());
    return std::max(diag, off) / scale;
}

namespace {

double field_mean(const PeriodicSystem& sys, const Eigen::VectorXd& u) {
    return sys.constraint_residual(u).cwiseAbs().maxCoeff() / sys.volume;
}

double relative_residual(const SolveReport& r) {
    return r.initial_residual > 0.0 ? r.final_residual / r.initial_residual : 0.0;
}

} // namespace

EffectiveTensors homogenize(const PeriodicMesh& mesh, const MicroMaterial& material, double epsilon,
                            const SolverSettings& settings, CellSolution* fields, double consistency_tol,
                            SourceDistribution source) {
    if (!(epsilon > 0.0)) throw ConfigError("homothetic ratio must be positive");
    const CellProblem problem(mesh, material, settings, source);
    CellSolution cell;
    cell.phi = problem.solve_phi();
    const ClassicalTensor cm = problem.compute_classical(cell.phi);
    if (cm.consistency > consistency_tol) {
        std::ostringstream msg;
        msg << "consistency identity <C L> = <L^T C L> violated by " << cm.consistency << " (relative, limit "
            << consistency_tol << "); tighten the solver tolerance";
        throw ConsistencyError(msg.str());
    }
    cell.psi = problem.solve_psi(cell.phi, cm.stiffness);

    EffectiveTensors out;
    out.epsilon = epsilon;
    out.volume = problem.volume();
    const RawEffective raw = integrate_effective(problem, cell, epsilon);
    out.classical = cm.stiffness;
    out.I_bar = second_moment(mesh, epsilon);
    const Tensor6 d = apply_correction(cm.stiffness, raw.D, out.I_bar);
    out.gradient = symmetrized(d);
    out.G = raw.G;
    out.C = voigt_pack(out.classical);
    out.D = voigt_pack(out.gradient);

    CellDiagnostics& diag = out.diagnostics;
    diag.phi_consistency = cm.consistency;
    diag.classical_asymmetry = cm.asymmetry;
    diag.gradient_asymmetry = symmetry_defect(d);
    diag.g_norm = raw.G.norm();
    const double scale = std::sqrt(out.classical.norm() * out.gradient.norm());
    diag.g_relative = scale > 0.0 ? diag.g_norm / scale : diag.g_norm;
    diag.d4_defect = d4_block_defect(out.D);

    const PeriodicSystem& sys = problem.periodic_system();
    const double w = mesh.width;
    Eigen::Matrix2d grad_sum = Eigen::Matrix2d::Zero();
    for (int s = 0; s < 4; ++s) {
        diag.phi_mean = std::max(diag.phi_mean, field_mean(sys, cell.phi.field[s]) / w);
        diag.total_iterations += cell.phi.report[s].iterations;
        diag.worst_residual = std::max(diag.worst_residual, relative_residual(cell.phi.report[s]));
    }
    for (int s = 0; s < 8; ++s) {
        diag.psi_mean = std::max(diag.psi_mean, field_mean(sys, cell.psi.field[s]) / (w * w));
        diag.total_iterations += cell.psi.report[s].iterations;
        diag.worst_residual = std::max(diag.worst_residual, relative_residual(cell.psi.report[s]));
    }
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            grad_sum.setZero();
            for_each_quadrature_point(mesh, QuadratureRule::gauss(2), [&](std::size_t e, const Q4Point& q, double wt) {
                grad_sum += wt * field_gradient(mesh, e, q, cell.phi(a, b));
            });
            diag.mean_gradient = std::max(diag.mean_gradient, grad_sum.cwiseAbs().maxCoeff() / out.volume);
        }

    if (fields) *fields = std::move(cell);
    return out;
}

} // namespace gradhom
