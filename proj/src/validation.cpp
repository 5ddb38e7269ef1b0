#include "gradhom/validation.hpp"

#include "gradhom/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace gradhom {

std::string to_string(Model m) {
    switch (m) {
    case Model::micro: return "micro";
    case Model::classical: return "classical";
    case Model::gradient: return "gradient";
    }
    return "?";
}

MacroElement parse_macro_element(const std::string& name) {
    if (name == "hermite" || name == "bfs") return MacroElement::hermite;
    if (name == "bilinear") return MacroElement::bilinear;
    throw ConfigError("unknown macro element '" + name + "' (expected hermite or bilinear)");
}

std::string to_string(MacroElement e) { return e == MacroElement::hermite ? "hermite" : "bilinear"; }

int SpecimenSpec::cells_per_edge() const {
    const double ratio = macro_size / cell_size;
    const long n = std::lround(ratio);
    if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio) {
        std::ostringstream msg;
        msg << "specimen size " << macro_size << " is not a positive integer multiple of the cell size " << cell_size;
        throw ConfigError(msg.str());
    }
    return static_cast<int>(n);
}

void SpecimenSpec::validate() const {
    if (!(macro_size > 0.0) || !(cell_size > 0.0)) throw ConfigError("specimen and cell sizes must be positive");
    cells_per_edge();
    if (!(wall_fraction > 0.0 && wall_fraction <= 1.0)) throw ConfigError("wall fraction must lie in (0, 1]");
    if (thetas.empty()) throw ConfigError("at least one rotation angle is required");
    for (double t : thetas)
        if (std::abs(t) > 0.2 + 1e-12) {
            std::ostringstream msg;
            msg << "rotation " << t << " rad is outside the linear range |theta| <= 0.2";
            throw ConfigError(msg.str());
        }
    if (micro_elements_per_cell < 10) throw ConfigError("micro_elements_per_cell must be at least 10");
    if (macro_elements < 1) throw ConfigError("macro_elements must be positive");
}

double EnergyCurve::energy_at(double theta) const { return 0.5 * stiffness * theta * theta; }

void fit_quadratic(EnergyCurve& curve) {
    double num = 0.0, den = 0.0;
    for (const auto& s : curve.samples) {
        const double t2 = s.theta * s.theta;
        num += s.energy * t2;
        den += t2 * t2;
    }
    curve.stiffness = den > 0.0 ? 2.0 * num / den : 0.0;
    double res = 0.0, norm = 0.0;
    for (const auto& s : curve.samples) {
        const double d = s.energy - curve.energy_at(s.theta);
        res += d * d;
        norm += s.energy * s.energy;
    }
    curve.fit_residual = norm > 0.0 ? std::sqrt(res / norm) : 0.0;
}

void HermiteRectangle::evaluate(double s, double t, Eigen::Matrix<double, 16, 1>& n, Eigen::Matrix<double, 16, 2>& dn,
                                Eigen::Matrix<double, 16, 3>& ddn) const {
    // Cubic Hermite functions on [0, 1] for end e in {0, 1}: value (v) and
    // slope (d) carriers, already scaled by the edge length.
    struct H {
        double f, df, ddf;
    };
    auto hermite = [](double x, double h, int end, bool slope) -> H {
        if (!slope) {
            if (end == 0) return {1 - 3 * x * x + 2 * x * x * x, (-6 * x + 6 * x * x) / h, (-6 + 12 * x) / (h * h)};
            return {3 * x * x - 2 * x * x * x, (6 * x - 6 * x * x) / h, (6 - 12 * x) / (h * h)};
        }
        if (end == 0) return {h * (x - 2 * x * x + x * x * x), 1 - 4 * x + 3 * x * x, (-4 + 6 * x) / h};
        return {h * (-x * x + x * x * x), -2 * x + 3 * x * x, (-2 + 6 * x) / h};
    };
    static constexpr int corner_s[4] = {0, 1, 1, 0};
    static constexpr int corner_t[4] = {0, 0, 1, 1};
    for (int node = 0; node < 4; ++node)
        for (int k = 0; k < 4; ++k) {
            const H a = hermite(s, hx, corner_s[node], k == 1 || k == 3);
            const H b = hermite(t, hy, corner_t[node], k == 2 || k == 3);
            const int i = 4 * node + k;
            n[i] = a.f * b.f;
            dn(i, 0) = a.df * b.f;
            dn(i, 1) = a.f * b.df;
            ddn(i, 0) = a.ddf * b.f;
            ddn(i, 1) = a.f * b.ddf;
            ddn(i, 2) = a.df * b.df;
        }
}

Eigen::MatrixXd hermite_element_stiffness(const HermiteRectangle& el, const Tensor4& c, const Tensor6* d) {
    std::vector<double> x, w;
    gauss_legendre(4, x, w);
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(32, 32);
    Eigen::Matrix<double, 16, 1> n;
    Eigen::Matrix<double, 16, 2> dn;
    Eigen::Matrix<double, 16, 3> ddn;
    auto col = [](int b, int cc) { return b == cc ? b : 2; };
    for (std::size_t gi = 0; gi < x.size(); ++gi)
        for (std::size_t gj = 0; gj < x.size(); ++gj) {
            const double s = 0.5 * (x[gi] + 1.0), t = 0.5 * (x[gj] + 1.0);
            const double weight = 0.25 * w[gi] * w[gj] * el.hx * el.hy;
            el.evaluate(s, t, n, dn, ddn);
            for (int i = 0; i < 2; ++i)
                for (int kk = 0; kk < 2; ++kk) {
                    // Component block (i, kk) of the element matrix.
                    Eigen::Matrix<double, 16, 16> blk = Eigen::Matrix<double, 16, 16>::Zero();
                    for (int j = 0; j < 2; ++j)
                        for (int l = 0; l < 2; ++l) {
                            const double cijkl = c(i, j, kk, l);
                            if (cijkl != 0.0) blk.noalias() += cijkl * dn.col(j) * dn.col(l).transpose();
                        }
                    if (d)
                        for (int b = 0; b < 2; ++b)
                            for (int cc = 0; cc < 2; ++cc)
                                for (int e = 0; e < 2; ++e)
                                    for (int f = 0; f < 2; ++f) {
                                        const double v = (*d)(i, b, cc, kk, e, f);
                                        if (v != 0.0)
                                            blk.noalias() += v * ddn.col(col(b, cc)) * ddn.col(col(e, f)).transpose();
                                    }
                    k.block<16, 16>(16 * i, 16 * kk) += weight * blk;
                }
        }
    return k;
}

double gradient_form_min_eigenvalue(const Tensor6& d) {
    // Orthonormal basis of second gradients g_abc = g_acb.
    static constexpr int params[6][3] = {{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {1, 0, 0}, {1, 0, 1}, {1, 1, 1}};
    Eigen::Matrix<double, 8, 6> p = Eigen::Matrix<double, 8, 6>::Zero();
    for (int q = 0; q < 6; ++q) {
        const int a = params[q][0], b = params[q][1], c = params[q][2];
        const double v = b == c ? 1.0 : std::sqrt(0.5);
        p(4 * a + 2 * b + c, q) = v;
        p(4 * a + 2 * c + b, q) = v;
    }
    Eigen::Matrix<double, 8, 8> d8;
    for (int r = 0; r < 8; ++r)
        for (int s = 0; s < 8; ++s) d8(r, s) = d[static_cast<std::size_t>(8 * r + s)];
    const Eigen::Matrix<double, 6, 6> q = p.transpose() * d8 * p;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(0.5 * (q + q.transpose()));
    return eig.eigenvalues().minCoeff();
}

namespace {

constexpr double kEdgeTol = 1e-9;

/// Prescribed dofs of a Q4 mesh of [0, L]^2 and their values at unit rotation.
struct Q4Boundary {
    std::vector<Eigen::Index> dofs;
    std::vector<double> unit_values; // values at theta = 1
};

Q4Boundary q4_boundary(const PeriodicMesh& mesh, double size) {
    Q4Boundary b;
    for (std::size_t n = 0; n < mesh.node_count(); ++n) {
        const Eigen::Vector2d& x = mesh.nodes[n];
        const auto dof = static_cast<Eigen::Index>(2 * n);
        if (std::abs(x.x()) <= kEdgeTol * size) {
            b.dofs.insert(b.dofs.end(), {dof, dof + 1});
            b.unit_values.insert(b.unit_values.end(), {0.0, 0.0});
        } else if (std::abs(x.x() - size) <= kEdgeTol * size) {
            b.dofs.insert(b.dofs.end(), {dof, dof + 1});
            b.unit_values.insert(b.unit_values.end(), {-(x.y() - 0.5 * size), 0.0});
        }
    }
    return b;
}

EnergyCurve dirichlet_curve(Model model, const SparseMatrix& k, const std::vector<Eigen::Index>& dofs,
                            const std::vector<double>& unit_values, const std::vector<double>& thetas,
                            const SolverSettings& settings) {
    const DirichletSolver solver(k, dofs, settings);
    const Eigen::VectorXd load = Eigen::VectorXd::Zero(k.rows());
    const Eigen::Map<const Eigen::VectorXd> unit(unit_values.data(), static_cast<Eigen::Index>(unit_values.size()));
    EnergyCurve curve;
    curve.model = model;
    for (double theta : thetas) {
        double energy = 0.0;
        if (theta != 0.0) {
            const Eigen::VectorXd u = solver.solve(theta * unit, load);
            energy = 0.5 * u.dot(k * u);
        }
        curve.samples.push_back({theta, energy});
    }
    fit_quadratic(curve);
    return curve;
}

EnergyCurve hermite_curve(Model model, const SpecimenSpec& spec, const Tensor4& c, const Tensor6* d,
                          const SolverSettings& settings) {
    const int ne = spec.macro_elements;
    const int np = ne + 1;
    const double h = spec.macro_size / ne;
    const HermiteRectangle el{h, h};
    const Eigen::MatrixXd ke = hermite_element_stiffness(el, c, d);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(ne) * ne * 32 * 32);
    std::array<Eigen::Index, 32> map{};
    for (int j = 0; j < ne; ++j)
        for (int i = 0; i < ne; ++i) {
            const int nodes[4] = {j * np + i, j * np + i + 1, (j + 1) * np + i + 1, (j + 1) * np + i};
            for (int comp = 0; comp < 2; ++comp)
                for (int node = 0; node < 4; ++node)
                    for (int kk = 0; kk < 4; ++kk) map[16 * comp + 4 * node + kk] = 8 * nodes[node] + 4 * comp + kk;
            for (int r = 0; r < 32; ++r)
                for (int s = 0; s < 32; ++s)
                    if (ke(r, s) != 0.0) trip.emplace_back(map[r], map[s], ke(r, s));
        }
    const Eigen::Index ndof = 8 * static_cast<Eigen::Index>(np) * np;
    SparseMatrix k(ndof, ndof);
    k.setFromTriplets(trip.begin(), trip.end());

    // Edge X1 = 0: u = u_,2 = 0. Edge X1 = L: u1 = -theta (X2 - L/2),
    // u1_,2 = -theta, u2 = u2_,2 = 0. The other derivative dofs stay free.
    std::vector<Eigen::Index> dofs;
    std::vector<double> unit;
    for (int j = 0; j < np; ++j) {
        const double y = j * h;
        for (int side = 0; side < 2; ++side) {
            const Eigen::Index base = 8 * static_cast<Eigen::Index>(j * np + (side == 0 ? 0 : ne));
            for (int comp = 0; comp < 2; ++comp) {
                dofs.push_back(base + 4 * comp);
                dofs.push_back(base + 4 * comp + 2);
                const bool rotated = side == 1 && comp == 0;
                unit.push_back(rotated ? -(y - 0.5 * spec.macro_size) : 0.0);
                unit.push_back(rotated ? -1.0 : 0.0);
            }
        }
    }
    return dirichlet_curve(model, k, dofs, unit, spec.thetas, settings);
}

} // namespace

EnergyCurve micro_reference_solve(const SpecimenSpec& spec, const MicroMaterial& material,
                                  const SolverSettings& settings) {
    spec.validate();
    material.validate();
    CellGeometry geom;
    geom.cell_size = spec.cell_size;
    geom.wall_thickness = spec.wall_fraction * spec.cell_size;
    geom.repetitions = spec.cells_per_edge();
    geom.epsilon = 1.0;
    geom.validate();
    const PeriodicMesh mesh = build_square_lattice_grid(geom, spec.micro_elements_per_cell, Eigen::Vector2d::Zero());
    const LinearSystem sys = assemble(mesh, material);
    const Q4Boundary b = q4_boundary(mesh, spec.macro_size);
    EnergyCurve curve = dirichlet_curve(Model::micro, sys.stiffness, b.dofs, b.unit_values, spec.thetas, settings);
    curve.warnings = mesh.notes;
    return curve;
}

EnergyCurve macro_classical_solve(const SpecimenSpec& spec, const Tensor4& classical, const SolverSettings& settings) {
    spec.validate();
    if (spec.classical_element == MacroElement::hermite)
        return hermite_curve(Model::classical, spec, classical, nullptr, settings);
    const PeriodicMesh mesh = build_structured_mesh(spec.macro_elements, spec.macro_size, Eigen::Vector2d::Zero(),
                                                    [](const Eigen::Vector2d&) { return Phase::matrix; });
    const std::vector<Tensor4> tensors(mesh.element_count(), classical);
    const LinearSystem sys = assemble(mesh, tensors);
    const Q4Boundary b = q4_boundary(mesh, spec.macro_size);
    return dirichlet_curve(Model::classical, sys.stiffness, b.dofs, b.unit_values, spec.thetas, settings);
}

EnergyCurve macro_gradient_solve(const SpecimenSpec& spec, const Tensor4& classical, const Tensor6& gradient,
                                 const SolverSettings& settings) {
    spec.validate();
    EnergyCurve curve = hermite_curve(Model::gradient, spec, classical, &gradient, settings);
    const double lowest = gradient_form_min_eigenvalue(gradient);
    if (lowest < -1e-12 * gradient.max_abs()) {
        std::ostringstream msg;
        msg << "strain-gradient tensor is indefinite (smallest eigenvalue " << lowest << " N)";
        curve.warnings.push_back(msg.str());
    }
    return curve;
}

SpecimenResult run_specimen(const SpecimenSpec& spec, const MicroMaterial& material, const EffectiveTensors& tensors,
                            const SolverSettings& settings) {
    SpecimenResult r;
    r.spec = spec;
    r.tensors = tensors;
    r.micro = micro_reference_solve(spec, material, settings);
    r.classical = macro_classical_solve(spec, tensors.classical, settings);
    r.gradient = macro_gradient_solve(spec, tensors.classical, tensors.gradient, settings);
    return r;
}

std::vector<StudyRow> study_rows(const std::vector<SpecimenResult>& specimens) {
    std::vector<StudyRow> rows;
    for (const SpecimenResult& r : specimens) {
        const int n = r.spec.cells_per_edge();
        const double km = r.micro.stiffness;
        for (const EnergyCurve* c : {&r.micro, &r.classical, &r.gradient})
            rows.push_back({n, n * n, c->model, c->stiffness, km != 0.0 ? (c->stiffness - km) / km : 0.0});
    }
    return rows;
}

StudyResult size_effect_study(const std::vector<SpecimenSpec>& specs, const MicroMaterial& material,
                              const SolverSettings& cell_settings, const SolverSettings& specimen_settings,
                              SourceDistribution psi_source) {
    StudyResult out;
    for (const SpecimenSpec& spec : specs) {
        spec.validate();
        CellGeometry geom;
        geom.cell_size = spec.cell_size;
        geom.wall_thickness = spec.wall_fraction * spec.cell_size;
        const PeriodicMesh cell = build_square_lattice_rve(geom, spec.micro_elements_per_cell);
        const EffectiveTensors t = homogenize(cell, material, 1.0, cell_settings, nullptr, 1e-8, psi_source);
        out.specimens.push_back(run_specimen(spec, material, t, specimen_settings));
    }
    out.rows = study_rows(out.specimens);
    return out;
}

} // namespace gradhom
