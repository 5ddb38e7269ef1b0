#include "helpers.hpp"

#include "gradhom/effective_tensors.hpp"
#include "gradhom/errors.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace gradhom;

namespace {

MicroMaterial lattice_material() {
    MicroMaterial m;
    m.youngs_inclusion = 1e-8 * m.youngs_matrix;
    m.poisson_inclusion = m.poisson_matrix;
    return m;
}

double rel_max(const Voigt6& a, const Voigt6& b) { return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff(); }

} // namespace

TEST_SUITE("effective_tensors") {

TEST_CASE("homogeneous localization is the identity map") {
    const PeriodicMesh mesh = testing::homogeneous_mesh(8);
    const MicroMaterial m = MicroMaterial::homogeneous(100.0, 0.3);
    CellSolution cell;
    const CellProblem problem(mesh, m, SolverSettings{});
    cell.phi = problem.solve_phi();
    cell.psi = problem.solve_psi(cell.phi, problem.compute_classical(cell.phi).stiffness);
    double worst = 0.0;
    for_each_localization(mesh, cell, [&](const LocalizationPoint& p) {
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        const double d = kronecker(i, a) * kronecker(j, b);
                        worst = std::max(worst, std::abs(p.L(a, b, i, j) - d));
                        for (int c = 0; c < 2; ++c)
                            worst = std::max(worst, std::abs(p.M(a, b, c, i, j) - p.y[c] * d));
                    }
    });
    CHECK(worst <= 1e-12);
}

TEST_CASE("homogeneous raw gradient integral is the moment pattern") {
    const PeriodicMesh mesh = testing::homogeneous_mesh(8);
    const MicroMaterial m = MicroMaterial::homogeneous(100.0, 0.3);
    const CellProblem problem(mesh, m, SolverSettings{});
    CellSolution cell;
    cell.phi = problem.solve_phi();
    const Tensor4 cm = problem.compute_classical(cell.phi).stiffness;
    cell.psi = problem.solve_psi(cell.phi, cm);
    const RawEffective raw = integrate_effective(problem, cell, 1.0);
    const Eigen::Matrix2d moment = second_moment(mesh, 1.0);
    CHECK(moment(0, 0) == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
    CHECK(moment(1, 1) == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
    CHECK(std::abs(moment(0, 1)) <= 1e-15);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int d = 0; d < 2; ++d)
                    for (int e = 0; e < 2; ++e)
                        for (int f = 0; f < 2; ++f)
                            CHECK(std::abs(raw.D(a, b, c, d, e, f) - cm(a, b, d, e) * moment(c, f)) <= 1e-10 * 134.6);
    const Tensor6 dm = apply_correction(cm, raw.D, moment);
    CHECK(dm.max_abs() <= 1e-10);
}

TEST_CASE("compatibility for a homogeneous cell") {
    const PeriodicMesh mesh = testing::homogeneous_mesh(20);
    const EffectiveTensors t = homogenize(mesh, MicroMaterial::homogeneous(100.0, 0.3), 1.0);
    CHECK(t.D.cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((t.C - voigt_pack(isotropic_stiffness(100.0, 0.3))).cwiseAbs().maxCoeff() <= 1e-6 * 134.6);
}

TEST_CASE("averages of the localization tensors") {
    const PeriodicMesh mesh = build_square_lattice_rve(CellGeometry{}, 20);
    CellSolution cell;
    const EffectiveTensors t = homogenize(mesh, lattice_material(), 1.0, SolverSettings{}, &cell);
    Tensor4 mean_l;
    Tensor5 mean_m;
    double volume = 0.0;
    for_each_localization(mesh, cell, [&](const LocalizationPoint& p) {
        mean_l += p.L * p.weight;
        mean_m += p.M * p.weight;
        volume += p.weight;
    });
    mean_l *= 1.0 / volume;
    mean_m *= 1.0 / volume;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    CHECK(std::abs(mean_l(a, b, i, j) - kronecker(i, a) * kronecker(j, b)) <= 1e-8);
    // The d psi / d y part averages out, the y_c L part is odd over the cell.
    CHECK(mean_m.max_abs() <= 1e-8);
    CHECK(t.diagnostics.mean_gradient <= 1e-8);
}

TEST_CASE("square lattice tensors have the expected structure") {
    const PeriodicMesh mesh = build_square_lattice_rve(CellGeometry{}, 20);
    const EffectiveTensors t = homogenize(mesh, lattice_material(), 1.0);
    CHECK(t.diagnostics.g_norm <= 1e-6);
    CHECK(t.diagnostics.d4_defect <= 1e-6);
    CHECK(t.diagnostics.phi_consistency <= 1e-8);
    CHECK(t.diagnostics.classical_asymmetry <= 1e-8);
    CHECK(t.diagnostics.gradient_asymmetry <= 1e-6);
    CHECK((t.C - t.C.transpose()).norm() <= 1e-14 * t.C.norm());
    CHECK((t.D - t.D.transpose()).norm() <= 1e-14 * t.D.norm());
    CHECK(Eigen::SelfAdjointEigenSolver<Voigt3>(t.C).eigenvalues().minCoeff() > 0.0);
    CHECK(t.D(1, 1) > 0.0);
    CHECK(t.D(0, 2) < 0.0);
}

TEST_CASE("explicit epsilon factors") {
    const PeriodicMesh mesh = build_square_lattice_rve(CellGeometry{}, 20);
    const CellProblem problem(mesh, lattice_material(), SolverSettings{});
    CellSolution cell;
    cell.phi = problem.solve_phi();
    cell.psi = problem.solve_psi(cell.phi, problem.compute_classical(cell.phi).stiffness);
    const RawEffective a = integrate_effective(problem, cell, 1.0), b = integrate_effective(problem, cell, 2.0);
    CHECK((b.C - a.C).max_abs() == 0.0);
    CHECK((b.D - a.D * 4.0).max_abs() <= 1e-14 * a.D.max_abs());
    CHECK((b.G - a.G * 2.0).max_abs() <= 1e-14 * std::max(a.G.max_abs(), 1e-300));
    const Eigen::Matrix2d ma = second_moment(mesh, 1.0), mb = second_moment(mesh, 2.0);
    CHECK((mb - 4.0 * ma).norm() <= 1e-15);
}

TEST_CASE("correction subtracts the moment pattern") {
    const Tensor4 c = isotropic_stiffness(10.0, 0.2);
    Eigen::Matrix2d moment;
    moment << 0.5, 0.1, 0.1, 0.25;
    Tensor6 raw;
    raw(0, 0, 0, 0, 0, 0) = 3.0;
    const Tensor6 d = apply_correction(c, raw, moment);
    CHECK(d(0, 0, 0, 0, 0, 0) == doctest::Approx(3.0 - c(0, 0, 0, 0) * 0.5));
    CHECK(d(0, 0, 1, 1, 1, 0) == doctest::Approx(-c(0, 0, 1, 1) * 0.1));
    CHECK(d(0, 1, 1, 0, 1, 1) == doctest::Approx(-c(0, 1, 0, 1) * 0.25));
}

TEST_CASE("D4 block defect") {
    Voigt6 d = Voigt6::Zero();
    d.topLeftCorner<3, 3>() << 4, 1, -1, 1, 2, 0.5, -1, 0.5, 1;
    d.bottomRightCorner<3, 3>() = d.topLeftCorner<3, 3>();
    CHECK(d4_block_defect(d) == 0.0);
    d(0, 4) = d(4, 0) = 0.4;
    CHECK(d4_block_defect(d) == doctest::Approx(0.1));
}

TEST_CASE("gradient stiffness scales with the square of the cell size") {
    const MicroMaterial m = lattice_material();
    SolverSettings s;
    s.rel_tol = 1e-10;
    s.preconditioner = Preconditioner::cholesky;
    CellGeometry g;
    const EffectiveTensors ref = homogenize(build_square_lattice_rve(g, 20), m, 1.0, s);
    g.cell_size = 0.5;
    g.wall_thickness = 0.05;
    const EffectiveTensors half = homogenize(build_square_lattice_rve(g, 20), m, 1.0, s);
    CHECK(rel_max(half.D * 4.0, ref.D) <= 1e-6);
    CHECK((half.C - ref.C).cwiseAbs().maxCoeff() <= 1e-8 * ref.C.cwiseAbs().maxCoeff());
}

TEST_CASE("epsilon invariance") {
    const MicroMaterial m = lattice_material();
    SolverSettings s;
    s.rel_tol = 1e-10;
    s.preconditioner = Preconditioner::cholesky;
    CellGeometry g;
    const EffectiveTensors a = homogenize(build_square_lattice_rve(g, 20), m, g.epsilon, s);
    g.epsilon = 1e-3;
    const PeriodicMesh big = build_square_lattice_rve(g, 20);
    CHECK(big.width == doctest::Approx(1000.0));
    const EffectiveTensors b = homogenize(big, m, g.epsilon, s);
    CHECK(rel_max(b.D, a.D) <= 1e-8);
    CHECK((b.C - a.C).cwiseAbs().maxCoeff() <= 1e-8 * a.C.cwiseAbs().maxCoeff());
}

TEST_CASE("invalid homothetic ratio") {
    const PeriodicMesh mesh = testing::homogeneous_mesh(4);
    CHECK_THROWS_AS(homogenize(mesh, MicroMaterial::homogeneous(1.0, 0.3), 0.0), ConfigError);
}

}
