#include "gradhom/errors.hpp"
#include "gradhom/validation.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace gradhom;

namespace {

MicroMaterial lattice_material() {
    MicroMaterial m;
    m.youngs_inclusion = 1e-6 * m.youngs_matrix;
    m.poisson_inclusion = m.poisson_matrix;
    return m;
}

SolverSettings specimen_solver() { return {1e-10, 1e-14, 0, Preconditioner::cholesky}; }

SpecimenSpec small_spec(double size) {
    SpecimenSpec spec;
    spec.macro_size = size;
    spec.macro_elements = 8;
    return spec;
}

} // namespace

TEST_SUITE("validation") {

TEST_CASE("hermite shape functions interpolate nodal values and slopes") {
    const HermiteRectangle el{2.0, 0.5};
    Eigen::Matrix<double, 16, 1> n;
    Eigen::Matrix<double, 16, 2> dn;
    Eigen::Matrix<double, 16, 3> ddn;
    const double corners[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    for (int node = 0; node < 4; ++node) {
        el.evaluate(corners[node][0], corners[node][1], n, dn, ddn);
        for (int f = 0; f < 16; ++f) {
            const bool own = f / 4 == node;
            CHECK(n[f] == doctest::Approx(own && f % 4 == 0 ? 1.0 : 0.0));
            CHECK(dn(f, 0) == doctest::Approx(own && f % 4 == 1 ? 1.0 : 0.0));
            CHECK(dn(f, 1) == doctest::Approx(own && f % 4 == 2 ? 1.0 : 0.0));
            CHECK(ddn(f, 2) == doctest::Approx(own && f % 4 == 3 ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("hermite shape functions reproduce a bicubic exactly") {
    const HermiteRectangle el{1.5, 0.75};
    auto u = [](double x, double y) { return 1 + x - 2 * y + x * x * y + 0.5 * x * x * x * y * y * y; };
    auto ux = [](double x, double y) { return 1 + 2 * x * y + 1.5 * x * x * y * y * y; };
    auto uy = [](double x, double y) { return -2 + x * x + 1.5 * x * x * x * y * y; };
    auto uxy = [](double x, double y) { return 2 * x + 4.5 * x * x * y * y; };
    auto uxx = [](double x, double y) { return 2 * y + 3 * x * y * y * y; };
    const double cx[4] = {0, el.hx, el.hx, 0}, cy[4] = {0, 0, el.hy, el.hy};
    Eigen::Matrix<double, 16, 1> dofs;
    for (int k = 0; k < 4; ++k)
        dofs.segment<4>(4 * k) << u(cx[k], cy[k]), ux(cx[k], cy[k]), uy(cx[k], cy[k]), uxy(cx[k], cy[k]);
    Eigen::Matrix<double, 16, 1> n;
    Eigen::Matrix<double, 16, 2> dn;
    Eigen::Matrix<double, 16, 3> ddn;
    for (double s : {0.1, 0.5, 0.8})
        for (double t : {0.3, 0.9}) {
            el.evaluate(s, t, n, dn, ddn);
            const double x = s * el.hx, y = t * el.hy;
            CHECK(n.dot(dofs) == doctest::Approx(u(x, y)).epsilon(1e-12));
            CHECK(dn.col(0).dot(dofs) == doctest::Approx(ux(x, y)).epsilon(1e-12));
            CHECK(ddn.col(0).dot(dofs) == doctest::Approx(uxx(x, y)).epsilon(1e-12));
            CHECK(ddn.col(2).dot(dofs) == doctest::Approx(uxy(x, y)).epsilon(1e-12));
        }
}

TEST_CASE("element stiffness without gradient term has rigid kernels") {
    const HermiteRectangle el{0.5, 0.5};
    const Eigen::MatrixXd k = hermite_element_stiffness(el, isotropic_stiffness(100.0, 0.3), nullptr);
    CHECK(k.rows() == 32);
    CHECK((k - k.transpose()).norm() <= 1e-12 * k.norm());
    // u = (1, 0), u = (0, 1) and the rotation (-y, x).
    Eigen::VectorXd tx = Eigen::VectorXd::Zero(32), rot = Eigen::VectorXd::Zero(32);
    const double cx[4] = {0, 0.5, 0.5, 0}, cy[4] = {0, 0, 0.5, 0.5};
    for (int node = 0; node < 4; ++node) {
        tx[4 * node] = 1.0;
        rot[4 * node] = -cy[node];
        rot[4 * node + 2] = -1.0;
        rot[16 + 4 * node] = cx[node];
        rot[16 + 4 * node + 1] = 1.0;
    }
    CHECK((k * tx).norm() <= 1e-10 * k.norm());
    CHECK((k * rot).norm() <= 1e-10 * k.norm());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * k.norm());
}

TEST_CASE("gradient form of a positive D is positive") {
    Voigt6 d = Voigt6::Identity();
    CHECK(gradient_form_min_eigenvalue(voigt_unpack(d)) > 0.0);
    d(0, 0) = -1.0;
    CHECK(gradient_form_min_eigenvalue(voigt_unpack(d)) < 0.0);
}

TEST_CASE("quadratic fit") {
    EnergyCurve c;
    for (double t : {0.0, 0.1, 0.2}) c.samples.push_back({t, 2.5 * t * t});
    fit_quadratic(c);
    CHECK(c.stiffness == doctest::Approx(5.0));
    CHECK(c.fit_residual <= 1e-14);
    CHECK(c.energy_at(0.3) == doctest::Approx(2.5 * 0.09));
}

TEST_CASE("micro energy vanishes at zero rotation and scales with its square") {
    SpecimenSpec spec = small_spec(2.0);
    spec.thetas = {0.0, 0.1, 0.2};
    const EnergyCurve c = micro_reference_solve(spec, lattice_material(), specimen_solver());
    REQUIRE(c.samples.size() == 3);
    CHECK(c.samples[0].energy == 0.0);
    CHECK(c.samples[2].energy / c.samples[1].energy == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(c.fit_residual <= 1e-10);
}

TEST_CASE("homogeneous specimen: three models agree") {
    const MicroMaterial solid = MicroMaterial::homogeneous(100.0, 0.3);
    SpecimenSpec spec = small_spec(2.0);
    spec.macro_elements = 20;
    spec.micro_elements_per_cell = 40;
    const Tensor4 c = isotropic_stiffness(100.0, 0.3);
    const EnergyCurve micro = micro_reference_solve(spec, solid, specimen_solver());
    const EnergyCurve classical = macro_classical_solve(spec, c, specimen_solver());
    const EnergyCurve gradient = macro_gradient_solve(spec, c, Tensor6{}, specimen_solver());
    CHECK(std::abs(classical.stiffness - micro.stiffness) <= 1e-3 * micro.stiffness);
    CHECK(std::abs(gradient.stiffness - micro.stiffness) <= 5e-3 * micro.stiffness);
    CHECK(std::abs(gradient.stiffness - classical.stiffness) <= 1e-8 * classical.stiffness);
    // Bilinear macro elements on the micro grid solve the identical problem.
    spec.classical_element = MacroElement::bilinear;
    spec.macro_elements = 80;
    const EnergyCurve bilinear = macro_classical_solve(spec, c, specimen_solver());
    CHECK(std::abs(bilinear.stiffness - micro.stiffness) <= 1e-8 * micro.stiffness);
}

TEST_CASE("gradient term adds non-negative energy") {
    const SpecimenSpec spec = small_spec(2.0);
    const Tensor4 c = isotropic_stiffness(10.0, 0.3);
    Voigt6 d = Voigt6::Identity() * 0.05;
    const EnergyCurve classical = macro_classical_solve(spec, c, specimen_solver());
    const EnergyCurve gradient = macro_gradient_solve(spec, c, voigt_unpack(d), specimen_solver());
    CHECK(gradient.stiffness >= classical.stiffness);
    CHECK(gradient.warnings.empty());
    d(0, 0) = -1e-4;
    const EnergyCurve indefinite = macro_gradient_solve(spec, c, voigt_unpack(d), specimen_solver());
    CHECK_FALSE(indefinite.warnings.empty());
}

TEST_CASE("classical curves do not depend on the cell size") {
    const MicroMaterial m = lattice_material();
    SpecimenSpec spec = small_spec(4.0);
    std::vector<double> k;
    for (double l : {1.0, 0.5, 0.2}) {
        CellGeometry g;
        g.cell_size = l;
        g.wall_thickness = 0.1 * l;
        const EffectiveTensors t = homogenize(build_square_lattice_rve(g, 20), m, 1.0);
        spec.cell_size = l;
        k.push_back(macro_classical_solve(spec, t.classical, specimen_solver()).stiffness);
    }
    CHECK(std::abs(k[1] - k[0]) <= 1e-8 * k[0]);
    CHECK(std::abs(k[2] - k[0]) <= 1e-8 * k[0]);
}

TEST_CASE("size effect on a 2x2 lattice") {
    const SpecimenSpec spec = small_spec(2.0);
    const StudyResult r = size_effect_study({spec}, lattice_material(), SolverSettings{}, specimen_solver());
    REQUIRE(r.rows.size() == 3);
    const double micro = r.rows[0].stiffness, classical = r.rows[1].stiffness, gradient = r.rows[2].stiffness;
    CHECK(r.rows[0].model == Model::micro);
    CHECK(classical < micro);
    CHECK(std::abs(gradient - micro) < std::abs(classical - micro));
    CHECK(r.rows[1].rel_error == doctest::Approx((classical - micro) / micro));
}

TEST_CASE("specimen validation") {
    SpecimenSpec spec;
    spec.macro_size = 2.5;
    CHECK_THROWS_AS(spec.cells_per_edge(), ConfigError);
    spec.macro_size = 4.0;
    CHECK(spec.cells_per_edge() == 4);
    spec.thetas = {0.0, 0.3};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    CHECK(parse_macro_element("bfs") == MacroElement::hermite);
    CHECK_THROWS_AS(parse_macro_element("quad9"), ConfigError);
}

}
