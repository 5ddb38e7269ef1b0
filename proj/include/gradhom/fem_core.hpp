#pragma once

#include "gradhom/lattice_mesh.hpp"
#include "gradhom/tensor.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gradhom {

using SparseMatrix = Eigen::SparseMatrix<double>;
using ElementMatrix = Eigen::Matrix<double, 8, 8>;
using ElementVector = Eigen::Matrix<double, 8, 1>;
using QuadCoords = std::array<Eigen::Vector2d, 4>;

/// Tensor-product Gauss rule on the reference square [-1, 1]^2.
struct QuadratureRule {
    std::vector<Eigen::Vector2d> points;
    std::vector<double> weights;

    static QuadratureRule gauss(int points_per_direction);
};

/// Gauss-Legendre nodes and weights on [-1, 1] for 1 to 6 points.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Bilinear shape functions evaluated at one reference point.
struct Q4Point {
    Eigen::Vector4d shape;
    Eigen::Matrix<double, 4, 2> grad; // d N_a / d y_j
    Eigen::Vector2d position;
    double det_jacobian;
};

/// Throws InvertedElementError if the Jacobian is not positive.
Q4Point evaluate_q4(const QuadCoords& coords, const Eigen::Vector2d& ref);

QuadCoords element_coords(const PeriodicMesh& mesh, std::size_t e);

/// K_(a i)(b k) = integral of C_ijkl dN_a/dy_j dN_b/dy_l; local dof 2a + i.
ElementMatrix element_stiffness(const Tensor4& c, const QuadCoords& coords,
                                const QuadratureRule& rule = QuadratureRule::gauss(2));

/// Calls fn(element, point, weight * det J) for every quadrature point, in
/// element order.
template <typename Fn>
void for_each_quadrature_point(const PeriodicMesh& mesh, const QuadratureRule& rule, Fn&& fn) {
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const QuadCoords xy = element_coords(mesh, e);
        for (std::size_t g = 0; g < rule.points.size(); ++g) {
            const Q4Point q = evaluate_q4(xy, rule.points[g]);
            fn(e, q, rule.weights[g] * q.det_jacobian);
        }
    }
}

/// Gradient d u_i / d y_j of a nodal vector field at a quadrature point.
inline Eigen::Matrix2d field_gradient(const PeriodicMesh& mesh, std::size_t e, const Q4Point& q,
                                      const Eigen::VectorXd& u) {
    Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
    const auto& nodes = mesh.elements[e];
    for (int a = 0; a < 4; ++a)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) g(i, j) += u[2 * nodes[a] + i] * q.grad(a, j);
    return g;
}

inline Eigen::Vector2d field_value(const PeriodicMesh& mesh, std::size_t e, const Q4Point& q,
                                   const Eigen::VectorXd& u) {
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    const auto& nodes = mesh.elements[e];
    for (int a = 0; a < 4; ++a) v += q.shape[a] * Eigen::Vector2d(u[2 * nodes[a]], u[2 * nodes[a] + 1]);
    return v;
}

/// Assembled (unconstrained) stiffness on dofs 2 * node + component.
struct LinearSystem {
    SparseMatrix stiffness;
    Eigen::VectorXd nodal_volume; // integral of N_a over the mesh
    double volume = 0.0;
    std::vector<Tensor4> element_stiffness_tensor;

    Eigen::Index dof_count() const { return stiffness.rows(); }
};

/// Assembly sums element contributions in element order, so the result is
/// independent of how the element loop is scheduled.
LinearSystem assemble(const PeriodicMesh& mesh, const MicroMaterial& material);
LinearSystem assemble(const PeriodicMesh& mesh, std::span<const Tensor4> element_tensors);

/// Periodic system after master/slave elimination. The two zero-mean
/// functionals (integral of each displacement component) are the constraint
/// rows; mean_weights holds them on the reduced nodes.
struct PeriodicSystem {
    SparseMatrix stiffness;            // reduced, 2 dofs per master node
    std::vector<int> reduced_node;     // full node -> reduced node
    Eigen::VectorXd mean_weights;      // per reduced node
    Eigen::VectorXd full_nodal_volume; // per full node
    double volume = 0.0;

    Eigen::Index reduced_dofs() const { return stiffness.rows(); }
    Eigen::Index full_dofs() const { return 2 * static_cast<Eigen::Index>(reduced_node.size()); }

    /// P^T f: slave loads are added onto their masters.
    Eigen::VectorXd restrict_load(const Eigen::VectorXd& full) const;
    /// P x: every node takes its master's value.
    Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const;
    /// Value of the constraint rows, i.e. the integral of u per component.
    Eigen::Vector2d constraint_residual(const Eigen::VectorXd& full) const;
    /// The constraint rows as a 2 x reduced_dofs matrix.
    Eigen::MatrixXd constraint_rows() const;
};

/// Throws ConstraintError when pairs form a cycle or a slave has two masters.
PeriodicSystem condense_periodic_zero_mean(const LinearSystem& system, const PeriodicMesh& mesh);

enum class Preconditioner { none, diagonal, cholesky };

Preconditioner parse_preconditioner(const std::string& name);
std::string to_string(Preconditioner p);

/// Krylov settings. max_iterations = 0 means 10 times the number of unknowns.
/// Convergence is measured on the preconditioned residual norm.
struct SolverSettings {
    double rel_tol = 1e-5;
    double abs_tol = 1e-10;
    long max_iterations = 0;
    Preconditioner preconditioner = Preconditioner::diagonal;
};

struct SolveReport {
    long iterations = 0;
    double initial_residual = 0.0;
    double final_residual = 0.0;
};

class PreconditionerOp;

/// Preconditioned conjugate gradients for symmetric positive (semi)definite
/// systems. With project_constants the system is treated as singular with the
/// two constant displacement modes as null space: the load is projected onto
/// the range first.
class KrylovSolver {
public:
    KrylovSolver(const SparseMatrix& matrix, const SolverSettings& settings, bool project_constants);
    ~KrylovSolver();
    KrylovSolver(KrylovSolver&&) noexcept;
    KrylovSolver& operator=(KrylovSolver&&) noexcept;

    /// Throws SolverError (with the final residual) on non-convergence.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs, SolveReport* report = nullptr) const;

private:
    SparseMatrix matrix_;
    Eigen::VectorXd diagonal_;
    SolverSettings settings_;
    bool project_constants_;
    std::unique_ptr<PreconditionerOp> preconditioner_;
};

/// Solver for the condensed periodic problem; solutions are returned on the
/// full mesh, periodic and with zero volume mean per component.
class PeriodicSolver {
public:
    PeriodicSolver(const PeriodicSystem& system, const SolverSettings& settings);

    Eigen::VectorXd solve(const Eigen::VectorXd& full_rhs, SolveReport* report = nullptr) const;
    const PeriodicSystem& system() const { return *system_; }

private:
    const PeriodicSystem* system_;
    KrylovSolver krylov_;
};

/// One-shot convenience wrapper around PeriodicSolver.
Eigen::VectorXd solve(const PeriodicSystem& system, const Eigen::VectorXd& full_rhs,
                      const SolverSettings& settings = {}, SolveReport* report = nullptr);

/// Solver for K u = f with prescribed values on some dofs. The matrix is
/// partitioned once; solve() takes the prescribed values and the load.
class DirichletSolver {
public:
    DirichletSolver(const SparseMatrix& matrix, std::vector<Eigen::Index> fixed_dofs, const SolverSettings& settings);

    Eigen::VectorXd solve(const Eigen::VectorXd& fixed_values, const Eigen::VectorXd& load,
                          SolveReport* report = nullptr) const;
    const std::vector<Eigen::Index>& fixed_dofs() const { return fixed_; }

private:
    std::vector<Eigen::Index> fixed_;
    std::vector<Eigen::Index> free_index_; // full dof -> free position or -1
    SparseMatrix free_fixed_;
    std::unique_ptr<KrylovSolver> krylov_;
};

} // namespace gradhom
