#include "gradhom/fem_core.hpp"

#include "gradhom/errors.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace gradhom {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1 || n > 6) throw Error("Gauss-Legendre rules are available for 1 to 6 points");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        // Newton on P_n from the Chebyshev guess.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1.0, p1 = x;
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

QuadratureRule QuadratureRule::gauss(int n) {
    std::vector<double> x, w;
    gauss_legendre(n, x, w);
    QuadratureRule rule;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            rule.points.emplace_back(x[i], x[j]);
            rule.weights.push_back(w[i] * w[j]);
        }
    return rule;
}

Q4Point evaluate_q4(const QuadCoords& coords, const Eigen::Vector2d& ref) {
    static constexpr std::array<double, 4> sx{-1.0, 1.0, 1.0, -1.0};
    static constexpr std::array<double, 4> sy{-1.0, -1.0, 1.0, 1.0};
    const double xi = ref.x(), eta = ref.y();
    Q4Point q;
    Eigen::Matrix<double, 4, 2> dref;
    for (int a = 0; a < 4; ++a) {
        q.shape[a] = 0.25 * (1.0 + sx[a] * xi) * (1.0 + sy[a] * eta);
        dref(a, 0) = 0.25 * sx[a] * (1.0 + sy[a] * eta);
        dref(a, 1) = 0.25 * sy[a] * (1.0 + sx[a] * xi);
    }
    Eigen::Matrix2d jac = Eigen::Matrix2d::Zero(); // jac(j, r) = d y_j / d ref_r
    q.position.setZero();
    for (int a = 0; a < 4; ++a) {
        jac.col(0) += coords[a] * dref(a, 0);
        jac.col(1) += coords[a] * dref(a, 1);
        q.position += coords[a] * q.shape[a];
    }
    q.det_jacobian = jac.determinant();
    if (!(q.det_jacobian > 0.0)) {
        std::ostringstream msg;
        msg << "inverted or degenerate element: Jacobian determinant " << q.det_jacobian;
        throw InvertedElementError(msg.str());
    }
    q.grad = dref * jac.inverse();
    return q;
}

QuadCoords element_coords(const PeriodicMesh& mesh, std::size_t e) {
    const auto& q = mesh.elements[e];
    return {mesh.nodes[q[0]], mesh.nodes[q[1]], mesh.nodes[q[2]], mesh.nodes[q[3]]};
}

ElementMatrix element_stiffness(const Tensor4& c, const QuadCoords& coords, const QuadratureRule& rule) {
    ElementMatrix k = ElementMatrix::Zero();
    for (std::size_t g = 0; g < rule.points.size(); ++g) {
        const Q4Point q = evaluate_q4(coords, rule.points[g]);
        const double w = rule.weights[g] * q.det_jacobian;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                for (int i = 0; i < 2; ++i)
                    for (int kk = 0; kk < 2; ++kk) {
                        double s = 0.0;
                        for (int j = 0; j < 2; ++j)
                            for (int l = 0; l < 2; ++l) s += c(i, j, kk, l) * q.grad(a, j) * q.grad(b, l);
                        k(2 * a + i, 2 * b + kk) += w * s;
                    }
    }
    return k;
}

LinearSystem assemble(const PeriodicMesh& mesh, const MicroMaterial& material) {
    const Tensor4 cm = material.stiffness(Phase::matrix);
    const Tensor4 ci = material.stiffness(Phase::inclusion);
    std::vector<Tensor4> tensors;
    tensors.reserve(mesh.element_count());
    for (Phase p : mesh.phases) tensors.push_back(p == Phase::matrix ? cm : ci);
    return assemble(mesh, tensors);
}

LinearSystem assemble(const PeriodicMesh& mesh, std::span<const Tensor4> element_tensors) {
    if (element_tensors.size() != mesh.element_count())
        throw Error("assemble: one stiffness tensor per element is required");
    const auto n_dofs = 2 * static_cast<Eigen::Index>(mesh.node_count());
    LinearSystem sys;
    sys.nodal_volume = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.node_count()));
    sys.element_stiffness_tensor.assign(element_tensors.begin(), element_tensors.end());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(64 * mesh.element_count());
    const QuadratureRule rule = QuadratureRule::gauss(2);
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const QuadCoords xy = element_coords(mesh, e);
        ElementMatrix ke;
        try {
            ke = element_stiffness(element_tensors[e], xy, rule);
        } catch (const InvertedElementError& err) {
            throw InvertedElementError("element " + std::to_string(e) + ": " + err.what(), static_cast<long>(e));
        }
        const auto& nodes = mesh.elements[e];
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                for (int i = 0; i < 2; ++i)
                    for (int k = 0; k < 2; ++k)
                        triplets.emplace_back(2 * nodes[a] + i, 2 * nodes[b] + k, ke(2 * a + i, 2 * b + k));
        for (std::size_t g = 0; g < rule.points.size(); ++g) {
            const Q4Point q = evaluate_q4(xy, rule.points[g]);
            for (int a = 0; a < 4; ++a) sys.nodal_volume[nodes[a]] += rule.weights[g] * q.det_jacobian * q.shape[a];
        }
    }
    sys.stiffness.resize(n_dofs, n_dofs);
    sys.stiffness.setFromTriplets(triplets.begin(), triplets.end());
    sys.volume = sys.nodal_volume.sum();
    return sys;
}

Eigen::VectorXd PeriodicSystem::restrict_load(const Eigen::VectorXd& full) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(reduced_dofs());
    for (std::size_t n = 0; n < reduced_node.size(); ++n) {
        r[2 * reduced_node[n]] += full[2 * n];
        r[2 * reduced_node[n] + 1] += full[2 * n + 1];
    }
    return r;
}

Eigen::VectorXd PeriodicSystem::expand(const Eigen::VectorXd& reduced) const {
    Eigen::VectorXd u(full_dofs());
    for (std::size_t n = 0; n < reduced_node.size(); ++n) {
        u[2 * n] = reduced[2 * reduced_node[n]];
        u[2 * n + 1] = reduced[2 * reduced_node[n] + 1];
    }
    return u;
}

Eigen::Vector2d PeriodicSystem::constraint_residual(const Eigen::VectorXd& full) const {
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    for (Eigen::Index n = 0; n < full_nodal_volume.size(); ++n) {
        s[0] += full_nodal_volume[n] * full[2 * n];
        s[1] += full_nodal_volume[n] * full[2 * n + 1];
    }
    return s;
}

Eigen::MatrixXd PeriodicSystem::constraint_rows() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, reduced_dofs());
    for (Eigen::Index r = 0; r < mean_weights.size(); ++r) {
        m(0, 2 * r) = mean_weights[r];
        m(1, 2 * r + 1) = mean_weights[r];
    }
    return m;
}

PeriodicSystem condense_periodic_zero_mean(const LinearSystem& system, const PeriodicMesh& mesh) {
    const int n = static_cast<int>(mesh.node_count());
    std::vector<int> master(n);
    for (int k = 0; k < n; ++k) master[k] = k;
    auto link = [&](int m, int s) {
        if (m < 0 || s < 0 || m >= n || s >= n) throw ConstraintError("periodic pair references a missing node");
        if (m == s) throw ConstraintError("node " + std::to_string(s) + " is paired with itself");
        if (master[s] != s && master[s] != m)
            throw ConstraintError("node " + std::to_string(s) + " has two different masters");
        master[s] = m;
    };
    for (const auto& p : mesh.periodic_pairs) link(p.master, p.slave);
    if (mesh.periodic())
        for (int k = 1; k < 4; ++k) link(mesh.corner_group[0], mesh.corner_group[k]);

    std::vector<int> root(n);
    for (int k = 0; k < n; ++k) {
        int r = k;
        for (int steps = 0; master[r] != r; ++steps) {
            if (steps > n) throw ConstraintError("periodic pairs form a cycle through node " + std::to_string(k));
            r = master[r];
        }
        root[k] = r;
    }
    PeriodicSystem ps;
    ps.reduced_node.assign(n, -1);
    int count = 0;
    for (int k = 0; k < n; ++k)
        if (root[k] == k) ps.reduced_node[k] = count++;
    for (int k = 0; k < n; ++k) ps.reduced_node[k] = ps.reduced_node[root[k]];

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(system.stiffness.nonZeros());
    auto map_dof = [&](Eigen::Index d) { return 2 * static_cast<Eigen::Index>(ps.reduced_node[d / 2]) + d % 2; };
    for (int col = 0; col < system.stiffness.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(system.stiffness, col); it; ++it)
            triplets.emplace_back(map_dof(it.row()), map_dof(it.col()), it.value());
    ps.stiffness.resize(2 * count, 2 * count);
    ps.stiffness.setFromTriplets(triplets.begin(), triplets.end());
    ps.full_nodal_volume = system.nodal_volume;
    ps.mean_weights = Eigen::VectorXd::Zero(count);
    for (int k = 0; k < n; ++k) ps.mean_weights[ps.reduced_node[k]] += system.nodal_volume[k];
    ps.volume = system.volume;
    return ps;
}

Preconditioner parse_preconditioner(const std::string& name) {
    if (name == "none") return Preconditioner::none;
    if (name == "diagonal" || name == "jacobi") return Preconditioner::diagonal;
    if (name == "cholesky") return Preconditioner::cholesky;
    throw ConfigError("unknown preconditioner '" + name + "' (expected diagonal, none or cholesky)");
}

std::string to_string(Preconditioner p) {
    switch (p) {
    case Preconditioner::none: return "none";
    case Preconditioner::diagonal: return "diagonal";
    case Preconditioner::cholesky: return "cholesky";
    }
    return "?";
}

class PreconditionerOp {
public:
    PreconditionerOp(const SparseMatrix& a, Preconditioner kind, bool singular) : kind_(kind) {
        if (kind == Preconditioner::diagonal) {
            inv_diag_ = a.diagonal();
            for (Eigen::Index i = 0; i < inv_diag_.size(); ++i)
                inv_diag_[i] = inv_diag_[i] > 0.0 ? 1.0 / inv_diag_[i] : 1.0;
        } else if (kind == Preconditioner::cholesky) {
            SparseMatrix m = a;
            if (singular) {
                // Pin one x and one y dof at the stiffest node; consistent loads are
                // then solved exactly up to a constant.
                const Eigen::VectorXd d = a.diagonal();
                for (int c = 0; c < 2; ++c) {
                    Eigen::Index best = c;
                    for (Eigen::Index i = c; i < d.size(); i += 2)
                        if (d[i] > d[best]) best = i;
                    pinned_.push_back(best);
                }
                for (int col = 0; col < m.outerSize(); ++col)
                    for (SparseMatrix::InnerIterator it(m, col); it; ++it)
                        if (is_pinned(it.row()) || is_pinned(it.col()))
                            it.valueRef() = it.row() == it.col() ? 1.0 : 0.0;
            }
            factor_.compute(m);
            if (factor_.info() != Eigen::Success) throw SolverError("sparse factorization failed", 0.0, 0);
        }
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& r) const {
        switch (kind_) {
        case Preconditioner::none: return r;
        case Preconditioner::diagonal: return inv_diag_.cwiseProduct(r);
        case Preconditioner::cholesky: {
            Eigen::VectorXd rr = r;
            for (auto p : pinned_) rr[p] = 0.0;
            Eigen::VectorXd z = factor_.solve(rr);
            for (auto p : pinned_) z[p] = 0.0;
            return z;
        }
        }
        return r;
    }

private:
    bool is_pinned(Eigen::Index i) const { return std::find(pinned_.begin(), pinned_.end(), i) != pinned_.end(); }

    Preconditioner kind_;
    Eigen::VectorXd inv_diag_;
    std::vector<Eigen::Index> pinned_;
    Eigen::SimplicialLDLT<SparseMatrix> factor_;
};

KrylovSolver::KrylovSolver(const SparseMatrix& matrix, const SolverSettings& settings, bool project_constants)
    : matrix_(matrix), diagonal_(matrix_.diagonal()), settings_(settings), project_constants_(project_constants),
      preconditioner_(std::make_unique<PreconditionerOp>(matrix_, settings.preconditioner, project_constants)) {}

KrylovSolver::~KrylovSolver() = default;
KrylovSolver::KrylovSolver(KrylovSolver&&) noexcept = default;
KrylovSolver& KrylovSolver::operator=(KrylovSolver&&) noexcept = default;

namespace {

// Removes the per-component sums of a load so it lies in the range of the
// singular periodic matrix. The correction is spread in proportion to the
// matrix diagonal: soft dofs then receive only a correction on their own
// scale, which matters at extreme phase contrast.
void remove_component_sums(Eigen::VectorXd& v, const Eigen::VectorXd& diag) {
    const Eigen::Index nodes = v.size() / 2;
    for (int c = 0; c < 2; ++c) {
        double s = 0.0, w = 0.0;
        for (Eigen::Index k = 0; k < nodes; ++k) {
            s += v[2 * k + c];
            w += diag[2 * k + c];
        }
        if (w <= 0.0) continue;
        for (Eigen::Index k = 0; k < nodes; ++k) v[2 * k + c] -= s * diag[2 * k + c] / w;
    }
}

} // namespace

Eigen::VectorXd KrylovSolver::solve(const Eigen::VectorXd& rhs, SolveReport* report) const {
    const Eigen::Index n = matrix_.rows();
    if (rhs.size() != n) throw Error("right-hand side has the wrong size");
    Eigen::VectorXd r = rhs;
    if (project_constants_) remove_component_sums(r, diagonal_);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd z = preconditioner_->apply(r);
    const double initial = z.norm();
    SolveReport local;
    local.initial_residual = initial;
    local.final_residual = initial;
    const double target = std::max(settings_.rel_tol * initial, settings_.abs_tol);
    const long max_iter = settings_.max_iterations > 0 ? settings_.max_iterations : 10 * static_cast<long>(n);
    if (initial <= target) {
        if (report) *report = local;
        return x;
    }
    Eigen::VectorXd p = z;
    Eigen::VectorXd ap(n);
    double rz = r.dot(z);
    for (long it = 1; it <= max_iter; ++it) {
        ap.noalias() = matrix_ * p;
        const double pap = p.dot(ap);
        if (!(pap > 0.0)) {
            local.iterations = it;
            throw SolverError("conjugate gradients broke down (non-positive curvature " + std::to_string(pap) + ")",
                              local.final_residual, it);
        }
        const double alpha = rz / pap;
        x += alpha * p;
        r -= alpha * ap;
        z = preconditioner_->apply(r);
        local.iterations = it;
        local.final_residual = z.norm();
        if (local.final_residual <= target) {
            if (report) *report = local;
            return x;
        }
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    std::ostringstream msg;
    msg << "solver did not converge in " << max_iter << " iterations (residual " << local.final_residual
        << ", target " << target << ")";
    throw SolverError(msg.str(), local.final_residual, max_iter);
}

PeriodicSolver::PeriodicSolver(const PeriodicSystem& system, const SolverSettings& settings)
    : system_(&system), krylov_(system.stiffness, settings, true) {}

Eigen::VectorXd PeriodicSolver::solve(const Eigen::VectorXd& full_rhs, SolveReport* report) const {
    const Eigen::VectorXd reduced = krylov_.solve(system_->restrict_load(full_rhs), report);
    Eigen::VectorXd u = system_->expand(reduced);
    const Eigen::Vector2d mean = system_->constraint_residual(u) / system_->volume;
    for (Eigen::Index k = 0; k < u.size() / 2; ++k) {
        u[2 * k] -= mean[0];
        u[2 * k + 1] -= mean[1];
    }
    return u;
}

Eigen::VectorXd solve(const PeriodicSystem& system, const Eigen::VectorXd& full_rhs, const SolverSettings& settings,
                      SolveReport* report) {
    return PeriodicSolver(system, settings).solve(full_rhs, report);
}

DirichletSolver::DirichletSolver(const SparseMatrix& matrix, std::vector<Eigen::Index> fixed_dofs,
                                 const SolverSettings& settings)
    : fixed_(std::move(fixed_dofs)) {
    const Eigen::Index n = matrix.rows();
    std::vector<Eigen::Index> fixed_pos(n, -1);
    for (std::size_t k = 0; k < fixed_.size(); ++k) {
        if (fixed_[k] < 0 || fixed_[k] >= n) throw Error("prescribed dof out of range");
        if (fixed_pos[fixed_[k]] >= 0) throw Error("dof prescribed twice");
        fixed_pos[fixed_[k]] = static_cast<Eigen::Index>(k);
    }
    free_index_.assign(n, -1);
    Eigen::Index nfree = 0;
    for (Eigen::Index d = 0; d < n; ++d)
        if (fixed_pos[d] < 0) free_index_[d] = nfree++;
    std::vector<Eigen::Triplet<double>> ff, fc;
    for (int col = 0; col < matrix.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(matrix, col); it; ++it) {
            const Eigen::Index r = free_index_[it.row()];
            if (r < 0) continue;
            if (free_index_[it.col()] >= 0)
                ff.emplace_back(r, free_index_[it.col()], it.value());
            else
                fc.emplace_back(r, fixed_pos[it.col()], it.value());
        }
    SparseMatrix kff(nfree, nfree);
    kff.setFromTriplets(ff.begin(), ff.end());
    free_fixed_.resize(nfree, static_cast<Eigen::Index>(fixed_.size()));
    free_fixed_.setFromTriplets(fc.begin(), fc.end());
    krylov_ = std::make_unique<KrylovSolver>(kff, settings, false);
}

Eigen::VectorXd DirichletSolver::solve(const Eigen::VectorXd& fixed_values, const Eigen::VectorXd& load,
                                       SolveReport* report) const {
    const auto n = static_cast<Eigen::Index>(free_index_.size());
    Eigen::VectorXd rhs(n - static_cast<Eigen::Index>(fixed_.size()));
    for (Eigen::Index d = 0; d < n; ++d)
        if (free_index_[d] >= 0) rhs[free_index_[d]] = load[d];
    rhs -= free_fixed_ * fixed_values;
    const Eigen::VectorXd uf = krylov_->solve(rhs, report);
    Eigen::VectorXd u(n);
    for (Eigen::Index d = 0; d < n; ++d)
        if (free_index_[d] >= 0) u[d] = uf[free_index_[d]];
    for (std::size_t k = 0; k < fixed_.size(); ++k) u[fixed_[k]] = fixed_values[static_cast<Eigen::Index>(k)];
    return u;
}

} // namespace gradhom
