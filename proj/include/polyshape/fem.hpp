#pragma once

#include "polyshape/corner.hpp"
#include "polyshape/extension.hpp"
#include "polyshape/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <functional>
#include <memory>
#include <ostream>

namespace polyshape {

using MeshPtr = std::shared_ptr<const Mesh>;

/// Degree-5 seven-point rule on the reference triangle (barycentric coordinates, weights sum 1).
struct TriangleRule {
    std::vector<std::array<double, 3>> bary;
    std::vector<double> weights;
};

inline const TriangleRule& dunavant7() {
    static const TriangleRule rule = [] {
        TriangleRule r;
        const double a1 = 0.059715871789770, b1 = 0.470142064105115;
        const double a2 = 0.797426985353087, b2 = 0.101286507323456;
        const double w0 = 0.225, w1 = 0.132394152788506, w2 = 0.125939180544827;
        r.bary = {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {a1, b1, b1}, {b1, a1, b1}, {b1, b1, a1}, {a2, b2, b2}, {b2, a2, b2}, {b2, b2, a2}};
        r.weights = {w0, w1, w1, w1, w2, w2, w2};
        return r;
    }();
    return rule;
}

/// Function on the outer boundary, stored at the boundary nodes of a mesh.
struct BoundaryFunction {
    std::vector<int> nodes;
    std::vector<Vec2> points;
    std::vector<double> arc;
    std::vector<double> values;
    std::optional<std::pair<int, bool>> fourier;  // (mode, is_cosine) when built from a Fourier mode

    int size() const { return static_cast<int>(values.size()); }

    double edge_length(int k) const { return (points[(k + 1) % size()] - points[k]).norm(); }
    double length() const {
        double s = 0.0;
        for (int k = 0; k < size(); ++k) s += edge_length(k);
        return s;
    }

    /// Exact L2 inner product of the piecewise-linear interpolants.
    double inner(const BoundaryFunction& o) const {
        double s = 0.0;
        int n = size();
        for (int k = 0; k < n; ++k) {
            int j = (k + 1) % n;
            s += edge_length(k) / 6.0 *
                 (2 * values[k] * o.values[k] + values[k] * o.values[j] + values[j] * o.values[k] + 2 * values[j] * o.values[j]);
        }
        return s;
    }
    double integral() const {
        double s = 0.0;
        int n = size();
        for (int k = 0; k < n; ++k) s += 0.5 * edge_length(k) * (values[k] + values[(k + 1) % n]);
        return s;
    }
    double mean() const { return integral() / length(); }
    double norm() const { return std::sqrt(std::max(0.0, inner(*this))); }

    BoundaryFunction normalized() const {
        BoundaryFunction r = *this;
        double m = mean();
        for (double& v : r.values) v -= m;
        return r;
    }

    BoundaryFunction operator-(const BoundaryFunction& o) const {
        BoundaryFunction r = *this;
        r.fourier.reset();
        for (int k = 0; k < size(); ++k) r.values[k] -= o.values[k];
        return r;
    }
    BoundaryFunction operator+(const BoundaryFunction& o) const {
        BoundaryFunction r = *this;
        r.fourier.reset();
        for (int k = 0; k < size(); ++k) r.values[k] += o.values[k];
        return r;
    }
    BoundaryFunction operator*(double s) const {
        BoundaryFunction r = *this;
        for (double& v : r.values) v *= s;
        return r;
    }

    /// Periodic linear interpolation in arc length (used to move data between meshes).
    double at_arc(double s, double perimeter) const {
        s = std::fmod(s, perimeter);
        if (s < 0) s += perimeter;
        int n = size();
        auto it = std::upper_bound(arc.begin(), arc.end(), s);
        int j = static_cast<int>(it - arc.begin());
        int a = (j - 1 + n) % n, b = j % n;
        double sa = arc[a], sb = arc[b];
        if (j == 0) sa -= perimeter;
        if (j == n) sb += perimeter;
        double w = sb > sa ? (s - sa) / (sb - sa) : 0.0;
        return (1 - w) * values[a] + w * values[b];
    }

    void write_csv(std::ostream& os) const {
        os.precision(12);
        os << "arc_length,value\n";
        for (int k = 0; k < size(); ++k) os << arc[k] << ',' << values[k] << "\n";
    }
};

inline BoundaryFunction boundary_function(const Mesh& mesh, const std::function<double(const Vec2&, double)>& f) {
    BoundaryFunction b;
    b.nodes = mesh.boundary_nodes;
    b.arc = mesh.boundary_arc;
    for (size_t k = 0; k < b.nodes.size(); ++k) {
        b.points.push_back(mesh.nodes[b.nodes[k]]);
        b.values.push_back(f(b.points.back(), b.arc[k]));
    }
    return b;
}

/// Fourier current of the given mode in the angular (disk) or normalized arc-length variable.
inline BoundaryFunction fourier_current(const Mesh& mesh, const OuterDomain& outer, int mode, bool cosine) {
    double per = outer.perimeter();
    auto b = boundary_function(mesh, [&](const Vec2&, double s) {
        double th = two_pi * s / per;
        return cosine ? std::cos(mode * th) : std::sin(mode * th);
    });
    b.fourier = std::make_pair(mode, cosine);
    return b;
}

/// Interpolates `src` (possibly from another mesh) onto the boundary nodes of `mesh`.
inline BoundaryFunction transfer(const BoundaryFunction& src, const Mesh& mesh, double perimeter) {
    return boundary_function(mesh, [&](const Vec2&, double s) { return src.at_arc(s, perimeter); });
}

/// Orthonormal zero-mean Fourier family of 2 * modes functions.
inline std::vector<BoundaryFunction> fourier_family(const Mesh& mesh, const OuterDomain& outer, int modes) {
    std::vector<BoundaryFunction> fam;
    double scale = std::sqrt(2.0 / outer.perimeter());
    for (int m = 1; m <= modes; ++m)
        for (bool c : {true, false}) {
            auto b = fourier_current(mesh, outer, m, c) * scale;
            b.fourier = std::make_pair(m, c);
            fam.push_back(b);
        }
    return fam;
}

/// Piecewise-linear nodal field.
struct FemField {
    MeshPtr mesh;
    Eigen::VectorXd values;

    Vec2 gradient(int t) const {
        auto g = mesh->hat_gradients(t);
        const auto& v = mesh->triangles[t];
        return values[v[0]] * g[0] + values[v[1]] * g[1] + values[v[2]] * g[2];
    }

    double at(int t, const std::array<double, 3>& bary) const {
        const auto& v = mesh->triangles[t];
        return bary[0] * values[v[0]] + bary[1] * values[v[1]] + bary[2] * values[v[2]];
    }

    /// Largest gap between twin nodes (zero for continuous fields).
    double twin_gap() const {
        double g = 0.0;
        for (auto [a, b] : mesh->twins) g = std::max(g, std::abs(values[a] - values[b]));
        return g;
    }

    FemField operator-(const FemField& o) const { return {mesh, values - o.values}; }
    FemField operator+(const FemField& o) const { return {mesh, values + o.values}; }
    FemField operator*(double s) const { return {mesh, values * s}; }

    void write_csv(std::ostream& os) const {
        os.precision(12);
        os << "node_index,x,y,region,value\n";
        std::vector<int> region(mesh->nodes.size(), 0);
        for (int t = 0; t < mesh->num_triangles(); ++t)
            for (int v : mesh->triangles[t]) region[v] = std::max(region[v], mesh->region[t]);
        for (int i = 0; i < mesh->num_nodes(); ++i)
            os << i << ',' << mesh->nodes[i].x() << ',' << mesh->nodes[i].y() << ',' << region[i] << ',' << values[i] << "\n";
    }
};

/// Mean-normalized restriction to the outer boundary.
inline BoundaryFunction boundary_trace(const FemField& u) {
    return boundary_function(*u.mesh, [&, k = 0](const Vec2&, double) mutable {
               return u.values[u.mesh->boundary_nodes[k++]];
           })
        .normalized();
}

/// Discrete operator for one contrast on one mesh: assembled stiffness, numbering of the
/// active unknowns and the factorization, reused for every load.
class FemSystem {
public:
    enum class Mode { Transmission, Exterior, Grounded };

    FemSystem(MeshPtr mesh, const Contrast& contrast) : mesh_(std::move(mesh)), contrast_(contrast) {
        if (contrast.is_finite())
            mode_ = Mode::Transmission;
        else
            mode_ = contrast.kind() == Contrast::Kind::Insulating ? Mode::Exterior : Mode::Grounded;
        number();
        assemble();
        factorize();
    }

    const Mesh& mesh() const { return *mesh_; }
    MeshPtr mesh_ptr() const { return mesh_; }
    const Contrast& contrast() const { return contrast_; }
    Mode mode() const { return mode_; }
    int num_dofs() const { return ndof_; }
    int dof_of(int node) const { return dof_[node]; }
    bool active(int t) const { return mode_ == Mode::Transmission || mesh_->region[t] == 0; }
    double sigma(int t) const { return mode_ == Mode::Transmission ? contrast_.sigma(mesh_->region[t]) : 1.0; }
    const Eigen::SparseMatrix<double>& stiffness() const { return K_; }
    const Eigen::VectorXd& boundary_mass() const { return c_; }

    /// Neumann load  int f v ds  for a boundary current.
    Eigen::VectorXd neumann_load(const BoundaryFunction& f, bool check_mean = true) const {
        if (check_mean) {
            double scale = std::max(f.norm() * std::sqrt(f.length()), 1e-300);
            if (std::abs(f.integral()) > 1e-8 * scale) throw Error(ErrorKind::NonZeroMeanCurrent, "current has nonzero mean");
        }
        Eigen::VectorXd b = Eigen::VectorXd::Zero(ndof_);
        int n = f.size();
        for (int k = 0; k < n; ++k) {
            int j = (k + 1) % n;
            double len = f.edge_length(k);
            int a = dof_[f.nodes[k]], bb = dof_[f.nodes[j]];
            if (a >= 0) b[a] += len / 6.0 * (2 * f.values[k] + f.values[j]);
            if (bb >= 0) b[bb] += len / 6.0 * (f.values[k] + 2 * f.values[j]);
        }
        return b;
    }

    /// Solves K u = b (with the zero boundary-mean constraint when the operator has
    /// constants in its kernel); returns nodal values.
    Eigen::VectorXd solve_dofs(Eigen::VectorXd b) const {
        if (mode_ != Mode::Grounded) {
            // Lagrange multiplier of the mean constraint, eliminated exactly
            double lambda = b.sum() / c_.sum();
            b -= lambda * c_;
            b[pin_] = 0.0;
        }
        Eigen::VectorXd u = ldlt_.solve(b);
        if (ldlt_.info() != Eigen::Success) throw Error(ErrorKind::SolverDivergence, "sparse solve failed");
        if (mode_ != Mode::Grounded) u.array() -= c_.dot(u) / c_.sum();
        return u;
    }

    Eigen::VectorXd scatter(const Eigen::VectorXd& u) const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(mesh_->num_nodes());
        for (int i = 0; i < mesh_->num_nodes(); ++i)
            if (dof_[i] >= 0) v[i] = u[dof_[i]];
        return v;
    }

    FemField solve(const Eigen::VectorXd& load) const { return {mesh_, scatter(solve_dofs(load))}; }

    /// Load vector  int G(x) . grad v  assembled with the 7-point rule; G given per
    /// triangle and quadrature point.
    template <class F>
    Eigen::VectorXd gradient_load(F&& G) const {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(ndof_);
        const auto& rule = dunavant7();
        for (int t = 0; t < mesh_->num_triangles(); ++t) {
            if (!active(t)) continue;
            auto g = mesh_->hat_gradients(t);
            const auto& v = mesh_->triangles[t];
            double area = mesh_->area(t);
            Vec2 acc = Vec2::Zero();
            bool any = false;
            for (size_t q = 0; q < rule.weights.size(); ++q) {
                Vec2 x = rule.bary[q][0] * mesh_->nodes[v[0]] + rule.bary[q][1] * mesh_->nodes[v[1]] +
                         rule.bary[q][2] * mesh_->nodes[v[2]];
                std::optional<Vec2> val = G(t, x);
                if (!val) continue;
                any = true;
                acc += rule.weights[q] * area * (*val);
            }
            if (!any) continue;
            for (int k = 0; k < 3; ++k)
                if (dof_[v[k]] >= 0) b[dof_[v[k]]] += acc.dot(g[k]);
        }
        return b;
    }

    /// Load vector  int S(x) v dx  with the 7-point rule; S returns nullopt to skip a triangle.
    template <class F>
    Eigen::VectorXd volume_load(F&& S) const {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(ndof_);
        const auto& rule = dunavant7();
        for (int t = 0; t < mesh_->num_triangles(); ++t) {
            if (!active(t)) continue;
            const auto& v = mesh_->triangles[t];
            double area = mesh_->area(t);
            std::array<double, 3> acc{0, 0, 0};
            for (size_t q = 0; q < rule.weights.size(); ++q) {
                Vec2 x = rule.bary[q][0] * mesh_->nodes[v[0]] + rule.bary[q][1] * mesh_->nodes[v[1]] +
                         rule.bary[q][2] * mesh_->nodes[v[2]];
                double s = S(t, x);
                if (s == 0.0) continue;
                for (int k = 0; k < 3; ++k) acc[k] += rule.weights[q] * area * s * rule.bary[q][k];
            }
            for (int k = 0; k < 3; ++k)
                if (dof_[v[k]] >= 0) b[dof_[v[k]]] += acc[k];
        }
        return b;
    }

    /// Broken energy form a(w, v) of a nodal field (may jump across twins) against every test dof.
    Eigen::VectorXd apply_broken(const Eigen::VectorXd& w) const {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(ndof_);
        for (int t = 0; t < mesh_->num_triangles(); ++t) {
            if (!active(t)) continue;
            auto g = mesh_->hat_gradients(t);
            const auto& v = mesh_->triangles[t];
            Vec2 gw = w[v[0]] * g[0] + w[v[1]] * g[1] + w[v[2]] * g[2];
            double s = sigma(t) * mesh_->area(t);
            for (int k = 0; k < 3; ++k)
                if (dof_[v[k]] >= 0) b[dof_[v[k]]] += s * gw.dot(g[k]);
        }
        return b;
    }

    /// Residual of the discrete variational identity a(u, v) - l(v) per dof.
    Eigen::VectorXd residual(const FemField& u, const Eigen::VectorXd& load) const {
        return apply_broken(u.values) - load;
    }

private:
    MeshPtr mesh_;
    Contrast contrast_;
    Mode mode_ = Mode::Transmission;
    std::vector<int> dof_;
    int ndof_ = 0;
    int pin_ = 0;
    Eigen::SparseMatrix<double> K_;
    Eigen::VectorXd c_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;

    void number() {
        const Mesh& m = *mesh_;
        int nn = m.num_nodes();
        dof_.assign(nn, -1);
        std::vector<char> touched(nn, 0), grounded(nn, 0);
        for (int t = 0; t < m.num_triangles(); ++t) {
            for (int v : m.triangles[t]) {
                if (active(t)) touched[m.dof[v]] = 1;
                if (mode_ == Mode::Grounded && m.region[t] == 1) grounded[m.dof[v]] = 1;
            }
        }
        std::vector<int> compact(nn, -1);
        for (int i = 0; i < nn; ++i) {
            int root = m.dof[i];
            if (!touched[root] || grounded[root]) continue;
            if (compact[root] < 0) compact[root] = ndof_++;
            dof_[i] = compact[root];
        }
    }

    void assemble() {
        const Mesh& m = *mesh_;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(m.num_triangles() * 9);
        for (int t = 0; t < m.num_triangles(); ++t) {
            if (!active(t)) continue;
            auto g = m.hat_gradients(t);
            double s = sigma(t) * m.area(t);
            const auto& v = m.triangles[t];
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    int da = dof_[v[a]], db = dof_[v[b]];
                    if (da >= 0 && db >= 0) trip.emplace_back(da, db, s * g[a].dot(g[b]));
                }
        }
        K_.resize(ndof_, ndof_);
        K_.setFromTriplets(trip.begin(), trip.end());
        c_ = Eigen::VectorXd::Zero(ndof_);
        int nb = static_cast<int>(m.boundary_nodes.size());
        for (int k = 0; k < nb; ++k) {
            int a = m.boundary_nodes[k], b = m.boundary_nodes[(k + 1) % nb];
            double len = (m.nodes[a] - m.nodes[b]).norm();
            if (dof_[a] >= 0) c_[dof_[a]] += 0.5 * len;
            if (dof_[b] >= 0) c_[dof_[b]] += 0.5 * len;
        }
        pin_ = dof_[m.boundary_nodes.front()];
    }

    void factorize() {
        Eigen::SparseMatrix<double> A = K_;
        if (mode_ != Mode::Grounded) {
            // pin one boundary unknown; the mean is restored after the solve
            for (Eigen::SparseMatrix<double>::InnerIterator it(A, pin_); it; ++it) it.valueRef() = 0.0;
            for (int col = 0; col < A.outerSize(); ++col)
                for (Eigen::SparseMatrix<double>::InnerIterator it(A, col); it; ++it)
                    if (it.row() == pin_) it.valueRef() = 0.0;
            A.coeffRef(pin_, pin_) = 1.0;
            A.prune(0.0);
        }
        ldlt_.compute(A);
        if (ldlt_.info() != Eigen::Success) throw Error(ErrorKind::SolverDivergence, "factorization failed");
    }
};

/// Forward problem: finite contrast, insulating and grounded conducting inclusions.
inline FemField solve_forward(const FemSystem& sys, const BoundaryFunction& f) { return sys.solve(sys.neumann_load(f)); }

inline FemField solve_degenerate(const FemSystem& sys, const BoundaryFunction& f) {
    if (sys.contrast().is_finite()) throw Error(ErrorKind::Config, "degenerate solve needs k = 0 or infinity");
    return solve_forward(sys, f);
}

/// Source of the material-derivative matrix field.
struct MaterialVelocity {
    const ExtensionField* H = nullptr;
    bool interpolated = false;  // use the nodal interpolant of H (the discrete velocity)
};

/// Material derivative: a(udot, w) = - int sigma grad u . (A_H grad w).
inline FemField solve_material(const FemSystem& sys, const FemField& u, const MaterialVelocity& vel) {
    const Mesh& m = sys.mesh();
    const ExtensionField& H = *vel.H;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(sys.num_dofs());
    std::vector<Vec2> nodal;
    if (vel.interpolated) {
        nodal.resize(m.num_nodes());
        for (int i = 0; i < m.num_nodes(); ++i) nodal[i] = H.evaluate(m.nodes[i]).value;
    }
    const auto& rule = dunavant7();
    for (int t = 0; t < m.num_triangles(); ++t) {
        if (!sys.active(t)) continue;
        auto g = m.hat_gradients(t);
        const auto& v = m.triangles[t];
        Mat2 A = Mat2::Zero();
        if (vel.interpolated) {
            Mat2 dH;
            Vec2 h0 = nodal[v[0]], h1 = nodal[v[1]], h2 = nodal[v[2]];
            if (h0.isZero() && h1.isZero() && h2.isZero()) continue;
            dH = h0 * g[0].transpose() + h1 * g[1].transpose() + h2 * g[2].transpose();
            A = material_matrix(dH) * m.area(t);
        } else {
            int q = m.quad.empty() ? -1 : m.quad[t];
            if (q < 0) continue;
            for (size_t k = 0; k < rule.weights.size(); ++k) {
                Vec2 x = rule.bary[k][0] * m.nodes[v[0]] + rule.bary[k][1] * m.nodes[v[1]] + rule.bary[k][2] * m.nodes[v[2]];
                A += rule.weights[k] * m.area(t) * material_matrix(H.evaluate_in(q, x).jacobian);
            }
        }
        Vec2 gu = u.gradient(t);
        Vec2 flux = -sys.sigma(t) * (A.transpose() * gu);
        for (int k = 0; k < 3; ++k)
            if (sys.dof_of(v[k]) >= 0) b[sys.dof_of(v[k])] += flux.dot(g[k]);
    }
    return sys.solve(b);
}

/// Jump-carrying solve on a duplicated mesh: [w] = phi at twins (phi indexed by minus-side
/// node), extra load l(v) for the flux jump and volume sources. Returns the broken field.
inline FemField solve_jump(const FemSystem& sys, const std::vector<double>& phi_at_node, const Eigen::VectorXd& load,
                           double compat_tol = std::numeric_limits<double>::infinity(), double* compat_out = nullptr) {
    const Mesh& m = sys.mesh();
    if (!m.duplicated()) throw Error(ErrorKind::RequiresDuplicatedMesh, "jump solve needs twin nodes");
    if (sys.mode() != FemSystem::Mode::Transmission) throw Error(ErrorKind::Config, "jump solve needs a finite contrast");
    Eigen::VectorXd lift = Eigen::VectorXd::Zero(m.num_nodes());
    for (auto [a, b] : m.twins) lift[b] = phi_at_node[a];
    double compat = load.sum();
    if (compat_out) *compat_out = compat;
    if (std::abs(compat) > compat_tol) throw Error(ErrorKind::IncompatibleData, "integrability condition violated");
    Eigen::VectorXd rhs = load - sys.apply_broken(lift);
    // the lift carries no boundary values, so the mean constraint applies to the continuous part
    Eigen::VectorXd w = sys.scatter(sys.solve_dofs(rhs)) + lift;
    return {sys.mesh_ptr(), w};
}

/// Nodal average of element gradients over the triangles of one region touching each node.
inline std::vector<Vec2> nodal_gradients(const FemField& u, int region = -1) {
    const Mesh& m = *u.mesh;
    std::vector<Vec2> g(m.num_nodes(), Vec2::Zero());
    std::vector<double> w(m.num_nodes(), 0.0);
    for (int t = 0; t < m.num_triangles(); ++t) {
        if (region >= 0 && m.region[t] != region) continue;
        Vec2 gt = u.gradient(t);
        double a = m.area(t);
        for (int v : m.triangles[t]) {
            g[v] += a * gt;
            w[v] += a;
        }
    }
    for (int i = 0; i < m.num_nodes(); ++i)
        if (w[i] > 0) g[i] /= w[i];
    return g;
}

}  // namespace polyshape
