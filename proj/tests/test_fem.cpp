#include <gtest/gtest.h>

#include "polyshape/fem.hpp"

using namespace polyshape;

namespace {

Polygon ngon(int n, double rho) {
    std::vector<Vec2> v;
    for (int i = 0; i < n; ++i) v.push_back(rho * Vec2(std::cos(two_pi * i / n), std::sin(two_pi * i / n)));
    return build_polygon(v, OuterDomain::disk());
}

MeshPtr make_mesh(const Polygon& poly, double hmax, bool dup = false) {
    MeshOptions opt;
    opt.hmax = hmax;
    opt.duplicate_interface = dup;
    return std::make_shared<const Mesh>(generate_mesh(poly, OuterDomain::disk(), opt));
}

double rel_error(const BoundaryFunction& a, const BoundaryFunction& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(Fem, UnitContrastReproducesLinearField) {
    auto poly = ngon(6, 0.4);
    auto m = make_mesh(poly, 0.08);
    FemSystem sys(m, Contrast::finite(1.0, true));
    // f = a . n on the unit circle gives u = a . x
    Vec2 a(0.7, -0.3);
    auto f = boundary_function(*m, [&](const Vec2& p, double) { return a.dot(p.normalized()); });
    auto u = solve_forward(sys, f.normalized());
    auto exact = boundary_function(*m, [&](const Vec2& p, double) { return a.dot(p); }).normalized();
    // the polygonal boundary makes the discrete normal slightly off the circle normal
    EXPECT_LT(rel_error(boundary_trace(u), exact), 5e-3);
}

TEST(Fem, RejectsNonzeroMeanCurrent) {
    auto m = make_mesh(ngon(5, 0.4), 0.1);
    FemSystem sys(m, Contrast::finite(3.0));
    auto f = boundary_function(*m, [](const Vec2& p, double) { return 1.0 + p.x(); });
    try {
        solve_forward(sys, f);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonZeroMeanCurrent);
    }
}

// Concentric two-phase disk: u = A r cos(t) inside, (B r + C / r) cos(t) outside.
TEST(Fem, ConcentricDiskSeries) {
    const double rho = 0.5;
    auto poly = ngon(64, rho);
    auto m = make_mesh(poly, 0.02);
    for (double k : {0.2, 5.0}) {
        FemSystem sys(m, Contrast::finite(k));
        auto f = boundary_function(*m, [](const Vec2& p, double) { return std::cos(std::atan2(p.y(), p.x())); });
        auto u = solve_forward(sys, f.normalized());
        // continuity and flux at rho, Neumann at 1
        Eigen::Matrix3d M;
        M << rho, -rho, -1 / rho, k, -1, 1 / (rho * rho), 0, 1, -1;
        Eigen::Vector3d abc = M.colPivHouseholderQr().solve(Eigen::Vector3d(0, 0, 1));
        double trace_amp = abc[1] + abc[2];
        auto exact = boundary_function(*m, [&](const Vec2& p, double) { return trace_amp * std::cos(std::atan2(p.y(), p.x())); });
        EXPECT_LT(rel_error(boundary_trace(u), exact.normalized()), 3e-3) << "k=" << k;
    }
}

TEST(Fem, DegenerateDiskSeries) {
    const double rho = 0.5;
    auto poly = ngon(64, rho);
    auto m = make_mesh(poly, 0.02);
    auto f = boundary_function(*m, [](const Vec2& p, double) { return std::sin(std::atan2(p.y(), p.x())); }).normalized();
    // insulating: B (1 - rho^2) = 1, trace amplitude B (1 + rho^2)
    {
        FemSystem sys(m, Contrast::insulating());
        auto u = solve_degenerate(sys, f);
        double amp = (1 + rho * rho) / (1 - rho * rho);
        EXPECT_LT(rel_error(boundary_trace(u), f * amp), 5e-3);
    }
    // grounded conductor: B (1 + rho^2) = 1, trace amplitude B (1 - rho^2)
    {
        FemSystem sys(m, Contrast::conducting());
        auto u = solve_degenerate(sys, f);
        double amp = (1 - rho * rho) / (1 + rho * rho);
        EXPECT_LT(rel_error(boundary_trace(u), f * amp), 5e-3);
        for (int t = 0; t < m->num_triangles(); ++t) {
            if (m->region[t] != 1) continue;
            for (int v : m->triangles[t]) ASSERT_EQ(u.values[v], 0.0);
        }
    }
    FemSystem finite(m, Contrast::finite(2.0));
    EXPECT_THROW(solve_degenerate(finite, f), Error);
}

TEST(Fem, ReciprocityAndPositivity) {
    auto poly = build_polygon({{-0.3, -0.2}, {0.35, -0.25}, {0.1, 0.4}}, OuterDomain::disk());
    auto m = make_mesh(poly, 0.05);
    OuterDomain outer = OuterDomain::disk();
    auto fam = fourier_family(*m, outer, 3);
    for (double k : {0.1, 4.0}) {
        FemSystem sys(m, Contrast::finite(k));
        std::vector<BoundaryFunction> traces;
        for (const auto& f : fam) traces.push_back(boundary_trace(solve_forward(sys, f.normalized())));
        for (size_t i = 0; i < fam.size(); ++i) {
            EXPECT_GT(traces[i].inner(fam[i]), 0.0);
            for (size_t j = 0; j < i; ++j) {
                double a = traces[i].inner(fam[j]), b = traces[j].inner(fam[i]);
                EXPECT_NEAR(a, b, 1e-6 * (std::abs(a) + std::abs(b) + 1e-3));
            }
        }
    }
}

TEST(Fem, BoundaryMeanIsZero) {
    auto m = make_mesh(ngon(4, 0.5), 0.06);
    FemSystem sys(m, Contrast::finite(7.0));
    auto f = fourier_current(*m, OuterDomain::disk(), 2, false).normalized();
    auto u = solve_forward(sys, f);
    auto raw = boundary_function(*m, [&, k = 0](const Vec2&, double) mutable { return u.values[m->boundary_nodes[k++]]; });
    EXPECT_NEAR(raw.mean(), 0.0, 1e-12);
    // the discrete equation holds at every unknown
    Eigen::VectorXd load = sys.neumann_load(f);
    Eigen::VectorXd r = sys.residual(u, load);
    EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-9 * load.cwiseAbs().maxCoeff() + 1e-12);
}

// Manufactured broken solution: w = |x|^2 in D, 0 outside.
TEST(Fem, ManufacturedJump) {
    auto poly = build_polygon({{-0.35, -0.3}, {0.4, -0.2}, {0.25, 0.35}, {-0.3, 0.25}}, OuterDomain::disk());
    for (double k : {0.5, 3.0}) {
        auto m = make_mesh(poly, 0.03, true);
        FemSystem sys(m, Contrast::finite(k));
        std::vector<double> phi(m->num_nodes(), 0.0);
        for (auto [a, b] : m->twins) phi[a] = -m->nodes[a].squaredNorm();
        // F = -k * 4 inside; psi = -k d_n |x|^2 = -2k x . n on the interface
        Eigen::VectorXd load = sys.volume_load([&](int t, const Vec2&) { return m->region[t] == 1 ? -4.0 * k : 0.0; });
        Eigen::VectorXd flux = Eigen::VectorXd::Zero(sys.num_dofs());
        const auto& gl = gauss_legendre(4);
        for (const auto& ie : m->interface) {
            Vec2 pa = m->nodes[ie.a], pb = m->nodes[ie.b];
            Vec2 n = poly.normal(ie.edge);
            double len = (pb - pa).norm();
            for (size_t q = 0; q < gl.nodes.size(); ++q) {
                double s = gl.nodes[q], w = gl.weights[q];
                Vec2 x = (1 - s) * pa + s * pb;
                double psi = -2.0 * k * x.dot(n);
                flux[sys.dof_of(ie.a)] -= w * len * psi * (1 - s);
                flux[sys.dof_of(ie.b)] -= w * len * psi * s;
            }
        }
        double compat = 0.0;
        auto w = solve_jump(sys, phi, load + flux, 1e-8, &compat);
        EXPECT_LT(std::abs(compat), 1e-10);
        double err = 0.0;
        for (int t = 0; t < m->num_triangles(); ++t)
            for (int v : m->triangles[t]) {
                double exact = m->region[t] == 1 ? m->nodes[v].squaredNorm() : 0.0;
                err = std::max(err, std::abs(w.values[v] - exact));
            }
        EXPECT_LT(err, 2e-3) << "k=" << k;
        // the jump is imposed exactly at the twins
        for (auto [a, b] : m->twins) EXPECT_NEAR(w.values[b] - w.values[a], phi[a], 1e-12);

        Eigen::VectorXd bad = load;
        EXPECT_THROW(solve_jump(sys, phi, bad, 1e-8), Error);
    }
}

TEST(Fem, RequiresDuplicatedMesh) {
    auto m = make_mesh(ngon(4, 0.4), 0.1);
    FemSystem sys(m, Contrast::finite(2.0));
    std::vector<double> phi(m->num_nodes(), 0.0);
    try {
        solve_jump(sys, phi, Eigen::VectorXd::Zero(sys.num_dofs()));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::RequiresDuplicatedMesh);
    }
}

TEST(Fem, MaterialDerivativeMatchesTransport) {
    OuterDomain outer = OuterDomain::disk();
    auto poly = build_polygon({{-0.3, -0.25}, {0.35, -0.2}, {0.3, 0.3}, {-0.25, 0.3}}, outer);
    auto buffers = std::make_shared<const ExtensionBuffers>(build_buffers(poly, outer));
    MeshOptions opt;
    opt.hmax = 0.06;
    opt.buffers = buffers;
    auto m = std::make_shared<const Mesh>(generate_mesh(poly, outer, opt));
    ExtensionField H(buffers, presets::vertex_motion(poly, 2));
    FemSystem sys(m, Contrast::finite(4.0));
    auto f = fourier_current(*m, outer, 1, true).normalized();
    auto u = solve_forward(sys, f);
    auto udot = solve_material(sys, u, {&H, true});
    // the discrete state on transported meshes is smooth in t; central difference is O(t^2)
    const double t = 1e-4;
    auto mp = std::make_shared<const Mesh>(transport_mesh(*m, H, t));
    auto mm = std::make_shared<const Mesh>(transport_mesh(*m, H, -t));
    auto up = solve_forward(FemSystem(mp, Contrast::finite(4.0)), f);
    auto um = solve_forward(FemSystem(mm, Contrast::finite(4.0)), f);
    Eigen::VectorXd fd = (up.values - um.values) / (2 * t);
    double scale = udot.values.cwiseAbs().maxCoeff();
    EXPECT_GT(scale, 1e-3);
    EXPECT_LT((fd - udot.values).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, scale));
    // the exact-velocity quadrature agrees to discretization accuracy
    auto uexact = solve_material(sys, u, {&H, false});
    EXPECT_LT((uexact.values - udot.values).cwiseAbs().maxCoeff(), 0.05 * scale);
}
