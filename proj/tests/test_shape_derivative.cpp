#include <gtest/gtest.h>

#include "polyshape/shape_derivative.hpp"

#include <map>
#include <random>

using namespace polyshape;

namespace {

struct Scene {
    OuterDomain outer = OuterDomain::disk();
    Polygon poly;
    std::shared_ptr<const ExtensionBuffers> buffers;
    MeshPtr mesh;

    explicit Scene(double hmax, bool dup = false, std::vector<Vec2> v = {{-0.3, -0.3}, {0.3, -0.3}, {0.3, 0.3}, {-0.3, 0.3}})
        : poly(build_polygon(v, outer)) {
        buffers = std::make_shared<const ExtensionBuffers>(build_buffers(poly, outer));
        MeshOptions opt;
        opt.hmax = hmax;
        opt.grading = 0.5;
        opt.levels = 5;
        opt.buffers = buffers;
        opt.duplicate_interface = dup;
        mesh = std::make_shared<const Mesh>(generate_mesh(poly, outer, opt));
    }
    BoundaryFunction cosine() const { return fourier_current(*mesh, outer, 1, true).normalized(); }
};

FemField forward(const FemSystem& sys, const BoundaryFunction& f) {
    return sys.contrast().is_finite() ? solve_forward(sys, f) : solve_degenerate(sys, f);
}

double rel(const BoundaryFunction& a, const BoundaryFunction& b) { return (a - b).norm() / b.norm(); }

std::vector<Contrast> all_contrasts() {
    return {Contrast::finite(2.0), Contrast::finite(0.5), Contrast::insulating(), Contrast::conducting()};
}

}  // namespace

TEST(InterfaceQuadrature, WeightsSumToEdgeLengths) {
    Scene s(0.1);
    const auto spec = corner_spectrum(s.poly, Contrast::finite(2.0));
    for (const CornerSpectrum* sp : {static_cast<const CornerSpectrum*>(nullptr), &spec}) {
        auto pts = interface_rule(s.poly, {}, sp);
        std::vector<double> sum(s.poly.size(), 0.0);
        for (const auto& p : pts) {
            EXPECT_GT(p.weight, 0.0);
            EXPECT_GT(p.t, 0.0);
            EXPECT_LT(p.t, 1.0);
            EXPECT_GT(p.r, 0.0);
            sum[p.edge] += p.weight;
        }
        for (int e = 0; e < s.poly.size(); ++e) EXPECT_NEAR(sum[e], s.poly.edge_length(e), 1e-12);
    }
}

TEST(InterfaceQuadrature, AnisotropyEigenpairs) {
    Scene s(0.1, false, {{-0.3, -0.2}, {0.35, -0.25}, {0.1, 0.4}});
    for (double k : {0.1, 3.0}) {
        for (int e = 0; e < s.poly.size(); ++e) {
            Mat2 M = anisotropy(s.poly, e, k);
            Vec2 t = s.poly.tangent(e), n = s.poly.normal(e);
            EXPECT_LT((M * t - t).norm(), 1e-12);
            EXPECT_LT((M * n - k * n).norm(), 1e-12);
            Vec2 a(0.3, -1.1), b(2.0, 0.7);
            EXPECT_NEAR(a.dot(M * b), a.dot(t) * b.dot(t) + k * a.dot(n) * b.dot(n), 1e-12);
        }
    }
}

TEST(BoundaryGradients, LinearFieldUnitContrast) {
    Scene s(0.05);
    FemSystem sys(s.mesh, Contrast::finite(1.0, true));
    Vec2 a(0.8, 0.6);
    auto f = boundary_function(*s.mesh, [&](const Vec2& p, double) { return a.dot(p.normalized()); });
    auto u = solve_forward(sys, f.normalized());
    auto Q = boundary_gradients(u, s.poly, sys.contrast(), nullptr, nullptr, {});
    double err = 0.0;
    for (int q = 0; q < Q.size(); ++q) {
        int e = Q.points[q].edge;
        err = std::max({err, std::abs(Q.dtau[q] - a.dot(s.poly.tangent(e))), std::abs(Q.dnu_minus[q] - a.dot(s.poly.normal(e))),
                        std::abs(Q.dnu_plus[q] - a.dot(s.poly.normal(e)))});
    }
    EXPECT_LT(err, 0.05);
}

TEST(BoundaryGradients, FluxTransmission) {
    const double k = 2.0;
    std::vector<double> mid_err;
    for (double hmax : {0.04, 0.02}) {
        Scene s(hmax);
        FemSystem sys(s.mesh, Contrast::finite(k));
        auto u = solve_forward(sys, s.cosine());
        auto spec = corner_spectrum(s.poly, sys.contrast());
        for (auto rec : {GradientOptions::Recovery::Patch, GradientOptions::Recovery::Flux}) {
            GradientOptions opt;
            opt.use_fit = false;
            opt.recovery = rec;
            auto Q = boundary_gradients(u, s.poly, sys.contrast(), &spec, nullptr, opt);
            double e = 0.0, scale = 0.0;
            for (int q = 0; q < Q.size(); ++q) {
                if (std::abs(Q.points[q].t - 0.5) > 0.2) continue;
                e = std::max(e, std::abs(Q.dnu_plus[q] - k * Q.dnu_minus[q]));
                scale = std::max(scale, std::abs(Q.dnu_plus[q]));
            }
            if (rec == GradientOptions::Recovery::Flux)
                EXPECT_LT(e, 1e-9 * scale);  // the residual fluxes balance exactly
            else
                mid_err.push_back(e / scale);
        }
    }
    EXPECT_LT(mid_err[0], 0.1);
    EXPECT_LT(mid_err[1], mid_err[0]);
}

// At a right-angle corner the second exponent is 2 - gamma_1 and its tangential trace changes sign
// between the two edges, so the edge average isolates the leading term.
TEST(BoundaryGradients, CornerExponent) {
    Scene s(0.02);
    for (const auto& c : {Contrast::finite(2.0), Contrast::finite(0.5), Contrast::insulating()}) {
        FemSystem sys(s.mesh, c);
        auto u = forward(sys, s.cosine());
        auto spec = corner_spectrum(s.poly, c);
        GradientOptions opt;
        opt.use_fit = false;
        auto Q = boundary_gradients(u, s.poly, c, &spec, nullptr, opt);
        for (int v = 0; v < s.poly.size(); ++v) {
            double ri = s.poly.cutoff_radius(v);
            std::map<long long, std::vector<double>> by_r;
            for (int q = 0; q < Q.size(); ++q) {
                const auto& p = Q.points[q];
                if (p.vertex == v && p.r >= 0.02 * ri && p.r <= 0.2 * ri) by_r[std::llround(p.r * 1e12)].push_back(std::abs(Q.dtau[q]));
            }
            std::vector<double> rs, ds;
            for (const auto& [r, vals] : by_r) {
                ASSERT_EQ(vals.size(), 2u);
                rs.push_back(r * 1e-12);
                ds.push_back(0.5 * (vals[0] + vals[1]));
            }
            ASSERT_GE(rs.size(), 6u);
            EXPECT_NEAR(loglog_slope(rs, ds), spec.corners[v].gammas[1] - 1.0, 0.05) << "vertex " << v;
        }
    }
}

TEST(ShapeDerivative, UnitContrastVanishes) {
    Scene s(0.05);
    FemSystem sys(s.mesh, Contrast::finite(1.0, true));
    BoundaryDerivative bd(sys, s.poly, s.outer, 4);
    auto u = solve_forward(sys, s.cosine());
    for (auto h : {presets::dilation(s.poly), presets::vertex_motion(s.poly, 0)}) EXPECT_EQ(shape_derivative_boundary(bd, u, h).norm(), 0.0);
}

TEST(ShapeDerivative, TangentialEdgeSlideDoesNotContribute) {
    Scene s(0.05);
    FemSystem sys(s.mesh, Contrast::finite(3.0));
    auto u = solve_forward(sys, s.cosine());
    auto U = boundary_gradients(u, s.poly, sys.contrast(), nullptr, nullptr, {});
    auto V = U;
    // slide edge 2 along itself; restrict both traces to that edge
    const int e = 2;
    auto h = PerturbationField::zero(s.poly.size());
    std::vector<Vec2> vals(s.poly.size(), Vec2::Zero());
    vals[s.poly.wrap(e - 1)] = 0.05 * s.poly.tangent(e);
    vals[e] = 0.05 * s.poly.tangent(e);
    h = PerturbationField(vals);
    InterfaceQuadrature Ue = U, Ve = V;
    Ue.points.clear();
    Ue.dtau.clear();
    Ue.dnu_minus.clear();
    Ue.dnu_plus.clear();
    Ve = Ue;
    for (int q = 0; q < U.size(); ++q) {
        if (U.points[q].edge != e) continue;
        for (auto* Q : {&Ue, &Ve}) Q->points.push_back(U.points[q]);
        Ue.dtau.push_back(U.dtau[q]);
        Ue.dnu_minus.push_back(U.dnu_minus[q]);
        Ue.dnu_plus.push_back(U.dnu_plus[q]);
        Ve.dtau.push_back(V.dtau[q]);
        Ve.dnu_minus.push_back(V.dnu_minus[q]);
        Ve.dnu_plus.push_back(V.dnu_plus[q]);
    }
    EXPECT_NEAR(shape_derivative_pairing(s.poly, sys.contrast(), Ue, h, Ve), 0.0, 1e-15);
    // the same edge under a normal motion does contribute
    auto hn = presets::edge_normal(s.poly, e);
    EXPECT_GT(std::abs(shape_derivative_pairing(s.poly, sys.contrast(), Ue, hn, Ve)), 1e-4);
}

TEST(ShapeDerivative, BilinearInFieldAndTestCurrent) {
    Scene s(0.04);
    for (const auto& c : all_contrasts()) {
        FemSystem sys(s.mesh, c);
        BoundaryDerivative bd(sys, s.poly, s.outer, 4);
        auto u = forward(sys, s.cosine());
        auto g1 = fourier_current(*s.mesh, s.outer, 1, false).normalized();
        auto g2 = fourier_current(*s.mesh, s.outer, 3, true).normalized();
        auto U = bd.traces(u);
        auto V1 = bd.traces(forward(sys, g1)), V2 = bd.traces(forward(sys, g2)), V12 = bd.traces(forward(sys, g1 * 2.0 - g2));
        auto h1 = presets::vertex_motion(s.poly, 1), h2 = presets::edge_normal(s.poly, 3);
        auto P = [&](const PerturbationField& h, const InterfaceQuadrature& V) { return shape_derivative_pairing(s.poly, c, U, h, V); };
        double a = P(h1, V1), b = P(h2, V1);
        EXPECT_NEAR(P(h1 * 0.7 + h2 * -1.3, V1), 0.7 * a - 1.3 * b, 1e-10 * (std::abs(a) + std::abs(b)));
        double p1 = P(h1, V1), p2 = P(h1, V2);
        EXPECT_NEAR(P(h1, V12), 2.0 * p1 - p2, 1e-8 * (std::abs(p1) + std::abs(p2)));
        // reconstructed derivative: linear in h, zero for h = 0
        auto d1 = shape_derivative_boundary(bd, u, h1), d2 = shape_derivative_boundary(bd, u, h2);
        auto d12 = shape_derivative_boundary(bd, u, h1 * 2.0 + h2);
        EXPECT_LT((d12 - (d1 * 2.0 + d2)).norm(), 1e-10 * (d1.norm() + d2.norm()));
        EXPECT_EQ(shape_derivative_boundary(bd, u, PerturbationField::zero(4)).norm(), 0.0);
    }
}

TEST(ShapeDerivative, PairingMatchesFiniteDifference) {
    Scene s(0.01);
    FemSystem sys(s.mesh, Contrast::finite(2.0));
    auto f = s.cosine();
    auto u = solve_forward(sys, f);
    BoundaryDerivative bd(sys, s.poly, s.outer, 1);
    auto p = shape_derivative_pairing(s.poly, sys.contrast(), bd.traces(u), presets::dilation(s.poly), bd.traces(u));
    ExtensionField H(s.buffers, presets::dilation(s.poly));
    const double t = 1e-3;
    auto value = [&](double tt) {
        auto m = std::make_shared<const Mesh>(transport_mesh(*s.mesh, H, tt));
        return boundary_trace(solve_forward(FemSystem(m, sys.contrast()), f)).inner(f);
    };
    double fd = (value(t) - value(-t)) / (2 * t);
    EXPECT_LT(fd, 0.0);
    EXPECT_LT(p, 0.0);
    EXPECT_NEAR(p, fd, 0.02 * std::abs(fd));
}

TEST(ShapeDerivative, RoutesAgreeForAllContrasts) {
    Scene s(0.02);
    for (const auto& c : all_contrasts()) {
        FemSystem sys(s.mesh, c);
        BoundaryDerivative bd(sys, s.poly, s.outer, 8);
        auto u = forward(sys, s.cosine());
        for (auto h : {presets::vertex_motion(s.poly, 2), presets::dilation(s.poly)}) {
            ExtensionField H(s.buffers, h);
            auto mat = shape_derivative_material(sys, u, H);
            EXPECT_LT(rel(shape_derivative_boundary(bd, u, h), mat), 0.03);
        }
    }
}

TEST(ShapeDerivative, ExtensionIndependence) {
    Scene s(0.02);
    auto h = presets::vertex_motion(s.poly, 0);
    ExtensionField H1(s.buffers, h);
    ExtensionField H2(std::make_shared<const ExtensionBuffers>(build_buffers(s.poly, s.outer, 0.2)), h);
    for (const auto& c : all_contrasts()) {
        FemSystem sys(s.mesh, c);
        auto u = forward(sys, s.cosine());
        auto d1 = shape_derivative_material(sys, u, H1, true), d2 = shape_derivative_material(sys, u, H2, true);
        EXPECT_LT(rel(d2, d1), 0.02);
    }
}

TEST(ShapeDerivative, InsulatingIsTheSmallContrastLimit) {
    Scene s(0.02);
    auto h = presets::vertex_motion(s.poly, 3);
    auto run = [&](const Contrast& c) {
        FemSystem sys(s.mesh, c);
        BoundaryDerivative bd(sys, s.poly, s.outer, 8);
        return shape_derivative_boundary(bd, forward(sys, s.cosine()), h);
    };
    EXPECT_LT(rel(run(Contrast::finite(1e-4)), run(Contrast::insulating())), 0.02);
    EXPECT_LT(rel(run(Contrast::finite(1e4)), run(Contrast::conducting())), 0.02);
}

TEST(ShapeDerivative, PairingRejectsForeignTraces) {
    Scene a(0.1), b(0.08);
    FemSystem sa(a.mesh, Contrast::finite(2.0)), sb(b.mesh, Contrast::finite(2.0));
    auto U = boundary_gradients(solve_forward(sa, a.cosine()), a.poly, sa.contrast(), nullptr, nullptr, {});
    auto V = boundary_gradients(solve_forward(sb, b.cosine()), b.poly, sb.contrast(), nullptr, nullptr, {});
    try {
        shape_derivative_pairing(a.poly, sa.contrast(), U, presets::dilation(a.poly), V);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MeshMismatch);
    }
}

TEST(DomainDerivative, JumpAndNeumannData) {
    Scene s(0.01, true);
    const double k = 2.0;
    FemSystem sys(s.mesh, Contrast::finite(k));
    auto u = solve_forward(sys, s.cosine());
    auto h = presets::vertex_motion(s.poly, 1);
    ExtensionField H(s.buffers, h);
    auto udot = solve_material(sys, u, {&H, false});
    auto up = domain_derivative(udot, u, H);
    const Mesh& m = *s.mesh;

    // outside the support of H the two derivatives coincide
    int outside = 0;
    for (int i = 0; i < m.num_nodes(); ++i)
        if (H.buffers().locate(m.nodes[i]) < 0) {
            ++outside;
            ASSERT_EQ(up.values[i], udot.values[i]);
        }
    EXPECT_GT(outside, 0);

    // [u'] = (1 - k)(h . nu) d_nu u- away from the vertices
    auto dn = interface_normal_flux(u, s.poly);
    double num = 0.0, den = 0.0;
    for (auto [a, b] : m.twins) {
        const Vec2& x = m.nodes[a];
        int e = -1;
        double t = 0.0;
        for (int ee = 0; ee < s.poly.size(); ++ee) {
            Vec2 d = s.poly.edge_end(ee) - s.poly.edge_start(ee);
            double tt = (x - s.poly.edge_start(ee)).dot(d) / d.squaredNorm();
            if (tt > 0.2 && tt < 0.8 && std::abs(cross(d.normalized(), x - s.poly.edge_start(ee))) < 1e-12) {
                e = ee;
                t = tt;
            }
        }
        if (e < 0) continue;
        double want = (1 - k) * h.normal_component(s.poly, e, t) * dn[a];
        num += std::pow(up.values[b] - up.values[a] - want, 2);
        den += want * want;
    }
    ASSERT_GT(den, 0.0);
    EXPECT_LT(std::sqrt(num / den), 0.05);

    // homogeneous Neumann data: a(u', w) = 0 for test functions living on the outer boundary
    Eigen::VectorXd Ku = sys.residual(up, Eigen::VectorXd::Zero(sys.num_dofs()));
    std::mt19937 rng(11);
    std::normal_distribution<double> nd;
    double scale = up.values.cwiseAbs().maxCoeff();
    for (int trial = 0; trial < 5; ++trial) {
        double r = 0.0;
        for (int n : m.boundary_nodes) r += nd(rng) * Ku[sys.dof_of(n)];
        EXPECT_LT(std::abs(r), 1e-8 * scale);
    }

    FemSystem plain(Scene(0.05).mesh, Contrast::finite(k));
    auto u0 = solve_forward(plain, fourier_current(plain.mesh(), OuterDomain::disk(), 1, true).normalized());
    EXPECT_THROW(domain_derivative(u0, u0, H), Error);
}

TEST(Taylor, RemainderIsQuadratic) {
    Scene s(0.02);
    FemSystem sys(s.mesh, Contrast::finite(2.0));
    auto f = s.cosine();
    auto u = solve_forward(sys, f);
    auto h = presets::vertex_motion(s.poly, 2);
    ExtensionField H(s.buffers, h), H2(s.buffers, h * 2.0);
    auto d = shape_derivative_material(sys, u, H, true);
    auto tab = taylor_remainder(sys, f, H, d, {0.0, 0.08, 0.04, 0.02, 0.01});
    EXPECT_EQ(tab.rows[0].remainder, 0.0);
    EXPECT_GE(tab.slope, 1.8);
    EXPECT_LE(tab.slope, 2.2);
    // the same perturbed domain reached with a doubled field
    auto tab2 = taylor_remainder(sys, f, H2, d * 2.0, {0.02});
    EXPECT_NEAR(tab2.rows[0].remainder / tab.rows[2].remainder, 1.0, 0.2);
    std::ostringstream os;
    tab.write_csv(os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,remainder,slope_running");
}

TEST(NormScan, UniformOverJitteredSquares) {
    OuterDomain outer = OuterDomain::disk();
    std::vector<Vec2> base{{-0.3, -0.3}, {0.3, -0.3}, {0.3, 0.3}, {-0.3, 0.3}};
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    std::vector<Polygon> polys{build_polygon(base, outer)};
    for (int p = 0; p < 5; ++p) {
        auto v = base;
        for (auto& x : v) x += 0.02 * Vec2(ud(rng), ud(rng));
        polys.push_back(build_polygon(v, outer));
    }
    MeshOptions opt;
    opt.hmax = 0.04;
    opt.grading = 0.5;
    opt.levels = 3;
    auto basis = [](const Polygon& poly) {
        std::vector<PerturbationField> b;
        for (int i = 0; i < poly.size(); ++i) b.push_back(presets::vertex_motion(poly, i));
        b.push_back(presets::dilation(poly));
        return b;
    };
    auto rows = derivative_norm_scan(polys, outer, Contrast::finite(2.0), opt, basis);
    ASSERT_EQ(rows.size(), polys.size());
    double lo = 1e300, hi = 0.0;
    for (const auto& r : rows) {
        lo = std::min(lo, r.operator_norm);
        hi = std::max(hi, r.operator_norm);
    }
    EXPECT_GT(lo, 0.0);
    EXPECT_LT(hi / lo, 1.5);

    // a single polygon agrees with the direct norm of its maximizing field
    auto buffers = std::make_shared<const ExtensionBuffers>(build_buffers(polys[0], outer));
    opt.buffers = buffers;
    auto m = std::make_shared<const Mesh>(generate_mesh(polys[0], outer, opt));
    FemSystem sys(m, Contrast::finite(2.0));
    auto u = solve_forward(sys, fourier_current(*m, outer, 1, true).normalized());
    auto hb = basis(polys[0])[rows[0].argmax];
    ExtensionField H(buffers, hb * (1.0 / hb.w1inf_norm(polys[0])));
    EXPECT_NEAR(shape_derivative_material(sys, u, H).norm(), rows[0].operator_norm, 1e-12 * rows[0].operator_norm);
}
