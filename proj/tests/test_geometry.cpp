#include <gtest/gtest.h>

#include "polyshape/extension.hpp"
#include "polyshape/geometry.hpp"

#include <random>

using namespace polyshape;

namespace {

Polygon square(double side = 0.6, Vec2 c = Vec2(0.03, -0.02)) {
    double s = 0.5 * side;
    return build_polygon({c + Vec2(-s, -s), c + Vec2(s, -s), c + Vec2(s, s), c + Vec2(-s, s)}, OuterDomain::disk());
}

}  // namespace

TEST(Polygon, RightTriangleAngles) {
    auto p = build_polygon({{0, 0}, {1, 0}, {0, 1}}, OuterDomain::rectangle({-1, -1}, {2, 2}));
    EXPECT_NEAR(p.angle(0), pi / 2, 1e-14);
    EXPECT_NEAR(p.angle(1), pi / 4, 1e-14);
    EXPECT_NEAR(p.angle(2), pi / 4, 1e-14);
}

TEST(Polygon, SquareAnglesAndRadii) {
    auto p = square();
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(p.angle(i), pi / 2, 1e-14);
        EXPECT_GT(p.cutoff_radius(i), 0.0);
    }
    // cut-off disks stay inside the body and pairwise disjoint
    for (int i = 0; i < 4; ++i) {
        EXPECT_GT(OuterDomain::disk().clearance(p.vertex(i)), p.cutoff_radius(i));
        for (int j = i + 1; j < 4; ++j)
            EXPECT_GT((p.vertex(i) - p.vertex(j)).norm(), p.cutoff_radius(i) + p.cutoff_radius(j));
    }
}

TEST(Polygon, ClockwiseInputIsReversed) {
    auto ccw = build_polygon({{0, 0}, {0.5, 0}, {0.4, 0.3}, {0.1, 0.4}}, OuterDomain::disk());
    auto cw = build_polygon({{0.1, 0.4}, {0.4, 0.3}, {0.5, 0}, {0, 0}}, OuterDomain::disk());
    EXPECT_GT(cw.signed_area(), 0.0);
    std::vector<double> a = ccw.angles(), b = cw.angles();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Polygon, Rejections) {
    auto disk = OuterDomain::disk();
    try {
        build_polygon({{0, 0}, {0.5, 0.5}, {0.5, 0}, {0, 0.5}}, disk);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SelfIntersection);
    }
    try {
        build_polygon({{0, 0}, {0.2, 0}, {0.4, 0}, {0.2, 0.3}}, disk);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::CollinearVertex);
    }
    try {
        build_polygon({{0, 0}, {1.5, 0}, {0, 0.5}}, disk);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotInsideOuterDomain);
    }
}

TEST(Polygon, AngleSumProperty) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.08, 0.08);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 3 + trial % 6;
        std::vector<Vec2> v;
        for (int i = 0; i < n; ++i) {
            double th = two_pi * i / n;
            v.push_back(0.5 * Vec2(std::cos(th), std::sin(th)) + Vec2(u(rng), u(rng)));
        }
        auto p = build_polygon(v, OuterDomain::disk());
        double s = 0.0;
        for (double a : p.angles()) s += a;
        EXPECT_NEAR(s, (n - 2) * pi, 1e-10);
    }
}

TEST(Deform, IdentityDilationAndVertexMotion) {
    auto disk = OuterDomain::disk();
    auto p = square();
    auto h = presets::dilation(p);
    auto same = deform(p, h, 0.0, disk);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(same.vertex(i), p.vertex(i));
    auto big = deform(p, h, 0.1, disk);
    for (int i = 0; i < 4; ++i)
        EXPECT_NEAR((big.vertex(i) - p.barycenter() - 1.1 * (p.vertex(i) - p.barycenter())).norm(), 0.0, 1e-14);

    auto m = presets::vertex_motion(p, 2);
    auto q = deform(p, m, 0.05, disk);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(q.vertex(i), p.vertex(i) + 0.05 * m.at_vertex(i));
    // direct recomputation of the angles from the deformed vertex list
    for (int i = 0; i < 4; ++i) {
        Vec2 a = q.vertex(i + 1) - q.vertex(i), b = q.vertex(i - 1) - q.vertex(i);
        EXPECT_NEAR(q.angle(i), ccw_angle(a, b), 1e-14);
    }
    EXPECT_NEAR(q.angle(0), pi / 2, 1e-14);
    EXPECT_GT(std::abs(q.angle(1) - pi / 2), 1e-3);
    EXPECT_LT(q.angle(2), pi / 2);
}

TEST(Extension, TraceIdentityAndSupport) {
    auto disk = OuterDomain::disk();
    auto p = square();
    auto h = presets::edge_normal(p, 1);
    auto H = extend_field(h, p, disk);
    for (int e = 0; e < 4; ++e)
        for (int k = 0; k <= 50; ++k) {
            double t = k / 50.0;
            Vec2 x = (1 - t) * p.edge_start(e) + t * p.edge_end(e);
            EXPECT_NEAR((H.evaluate(x).value - h.on_edge(e, t)).norm(), 0.0, 1e-12);
        }
    EXPECT_EQ(H.evaluate(p.barycenter()).value.norm(), 0.0);
    EXPECT_EQ(H.evaluate(Vec2(0.95, 0.0)).value.norm(), 0.0);
    for (const auto& q : H.buffers().quadrangles()) EXPECT_TRUE(q.convex());
}

TEST(Extension, ZeroFieldAndConstantBound) {
    auto disk = OuterDomain::disk();
    auto p = square();
    auto H0 = extend_field(PerturbationField::zero(4), p, disk);
    auto r0 = H0.sampled_norm(p);
    EXPECT_EQ(r0.norm, 0.0);

    Vec2 c(0.3, -0.4);
    auto H = extend_field(PerturbationField(std::vector<Vec2>(4, c)), p, disk);
    auto r = H.sampled_norm(p);
    EXPECT_GE(r.constant, 1.0);
    // explicit formula: H = c * (convex coordinate c), so |DH| = |c| |grad c|; the
    // effective buffer width 1/sup|grad c| comes from finite differences of the inverse map
    double sup_grad = 0.0;
    const double eps = 1e-6;
    for (const auto& q : H.buffers().quadrangles())
        for (int a = 1; a < 64; ++a)
            for (int b = 1; b < 64; ++b) {
                Vec2 x = q.map(a / 64.0, b / 64.0);
                double gx = (q.local(x + Vec2(eps, 0)).first - q.local(x - Vec2(eps, 0)).first) / (2 * eps);
                double gy = (q.local(x + Vec2(0, eps)).first - q.local(x - Vec2(0, eps)).first) / (2 * eps);
                sup_grad = std::max(sup_grad, std::hypot(gx, gy));
            }
    double width = 1.0 / sup_grad;
    EXPECT_LE(r.norm, c.norm() * (1.0 + 1.0 / width) * 1.01);
    EXPECT_GE(r.norm, c.norm() * (1.0 + 1.0 / width) * 0.95);
    EXPECT_NEAR(r.sup_value, c.norm(), 1e-12);
}

TEST(Extension, LinearInH) {
    auto disk = OuterDomain::disk();
    auto p = square();
    auto buffers = std::make_shared<const ExtensionBuffers>(build_buffers(p, disk));
    auto h1 = presets::vertex_motion(p, 0), h2 = presets::edge_normal(p, 2);
    ExtensionField A(buffers, h1), B(buffers, h2), C(buffers, 2.0 * h1 + (-3.0) * h2);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    for (int k = 0; k < 400; ++k) {
        Vec2 x(u(rng), u(rng));
        auto a = A.evaluate(x), b = B.evaluate(x), c = C.evaluate(x);
        EXPECT_NEAR((c.value - 2.0 * a.value + 3.0 * b.value).norm(), 0.0, 1e-12);
        EXPECT_NEAR((c.jacobian - 2.0 * a.jacobian + 3.0 * b.jacobian).norm(), 0.0, 1e-10);
    }
}

TEST(Extension, MaterialMatrixBound) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (int k = 0; k < 200; ++k) {
        Mat2 D;
        D << g(rng), g(rng), g(rng), g(rng);
        Eigen::JacobiSVD<Mat2> s(D), t(material_matrix(D));
        EXPECT_LE(t.singularValues()(0), 4.0 * s.singularValues()(0) + 1e-12);
    }
}
