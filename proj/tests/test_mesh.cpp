#include <gtest/gtest.h>

#include "polyshape/mesh.hpp"

#include <random>
#include <sstream>
#include <unordered_set>

using namespace polyshape;

namespace {

Polygon square() {
    Vec2 c(0.03, -0.02);
    return build_polygon({c + Vec2(-0.3, -0.3), c + Vec2(0.3, -0.3), c + Vec2(0.3, 0.3), c + Vec2(-0.3, 0.3)},
                         OuterDomain::disk());
}

std::unordered_set<std::uint64_t> edge_set(const Mesh& m) {
    std::unordered_set<std::uint64_t> s;
    for (const auto& t : m.triangles)
        for (int k = 0; k < 3; ++k) s.insert(detail::edge_key(m.dof[t[k]], m.dof[t[(k + 1) % 3]]));
    return s;
}

}  // namespace

TEST(Delaunay, EmptyCircumcircles) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Vec2> pts;
    for (int i = 0; i < 2000; ++i) pts.push_back({u(rng), u(rng)});
    // a lattice block exercises cocircular configurations
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) pts.push_back({1.5 + 0.05 * i, 0.05 * j});
    DelaunayTriangulator dt;
    auto tris = dt.triangulate(pts);
    double area = 0.0;
    for (const auto& t : tris) {
        double a = cross(pts[t[1]] - pts[t[0]], pts[t[2]] - pts[t[0]]);
        ASSERT_GT(a, 0.0);
        area += 0.5 * a;
    }
    std::mt19937_64 pick(9);
    for (int k = 0; k < 300; ++k) {
        const auto& t = tris[pick() % tris.size()];
        for (size_t q = 0; q < pts.size(); ++q)
            EXPECT_LE(predicates::incircle(pts[t[0]], pts[t[1]], pts[t[2]], pts[q]), 1e-12);
    }
    // Euler: a triangulation of N points with hull size H has 2N - 2 - H triangles
    EXPECT_GT(tris.size(), 2 * pts.size() - 2 - 200);
}

TEST(Mesh, UniformConformingSquare) {
    auto poly = square();
    MeshOptions opt;
    opt.hmax = 0.1;
    auto m = generate_mesh(poly, OuterDomain::disk(), opt);
    auto edges = edge_set(m);
    // every interface segment is a mesh edge, and the segments tile each polygon edge
    std::vector<double> covered(4, 0.0);
    for (const auto& e : m.interface) {
        EXPECT_TRUE(edges.count(detail::edge_key(e.a, e.b)));
        covered[e.edge] += std::abs(e.tb - e.ta);
        EXPECT_LT(point_segment_distance(m.nodes[e.a], poly.edge_start(e.edge), poly.edge_end(e.edge)), 1e-14);
    }
    for (double c : covered) EXPECT_NEAR(c, 1.0, 1e-12);
    for (int t = 0; t < m.num_triangles(); ++t) {
        EXPECT_GT(m.area(t), 0.0);
        EXPECT_EQ(m.region[t], poly.contains(m.centroid(t)) ? 1 : 0);
    }
    for (int id : m.boundary_nodes) EXPECT_NEAR(m.nodes[id].norm(), 1.0, 1e-14);
    EXPECT_NEAR(m.boundary_length(), two_pi, 0.01);
}

TEST(Mesh, QualityAwayFromFans) {
    auto poly = square();
    MeshOptions opt;
    opt.hmax = 0.03;
    opt.grading = 0.5;
    opt.levels = 4;
    auto m = generate_mesh(poly, OuterDomain::disk(), opt);
    double worst = pi;
    for (int t = 0; t < m.num_triangles(); ++t) {
        Vec2 c = m.centroid(t);
        bool in_fan = false;
        for (int i = 0; i < 4; ++i)
            if ((c - poly.vertex(i)).norm() < m.grading[i].fan_radius) in_fan = true;
        if (!in_fan) worst = std::min(worst, m.min_angle(t));
    }
    EXPECT_GE(worst * 180.0 / pi, 20.0);
}

TEST(Mesh, GradedCornerSize) {
    auto poly = square();
    MeshOptions opt;
    opt.hmax = 0.05;
    opt.grading = 0.5;
    opt.levels = 5;
    auto m = generate_mesh(poly, OuterDomain::disk(), opt);
    double shortest = 1e9;
    for (const auto& e : m.interface) shortest = std::min(shortest, (m.nodes[e.a] - m.nodes[e.b]).norm());
    double target = opt.hmax / 32.0;
    EXPECT_GT(shortest, target / 2.0);
    EXPECT_LT(shortest, target * 2.0);
}

TEST(Mesh, DuplicatedInterface) {
    auto poly = square();
    MeshOptions opt;
    opt.hmax = 0.08;
    opt.duplicate_interface = true;
    auto m = generate_mesh(poly, OuterDomain::disk(), opt);
    auto inodes = m.interface_nodes();
    EXPECT_EQ(m.twins.size(), inodes.size());
    std::vector<int> side(m.nodes.size(), 0);
    for (int t = 0; t < m.num_triangles(); ++t)
        for (int v : m.triangles[t]) side[v] |= (m.region[t] == 1 ? 1 : 2);
    for (auto [a, b] : m.twins) {
        EXPECT_EQ((m.nodes[a] - m.nodes[b]).norm(), 0.0);
        EXPECT_EQ(side[a], 1);
        EXPECT_EQ(side[b], 2);
        EXPECT_EQ(m.dof[b], a);
    }
}

TEST(Mesh, BufferConformityAndTransport) {
    auto poly = square();
    auto disk = OuterDomain::disk();
    auto buffers = std::make_shared<const ExtensionBuffers>(build_buffers(poly, disk));
    MeshOptions opt;
    opt.hmax = 0.05;
    opt.buffers = buffers;
    auto m = generate_mesh(poly, disk, opt);
    for (int t = 0; t < m.num_triangles(); ++t) {
        if (m.quad[t] < 0) continue;
        for (int v : m.triangles[t]) EXPECT_TRUE(buffers->quadrangles()[m.quad[t]].contains(m.nodes[v], 1e-9));
    }
    auto h = presets::vertex_motion(poly, 1);
    ExtensionField H(buffers, h);
    auto moved = transport_mesh(m, H, 0.05);
    auto target = deform(poly, h, 0.05, disk);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR((moved.nodes[m.vertex_node[i]] - target.vertex(i)).norm(), 0.0, 1e-14);
}

TEST(Mesh, TextRoundTripAndDeterminism) {
    auto poly = square();
    MeshOptions opt;
    opt.hmax = 0.1;
    opt.duplicate_interface = true;
    auto a = generate_mesh(poly, OuterDomain::disk(), opt);
    auto b = generate_mesh(poly, OuterDomain::disk(), opt);
    std::ostringstream sa, sb;
    write_mesh(sa, a);
    write_mesh(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    std::istringstream in(sa.str());
    auto c = read_mesh(in);
    EXPECT_EQ(c.num_nodes(), a.num_nodes());
    EXPECT_EQ(c.triangles, a.triangles);
    EXPECT_EQ(c.twins.size(), a.twins.size());
    EXPECT_EQ(c.dof, a.dof);
}

TEST(Mesh, RectangleOuterDomain) {
    auto rect = OuterDomain::rectangle({-1, -0.8}, {1.2, 0.9});
    auto poly = build_polygon({{-0.3, -0.2}, {0.4, -0.3}, {0.1, 0.2}, {0.25, 0.5}, {-0.35, 0.3}}, rect);
    MeshOptions opt;
    opt.hmax = 0.08;
    opt.grading = 0.5;
    opt.levels = 3;
    auto m = generate_mesh(poly, rect, opt);
    double area = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) area += m.area(t);
    EXPECT_NEAR(area, 2.2 * 1.7, 1e-12);
    EXPECT_EQ(static_cast<int>(m.vertex_node.size()), 5);
}
