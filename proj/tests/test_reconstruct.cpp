#include <gtest/gtest.h>

#include "polyshape/reconstruct.hpp"

using namespace polyshape;

namespace {

const OuterDomain kDisk = OuterDomain::disk();
const std::vector<Vec2> kSquare{{-0.3, -0.3}, {0.3, -0.3}, {0.3, 0.3}, {-0.3, 0.3}};

MeshOptions coarse(double hmax = 0.04) {
    MeshOptions m;
    m.hmax = hmax;
    m.grading = 0.5;
    m.levels = 4;
    return m;
}

}  // namespace

TEST(Reconstruct, OwnDataGivesZeroSteps) {
    auto poly = build_polygon(kSquare, kDisk);
    const Contrast c = Contrast::finite(2.0);
    auto data = synthesize_data(poly, kDisk, c, {{1, true}, {1, false}}, coarse());
    ReconOptions opt;
    opt.mesh = coarse();
    auto st = reconstruct(data, poly, kDisk, c, opt);
    EXPECT_EQ(st.stop_reason, "residual");
    ASSERT_EQ(st.log.size(), 1u);
    EXPECT_LT(st.log.front().residual, 1e-12);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(st.vertices[i], kSquare[i]);
}

// Each Jacobian column against central differences of the forward map on transported meshes.
TEST(Reconstruct, JacobianMatchesCentralDifferences) {
    auto poly = build_polygon(kSquare, kDisk);
    const Contrast c = Contrast::finite(2.0);
    auto buffers = std::make_shared<const ExtensionBuffers>(build_buffers(poly, kDisk));
    MeshOptions opt = coarse(0.02);
    opt.buffers = buffers;
    auto mesh = std::make_shared<const Mesh>(generate_mesh(poly, kDisk, opt));
    FemSystem sys(mesh, c);
    auto f = fourier_current(*mesh, kDisk, 1, true).normalized();
    auto u = solve_forward(sys, f);
    BoundaryDerivative bd(sys, poly, kDisk, 8);
    auto U = bd.traces(u);
    const double t = 1e-3;
    for (int j = 0; j < 8; ++j) {
        auto h = presets::coordinate(poly, j / 2, j % 2);
        ExtensionField H(buffers, h);
        auto trace_at = [&](double s) {
            auto m = std::make_shared<const Mesh>(transport_mesh(*mesh, H, s));
            return boundary_trace(solve_forward(FemSystem(m, c), f));
        };
        auto fd = (trace_at(t) - trace_at(-t)) * (0.5 / t);
        auto col = bd.derivative(U, h);
        EXPECT_LT((col - fd).norm() / fd.norm(), 0.03) << "column " << j;
    }
}

TEST(Reconstruct, ResidualIsNonIncreasing) {
    const Contrast c = Contrast::finite(2.0);
    auto initial = build_polygon(kSquare, kDisk);
    auto tv = kSquare;
    tv[1] += Vec2(0.02, -0.01);
    MeshOptions dm = coarse(0.02);
    dm.seed = 5;
    auto data = synthesize_data(build_polygon(tv, kDisk), kDisk, c, {{1, true}, {1, false}}, dm, 0.01, 3);
    ReconOptions opt;
    opt.mesh = coarse();
    opt.max_iter = 6;
    auto st = reconstruct(data, initial, kDisk, c, opt);
    ASSERT_GE(st.log.size(), 2u);
    for (size_t j = 1; j < st.log.size(); ++j) EXPECT_LE(st.log[j].residual, st.log[j - 1].residual);
    std::ostringstream os;
    st.write_log_csv(os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "iter,residual,damping,max_vertex_update");
}

TEST(Reconstruct, NoiseIsSeeded) {
    auto poly = build_polygon(kSquare, kDisk);
    const Contrast c = Contrast::finite(2.0);
    auto a = synthesize_data(poly, kDisk, c, {{1, true}}, coarse(), 0.01, 11);
    auto b = synthesize_data(poly, kDisk, c, {{1, true}}, coarse(), 0.01, 11);
    auto d = synthesize_data(poly, kDisk, c, {{1, true}}, coarse(), 0.01, 12);
    auto clean = synthesize_data(poly, kDisk, c, {{1, true}}, coarse());
    EXPECT_EQ(a.voltages[0].values, b.voltages[0].values);
    EXPECT_NE(a.voltages[0].values, d.voltages[0].values);
    // sample standard deviation of the added noise near 1% of the peak voltage
    double peak = 0, ss = 0;
    int n = clean.voltages[0].size();
    for (int k = 0; k < n; ++k) {
        peak = std::max(peak, std::abs(clean.voltages[0].values[k]));
        double e = a.voltages[0].values[k] - clean.voltages[0].values[k];
        ss += e * e;
    }
    EXPECT_NEAR(std::sqrt(ss / n) / peak, 0.01, 0.002);
}

TEST(Reconstruct, DegenerateStartIsRejected) {
    std::vector<Vec2> bad{{-0.3, -0.3}, {0.3, 0.3}, {0.3, -0.3}, {-0.3, 0.3}};
    EXPECT_THROW(build_polygon(bad, kDisk), Error);
}
