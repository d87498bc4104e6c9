#pragma once

#include "polyshape/fem.hpp"

#include <set>

namespace polyshape {

struct CornerFit {
    int vertex = 0;
    double gamma = 0.0;       // analytic exponent used for the coefficient
    double gamma_hat = 0.0;   // log-log slope of the projections
    double beta_hat = 0.0;    // median of projection / r^gamma
    double u_vertex = 0.0;
    std::vector<double> radii;
    std::vector<double> projections;
    double spread = 0.0;      // max / min of projection / r^gamma over the radii
    double slope_residual = 0.0;
    int layers = 0;
};

/// Field sampler: value at x on the given side (1 inclusion, 0 exterior).
using FieldSampler = std::function<double(const Vec2&, int)>;

inline FieldSampler sampler(const FemField& u, std::shared_ptr<const MeshLocator> loc) {
    return [u, loc](const Vec2& x, int region) {
        auto hit = loc->locate(x, region, 1e-9);
        if (hit.triangle < 0) hit = loc->locate(x, region, 1e-3);
        if (hit.triangle < 0) throw Error(ErrorKind::InsufficientResolution, "probe point outside the mesh");
        return u.at(hit.triangle, hit.bary);
    };
}

/// Weighted angular projection of (u - u(x_i)) on the first eigenfunction at radius r.
inline double corner_projection(const FieldSampler& u, double u0, const Polygon& poly, const CornerData& cd,
                                const Contrast& contrast, double r, int panels = 8, int order = 16) {
    const auto& gl = gauss_legendre(order);
    double w_in = interior_weight(contrast);
    double alpha = cd.alpha;
    double total = 0.0;
    auto sector = [&](double a, double b, bool minus, double weight) {
        double h = (b - a) / panels;
        for (int p = 0; p < panels; ++p)
            for (size_t q = 0; q < gl.nodes.size(); ++q) {
                double th = a + h * (p + gl.nodes[q]);
                double val = u(poly.from_local(cd.vertex, r, th), minus ? 1 : 0) - u0;
                total += weight * h * gl.weights[q] * val * cd.y1.value(th, minus);
            }
    };
    if (w_in > 0.0) sector(0.0, alpha, true, w_in);
    sector(alpha, two_pi, false, 1.0);
    return total;
}

inline std::vector<double> default_probe_radii(double r_i, int count = 8) {
    std::vector<double> r;
    double lo = 0.02 * r_i, hi = 0.2 * r_i;
    for (int k = 0; k < count; ++k) r.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1)));
    return r;
}

inline CornerFit fit_projections(CornerFit fit) {
    const int n = static_cast<int>(fit.radii.size());
    std::vector<double> ratio;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int k = 0; k < n; ++k) {
        ratio.push_back(fit.projections[k] / std::pow(fit.radii[k], fit.gamma));
        double x = std::log(fit.radii[k]), y = std::log(std::max(std::abs(fit.projections[k]), 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    fit.gamma_hat = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double b = (sy - fit.gamma_hat * sx) / n;
    double res = 0.0;
    for (int k = 0; k < n; ++k) {
        double d = std::log(std::max(std::abs(fit.projections[k]), 1e-300)) - (b + fit.gamma_hat * std::log(fit.radii[k]));
        res += d * d;
    }
    fit.slope_residual = std::sqrt(res / n);
    std::vector<double> sorted = ratio;
    std::sort(sorted.begin(), sorted.end());
    fit.beta_hat = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    double mn = std::numeric_limits<double>::infinity(), mx = 0.0;
    for (double q : ratio) {
        mn = std::min(mn, std::abs(q));
        mx = std::max(mx, std::abs(q));
    }
    fit.spread = mn > 0 ? mx / mn : std::numeric_limits<double>::infinity();
    return fit;
}

/// Coefficient fit from an arbitrary field sampler.
inline CornerFit estimate_beta(const FieldSampler& u, double u_vertex, const Polygon& poly, const CornerSpectrum& spec, int i,
                               std::vector<double> radii = {}) {
    const CornerData& cd = spec.corners.at(poly.wrap(i));
    if (radii.empty()) radii = default_probe_radii(poly.cutoff_radius(i));
    CornerFit fit;
    fit.vertex = poly.wrap(i);
    fit.gamma = cd.gammas[1];
    fit.u_vertex = u_vertex;
    fit.radii = radii;
    for (double r : radii) fit.projections.push_back(corner_projection(u, u_vertex, poly, cd, spec.contrast, r));
    return fit_projections(fit);
}

/// Number of distinct triangles met along the bisector out to radius r.
inline int mesh_layers(const Mesh& mesh, const MeshLocator& loc, const Polygon& poly, int i, double r) {
    std::set<int> seen;
    double th = 0.5 * (poly.angle(i) + two_pi);  // exterior bisector
    const int samples = 4000;
    for (int k = 1; k <= samples; ++k) {
        double s = r * std::pow(1e-4, 1.0 - static_cast<double>(k) / samples);
        auto hit = loc.locate(poly.from_local(i, s, th), 0, 1e-9);
        if (hit.triangle >= 0) seen.insert(hit.triangle);
    }
    (void)mesh;
    return static_cast<int>(seen.size());
}

/// Coefficient fit from a finite element solution.
inline CornerFit estimate_beta(const FemField& u, const Polygon& poly, const CornerSpectrum& spec, int i,
                               std::vector<double> radii = {}) {
    i = poly.wrap(i);
    if (radii.empty()) radii = default_probe_radii(poly.cutoff_radius(i));
    auto loc = std::make_shared<const MeshLocator>(*u.mesh);
    int layers = mesh_layers(*u.mesh, *loc, poly, i, *std::max_element(radii.begin(), radii.end()));
    if (layers < 8) throw Error(ErrorKind::InsufficientResolution, "fewer than 8 mesh layers inside the probe radius");
    double u0 = u.values[u.mesh->vertex_node.at(i)];
    auto fit = estimate_beta(sampler(u, loc), u0, poly, spec, i, radii);
    fit.layers = layers;
    return fit;
}

inline std::vector<CornerFit> estimate_all_betas(const FemField& u, const Polygon& poly, const CornerSpectrum& spec) {
    std::vector<CornerFit> fits;
    for (int i = 0; i < poly.size(); ++i) fits.push_back(estimate_beta(u, poly, spec, i));
    return fits;
}

}  // namespace polyshape
