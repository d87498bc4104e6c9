#pragma once

#include "polyshape/reconstruct.hpp"
#include "polyshape/transmission.hpp"

#include <cstdio>
#include <map>
#include <sstream>

namespace polyshape {

/// Boundary amplitude of u = A cos(theta) on the unit circle for a concentric disk of radius rho and
/// unit current amplitude.
inline double disk_series_amplitude(const Contrast& c, double rho) {
    const double r2 = rho * rho;
    switch (c.kind()) {
        case Contrast::Kind::Insulating: return (1 + r2) / (1 - r2);
        case Contrast::Kind::Conducting: return (1 - r2) / (1 + r2);
        default: break;
    }
    // inside A r, outside B r + C / r: continuity and flux at rho, unit flux at 1
    const double k = c.k();
    Eigen::Matrix3d M;
    M << rho, -rho, -1 / rho, k, -1, 1 / r2, 0, 1, -1;
    Eigen::Vector3d abc = M.colPivHouseholderQr().solve(Eigen::Vector3d(0, 0, 1));
    return abc[1] + abc[2];
}

/// Mean radius of a regular n-gon with circumradius rho; to first order the n-gon acts as this disk.
inline double ngon_mean_radius(int n, double rho) {
    double a = pi / n;
    return rho * std::cos(a) * std::log(1 / std::cos(a) + std::tan(a)) / a;
}

/// Log-log slope of the singular trace near vertex v over [0.02, 0.2] r_v. The two edges are averaged
/// at equal distance, which removes the component that changes sign across a symmetric corner.
inline double trace_exponent(const InterfaceQuadrature& Q, const Polygon& poly, const Contrast& c, int v) {
    double ri = poly.cutoff_radius(v);
    std::map<long long, std::vector<double>> by_r;
    for (int q = 0; q < Q.size(); ++q) {
        const auto& p = Q.points[q];
        if (p.vertex != v || p.r < 0.02 * ri || p.r > 0.2 * ri) continue;
        double g = c.kind() == Contrast::Kind::Conducting ? Q.dnu_plus[q] : Q.dtau[q];
        by_r[std::llround(p.r * 1e12)].push_back(std::abs(g));
    }
    std::vector<double> rs, gs;
    for (const auto& [r, vals] : by_r) {
        double s = 0.0;
        for (double x : vals) s += x;
        rs.push_back(r * 1e-12);
        gs.push_back(s / vals.size());
    }
    return loglog_slope(rs, gs);
}

/// Named perturbation presets: "vertex:i", "dilation", "edge:e", "coordinate:i:c".
inline PerturbationField parse_perturbation(const std::string& name, const Polygon& poly) {
    auto pos = name.find(':');
    std::string head = name.substr(0, pos);
    auto arg = [&](int which) {
        std::istringstream is(name);
        std::string tok;
        for (int j = 0; j <= which; ++j)
            if (!std::getline(is, tok, ':')) throw Error(ErrorKind::Config, "perturbation '" + name + "' needs an index");
        try {
            return std::stoi(tok);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Config, "bad index in perturbation '" + name + "'");
        }
    };
    auto index = [&](int which, int n) {
        int i = arg(which);
        if (i < 0 || i >= n) throw Error(ErrorKind::Config, "index out of range in perturbation '" + name + "'");
        return i;
    };
    if (head == "dilation") return presets::dilation(poly);
    if (head == "vertex") return presets::vertex_motion(poly, index(1, poly.size()));
    if (head == "edge") return presets::edge_normal(poly, index(1, poly.size()));
    if (head == "coordinate") return presets::coordinate(poly, index(1, poly.size()), index(2, 2));
    throw Error(ErrorKind::Config, "unknown perturbation '" + name + "'");
}

struct Check {
    std::string section;
    std::string name;
    double metric = 0.0;
    std::string tolerance;
    bool pass = false;
};

/// Structured text report: one block per check.
class Report {
public:
    void add(std::string section, std::string name, double metric, std::string tolerance, bool pass) {
        checks_.push_back({std::move(section), std::move(name), metric, std::move(tolerance), pass});
    }
    const std::vector<Check>& checks() const { return checks_; }
    bool passed() const {
        return std::all_of(checks_.begin(), checks_.end(), [](const Check& c) { return c.pass; });
    }
    int failures() const {
        return static_cast<int>(std::count_if(checks_.begin(), checks_.end(), [](const Check& c) { return !c.pass; }));
    }

    void write(std::ostream& os) const {
        std::string section;
        for (const auto& c : checks_) {
            if (c.section != section) {
                section = c.section;
                os << "[" << section << "]\n";
            }
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6e", c.metric);
            os << "  " << c.name << ": metric=" << buf << " tolerance=" << c.tolerance << " " << (c.pass ? "PASS" : "FAIL")
               << "\n";
        }
        os << "summary: " << checks_.size() - failures() << "/" << checks_.size() << " passed\n";
    }
    std::string str() const {
        std::ostringstream os;
        write(os);
        return os.str();
    }

private:
    std::vector<Check> checks_;
};

struct CampaignConfig {
    OuterDomain outer = OuterDomain::disk();
    std::vector<Vec2> vertices{{-0.3, -0.3}, {0.3, -0.3}, {0.3, 0.3}, {-0.3, 0.3}};
    Contrast contrast = Contrast::finite(2.0);
    CurrentSpec current;
    MeshOptions mesh = [] {
        MeshOptions m;
        m.hmax = 0.01;
        m.grading = 0.5;
        m.levels = 5;
        return m;
    }();
    std::vector<std::string> perturbations{"vertex:2", "dilation", "edge:1"};
    std::vector<double> taylor_t{0.08, 0.04, 0.02, 0.01};
    std::vector<double> deltas{0.2, 0.1, 0.05, 0.025};
    int test_modes = 8;
    double disk_hmax = 0.02;
};

namespace detail {

inline std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

inline void campaign_gamma(const Polygon& poly, const Contrast& c, Report& rep) {
    const std::string sec = "gamma-root residuals";
    if (c.is_unity()) {
        bool threw = false;
        try {
            gamma_roots(poly.angle(0), c);
        } catch (const Error& e) {
            threw = e.kind() == ErrorKind::ContrastUnity;
        }
        rep.add(sec, "unit contrast has no exponents", threw ? 0.0 : 1.0, "ContrastUnity", threw);
        return;
    }
    for (int i = 0; i < poly.size(); ++i) {
        double alpha = poly.angle(i);
        auto g = gamma_roots(alpha, c);
        std::string v = "vertex " + std::to_string(i);
        if (c.is_finite()) {
            double res = std::max(std::abs(gamma_condition(g[1], alpha, c.lambda())), std::abs(gamma_condition(g[2], alpha, c.lambda())));
            rep.add(sec, v + " residual", res, "< 1e-11", res < 1e-11);
            rep.add(sec, v + " gamma1 in (1/2,1)", g[1], "(0.5, 1)", g[1] > 0.5 && g[1] < 1.0);
            rep.add(sec, v + " gamma2 > 1", g[2], "> 1", g[2] > 1.0);
            double det = std::abs(normalized_det(eigen_matrix(g[1], alpha, c.k())));
            rep.add(sec, v + " |det Y(gamma1)|", det, "< 1e-8", det < 1e-8);
            double shifted = std::abs(normalized_det(eigen_matrix(g[1] - 1.0, alpha, c.k())));
            rep.add(sec, v + " |det Y(gamma1-1)|", shifted, "> 1e-6", shifted > 1e-6);
        } else {
            double res = std::abs(std::sin(g[1] * (two_pi - alpha)));
            rep.add(sec, v + " residual", res, "< 1e-11", res < 1e-11);
        }
    }
}

inline void campaign_forward(const CampaignConfig& cfg, const Polygon& poly, const Contrast& c, Report& rep) {
    const std::string sec = "forward oracles";
    {
        const int n = 64;
        const double rho = 0.5;
        std::vector<Vec2> v;
        for (int i = 0; i < n; ++i) v.push_back(rho * Vec2(std::cos(two_pi * i / n), std::sin(two_pi * i / n)));
        auto disk = build_polygon(v, OuterDomain::disk());
        MeshOptions opt;
        opt.hmax = cfg.disk_hmax;
        opt.seed = cfg.mesh.seed;
        auto m = std::make_shared<const Mesh>(generate_mesh(disk, OuterDomain::disk(), opt));
        FemSystem sys(m, c);
        auto f = boundary_function(*m, [](const Vec2& p, double) { return std::cos(std::atan2(p.y(), p.x())); }).normalized();
        auto u = solve_any(sys, f);
        double amp = c.is_unity() ? 1.0 : disk_series_amplitude(c, ngon_mean_radius(n, rho));
        auto exact = f * amp;
        double err = (boundary_trace(u) - exact).norm() / exact.norm();
        rep.add(sec, "disk series, relative L2 error", err, "< 1e-2", err < 1e-2);
    }
    // reciprocity on the configured polygon
    auto m = std::make_shared<const Mesh>(generate_mesh(poly, cfg.outer, cfg.mesh));
    FemSystem sys(m, c);
    auto fam = fourier_family(*m, cfg.outer, 3);
    fam.resize(5);
    std::vector<BoundaryFunction> traces;
    for (const auto& f : fam) traces.push_back(boundary_trace(solve_any(sys, f.normalized())));
    double worst = 0.0;
    for (size_t i = 0; i < fam.size(); ++i)
        for (size_t j = 0; j < i; ++j) {
            double a = traces[i].inner(fam[j]), b = traces[j].inner(fam[i]);
            double scale = std::sqrt(std::abs(traces[i].inner(fam[i]) * traces[j].inner(fam[j])));
            worst = std::max(worst, std::abs(a - b) / scale);
        }
    rep.add(sec, "reciprocity over 10 pairs", worst, "< 1e-9", worst < 1e-9);
}

}  // namespace detail

/// Runs every check of the campaign in a fixed order; the report carries no timings.
inline Report run_verification_campaign(const CampaignConfig& cfg) {
    Report rep;
    const Contrast& c = cfg.contrast;
    Polygon poly = build_polygon(cfg.vertices, cfg.outer);

    detail::campaign_gamma(poly, c, rep);
    detail::campaign_forward(cfg, poly, c, rep);

    auto buffers = std::make_shared<const ExtensionBuffers>(build_buffers(poly, cfg.outer));
    MeshOptions opt = cfg.mesh;
    opt.buffers = buffers;
    opt.duplicate_interface = c.is_finite() && !c.is_unity();
    auto mesh = std::make_shared<const Mesh>(generate_mesh(poly, cfg.outer, opt));
    FemSystem sys(mesh, c);
    auto f = fourier_current(*mesh, cfg.outer, cfg.current.mode, cfg.current.cosine).normalized();
    auto u = solve_any(sys, f);
    std::optional<CornerSpectrum> spec;
    if (!c.is_unity()) spec = corner_spectrum(poly, c);

    if (spec) {
        const std::string sec = "boundary-gradient exponent fits";
        auto fits = estimate_all_betas(u, poly, *spec);
        GradientOptions go;
        go.use_fit = false;
        auto Q = boundary_gradients(u, poly, c, &*spec, nullptr, go);
        for (const auto& fit : fits) {
            std::string v = "vertex " + std::to_string(fit.vertex);
            double g = fit.gamma;
            if (c.is_finite()) {
                double e = std::abs(fit.gamma_hat - g) / g;
                rep.add(sec, v + " fitted exponent, relative", e, "< 0.05", e < 0.05);
            } else {
                double e = std::abs(fit.gamma_hat - g);
                rep.add(sec, v + " fitted exponent, absolute", e, "< 0.05", e < 0.05);
            }
            rep.add(sec, v + " beta spread", fit.spread, "< 1.2", fit.spread < 1.2);
            double s = std::abs(trace_exponent(Q, poly, c, fit.vertex) - (g - 1.0));
            rep.add(sec, v + " trace exponent error", s, "< 0.05", s < 0.05);
        }
    }

    std::vector<std::pair<std::string, PerturbationField>> fields;
    for (const auto& name : cfg.perturbations) fields.emplace_back(name, parse_perturbation(name, poly));

    {
        const std::string sec = "taylor remainder";
        for (const auto& [name, h] : fields) {
            ExtensionField H(buffers, h);
            auto d = shape_derivative_material(sys, u, H, true);
            if (c.is_unity()) {
                rep.add(sec, name + " derivative norm", d.norm(), "< 1e-12", d.norm() < 1e-12);
                continue;
            }
            auto tab = taylor_remainder(sys, f, H, d, cfg.taylor_t);
            rep.add(sec, name + " slope", tab.slope, "[1.8, 2.2]", tab.slope >= 1.8 && tab.slope <= 2.2);
        }
    }

    {
        const std::string sec = "route equivalence";
        BoundaryDerivative bd(sys, poly, cfg.outer, cfg.test_modes);
        for (const auto& [name, h] : fields) {
            ExtensionField H(buffers, h);
            auto mat = shape_derivative_material(sys, u, H, c.is_unity());
            auto bfv = shape_derivative_boundary(bd, u, h);
            if (c.is_unity()) {
                rep.add(sec, name + " boundary route norm", bfv.norm(), "= 0", bfv.norm() == 0.0);
                rep.add(sec, name + " material route norm", mat.norm(), "< 1e-12", mat.norm() < 1e-12);
                continue;
            }
            double d1 = (bfv - mat).norm() / mat.norm();
            rep.add(sec, name + " boundary vs material", d1, "< 0.05", d1 < 0.05);
            if (!c.is_finite()) continue;
            auto w = transmission_route(sys, poly, u, h, *spec);
            double d2 = (w.trace - mat).norm() / mat.norm(), d3 = (w.trace - bfv).norm() / bfv.norm();
            rep.add(sec, name + " transmission vs material", d2, "< 0.05", d2 < 0.05);
            rep.add(sec, name + " transmission vs boundary", d3, "< 0.05", d3 < 0.05);
        }
    }

    if (c.is_finite() && !c.is_unity()) {
        // the vertex-motion field carries nonzero limits of h.nu at its vertex
        std::string name = fields.front().first;
        for (const auto& fld : fields)
            if (fld.first.rfind("vertex", 0) == 0) {
                name = fld.first;
                break;
            }
        const auto& h = std::find_if(fields.begin(), fields.end(), [&](const auto& p) { return p.first == name; })->second;
        auto w = transmission_route(sys, poly, u, h, *spec);
        auto rows = check_compatibility(poly, c, u, h, w.singular, cfg.deltas);
        bool dec = true;
        for (size_t j = 1; j < rows.size(); ++j) dec = dec && std::abs(rows[j].residual) < std::abs(rows[j - 1].residual);
        rep.add("compatibility decay", name + " residual at smallest delta", std::abs(rows.back().residual), "strictly decreasing", dec);

        auto vg = solve_forward(sys, f);
        auto drows = delta_terms(c, w.singular, vg, {0.1});
        const auto& r = drows.front();
        double ratio = std::abs(r.sum()) / std::min(std::abs(r.vertex_term), std::abs(r.singular_term));
        rep.add("delta-term cancellation", name + " |sum| / min term at delta 0.1", ratio, "< 0.1", ratio < 0.1);
    }
    return rep;
}

}  // namespace polyshape
