#pragma once

#include "polyshape/corner_fit.hpp"

namespace polyshape {

struct InterfacePoint {
    int edge = 0;
    double t = 0.0;       // position along the edge in [0, 1]
    Vec2 x = Vec2::Zero();
    double weight = 0.0;
    int vertex = 0;       // nearer polygon vertex
    double r = 0.0;       // distance to that vertex
};

/// Graded Gauss rule on the interface plus one-sided traces of a field at its nodes.
struct InterfaceQuadrature {
    MeshPtr mesh;
    std::vector<InterfacePoint> points;
    std::vector<double> dtau, dnu_minus, dnu_plus;

    int size() const { return static_cast<int>(points.size()); }
};

struct QuadratureOptions {
    double ratio = 0.5;
    int panels = 12;       // per half edge
    int order = 4;
    double innermost = 1e-4;  // relative to the edge length
};

namespace detail {

/// Weights at the nodes r_q = b s_q^q on [0, b] that integrate r^(2 gamma - 2 + j) and r^j exactly
/// (half the nodes each), with 2 gamma - 1 = 1 / q.
inline Eigen::VectorXd singular_panel_weights(double b, double q, const std::vector<double>& s) {
    const int n = static_cast<int>(s.size());
    const double p0 = 1.0 / q - 1.0;
    if (std::abs(p0 - std::round(p0)) < 0.05) return {};  // moments nearly dependent; plain Gauss is fine
    Eigen::MatrixXd A(n, n);
    Eigen::VectorXd rhs(n);
    for (int j = 0; j < n; ++j) {
        double e = j < n / 2 ? p0 + j : static_cast<double>(j - n / 2);
        for (int k = 0; k < n; ++k) A(j, k) = std::pow(b * std::pow(s[k], q), e);
        rhs[j] = std::pow(b, e + 1.0) / (e + 1.0);
    }
    return A.fullPivLu().solve(rhs);
}

}  // namespace detail

/// Composite Gauss rule on every edge, geometrically graded toward both end vertices.
/// With corner exponents given, the panel touching each vertex uses the substitution
/// r = a s^q, q = 1 / (2 gamma - 1), with weights fitted to the singular and regular moments.
inline std::vector<InterfacePoint> interface_rule(const Polygon& poly, const QuadratureOptions& opt = {},
                                                  const CornerSpectrum* spec = nullptr) {
    const auto& gl = gauss_legendre(opt.order);
    std::vector<InterfacePoint> pts;
    for (int e = 0; e < poly.size(); ++e) {
        double L = poly.edge_length(e);
        // breakpoints in distance from the vertex, on [0, L/2]
        std::vector<double> br{0.0};
        for (int m = opt.panels - 1; m >= 1; --m) {
            double b = 0.5 * L * std::pow(opt.ratio, m);
            if (b >= opt.innermost * L) br.push_back(b);
        }
        br.push_back(0.5 * L);
        for (int side = 0; side < 2; ++side) {
            int vertex = side == 0 ? poly.wrap(e - 1) : poly.wrap(e);
            double expo = 1.0;
            if (spec) expo = 1.0 / std::max(2.0 * spec->corners[vertex].gammas[1] - 1.0, 0.05);
            for (size_t p = 0; p + 1 < br.size(); ++p) {
                double a = br[p], b = br[p + 1];
                Eigen::VectorXd wfit;
                if (p == 0 && expo != 1.0) wfit = detail::singular_panel_weights(b, expo, gl.nodes);
                for (size_t q = 0; q < gl.nodes.size(); ++q) {
                    double d = a + (b - a) * gl.nodes[q];
                    double wq = (b - a) * gl.weights[q];
                    if (wfit.size()) {
                        d = b * std::pow(gl.nodes[q], expo);
                        wq = wfit[q];
                    }
                    InterfacePoint ip;
                    ip.edge = e;
                    ip.t = side == 0 ? d / L : 1.0 - d / L;
                    ip.x = (1 - ip.t) * poly.edge_start(e) + ip.t * poly.edge_end(e);
                    ip.weight = wq;
                    ip.vertex = vertex;
                    ip.r = d;
                    pts.push_back(ip);
                }
            }
        }
    }
    return pts;
}

struct GradientOptions {
    QuadratureOptions quadrature;
    enum class Recovery { Patch, Flux };
    Recovery recovery = Recovery::Flux;
    bool use_fit = true;      // substitute the fitted leading term near vertices
    double fit_radius = 0.2;  // relative to the cutoff radius
    double fit_cells = 4.0;   // if positive, the fit zone is this many smallest corner elements
};

namespace detail {

/// Gradient of beta * y(theta) r^gamma at x on the given branch, in global coordinates.
inline Vec2 expansion_gradient(const Polygon& poly, const CornerData& cd, double beta, const Vec2& x, double theta, bool minus) {
    double r = (x - poly.vertex(cd.vertex)).norm();
    double g = cd.gammas[1];
    double phi = poly.frame_angle(cd.vertex) + theta;
    Vec2 er(std::cos(phi), std::sin(phi)), et(-std::sin(phi), std::cos(phi));
    double rp = beta * std::pow(r, g - 1.0);
    return rp * (g * cd.y1.value(theta, minus) * er + cd.y1.derivative(theta, minus) * et);
}

}  // namespace detail

/// One-sided normal and tangential derivatives of u on the interface rule.
inline InterfaceQuadrature boundary_gradients(const FemField& u, const Polygon& poly, const Contrast& contrast,
                                              const CornerSpectrum* spec = nullptr, const std::vector<CornerFit>* fits = nullptr,
                                              const GradientOptions& opt = {}) {
    const Mesh& m = *u.mesh;
    InterfaceQuadrature Q;
    Q.mesh = u.mesh;
    Q.points = interface_rule(poly, opt.quadrature, spec);
    auto gm = nodal_gradients(u, 1);
    auto gp = nodal_gradients(u, 0);
    std::vector<std::vector<int>> by_edge(poly.size());
    for (int s = 0; s < static_cast<int>(m.interface.size()); ++s) by_edge[m.interface[s].edge].push_back(s);
    for (auto& v : by_edge)
        std::sort(v.begin(), v.end(), [&](int a, int b) { return m.interface[a].ta < m.interface[b].ta; });
    std::vector<char> is_vertex(m.num_nodes(), 0);
    for (int v : m.vertex_node) is_vertex[v] = 1;
    for (auto [a, b] : m.twins)
        if (is_vertex[a]) is_vertex[b] = 1;

    bool finite = contrast.is_finite();
    bool insulating = contrast.kind() == Contrast::Kind::Insulating;

    // flux recovery: residual of the discrete equation on one region, lumped on the interface
    std::vector<double> flux_minus(m.num_nodes(), 0.0), flux_plus(m.num_nodes(), 0.0), lumped(m.num_nodes(), 0.0);
    std::vector<double> slope_sum(m.num_nodes(), 0.0), slope_w(m.num_nodes(), 0.0);
    bool flux = opt.recovery == GradientOptions::Recovery::Flux;
    if (flux) {
        for (int t = 0; t < m.num_triangles(); ++t) {
            auto g = m.hat_gradients(t);
            Vec2 gu = u.gradient(t);
            auto& target = m.region[t] == 1 ? flux_minus : flux_plus;
            for (int k = 0; k < 3; ++k) target[m.triangles[t][k]] += m.area(t) * gu.dot(g[k]);
        }
        for (const auto& ie : m.interface) {
            double len = (m.nodes[ie.b] - m.nodes[ie.a]).norm();
            double slope = (u.values[ie.b] - u.values[ie.a]) / len;
            for (int a : {ie.a, ie.b, ie.a_plus, ie.b_plus}) lumped[a] += 0.5 * len;
            for (int a : {ie.a, ie.b}) {
                slope_sum[a] += len * slope;
                slope_w[a] += len;
            }
        }
        // non-duplicated meshes share the interface nodes between both sides
        if (!m.duplicated())
            for (auto& v : lumped) v *= 0.5;
    }

    for (const auto& ip : Q.points) {
        const auto& segs = by_edge[ip.edge];
        auto it = std::lower_bound(segs.begin(), segs.end(), ip.t, [&](int s, double t) { return m.interface[s].tb < t; });
        if (it == segs.end()) --it;
        const InterfaceEdge& ie = m.interface[*it];
        double w = (ip.t - ie.ta) / (ie.tb - ie.ta);
        Vec2 tau = poly.tangent(ip.edge), nu = poly.normal(ip.edge);
        bool at_vertex = is_vertex[ie.a] || is_vertex[ie.b];
        auto blend = [&](const std::vector<Vec2>& g, int a, int b, int tri) -> Vec2 {
            if (at_vertex) return u.gradient(tri);
            return (1 - w) * g[a] + w * g[b];
        };
        Vec2 grad_minus = finite ? blend(gm, ie.a, ie.b, ie.tri_minus) : Vec2::Zero();
        Vec2 grad_plus = blend(gp, ie.a_plus, ie.b_plus, ie.tri_plus);
        double dt_m = grad_minus.dot(tau), dt_p = grad_plus.dot(tau);
        double dn_m = grad_minus.dot(nu), dn_p = grad_plus.dot(nu);
        if (flux && !at_vertex) {
            auto lerp = [&](double va, double vb) { return (1 - w) * va + w * vb; };
            double dt = lerp(slope_sum[ie.a] / slope_w[ie.a], slope_sum[ie.b] / slope_w[ie.b]);
            dt_m = dt_p = dt;
            if (!m.duplicated()) {
                // split the shared residual using the flux balance of the continuous problem
                double ra = flux_minus[ie.a] / lumped[ie.a], rb = flux_minus[ie.b] / lumped[ie.b];
                dn_m = lerp(ra, rb);
                dn_p = lerp(-flux_plus[ie.a] / lumped[ie.a], -flux_plus[ie.b] / lumped[ie.b]);
            } else {
                dn_m = lerp(flux_minus[ie.a] / lumped[ie.a], flux_minus[ie.b] / lumped[ie.b]);
                dn_p = lerp(-flux_plus[ie.a_plus] / lumped[ie.a_plus], -flux_plus[ie.b_plus] / lumped[ie.b_plus]);
            }
        } else if (flux && at_vertex) {
            double len = (m.nodes[ie.b] - m.nodes[ie.a]).norm();
            dt_m = dt_p = (u.values[ie.b] - u.values[ie.a]) / len;
        }

        double fit_r = opt.fit_radius * poly.cutoff_radius(ip.vertex);
        if (opt.fit_cells > 0 && ip.vertex < static_cast<int>(m.grading.size()) && m.grading[ip.vertex].smallest_size > 0)
            fit_r = opt.fit_cells * m.grading[ip.vertex].smallest_size;
        if (opt.use_fit && spec && fits && !fits->empty() && ip.r < fit_r) {
            const CornerData& cd = spec->corners[ip.vertex];
            double beta = (*fits)[ip.vertex].beta_hat;
            bool starts = ip.vertex == poly.wrap(ip.edge - 1);  // edge i+1 leaves vertex i along theta = 0
            double th_minus = starts ? 0.0 : cd.alpha;
            double th_plus = starts ? two_pi : cd.alpha;
            Vec2 em = detail::expansion_gradient(poly, cd, beta, ip.x, th_minus, true);
            Vec2 ep = detail::expansion_gradient(poly, cd, beta, ip.x, th_plus, false);
            dt_m = em.dot(tau);
            dn_m = em.dot(nu);
            dt_p = ep.dot(tau);
            dn_p = ep.dot(nu);
        }
        double dt;
        if (finite)
            dt = 0.5 * (dt_m + dt_p);
        else
            dt = insulating ? dt_p : 0.0;
        Q.dtau.push_back(dt);
        Q.dnu_minus.push_back(finite ? dn_m : 0.0);
        Q.dnu_plus.push_back(insulating ? 0.0 : dn_p);
    }
    return Q;
}

/// Normal derivative from the inclusion side at each interface node (indexed by node, zero
/// elsewhere), recovered from the lumped residual of the discrete equation on the inclusion.
/// Inside the fit zone of a vertex the fitted leading term replaces it.
inline std::vector<double> interface_normal_flux(const FemField& u, const Polygon& poly, const CornerSpectrum* spec = nullptr,
                                                 const std::vector<CornerFit>* fits = nullptr, const GradientOptions& opt = {}) {
    const Mesh& m = *u.mesh;
    std::vector<double> res(m.num_nodes(), 0.0), lumped(m.num_nodes(), 0.0), out(m.num_nodes(), 0.0);
    for (int t = 0; t < m.num_triangles(); ++t) {
        if (m.region[t] != 1) continue;
        auto g = m.hat_gradients(t);
        Vec2 gu = u.gradient(t);
        for (int k = 0; k < 3; ++k) res[m.triangles[t][k]] += m.area(t) * gu.dot(g[k]);
    }
    for (const auto& ie : m.interface) {
        double len = (m.nodes[ie.b] - m.nodes[ie.a]).norm();
        lumped[ie.a] += 0.5 * len;
        lumped[ie.b] += 0.5 * len;
    }
    for (const auto& ie : m.interface)
        for (int a : {ie.a, ie.b}) {
            if (lumped[a] > 0) out[a] = res[a] / lumped[a];
            if (!opt.use_fit || !spec || !fits || fits->empty()) continue;
            const Vec2& x = m.nodes[a];
            for (int v : {poly.wrap(ie.edge - 1), poly.wrap(ie.edge)}) {
                double r = (x - poly.vertex(v)).norm();
                double fit_r = opt.fit_cells > 0 && v < static_cast<int>(m.grading.size()) && m.grading[v].smallest_size > 0
                                   ? opt.fit_cells * m.grading[v].smallest_size
                                   : opt.fit_radius * poly.cutoff_radius(v);
                if (r <= 0.0 || r >= fit_r) continue;
                const CornerData& cd = spec->corners[v];
                double th = v == poly.wrap(ie.edge - 1) ? 0.0 : cd.alpha;
                out[a] = detail::expansion_gradient(poly, cd, (*fits)[v].beta_hat, x, th, true).dot(poly.normal(ie.edge));
            }
        }
    return out;
}

/// Interface conductivity tensor on edge e: eigenvalue 1 along the tangent and k along the normal.
inline Mat2 anisotropy(const Polygon& poly, int e, double k) {
    Vec2 t = poly.tangent(e), n = poly.normal(e);
    return t * t.transpose() + k * n * n.transpose();
}

/// Interface integral of the shape derivative against one test solution.
inline double shape_derivative_pairing(const Polygon& poly, const Contrast& contrast, const InterfaceQuadrature& U,
                                       const PerturbationField& h, const InterfaceQuadrature& V) {
    if (U.mesh != V.mesh || U.size() != V.size()) throw Error(ErrorKind::MeshMismatch, "traces live on different meshes");
    double s = 0.0;
    for (int q = 0; q < U.size(); ++q) {
        const auto& ip = U.points[q];
        double hn = h.normal_component(poly, ip.edge, ip.t);
        if (hn == 0.0) continue;
        double integrand;
        switch (contrast.kind()) {
            case Contrast::Kind::Finite:
                integrand = (1 - contrast.k()) * (U.dtau[q] * V.dtau[q] + contrast.k() * U.dnu_minus[q] * V.dnu_minus[q]);
                break;
            case Contrast::Kind::Insulating: integrand = U.dtau[q] * V.dtau[q]; break;
            default: integrand = -U.dnu_plus[q] * V.dnu_plus[q]; break;
        }
        s += ip.weight * hn * integrand;
    }
    return s;
}

/// Test-current machinery for the boundary-integral route: solutions v_g for a truncated
/// Fourier family, their interface traces and the Gram matrix of the family.
class BoundaryDerivative {
public:
    BoundaryDerivative(const FemSystem& sys, const Polygon& poly, const OuterDomain& outer, int modes = 8,
                       GradientOptions opt = {})
        : sys_(&sys), poly_(poly), opt_(opt) {
        family_ = fourier_family(sys.mesh(), outer, modes);
        int n = static_cast<int>(family_.size());
        gram_.resize(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) gram_(a, b) = family_[a].inner(family_[b]);
        gram_ldlt_.compute(gram_);
        if (!sys.contrast().is_unity()) spectrum_ = corner_spectrum(poly, sys.contrast());
        for (const auto& g : family_) tests_.push_back(traces(solve_forward(sys, g.normalized())));
    }

    const std::vector<BoundaryFunction>& family() const { return family_; }
    int size() const { return static_cast<int>(family_.size()); }
    const std::optional<CornerSpectrum>& spectrum() const { return spectrum_; }

    InterfaceQuadrature traces(const FemField& u) const {
        const CornerSpectrum* spec = spectrum_ ? &*spectrum_ : nullptr;
        if (!spec || !opt_.use_fit) return boundary_gradients(u, poly_, sys_->contrast(), spec, nullptr, opt_);
        std::vector<CornerFit> fits;
        try {
            fits = estimate_all_betas(u, poly_, *spectrum_);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::InsufficientResolution) throw;
            return boundary_gradients(u, poly_, sys_->contrast(), spec, nullptr, opt_);
        }
        return boundary_gradients(u, poly_, sys_->contrast(), &*spectrum_, &fits, opt_);
    }

    std::vector<double> pairings(const InterfaceQuadrature& U, const PerturbationField& h) const {
        std::vector<double> p;
        for (const auto& V : tests_) p.push_back(shape_derivative_pairing(poly_, sys_->contrast(), U, h, V));
        return p;
    }

    /// Galerkin reconstruction of the derivative from its pairings with the family.
    BoundaryFunction derivative(const InterfaceQuadrature& U, const PerturbationField& h) const {
        auto p = pairings(U, h);
        Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
        Eigen::VectorXd c = gram_ldlt_.solve(rhs);
        BoundaryFunction out = family_[0] * 0.0;
        out.fourier.reset();
        for (int a = 0; a < size(); ++a)
            for (int k = 0; k < out.size(); ++k) out.values[k] += c[a] * family_[a].values[k];
        return out;
    }

private:
    const FemSystem* sys_;
    Polygon poly_;
    GradientOptions opt_;
    std::vector<BoundaryFunction> family_;
    Eigen::MatrixXd gram_;
    Eigen::LDLT<Eigen::MatrixXd> gram_ldlt_;
    std::optional<CornerSpectrum> spectrum_;
    std::vector<InterfaceQuadrature> tests_;
};

/// Boundary-integral route: derivative of the boundary trace for current f in direction h.
inline BoundaryFunction shape_derivative_boundary(const BoundaryDerivative& bd, const FemField& u, const PerturbationField& h) {
    return bd.derivative(bd.traces(u), h);
}

/// Material-derivative route (the extension vanishes near the outer boundary, so the
/// trace of the material derivative is the trace of the shape derivative).
inline BoundaryFunction shape_derivative_material(const FemSystem& sys, const FemField& u, const ExtensionField& H,
                                                  bool interpolated = false) {
    return boundary_trace(solve_material(sys, u, {&H, interpolated}));
}

/// Shape derivative u' = udot - H . grad u, nodally with one-sided gradients at twins.
inline FemField domain_derivative(const FemField& udot, const FemField& u, const ExtensionField& H) {
    const Mesh& m = *u.mesh;
    if (!m.duplicated()) throw Error(ErrorKind::RequiresDuplicatedMesh, "domain derivative needs twin nodes");
    auto g = nodal_gradients(u);
    FemField out{u.mesh, udot.values};
    for (int i = 0; i < m.num_nodes(); ++i) {
        int q = -1;
        if (!H.buffers().quadrangles().empty()) q = H.buffers().locate(m.nodes[i]);
        if (q < 0) continue;
        out.values[i] -= H.evaluate_in(q, m.nodes[i]).value.dot(g[i]);
    }
    return out;
}

struct TaylorRow {
    double t = 0.0;
    double remainder = 0.0;
    double slope_running = 0.0;
};

struct TaylorTable {
    std::vector<TaylorRow> rows;
    double slope = 0.0;

    void write_csv(std::ostream& os) const {
        os.precision(12);
        os << "t,remainder,slope_running\n";
        for (const auto& r : rows) os << r.t << ',' << r.remainder << ',' << r.slope_running << "\n";
    }
};

/// Least-squares slope of log y against log x over positive entries.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0) || !(y[k] > 0)) continue;
        double a = std::log(x[k]), b = std::log(y[k]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Remainder of the first-order expansion of the boundary trace along the deformation
/// x -> x + t H(x). Perturbed states are computed on the transported reference mesh.
inline TaylorTable taylor_remainder(const FemSystem& sys, const BoundaryFunction& f, const ExtensionField& H,
                                    const BoundaryFunction& derivative, const std::vector<double>& t_list) {
    TaylorTable table;
    auto base = boundary_trace(solve_forward(sys, f));
    std::vector<double> ts, rs;
    for (double t : t_list) {
        TaylorRow row;
        row.t = t;
        if (t != 0.0) {
            auto mt = std::make_shared<const Mesh>(transport_mesh(sys.mesh(), H, t));
            FemSystem st(mt, sys.contrast());
            auto trace = boundary_trace(solve_forward(st, f));
            row.remainder = (trace - base - derivative * t).norm();
            ts.push_back(std::abs(t));
            rs.push_back(row.remainder);
        }
        row.slope_running = loglog_slope(ts, rs);
        table.rows.push_back(row);
    }
    table.slope = loglog_slope(ts, rs);
    return table;
}

struct NormScanRow {
    int polygon = 0;
    double operator_norm = 0.0;
    int argmax = 0;
};

/// For each polygon, the largest derivative norm over the given basis fields, each
/// scaled to unit W^{1,inf} norm on the polygon.
inline std::vector<NormScanRow> derivative_norm_scan(
    const std::vector<Polygon>& polys, const OuterDomain& outer, const Contrast& contrast, const MeshOptions& mesh_opt,
    const std::function<std::vector<PerturbationField>(const Polygon&)>& basis, int mode = 1) {
    std::vector<NormScanRow> rows;
    for (size_t p = 0; p < polys.size(); ++p) {
        auto buffers = std::make_shared<const ExtensionBuffers>(build_buffers(polys[p], outer));
        MeshOptions opt = mesh_opt;
        opt.buffers = buffers;
        auto mesh = std::make_shared<const Mesh>(generate_mesh(polys[p], outer, opt));
        FemSystem sys(mesh, contrast);
        auto f = fourier_current(*mesh, outer, mode, true).normalized();
        auto u = solve_forward(sys, f);
        NormScanRow row;
        row.polygon = static_cast<int>(p);
        auto fields = basis(polys[p]);
        for (size_t b = 0; b < fields.size(); ++b) {
            double w = fields[b].w1inf_norm(polys[p]);
            if (!(w > 0)) continue;
            ExtensionField H(buffers, fields[b] * (1.0 / w));
            double n = shape_derivative_material(sys, u, H).norm();
            if (n > row.operator_norm) {
                row.operator_norm = n;
                row.argmax = static_cast<int>(b);
            }
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace polyshape
