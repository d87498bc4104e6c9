#pragma once

#include "polyshape/shape_derivative.hpp"

namespace polyshape {

/// Data of the regular-part problem for w0.
struct TransmissionSources {
    std::vector<SingularFunction> singular;
    std::vector<double> phi;      // value jump per node (indexed by the minus node)
    Eigen::VectorXd load_volume;  // int sum F_i v
    Eigen::VectorXd load_flux;    // - <psi, v>
    double scale = 0.0;           // L1 size of the two loads, for the compatibility tolerance

    Eigen::VectorXd load() const { return load_volume + load_flux; }
};

namespace detail {

/// Position of a point on edge e relative to its two end vertices.
struct EdgeSpot {
    int start_vertex, end_vertex;
    double r_start, r_end;
};

inline EdgeSpot edge_spot(const Polygon& poly, int e, const Vec2& x) {
    return {poly.wrap(e - 1), poly.wrap(e), (x - poly.edge_start(e)).norm(), (x - poly.edge_end(e)).norm()};
}

/// Sum over the two end vertices of chi_i * g_lead,i and of d_tau(chi_i) * g_lead,i.
inline std::pair<double, double> lead_terms(const std::vector<SingularFunction>& sf, const Polygon& poly, int e, const Vec2& x) {
    auto s = edge_spot(poly, e, x);
    const SingularFunction& a = sf[s.start_vertex];  // edge e is edge i+1 of its start vertex
    const SingularFunction& b = sf[s.end_vertex];    // and edge i of its end vertex
    double chi_g = 0.0, dchi_g = 0.0;
    if (s.r_start > 0.0 && s.r_start < a.cutoff.R) {
        double g = a.tangential_lead(s.r_start, true);
        chi_g += a.cutoff.value(s.r_start) * g;
        dchi_g += a.cutoff.d1(s.r_start) * g;
    }
    if (s.r_end > 0.0 && s.r_end < b.cutoff.R) {
        double g = b.tangential_lead(s.r_end, false);
        chi_g += b.cutoff.value(s.r_end) * g;
        dchi_g -= b.cutoff.d1(s.r_end) * g;  // tau points toward the end vertex
    }
    return {chi_g, dchi_g};
}

/// Sum over the end vertices of the singular value jumps [w_i] at x on edge e.
inline double singular_jump(const std::vector<SingularFunction>& sf, const Polygon& poly, int e, const Vec2& x) {
    auto s = edge_spot(poly, e, x);
    return sf[s.start_vertex].jump(s.r_start, true) + sf[s.end_vertex].jump(s.r_end, false);
}

}  // namespace detail

/// Leading-order split of the transmission data of u' for the perturbation h.
inline TransmissionSources assemble_sources(const FemSystem& sys, const Polygon& poly, const FemField& u,
                                            const CornerSpectrum& spec, const PerturbationField& h,
                                            const std::vector<double>& betas, const std::vector<CornerFit>* fits = nullptr) {
    const Mesh& m = sys.mesh();
    const Contrast& contrast = sys.contrast();
    if (static_cast<int>(betas.size()) != poly.size()) throw Error(ErrorKind::MissingBeta, "one beta per vertex is required");
    if (!m.duplicated()) throw Error(ErrorKind::RequiresDuplicatedMesh, "transmission sources need twin nodes");
    const double k = contrast.k();
    TransmissionSources S;
    for (int i = 0; i < poly.size(); ++i)
        S.singular.push_back(singular_coefficients(poly, i, spec, betas[i], h.limit_minus(poly, i), h.limit_plus(poly, i)));

    // volume sources, supported in the cut-off annuli
    S.load_volume = sys.volume_load([&](int t, const Vec2& x) {
        double s = 0.0;
        for (const auto& sf : S.singular) s += sf.source(x, m.region[t]);
        return s;
    });

    // value jump at interface nodes
    auto dn = interface_normal_flux(u, poly, &spec, fits);
    S.phi.assign(m.num_nodes(), 0.0);
    std::vector<char> is_vertex(m.num_nodes(), 0);
    for (int v : m.vertex_node) is_vertex[v] = 1;
    for (const auto& ie : m.interface) {
        for (int a : {ie.a, ie.b}) {
            if (is_vertex[a]) continue;  // the regular jump vanishes at the vertices
            const Vec2& x = m.nodes[a];
            double t = (x - poly.edge_start(ie.edge)).norm() / poly.edge_length(ie.edge);
            double hn = h.normal_component(poly, ie.edge, t);
            S.phi[a] = (1 - k) * hn * dn[a] - detail::singular_jump(S.singular, poly, ie.edge, x);
        }
    }

    // flux jump, integrated by parts on each interface segment
    S.load_flux = Eigen::VectorXd::Zero(sys.num_dofs());
    const auto& gl = gauss_legendre(4);
    double flux_l1 = 0.0;
    for (const auto& ie : m.interface) {
        const Vec2 &pa = m.nodes[ie.a], &pb = m.nodes[ie.b];
        double len = (pb - pa).norm();
        double dtau_u = (u.values[ie.b] - u.values[ie.a]) / len;
        double int_gt = 0.0, int_a = 0.0, int_b = 0.0;
        for (size_t q = 0; q < gl.nodes.size(); ++q) {
            double s = gl.nodes[q], w = gl.weights[q] * len;
            Vec2 x = (1 - s) * pa + s * pb;
            double t = (x - poly.edge_start(ie.edge)).norm() / poly.edge_length(ie.edge);
            double hn = h.normal_component(poly, ie.edge, t);
            auto [chi_g, dchi_g] = detail::lead_terms(S.singular, poly, ie.edge, x);
            int_gt += w * (hn * dtau_u - chi_g);
            int_a += w * dchi_g * (1 - s);
            int_b += w * dchi_g * s;
        }
        // (1-k) [ int g~ d_tau v - int sum d_tau(chi_i) g_lead v ]
        double ca = (1 - k) * (-int_gt / len - int_a);
        double cb = (1 - k) * (int_gt / len - int_b);
        S.load_flux[sys.dof_of(ie.a)] += ca;
        S.load_flux[sys.dof_of(ie.b)] += cb;
        flux_l1 += std::abs(ca) + std::abs(cb);
    }
    S.scale = S.load_volume.cwiseAbs().sum() + flux_l1;
    return S;
}

/// w = w0 + sum_i w_i with the regular part on the duplicated mesh.
struct SplitSolution {
    FemField w0;
    std::vector<SingularFunction> singular;
    BoundaryFunction trace;
    double compatibility = 0.0;

    double value(const MeshLocator& loc, const Vec2& x, int region) const {
        auto hit = loc.locate(x, region, 1e-9);
        double v = hit.triangle >= 0 ? w0.at(hit.triangle, hit.bary) : 0.0;
        for (const auto& sf : singular) v += sf.value(x, region);
        return v;
    }
};

inline SplitSolution solve_transmission(const FemSystem& sys, const TransmissionSources& S, double tol = 1e-3) {
    SplitSolution w;
    double compat = 0.0;
    w.w0 = solve_jump(sys, S.phi, S.load(), tol * std::max(S.scale, 1e-300), &compat);
    w.compatibility = compat;
    w.singular = S.singular;
    w.trace = boundary_trace(w.w0);  // the singular parts vanish near the outer boundary
    return w;
}

struct CompatibilityRow {
    double delta = 0.0;  // relative to the cutoff radius
    double residual = 0.0;
};

/// sum_i int F_i - int_{interface minus B_delta} psi, with the interface integral of the
/// split flux data taken edge by edge; g~ at the excision points comes from the forward solution.
inline std::vector<CompatibilityRow> check_compatibility(const Polygon& poly, const Contrast& contrast, const FemField& u,
                                                         const PerturbationField& h, const std::vector<SingularFunction>& sf,
                                                         const std::vector<double>& deltas) {
    const double k = contrast.k();
    const auto& gl = gauss_legendre(16);
    // volume sources by polar quadrature on each annulus
    double F = 0.0;
    for (const auto& s : sf) {
        double r0 = s.cutoff.inner(), r1 = s.cutoff.R;
        double a = s.ytilde.alpha;
        for (int pr = 0; pr < 8; ++pr)
            for (size_t qr = 0; qr < gl.nodes.size(); ++qr) {
                double r = r0 + (r1 - r0) * (pr + gl.nodes[qr]) / 8.0;
                double wr = (r1 - r0) / 8.0 * gl.weights[qr] * r;
                double p = s.exponent(), rp = std::pow(r, p);
                double radial = 2.0 * s.cutoff.d1(r) * p * rp / r + rp * s.cutoff.laplacian(r);
                F += wr * radial * (k * s.ytilde.integral(0.0, a, true) + s.ytilde.integral(a, two_pi, false));
            }
    }
    // psi = (1-k) d_tau g~ + (1-k) sum d_tau(chi_i) g_lead; the second part lies outside every B_delta
    double lead = 0.0;
    for (int e = 0; e < poly.size(); ++e) {
        double L = poly.edge_length(e);
        for (int p = 0; p < 64; ++p)
            for (size_t q = 0; q < gl.nodes.size(); ++q) {
                double t = (p + gl.nodes[q]) / 64.0;
                Vec2 x = (1 - t) * poly.edge_start(e) + t * poly.edge_end(e);
                lead += L / 64.0 * gl.weights[q] * detail::lead_terms(sf, poly, e, x).second;
            }
    }
    lead *= (1 - k);
    auto loc = std::make_shared<const MeshLocator>(*u.mesh);
    auto g_tilde = [&](int e, double t) {
        Vec2 x = (1 - t) * poly.edge_start(e) + t * poly.edge_end(e);
        Vec2 tau = poly.tangent(e), nu = poly.normal(e);
        // one-sided gradients at points just inside and outside
        double eps = 1e-9;
        auto hm = loc->locate(x - eps * nu, 1, 1e-6), hp = loc->locate(x + eps * nu, 0, 1e-6);
        double dt = 0.5 * (u.gradient(hm.triangle).dot(tau) + u.gradient(hp.triangle).dot(tau));
        return h.normal_component(poly, e, t) * dt - detail::lead_terms(sf, poly, e, x).first;
    };
    std::vector<CompatibilityRow> rows;
    for (double d : deltas) {
        double ends = 0.0;
        for (int e = 0; e < poly.size(); ++e) {
            double L = poly.edge_length(e);
            double ts = d * sf[poly.wrap(e - 1)].cutoff.R / L, te = 1.0 - d * sf[poly.wrap(e)].cutoff.R / L;
            ends += g_tilde(e, te) - g_tilde(e, ts);
        }
        rows.push_back({d, F - (1 - k) * ends - lead});
    }
    return rows;
}

struct DeltaRow {
    double delta = 0.0;
    double vertex_term = 0.0;
    double singular_term = 0.0;
    double sum() const { return vertex_term + singular_term; }
};

/// Leading vertex terms of the excised identity at radius delta (relative to r_i), summed over vertices:
/// (k-1) sum [(h.nu) v_g d_tau u]_i from the forward expansion, and
/// - sum int_{dB_delta} sigma v_g d_r w_i by quadrature with the computed v_g.
inline std::vector<DeltaRow> delta_terms(const Contrast& contrast, const std::vector<SingularFunction>& sf,
                                         const FemField& vg, const std::vector<double>& deltas) {
    const double k = contrast.k();
    MeshLocator loc(*vg.mesh);
    const auto& gl = gauss_legendre(16);
    std::vector<DeltaRow> rows;
    for (double d : deltas) {
        DeltaRow row;
        row.delta = d;
        for (const auto& s : sf) {
            double r = d * s.cutoff.R;
            double vx = vg.values[vg.mesh->vertex_node[s.vertex]];
            double Am = s.y1.coeff[0], Bm = s.y1.coeff[1];
            double bracket = -s.beta * s.gamma * vx * (s.h_minus * (Am * s.c1 + Bm * s.s1) + s.h_plus * Am) * std::pow(r, s.gamma - 1);
            row.vertex_term += (k - 1) * bracket;
            double a = s.ytilde.alpha;
            double circ = 0.0;
            for (int side = 0; side < 2; ++side) {
                double lo = side == 0 ? 0.0 : a, hi = side == 0 ? a : two_pi;
                for (int p = 0; p < 16; ++p)
                    for (size_t q = 0; q < gl.nodes.size(); ++q) {
                        double th = lo + (hi - lo) * (p + gl.nodes[q]) / 16.0;
                        double w = (hi - lo) / 16.0 * gl.weights[q] * r;
                        int region = side == 0 ? 1 : 0;
                        Vec2 x = s.origin + r * Vec2(std::cos(s.frame + th), std::sin(s.frame + th));
                        auto hit = loc.locate(x, region, 1e-6);
                        double v = hit.triangle >= 0 ? vg.at(hit.triangle, hit.bary) : vx;
                        double dr = s.exponent() * s.ytilde.value(th, side == 0) * std::pow(r, s.exponent() - 1);
                        circ += w * (side == 0 ? k : 1.0) * v * dr;
                    }
            }
            row.singular_term -= circ;
        }
        rows.push_back(row);
    }
    return rows;
}

struct TraceIdentity {
    double lhs = 0.0;  // <w, g> on the outer boundary
    double rhs = 0.0;  // interface pairing
    double residual() const { return lhs - rhs; }
    double relative() const { return std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-300); }
};

inline TraceIdentity verify_trace_identity(const SplitSolution& w, const BoundaryFunction& g, double pairing) {
    return {w.trace.inner(g), pairing};
}

/// Full enriched route: fitted betas, sources, solve.
inline SplitSolution transmission_route(const FemSystem& sys, const Polygon& poly, const FemField& u, const PerturbationField& h,
                                        const CornerSpectrum& spec, std::vector<CornerFit>* fits_out = nullptr) {
    auto fits = estimate_all_betas(u, poly, spec);
    std::vector<double> betas;
    for (const auto& f : fits) betas.push_back(f.beta_hat);
    if (fits_out) *fits_out = fits;
    auto S = assemble_sources(sys, poly, u, spec, h, betas, &fits);
    return solve_transmission(sys, S);
}

}  // namespace polyshape
