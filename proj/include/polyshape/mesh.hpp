#pragma once

#include "polyshape/delaunay.hpp"
#include "polyshape/extension.hpp"
#include "polyshape/geometry.hpp"

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace polyshape {

struct MeshOptions {
    double hmax = 0.05;
    double grading = 1.0;  // geometric ratio toward each vertex, in (0,1]
    int levels = 0;        // number of grading levels; smallest size hmax * grading^levels
    bool duplicate_interface = false;
    std::uint64_t seed = 1;
    // fan radius in units of hmax (capped by the cut-off radius r_i)
    double fan_factor = 8.0;
    int smoothing_sweeps = 3;
    // conform to the extension buffer segments so that H is smooth on every element
    std::shared_ptr<const ExtensionBuffers> buffers;
};

struct InterfaceEdge {
    int a = -1, b = -1;              // minus-side nodes, ordered along the polygon edge
    int a_plus = -1, b_plus = -1;    // plus-side nodes (equal to a, b unless duplicated)
    int edge = 0;                    // polygon edge index
    double ta = 0.0, tb = 0.0;       // positions along the polygon edge, in [0, 1]
    int tri_minus = -1, tri_plus = -1;
};

struct GradingDescriptor {
    double ratio = 1.0;
    int levels = 0;
    double fan_radius = 0.0;
    double smallest_size = 0.0;
};

/// Interface-conforming triangulation of the outer domain. Region 1 is the inclusion,
/// region 0 its complement.
struct Mesh {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> region;
    std::vector<int> quad;  // buffer quadrangle containing each triangle, or -1
    std::vector<InterfaceEdge> interface;
    std::vector<int> boundary_nodes;  // counterclockwise loop on the outer boundary
    std::vector<double> boundary_arc;
    std::vector<int> vertex_node;  // node at each polygon vertex (minus side)
    std::vector<std::pair<int, int>> twins;  // (minus node, plus node)
    std::vector<int> dof;  // continuous numbering: twins share the minus node's index
    std::vector<GradingDescriptor> grading;
    double hmax = 0.0;
    int polygon_size = 0;

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }
    bool duplicated() const { return !twins.empty(); }

    double area(int t) const {
        const auto& v = triangles[t];
        return 0.5 * cross(nodes[v[1]] - nodes[v[0]], nodes[v[2]] - nodes[v[0]]);
    }

    Vec2 centroid(int t) const {
        const auto& v = triangles[t];
        return (nodes[v[0]] + nodes[v[1]] + nodes[v[2]]) / 3.0;
    }

    /// Gradients of the three barycentric hat functions on triangle t.
    std::array<Vec2, 3> hat_gradients(int t) const {
        const auto& v = triangles[t];
        double twice = 2.0 * area(t);
        std::array<Vec2, 3> g;
        for (int k = 0; k < 3; ++k) {
            const Vec2& p = nodes[v[(k + 1) % 3]];
            const Vec2& q = nodes[v[(k + 2) % 3]];
            g[k] = Vec2(p.y() - q.y(), q.x() - p.x()) / twice;
        }
        return g;
    }

    double min_angle(int t) const {
        const auto& v = triangles[t];
        double best = pi;
        for (int k = 0; k < 3; ++k) {
            Vec2 a = nodes[v[(k + 1) % 3]] - nodes[v[k]];
            Vec2 b = nodes[v[(k + 2) % 3]] - nodes[v[k]];
            best = std::min(best, std::atan2(std::abs(cross(a, b)), a.dot(b)));
        }
        return best;
    }

    double boundary_length() const {
        double s = 0.0;
        int m = static_cast<int>(boundary_nodes.size());
        for (int k = 0; k < m; ++k) s += (nodes[boundary_nodes[(k + 1) % m]] - nodes[boundary_nodes[k]]).norm();
        return s;
    }

    /// Interface node table: every node lying on the polygon boundary (minus side).
    std::vector<int> interface_nodes() const {
        std::vector<char> seen(nodes.size(), 0);
        std::vector<int> out;
        for (const auto& e : interface)
            for (int a : {e.a, e.b})
                if (!seen[a]) {
                    seen[a] = 1;
                    out.push_back(a);
                }
        return out;
    }
};

namespace detail {

struct SizingField {
    std::vector<Vec2> vertices;
    std::vector<double> rho;
    double hmax = 0.0;
    double floor = 1.0;

    double operator()(const Vec2& x) const {
        double s = 1.0;
        for (size_t i = 0; i < vertices.size(); ++i)
            s = std::min(s, std::clamp((x - vertices[i]).norm() / rho[i], floor, 1.0));
        return hmax * s;
    }

    // lower bound of the sizing over an axis-aligned box
    double box_min(const Vec2& lo, const Vec2& hi) const {
        double s = 1.0;
        for (size_t i = 0; i < vertices.size(); ++i) {
            Vec2 c = vertices[i].cwiseMax(lo).cwiseMin(hi);
            s = std::min(s, std::clamp((c - vertices[i]).norm() / rho[i], floor, 1.0));
        }
        return hmax * s;
    }
};

// Interior sample positions on a segment with spacing following the sizing field.
inline std::vector<Vec2> sample_segment(const Vec2& a, const Vec2& b, const SizingField& size, double factor) {
    const int m = 4000;
    std::vector<double> t(m + 1), cum(m + 1, 0.0);
    for (int j = 0; j <= m; ++j) t[j] = 0.5 * (1.0 - std::cos(pi * j / m));
    double len = (b - a).norm();
    auto inv = [&](double tt) { return 1.0 / (factor * size(a + tt * (b - a))); };
    double prev = inv(0.0);
    for (int j = 1; j <= m; ++j) {
        double cur = inv(t[j]);
        cum[j] = cum[j - 1] + 0.5 * (prev + cur) * (t[j] - t[j - 1]) * len;
        prev = cur;
    }
    int n = std::max(1, static_cast<int>(std::lround(cum[m])));
    std::vector<Vec2> pts;
    int j = 0;
    for (int k = 1; k < n; ++k) {
        double target = cum[m] * k / n;
        while (cum[j + 1] < target) ++j;
        double w = (target - cum[j]) / (cum[j + 1] - cum[j]);
        double tt = t[j] + w * (t[j + 1] - t[j]);
        pts.push_back(a + tt * (b - a));
    }
    return pts;
}

inline std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

struct Chain {
    std::vector<int> ids;
    int kind = 0;  // 0 polygon edge, 1 buffer, 2 outer boundary
    int edge = -1;
};

}  // namespace detail

/// Bucket grid for locating points in a mesh.
class MeshLocator {
public:
    explicit MeshLocator(const Mesh& mesh) : mesh_(&mesh) {
        lo_ = hi_ = mesh.nodes[0];
        for (const auto& p : mesh.nodes) {
            lo_ = lo_.cwiseMin(p);
            hi_ = hi_.cwiseMax(p);
        }
        int nt = mesh.num_triangles();
        Vec2 ext = hi_ - lo_;
        double cell = std::sqrt(ext.x() * ext.y() / std::max(1, nt / 2));
        nx_ = std::max(1, static_cast<int>(ext.x() / cell));
        ny_ = std::max(1, static_cast<int>(ext.y() / cell));
        cells_.assign(static_cast<size_t>(nx_) * ny_, {});
        for (int t = 0; t < nt; ++t) {
            const auto& v = mesh.triangles[t];
            Vec2 a = mesh.nodes[v[0]].cwiseMin(mesh.nodes[v[1]]).cwiseMin(mesh.nodes[v[2]]);
            Vec2 b = mesh.nodes[v[0]].cwiseMax(mesh.nodes[v[1]]).cwiseMax(mesh.nodes[v[2]]);
            auto [i0, j0] = cell_of(a);
            auto [i1, j1] = cell_of(b);
            for (int i = i0; i <= i1; ++i)
                for (int j = j0; j <= j1; ++j) cells_[static_cast<size_t>(j) * nx_ + i].push_back(t);
        }
    }

    struct Hit {
        int triangle = -1;
        std::array<double, 3> bary{0.0, 0.0, 0.0};
    };

    /// Triangle containing p; with region >= 0 only triangles of that region are accepted.
    Hit locate(const Vec2& p, int region = -1, double tol = 1e-10) const {
        auto [i, j] = cell_of(p);
        Hit best;
        double best_min = -std::numeric_limits<double>::infinity();
        for (int t : cells_[static_cast<size_t>(j) * nx_ + i]) {
            if (region >= 0 && mesh_->region[t] != region) continue;
            auto b = barycentric(t, p);
            double mn = std::min({b[0], b[1], b[2]});
            if (mn > best_min) {
                best_min = mn;
                best.triangle = t;
                best.bary = b;
            }
        }
        if (best_min < -tol) best.triangle = -1;
        return best;
    }

    std::array<double, 3> barycentric(int t, const Vec2& p) const {
        const auto& v = mesh_->triangles[t];
        const Vec2& a = mesh_->nodes[v[0]];
        const Vec2& b = mesh_->nodes[v[1]];
        const Vec2& c = mesh_->nodes[v[2]];
        double det = cross(b - a, c - a);
        double l1 = cross(p - a, c - a) / det;
        double l2 = cross(b - a, p - a) / det;
        return {1.0 - l1 - l2, l1, l2};
    }

private:
    const Mesh* mesh_;
    Vec2 lo_, hi_;
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<int>> cells_;

    std::pair<int, int> cell_of(const Vec2& p) const {
        Vec2 ext = (hi_ - lo_).cwiseMax(Vec2(1e-300, 1e-300));
        int i = static_cast<int>((p.x() - lo_.x()) / ext.x() * nx_);
        int j = static_cast<int>((p.y() - lo_.y()) / ext.y() * ny_);
        return {std::clamp(i, 0, nx_ - 1), std::clamp(j, 0, ny_ - 1)};
    }
};

namespace detail {

// Fills interface edges, boundary loop, vertex nodes and optional twins from the
// constraint chains of a freshly triangulated mesh.
inline void finish_mesh(Mesh& mesh, const Polygon& poly, const OuterDomain& outer, const std::vector<Chain>& chains,
                        bool duplicate) {
    std::unordered_map<std::uint64_t, std::array<int, 2>> edge_tris;
    edge_tris.reserve(mesh.triangles.size() * 2);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& v = mesh.triangles[t];
        for (int k = 0; k < 3; ++k) {
            auto key = edge_key(v[(k + 1) % 3], v[(k + 2) % 3]);
            auto it = edge_tris.find(key);
            if (it == edge_tris.end())
                edge_tris.emplace(key, std::array<int, 2>{t, -1});
            else
                it->second[1] = t;
        }
    }

    mesh.vertex_node.assign(poly.size(), -1);
    mesh.interface.clear();
    for (const auto& ch : chains) {
        if (ch.kind != 0) continue;
        const Vec2 a = poly.edge_start(ch.edge);
        const Vec2 b = poly.edge_end(ch.edge);
        double len2 = (b - a).squaredNorm();
        mesh.vertex_node[poly.wrap(ch.edge - 1)] = ch.ids.front();
        mesh.vertex_node[poly.wrap(ch.edge)] = ch.ids.back();
        for (size_t k = 0; k + 1 < ch.ids.size(); ++k) {
            InterfaceEdge ie;
            ie.a = ch.ids[k];
            ie.b = ch.ids[k + 1];
            ie.a_plus = ie.a;
            ie.b_plus = ie.b;
            ie.edge = poly.wrap(ch.edge);
            ie.ta = (mesh.nodes[ie.a] - a).dot(b - a) / len2;
            ie.tb = (mesh.nodes[ie.b] - a).dot(b - a) / len2;
            auto it = edge_tris.find(edge_key(ie.a, ie.b));
            if (it == edge_tris.end() || it->second[1] < 0)
                throw Error(ErrorKind::MeshFailure, "interface segment is not an interior mesh edge");
            for (int t : it->second) {
                if (mesh.region[t] == 1)
                    ie.tri_minus = t;
                else
                    ie.tri_plus = t;
            }
            if (ie.tri_minus < 0 || ie.tri_plus < 0)
                throw Error(ErrorKind::MeshFailure, "interface edge without one triangle per side");
            mesh.interface.push_back(ie);
        }
    }

    mesh.boundary_nodes.clear();
    for (const auto& ch : chains) {
        if (ch.kind != 2) continue;
        mesh.boundary_nodes.assign(ch.ids.begin(), ch.ids.end() - 1);  // closed chain
        for (size_t k = 0; k + 1 < ch.ids.size(); ++k)
            if (edge_tris.find(edge_key(ch.ids[k], ch.ids[k + 1])) == edge_tris.end())
                throw Error(ErrorKind::MeshFailure, "outer boundary segment is not a mesh edge");
    }
    // rotate so that the loop starts at the smallest arc-length coordinate
    mesh.boundary_arc.clear();
    for (int id : mesh.boundary_nodes) mesh.boundary_arc.push_back(outer.arc_length_of(mesh.nodes[id]));
    auto first = std::min_element(mesh.boundary_arc.begin(), mesh.boundary_arc.end()) - mesh.boundary_arc.begin();
    std::rotate(mesh.boundary_nodes.begin(), mesh.boundary_nodes.begin() + first, mesh.boundary_nodes.end());
    std::rotate(mesh.boundary_arc.begin(), mesh.boundary_arc.begin() + first, mesh.boundary_arc.end());

    mesh.dof.resize(mesh.nodes.size());
    std::iota(mesh.dof.begin(), mesh.dof.end(), 0);
    mesh.twins.clear();
    if (!duplicate) return;

    std::vector<int> twin(mesh.nodes.size(), -1);
    for (int a : mesh.interface_nodes()) {
        twin[a] = static_cast<int>(mesh.nodes.size());
        mesh.nodes.push_back(mesh.nodes[a]);
        mesh.dof.push_back(a);
        mesh.twins.push_back({a, twin[a]});
    }
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        if (mesh.region[t] == 1) continue;
        for (int& v : mesh.triangles[t])
            if (twin[v] >= 0) v = twin[v];
    }
    for (auto& ie : mesh.interface) {
        ie.a_plus = twin[ie.a];
        ie.b_plus = twin[ie.b];
    }
}

}  // namespace detail

/// Interface-conforming, corner-graded triangulation of the outer domain.
inline Mesh generate_mesh(const Polygon& poly, const OuterDomain& outer, const MeshOptions& opt) {
    if (!(opt.hmax > 0.0)) throw Error(ErrorKind::MeshFailure, "hmax must be positive");
    if (!(opt.grading > 0.0 && opt.grading <= 1.0)) throw Error(ErrorKind::MeshFailure, "grading must lie in (0,1]");
    const int n = poly.size();
    const double h = opt.hmax;

    detail::SizingField size;
    size.hmax = h;
    size.vertices = poly.vertices();
    bool graded = opt.grading < 1.0 && opt.levels > 0;
    size.floor = graded ? std::pow(opt.grading, opt.levels) : 1.0;
    std::vector<GradingDescriptor> grading(n);
    for (int i = 0; i < n; ++i) {
        double rho = graded ? std::min(poly.cutoff_radius(i), opt.fan_factor * h) : h;
        size.rho.push_back(rho);
        grading[i] = {opt.grading, graded ? opt.levels : 0, graded ? rho : 0.0, h * size.floor};
    }

    std::vector<Vec2> pts;
    std::map<std::pair<double, double>, int> registry;
    auto add_point = [&](const Vec2& p) {
        auto key = std::make_pair(p.x(), p.y());
        auto it = registry.find(key);
        if (it != registry.end()) return it->second;
        int id = static_cast<int>(pts.size());
        pts.push_back(p);
        registry.emplace(key, id);
        return id;
    };

    // constraint chains: polygon edges, buffer segments, outer boundary
    const double seg_factor = 0.8;
    std::vector<detail::Chain> chains;
    std::vector<std::pair<Vec2, Vec2>> segments;
    auto add_chain = [&](const Vec2& a, const Vec2& b, int kind, int edge) {
        detail::Chain ch;
        ch.kind = kind;
        ch.edge = edge;
        ch.ids.push_back(add_point(a));
        for (const auto& p : detail::sample_segment(a, b, size, seg_factor)) ch.ids.push_back(add_point(p));
        ch.ids.push_back(add_point(b));
        chains.push_back(std::move(ch));
        segments.push_back({a, b});
    };
    for (int e = 0; e < n; ++e) add_chain(poly.edge_start(e), poly.edge_end(e), 0, e);
    if (opt.buffers)
        for (const auto& [a, b] : opt.buffers->constraint_segments()) add_chain(a, b, 1, -1);

    {
        detail::Chain ch;
        ch.kind = 2;
        for (const auto& p : outer.sample_boundary(seg_factor * h)) ch.ids.push_back(add_point(p));
        ch.ids.push_back(ch.ids.front());
        chains.push_back(std::move(ch));
    }
    const int num_constrained = static_cast<int>(pts.size());

    // free points: jittered quadtree leaf centres
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    Vec2 lo(-1, -1), hi(1, 1);
    {
        auto bd = outer.sample_boundary(h);
        lo = hi = bd[0];
        for (const auto& p : bd) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
    }
    double root = std::max(hi.x() - lo.x(), hi.y() - lo.y());
    struct Cell {
        Vec2 lo;
        double w;
    };
    std::vector<Cell> stack = {{lo, root}};
    while (!stack.empty()) {
        Cell c = stack.back();
        stack.pop_back();
        Vec2 chi = c.lo + Vec2(c.w, c.w);
        Vec2 mid = c.lo + 0.5 * Vec2(c.w, c.w);
        if (outer.clearance(mid) < -0.75 * c.w) continue;
        if (c.w > size.box_min(c.lo, chi)) {
            double hw = 0.5 * c.w;
            stack.push_back({c.lo, hw});
            stack.push_back({c.lo + Vec2(hw, 0), hw});
            stack.push_back({c.lo + Vec2(0, hw), hw});
            stack.push_back({c.lo + Vec2(hw, hw), hw});
            continue;
        }
        Vec2 p = mid + c.w * Vec2(jitter(rng), jitter(rng));
        double s = size(p);
        if (outer.clearance(p) < 0.55 * s) continue;
        bool near = false;
        for (const auto& [a, b] : segments)
            if (point_segment_distance(p, a, b) < 0.55 * s) {
                near = true;
                break;
            }
        if (!near) pts.push_back(p);
    }
    const int num_real_initial = static_cast<int>(pts.size());
    (void)num_real_initial;

    // ghost ring outside the outer boundary keeps the hull away from the domain
    auto ghosts_for = [&]() {
        std::vector<Vec2> g;
        for (const auto& p : outer.sample_boundary(h)) {
            Vec2 out;
            if (outer.kind() == OuterDomain::Kind::Disk) {
                Vec2 d = p - outer.center();
                out = p + 1.2 * h * d.normalized();
            } else {
                Vec2 c = 0.5 * (outer.lo() + outer.hi());
                Vec2 d = p - c;
                Vec2 half = 0.5 * (outer.hi() - outer.lo());
                Vec2 dir(std::abs(std::abs(d.x()) - half.x()) < 1e-12 ? (d.x() > 0 ? 1.0 : -1.0) : 0.0,
                         std::abs(std::abs(d.y()) - half.y()) < 1e-12 ? (d.y() > 0 ? 1.0 : -1.0) : 0.0);
                out = p + 1.2 * h * dir.normalized();
            }
            g.push_back(out);
        }
        return g;
    };
    const std::vector<Vec2> ghosts = ghosts_for();

    std::vector<char> fixed(pts.size(), 0);
    for (int k = 0; k < num_constrained; ++k) fixed[k] = 1;

    DelaunayTriangulator dt;
    std::vector<std::array<int, 3>> tris;
    auto triangulate = [&]() {
        std::vector<Vec2> all = pts;
        all.insert(all.end(), ghosts.begin(), ghosts.end());
        auto raw = dt.triangulate(all);
        tris.clear();
        int nreal = static_cast<int>(pts.size());
        for (const auto& t : raw)
            if (t[0] < nreal && t[1] < nreal && t[2] < nreal) tris.push_back(t);
    };
    auto enforce_conformity = [&]() {
        for (int round = 0; round < 40; ++round) {
            triangulate();
            std::unordered_set<std::uint64_t> edges;
            edges.reserve(tris.size() * 3);
            for (const auto& t : tris)
                for (int k = 0; k < 3; ++k) edges.insert(detail::edge_key(t[k], t[(k + 1) % 3]));
            bool missing = false;
            for (auto& ch : chains) {
                std::vector<int> next = {ch.ids.front()};
                for (size_t k = 0; k + 1 < ch.ids.size(); ++k) {
                    int a = ch.ids[k], b = ch.ids[k + 1];
                    if (!edges.count(detail::edge_key(a, b))) {
                        missing = true;
                        Vec2 m = 0.5 * (pts[a] + pts[b]);
                        if (ch.kind == 2) {
                            double sa = outer.arc_length_of(pts[a]), sb = outer.arc_length_of(pts[b]);
                            if (sb < sa) sb += outer.perimeter();
                            m = outer.point_at(0.5 * (sa + sb));
                        }
                        // free points too close to the new constraint point are dropped
                        int id = static_cast<int>(pts.size());
                        pts.push_back(m);
                        fixed.push_back(1);
                        next.push_back(id);
                    }
                    next.push_back(b);
                }
                ch.ids = std::move(next);
            }
            if (!missing) return;
        }
        throw Error(ErrorKind::MeshFailure, "constraint recovery did not converge");
    };
    enforce_conformity();

    // Laplacian smoothing of free points, keeping every incident triangle positive
    for (int sweep = 0; sweep < opt.smoothing_sweeps; ++sweep) {
        int np = static_cast<int>(pts.size());
        std::vector<std::vector<int>> node_tris(np);
        for (int t = 0; t < static_cast<int>(tris.size()); ++t)
            for (int v : tris[t]) node_tris[v].push_back(t);
        for (int v = 0; v < np; ++v) {
            if (fixed[v] || node_tris[v].empty()) continue;
            Vec2 sum = Vec2::Zero();
            int cnt = 0;
            for (int t : node_tris[v])
                for (int w : tris[t])
                    if (w != v) {
                        sum += pts[w];
                        ++cnt;
                    }
            Vec2 old = pts[v];
            pts[v] = sum / cnt;
            for (int t : node_tris[v]) {
                const auto& tv = tris[t];
                if (predicates::orient2d(pts[tv[0]], pts[tv[1]], pts[tv[2]]) <= 0.0) {
                    pts[v] = old;
                    break;
                }
            }
        }
        enforce_conformity();
    }

    // drop unused points and renumber
    Mesh mesh;
    mesh.hmax = h;
    mesh.polygon_size = n;
    mesh.grading = grading;
    std::vector<int> used(pts.size(), -1);
    for (const auto& t : tris)
        for (int v : t) used[v] = 0;
    for (const auto& ch : chains)
        for (int v : ch.ids) used[v] = 0;
    for (size_t v = 0; v < pts.size(); ++v)
        if (used[v] == 0) {
            used[v] = static_cast<int>(mesh.nodes.size());
            mesh.nodes.push_back(pts[v]);
        }
    for (auto t : tris) {
        for (int& v : t) v = used[v];
        mesh.triangles.push_back(t);
    }
    for (auto& ch : chains)
        for (int& v : ch.ids) v = used[v];

    mesh.region.resize(mesh.triangles.size());
    mesh.quad.assign(mesh.triangles.size(), -1);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        if (!(mesh.area(t) > 0.0)) throw Error(ErrorKind::MeshFailure, "non-positive triangle area");
        Vec2 c = mesh.centroid(t);
        mesh.region[t] = poly.contains(c) ? 1 : 0;
        if (opt.buffers) mesh.quad[t] = opt.buffers->locate(c);
    }
    detail::finish_mesh(mesh, poly, outer, chains, opt.duplicate_interface);
    return mesh;
}

/// Same topology with every node moved by t H(node). Used to mesh deformed domains
/// consistently with the reference mesh.
inline Mesh transport_mesh(const Mesh& mesh, const ExtensionField& H, double t) {
    Mesh out = mesh;
    for (auto& p : out.nodes) p += t * H.evaluate(p).value;
    for (int k = 0; k < out.num_triangles(); ++k)
        if (!(out.area(k) > 0.0)) throw Error(ErrorKind::DegeneratePerturbation, "transported mesh folds");
    return out;
}

/// Text format "polyshape-mesh v1".
inline void write_mesh(std::ostream& os, const Mesh& mesh) {
    os.precision(17);
    os << "polyshape-mesh v1\n";
    os << "nodes " << mesh.num_nodes() << "\n";
    for (int i = 0; i < mesh.num_nodes(); ++i) os << i << ' ' << mesh.nodes[i].x() << ' ' << mesh.nodes[i].y() << "\n";
    os << "triangles " << mesh.num_triangles() << "\n";
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& v = mesh.triangles[t];
        os << t << ' ' << v[0] << ' ' << v[1] << ' ' << v[2] << ' ' << mesh.region[t] << "\n";
    }
    os << "interface " << mesh.interface.size() << "\n";
    for (const auto& e : mesh.interface)
        os << e.a << ' ' << e.b << ' ' << e.a_plus << ' ' << e.b_plus << ' ' << e.edge << ' ' << e.ta << ' ' << e.tb
           << ' ' << e.tri_minus << ' ' << e.tri_plus << "\n";
    os << "boundary " << mesh.boundary_nodes.size() << "\n";
    for (size_t k = 0; k < mesh.boundary_nodes.size(); ++k)
        os << mesh.boundary_nodes[k] << ' ' << mesh.boundary_arc[k] << "\n";
}

inline Mesh read_mesh(std::istream& is) {
    Mesh mesh;
    std::string line, word;
    std::getline(is, line);
    if (line != "polyshape-mesh v1") throw Error(ErrorKind::MeshFailure, "bad mesh header");
    size_t count = 0;
    auto expect = [&](const char* name) {
        is >> word >> count;
        if (word != name) throw Error(ErrorKind::MeshFailure, std::string("expected block ") + name);
    };
    expect("nodes");
    mesh.nodes.resize(count);
    for (auto& p : mesh.nodes) {
        int idx;
        is >> idx >> p.x() >> p.y();
    }
    expect("triangles");
    mesh.triangles.resize(count);
    mesh.region.resize(count);
    mesh.quad.assign(count, -1);
    for (size_t t = 0; t < count; ++t) {
        int idx;
        is >> idx >> mesh.triangles[t][0] >> mesh.triangles[t][1] >> mesh.triangles[t][2] >> mesh.region[t];
    }
    expect("interface");
    mesh.interface.resize(count);
    for (auto& e : mesh.interface) is >> e.a >> e.b >> e.a_plus >> e.b_plus >> e.edge >> e.ta >> e.tb >> e.tri_minus >> e.tri_plus;
    expect("boundary");
    mesh.boundary_nodes.resize(count);
    mesh.boundary_arc.resize(count);
    for (size_t k = 0; k < count; ++k) is >> mesh.boundary_nodes[k] >> mesh.boundary_arc[k];
    if (!is) throw Error(ErrorKind::MeshFailure, "truncated mesh file");
    mesh.dof.resize(mesh.nodes.size());
    std::iota(mesh.dof.begin(), mesh.dof.end(), 0);
    for (const auto& e : mesh.interface) {
        if (e.a_plus != e.a) {
            mesh.dof[e.a_plus] = e.a;
            mesh.twins.push_back({e.a, e.a_plus});
        }
    }
    std::sort(mesh.twins.begin(), mesh.twins.end());
    mesh.twins.erase(std::unique(mesh.twins.begin(), mesh.twins.end()), mesh.twins.end());
    for (const auto& e : mesh.interface)
        if (e.b_plus != e.b && std::find(mesh.twins.begin(), mesh.twins.end(), std::make_pair(e.b, e.b_plus)) == mesh.twins.end()) {
            mesh.dof[e.b_plus] = e.b;
            mesh.twins.push_back({e.b, e.b_plus});
        }
    return mesh;
}

}  // namespace polyshape
