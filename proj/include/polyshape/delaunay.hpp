#pragma once

#include "polyshape/core.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <unordered_map>
#include <vector>

namespace polyshape {

namespace predicates {

// Double-precision evaluation with a static error filter; ambiguous cases are
// re-evaluated in quad precision.
inline double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
    double detl = (a.x() - c.x()) * (b.y() - c.y());
    double detr = (a.y() - c.y()) * (b.x() - c.x());
    double det = detl - detr;
    double bound = 3.4e-16 * (std::abs(detl) + std::abs(detr));
    if (std::abs(det) > bound) return det;
    using Q = __float128;
    Q ax = a.x(), ay = a.y(), bx = b.x(), by = b.y(), cx = c.x(), cy = c.y();
    Q q = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx);
    return static_cast<double>(q);
}

/// Positive when d lies inside the circumcircle of the counterclockwise triangle abc.
inline double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    double adx = a.x() - d.x(), ady = a.y() - d.y();
    double bdx = b.x() - d.x(), bdy = b.y() - d.y();
    double cdx = c.x() - d.x(), cdy = c.y() - d.y();
    double alift = adx * adx + ady * ady;
    double blift = bdx * bdx + bdy * bdy;
    double clift = cdx * cdx + cdy * cdy;
    double t1 = bdx * cdy - cdx * bdy;
    double t2 = cdx * ady - adx * cdy;
    double t3 = adx * bdy - bdx * ady;
    double det = alift * t1 + blift * t2 + clift * t3;
    double perm = (std::abs(bdx * cdy) + std::abs(cdx * bdy)) * alift +
                  (std::abs(cdx * ady) + std::abs(adx * cdy)) * blift +
                  (std::abs(adx * bdy) + std::abs(bdx * ady)) * clift;
    if (std::abs(det) > 1.2e-15 * perm) return det;
    using Q = __float128;
    Q qadx = Q(a.x()) - Q(d.x()), qady = Q(a.y()) - Q(d.y());
    Q qbdx = Q(b.x()) - Q(d.x()), qbdy = Q(b.y()) - Q(d.y());
    Q qcdx = Q(c.x()) - Q(d.x()), qcdy = Q(c.y()) - Q(d.y());
    Q q = (qadx * qadx + qady * qady) * (qbdx * qcdy - qcdx * qbdy) +
          (qbdx * qbdx + qbdy * qbdy) * (qcdx * qady - qadx * qcdy) +
          (qcdx * qcdx + qcdy * qcdy) * (qadx * qbdy - qbdx * qady);
    return static_cast<double>(q);
}

}  // namespace predicates

/// Incremental Bowyer-Watson Delaunay triangulation of a point set.
/// Output triangles are counterclockwise and reference input indices.
class DelaunayTriangulator {
public:
    std::vector<std::array<int, 3>> triangulate(const std::vector<Vec2>& input) {
        points_ = input;
        int n = static_cast<int>(points_.size());
        tris_.clear();
        if (n < 3) return {};

        Vec2 lo = points_[0], hi = points_[0];
        for (const auto& p : points_) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        Vec2 mid = 0.5 * (lo + hi);
        double span = std::max(hi.x() - lo.x(), hi.y() - lo.y()) + 1e-12;
        points_.push_back(mid + Vec2(-20.0 * span, -20.0 * span));
        points_.push_back(mid + Vec2(20.0 * span, -20.0 * span));
        points_.push_back(mid + Vec2(0.0, 20.0 * span));
        tris_.push_back({{n, n + 1, n + 2}, {-1, -1, -1}, true});

        std::vector<int> order = hilbert_order(input, lo, hi);
        int last = 0;
        for (int idx : order) last = insert(idx, last);

        std::vector<std::array<int, 3>> out;
        out.reserve(tris_.size());
        for (const auto& t : tris_) {
            if (!t.alive) continue;
            if (t.v[0] >= n || t.v[1] >= n || t.v[2] >= n) continue;
            out.push_back(t.v);
        }
        return out;
    }

private:
    struct Tri {
        std::array<int, 3> v;
        std::array<int, 3> nb;  // nb[k] is across the edge opposite v[k]
        bool alive;
    };

    std::vector<Vec2> points_;
    std::vector<Tri> tris_;
    std::vector<int> free_;
    std::vector<int> stamp_;
    int epoch_ = 0;

    static std::vector<int> hilbert_order(const std::vector<Vec2>& pts, const Vec2& lo, const Vec2& hi) {
        const int bits = 16;
        const uint32_t side = 1u << bits;
        Vec2 ext = (hi - lo).cwiseMax(Vec2(1e-300, 1e-300));
        std::vector<uint64_t> key(pts.size());
        for (size_t i = 0; i < pts.size(); ++i) {
            uint32_t x = static_cast<uint32_t>(std::min<double>(side - 1, (pts[i].x() - lo.x()) / ext.x() * (side - 1)));
            uint32_t y = static_cast<uint32_t>(std::min<double>(side - 1, (pts[i].y() - lo.y()) / ext.y() * (side - 1)));
            uint64_t d = 0;
            for (uint32_t s = side / 2; s > 0; s /= 2) {
                uint32_t rx = (x & s) > 0, ry = (y & s) > 0;
                d += static_cast<uint64_t>(s) * s * ((3 * rx) ^ ry);
                if (ry == 0) {
                    if (rx == 1) {
                        x = s - 1 - x;
                        y = s - 1 - y;
                    }
                    std::swap(x, y);
                }
            }
            key[i] = d;
        }
        std::vector<int> order(pts.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key[a] < key[b]; });
        return order;
    }

    bool in_circle(int t, const Vec2& p) const {
        const auto& v = tris_[t].v;
        return predicates::incircle(points_[v[0]], points_[v[1]], points_[v[2]], p) > 0.0;
    }

    int locate(const Vec2& p, int start) const {
        int t = start;
        if (!tris_[t].alive) {
            t = 0;
            while (!tris_[t].alive) ++t;
        }
        for (size_t steps = 0; steps < 4 * tris_.size() + 16; ++steps) {
            const auto& tri = tris_[t];
            bool moved = false;
            for (int k = 0; k < 3; ++k) {
                const Vec2& a = points_[tri.v[(k + 1) % 3]];
                const Vec2& b = points_[tri.v[(k + 2) % 3]];
                if (predicates::orient2d(a, b, p) < 0.0 && tri.nb[k] >= 0) {
                    t = tri.nb[k];
                    moved = true;
                    break;
                }
            }
            if (!moved) return t;
        }
        // walk failed to terminate (degenerate cycling): fall back to exhaustive search
        for (int s = 0; s < static_cast<int>(tris_.size()); ++s) {
            if (!tris_[s].alive) continue;
            const auto& v = tris_[s].v;
            if (predicates::orient2d(points_[v[0]], points_[v[1]], p) >= 0 &&
                predicates::orient2d(points_[v[1]], points_[v[2]], p) >= 0 &&
                predicates::orient2d(points_[v[2]], points_[v[0]], p) >= 0)
                return s;
        }
        throw Error(ErrorKind::MeshFailure, "point location failed");
    }

    int new_tri(const Tri& t) {
        if (!free_.empty()) {
            int id = free_.back();
            free_.pop_back();
            tris_[id] = t;
            return id;
        }
        tris_.push_back(t);
        return static_cast<int>(tris_.size()) - 1;
    }

    int insert(int pi, int hint) {
        const Vec2& p = points_[pi];
        int t0 = locate(p, hint);
        if (stamp_.size() < tris_.size()) stamp_.resize(tris_.size() * 2 + 16, 0);
        ++epoch_;

        // cavity: connected set of triangles whose circumcircle contains p
        std::vector<int> cavity = {t0};
        stamp_[t0] = epoch_;
        for (size_t k = 0; k < cavity.size(); ++k) {
            for (int nb : tris_[cavity[k]].nb) {
                if (nb < 0 || stamp_[nb] == epoch_) continue;
                if (in_circle(nb, p)) {
                    stamp_[nb] = epoch_;
                    cavity.push_back(nb);
                }
            }
        }

        // boundary edges (a, b, outside neighbour); shrink the cavity until star-shaped
        struct BEdge {
            int a, b, outside, inside;
        };
        std::vector<BEdge> boundary;
        for (int guard = 0;; ++guard) {
            boundary.clear();
            int bad = -1;
            for (int t : cavity) {
                if (stamp_[t] != epoch_) continue;
                const auto& tri = tris_[t];
                for (int k = 0; k < 3; ++k) {
                    int nb = tri.nb[k];
                    if (nb >= 0 && stamp_[nb] == epoch_) continue;
                    int a = tri.v[(k + 1) % 3], b = tri.v[(k + 2) % 3];
                    if (predicates::orient2d(points_[a], points_[b], p) <= 0.0 && t != t0) bad = t;
                    boundary.push_back({a, b, nb, t});
                }
            }
            if (bad < 0 || guard > 1000) break;
            stamp_[bad] = 0;
        }
        std::vector<int> kept;
        for (int t : cavity)
            if (stamp_[t] == epoch_) kept.push_back(t);

        for (int t : kept) {
            tris_[t].alive = false;
            free_.push_back(t);
        }

        int first = -1;
        std::vector<int> created;
        created.reserve(boundary.size());
        for (const auto& e : boundary) {
            Tri t{{pi, e.a, e.b}, {e.outside, -1, -1}, true};
            int id = new_tri(t);
            if (stamp_.size() < tris_.size()) stamp_.resize(tris_.size() * 2 + 16, 0);
            stamp_[id] = 0;
            created.push_back(id);
            if (e.outside >= 0) {
                auto& o = tris_[e.outside];
                for (int k = 0; k < 3; ++k) {
                    int a = o.v[(k + 1) % 3], b = o.v[(k + 2) % 3];
                    if ((a == e.b && b == e.a)) o.nb[k] = id;
                }
            }
            if (first < 0) first = id;
        }
        // link the fan: the edge (p, a) is opposite b (index 2), the edge (b, p) is opposite a (index 1)
        std::unordered_map<int, int> by_start, by_end;
        for (int id : created) {
            by_start[tris_[id].v[1]] = id;
            by_end[tris_[id].v[2]] = id;
        }
        for (int id : created) {
            auto& t = tris_[id];
            auto it = by_start.find(t.v[2]);
            if (it != by_start.end()) t.nb[1] = it->second;
            auto jt = by_end.find(t.v[1]);
            if (jt != by_end.end()) t.nb[2] = jt->second;
        }
        return first;
    }
};

}  // namespace polyshape
