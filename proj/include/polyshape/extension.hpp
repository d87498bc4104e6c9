#pragma once

#include "polyshape/geometry.hpp"

#include <array>
#include <memory>

namespace polyshape {

/// Convex quadrangle with corners (edge start, edge end, buffer end, buffer start):
///   x = c(1-d) a + c d b + (1-c)(1-d) a1 + (1-c) d b1,  0 <= c, d <= 1.
/// c = 1 on the polygon edge a-b, c = 0 on the buffer edge a1-b1.
struct Quadrangle {
    int vertex = 0;  // polygon vertex index of corner a; b is vertex+1
    Vec2 a, b, a1, b1;

    Vec2 map(double c, double d) const {
        return c * (1 - d) * a + c * d * b + (1 - c) * (1 - d) * a1 + (1 - c) * d * b1;
    }

    Mat2 jacobian(double c, double d) const {
        Mat2 J;
        J.col(0) = (1 - d) * a + d * b - (1 - d) * a1 - d * b1;
        J.col(1) = c * (b - a) + (1 - c) * (b1 - a1);
        return J;
    }

    bool convex() const {
        std::array<Vec2, 4> p = {a, b, b1, a1};
        double s = 0.0;
        for (int k = 0; k < 4; ++k) {
            double z = cross(p[(k + 1) % 4] - p[k], p[(k + 2) % 4] - p[(k + 1) % 4]);
            if (std::abs(z) < 1e-14) return false;
            if (s == 0.0) s = z;
            if (z * s < 0.0) return false;
        }
        return true;
    }

    bool contains(const Vec2& p, double tol = 1e-12) const {
        std::array<Vec2, 4> q = {a, b, b1, a1};
        double sgn = 0.0;
        for (int k = 0; k < 4; ++k) {
            double z = cross(q[(k + 1) % 4] - q[k], p - q[k]);
            double len = (q[(k + 1) % 4] - q[k]).norm();
            if (std::abs(z) <= tol * len) continue;
            if (sgn == 0.0) sgn = z;
            if (z * sgn < 0.0) return false;
        }
        return true;
    }

    /// Inverse of the bilinear map by Newton iteration.
    std::pair<double, double> local(const Vec2& p) const {
        double c = 0.5, d = 0.5;
        for (int it = 0; it < 50; ++it) {
            Vec2 r = map(c, d) - p;
            Vec2 step = jacobian(c, d).partialPivLu().solve(r);
            c -= step.x();
            d -= step.y();
            if (step.norm() < 1e-15) break;
        }
        return {c, d};
    }
};

/// Inner and outer buffer polygons with their quadrangle decomposition. Depends only on
/// the polygon, so one instance serves every perturbation field.
class ExtensionBuffers {
public:
    const std::vector<Vec2>& inner() const { return inner_; }
    const std::vector<Vec2>& outer() const { return outer_; }
    const std::vector<Quadrangle>& quadrangles() const { return quads_; }
    double offset_fraction() const { return fraction_; }

    /// Smallest distance between a polygon edge and the opposite buffer edge.
    double min_width() const {
        double w = std::numeric_limits<double>::infinity();
        for (const auto& q : quads_) {
            w = std::min(w, point_segment_distance(q.a1, q.a, q.b));
            w = std::min(w, point_segment_distance(q.b1, q.a, q.b));
        }
        return w;
    }

    /// Index of the quadrangle containing p, or -1.
    int locate(const Vec2& p) const {
        for (int k = 0; k < static_cast<int>(quads_.size()); ++k)
            if (quads_[k].contains(p)) return k;
        return -1;
    }

    /// Segments of the buffer construction (buffer polygon edges and the vertex
    /// connectors), used as mesh constraints so that the extension is smooth per element.
    std::vector<std::pair<Vec2, Vec2>> constraint_segments() const {
        std::vector<std::pair<Vec2, Vec2>> segs;
        int n = static_cast<int>(inner_.size());
        for (int i = 0; i < n; ++i) {
            segs.push_back({inner_[i], inner_[(i + 1) % n]});
            segs.push_back({outer_[i], outer_[(i + 1) % n]});
            segs.push_back({vertices_[i], inner_[i]});
            segs.push_back({vertices_[i], outer_[i]});
        }
        return segs;
    }

    friend ExtensionBuffers build_buffers(const Polygon& poly, const OuterDomain& outer, double fraction);

private:
    std::vector<Vec2> vertices_;
    std::vector<Vec2> inner_;
    std::vector<Vec2> outer_;
    std::vector<Quadrangle> quads_;
    double fraction_ = 0.4;
};

namespace detail {

inline double interior_clearance(const Polygon& poly, int i) {
    double d = std::min(poly.edge_length(i), poly.edge_length(i + 1));
    for (int e = 0; e < poly.size(); ++e) {
        if (e == poly.wrap(i) || e == poly.wrap(i + 1)) continue;
        d = std::min(d, point_segment_distance(poly.vertex(i), poly.edge_start(e), poly.edge_end(e)));
    }
    return d;
}

inline bool loop_inside_polygon(const std::vector<Vec2>& loop, const Polygon& poly) {
    int n = static_cast<int>(loop.size());
    for (int i = 0; i < n; ++i) {
        if (!poly.contains(loop[i])) return false;
        for (int e = 0; e < poly.size(); ++e)
            if (segments_intersect(loop[i], loop[(i + 1) % n], poly.edge_start(e), poly.edge_end(e))) return false;
    }
    return true;
}

}  // namespace detail

/// Offsets every vertex along its interior and exterior angle bisector by `fraction` of
/// the local clearance. On failure the fraction is halved, up to five times.
inline ExtensionBuffers build_buffers(const Polygon& poly, const OuterDomain& outer, double fraction = 0.4) {
    int n = poly.size();
    for (int attempt = 0; attempt < 6; ++attempt, fraction *= 0.5) {
        ExtensionBuffers buf;
        buf.fraction_ = fraction;
        buf.vertices_ = poly.vertices();
        bool clearance_ok = true;
        for (int i = 0; i < n; ++i) {
            Vec2 t = (poly.vertex(i + 1) - poly.vertex(i)).normalized();
            double half = 0.5 * poly.angle(i);
            Vec2 bis(std::cos(half) * t.x() - std::sin(half) * t.y(), std::sin(half) * t.x() + std::cos(half) * t.y());
            double cin = detail::interior_clearance(poly, i);
            double cout = std::min(cin, outer.clearance(poly.vertex(i)));
            if (!(cin > 0.0) || !(cout > 0.0)) clearance_ok = false;
            buf.inner_.push_back(poly.vertex(i) + fraction * cin * bis);
            buf.outer_.push_back(poly.vertex(i) - fraction * cout * bis);
        }
        if (!clearance_ok) throw Error(ErrorKind::ClearanceTooSmall, "no room for buffer polygons");

        bool ok = polygon_is_simple(buf.inner_) && polygon_is_simple(buf.outer_);
        ok = ok && detail::loop_inside_polygon(buf.inner_, poly);
        for (int i = 0; ok && i < n; ++i) {
            if (!(outer.clearance(buf.outer_[i]) > 0.0)) ok = false;
            if (poly.contains(buf.outer_[i])) ok = false;
        }
        if (ok) {
            // the polygon must sit strictly between the buffers
            for (int i = 0; ok && i < n; ++i)
                for (int e = 0; e < n; ++e)
                    if (segments_intersect(buf.outer_[i], buf.outer_[(i + 1) % n], poly.edge_start(e), poly.edge_end(e)))
                        ok = false;
        }
        if (ok) {
            for (int i = 0; i < n; ++i) {
                int j = (i + 1) % n;
                Quadrangle qi{i, poly.vertex(i), poly.vertex(j), buf.inner_[i], buf.inner_[j]};
                Quadrangle qo{i, poly.vertex(i), poly.vertex(j), buf.outer_[i], buf.outer_[j]};
                if (!qi.convex() || !qo.convex()) {
                    ok = false;
                    break;
                }
                buf.quads_.push_back(qi);
                buf.quads_.push_back(qo);
            }
        }
        if (ok) return buf;
    }
    throw Error(ErrorKind::NonconvexQuadrangle, "buffer quadrangles stay nonconvex after shrinking");
}

/// Extension H of a boundary field h into the body: bilinear in the convex coordinates of
/// each buffer quadrangle, zero inside the inner buffer and outside the outer buffer.
class ExtensionField {
public:
    ExtensionField(std::shared_ptr<const ExtensionBuffers> buffers, PerturbationField h)
        : buffers_(std::move(buffers)), h_(std::move(h)) {}

    const ExtensionBuffers& buffers() const { return *buffers_; }
    std::shared_ptr<const ExtensionBuffers> buffers_ptr() const { return buffers_; }
    const PerturbationField& field() const { return h_; }

    struct Value {
        Vec2 value = Vec2::Zero();
        Mat2 jacobian = Mat2::Zero();
    };

    Value evaluate_in(int quad, const Vec2& p) const {
        Value v;
        if (quad < 0) return v;
        const Quadrangle& q = buffers_->quadrangles()[quad];
        auto [c, d] = q.local(p);
        return evaluate_local(quad, c, d);
    }

    Value evaluate_local(int quad, double c, double d) const {
        const Quadrangle& q = buffers_->quadrangles()[quad];
        const Vec2& ha = h_.at_vertex(q.vertex);
        const Vec2& hb = h_.at_vertex(q.vertex + 1);
        Value v;
        v.value = c * ((1 - d) * ha + d * hb);
        Mat2 dH;
        dH.col(0) = (1 - d) * ha + d * hb;
        dH.col(1) = c * (hb - ha);
        v.jacobian = dH * q.jacobian(c, d).inverse();
        return v;
    }

    Value evaluate(const Vec2& p) const { return evaluate_in(buffers_->locate(p), p); }

    struct NormReport {
        double sup_value = 0.0;
        double sup_gradient = 0.0;
        double norm = 0.0;           // sup|H| + sup|DH|_2
        double boundary_norm = 0.0;  // W^{1,inf} norm of h on the polygon edges
        double constant = 0.0;       // realized norm / boundary_norm (0 if h = 0)
    };

    /// Dense sampling on a samples x samples grid of convex coordinates per quadrangle.
    NormReport sampled_norm(const Polygon& poly, int samples = 64) const {
        NormReport r;
        for (int k = 0; k < static_cast<int>(buffers_->quadrangles().size()); ++k) {
            for (int a = 0; a <= samples; ++a) {
                for (int b = 0; b <= samples; ++b) {
                    double c = static_cast<double>(a) / samples;
                    double d = static_cast<double>(b) / samples;
                    Value v = evaluate_local(k, c, d);
                    r.sup_value = std::max(r.sup_value, v.value.norm());
                    Eigen::JacobiSVD<Mat2> svd(v.jacobian);
                    r.sup_gradient = std::max(r.sup_gradient, svd.singularValues()(0));
                }
            }
        }
        r.norm = r.sup_value + r.sup_gradient;
        r.boundary_norm = h_.w1inf_norm(poly);
        r.constant = r.boundary_norm > 0.0 ? r.norm / r.boundary_norm : 0.0;
        return r;
    }

private:
    std::shared_ptr<const ExtensionBuffers> buffers_;
    PerturbationField h_;
};

/// 2x2 matrix field (div H) I - DH - DH^T.
inline Mat2 material_matrix(const Mat2& dH) {
    return dH.trace() * Mat2::Identity() - dH - dH.transpose();
}

inline ExtensionField extend_field(const PerturbationField& h, const Polygon& poly, const OuterDomain& outer) {
    auto buffers = std::make_shared<const ExtensionBuffers>(build_buffers(poly, outer));
    return ExtensionField(std::move(buffers), h);
}

}  // namespace polyshape
