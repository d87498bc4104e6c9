#pragma once

#include "polyshape/core.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace polyshape {

/// Outer body: a disk or an axis-aligned rectangle, parameterized by arc length
/// counterclockwise. For the disk, s = 0 is the point at angle 0.
class OuterDomain {
public:
    enum class Kind { Disk, Rectangle };

    static OuterDomain disk(Vec2 center = Vec2::Zero(), double radius = 1.0) {
        if (!(radius > 0.0)) throw Error(ErrorKind::Config, "disk radius must be positive");
        OuterDomain d;
        d.kind_ = Kind::Disk;
        d.center_ = center;
        d.radius_ = radius;
        return d;
    }

    static OuterDomain rectangle(Vec2 lo, Vec2 hi) {
        if (!(hi.x() > lo.x() && hi.y() > lo.y()))
            throw Error(ErrorKind::Config, "rectangle corners must satisfy lo < hi");
        OuterDomain d;
        d.kind_ = Kind::Rectangle;
        d.lo_ = lo;
        d.hi_ = hi;
        return d;
    }

    Kind kind() const { return kind_; }
    const Vec2& center() const { return center_; }
    double radius() const { return radius_; }
    const Vec2& lo() const { return lo_; }
    const Vec2& hi() const { return hi_; }

    double perimeter() const {
        if (kind_ == Kind::Disk) return two_pi * radius_;
        return 2.0 * ((hi_.x() - lo_.x()) + (hi_.y() - lo_.y()));
    }

    /// Positive inside, zero on the boundary.
    double clearance(const Vec2& p) const {
        if (kind_ == Kind::Disk) return radius_ - (p - center_).norm();
        return std::min({p.x() - lo_.x(), hi_.x() - p.x(), p.y() - lo_.y(), hi_.y() - p.y()});
    }

    bool contains(const Vec2& p) const { return clearance(p) > 0.0; }

    Vec2 point_at(double s) const {
        double per = perimeter();
        s = std::fmod(s, per);
        if (s < 0.0) s += per;
        if (kind_ == Kind::Disk) {
            double th = s / radius_;
            return center_ + radius_ * Vec2(std::cos(th), std::sin(th));
        }
        double w = hi_.x() - lo_.x(), h = hi_.y() - lo_.y();
        // starts at the midpoint of the right side, like the disk's angle 0
        double start = 0.5 * h;
        s = std::fmod(s + start, per);
        if (s < h) return {hi_.x(), lo_.y() + s};
        s -= h;
        if (s < w) return {hi_.x() - s, hi_.y()};
        s -= w;
        if (s < h) return {lo_.x(), hi_.y() - s};
        s -= h;
        return {lo_.x() + s, lo_.y()};
    }

    /// Arc-length coordinate of the boundary point closest to p.
    double arc_length_of(const Vec2& p) const {
        if (kind_ == Kind::Disk) {
            double th = std::atan2(p.y() - center_.y(), p.x() - center_.x());
            if (th < 0.0) th += two_pi;
            return th * radius_;
        }
        double w = hi_.x() - lo_.x(), h = hi_.y() - lo_.y();
        double per = perimeter();
        double dr = std::abs(p.x() - hi_.x()), dt = std::abs(p.y() - hi_.y());
        double dl = std::abs(p.x() - lo_.x()), db = std::abs(p.y() - lo_.y());
        double m = std::min({dr, dt, dl, db});
        double s;
        if (m == dr)
            s = p.y() - lo_.y();
        else if (m == dt)
            s = h + (hi_.x() - p.x());
        else if (m == dl)
            s = h + w + (hi_.y() - p.y());
        else
            s = 2 * h + w + (p.x() - lo_.x());
        s -= 0.5 * h;
        s = std::fmod(s, per);
        if (s < 0.0) s += per;
        return s;
    }

    /// Boundary samples with spacing at most `spacing`; rectangle corners are always included.
    std::vector<Vec2> sample_boundary(double spacing) const {
        std::vector<Vec2> pts;
        if (kind_ == Kind::Disk) {
            int n = std::max(8, static_cast<int>(std::ceil(perimeter() / spacing)));
            pts.reserve(n);
            for (int j = 0; j < n; ++j) {
                double th = two_pi * j / n;
                pts.push_back(center_ + radius_ * Vec2(std::cos(th), std::sin(th)));
            }
            return pts;
        }
        std::vector<Vec2> corners = {{hi_.x(), lo_.y()}, {hi_.x(), hi_.y()}, {lo_.x(), hi_.y()}, {lo_.x(), lo_.y()}};
        // start on the right side midpoint
        Vec2 mid(hi_.x(), 0.5 * (lo_.y() + hi_.y()));
        auto push_side = [&](const Vec2& a, const Vec2& b) {
            double len = (b - a).norm();
            int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
            for (int j = 0; j < n; ++j) pts.push_back(a + (b - a) * (static_cast<double>(j) / n));
        };
        push_side(mid, corners[1]);
        push_side(corners[1], corners[2]);
        push_side(corners[2], corners[3]);
        push_side(corners[3], corners[0]);
        push_side(corners[0], mid);
        return pts;
    }

private:
    Kind kind_ = Kind::Disk;
    Vec2 center_ = Vec2::Zero();
    double radius_ = 1.0;
    Vec2 lo_ = Vec2::Zero();
    Vec2 hi_ = Vec2::Zero();
};

/// Simple counterclockwise polygon. Vertex i joins edge i (from vertex i-1) and
/// edge i+1 (to vertex i+1); the tangent on edge e points toward vertex e.
class Polygon {
public:
    const std::vector<Vec2>& vertices() const { return vertices_; }
    int size() const { return static_cast<int>(vertices_.size()); }
    const Vec2& vertex(int i) const { return vertices_[wrap(i)]; }

    int wrap(int i) const {
        int n = size();
        return ((i % n) + n) % n;
    }

    /// Edge e runs from vertex e-1 to vertex e.
    Vec2 edge_start(int e) const { return vertex(e - 1); }
    Vec2 edge_end(int e) const { return vertex(e); }
    double edge_length(int e) const { return (edge_end(e) - edge_start(e)).norm(); }
    Vec2 tangent(int e) const { return (edge_end(e) - edge_start(e)).normalized(); }
    Vec2 normal(int e) const {
        Vec2 t = tangent(e);
        return {t.y(), -t.x()};
    }

    double angle(int i) const { return angles_[wrap(i)]; }
    const std::vector<double>& angles() const { return angles_; }
    /// Polar angle of edge i+1 seen from vertex i (local theta = 0 direction).
    double frame_angle(int i) const { return frame_angles_[wrap(i)]; }
    double cutoff_radius(int i) const { return radii_[wrap(i)]; }
    const std::vector<double>& cutoff_radii() const { return radii_; }

    /// Local polar coordinates (r, theta) about vertex i, theta in [0, 2pi).
    std::pair<double, double> local_polar(int i, const Vec2& x) const {
        Vec2 d = x - vertex(i);
        double r = d.norm();
        double th = wrap_angle(std::atan2(d.y(), d.x()) - frame_angle(i));
        return {r, th};
    }

    Vec2 from_local(int i, double r, double theta) const {
        double a = frame_angle(i) + theta;
        return vertex(i) + r * Vec2(std::cos(a), std::sin(a));
    }

    double signed_area() const {
        double a = 0.0;
        for (int i = 0; i < size(); ++i) a += cross(vertex(i), vertex(i + 1));
        return 0.5 * a;
    }

    double perimeter() const {
        double p = 0.0;
        for (int e = 0; e < size(); ++e) p += edge_length(e);
        return p;
    }

    Vec2 barycenter() const {
        Vec2 c = Vec2::Zero();
        for (const auto& v : vertices_) c += v;
        return c / size();
    }

    bool contains(const Vec2& p) const {
        bool inside = false;
        int n = size();
        for (int i = 0, j = n - 1; i < n; j = i++) {
            const Vec2& a = vertices_[i];
            const Vec2& b = vertices_[j];
            if ((a.y() > p.y()) != (b.y() > p.y())) {
                double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
                if (p.x() < x) inside = !inside;
            }
        }
        return inside;
    }

    double distance_to_boundary(const Vec2& p) const {
        double d = std::numeric_limits<double>::infinity();
        for (int e = 0; e < size(); ++e) d = std::min(d, point_segment_distance(p, edge_start(e), edge_end(e)));
        return d;
    }

    friend Polygon build_polygon(std::vector<Vec2> vertices, const OuterDomain& outer);

private:
    std::vector<Vec2> vertices_;
    std::vector<double> angles_;
    std::vector<double> frame_angles_;
    std::vector<double> radii_;
};

inline bool polygon_is_simple(const std::vector<Vec2>& v) {
    int n = static_cast<int>(v.size());
    for (int i = 0; i < n; ++i) {
        const Vec2& a = v[i];
        const Vec2& b = v[(i + 1) % n];
        if ((b - a).norm() == 0.0) return false;
        for (int j = i + 1; j < n; ++j) {
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(a, b, v[j], v[(j + 1) % n])) return false;
        }
    }
    return true;
}

/// Validates a vertex loop and computes angles, local frames and cut-off radii.
/// Clockwise input is reversed. Cut-off radius: 0.45 times the smallest of the
/// adjacent edge lengths, the distance to other vertices and non-adjacent edges,
/// and the distance to the outer boundary.
inline Polygon build_polygon(std::vector<Vec2> vertices, const OuterDomain& outer) {
    int n = static_cast<int>(vertices.size());
    if (n < 3) throw Error(ErrorKind::InvalidPolygon, "a polygon needs at least 3 vertices");
    for (const auto& v : vertices)
        if (!v.allFinite()) throw Error(ErrorKind::InvalidPolygon, "non-finite vertex coordinate");
    if (!polygon_is_simple(vertices)) throw Error(ErrorKind::SelfIntersection, "vertex loop is not simple");

    double area = 0.0;
    for (int i = 0; i < n; ++i) area += cross(vertices[i], vertices[(i + 1) % n]);
    if (area < 0.0) std::reverse(vertices.begin(), vertices.end());

    Polygon poly;
    poly.vertices_ = std::move(vertices);
    poly.angles_.resize(n);
    poly.frame_angles_.resize(n);
    poly.radii_.resize(n);

    double angle_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        Vec2 to_next = poly.vertex(i + 1) - poly.vertex(i);
        Vec2 to_prev = poly.vertex(i - 1) - poly.vertex(i);
        double a = ccw_angle(to_next, to_prev);
        if (std::abs(a - pi) < 1e-12 || std::abs(cross(to_next.normalized(), to_prev.normalized())) < 1e-12) {
            std::ostringstream os;
            os << "interior angle at vertex " << i << " equals pi";
            throw Error(ErrorKind::CollinearVertex, os.str());
        }
        poly.angles_[i] = a;
        poly.frame_angles_[i] = std::atan2(to_next.y(), to_next.x());
        angle_sum += a;
    }
    if (std::abs(angle_sum - (n - 2) * pi) > 1e-8)
        throw Error(ErrorKind::SelfIntersection, "angle sum inconsistent with a simple polygon");

    for (int i = 0; i < n; ++i) {
        double c = outer.clearance(poly.vertex(i));
        if (!(c > 0.0)) {
            std::ostringstream os;
            os << "vertex " << i << " is not inside the outer domain";
            throw Error(ErrorKind::NotInsideOuterDomain, os.str());
        }
    }

    for (int i = 0; i < n; ++i) {
        const Vec2& x = poly.vertex(i);
        double d = std::min(poly.edge_length(i), poly.edge_length(i + 1));
        d = std::min(d, outer.clearance(x));
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            d = std::min(d, (poly.vertex(j) - x).norm());
        }
        for (int e = 0; e < n; ++e) {
            if (e == poly.wrap(i) || e == poly.wrap(i + 1)) continue;
            d = std::min(d, point_segment_distance(x, poly.edge_start(e), poly.edge_end(e)));
        }
        poly.radii_[i] = 0.45 * d;
    }
    return poly;
}

/// Boundary vector field on the polygon: affine on every edge and continuous at the
/// vertices, hence fully described by its vertex values.
class PerturbationField {
public:
    PerturbationField() = default;
    explicit PerturbationField(std::vector<Vec2> vertex_values) : values_(std::move(vertex_values)) {}

    static PerturbationField zero(int n) { return PerturbationField(std::vector<Vec2>(n, Vec2::Zero())); }

    int size() const { return static_cast<int>(values_.size()); }
    const std::vector<Vec2>& vertex_values() const { return values_; }
    const Vec2& at_vertex(int i) const {
        int n = size();
        return values_[((i % n) + n) % n];
    }

    /// Value on edge e at fraction t from its start vertex (e-1) to its end vertex (e).
    Vec2 on_edge(int e, double t) const { return (1.0 - t) * at_vertex(e - 1) + t * at_vertex(e); }

    double normal_component(const Polygon& poly, int e, double t) const { return on_edge(e, t).dot(poly.normal(e)); }

    /// One-sided limits of h.nu at vertex i: minus along edge i, plus along edge i+1.
    double limit_minus(const Polygon& poly, int i) const { return at_vertex(i).dot(poly.normal(i)); }
    double limit_plus(const Polygon& poly, int i) const { return at_vertex(i).dot(poly.normal(i + 1)); }

    /// max over edges of (sup |h| + sup |d h / d tau|).
    double w1inf_norm(const Polygon& poly) const {
        double best = 0.0;
        for (int e = 0; e < poly.size(); ++e) {
            const Vec2& a = at_vertex(e - 1);
            const Vec2& b = at_vertex(e);
            double sup = std::max(a.norm(), b.norm());
            double der = (b - a).norm() / poly.edge_length(e);
            best = std::max(best, sup + der);
        }
        return best;
    }

    PerturbationField operator+(const PerturbationField& o) const {
        PerturbationField r(values_);
        for (int i = 0; i < size(); ++i) r.values_[i] += o.values_[i];
        return r;
    }
    PerturbationField operator*(double s) const {
        PerturbationField r(values_);
        for (auto& v : r.values_) v *= s;
        return r;
    }

private:
    std::vector<Vec2> values_;
};

inline PerturbationField operator*(double s, const PerturbationField& h) { return h * s; }

namespace presets {

/// Moves vertex i along `direction` (unit), zero at all other vertices.
inline PerturbationField vertex_motion(const Polygon& poly, int i, Vec2 direction) {
    auto h = PerturbationField::zero(poly.size());
    std::vector<Vec2> v = h.vertex_values();
    v[poly.wrap(i)] = direction;
    return PerturbationField(std::move(v));
}

/// Moves vertex i outward along its exterior angle bisector.
inline PerturbationField vertex_motion(const Polygon& poly, int i) {
    Vec2 n = (poly.normal(i) + poly.normal(i + 1));
    if (poly.angle(i) > pi) n = -n;
    if (n.norm() < 1e-14) n = poly.normal(i);
    return vertex_motion(poly, i, n.normalized());
}

inline PerturbationField dilation(const Polygon& poly) {
    Vec2 b = poly.barycenter();
    std::vector<Vec2> v;
    for (const auto& x : poly.vertices()) v.push_back(x - b);
    return PerturbationField(std::move(v));
}

/// h = nu_e at both endpoints of edge e, zero at the other vertices.
inline PerturbationField edge_normal(const Polygon& poly, int e) {
    std::vector<Vec2> v(poly.size(), Vec2::Zero());
    v[poly.wrap(e - 1)] = poly.normal(e);
    v[poly.wrap(e)] = poly.normal(e);
    return PerturbationField(std::move(v));
}

/// One coordinate of one vertex: the hat-type basis used for Jacobians.
inline PerturbationField coordinate(const Polygon& poly, int i, int component) {
    std::vector<Vec2> v(poly.size(), Vec2::Zero());
    v[poly.wrap(i)][component] = 1.0;
    return PerturbationField(std::move(v));
}

}  // namespace presets

/// Polygon with vertices x_i + t h(x_i).
inline Polygon deform(const Polygon& poly, const PerturbationField& h, double t, const OuterDomain& outer) {
    if (h.size() != poly.size()) throw Error(ErrorKind::DegeneratePerturbation, "field/polygon size mismatch");
    std::vector<Vec2> v;
    v.reserve(poly.size());
    for (int i = 0; i < poly.size(); ++i) v.push_back(poly.vertex(i) + t * h.at_vertex(i));
    double a0 = poly.signed_area();
    double a1 = 0.0;
    for (int i = 0; i < poly.size(); ++i) a1 += cross(v[i], v[(i + 1) % poly.size()]);
    if (a1 * a0 <= 0.0) throw Error(ErrorKind::DegeneratePerturbation, "perturbation flips orientation");
    try {
        return build_polygon(std::move(v), outer);
    } catch (const Error& e) {
        throw Error(ErrorKind::DegeneratePerturbation, e.what());
    }
}

}  // namespace polyshape
