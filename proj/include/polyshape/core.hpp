#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace polyshape {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

enum class ErrorKind {
    SelfIntersection,
    CollinearVertex,
    NotInsideOuterDomain,
    InvalidPolygon,
    NonconvexQuadrangle,
    ClearanceTooSmall,
    DegeneratePerturbation,
    MeshFailure,
    InvalidAngle,
    ContrastUnity,
    DegenerateEigenspace,
    NotAnEigenvalue,
    SingularSystem,
    SolverDivergence,
    NonZeroMeanCurrent,
    IncompatibleData,
    MeshMismatch,
    RequiresDuplicatedMesh,
    MissingBeta,
    InsufficientResolution,
    JacobianRankDeficient,
    InvalidIterate,
    Config,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::SelfIntersection: return "SelfIntersection";
    case ErrorKind::CollinearVertex: return "CollinearVertex";
    case ErrorKind::NotInsideOuterDomain: return "NotInsideOuterDomain";
    case ErrorKind::InvalidPolygon: return "InvalidPolygon";
    case ErrorKind::NonconvexQuadrangle: return "NonconvexQuadrangle";
    case ErrorKind::ClearanceTooSmall: return "ClearanceTooSmall";
    case ErrorKind::DegeneratePerturbation: return "DegeneratePerturbation";
    case ErrorKind::MeshFailure: return "MeshFailure";
    case ErrorKind::InvalidAngle: return "InvalidAngle";
    case ErrorKind::ContrastUnity: return "ContrastUnity";
    case ErrorKind::DegenerateEigenspace: return "DegenerateEigenspace";
    case ErrorKind::NotAnEigenvalue: return "NotAnEigenvalue";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::SolverDivergence: return "SolverDivergence";
    case ErrorKind::NonZeroMeanCurrent: return "NonZeroMeanCurrent";
    case ErrorKind::IncompatibleData: return "IncompatibleData";
    case ErrorKind::MeshMismatch: return "MeshMismatch";
    case ErrorKind::RequiresDuplicatedMesh: return "RequiresDuplicatedMesh";
    case ErrorKind::MissingBeta: return "MissingBeta";
    case ErrorKind::InsufficientResolution: return "InsufficientResolution";
    case ErrorKind::JacobianRankDeficient: return "JacobianRankDeficient";
    case ErrorKind::InvalidIterate: return "InvalidIterate";
    case ErrorKind::Config: return "Config";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline Vec2 perp(const Vec2& a) { return {-a.y(), a.x()}; }

// angle of b relative to a, in [0, 2pi)
inline double ccw_angle(const Vec2& a, const Vec2& b) {
    double ang = std::atan2(cross(a, b), a.dot(b));
    if (ang < 0.0) ang += two_pi;
    return ang;
}

inline double wrap_angle(double theta) {
    theta = std::fmod(theta, two_pi);
    if (theta < 0.0) theta += two_pi;
    return theta;
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    Vec2 ab = b - a;
    double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) { return cross(q - p, r - p); };
    double d1 = orient(c, d, a), d2 = orient(c, d, b), d3 = orient(a, b, c), d4 = orient(a, b, d);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    auto on_seg = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return std::min(p.x(), q.x()) <= r.x() && r.x() <= std::max(p.x(), q.x()) &&
               std::min(p.y(), q.y()) <= r.y() && r.y() <= std::max(p.y(), q.y());
    };
    if (d1 == 0 && on_seg(c, d, a)) return true;
    if (d2 == 0 && on_seg(c, d, b)) return true;
    if (d3 == 0 && on_seg(a, b, c)) return true;
    if (d4 == 0 && on_seg(a, b, d)) return true;
    return false;
}

/// Gauss-Legendre nodes/weights on [0,1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussRule gauss_legendre(int n) {
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = n * (x * p1 - p0) / (x * x - 1.0);
        rule.nodes[i] = 0.5 * (1.0 - x);
        rule.weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

}  // namespace polyshape
