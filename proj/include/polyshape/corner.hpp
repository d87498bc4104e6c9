#pragma once

#include "polyshape/geometry.hpp"

#include <array>
#include <optional>
#include <sstream>

namespace polyshape {

/// Conductivity contrast of the inclusion.
class Contrast {
public:
    enum class Kind { Finite, Insulating, Conducting };

    /// `allow_unity` admits k = 1, the homogeneous medium, for testing only.
    static Contrast finite(double k, bool allow_unity = false) {
        if (!(k > 0.0) || !std::isfinite(k)) throw Error(ErrorKind::Config, "contrast must be positive and finite");
        if (std::abs(k - 1.0) <= 1e-10 && !allow_unity) throw Error(ErrorKind::ContrastUnity, "k = 1 is excluded");
        Contrast c;
        c.kind_ = Kind::Finite;
        c.k_ = k;
        return c;
    }
    static Contrast insulating() {
        Contrast c;
        c.kind_ = Kind::Insulating;
        c.k_ = 0.0;
        return c;
    }
    static Contrast conducting() {
        Contrast c;
        c.kind_ = Kind::Conducting;
        c.k_ = std::numeric_limits<double>::infinity();
        return c;
    }

    Kind kind() const { return kind_; }
    bool is_finite() const { return kind_ == Kind::Finite; }
    bool is_unity() const { return is_finite() && std::abs(k_ - 1.0) <= 1e-10; }
    double k() const { return k_; }
    double lambda() const { return std::abs((k_ + 1.0) / (k_ - 1.0)); }
    /// Conductivity in region 1 (inclusion) or 0.
    double sigma(int region) const { return region == 1 ? k_ : 1.0; }

    std::string describe() const {
        switch (kind_) {
        case Kind::Insulating: return "insulating";
        case Kind::Conducting: return "conducting";
        default: break;
        }
        std::ostringstream os;
        os << "k=" << k_;
        return os.str();
    }

private:
    Kind kind_ = Kind::Finite;
    double k_ = 2.0;
};

inline double gamma_condition(double gamma, double alpha, double lambda) {
    return std::abs(std::sin(gamma * (alpha - pi))) - lambda * std::abs(std::sin(gamma * pi));
}

/// The first `count` nonnegative exponents, starting with 0.
inline std::vector<double> gamma_roots(double alpha, const Contrast& contrast, int count = 3) {
    if (!(alpha > 0.0 && alpha < two_pi) || std::abs(alpha - pi) < 1e-12)
        throw Error(ErrorKind::InvalidAngle, "angle must lie in (0, 2pi) without pi");
    std::vector<double> roots = {0.0};
    if (!contrast.is_finite()) {
        for (int j = 1; j < count; ++j) roots.push_back(j * pi / (two_pi - alpha));
        return roots;
    }
    if (contrast.is_unity()) throw Error(ErrorKind::ContrastUnity, "no corner exponents for k = 1");
    double lambda = contrast.lambda();
    auto f = [&](double g) { return gamma_condition(g, alpha, lambda); };

    const int scan = 2000;
    const double top = 3.0;
    double prev_g = top / scan, prev_f = f(prev_g);
    for (int s = 2; s <= scan && static_cast<int>(roots.size()) < count; ++s) {
        double g = top * s / scan, fg = f(g);
        // touching zeros (both sines vanish at an integer) carry no sign change
        double nearest = std::round(g);
        if (std::abs(g - nearest) <= 0.5 * top / scan && nearest >= 1.0 &&
            std::abs(std::sin(nearest * (alpha - pi))) < 1e-12 && roots.back() < nearest - 1e-9) {
            if (prev_f * fg > 0.0) {
                roots.push_back(nearest);
                prev_g = g;
                prev_f = fg;
                continue;
            }
        }
        if (fg == 0.0) {
            roots.push_back(g);
        } else if (prev_f * fg < 0.0) {
            double a = prev_g, b = g, fa = prev_f;
            for (int it = 0; it < 80; ++it) {
                double m = 0.5 * (a + b), fm = f(m);
                if (fm == 0.0) {
                    a = b = m;
                    break;
                }
                if ((fm < 0.0) == (fa < 0.0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push_back(0.5 * (a + b));
        }
        prev_g = g;
        prev_f = fg;
    }
    if (static_cast<int>(roots.size()) < count) throw Error(ErrorKind::NotAnEigenvalue, "fewer roots than requested in (0,3)");
    return roots;
}

/// 4x4 matrix whose nullspace holds the coefficients (A-, B-, A+, B+) of an angular
/// eigenfunction: periodicity of value and flux at theta = 0 / 2pi, interface value
/// and flux at theta = alpha.
inline Eigen::Matrix4d eigen_matrix(double gamma, double alpha, double k) {
    double c2 = std::cos(two_pi * gamma), s2 = std::sin(two_pi * gamma);
    double ca = std::cos(gamma * alpha), sa = std::sin(gamma * alpha);
    Eigen::Matrix4d Y;
    Y << 1.0, 0.0, -c2, -s2,
         0.0, k, s2, -c2,
         ca, sa, -ca, -sa,
         -k * sa, k * ca, sa, -ca;
    return Y;
}

/// Determinant after scaling every row to unit length.
inline double normalized_det(const Eigen::Matrix4d& Y) {
    Eigen::Matrix4d Z = Y;
    for (int r = 0; r < 4; ++r) Z.row(r) /= Z.row(r).norm();
    return Z.determinant();
}

/// Angular profile piecewise in (cos g theta, sin g theta): minus branch on (0, alpha),
/// plus branch on (alpha, 2pi).
struct AngularProfile {
    double gamma = 0.0;
    double alpha = 0.0;
    std::array<double, 4> coeff{0, 0, 0, 0};  // A-, B-, A+, B+

    double value(double theta, bool minus) const {
        double A = minus ? coeff[0] : coeff[2], B = minus ? coeff[1] : coeff[3];
        return A * std::cos(gamma * theta) + B * std::sin(gamma * theta);
    }
    double derivative(double theta, bool minus) const {
        double A = minus ? coeff[0] : coeff[2], B = minus ? coeff[1] : coeff[3];
        return gamma * (-A * std::sin(gamma * theta) + B * std::cos(gamma * theta));
    }
    double value(double theta) const { return value(theta, theta < alpha); }

    /// Integral of the profile over (a, b) on one branch.
    double integral(double a, double b, bool minus) const {
        double A = minus ? coeff[0] : coeff[2], B = minus ? coeff[1] : coeff[3];
        if (gamma == 0.0) return A * (b - a);
        return (A * (std::sin(gamma * b) - std::sin(gamma * a)) - B * (std::cos(gamma * b) - std::cos(gamma * a))) / gamma;
    }

    /// Integral of the squared profile over (a, b) on one branch.
    double integral_sq(double a, double b, bool minus) const {
        double A = minus ? coeff[0] : coeff[2], B = minus ? coeff[1] : coeff[3];
        if (gamma == 0.0) return A * A * (b - a);
        auto prim = [&](double t) {
            double s2 = std::sin(2 * gamma * t) / (4 * gamma), c2 = std::cos(2 * gamma * t) / (4 * gamma);
            return A * A * (0.5 * t + s2) + B * B * (0.5 * t - s2) - 2 * A * B * c2;
        };
        return prim(b) - prim(a);
    }

    /// Weighted inner product norm squared: weight w_in on (0, alpha), 1 on (alpha, 2pi).
    double weighted_norm_sq(double w_in) const {
        return w_in * integral_sq(0.0, alpha, true) + integral_sq(alpha, two_pi, false);
    }
};

/// Weight of the interior sector in the angular inner product.
inline double interior_weight(const Contrast& c) { return c.is_finite() ? c.k() : 0.0; }

/// Normalized eigenfunction for exponent index j >= 1.
inline AngularProfile eigenfunction(double alpha, const Contrast& contrast, int j) {
    auto roots = gamma_roots(alpha, contrast, j + 1);
    AngularProfile y;
    y.gamma = roots[j];
    y.alpha = alpha;
    if (!contrast.is_finite()) {
        double c = std::sqrt(2.0 / (two_pi - alpha));
        double ca = std::cos(y.gamma * alpha), sa = std::sin(y.gamma * alpha);
        // cos g(theta - alpha) (insulating) or sin g(theta - alpha) (conducting) on the exterior sector
        if (contrast.kind() == Contrast::Kind::Insulating)
            y.coeff = {0.0, 0.0, c * ca, c * sa};
        else
            y.coeff = {0.0, 0.0, -c * sa, c * ca};
        return y;
    }
    Eigen::Matrix4d Y = eigen_matrix(y.gamma, alpha, contrast.k());
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(Y, Eigen::ComputeFullV);
    auto s = svd.singularValues();
    if (s(3) > 1e-8 * s(0)) throw Error(ErrorKind::NotAnEigenvalue, "matrix Y is regular at this exponent");
    if (s(2) <= 1e-8 * s(0)) throw Error(ErrorKind::DegenerateEigenspace, "two-dimensional eigenspace");
    Eigen::Vector4d v = svd.matrixV().col(3);
    for (int q = 0; q < 4; ++q) y.coeff[q] = v(q);
    double nrm = std::sqrt(y.weighted_norm_sq(contrast.k()));
    double sign = 1.0;
    if (y.coeff[0] < -1e-14 || (std::abs(y.coeff[0]) <= 1e-14 && y.coeff[1] < 0.0)) sign = -1.0;
    for (double& c : y.coeff) c *= sign / nrm;
    return y;
}

/// Leading exponent data at one vertex.
struct CornerData {
    int vertex = 0;
    double alpha = 0.0;
    std::vector<double> gammas;  // gamma_0 = 0, gamma_1, gamma_2
    AngularProfile y1;
    double c1 = 0.0, s1 = 0.0;  // cos / sin of gamma_1 alpha
};

struct CornerSpectrum {
    Contrast contrast;
    std::vector<CornerData> corners;
};

inline CornerSpectrum corner_spectrum(const Polygon& poly, const Contrast& contrast) {
    CornerSpectrum s;
    s.contrast = contrast;
    for (int i = 0; i < poly.size(); ++i) {
        CornerData c;
        c.vertex = i;
        c.alpha = poly.angle(i);
        c.gammas = gamma_roots(c.alpha, contrast, 3);
        c.y1 = eigenfunction(c.alpha, contrast, 1);
        c.c1 = std::cos(c.gammas[1] * c.alpha);
        c.s1 = std::sin(c.gammas[1] * c.alpha);
        s.corners.push_back(c);
    }
    return s;
}

/// Radial quintic smoothstep: 1 for r <= 0.4 R, 0 for r >= R.
struct Cutoff {
    double R = 1.0;

    double inner() const { return 0.4 * R; }
    double value(double r) const {
        double t = std::clamp((r - 0.4 * R) / (0.6 * R), 0.0, 1.0);
        return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    }
    double d1(double r) const {
        double t = (r - 0.4 * R) / (0.6 * R);
        if (t <= 0.0 || t >= 1.0) return 0.0;
        return -30.0 * t * t * (1.0 - t) * (1.0 - t) / (0.6 * R);
    }
    double d2(double r) const {
        double t = (r - 0.4 * R) / (0.6 * R);
        if (t <= 0.0 || t >= 1.0) return 0.0;
        return -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (0.6 * R * 0.6 * R);
    }
    double laplacian(double r) const { return r > 0.0 ? d2(r) + d1(r) / r : 0.0; }
};

/// w_i = chi(r) ytilde(theta) r^(gamma_1 - 1) at vertex i, with the forward coefficient
/// beta_1 folded into the coefficients.
struct SingularFunction {
    int vertex = 0;
    Vec2 origin = Vec2::Zero();
    double frame = 0.0;  // polar angle of the theta = 0 direction
    double k = 2.0;
    double gamma = 0.0;  // gamma_1
    double beta = 0.0;
    double h_minus = 0.0, h_plus = 0.0;
    AngularProfile ytilde;  // exponent gamma_1 - 1
    AngularProfile y1;      // forward eigenfunction, for the leading transmission data
    double c1 = 0.0, s1 = 0.0;
    Cutoff cutoff;

    double exponent() const { return gamma - 1.0; }

    /// Local polar coordinates; theta in [0, 2pi).
    std::pair<double, double> polar(const Vec2& x) const {
        Vec2 d = x - origin;
        return {d.norm(), wrap_angle(std::atan2(d.y(), d.x()) - frame)};
    }

    /// Which branch a point of the given mesh region uses (region 1 = inclusion).
    static bool minus_branch(int region) { return region == 1; }

    /// Branch-consistent angle: points on the theta = 0 ray seen from outside use 2pi.
    double branch_theta(double theta, bool minus) const {
        if (!minus && theta < 0.5 * ytilde.alpha) theta += two_pi;
        if (minus && theta > 0.5 * (ytilde.alpha + two_pi)) theta -= two_pi;
        return theta;
    }

    double value(const Vec2& x, int region) const {
        auto [r, th] = polar(x);
        if (r >= cutoff.R || r == 0.0) return 0.0;
        bool m = minus_branch(region);
        th = branch_theta(th, m);
        return cutoff.value(r) * ytilde.value(th, m) * std::pow(r, exponent());
    }

    /// Value without the cut-off.
    double raw_value(double r, double theta, bool minus) const {
        return ytilde.value(theta, minus) * std::pow(r, exponent());
    }

    Vec2 gradient(const Vec2& x, int region, bool with_cutoff = true) const {
        auto [r, th] = polar(x);
        if (r == 0.0 || (with_cutoff && r >= cutoff.R)) return Vec2::Zero();
        bool m = minus_branch(region);
        th = branch_theta(th, m);
        double p = exponent();
        double rp = std::pow(r, p);
        double yv = ytilde.value(th, m), yd = ytilde.derivative(th, m);
        double chi = with_cutoff ? cutoff.value(r) : 1.0;
        double dchi = with_cutoff ? cutoff.d1(r) : 0.0;
        double dr = dchi * yv * rp + chi * p * yv * rp / r;
        double dt = chi * yd * rp / r;
        double phi = frame + th;
        Vec2 er(std::cos(phi), std::sin(phi)), et(-std::sin(phi), std::cos(phi));
        return dr * er + dt * et;
    }

    /// sigma Laplacian of w_i: sigma (2 grad chi . grad(ytilde r^p) + ytilde r^p lap chi).
    double source(const Vec2& x, int region) const {
        auto [r, th] = polar(x);
        if (r <= cutoff.inner() || r >= cutoff.R) return 0.0;
        bool m = minus_branch(region);
        th = branch_theta(th, m);
        double p = exponent();
        double rp = std::pow(r, p);
        double yv = ytilde.value(th, m);
        double sigma = m ? k : 1.0;
        return sigma * (2.0 * cutoff.d1(r) * p * yv * rp / r + yv * rp * cutoff.laplacian(r));
    }

    /// Jump [w_i] = w+ - w- at distance r along edge i+1 (first = true, theta = 0) or
    /// edge i (theta = alpha).
    double jump(double r, bool first_edge, bool with_cutoff = true) const {
        double chi = with_cutoff ? cutoff.value(r) : 1.0;
        if (r <= 0.0 || chi == 0.0) return 0.0;
        double rp = std::pow(r, exponent());
        double a = ytilde.alpha;
        double j = first_edge ? ytilde.value(two_pi, false) - ytilde.value(0.0, true)
                              : ytilde.value(a, false) - ytilde.value(a, true);
        return chi * j * rp;
    }

    /// Flux jump [D_nu w_i] = d_nu w+ - k d_nu w- along the same edges.
    double flux_jump(double r, bool first_edge, bool with_cutoff = true) const {
        double chi = with_cutoff ? cutoff.value(r) : 1.0;
        if (r <= 0.0 || chi == 0.0) return 0.0;
        double rp1 = std::pow(r, exponent() - 1.0);
        double a = ytilde.alpha;
        // outward normal of the inclusion: -theta direction at theta = 0, +theta at alpha
        if (first_edge) return -chi * (ytilde.derivative(two_pi, false) - k * ytilde.derivative(0.0, true)) * rp1;
        return chi * (ytilde.derivative(a, false) - k * ytilde.derivative(a, true)) * rp1;
    }

    /// Leading term of (h.nu) d_tau u along the edge (tau oriented as the polygon edge).
    double tangential_lead(double r, bool first_edge) const {
        double rp = std::pow(r, gamma - 1.0);
        if (first_edge) return h_plus * beta * gamma * y1.coeff[0] * rp;
        return -h_minus * beta * gamma * (y1.coeff[0] * c1 + y1.coeff[1] * s1) * rp;
    }

    /// Leading term of (1-k)(h.nu) d_nu u- along the edge.
    double normal_lead(double r, bool first_edge) const {
        double rp = std::pow(r, gamma - 1.0);
        if (first_edge) return (1.0 - k) * h_plus * beta * (-gamma * y1.coeff[1]) * rp;
        return (1.0 - k) * h_minus * beta * y1.derivative(y1.alpha, true) * rp;
    }
};

inline SingularFunction singular_coefficients(const Polygon& poly, int i, const CornerSpectrum& spectrum, double beta,
                                              double h_minus, double h_plus) {
    const Contrast& contrast = spectrum.contrast;
    if (!contrast.is_finite()) throw Error(ErrorKind::Config, "singular functions need a finite contrast");
    const CornerData& cd = spectrum.corners[poly.wrap(i)];
    SingularFunction sf;
    sf.vertex = poly.wrap(i);
    sf.origin = poly.vertex(i);
    sf.frame = poly.frame_angle(i);
    sf.k = contrast.k();
    sf.gamma = cd.gammas[1];
    sf.beta = beta;
    sf.h_minus = h_minus;
    sf.h_plus = h_plus;
    sf.y1 = cd.y1;
    sf.c1 = cd.c1;
    sf.s1 = cd.s1;
    sf.cutoff.R = poly.cutoff_radius(i);
    sf.ytilde.gamma = sf.gamma - 1.0;
    sf.ytilde.alpha = cd.alpha;

    double Am = cd.y1.coeff[0], Bm = cd.y1.coeff[1];
    Eigen::Vector4d rhs(h_plus * Bm, h_plus * Am, h_minus * (Am * cd.s1 - Bm * cd.c1), -h_minus * (Am * cd.c1 + Bm * cd.s1));
    rhs *= beta * (1.0 - sf.k) * sf.gamma;
    Eigen::Matrix4d Y = eigen_matrix(sf.gamma - 1.0, cd.alpha, sf.k);
    if (std::abs(normalized_det(Y)) < 1e-12) throw Error(ErrorKind::SingularSystem, "Y(gamma_1 - 1) is singular");
    Eigen::Vector4d x = Y.fullPivLu().solve(rhs);
    if ((Y * x - rhs).norm() > 1e-10 * std::max(1.0, rhs.norm())) throw Error(ErrorKind::SingularSystem, "inaccurate solve");
    for (int q = 0; q < 4; ++q) sf.ytilde.coeff[q] = x(q);
    return sf;
}

/// |(g-1)(int_0^a k ytilde + int_a^2pi ytilde) - beta (1-k) g (h+ A- + h- (A- c + B- s))|.
inline double integral_identity_check(const SingularFunction& sf) {
    const auto& yt = sf.ytilde;
    double lhs = (sf.gamma - 1.0) * (sf.k * yt.integral(0.0, yt.alpha, true) + yt.integral(yt.alpha, two_pi, false));
    double Am = sf.y1.coeff[0], Bm = sf.y1.coeff[1];
    double rhs = sf.beta * (1.0 - sf.k) * sf.gamma * (sf.h_plus * Am + sf.h_minus * (Am * sf.c1 + Bm * sf.s1));
    return std::abs(lhs - rhs);
}

}  // namespace polyshape
