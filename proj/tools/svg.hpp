#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace polyshape::cli {

/// Minimal line chart: one polyline per series, optional log-log axes.
class SvgPlot {
public:
    struct Series {
        std::string label;
        std::vector<double> x, y;
    };

    SvgPlot(std::string title, bool loglog = false) : title_(std::move(title)), loglog_(loglog) {}

    void add(std::string label, std::vector<double> x, std::vector<double> y) {
        series_.push_back({std::move(label), std::move(x), std::move(y)});
    }

    void write(std::ostream& os) const {
        const double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
        double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
        for (const auto& s : series_)
            for (size_t k = 0; k < s.x.size(); ++k) {
                if (!usable(s.x[k], s.y[k])) continue;
                x0 = std::min(x0, tx(s.x[k]));
                x1 = std::max(x1, tx(s.x[k]));
                y0 = std::min(y0, ty(s.y[k]));
                y1 = std::max(y1, ty(s.y[k]));
            }
        if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
        if (x1 - x0 < 1e-300) x1 = x0 + 1;
        if (y1 - y0 < 1e-300) y1 = y0 + 1;
        auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
        auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };

        static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
        char buf[128];
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
        os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title_ << "</text>\n";
        std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", L, T,
                      W - L - R, H - T - B);
        os << buf;
        // axis extremes as labels
        auto label = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.3g", loglog_ ? std::pow(10.0, v) : v);
            return std::string(buf);
        };
        os << "<text x=\"" << L << "\" y=\"" << H - B + 18 << "\" font-size=\"11\">" << label(x0) << "</text>\n";
        os << "<text x=\"" << W - R << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"end\">" << label(x1) << "</text>\n";
        os << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" font-size=\"11\" text-anchor=\"end\">" << label(y0) << "</text>\n";
        os << "<text x=\"" << L - 6 << "\" y=\"" << T + 10 << "\" font-size=\"11\" text-anchor=\"end\">" << label(y1) << "</text>\n";

        for (size_t j = 0; j < series_.size(); ++j) {
            const auto& s = series_[j];
            const char* col = colors[j % 6];
            os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
            for (size_t k = 0; k < s.x.size(); ++k) {
                if (!usable(s.x[k], s.y[k])) continue;
                std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(s.x[k]), py(s.y[k]));
                os << buf;
            }
            os << "\"/>\n";
            os << "<text x=\"" << L + 10 << "\" y=\"" << T + 16 + 14 * j << "\" font-size=\"12\" fill=\"" << col << "\">" << s.label
               << "</text>\n";
        }
        os << "</svg>\n";
    }

private:
    bool usable(double x, double y) const {
        if (!std::isfinite(x) || !std::isfinite(y)) return false;
        return !loglog_ || (x > 0 && y > 0);
    }
    double tx(double x) const { return loglog_ ? std::log10(x) : x; }
    double ty(double y) const { return loglog_ ? std::log10(y) : y; }

    std::string title_;
    bool loglog_;
    std::vector<Series> series_;
};

}  // namespace polyshape::cli
