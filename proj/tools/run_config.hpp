#pragma once

#include "polyshape/reconstruct.hpp"
#include "polyshape/verification.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>

namespace polyshape::cli {

namespace fs = std::filesystem;

/// Everything a run needs, read from a flat ini file with section headers.
struct RunConfig {
    OuterDomain outer = OuterDomain::disk();
    std::vector<Vec2> vertices{{-0.3, -0.3}, {0.3, -0.3}, {0.3, 0.3}, {-0.3, 0.3}};
    Contrast contrast = Contrast::finite(2.0);
    std::vector<CurrentSpec> currents{{1, true}};
    std::string current_file;  // nodal current, columns arc_length,value
    MeshOptions mesh = CampaignConfig{}.mesh;
    std::vector<std::string> perturbations{"vertex:2", "dilation", "edge:1"};
    std::string perturbation_file;  // one "hx hy" row per vertex
    std::vector<double> taylor_t{0.08, 0.04, 0.02, 0.01};
    std::vector<double> deltas{0.2, 0.1, 0.05, 0.025};
    int test_modes = 8;
    double disk_hmax = 0.02;
    std::string experiment;
    std::string out_dir = "out";
    std::uint64_t seed = 1;

    // reconstruction
    std::vector<Vec2> truth;
    double noise = 0.0;
    double data_refine = 2.0;
    double vertex_tol = 5e-3;
    int max_iter = 50;

    CampaignConfig campaign() const {
        CampaignConfig c;
        c.outer = outer;
        c.vertices = vertices;
        c.contrast = contrast;
        c.current = currents.front();
        c.mesh = mesh;
        c.mesh.seed = seed;
        c.perturbations = perturbations;
        c.taylor_t = taylor_t;
        c.deltas = deltas;
        c.test_modes = test_modes;
        c.disk_hmax = disk_hmax;
        return c;
    }
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, const std::string& seps) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (seps.find(ch) != std::string::npos) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline double number(const std::string& s, const std::string& key) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Config, "'" + key + "': not a number: " + s);
}

inline std::vector<double> numbers(const std::string& s, const std::string& key) {
    std::vector<double> v;
    for (const auto& tok : split(s, " ,\t")) v.push_back(number(tok, key));
    return v;
}

/// "x y, x y, ..." with commas between points.
inline std::vector<Vec2> points(const std::string& s, const std::string& key) {
    std::vector<Vec2> pts;
    for (const auto& p : split(s, ",;")) {
        auto xy = numbers(p, key);
        if (xy.size() != 2) throw Error(ErrorKind::Config, "'" + key + "': each point needs two coordinates");
        pts.emplace_back(xy[0], xy[1]);
    }
    return pts;
}

/// "1c 1s 2c": Fourier mode with c (cosine) or s (sine).
inline std::vector<CurrentSpec> currents(const std::string& s) {
    std::vector<CurrentSpec> out;
    for (const auto& tok : split(s, " ,\t")) {
        char kind = tok.back();
        if (kind != 'c' && kind != 's') throw Error(ErrorKind::Config, "current mode '" + tok + "' must end in c or s");
        int m = static_cast<int>(number(tok.substr(0, tok.size() - 1), "current.modes"));
        if (m < 1) throw Error(ErrorKind::Config, "current mode must be at least 1");
        out.push_back({m, kind == 'c'});
    }
    if (out.empty()) throw Error(ErrorKind::Config, "current.modes is empty");
    return out;
}

inline OuterDomain outer(const std::string& s) {
    auto tok = split(s, " ,\t");
    if (tok.empty()) throw Error(ErrorKind::Config, "domain.outer is empty");
    std::vector<double> v;
    for (size_t j = 1; j < tok.size(); ++j) v.push_back(number(tok[j], "domain.outer"));
    if (tok[0] == "disk") {
        if (v.empty()) return OuterDomain::disk();
        if (v.size() != 3) throw Error(ErrorKind::Config, "domain.outer = disk cx cy radius");
        return OuterDomain::disk({v[0], v[1]}, v[2]);
    }
    if (tok[0] == "rectangle") {
        if (v.size() != 4) throw Error(ErrorKind::Config, "domain.outer = rectangle x0 y0 x1 y1");
        return OuterDomain::rectangle({v[0], v[1]}, {v[2], v[3]});
    }
    throw Error(ErrorKind::Config, "unknown outer domain '" + tok[0] + "'");
}

inline Contrast contrast(const std::string& kind, const std::string& k) {
    if (kind == "insulating") return Contrast::insulating();
    if (kind == "conducting") return Contrast::conducting();
    if (kind == "unity") return Contrast::finite(1.0, true);
    if (kind == "finite") return Contrast::finite(number(k, "contrast.k"));
    throw Error(ErrorKind::Config, "unknown contrast kind '" + kind + "'");
}

}  // namespace detail

inline PerturbationField read_perturbation(const std::string& path, int n);

/// Throws Config on unreadable files, unknown keys or malformed values.
inline RunConfig load_config(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw Error(ErrorKind::Config, "config file not found: " + path.string());
    boost::property_tree::ptree pt;
    try {
        boost::property_tree::read_ini(path.string(), pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw Error(ErrorKind::Config, e.what());
    }

    static const std::map<std::string, std::vector<std::string>> known{
        {"domain", {"outer", "polygon"}},
        {"contrast", {"kind", "k"}},
        {"current", {"modes", "file"}},
        {"mesh", {"hmax", "grading", "levels", "disk_hmax"}},
        {"perturbation", {"presets", "file"}},
        {"experiment", {"name", "taylor_t", "deltas", "test_modes"}},
        {"output", {"dir"}},
        {"run", {"seed"}},
        {"reconstruct", {"truth", "noise", "data_refine", "vertex_tol", "max_iter"}},
    };
    for (const auto& [sec, tree] : pt) {
        auto it = known.find(sec);
        if (it == known.end()) throw Error(ErrorKind::Config, "unknown section [" + sec + "]");
        for (const auto& [key, v] : tree)
            if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
                throw Error(ErrorKind::Config, "unknown key " + sec + "." + key);
    }

    RunConfig c;
    auto get = [&](const std::string& key) { return pt.get_optional<std::string>(key); };
    const fs::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path q(p);
        q = q.is_absolute() ? q : base / q;
        if (!fs::is_regular_file(q)) throw Error(ErrorKind::Config, "referenced file not found: " + q.string());
        return q.string();
    };

    if (auto v = get("domain.outer")) c.outer = detail::outer(*v);
    if (auto v = get("domain.polygon")) c.vertices = detail::points(*v, "domain.polygon");
    if (auto v = get("contrast.kind")) c.contrast = detail::contrast(*v, get("contrast.k").value_or("2"));
    else if (auto k = get("contrast.k")) c.contrast = detail::contrast("finite", *k);
    if (auto v = get("current.modes")) c.currents = detail::currents(*v);
    if (auto v = get("current.file")) c.current_file = resolve(*v);
    if (auto v = get("mesh.hmax")) c.mesh.hmax = detail::number(*v, "mesh.hmax");
    if (auto v = get("mesh.grading")) c.mesh.grading = detail::number(*v, "mesh.grading");
    if (auto v = get("mesh.levels")) c.mesh.levels = static_cast<int>(detail::number(*v, "mesh.levels"));
    if (auto v = get("mesh.disk_hmax")) c.disk_hmax = detail::number(*v, "mesh.disk_hmax");
    if (auto v = get("perturbation.presets")) c.perturbations = detail::split(*v, " ,\t");
    if (auto v = get("perturbation.file")) c.perturbation_file = resolve(*v);
    if (auto v = get("experiment.name")) c.experiment = *v;
    if (auto v = get("experiment.taylor_t")) c.taylor_t = detail::numbers(*v, "experiment.taylor_t");
    if (auto v = get("experiment.deltas")) c.deltas = detail::numbers(*v, "experiment.deltas");
    if (auto v = get("experiment.test_modes")) c.test_modes = static_cast<int>(detail::number(*v, "experiment.test_modes"));
    if (auto v = get("output.dir")) c.out_dir = *v;
    if (auto v = get("run.seed")) c.seed = static_cast<std::uint64_t>(detail::number(*v, "run.seed"));
    if (auto v = get("reconstruct.truth")) c.truth = detail::points(*v, "reconstruct.truth");
    if (auto v = get("reconstruct.noise")) c.noise = detail::number(*v, "reconstruct.noise");
    if (auto v = get("reconstruct.data_refine")) c.data_refine = detail::number(*v, "reconstruct.data_refine");
    if (auto v = get("reconstruct.vertex_tol")) c.vertex_tol = detail::number(*v, "reconstruct.vertex_tol");
    if (auto v = get("reconstruct.max_iter")) c.max_iter = static_cast<int>(detail::number(*v, "reconstruct.max_iter"));

    if (!(c.mesh.hmax > 0.0)) throw Error(ErrorKind::Config, "mesh.hmax must be positive");
    if (!(c.mesh.grading > 0.0 && c.mesh.grading <= 1.0)) throw Error(ErrorKind::Config, "mesh.grading must lie in (0,1]");
    if (c.mesh.levels < 0) throw Error(ErrorKind::Config, "mesh.levels must be non-negative");
    if (c.data_refine < 1.0) throw Error(ErrorKind::Config, "reconstruct.data_refine must be at least 1");
    build_polygon(c.vertices, c.outer);  // validates the polygon
    if (!c.truth.empty()) build_polygon(c.truth, c.outer);
    for (const auto& p : c.perturbations) parse_perturbation(p, build_polygon(c.vertices, c.outer));
    if (!c.perturbation_file.empty()) read_perturbation(c.perturbation_file, static_cast<int>(c.vertices.size()));
    return c;
}

/// Nodal current file: rows "arc_length,value" with a header line.
inline BoundaryFunction read_boundary_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::Config, "cannot open " + path);
    BoundaryFunction b;
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        auto v = detail::numbers(line, path);
        if (v.empty()) continue;
        if (v.size() != 2) throw Error(ErrorKind::Config, path + ": rows must be arc_length,value");
        b.arc.push_back(v[0]);
        b.values.push_back(v[1]);
        b.nodes.push_back(-1);
        b.points.push_back(Vec2::Zero());
    }
    if (b.values.size() < 2) throw Error(ErrorKind::Config, path + ": too few rows");
    return b;
}

/// Custom perturbation: one "hx hy" row per polygon vertex.
inline PerturbationField read_perturbation(const std::string& path, int n) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::Config, "cannot open " + path);
    std::vector<Vec2> v;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto xy = detail::numbers(line, path);
        if (xy.size() != 2) throw Error(ErrorKind::Config, path + ": rows must be hx hy");
        v.emplace_back(xy[0], xy[1]);
    }
    if (static_cast<int>(v.size()) != n) throw Error(ErrorKind::Config, path + ": expected one row per vertex");
    return PerturbationField(v);
}

}  // namespace polyshape::cli
