// polyshape: command-line driver for the polygonal-inclusion shape-derivative toolkit.

#include "polyshape/reconstruct.hpp"
#include "polyshape/transmission.hpp"
#include "polyshape/verification.hpp"
#include "run_config.hpp"
#include "svg.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace polyshape;
using namespace polyshape::cli;

namespace {

struct Options {
    std::string config;
    std::string out;
    double hmax = 0.0;
    long long seed = -1;
    int threads = 0;
    bool svg = false;
    // gamma
    std::optional<double> alpha;
    std::optional<double> k;
    std::string kind;
};

std::string tag(const std::string& name) {
    std::string s = name;
    for (char& ch : s)
        if (ch == ':') ch = '_';
    return s;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

struct Scene {
    Polygon poly;
    std::shared_ptr<const ExtensionBuffers> buffers;
    MeshPtr mesh;
    std::shared_ptr<const FemSystem> sys;
    std::vector<BoundaryFunction> currents;
    std::vector<std::pair<std::string, PerturbationField>> fields;
};

Scene make_scene(const RunConfig& cfg) {
    Scene s{build_polygon(cfg.vertices, cfg.outer), nullptr, nullptr, nullptr, {}, {}};
    s.buffers = std::make_shared<const ExtensionBuffers>(build_buffers(s.poly, cfg.outer));
    MeshOptions opt = cfg.mesh;
    opt.seed = cfg.seed;
    opt.buffers = s.buffers;
    opt.duplicate_interface = cfg.contrast.is_finite() && !cfg.contrast.is_unity();
    s.mesh = std::make_shared<const Mesh>(generate_mesh(s.poly, cfg.outer, opt));
    s.sys = std::make_shared<const FemSystem>(s.mesh, cfg.contrast);
    if (!cfg.current_file.empty()) {
        s.currents.push_back(transfer(read_boundary_csv(cfg.current_file), *s.mesh, cfg.outer.perimeter()).normalized());
    } else {
        for (const auto& c : cfg.currents) s.currents.push_back(fourier_current(*s.mesh, cfg.outer, c.mode, c.cosine).normalized());
    }
    for (const auto& p : cfg.perturbations) s.fields.emplace_back(p, parse_perturbation(p, s.poly));
    if (!cfg.perturbation_file.empty()) s.fields.emplace_back("custom", read_perturbation(cfg.perturbation_file, s.poly.size()));
    return s;
}

void write_svg(const Options& o, const fs::path& p, const SvgPlot& plot) {
    if (!o.svg) return;
    auto os = open_out(p);
    plot.write(os);
}

std::string kfield(const Contrast& c) {
    if (c.kind() == Contrast::Kind::Insulating) return "0";
    if (c.kind() == Contrast::Kind::Conducting) return "inf";
    std::ostringstream os;
    os.precision(10);
    os << c.k();
    return os.str();
}

// ---- subcommands

int run_gamma(const Options& o, const RunConfig& cfg, const fs::path& out) {
    Contrast c = cfg.contrast;
    if (!o.kind.empty()) c = cli::detail::contrast(o.kind, o.k ? std::to_string(*o.k) : "2");
    else if (o.k) c = *o.k == 0.0 ? Contrast::insulating() : std::isinf(*o.k) ? Contrast::conducting() : Contrast::finite(*o.k);
    std::vector<double> angles;
    if (o.alpha) angles.push_back(*o.alpha);
    else
        for (int i = 0; i < static_cast<int>(cfg.vertices.size()); ++i) angles.push_back(build_polygon(cfg.vertices, cfg.outer).angle(i));

    std::ostringstream csv;
    csv << "alpha,k,gamma0,gamma1,gamma2,residual1,residual2\n";
    char buf[256];
    for (double a : angles) {
        auto g = gamma_roots(a, c);
        auto res = [&](double x) {
            return c.is_finite() ? std::abs(gamma_condition(x, a, c.lambda())) : std::abs(std::sin(x * (two_pi - a)));
        };
        std::snprintf(buf, sizeof buf, "%.10g,%s,%.12g,%.12g,%.12g,%.3e,%.3e\n", a, kfield(c).c_str(), g[0], g[1], g[2], res(g[1]),
                      res(g[2]));
        csv << buf;
    }
    std::cout << csv.str();
    if (!out.empty()) open_out(out / "gamma.csv") << csv.str();
    return 0;
}

int run_forward(const Options& o, const RunConfig& cfg, const fs::path& out) {
    auto s = make_scene(cfg);
    SvgPlot plot("boundary voltage");
    for (size_t j = 0; j < s.currents.size(); ++j) {
        auto u = solve_any(*s.sys, s.currents[j]);
        auto tr = boundary_trace(u);
        auto f1 = open_out(out / ("field_" + std::to_string(j) + ".csv"));
        u.write_csv(f1);
        auto f2 = open_out(out / ("trace_" + std::to_string(j) + ".csv"));
        tr.write_csv(f2);
        plot.add("current " + std::to_string(j), tr.arc, tr.values);
        std::cout << "current " << j << ": trace norm " << tr.norm() << "\n";
    }
    write_svg(o, out / "trace.svg", plot);
    return 0;
}

int run_shape_derivative(const Options& o, const RunConfig& cfg, const fs::path& out) {
    auto s = make_scene(cfg);
    const Contrast& c = cfg.contrast;
    BoundaryDerivative bd(*s.sys, s.poly, cfg.outer, cfg.test_modes);
    auto u = solve_any(*s.sys, s.currents.front());
    auto U = bd.traces(u);
    auto pairs = open_out(out / "pairings.csv");
    pairs.precision(12);
    pairs << "h_index,g_index,value\n";
    bool ok = true;
    SvgPlot plot("shape derivative of the boundary voltage");
    for (size_t j = 0; j < s.fields.size(); ++j) {
        const auto& [name, h] = s.fields[j];
        auto p = bd.pairings(U, h);
        for (size_t g = 0; g < p.size(); ++g) pairs << j << ',' << g << ',' << p[g] << '\n';
        ExtensionField H(s.buffers, h);
        auto bfv = bd.derivative(U, h);
        auto mat = shape_derivative_material(*s.sys, u, H, c.is_unity());
        auto f1 = open_out(out / ("derivative_" + tag(name) + "_boundary.csv"));
        bfv.write_csv(f1);
        auto f2 = open_out(out / ("derivative_" + tag(name) + "_material.csv"));
        mat.write_csv(f2);
        plot.add(name + " boundary", bfv.arc, bfv.values);
        plot.add(name + " material", mat.arc, mat.values);
        if (c.is_unity()) {
            bool z = bfv.norm() < 1e-12 && mat.norm() < 1e-12;
            std::cout << name << ": norms " << bfv.norm() << " " << mat.norm() << (z ? " ok" : " NONZERO") << "\n";
            ok = ok && z;
            continue;
        }
        double d = (bfv - mat).norm() / mat.norm();
        std::cout << name << ": relative distance boundary/material " << d << (d < 0.05 ? " ok" : " FAIL") << "\n";
        ok = ok && d < 0.05;
    }
    write_svg(o, out / "derivative.svg", plot);
    return ok ? 0 : 1;
}

int run_transmission(const Options& o, const RunConfig& cfg, const fs::path& out) {
    const Contrast& c = cfg.contrast;
    if (!c.is_finite() || c.is_unity())
        throw Error(ErrorKind::Config, "transmission needs a finite contrast k != 1");
    auto s = make_scene(cfg);
    auto spec = corner_spectrum(s.poly, c);
    BoundaryDerivative bd(*s.sys, s.poly, cfg.outer, cfg.test_modes);
    auto u = solve_forward(*s.sys, s.currents.front());
    auto U = bd.traces(u);
    bool ok = true;
    for (const auto& [name, h] : s.fields) {
        ExtensionField H(s.buffers, h);
        auto mat = shape_derivative_material(*s.sys, u, H);
        auto bfv = bd.derivative(U, h);
        auto w = transmission_route(*s.sys, s.poly, u, h, spec);
        {
            auto os = open_out(out / ("trace_comparison_" + tag(name) + ".csv"));
            os.precision(12);
            os << "arc_length,trace_transmission,trace_material,trace_bfv17\n";
            for (int k = 0; k < w.trace.size(); ++k)
                os << w.trace.arc[k] << ',' << w.trace.values[k] << ',' << mat.values[k] << ',' << bfv.values[k] << '\n';
        }
        {
            auto rows = delta_terms(c, w.singular, u, cfg.deltas);
            auto os = open_out(out / ("delta_terms_" + tag(name) + ".csv"));
            os.precision(12);
            os << "delta,vertex_term,singular_term,sum\n";
            for (const auto& r : rows) os << r.delta << ',' << r.vertex_term << ',' << r.singular_term << ',' << r.sum() << '\n';
        }
        {
            auto rows = check_compatibility(s.poly, c, u, h, w.singular, cfg.deltas);
            auto os = open_out(out / ("compatibility_" + tag(name) + ".csv"));
            os.precision(12);
            os << "delta,residual\n";
            for (const auto& r : rows) os << r.delta << ',' << r.residual << '\n';
        }
        SvgPlot plot("derivative trace, " + name);
        plot.add("transmission", w.trace.arc, w.trace.values);
        plot.add("material", mat.arc, mat.values);
        plot.add("boundary formula", bfv.arc, bfv.values);
        write_svg(o, out / ("trace_comparison_" + tag(name) + ".svg"), plot);
        double d = (w.trace - mat).norm() / mat.norm();
        std::cout << name << ": relative distance transmission/material " << d << (d < 0.05 ? " ok" : " FAIL") << "\n";
        ok = ok && d < 0.05;
    }
    return ok ? 0 : 1;
}

int run_taylor(const Options& o, const RunConfig& cfg, const fs::path& out) {
    auto s = make_scene(cfg);
    const Contrast& c = cfg.contrast;
    auto u = solve_any(*s.sys, s.currents.front());
    bool ok = true;
    SvgPlot plot("Taylor remainder", true);
    for (const auto& [name, h] : s.fields) {
        ExtensionField H(s.buffers, h);
        auto d = shape_derivative_material(*s.sys, u, H, true);
        auto tab = taylor_remainder(*s.sys, s.currents.front(), H, d, cfg.taylor_t);
        auto os = open_out(out / ("taylor_" + tag(name) + ".csv"));
        tab.write_csv(os);
        std::vector<double> ts, rs;
        for (const auto& r : tab.rows) ts.push_back(r.t), rs.push_back(r.remainder);
        plot.add(name, ts, rs);
        if (c.is_unity()) {
            std::cout << name << ": derivative norm " << d.norm() << "\n";
            ok = ok && d.norm() < 1e-12;
            continue;
        }
        bool pass = tab.slope >= 1.8 && tab.slope <= 2.2;
        std::cout << name << ": slope " << tab.slope << (pass ? " ok" : " FAIL") << "\n";
        ok = ok && pass;
    }
    write_svg(o, out / "taylor.svg", plot);
    return ok ? 0 : 1;
}

int run_corner_fit(const Options&, const RunConfig& cfg, const fs::path& out) {
    auto s = make_scene(cfg);
    const Contrast& c = cfg.contrast;
    auto spec = corner_spectrum(s.poly, c);
    auto u = solve_any(*s.sys, s.currents.front());
    auto fits = estimate_all_betas(u, s.poly, spec);
    auto os = open_out(out / "corner_fit.csv");
    os.precision(12);
    os << "vertex,gamma,gamma_hat,beta_hat,spread,layers\n";
    bool ok = true;
    for (const auto& f : fits) {
        os << f.vertex << ',' << f.gamma << ',' << f.gamma_hat << ',' << f.beta_hat << ',' << f.spread << ',' << f.layers << '\n';
        double e = std::abs(f.gamma_hat - f.gamma) / (c.is_finite() ? f.gamma : 1.0);
        std::cout << "vertex " << f.vertex << ": gamma " << f.gamma << " fitted " << f.gamma_hat << " beta " << f.beta_hat
                  << (e < 0.05 ? " ok" : " FAIL") << "\n";
        ok = ok && e < 0.05;
    }
    return ok ? 0 : 1;
}

int run_verify(const Options&, const RunConfig& cfg, const fs::path& out) {
    auto rep = run_verification_campaign(cfg.campaign());
    auto os = open_out(out / "report.txt");
    rep.write(os);
    std::cout << rep.str();
    return rep.passed() ? 0 : 1;
}

int run_reconstruct(const Options& o, const RunConfig& cfg, const fs::path& out) {
    if (cfg.truth.empty()) throw Error(ErrorKind::Config, "reconstruct needs reconstruct.truth");
    if (cfg.truth.size() != cfg.vertices.size()) throw Error(ErrorKind::Config, "truth and initial polygon differ in vertex count");
    auto truth = build_polygon(cfg.truth, cfg.outer);
    auto initial = build_polygon(cfg.vertices, cfg.outer);

    std::vector<CurrentSpec> currents = cfg.currents;
    if (currents.size() < 2) currents = {{1, true}, {1, false}};
    MeshOptions data_mesh = cfg.mesh;
    data_mesh.hmax /= cfg.data_refine;
    data_mesh.seed = cfg.seed + 7919;  // a different unstructured seed from the iterates
    auto data = synthesize_data(truth, cfg.outer, cfg.contrast, currents, data_mesh, cfg.noise, cfg.seed);

    ReconOptions opt;
    opt.mesh = cfg.mesh;
    opt.mesh.seed = cfg.seed;
    opt.max_iter = cfg.max_iter;
    opt.modes = cfg.test_modes;
    auto st = reconstruct(data, initial, cfg.outer, cfg.contrast, opt);

    auto log = open_out(out / "recon_log.csv");
    st.write_log_csv(log);
    auto vs = open_out(out / "recon_vertices.csv");
    vs.precision(12);
    vs << "vertex,x,y,truth_x,truth_y,error\n";
    double err = 0.0;
    for (size_t i = 0; i < st.vertices.size(); ++i) {
        double e = (st.vertices[i] - cfg.truth[i]).norm();
        err = std::max(err, e);
        vs << i << ',' << st.vertices[i].x() << ',' << st.vertices[i].y() << ',' << cfg.truth[i].x() << ',' << cfg.truth[i].y() << ','
           << e << '\n';
    }
    std::vector<double> it, res;
    for (const auto& r : st.log) it.push_back(r.iter), res.push_back(std::log10(r.residual));
    SvgPlot plot("log10 residual per accepted iteration");
    plot.add("residual", it, res);
    write_svg(o, out / "recon_residual.svg", plot);

    std::cout << "stop: " << st.stop_reason << ", iterations " << st.log.back().iter << ", max vertex error " << err
              << (err < cfg.vertex_tol ? " ok" : " FAIL") << "\n";
    return err < cfg.vertex_tol ? 0 : 1;
}

int resolve_threads(int flag) {
    int n = flag;
    if (n == 0)
        if (const char* env = std::getenv("POLYSHAPE_THREADS")) n = std::atoi(env);
    if (n == 0) n = 1;
    if (n < 1) throw Error(ErrorKind::Config, "thread count must be positive");
    return n;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"polyshape: shape derivatives of polygonal conductivity inclusions"};
    app.require_subcommand(1);
    Options o;

    using Runner = int (*)(const Options&, const RunConfig&, const fs::path&);
    std::vector<std::pair<CLI::App*, Runner>> subs;
    auto add = [&](const char* name, const char* help, Runner r) {
        auto* sc = app.add_subcommand(name, help);
        sc->add_option("--config", o.config, "config file (ini)");
        sc->add_option("--out", o.out, "output directory");
        sc->add_option("--hmax", o.hmax, "mesh size override")->check(CLI::PositiveNumber);
        sc->add_option("--seed", o.seed, "mesh and noise seed")->check(CLI::NonNegativeNumber);
        sc->add_option("--threads", o.threads, "worker threads (POLYSHAPE_THREADS as fallback)");
        sc->add_flag("--svg", o.svg, "also write SVG plots");
        subs.emplace_back(sc, r);
        return sc;
    };
    auto* g = add("gamma", "corner exponents", run_gamma);
    g->add_option("--alpha", o.alpha, "interior angle");
    g->add_option("--k", o.k, "contrast (0 insulating, inf conducting)");
    g->add_option("--kind", o.kind, "finite, insulating or conducting");
    add("forward", "forward solve and trace export", run_forward);
    add("shape-derivative", "boundary formula and material route", run_shape_derivative);
    add("transmission", "enriched transmission solve and comparisons", run_transmission);
    add("taylor", "Taylor remainder table and slope", run_taylor);
    add("corner-fit", "corner coefficient and exponent estimation", run_corner_fit);
    add("verify", "full verification campaign", run_verify);
    add("reconstruct", "Gauss-Newton reconstruction from synthetic data", run_reconstruct);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    RunConfig cfg;
    fs::path out;
    try {
        if (!o.config.empty()) cfg = load_config(o.config);
        if (o.hmax > 0) cfg.mesh.hmax = o.hmax;
        if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
        Eigen::setNbThreads(resolve_threads(o.threads));
        bool is_gamma = app.got_subcommand("gamma");
        if (!o.out.empty()) out = o.out;
        else if (!is_gamma) out = cfg.out_dir;
        if (!out.empty()) fs::create_directories(out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    for (const auto& [sc, run] : subs) {
        if (!sc->parsed()) continue;
        try {
            return run(o, cfg, out);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Config || e.kind() == ErrorKind::ContrastUnity) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
            std::cerr << "numerical failure: " << e.what() << "\n";
            if (!out.empty()) {
                std::ofstream d(out / "diagnostic.txt");
                d << "subcommand: " << sc->get_name() << "\nerror: " << to_string(e.kind()) << "\nmessage: " << e.what() << "\n";
            }
            return 1;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }
    return 2;
}
