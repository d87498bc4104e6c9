#pragma once

#include "polyshape/shape_derivative.hpp"

#include <random>

namespace polyshape {

/// One Fourier current on the outer boundary.
struct CurrentSpec {
    int mode = 1;
    bool cosine = true;
};

struct ReconLogRow {
    int iter = 0;
    double residual = 0.0;
    double damping = 0.0;
    double max_vertex_update = 0.0;
};

struct ReconOptions {
    MeshOptions mesh;  // hmax, grading and levels for the iterates
    int max_iter = 50;
    double step_tol = 1e-6;
    double residual_tol = 1e-12;  // relative to the data norm
    double damping = 1e-3;        // initial Levenberg parameter, relative to max diag(J^T J)
    double damping_max = 1e8;
    int modes = 8;                // Fourier test currents per trig kind for the Jacobian
    int max_halvings = 8;
};

/// Measured voltages for a list of currents.
struct BoundaryData {
    std::vector<CurrentSpec> currents;
    std::vector<BoundaryFunction> voltages;
};

struct ReconstructionState {
    std::vector<Vec2> vertices;
    Eigen::VectorXd residual;
    Eigen::MatrixXd jacobian;
    double damping = 0.0;
    std::vector<ReconLogRow> log;
    std::string stop_reason;

    void write_log_csv(std::ostream& os) const {
        os.precision(12);
        os << "iter,residual,damping,max_vertex_update\n";
        for (const auto& r : log) os << r.iter << ',' << r.residual << ',' << r.damping << ',' << r.max_vertex_update << '\n';
    }
};

inline FemField solve_any(const FemSystem& sys, const BoundaryFunction& f) {
    return sys.contrast().is_finite() ? solve_forward(sys, f) : solve_degenerate(sys, f);
}

/// Synthetic measurements, optionally with Gaussian noise of relative level `noise` (per current, scaled by max |voltage|).
inline BoundaryData synthesize_data(const Polygon& truth, const OuterDomain& outer, const Contrast& contrast,
                                    const std::vector<CurrentSpec>& currents, const MeshOptions& mesh_opt, double noise = 0.0,
                                    std::uint64_t seed = 1) {
    auto mesh = std::make_shared<const Mesh>(generate_mesh(truth, outer, mesh_opt));
    FemSystem sys(mesh, contrast);
    BoundaryData data;
    data.currents = currents;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    for (const auto& c : currents) {
        auto v = boundary_trace(solve_any(sys, fourier_current(*mesh, outer, c.mode, c.cosine).normalized()));
        if (noise > 0.0) {
            double amp = 0.0;
            for (double x : v.values) amp = std::max(amp, std::abs(x));
            for (double& x : v.values) x += noise * amp * nd(rng);
        }
        data.voltages.push_back(v);
    }
    return data;
}

namespace detail {

inline std::vector<double> root_lumped(const BoundaryFunction& b) {
    std::vector<double> w(b.size());
    for (int k = 0; k < b.size(); ++k) w[k] = std::sqrt(0.5 * (b.edge_length(k) + b.edge_length((k + b.size() - 1) % b.size())));
    return w;
}

struct Model {
    MeshPtr mesh;
    std::shared_ptr<const FemSystem> sys;
    std::vector<FemField> states;
    Eigen::VectorXd residual;
};

inline Model evaluate_model(const Polygon& poly, const OuterDomain& outer, const Contrast& contrast, const BoundaryData& data,
                            const MeshOptions& mesh_opt) {
    Model m;
    m.mesh = std::make_shared<const Mesh>(generate_mesh(poly, outer, mesh_opt));
    m.sys = std::make_shared<const FemSystem>(m.mesh, contrast);
    std::vector<double> r;
    for (size_t c = 0; c < data.currents.size(); ++c) {
        const auto& cs = data.currents[c];
        m.states.push_back(solve_any(*m.sys, fourier_current(*m.mesh, outer, cs.mode, cs.cosine).normalized()));
        auto trace = boundary_trace(m.states.back());
        auto meas = transfer(data.voltages[c], *m.mesh, outer.perimeter()).normalized();
        auto w = root_lumped(trace);
        for (int k = 0; k < trace.size(); ++k) r.push_back(w[k] * (trace.values[k] - meas.values[k]));
    }
    m.residual = Eigen::Map<Eigen::VectorXd>(r.data(), r.size());
    return m;
}

}  // namespace detail

/// Damped Gauss-Newton on the vertex coordinates, Jacobian columns from the boundary-integral route.
inline ReconstructionState reconstruct(const BoundaryData& data, const Polygon& initial, const OuterDomain& outer,
                                       const Contrast& contrast, const ReconOptions& opt = {}) {
    const int n = initial.size();
    double data_norm = 0.0;
    for (const auto& v : data.voltages) data_norm += v.normalized().inner(v.normalized());
    data_norm = std::sqrt(data_norm);

    ReconstructionState st;
    st.vertices = initial.vertices();
    st.damping = opt.damping;
    Polygon poly = initial;
    auto model = detail::evaluate_model(poly, outer, contrast, data, opt.mesh);
    st.residual = model.residual;
    st.log.push_back({0, st.residual.norm(), st.damping, 0.0});

    for (int it = 1; it <= opt.max_iter; ++it) {
        if (st.residual.norm() <= opt.residual_tol * data_norm) {
            st.stop_reason = "residual";
            return st;
        }
        // Jacobian: one column per vertex coordinate
        BoundaryDerivative bd(*model.sys, poly, outer, opt.modes);
        st.jacobian.resize(st.residual.size(), 2 * n);
        int row = 0;
        for (size_t c = 0; c < model.states.size(); ++c) {
            auto U = bd.traces(model.states[c]);
            auto w = detail::root_lumped(boundary_trace(model.states[c]));
            for (int j = 0; j < 2 * n; ++j) {
                auto d = bd.derivative(U, presets::coordinate(poly, j / 2, j % 2));
                for (int k = 0; k < d.size(); ++k) st.jacobian(row + k, j) = w[k] * d.values[k];
            }
            row += static_cast<int>(w.size());
        }
        Eigen::MatrixXd JtJ = st.jacobian.transpose() * st.jacobian;
        Eigen::VectorXd g = st.jacobian.transpose() * st.residual;
        double diag = JtJ.diagonal().maxCoeff();
        if (!(diag > 0.0)) throw Error(ErrorKind::JacobianRankDeficient, "zero Jacobian");

        bool accepted = false;
        while (!accepted) {
            if (st.damping > opt.damping_max) {
                st.stop_reason = "damping";
                return st;
            }
            Eigen::MatrixXd A = JtJ + st.damping * diag * Eigen::MatrixXd::Identity(2 * n, 2 * n);
            Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
                throw Error(ErrorKind::JacobianRankDeficient, "damped normal equations are singular");
            Eigen::VectorXd step = -ldlt.solve(g);
            // invalid iterates halve the step
            std::optional<Polygon> trial;
            for (int h = 0; h <= opt.max_halvings && !trial; ++h, step *= 0.5) {
                std::vector<Vec2> v = st.vertices;
                for (int i = 0; i < n; ++i) v[i] += Vec2(step[2 * i], step[2 * i + 1]);
                try {
                    trial.emplace(build_polygon(v, outer));
                } catch (const Error&) {
                }
            }
            if (!trial) throw Error(ErrorKind::InvalidIterate, "no valid polygon along the step");
            double update = 0.0;
            for (int i = 0; i < n; ++i) update = std::max(update, (trial->vertex(i) - poly.vertex(i)).norm());
            auto tm = detail::evaluate_model(*trial, outer, contrast, data, opt.mesh);
            if (tm.residual.norm() < st.residual.norm()) {
                accepted = true;
                poly = *trial;
                model = std::move(tm);
                st.vertices = poly.vertices();
                st.residual = model.residual;
                st.damping /= 3.0;
                st.log.push_back({it, st.residual.norm(), st.damping, update});
                if (update < opt.step_tol) {
                    st.stop_reason = "step";
                    return st;
                }
            } else {
                st.damping *= 10.0;
            }
        }
    }
    st.stop_reason = "iterations";
    return st;
}

}  // namespace polyshape
