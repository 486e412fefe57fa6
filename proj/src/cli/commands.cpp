#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <boost/version.hpp>
#include <json.hpp>

#include "adctl/cli.hpp"
#include "adctl/estimation.hpp"
#include "adctl/linctl.hpp"
#include "adctl/models.hpp"
#include "adctl/mpc.hpp"
#include "adctl/sim.hpp"
#include "adctl/structural.hpp"
#include "adctl/surrogate.hpp"

#ifndef ADCTL_VERSION
#define ADCTL_VERSION "0.0.0"
#endif

namespace adctl::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
    return buf;
}

std::string read_text(const fs::path& p, const char* what) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError(std::string("cannot open ") + what + " " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Collects output files so the manifest can list them.
class Outputs {
public:
    Outputs(const RunContext& ctx, std::string command) : ctx_(ctx), command_(std::move(command)) {
        std::error_code ec;
        fs::create_directories(ctx.out_dir, ec);
        if (ec) throw ConfigError("cannot create output directory " + ctx.out_dir.string() + ": " + ec.message());
    }

    void write(const std::string& name, const std::string& body) {
        std::ofstream out(ctx_.out_dir / name, std::ios::binary);
        if (!out || !(out << body)) throw ConfigError("cannot write " + (ctx_.out_dir / name).string());
        files_.push_back(name);
    }

    void log(const std::string& line) const {
        if (ctx_.log) *ctx_.log << line << '\n';
    }

    /// run.json: config hash, seed, versions, files. No timestamps, so
    /// repeated runs stay byte-identical.
    int finish(const std::string& config_text, std::uint64_t seed, int status) {
        nlohmann::json j;
        j["command"] = command_;
        j["config_fnv1a"] = fnv1a_hex(config_text);
        j["seed"] = seed;
        j["status"] = status;
        j["outputs"] = files_;
        j["versions"] = {{"adctl", ADCTL_VERSION},
                         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                       "." + std::to_string(EIGEN_MINOR_VERSION)},
                         {"boost", BOOST_LIB_VERSION}};
        std::ofstream out(ctx_.out_dir / "run.json", std::ios::binary);
        if (!out || !(out << j.dump(2) << '\n')) throw ConfigError("cannot write run.json");
        return status;
    }

private:
    const RunContext& ctx_;
    std::string command_;
    std::vector<std::string> files_;
};

std::uint64_t seed_of(const RunConfig& cfg, const RunContext& ctx) {
    return ctx.seed ? *ctx.seed : cfg.integer("run", "seed", 1);
}

std::string matrix_csv(const Matrix& M, const std::vector<std::string>& header) {
    std::ostringstream os;
    for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
    os << '\n';
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? "," : "") << fmt17(M(i, j));
        os << '\n';
    }
    return os.str();
}

std::string eigen_csv(const Matrix& A) {
    std::vector<std::complex<double>> ev;
    if (A.rows() > 0) {
        Eigen::EigenSolver<Matrix> es(A, false);
        for (Eigen::Index i = 0; i < A.rows(); ++i) ev.push_back(es.eigenvalues()[i]);
    }
    std::sort(ev.begin(), ev.end(), [](auto a, auto b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    std::ostringstream os;
    os << "real,imag\n";
    for (const auto& e : ev) os << fmt17(e.real()) << ',' << fmt17(e.imag()) << '\n';
    return os.str();
}

CausalModel load_causal(const RunConfig& cfg) {
    return causalize(parse_model(read_text(cfg.path("run", "model"), "model")));
}

Ranges ranges_of(const RunConfig& cfg) {
    Ranges r;
    for (const auto& [name, value] : cfg.entries("ranges")) {
        const auto v = cfg.list("ranges", name);
        if (v.size() != 2 || !(v[0] <= v[1])) throw ConfigError("[ranges] " + name + ": expected 'low, high'");
        r[name] = {v[0], v[1]};
    }
    return r;
}

struct Conversion {
    std::size_t block = 0;
    LinearSurrogate surrogate;
    CausalModel model;
};

/// Samples the configured block, fits the feature map and swaps the block
/// for the regression. Empty when the model has no Newton block.
std::optional<Conversion> convert(const CausalModel& model, const RunConfig& cfg, std::uint64_t seed) {
    std::optional<std::size_t> block;
    if (cfg.has("surrogate", "block")) {
        block = block_of(model, cfg.str("surrogate", "block"));
    } else {
        for (std::size_t b = 0; b < model.blt.blocks.size(); ++b)
            if (model.blt.blocks[b].tag == SolverTag::Newton) {
                block = b;
                break;
            }
    }
    if (!block) return std::nullopt;
    std::vector<std::pair<std::string, std::string>> bases;
    for (const auto& kv : cfg.entries("bases")) bases.push_back(kv);
    std::vector<std::string> features;
    std::istringstream is(cfg.str("surrogate", "features"));
    for (std::string f; std::getline(is, f, ',');) {
        f.erase(std::remove_if(f.begin(), f.end(), [](unsigned char c) { return std::isspace(c); }), f.end());
        if (!f.empty()) features.push_back(f);
    }
    const FeatureMap fm(model.system, bases, features);
    const auto n = cfg.integer("surrogate", "samples", 1000);
    const auto ts = sample_block(model, *block, ranges_of(cfg), n, seed);
    Conversion c;
    c.block = *block;
    c.surrogate = fit(ts, fm, model.system);
    c.model = replace_block(model, *block, c.surrogate);
    return c;
}

/// The model's plant, after block replacement when a [surrogate] section is present.
Plant plant_from(const RunConfig& cfg, std::uint64_t seed, const Outputs& out) {
    CausalModel model = load_causal(cfg);
    if (cfg.has_section("surrogate")) {
        if (auto c = convert(model, cfg, seed)) {
            out.log("replaced block " + std::to_string(c->block) + " by the fitted surrogate");
            model = std::move(c->model);
        }
    }
    return plant_of(model);
}

Equilibrium equilibrium_from(const RunConfig& cfg, const Plant& plant) {
    std::map<std::string, double> pins;
    for (const auto& [name, value] : cfg.entries("pins")) pins[name] = cfg.number("pins", name);
    std::vector<double> guess = cfg.has("equilibrium", "guess") ? cfg.list("equilibrium", "guess")
                                                                 : std::vector<double>(plant.nx() + plant.nu(), 0.0);
    if (guess.size() != plant.nx() + plant.nu())
        throw ConfigError("[equilibrium] guess needs " + std::to_string(plant.nx() + plant.nu()) + " values");
    return find_equilibrium(plant, pins, std::move(guess));
}

std::vector<std::complex<double>> poles_of(const RunConfig& cfg) {
    std::vector<std::complex<double>> poles;
    for (double v : cfg.list("control", "poles")) poles.emplace_back(v, 0.0);
    return poles;
}

std::string plot_script(const std::string& title, const std::vector<std::string>& files, std::size_t columns) {
    std::ostringstream os;
    os << "# gnuplot script, run with: gnuplot -persist " << "plot.gp\n";
    os << "set datafile separator ','\n";
    os << "set key autotitle columnhead\n";
    os << "set xlabel 't [s]'\n";
    os << "set title '" << title << "'\n";
    os << "set grid\n";
    os << "plot ";
    bool first = true;
    for (const auto& f : files) {
        os << (first ? "" : ", \\\n     ") << "for [i=2:" << columns + 1 << "] '" << f
           << "' using 1:i with lines title columnhead(i).' (" << f << ")'";
        first = false;
    }
    os << '\n';
    return os.str();
}

}  // namespace

int cmd_blt(const fs::path& model, std::ostream& out, const RunContext* ctx) {
    const std::string text = read_text(model, "model");
    const std::string listing = format_blt(causalize(parse_model(text)));
    out << listing;
    if (!ctx) return kOk;
    Outputs files(*ctx, "blt");
    files.write("blt.txt", listing);
    return files.finish(text, 0, kOk);
}

int cmd_linearize(const RunConfig& cfg, const RunContext& ctx) {
    Outputs out(ctx, "linearize");
    const auto seed = seed_of(cfg, ctx);
    const Plant plant = plant_from(cfg, seed, out);
    const auto eq = equilibrium_from(cfg, plant);
    const auto lm = linearize(plant, eq);

    std::ostringstream eqs;
    eqs << "name,value\n";
    for (std::size_t i = 0; i < plant.nx(); ++i) eqs << plant.states[i] << ',' << fmt17(eq.x[i]) << '\n';
    for (std::size_t i = 0; i < plant.nu(); ++i) eqs << plant.inputs[i] << ',' << fmt17(eq.u[i]) << '\n';
    out.write("equilibrium.csv", eqs.str());
    out.write("A.csv", matrix_csv(lm.A, plant.states));
    out.write("B.csv", matrix_csv(lm.B, plant.inputs));
    out.write("eigenvalues.csv", eigen_csv(lm.A));
    if (cfg.has("control", "poles")) {
        const auto law = pole_place(lm, poles_of(cfg));
        out.write("K.csv", matrix_csv(law.K, plant.states));
        out.write("closed_loop_eigenvalues.csv", eigen_csv(lm.A - lm.B * law.K));
    }
    out.log("linearized " + std::to_string(plant.nx()) + " states, " + std::to_string(plant.nu()) + " inputs");
    return out.finish(cfg.text(), seed, kOk);
}

int cmd_convert(const RunConfig& cfg, const RunContext& ctx) {
    Outputs out(ctx, "convert");
    const auto seed = seed_of(cfg, ctx);
    const CausalModel model = load_causal(cfg);
    const auto c = convert(model, cfg, seed);
    std::ostringstream report;
    if (!c) {
        report << "nothing to replace\n";
        report << "pure triangular: " << (model.blt.newton_blocks() == 0 ? "true" : "false") << '\n';
        out.write("report.txt", report.str());
        out.log("nothing to replace");
        return out.finish(cfg.text(), seed, kOk);
    }
    const auto& blk = model.blt.blocks[c->block];
    report << "replaced block " << c->block << ": size " << blk.size() << ", unknowns [";
    for (std::size_t i = 0; i < blk.unknowns.size(); ++i)
        report << (i ? ", " : "") << model.system.variable(blk.unknowns[i]).name;
    report << "]\n";
    report << "features: " << c->surrogate.features.size() << '\n';
    report << "newton blocks: " << c->model.blt.newton_blocks() << '\n';
    report << "pure triangular: " << (c->model.blt.newton_blocks() == 0 ? "true" : "false") << '\n';
    report << '\n' << format_blt(c->model);
    out.write("surrogate.txt", write_surrogate(c->surrogate));
    out.write("report.txt", report.str());
    out.log(report.str());
    return out.finish(cfg.text(), seed, kOk);
}

int cmd_simulate(const RunConfig& cfg, const RunContext& ctx) {
    Outputs out(ctx, "simulate");
    const auto seed = seed_of(cfg, ctx);
    const Plant plant = plant_from(cfg, seed, out);
    const auto x0 = cfg.list("simulate", "x0");
    const double T = cfg.number("simulate", "T");
    const double dt = cfg.number("simulate", "dt", 0.01);

    Controller controller;
    if (cfg.has("control", "poles")) {
        const auto lm = linearize(plant, equilibrium_from(cfg, plant));
        const auto law = pole_place(lm, poles_of(cfg));
        controller = [law](double, std::span<const double> x) { return feedback_control(law, x); };
    } else {
        std::vector<double> u = cfg.has("simulate", "u") ? cfg.list("simulate", "u") : std::vector<double>(plant.nu(), 0.0);
        if (u.size() != plant.nu()) throw ConfigError("[simulate] u needs " + std::to_string(plant.nu()) + " values");
        controller = [u](double, std::span<const double>) { return u; };
    }
    const Trajectory tr = simulate(plant, controller, x0, T, dt);
    out.write("trajectory.csv", tr.to_csv());
    out.write("plot.gp", plot_script("closed-loop simulation", {"trajectory.csv"}, plant.nx() + plant.nu()));
    if (tr.failed) {
        out.log("simulation stopped early: " + tr.message);
        return out.finish(cfg.text(), seed, kNumericalFailure);
    }
    if (!tr.states.empty()) {
        std::ostringstream os;
        os << "final state at t=" << fmt17(tr.times.back()) << ':';
        for (std::size_t i = 0; i < plant.nx(); ++i) os << ' ' << plant.states[i] << '=' << fmt17(tr.states.back()[i]);
        out.log(os.str());
    }
    return out.finish(cfg.text(), seed, kOk);
}

int cmd_mpc(const RunConfig& cfg, const RunContext& ctx) {
    Outputs out(ctx, "mpc");
    const auto seed = seed_of(cfg, ctx);

    VectorFunction field;
    std::vector<std::string> states, inputs;
    const std::string dyn = cfg.str("mpc", "dynamics", "pendulum");
    if (dyn == "pendulum") {
        field = pendulum_field();
        states = {"x", "dx", "theta", "dtheta"};
        inputs = {"F"};
    } else if (dyn == "model") {
        const Plant plant = plant_of(load_causal(cfg));
        field = plant.field;
        states = plant.states;
        inputs = plant.inputs;
    } else {
        throw ConfigError("[mpc] dynamics must be 'pendulum' or 'model', got '" + dyn + "'");
    }
    const auto z0 = cfg.list("mpc", "z0");
    const auto zN = cfg.list("mpc", "zN");
    if (z0.size() != states.size() || zN.size() != states.size())
        throw ConfigError("[mpc] z0 and zN need " + std::to_string(states.size()) + " values");
    MpcProblem p = make_problem(field, z0, zN, cfg.number("mpc", "u_max", 10.0), cfg.number("mpc", "t0", 0.0),
                                cfg.number("mpc", "tN", 3.0), cfg.integer("mpc", "samples", 50),
                                cfg.integer("mpc", "hidden", 30));
    if (inputs.size() != p.nu()) throw ConfigError("[mpc] only single-input dynamics are supported");
    p.state_names = states;
    p.input_names = inputs;
    p.per_sample = cfg.flag("mpc", "per_sample", false);

    SqpConfig sc;
    sc.seed = seed;
    sc.max_iterations = static_cast<int>(cfg.integer("mpc", "max_iterations", 2000));
    sc.constraint_tol = cfg.number("mpc", "constraint_tol", sc.constraint_tol);
    sc.step_tol = cfg.number("mpc", "step_tol", sc.step_tol);
    sc.init_low = cfg.number("mpc", "init_low", sc.init_low);
    sc.init_high = cfg.number("mpc", "init_high", sc.init_high);
    const std::string hess = cfg.str("mpc", "hessian", "bfgs");
    if (hess == "bfgs")
        sc.hessian = SqpHessian::Bfgs;
    else if (hess == "identity")
        sc.hessian = SqpHessian::Identity;
    else
        throw ConfigError("[mpc] hessian must be 'bfgs' or 'identity'");
    try {
        sc.validate();
    } catch (const InvalidArgumentError& e) {
        throw ConfigError(e.what());
    }

    const SqpResult r = sqp_solve(p, sc);
    const auto roll = rollout_check(p, r.w, cfg.number("mpc", "rollout_dt", 1e-3));

    std::ostringstream summary;
    summary << "success: " << (r.report.success ? "true" : "false") << '\n';
    summary << "iterations: " << r.report.iterations << '\n';
    summary << "violation: " << fmt17(r.report.violation) << '\n';
    summary << "dynamics_residual: " << fmt17(r.report.dynamics_residual) << '\n';
    summary << "boundary_error: " << fmt17(r.report.boundary_error) << '\n';
    summary << "max_input: " << fmt17(r.report.max_input) << '\n';
    if (!roll.ode.states.empty()) {
        summary << "rollout_final:";
        for (double v : roll.ode.states.back()) summary << ' ' << fmt17(v);
        summary << '\n';
    }
    for (const auto& n : r.report.notes) summary << "note: " << n << '\n';

    out.write("solution.txt", format_solution(p, r.w));
    out.write("report.csv", r.report.to_csv());
    out.write("summary.txt", summary.str());
    out.write("mpc.csv", roll.mpc.to_csv());
    out.write("ode.csv", roll.ode.to_csv());
    out.write("plot.gp", plot_script("network trajectory vs ODE rollout", {"mpc.csv", "ode.csv"},
                                     states.size() + inputs.size()));
    out.log(summary.str());
    return out.finish(cfg.text(), seed, r.report.success && !roll.ode.failed ? kOk : kNumericalFailure);
}

int cmd_ekf(const RunConfig& cfg, const RunContext& ctx) {
    Outputs out(ctx, "ekf");
    const auto seed = seed_of(cfg, ctx);
    auto to_matrix = [&](const std::string& key, std::size_t rows, std::size_t cols) {
        const auto m = cfg.matrix("ekf", key);
        if (m.size() != rows || (rows && m.front().size() != cols))
            throw ConfigError("[ekf] " + key + " must be " + std::to_string(rows) + "x" + std::to_string(cols));
        Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
        return M;
    };
    auto to_list = [&](const std::string& key, std::size_t n) {
        const auto v = cfg.list("ekf", key);
        if (v.size() != n) throw ConfigError("[ekf] " + key + " needs " + std::to_string(n) + " values");
        return v;
    };

    const std::string system = cfg.str("ekf", "system");
    VectorFunction f;
    std::vector<std::string> names;
    std::size_t nx = 0, nu = 0;
    if (system == "linear") {
        const auto a = cfg.matrix("ekf", "A");
        nx = a.size();
        const Matrix A = to_matrix("A", nx, nx);
        Matrix B(static_cast<Eigen::Index>(nx), 0);
        if (cfg.has("ekf", "B")) {
            nu = cfg.matrix("ekf", "B").front().size();
            B = to_matrix("B", nx, nu);
        }
        f = VectorFunction::generic(nx + nu, 0, nx, [A, B](auto z, std::span<const double>) {
            using S = std::remove_cvref_t<decltype(z[0])>;
            const auto n = A.rows(), m = B.cols();
            std::vector<S> dz(static_cast<std::size_t>(n), S(0.0));
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < n; ++j) dz[i] += A(i, j) * z[j];
                for (Eigen::Index j = 0; j < m; ++j) dz[i] += B(i, j) * z[n + j];
            }
            return dz;
        });
        for (std::size_t i = 0; i < nx; ++i) names.push_back("x" + std::to_string(i + 1));
    } else if (system == "pendulum") {
        f = pendulum_field();
        nx = 4;
        nu = 1;
        names = {"x", "dx", "theta", "dtheta"};
    } else {
        throw ConfigError("[ekf] system must be 'linear' or 'pendulum', got '" + system + "'");
    }
    const auto crows = cfg.matrix("ekf", "C");
    const std::size_t ny = crows.size();
    const Matrix C = to_matrix("C", ny, nx);
    const VectorFunction h = VectorFunction::generic(nx, 0, ny, [C](auto x, std::span<const double>) {
        using S = std::remove_cvref_t<decltype(x[0])>;
        std::vector<S> y(static_cast<std::size_t>(C.rows()), S(0.0));
        for (Eigen::Index i = 0; i < C.rows(); ++i)
            for (Eigen::Index j = 0; j < C.cols(); ++j) y[i] += C(i, j) * x[j];
        return y;
    });
    const Matrix Q = to_matrix("Q", nx, nx);
    const Matrix R = to_matrix("R", ny, ny);
    const Matrix P0 = to_matrix("P0", nx, nx);
    std::vector<double> x = to_list("x0", nx);
    const std::vector<double> xhat0 = cfg.has("ekf", "xhat0") ? to_list("xhat0", nx) : x;
    const std::vector<double> u = cfg.has("ekf", "u") ? to_list("u", nu) : std::vector<double>(nu, 0.0);
    const auto steps = cfg.integer("ekf", "steps", 100);
    const double dt = cfg.number("ekf", "dt", 0.01);
    const bool noise = cfg.flag("ekf", "noise", true);
    if (!(dt > 0.0)) throw ConfigError("[ekf] dt must be positive");

    // Truth noise: w ~ N(0, Q dt), v ~ N(0, R).
    const Matrix Lq = Eigen::SelfAdjointEigenSolver<Matrix>(Q * dt).operatorSqrt();
    const Matrix Lr = Eigen::SelfAdjointEigenSolver<Matrix>(R).operatorSqrt();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    auto draw = [&](Eigen::Index n) {
        Vector e(n);
        for (Eigen::Index i = 0; i < n; ++i) e[i] = gauss(rng);
        return e;
    };

    EkfState est{Eigen::Map<const Vector>(xhat0.data(), static_cast<Eigen::Index>(nx)), P0, 0.0};
    std::ostringstream csv, meas;
    csv << 't';
    for (const auto& n : names) csv << ',' << n;
    for (const auto& n : names) csv << ",est_" << n;
    for (const auto& n : names) csv << ",var_" << n;
    csv << '\n';
    meas << 't';
    for (std::size_t i = 0; i < ny; ++i) meas << ",y" << i + 1;
    meas << '\n';
    auto row = [&](double t) {
        csv << fmt17(t);
        for (double v : x) csv << ',' << fmt17(v);
        for (Eigen::Index i = 0; i < est.x.size(); ++i) csv << ',' << fmt17(est.x[i]);
        for (Eigen::Index i = 0; i < est.P.rows(); ++i) csv << ',' << fmt17(est.P(i, i));
        csv << '\n';
    };
    row(0.0);
    for (std::uint64_t k = 1; k <= steps; ++k) {
        x = rk4_step(f, x, u, dt);
        if (noise) {
            const Vector w = Lq * draw(static_cast<Eigen::Index>(nx));
            for (std::size_t i = 0; i < nx; ++i) x[i] += w[static_cast<Eigen::Index>(i)];
        }
        Vector y = C * Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(nx));
        if (noise) y += Lr * draw(static_cast<Eigen::Index>(ny));
        est = ekf_predict(est, f, u, Q, dt);
        est = ekf_update(est, h, std::span<const double>(y.data(), ny), R);
        const double t = static_cast<double>(k) * dt;
        row(t);
        meas << fmt17(t);
        for (Eigen::Index i = 0; i < y.size(); ++i) meas << ',' << fmt17(y[i]);
        meas << '\n';
    }
    out.write("estimate.csv", csv.str());
    out.write("measurements.csv", meas.str());
    out.write("plot.gp", plot_script("truth and estimate", {"estimate.csv"}, 2 * nx));
    out.log("filtered " + std::to_string(steps) + " steps");
    return out.finish(cfg.text(), seed, kOk);
}

}  // namespace adctl::cli
