#include "adctl/surrogate.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

namespace adctl {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;) out.push_back(tok);
    return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != ' ' && c != '\t') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

// --- FeatureMap -------------------------------------------------------------

FeatureMap::FeatureMap(const EquationSystem& sys, std::vector<std::pair<std::string, std::string>> bases,
                       const std::vector<std::string>& features)
    : base_text_(std::move(bases)) {
    std::map<std::string, Expr> base_expr;
    for (const auto& [name, text] : base_text_) {
        if (base_expr.count(name)) throw InvalidArgumentError("duplicate base feature '" + name + "'");
        base_expr.emplace(name, parse_expression(text, sys));
    }
    std::set<std::string> seen;
    for (const auto& f : features) {
        const auto factors = split_on(f, '*');
        if (factors.empty() || factors.size() > 2)
            throw InvalidArgumentError("feature '" + f + "' must be a product of one or two bases");
        Expr e;
        std::string name;
        for (std::size_t i = 0; i < factors.size(); ++i) {
            auto it = base_expr.find(factors[i]);
            if (it == base_expr.end()) throw InvalidArgumentError("feature '" + f + "' uses unknown base '" + factors[i] + "'");
            e = i == 0 ? it->second : e * it->second;
            name += (i ? "*" : "") + factors[i];
        }
        if (!seen.insert(name).second) throw InvalidArgumentError("duplicate feature '" + name + "'");
        names_.push_back(name);
        exprs_.push_back(e);
    }
}

std::vector<double> FeatureMap::eval(std::span<const double> values) const {
    std::vector<double> out;
    out.reserve(exprs_.size());
    for (const auto& e : exprs_) out.push_back(e.eval<double>(values));
    return out;
}

std::vector<double> LinearSurrogate::predict(std::span<const double> values) const {
    const Vector phi = to_vector(features.eval(values));
    return to_std(weights * phi);
}

// --- Sampling ---------------------------------------------------------------

std::size_t block_of(const CausalModel& model, const std::string& unknown) {
    const int id = model.system.id_of(unknown);
    for (std::size_t b = 0; b < model.blt.blocks.size(); ++b) {
        const auto& u = model.blt.blocks[b].unknowns;
        if (std::find(u.begin(), u.end(), id) != u.end()) return b;
    }
    throw InvalidArgumentError("no block solves '" + unknown + "'");
}

namespace {

struct Sampler {
    const CausalModel& model;
    std::size_t block;
    std::vector<int> sampled;
    std::vector<std::pair<double, double>> bounds;
    std::vector<char> upstream;  // blocks to evaluate before `block`
    std::mt19937_64 rng;

    Sampler(const CausalModel& m, std::size_t b, const Ranges& ranges, std::uint64_t seed)
        : model(m), block(b), rng(seed) {
        if (b >= m.blt.blocks.size()) throw InvalidArgumentError("block index out of range");
        std::map<int, std::pair<double, double>> by_id;
        for (const auto& [name, r] : ranges) {
            if (!(r.first <= r.second) || !std::isfinite(r.first) || !std::isfinite(r.second))
                throw InvalidArgumentError("invalid sampling range for '" + name + "'");
            by_id[m.system.id_of(name)] = r;
        }
        for (const auto& [id, r] : by_id) {
            sampled.push_back(id);
            bounds.push_back(r);
        }
        const std::set<int> drawn(sampled.begin(), sampled.end());
        for (int u : m.blt.blocks[b].unknowns)
            if (drawn.count(u)) throw InvalidArgumentError("cannot sample the block's own unknown '" + m.system.variable(u).name + "'");
        upstream.assign(b, 0);
        for (std::size_t k = 0; k < b; ++k) {
            const auto& us = m.blt.blocks[k].unknowns;
            const auto n_drawn = std::count_if(us.begin(), us.end(), [&](int u) { return drawn.count(u) > 0; });
            if (n_drawn == 0) upstream[k] = 1;
            else if (static_cast<std::size_t>(n_drawn) != us.size())
                throw InvalidArgumentError("block " + std::to_string(k) + " is only partially covered by sampling ranges");
        }
    }

    /// Fresh draw with upstream quantities filled in.
    std::vector<double> draw() {
        auto values = model.system.default_values();
        for (std::size_t i = 0; i < sampled.size(); ++i) {
            std::uniform_real_distribution<double> U(bounds[i].first, bounds[i].second);
            values[static_cast<std::size_t>(sampled[i])] = U(rng);
        }
        for (std::size_t k = 0; k < block; ++k)
            if (upstream[k]) solve_block(model.system, model.blt.blocks[k], values);
        return values;
    }
};

double block_residual(const EquationSystem& sys, const Block& b, std::span<const double> values) {
    double r = 0.0;
    for (auto e : b.equations) {
        const auto& eq = sys.equations()[e];
        r = std::max(r, std::abs(eq.lhs.eval<double>(values) - eq.rhs.eval<double>(values)));
    }
    return r;
}

}  // namespace

TrainingSet sample_block(const CausalModel& model, std::size_t block, const Ranges& ranges, std::size_t n,
                         std::uint64_t seed) {
    Sampler sampler(model, block, ranges, seed);
    const Block& b = model.blt.blocks[block];
    TrainingSet ts;
    ts.sampled = sampler.sampled;
    ts.outputs = b.unknowns;
    ts.seed = seed;
    ts.ranges = ranges;
    ts.targets.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(b.unknowns.size()));
    std::size_t attempts = 0;
    while (ts.values.size() < n) {
        if (attempts++ >= 10 * n)
            throw ConvergenceError("block sampling exceeded " + std::to_string(10 * n) + " attempts", 0.0);
        std::vector<double> values;
        try {
            values = sampler.draw();
            solve_block(model.system, b, values);
        } catch (const Error&) {
            continue;
        }
        if (!(block_residual(model.system, b, values) <= 1e-10)) continue;
        const auto row = static_cast<Eigen::Index>(ts.values.size());
        for (std::size_t j = 0; j < b.unknowns.size(); ++j)
            ts.targets(row, static_cast<Eigen::Index>(j)) = values[static_cast<std::size_t>(b.unknowns[j])];
        ts.values.push_back(std::move(values));
    }
    return ts;
}

// --- Fitting ----------------------------------------------------------------

LinearSurrogate fit(const TrainingSet& ts, const FeatureMap& fm, const EquationSystem& sys) {
    const auto n = static_cast<Eigen::Index>(ts.size());
    const auto k = static_cast<Eigen::Index>(fm.size());
    if (k == 0) throw InvalidArgumentError("empty feature map");
    if (n < k)
        throw PreconditionError("fit needs at least " + std::to_string(k) + " samples, got " + std::to_string(n));
    Matrix phi(n, k);
    for (Eigen::Index i = 0; i < n; ++i) phi.row(i) = to_vector(fm.eval(ts.values[static_cast<std::size_t>(i)])).transpose();
    if (!phi.allFinite()) throw NonFiniteError("non-finite feature value", 0);

    Eigen::ColPivHouseholderQR<Matrix> qr(phi);
    if (qr.rank() < k) {
        std::vector<std::string> dependent;
        for (Eigen::Index j = qr.rank(); j < k; ++j)
            dependent.push_back(fm.names()[static_cast<std::size_t>(qr.colsPermutation().indices()(j))]);
        std::sort(dependent.begin(), dependent.end());
        std::string msg = "rank-deficient feature matrix; dependent columns:";
        for (const auto& d : dependent) msg += " " + d;
        throw RankDeficiencyError(msg, dependent);
    }
    LinearSurrogate s;
    s.features = fm;
    for (int u : ts.outputs) s.outputs.push_back(sys.variable(u).name);
    s.weights = qr.solve(ts.targets).transpose();
    return s;
}

// --- Replacement ------------------------------------------------------------

CausalModel replace_block(const CausalModel& model, std::size_t block, const LinearSurrogate& s) {
    if (block >= model.blt.blocks.size()) throw InvalidArgumentError("block index out of range");
    const Block& b = model.blt.blocks[block];
    std::set<std::string> want, have(s.outputs.begin(), s.outputs.end());
    for (int u : b.unknowns) want.insert(model.system.variable(u).name);
    if (want != have || have.size() != s.outputs.size())
        throw InvalidArgumentError("surrogate outputs do not match the block unknowns");
    if (s.weights.rows() != static_cast<Eigen::Index>(s.outputs.size()) ||
        s.weights.cols() != static_cast<Eigen::Index>(s.features.size()) || !s.weights.allFinite())
        throw InvalidArgumentError("surrogate weight matrix has the wrong shape or non-finite entries");

    EquationSystem sys = model.system;
    sys.remove_equations(std::set<std::size_t>(b.equations.begin(), b.equations.end()));
    // Feature expressions were parsed against a system that shares variable ids
    // with this one, so they can be used directly.
    for (std::size_t o = 0; o < s.outputs.size(); ++o) {
        Expr rhs = Expr::constant(0.0);
        for (std::size_t j = 0; j < s.features.size(); ++j) {
            const double w = s.weights(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(j));
            rhs = rhs + Expr::constant(w) * s.features.expressions()[j];
        }
        sys.add_equation({Expr::variable(sys.id_of(s.outputs[o])), rhs, -1, "surrogate"});
    }
    CausalModel out = causalize_reduced(std::move(sys), model.dummies);
    if (out.blt.newton_blocks() != 0)
        throw ReplacementIncompleteError(std::to_string(out.blt.newton_blocks()) +
                                         " Newton block(s) remain after replacement");
    return out;
}

double surrogate_residual(const LinearSurrogate& s, const CausalModel& model, std::size_t block,
                          const Ranges& ranges, std::size_t m, std::uint64_t seed) {
    if (m == 0) throw PreconditionError("surrogate_residual needs at least one sample");
    Sampler sampler(model, block, ranges, seed);
    const Block& b = model.blt.blocks[block];
    double worst = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        auto values = sampler.draw();
        const auto y = s.predict(values);
        for (std::size_t o = 0; o < s.outputs.size(); ++o)
            values[static_cast<std::size_t>(model.system.id_of(s.outputs[o]))] = y[o];
        worst = std::max(worst, block_residual(model.system, b, values));
    }
    return worst;
}

// --- Persistence ------------------------------------------------------------

std::string write_surrogate(const LinearSurrogate& s) {
    std::ostringstream os;
    os << "features";
    for (const auto& n : s.features.names()) os << ' ' << n;
    os << '\n';
    for (const auto& [name, text] : s.features.bases()) os << "base " << name << " = " << text << '\n';
    for (std::size_t o = 0; o < s.outputs.size(); ++o) {
        os << s.outputs[o];
        for (Eigen::Index j = 0; j < s.weights.cols(); ++j)
            os << ' ' << format_double(s.weights(static_cast<Eigen::Index>(o), j));
        os << '\n';
    }
    return os.str();
}

LinearSurrogate read_surrogate(const std::string& text, const EquationSystem& sys) {
    std::istringstream is(text);
    std::string line;
    std::vector<std::string> features;
    std::vector<std::pair<std::string, std::string>> bases;
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (toks[0] == "features") {
            features.assign(toks.begin() + 1, toks.end());
        } else if (toks[0] == "base") {
            const auto eq = line.find('=');
            if (toks.size() < 4 || eq == std::string::npos)
                throw ParseError("malformed base line", lineno, 1);
            bases.emplace_back(toks[1], line.substr(eq + 1));
        } else {
            std::vector<double> w;
            for (std::size_t i = 1; i < toks.size(); ++i) {
                std::size_t used = 0;
                try {
                    w.push_back(std::stod(toks[i], &used));
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != toks[i].size()) throw ParseError("bad weight '" + toks[i] + "'", lineno, 1);
            }
            rows.emplace_back(toks[0], std::move(w));
        }
    }
    for (auto& [name, t] : bases) {
        const auto first = t.find_first_not_of(" \t");
        t = first == std::string::npos ? std::string() : t.substr(first);
    }
    LinearSurrogate s;
    s.features = FeatureMap(sys, bases, features);
    s.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(features.size()));
    for (std::size_t o = 0; o < rows.size(); ++o) {
        if (rows[o].second.size() != features.size())
            throw InvalidArgumentError("output '" + rows[o].first + "' has " + std::to_string(rows[o].second.size()) +
                                       " weights, expected " + std::to_string(features.size()));
        s.outputs.push_back(rows[o].first);
        for (std::size_t j = 0; j < features.size(); ++j)
            s.weights(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(j)) = rows[o].second[j];
    }
    return s;
}

}  // namespace adctl
