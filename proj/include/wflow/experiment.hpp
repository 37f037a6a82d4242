#ifndef WFLOW_EXPERIMENT_HPP
#define WFLOW_EXPERIMENT_HPP

// Config-driven experiment runner behind `wflow run`. Needs nlohmann/json
// (vendor/json.hpp) on the include path.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wflow/bregman.hpp"
#include "wflow/bures.hpp"
#include "wflow/diagnostics.hpp"
#include "wflow/error.hpp"
#include "wflow/functionals.hpp"
#include "wflow/io.hpp"
#include "wflow/kernels.hpp"
#include "wflow/measures.hpp"
#include "wflow/potentials.hpp"
#include "wflow/preconditioners.hpp"
#include "wflow/schemes.hpp"

namespace wflow::experiment {

using json = nlohmann::ordered_json;

/// Malformed config: the message carries a line:column or a field path.
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// ---------------------------------------------------------------------------
// Strict field access
// ---------------------------------------------------------------------------

namespace detail {

/// Reads the members of one JSON object and rejects the ones nobody asked for.
class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    std::string where(std::string_view key = {}) const {
        if (key.empty()) return path_.empty() ? std::string("<root>") : path_;
        return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        if (!obj_.contains(key)) throw ConfigError(where(key) + ": required field is missing");
        return obj_.at(key);
    }

    double number(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(where(key) + ": must be finite");
        return x;
    }
    double number(const std::string& key, double fallback) { return has(key) ? number(key) : (seen_.insert(key), fallback); }

    long long integer(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        return v.get<long long>();
    }
    long long integer(const std::string& key, long long fallback) {
        return has(key) ? integer(key) : (seen_.insert(key), fallback);
    }

    std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
        seen_.insert(key);
        if (!has(key)) return fallback;
        const json& v = obj_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw ConfigError(where(key) + ": expected a nonnegative integer");
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool fallback) {
        seen_.insert(key);
        if (!has(key)) return fallback;
        const json& v = obj_.at(key);
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& fallback) {
        return has(key) ? string(key) : (seen_.insert(key), fallback);
    }

    Eigen::VectorXd vector(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array() || v.empty()) throw ConfigError(where(key) + ": expected a nonempty array of numbers");
        Eigen::VectorXd out(static_cast<Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(where(key) + "[" + std::to_string(i) + "]: expected a number");
            out(static_cast<Index>(i)) = v[i].get<double>();
        }
        return out;
    }

    /// A square matrix given as rows, or a bare array read as its diagonal.
    Eigen::MatrixXd matrix(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array() || v.empty()) throw ConfigError(where(key) + ": expected a nonempty array");
        if (!v[0].is_array()) return vector(key).asDiagonal();
        const auto n = static_cast<Index>(v.size());
        Eigen::MatrixXd out(n, n);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_array() || v[i].size() != v.size())
                throw ConfigError(where(key) + "[" + std::to_string(i) + "]: expected a row of length " +
                                  std::to_string(v.size()));
            for (std::size_t j = 0; j < v.size(); ++j) {
                if (!v[i][j].is_number())
                    throw ConfigError(where(key) + "[" + std::to_string(i) + "][" + std::to_string(j) +
                                      "]: expected a number");
                out(static_cast<Index>(i), static_cast<Index>(j)) = v[i][j].get<double>();
            }
        }
        return out;
    }

    Fields object(const std::string& key) { return Fields(raw(key), where(key)); }

    /// Throws on any member that was never read.
    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown field");
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename Fn>
auto guarded(const std::string& where, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

/// Preset defaults overlaid by the user document. A sub-object whose "type"
/// differs from the preset's replaces it instead of merging.
inline json overlay(const json& base, const json& user) {
    if (!base.is_object() || !user.is_object()) return user;
    if (base.contains("type") && user.contains("type") && base.at("type") != user.at("type")) return user;
    json out = base;
    for (auto it = user.begin(); it != user.end(); ++it)
        out[it.key()] = out.contains(it.key()) ? overlay(out.at(it.key()), it.value()) : it.value();
    return out;
}

inline std::string line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return std::to_string(line) + ":" + std::to_string(col);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"ring", "ellipsoid", "gaussian-flow", "simplex", "align", "custom"};
    return names;
}

/// Default document of a preset. "custom" has no defaults.
inline json preset_defaults(const std::string& name) {
    const json gaussian_init = {{"type", "gaussian"}, {"n", 100}, {"mean", {0.0, 0.0}}, {"cov", {0.0625, 0.0625}}};
    if (name == "ring")
        return {{"functional", {{"type", "interaction"}, {"kernel", "quartic-well"}}},
                {"method", {{"type", "md"}, {"mirror", {{"type", "interaction"}, {"kernel", "K4"}}}}},
                {"scheme", {{"tau", 0.1}, {"max_iter", 120}, {"descent_check", true}}},
                {"source", gaussian_init}};
    if (name == "ellipsoid")
        return {{"functional", {{"type", "interaction"}, {"kernel", "quartic-well"}, {"sigma", {100.0, 0.1}}}},
                {"method",
                 {{"type", "md"}, {"mirror", {{"type", "interaction"}, {"kernel", "K4"}, {"sigma", {100.0, 0.1}}}}}},
                {"scheme", {{"tau", 0.1}, {"max_iter", 120}, {"descent_check", true}}},
                {"source", gaussian_init}};
    if (name == "gaussian-flow")
        return {{"functional", {{"type", "gaussian-kl"}}},
                {"method", {{"type", "bures"}, {"scheme", "NEM"}}},
                {"scheme", {{"tau", 0.01}, {"max_iter", 1500}}},
                {"target", {{"type", "log-spectrum"}, {"dim", 10}, {"min", 1.0}, {"max", 100.0}, {"rotate", true}}}};
    if (name == "simplex")
        return {{"functional", {{"type", "kl-dirichlet"}, {"a", {6.0, 6.0, 6.0}}}},
                {"method", {{"type", "md"}, {"mirror", {{"type", "simplex-entropy"}}}}},
                {"scheme", {{"tau", 0.001}, {"max_iter", 500}}},
                {"source", {{"type", "simplex-uniform"}, {"n", 100}, {"dim", 2}}}};
    if (name == "align")
        return {{"functional", {{"type", "sw"}, {"projections", 1024}}},
                {"method", {{"type", "pgd"}, {"preconditioner", {{"type", "polynomial"}, {"a", 1.5}}}}},
                {"scheme", {{"tau", 1.0}, {"max_iter", 2000}, {"rel_tol", 1e-3}}},
                {"source", {{"type", "gaussian"}, {"n", 512}, {"mean", {0.0, 0.0}}, {"cov", {1.0, 1.0}}}},
                {"target", {{"type", "gaussian"}, {"n", 512}, {"mean", {0.0, 0.0}}, {"cov", {100.0, 0.1}}}}};
    if (name == "custom") return json::object();
    throw ConfigError("experiment: unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Resolved configuration
// ---------------------------------------------------------------------------

/// Everything `wflow run` needs, after presets are applied and fields checked.
struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "wflow-out";
    std::filesystem::path base_dir = ".";  // relative paths in the config resolve here
    json functional, method, source, target;
    SchemeConfig scheme;
};

/// Parses config text; `name` prefixes line:column diagnostics.
inline ExperimentConfig parse_config(const std::string& text, const std::string& name = "<config>",
                                     const std::filesystem::path& base_dir = ".") {
    json user;
    try {
        user = json::parse(text);
    } catch (const json::parse_error& e) {
        std::string msg = e.what();
        if (const auto p = msg.find("]: "); p != std::string::npos) msg = msg.substr(p + 3);
        throw ConfigError(name + ":" + detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + msg);
    }
    if (!user.is_object()) throw ConfigError(name + ": top level must be an object");
    if (!user.contains("experiment")) throw ConfigError(name + ": experiment: required field is missing");
    if (!user.at("experiment").is_string()) throw ConfigError(name + ": experiment: expected a string");
    const std::string preset = user.at("experiment").get<std::string>();
    if (std::find(preset_names().begin(), preset_names().end(), preset) == preset_names().end())
        throw ConfigError(name + ": experiment: unknown preset '" + preset + "'");

    const json doc = detail::overlay(preset_defaults(preset), user);
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    try {
        detail::Fields root(doc, "");
        cfg.experiment = root.string("experiment");
        cfg.seed = root.seed("seed", 0);
        cfg.output_dir = root.string("output_dir", "wflow-out");
        cfg.functional = root.raw("functional");
        cfg.method = root.raw("method");
        if (root.has("source")) cfg.source = root.raw("source");
        if (root.has("target")) cfg.target = root.raw("target");
        detail::Fields sch = root.object("scheme");
        cfg.scheme.tau = sch.number("tau");
        cfg.scheme.max_iter = static_cast<int>(sch.integer("max_iter"));
        cfg.scheme.rel_tol = sch.number("rel_tol", 0.0);
        cfg.scheme.descent_check = sch.boolean("descent_check", false);
        cfg.scheme.seed = cfg.seed;
        sch.finish();
        root.finish();
        detail::guarded("scheme", [&] { cfg.scheme.validate(); });
    } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
    const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config(text, path.string(), path.has_parent_path() ? path.parent_path() : ".");
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Uniform draws on the open simplex {x > 0, sum x < 1} in dimension d.
inline ParticleCloud sample_simplex_uniform(RngSeed seed, Index n, Index d) {
    if (n < 1 || d < 1) throw InvalidArgument("sample_simplex_uniform: need n >= 1 and d >= 1");
    std::mt19937_64 gen(seed.value);
    std::exponential_distribution<double> expo(1.0);
    Matrix x(n, d);
    for (Index i = 0; i < n; ++i) {
        Eigen::VectorXd e(d + 1);
        for (Index c = 0; c <= d; ++c) e(c) = expo(gen);
        x.row(i) = (e.head(d) / e.sum()).transpose();
    }
    return ParticleCloud(std::move(x));
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, signs fixed).
inline Eigen::MatrixXd random_orthogonal(RngSeed seed, Index d) {
    std::mt19937_64 gen(seed.value);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) g(i, j) = normal(gen);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd r = qr.matrixQR();
    for (Index j = 0; j < d; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

/// Eigenvalues min..max evenly spaced in log scale.
inline Eigen::VectorXd log_spectrum(Index d, double lo, double hi) {
    if (d < 1 || !(lo > 0.0) || !(hi >= lo)) throw InvalidArgument("log_spectrum: need d >= 1 and 0 < min <= max");
    Eigen::VectorXd ev(d);
    for (Index i = 0; i < d; ++i) {
        const double t = d == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(d - 1);
        ev(i) = std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
    }
    return ev;
}

namespace detail {

inline std::filesystem::path resolve(const ExperimentConfig& cfg, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : cfg.base_dir / path;
}

inline ParticleCloud build_cloud(const ExperimentConfig& cfg, const json& spec, const std::string& where,
                                 std::uint64_t stream) {
    Fields f(spec, where);
    const std::string type = f.string("type");
    const RngSeed seed{mix_seed(cfg.seed, stream)};
    ParticleCloud out = guarded(where, [&]() -> ParticleCloud {
        if (type == "gaussian") {
            const auto n = f.integer("n");
            const Eigen::VectorXd mean = f.vector("mean");
            const Eigen::MatrixXd cov = f.matrix("cov");
            if (n < 1) throw ConfigError(f.where("n") + ": must be at least 1");
            return sample_gaussian(seed, n, GaussianState(mean, cov));
        }
        if (type == "csv") return read_cloud_csv(resolve(cfg, f.string("path")).string());
        if (type == "simplex-uniform") {
            const auto n = f.integer("n");
            const auto d = f.integer("dim");
            if (n < 1 || d < 1) throw ConfigError(where + ": n and dim must be at least 1");
            return sample_simplex_uniform(seed, n, d);
        }
        throw ConfigError(f.where("type") + ": unknown cloud type '" + type + "'");
    });
    f.finish();
    return out;
}

inline InteractionKernel build_kernel(Fields& f, Index d) {
    const std::string name = f.string("kernel");
    const auto kind = parse_kernel_kind(name);
    if (!kind) throw ConfigError(f.where("kernel") + ": expected K2, K4 or quartic-well");
    if (!f.has("sigma")) return InteractionKernel::isotropic(*kind, d);
    const Eigen::MatrixXd sigma = f.matrix("sigma");
    if (sigma.rows() != d) throw ConfigError(f.where("sigma") + ": dimension does not match the particles");
    return guarded(f.where("sigma"), [&] { return InteractionKernel::anisotropic(*kind, sigma); });
}

/// Sinkhorn epsilon "auto": a tenth of the trace of the target covariance.
inline double auto_epsilon(const ParticleCloud& target) { return 0.1 * target.covariance().trace(); }

}  // namespace detail

/// The objective of a particle experiment. `target` is the cloud that
/// discrepancy objectives pull toward.
inline FunctionalPtr build_functional(const json& spec, Index d, const std::optional<ParticleCloud>& target) {
    detail::Fields f(spec, "functional");
    const std::string type = f.string("type");
    auto need_target = [&]() -> const ParticleCloud& {
        if (!target) throw ConfigError("functional: '" + type + "' needs a target cloud");
        if (target->dim() != d) throw ConfigError("target: dimension does not match the source");
        return *target;
    };
    FunctionalPtr out;
    if (type == "interaction") {
        out = std::make_shared<InteractionEnergy>(detail::build_kernel(f, d));
    } else if (type == "quadratic") {
        const Eigen::MatrixXd sigma = f.matrix("covariance");
        if (sigma.rows() != d) throw ConfigError(f.where("covariance") + ": dimension does not match the particles");
        out = detail::guarded(f.where("covariance"), [&] {
            return std::make_shared<PotentialEnergy>(QuadraticPotential::from_covariance(sigma));
        });
    } else if (type == "kl-dirichlet") {
        const Eigen::VectorXd a = f.vector("a");
        if (a.size() != d + 1) throw ConfigError(f.where("a") + ": needs dim + 1 entries");
        auto v = detail::guarded(f.where("a"), [&] { return std::make_shared<DirichletPotential>(a); });
        FunctionalPtr entropy = f.has("bandwidth")
                                    ? std::make_shared<KdeNegativeEntropy>(f.number("bandwidth"))
                                    : std::make_shared<KdeNegativeEntropy>();
        out = std::make_shared<SumFunctional>(std::make_shared<PotentialEnergy>(v), entropy);
    } else if (type == "sw" || type == "sliced_ed") {
        const SlicedParams p{f.integer("projections", 1024), f.seed("seed", 0)};
        if (p.projections < 1) throw ConfigError(f.where("projections") + ": must be at least 1");
        if (type == "sw")
            out = std::make_shared<SlicedWasserstein>(need_target(), p);
        else
            out = std::make_shared<SlicedEnergyDistance>(need_target(), p);
    } else if (type == "sinkhorn") {
        const ParticleCloud& tgt = need_target();
        SinkhornParams p;
        if (f.has("epsilon") && f.raw("epsilon").is_string()) {
            if (f.string("epsilon") != "auto") throw ConfigError(f.where("epsilon") + ": expected a number or \"auto\"");
            p.epsilon = detail::auto_epsilon(tgt);
        } else {
            p.epsilon = f.has("epsilon") ? f.number("epsilon") : detail::auto_epsilon(tgt);
        }
        p.max_iter = static_cast<int>(f.integer("max_iter", 10000));
        p.tolerance = f.number("tolerance", 1e-6);
        p.warm_start = f.boolean("warm_start", true);
        if (!(p.epsilon > 0.0)) throw ConfigError(f.where("epsilon") + ": must be positive");
        if (p.max_iter < 1 || !(p.tolerance > 0.0))
            throw ConfigError("functional: max_iter and tolerance must be positive");
        out = detail::guarded("functional", [&] { return std::make_shared<SinkhornDivergence>(tgt, p); });
    } else {
        throw ConfigError(f.where("type") + ": unknown functional '" + type + "'");
    }
    f.finish();
    return out;
}

inline Method build_method(const json& spec, Index d) {
    detail::Fields f(spec, "method");
    const std::string type = f.string("type");
    Method out;
    if (type == "md") {
        detail::Fields m = f.object("mirror");
        const std::string mt = m.string("type");
        BregmanPtr phi;
        if (mt == "interaction") {
            const InteractionKernel k = detail::build_kernel(m, d);
            phi = detail::guarded(m.where(), [&] { return std::make_shared<InteractionBregman>(k); });
        } else if (mt == "quadratic") {
            const Eigen::MatrixXd lambda = m.matrix("lambda");
            if (lambda.rows() != d) throw ConfigError(m.where("lambda") + ": dimension does not match the particles");
            phi = detail::guarded(m.where("lambda"), [&] { return quadratic_matrix_bregman(lambda); });
        } else if (mt == "euclidean") {
            phi = euclidean_bregman(d);
        } else if (mt == "simplex-entropy") {
            phi = simplex_entropy_bregman(d);
        } else {
            throw ConfigError(m.where("type") + ": unknown mirror '" + mt + "'");
        }
        m.finish();
        NewtonConfig newton;
        if (f.has("newton")) {
            detail::Fields nf = f.object("newton");
            newton.damping = nf.number("damping", newton.damping);
            newton.tolerance = nf.number("tolerance", newton.tolerance);
            newton.max_iter = static_cast<int>(nf.integer("max_iter", newton.max_iter));
            newton.ridge = nf.number("ridge", newton.ridge);
            newton.max_halvings = static_cast<int>(nf.integer("max_halvings", newton.max_halvings));
            newton.recenter = nf.boolean("recenter", newton.recenter);
            nf.finish();
        }
        out = MirrorDescent{phi, newton};
    } else if (type == "pgd") {
        detail::Fields p = f.object("preconditioner");
        const std::string pt = p.string("type");
        PreconditionerPtr pre;
        if (pt == "identity") {
            pre = std::make_shared<IdentityPreconditioner>();
        } else if (pt == "polynomial") {
            const double a = p.number("a");
            pre = detail::guarded(p.where("a"), [&] { return std::make_shared<PolynomialPreconditioner>(a); });
        } else if (pt == "matrix") {
            const Eigen::MatrixXd lambda = p.matrix("lambda");
            if (lambda.rows() != d) throw ConfigError(p.where("lambda") + ": dimension does not match the particles");
            pre = detail::guarded(p.where("lambda"), [&] { return std::make_shared<MatrixPreconditioner>(lambda); });
        } else if (pt == "covariance") {
            pre = std::make_shared<CovariancePreconditioner>();
        } else {
            throw ConfigError(p.where("type") + ": unknown preconditioner '" + pt + "'");
        }
        p.finish();
        out = PreconditionedDescent{pre};
    } else if (type == "bures") {
        throw ConfigError("method: bures schemes need the gaussian-kl functional");
    } else {
        throw ConfigError(f.where("type") + ": unknown method '" + type + "'");
    }
    f.finish();
    return out;
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct Outcome {
    Trace trace;
    json summary;  // deterministic apart from "wall_time_s"
    int exit_code = 0;
};

namespace detail {

inline double radial_band(const ParticleCloud& cloud) {
    const ParticleCloud c = center(cloud);
    std::vector<double> r(static_cast<std::size_t>(c.size()));
    for (Index i = 0; i < c.size(); ++i) r[static_cast<std::size_t>(i)] = c.row(i).norm();
    std::sort(r.begin(), r.end());
    const double med = r.size() % 2 ? r[r.size() / 2] : 0.5 * (r[r.size() / 2 - 1] + r[r.size() / 2]);
    double band = 0.0;
    for (double x : r) band = std::max(band, std::abs(x - med));
    return band;
}

inline json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline json vector_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline double finite_or_null_guard(double v) { return std::isfinite(v) ? v : 0.0; }

inline Outcome run_gaussian(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    {
        Fields f(cfg.functional, "functional");
        if (f.string("type") != "gaussian-kl") throw ConfigError("functional: gaussian flows need type gaussian-kl");
        f.finish();
    }
    Fields tf(cfg.target, "target");
    const std::string tt = tf.string("type");
    Eigen::VectorXd eig;
    Eigen::MatrixXd basis;
    if (tt == "log-spectrum") {
        const auto d = tf.integer("dim");
        const double lo = tf.number("min"), hi = tf.number("max");
        eig = guarded("target", [&] { return log_spectrum(d, lo, hi); });
        basis = tf.boolean("rotate", true) ? random_orthogonal({mix_seed(cfg.seed, 3)}, d)
                                          : Eigen::MatrixXd::Identity(d, d);
    } else if (tt == "covariance") {
        const Eigen::MatrixXd sigma = tf.matrix("cov");
        guarded("target.cov", [&] { wflow::detail::require_spd(sigma, "target covariance"); });
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(wflow::detail::symmetrize(sigma));
        eig = es.eigenvalues();
        basis = es.eigenvectors();
    } else {
        throw ConfigError(tf.where("type") + ": unknown Gaussian target '" + tt + "'");
    }
    tf.finish();

    Fields mf(cfg.method, "method");
    mf.string("type");
    const bures::Scheme scheme = guarded("method.scheme", [&] { return bures::parse_scheme(mf.string("scheme")); });
    const Index d = eig.size();
    Eigen::MatrixXd lambda_eig = Eigen::MatrixXd::Identity(d, d);
    if (mf.has("lambda")) {
        const Eigen::MatrixXd lambda = mf.matrix("lambda");
        if (lambda.rows() != d) throw ConfigError("method.lambda: dimension does not match the target");
        lambda_eig = basis.transpose() * lambda * basis;
    }
    mf.finish();

    // Commuting closed forms: iterate in the target eigenbasis, rotate back at the end.
    const GaussianState target_eig(Eigen::VectorXd::Zero(d), eig.asDiagonal());
    bures::GaussianFlowConfig flow{target_eig, wflow::detail::symmetrize(lambda_eig), cfg.scheme.tau};
    const GaussianState init = GaussianState::standard(d);
    const auto t0 = std::chrono::steady_clock::now();
    bures::FlowResult res = bures::run_flow(scheme, init, flow, cfg.scheme.max_iter);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const Eigen::MatrixXd cov = basis * res.state.cov() * basis.transpose();
    json state = {{"mean", vector_json(basis * res.state.mean())}, {"cov", matrix_json(cov)}};
    std::ofstream(out_dir / "final_gaussian.json") << state.dump(2) << '\n';

    Outcome o;
    o.trace = std::move(res.trace);
    int hit = -1;
    for (const auto& r : o.trace.records)
        if (r.objective <= 1e-2) {
            hit = r.iter;
            break;
        }
    o.summary = {{"experiment", cfg.experiment},
                 {"scheme", std::string(bures::scheme_name(scheme))},
                 {"seed", cfg.seed},
                 {"final_objective", o.trace.records.back().objective},
                 {"iterations", o.trace.iterations()},
                 {"termination", std::string(termination_name(o.trace.termination))},
                 {"first_iteration_kl_below_1e-2", hit}};
    if (!o.trace.message.empty()) o.summary["message"] = o.trace.message;
    o.summary["wall_time_s"] = wall;
    o.exit_code = o.trace.termination == Termination::StepError ? 2 : 0;
    return o;
}

}  // namespace detail

/// Runs one experiment and writes trace.csv, the final state and summary.json
/// into the output directory. Config problems throw ConfigError.
inline Outcome run_experiment(const ExperimentConfig& cfg) {
    const std::filesystem::path out_dir = detail::resolve(cfg, cfg.output_dir.string());
    std::filesystem::create_directories(out_dir);

    Outcome o;
    const bool gaussian = cfg.method.is_object() && cfg.method.value("type", "") == "bures";
    if (gaussian) {
        o = detail::run_gaussian(cfg, out_dir);
    } else {
        if (cfg.source.is_null()) throw ConfigError("source: required field is missing");
        const ParticleCloud init = detail::build_cloud(cfg, cfg.source, "source", 1);
        std::optional<ParticleCloud> target;
        if (!cfg.target.is_null()) target = detail::build_cloud(cfg, cfg.target, "target", 2);
        const FunctionalPtr f = build_functional(cfg.functional, init.dim(), target);
        const Method method = build_method(cfg.method, init.dim());

        const auto t0 = std::chrono::steady_clock::now();
        RunResult res = run(init, *f, method, cfg.scheme);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_cloud_csv((out_dir / "final.csv").string(), res.cloud);

        o.trace = std::move(res.trace);
        const std::string method_name = std::holds_alternative<MirrorDescent>(method)
                                            ? "md:" + std::get<MirrorDescent>(method).potential->name()
                                            : "pgd:" + std::get<PreconditionedDescent>(method).preconditioner->name();
        o.summary = {{"experiment", cfg.experiment},
                     {"functional", f->name()},
                     {"method", method_name},
                     {"seed", cfg.seed},
                     {"particles", res.cloud.size()},
                     {"final_objective", o.trace.records.back().objective},
                     {"iterations", o.trace.iterations()},
                     {"termination", std::string(termination_name(o.trace.termination))}};
        if (cfg.scheme.descent_check) {
            o.summary["descent_violations"] = o.trace.descent_violations;
            o.summary["noise_increases"] = o.trace.noise_increases;
        }
        if (cfg.experiment == "ring" || cfg.experiment == "ellipsoid")
            o.summary["radial_band"] = detail::radial_band(res.cloud);
        if (cfg.experiment == "simplex") {
            double lo = res.cloud.positions().minCoeff();
            lo = std::min(lo, (1.0 - res.cloud.positions().rowwise().sum().array()).minCoeff());
            o.summary["min_simplex_coordinate"] = lo;
        }
        if (!o.trace.message.empty()) o.summary["message"] = o.trace.message;
        o.summary["wall_time_s"] = wall;
        o.exit_code = (o.trace.termination == Termination::NewtonFailure ||
                       o.trace.termination == Termination::StepError)
                          ? 2
                          : 0;
    }
    write_trace_csv((out_dir / "trace.csv").string(), o.trace);
    std::ofstream(out_dir / "summary.json") << o.summary.dump(2) << '\n';
    return o;
}

// ---------------------------------------------------------------------------
// Plot data
// ---------------------------------------------------------------------------

/// Two-column "iter objective" data for gnuplot. The log flag only adds a
/// header comment; values are written unchanged.
inline void write_plot_data(const std::vector<TraceRecord>& rows, std::ostream& os, bool log_scale) {
    if (rows.empty()) throw InvalidArgument("plot: trace has no records");
    os << "# iter objective\n";
    if (log_scale) os << "# set logscale y\n";
    for (const auto& r : rows) os << r.iter << ' ' << format_double(r.objective) << '\n';
}

/// Whitespace-separated final positions, one particle per line.
inline void write_scatter_data(const ParticleCloud& cloud, std::ostream& os) {
    os << "# final particle positions\n";
    for (Index i = 0; i < cloud.size(); ++i) {
        for (Index c = 0; c < cloud.dim(); ++c) os << (c ? " " : "") << format_double(cloud.row(i)(c));
        os << '\n';
    }
}

}  // namespace wflow::experiment

#endif  // WFLOW_EXPERIMENT_HPP
