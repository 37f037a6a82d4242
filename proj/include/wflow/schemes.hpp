#ifndef WFLOW_SCHEMES_HPP
#define WFLOW_SCHEMES_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wflow/bregman.hpp"
#include "wflow/error.hpp"
#include "wflow/functionals.hpp"
#include "wflow/io.hpp"
#include "wflow/measures.hpp"
#include "wflow/ot1d.hpp"
#include "wflow/preconditioners.hpp"

namespace wflow {

struct SchemeConfig {
    double tau = 0.1;
    int max_iter = 100;
    double rel_tol = 0.0;
    std::uint64_t seed = 0;
    bool descent_check = false;

    void validate() const {
        if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("SchemeConfig: tau must be positive");
        if (max_iter < 1) throw InvalidArgument("SchemeConfig: max_iter must be at least 1");
        if (!(rel_tol >= 0.0)) throw InvalidArgument("SchemeConfig: rel_tol must be nonnegative");
    }
};

enum class Termination { Tolerance, MaxIter, NewtonFailure, StepError };

inline std::string_view termination_name(Termination t) {
    switch (t) {
        case Termination::Tolerance: return "tolerance";
        case Termination::MaxIter: return "max_iter";
        case Termination::NewtonFailure: return "newton_failure";
        case Termination::StepError: return "step_error";
    }
    return "?";
}

struct TraceRecord {
    int iter = 0;
    double objective = 0.0;
    /// Descent quantity at this iterate: (1/n) sum h*(g_i) for the
    /// preconditioned scheme, |g|^2_{L2} / 2 for mirror descent.
    double grad_magnitude = std::numeric_limits<double>::quiet_NaN();
    /// Bregman divergence of the step that produced this iterate (0 at iter 0).
    double step_div = 0.0;
    double ms = 0.0;
    bool objective_increase = false;
};

struct Trace {
    std::vector<TraceRecord> records;
    Termination termination = Termination::MaxIter;
    std::string message;
    /// Iterations whose objective rose by more than 1e-9 relative.
    int descent_violations = 0;
    /// Increases attributed to Monte-Carlo noise (below 3 standard errors).
    int noise_increases = 0;

    int iterations() const { return records.empty() ? 0 : records.back().iter; }
};

struct MirrorDescent {
    BregmanPtr potential;
    NewtonConfig newton{};
};

struct PreconditionedDescent {
    PreconditionerPtr preconditioner;
};

using Method = std::variant<MirrorDescent, PreconditionedDescent>;

struct RunResult {
    ParticleCloud cloud;
    Trace trace;
};

// ---------------------------------------------------------------------------
// Single steps
// ---------------------------------------------------------------------------

/// Mirror step: grad phi_{mu_{k+1}}(T) = grad phi_{mu_k}(Id) - tau grad_W F(mu_k),
/// solved pointwise through grad V* for explicit potentials and by Newton for
/// interaction potentials.
inline ParticleCloud md_step(const ParticleCloud& cloud, const VelocityField& grad, const BregmanPotential& phi,
                             double tau, const NewtonConfig& newton = {}) {
    if (!(tau >= 0.0)) throw InvalidArgument("md_step: tau must be nonnegative");
    require_shape(cloud, grad, "md_step");
    const VelocityField dual = phi.forward(cloud) - tau * grad;
    if (phi.explicit_inverse()) {
        ParticleCloud next(phi.inverse(dual).values());
        phi.check_domain(next);
        return next;
    }
    if (const auto* inter = dynamic_cast<const InteractionBregman*>(&phi))
        return newton_implicit_step(*inter, cloud, dual, newton).cloud;
    throw InvalidArgument("md_step: potential '" + phi.name() + "' has no inverse and no implicit solver");
}

inline ParticleCloud md_step(const ParticleCloud& cloud, const Functional& f, const BregmanPotential& phi, double tau,
                             const NewtonConfig& newton = {}) {
    return md_step(cloud, f.wgrad(cloud), phi, tau, newton);
}

/// x_i <- x_i - tau grad h*(g_i).
inline ParticleCloud pgd_step(const ParticleCloud& cloud, const VelocityField& grad, const Preconditioner& p,
                              double tau) {
    if (!(tau >= 0.0)) throw InvalidArgument("pgd_step: tau must be nonnegative");
    return ParticleCloud(cloud.positions() - tau * p.apply(cloud, grad).values());
}

inline ParticleCloud pgd_step(const ParticleCloud& cloud, const Functional& f, const Preconditioner& p, double tau) {
    return pgd_step(cloud, f.wgrad(cloud), p, tau);
}

// ---------------------------------------------------------------------------
// Run loop
// ---------------------------------------------------------------------------

/// Iterates the chosen scheme until the relative objective change drops to
/// rel_tol (when positive) or max_iter steps have been taken.
///
/// Monte-Carlo functionals see draw mix_seed(cfg.seed, k) at step k; the
/// objectives F(mu_{k-1}) and F(mu_k) compared by the stopping rule and the
/// descent check are evaluated on that same draw.
inline RunResult run(const ParticleCloud& init, Functional& f, const Method& method, const SchemeConfig& cfg) {
    cfg.validate();
    using clock = std::chrono::steady_clock;

    if (const auto* md = std::get_if<MirrorDescent>(&method); md && !md->potential)
        throw InvalidArgument("run: mirror descent needs a potential");
    if (const auto* pgd = std::get_if<PreconditionedDescent>(&method); pgd && !pgd->preconditioner)
        throw InvalidArgument("run: preconditioned descent needs a preconditioner");

    auto magnitude = [&](const ParticleCloud& c, const VelocityField& g) {
        if (const auto* pgd = std::get_if<PreconditionedDescent>(&method)) return pgd->preconditioner->magnitude(c, g);
        return 0.5 * g.l2_squared();
    };
    auto draw_of = [&](int k) { return mix_seed(cfg.seed, static_cast<std::uint64_t>(k)); };

    Trace trace;
    ParticleCloud current = init;
    VelocityField grad;
    f.select_draw(draw_of(1));
    double f_current = f.value_and_wgrad(current, grad);
    trace.records.push_back({0, f_current, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, false});
    trace.termination = Termination::MaxIter;

    auto stop = [&](Termination t, const std::exception& e) {
        trace.termination = t;
        trace.message = e.what();
        return RunResult{current, std::move(trace)};
    };

    for (int k = 1; k <= cfg.max_iter; ++k) {
        const auto t0 = clock::now();
        std::optional<ParticleCloud> next;
        double step_div = 0.0, f_next = 0.0;
        try {
            if (f.stochastic() && k > 1) {
                f.select_draw(draw_of(k));
                f_current = f.value_and_wgrad(current, grad);
            }
            trace.records.back().grad_magnitude = magnitude(current, grad);
            if (const auto* md = std::get_if<MirrorDescent>(&method)) {
                next = md_step(current, grad, *md->potential, cfg.tau, md->newton);
                step_div = md->potential->divergence(current, VelocityField::identity(*next),
                                                     VelocityField::identity(current));
            } else {
                const auto& pgd = std::get<PreconditionedDescent>(method);
                next = pgd_step(current, grad, *pgd.preconditioner, cfg.tau);
                step_div = 0.5 * (next->positions() - current.positions()).squaredNorm() /
                           static_cast<double>(current.size());
            }
            // The stochastic case redraws before the next step, so its gradient here would be wasted.
            f_next = f.stochastic() ? f.value(*next) : f.value_and_wgrad(*next, grad);
        } catch (const NewtonFailure& e) {
            return stop(Termination::NewtonFailure, e);
        } catch (const Error& e) {
            return stop(Termination::StepError, e);
        }

        const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        const double scale = std::max(std::abs(f_current), std::numeric_limits<double>::min());
        const double change = f_next - f_current;

        TraceRecord rec{k, f_next, std::numeric_limits<double>::quiet_NaN(), step_div, ms, false};
        if (cfg.descent_check && change > 1e-9 * scale) {
            rec.objective_increase = true;
            const auto se = f.stochastic() ? f.value_stderr(*next) : std::nullopt;
            if (se && change < 3.0 * *se)
                ++trace.noise_increases;
            else
                ++trace.descent_violations;
        }
        trace.records.push_back(rec);
        current = std::move(*next);
        f_current = f_next;
        if (cfg.rel_tol > 0.0 && std::abs(change) / scale <= cfg.rel_tol) {
            trace.termination = Termination::Tolerance;
            break;
        }
    }

    try {
        if (f.stochastic()) grad = f.wgrad(current);
        trace.records.back().grad_magnitude = magnitude(current, grad);
    } catch (const Error&) {
        // leave NaN: the final iterate is still reported
    }
    return {current, std::move(trace)};
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTraceHeader = "iter,objective,grad_magnitude,step_div,ms";

inline void write_trace_csv(std::ostream& os, const Trace& trace) {
    os << kTraceHeader << '\n';
    for (const auto& r : trace.records)
        os << r.iter << ',' << format_double(r.objective) << ',' << format_double(r.grad_magnitude) << ','
           << format_double(r.step_div) << ',' << format_double(r.ms) << '\n';
}

inline void write_trace_csv(const std::string& path, const Trace& trace) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_trace_csv(os, trace);
}

inline std::vector<TraceRecord> read_trace_csv(std::istream& is, const std::string& name = "<stream>") {
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument(name + ": empty trace");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceHeader) throw InvalidArgument(name + ":1: expected header '" + std::string(kTraceHeader) + "'");
    std::vector<TraceRecord> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(lineno);
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 5) throw InvalidArgument(where + ": expected 5 fields");
        TraceRecord r;
        const double iter = detail::parse_double(fields[0], where);
        if (iter != std::floor(iter) || iter < 0) throw InvalidArgument(where + ": iteration must be a nonnegative integer");
        r.iter = static_cast<int>(iter);
        r.objective = detail::parse_double(fields[1], where);
        r.grad_magnitude = detail::parse_double(fields[2], where);
        r.step_div = detail::parse_double(fields[3], where);
        r.ms = detail::parse_double(fields[4], where);
        rows.push_back(r);
    }
    if (rows.empty()) throw InvalidArgument(name + ": trace has no records");
    return rows;
}

inline std::vector<TraceRecord> read_trace_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_trace_csv(is, path);
}

}  // namespace wflow

#endif  // WFLOW_SCHEMES_HPP
