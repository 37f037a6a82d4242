// wflow: run experiments from JSON configs, turn traces into plot data, and
// run the numerical self-checks.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wflow/experiment.hpp"
#include "wflow/wflow.hpp"

namespace fs = std::filesystem;
using namespace wflow;

namespace {

int cmd_run(const std::string& config_path, const std::string& output_dir, bool quiet) {
    experiment::ExperimentConfig cfg = experiment::load_config(config_path);
    if (!output_dir.empty()) {
        cfg.output_dir = fs::absolute(output_dir);
    }
    const experiment::Outcome out = experiment::run_experiment(cfg);
    if (!quiet) {
        const auto& s = out.summary;
        std::cout << cfg.experiment << ": " << s.at("iterations").get<int>() << " iterations, "
                  << s.at("termination").get<std::string>() << ", final objective "
                  << format_double(s.at("final_objective").get<double>()) << '\n';
        if (s.contains("message")) std::cout << "  " << s.at("message").get<std::string>() << '\n';
    }
    return out.exit_code;
}

int cmd_plot(const std::string& trace_path, const std::string& out_path, std::string final_path, bool log_scale) {
    const auto rows = read_trace_csv(trace_path);
    {
        std::ofstream os(out_path);
        if (!os) throw Error("cannot open '" + out_path + "' for writing");
        experiment::write_plot_data(rows, os, log_scale);
    }
    if (final_path.empty()) {
        const fs::path guess = fs::path(trace_path).parent_path() / "final.csv";
        if (fs::exists(guess)) final_path = guess.string();
    }
    if (!final_path.empty()) {
        const ParticleCloud cloud = read_cloud_csv(final_path);
        std::ofstream os(out_path + ".scatter");
        if (!os) throw Error("cannot open '" + out_path + ".scatter' for writing");
        experiment::write_scatter_data(cloud, os);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

struct CheckLine {
    std::string name;
    double value;
    double limit;
};

Matrix random_matrix(std::mt19937_64& gen, Index n, Index d, double scale) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < d; ++c) m(i, c) = normal(gen);
    return m;
}

std::vector<CheckLine> run_checks(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<CheckLine> out;
    const ParticleCloud cloud(random_matrix(gen, 12, 2, 1.0));
    const ParticleCloud target(random_matrix(gen, 15, 2, 1.5));

    Eigen::MatrixXd sigma(2, 2);
    sigma << 2.0, 0.3, 0.3, 0.5;
    PotentialEnergy potential(QuadraticPotential::from_covariance(sigma));
    out.push_back({"grad_check potential", grad_check(potential, cloud), 1e-6});
    InteractionEnergy well(InteractionKernel::isotropic(KernelKind::QuarticWell, 2));
    out.push_back({"grad_check interaction", grad_check(well, cloud), 1e-6});
    SinkhornDivergence sinkhorn(target, {1.0, 100000, 1e-13});
    out.push_back({"grad_check sinkhorn", grad_check(sinkhorn, cloud), 1e-6});
    SlicedWasserstein sw(target, {64, seed});
    out.push_back({"grad_check sliced wasserstein", grad_check(sw, cloud), 1e-4});
    SlicedEnergyDistance ed(target, {64, seed});
    out.push_back({"grad_check sliced energy distance", grad_check(ed, cloud), 1e-3});

    // Three-point identity for a quadratic potential on random triples.
    auto phi = quadratic_matrix_bregman(sigma);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const VelocityField a(random_matrix(gen, 12, 2, 1.0)), b(random_matrix(gen, 12, 2, 1.0)),
            c(random_matrix(gen, 12, 2, 1.0));
        const double lhs = phi->divergence(cloud, a, b) + phi->divergence(cloud, b, c) - phi->divergence(cloud, a, c);
        const double rhs = ((phi->forward(ParticleCloud(c.values())) - phi->forward(ParticleCloud(b.values())))
                                .values()
                                .cwiseProduct(a.values() - b.values())
                                .sum()) /
                           static_cast<double>(cloud.size());
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
    out.push_back({"three-point identity", worst, 1e-10});

    const double self = sinkhorn.value(target);
    out.push_back({"sinkhorn S(nu, nu)", std::abs(self), 1e-8});

    // Quartic well against the K4 mirror on the unit ball.
    Matrix ball = random_matrix(gen, 10, 2, 1.0);
    for (Index i = 0; i < ball.rows(); ++i) ball.row(i) /= std::max(1.0, ball.row(i).norm());
    Matrix ball_target = random_matrix(gen, 10, 2, 1.0);
    for (Index i = 0; i < ball_target.rows(); ++i) ball_target.row(i) /= std::max(1.0, ball_target.row(i).norm());
    InteractionBregman k4(InteractionKernel::isotropic(KernelKind::K4, 2));
    const ProbeResult probe = smoothness_probe(well, k4, ParticleCloud(ball), VelocityField(ball_target));
    out.push_back({"smoothness ratio quartic well / K4", probe.sup_ratio, 4.0 + 1e-6});
    return out;
}

int cmd_check(std::uint64_t seed) {
    int failures = 0;
    for (const auto& line : run_checks(seed)) {
        const bool ok = line.value <= line.limit;
        failures += ok ? 0 : 1;
        std::printf("%s  %-36s %.3e (limit %.1e)\n", ok ? "PASS" : "FAIL", line.name.c_str(), line.value, line.limit);
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wasserstein mirror and preconditioned gradient descent on particle clouds"};
    app.require_subcommand(1);

    std::string config_path, output_dir;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
    run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--output-dir", output_dir, "Override the config's output directory");
    run->add_flag("-q,--quiet", quiet, "Print nothing on success");

    std::string trace_path, plot_out, final_path;
    bool log_scale = false;
    auto* plot = app.add_subcommand("plot", "Write gnuplot data from a trace CSV");
    plot->add_option("trace", trace_path, "Trace CSV")->required()->check(CLI::ExistingFile);
    plot->add_option("out", plot_out, "Output data file")->required();
    plot->add_option("--final", final_path, "Final particle CSV for a scatter file (default: final.csv next to the trace)")
        ->check(CLI::ExistingFile);
    plot->add_flag("--log", log_scale, "Annotate the data for a log-scale y axis");

    std::uint64_t check_seed = 1;
    auto* check = app.add_subcommand("check", "Run gradient, Bregman, Sinkhorn and smoothness self-checks");
    check->add_option("--seed", check_seed, "Seed of the random suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, output_dir, quiet);
        if (*plot) return cmd_plot(trace_path, plot_out, final_path, log_scale);
        if (*check) return cmd_check(check_seed);
    } catch (const experiment::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
