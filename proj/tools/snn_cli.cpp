// Command-line driver for the experiment scenarios.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "snn/experiments.hpp"

namespace ex = snn::experiments;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> m;
    std::optional<std::size_t> n_samples;
    std::optional<std::string> ordering;
    std::optional<std::string> neighbor_policy;
    std::optional<unsigned> threads;
    std::optional<std::string> out_dir;
    std::optional<std::string> threshold;  // parsed here so "inf" is accepted
    std::optional<std::size_t> grid_side;
    std::optional<int> gibbs_burnin;
    std::optional<std::size_t> benchmark_samples;
    bool full = false;
    bool no_msnn = false;
    bool no_exact = false;
    std::optional<std::string> input;
    std::optional<std::string> covariance;
    std::optional<std::string> bounds;
    std::optional<std::string> locations;
    std::optional<std::string> predict_locations;
    std::optional<std::size_t> predict_side;
};

double parse_extended(const std::string& s) {
    if (s == "inf" || s == "+inf") return snn::kInf;
    if (s == "-inf") return -snn::kInf;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw snn::ConfigError("not a number: '" + s + "'");
    }
    if (used != s.size()) throw snn::ConfigError("not a number: '" + s + "'");
    return v;
}

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config_path, "JSON file with flat config keys");
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--m", f.m, "conditioning set size");
    sub->add_option("--n-samples", f.n_samples, "number of draws");
    sub->add_option("--ordering", f.ordering, "variable ordering")
        ->check(CLI::IsMember({"auto", "coordinate", "random", "maximin"}));
    sub->add_option("--neighbor-policy", f.neighbor_policy, "neighbor selection")
        ->check(CLI::IsMember({"all", "split-obs-cens"}));
    sub->add_option("--threads", f.threads, "worker threads");
    sub->add_option("--out-dir", f.out_dir, "output directory");
}

ex::Config resolve(const std::string& scenario, const Flags& f) {
    ex::Config c = ex::defaults_for(scenario);
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw snn::ConfigError("cannot open config file '" + f.config_path + "'");
        ex::json j;
        try {
            j = ex::json::parse(in);
        } catch (const ex::json::parse_error& e) {
            throw snn::ConfigError("config file '" + f.config_path + "': " + e.what());
        }
        ex::apply_json(c, j);
    }
    if (f.seed) c.seed = *f.seed;
    if (f.m) c.m = *f.m;
    if (f.n_samples) c.n_samples = *f.n_samples;
    if (f.ordering) c.ordering = *f.ordering;
    if (f.neighbor_policy) c.neighbor_policy = *f.neighbor_policy;
    if (f.threads) c.threads = *f.threads;
    if (f.out_dir) c.out_dir = *f.out_dir;
    if (f.threshold) c.threshold = parse_extended(*f.threshold);
    if (f.grid_side) c.grid_side = *f.grid_side;
    if (f.gibbs_burnin) c.gibbs_burnin = *f.gibbs_burnin;
    if (f.benchmark_samples) c.benchmark_samples = *f.benchmark_samples;
    if (f.full) c.full = true;
    if (f.no_msnn) c.msnn = false;
    if (f.no_exact) c.exact_benchmark = false;
    if (f.input) c.input = *f.input;
    if (f.covariance) c.covariance = *f.covariance;
    if (f.bounds) c.bounds = *f.bounds;
    if (f.locations) c.locations = *f.locations;
    if (f.predict_locations) c.predict_locations = *f.predict_locations;
    if (f.predict_side) c.predict_side = *f.predict_side;
    ex::validate(c);
    return c;
}

void print_scores(const std::vector<ex::MethodScore>& scores) {
    std::printf("%-8s %12s %12s %8s\n", "method", "rmse", "crps", "n_eval");
    for (const auto& s : scores) std::printf("%-8s %12.6f %12.6f %8zu\n", s.method.c_str(), s.rmse, s.crps, s.n_eval);
}

int run(const std::string& scenario, const Flags& f) {
    const ex::Config c = resolve(scenario, f);
    if (scenario == "fidelity") {
        const auto r = ex::run_fidelity(c);
        if (r.nothing_to_sample) {
            std::printf("nothing to sample: all %zu sites observed\n", r.n_observed);
            return 0;
        }
        std::printf("observed %zu, censored %zu\n", r.n_observed, r.n_censored);
        print_scores(r.scores);
        for (const auto& [m, dev] : r.max_qq_deviation) {
            std::printf("%s vs gibbs: max quantile deviation %.4f, KS %.4f (p %.3g)\n", m.c_str(), dev,
                        r.ks_vs_gibbs.at(m).statistic, r.ks_vs_gibbs.at(m).p_value);
        }
    } else if (scenario == "scaling") {
        const auto r = ex::run_scaling(c);
        std::printf("%8s %14s %14s\n", "n", "precompute_s", "sample_s");
        for (const auto& row : r.rows) std::printf("%8zu %14.4f %14.4f\n", row.n, row.t_precompute, row.t_sample);
        std::printf("log-log slope %.3f\n", r.slope);
    } else if (scenario == "censored-sim") {
        const auto r = ex::run_censored_sim(c);
        if (r.n_censored == 0) {
            std::printf("nothing to sample: all %zu sites observed\n", r.n_observed);
            return 0;
        }
        std::printf("observed %zu, censored %zu, scored in subregion %zu\n", r.n_observed, r.n_censored, r.n_eval);
        std::printf("subregion:\n");
        print_scores(r.subregion);
        std::printf("full grid:\n");
        print_scores(r.full_grid);
    } else if (scenario == "censored-data") {
        ex::run_censored_data(c);
        std::printf("wrote %s\n", c.out_dir.c_str());
    } else {
        ex::run_sample(c);
        std::printf("wrote %s\n", c.out_dir.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential nearest-neighbor sampling of truncated multivariate normals"};
    app.set_version_flag("--version", std::string(snn::kVersion));
    app.require_subcommand(1);
    Flags f;

    auto* fidelity = app.add_subcommand("fidelity", "censored 20x20 grid against Gibbs and exact benchmarks");
    auto* scaling = app.add_subcommand("scaling", "run time against problem size");
    auto* sim = app.add_subcommand("censored-sim", "censored GP simulation with subregion scoring");
    auto* data = app.add_subcommand("censored-data", "posterior draws for a censored dataset");
    auto* sample = app.add_subcommand("sample", "TMVN draws from a covariance matrix and bounds");
    for (auto* sub : {fidelity, scaling, sim, data, sample}) add_common(sub, f);
    for (auto* sub : {fidelity, sim}) {
        sub->add_option("--threshold", f.threshold, "censoring threshold (inf allowed)");
        sub->add_option("--grid-side", f.grid_side, "grid side length");
        sub->add_option("--gibbs-burnin", f.gibbs_burnin, "Gibbs sweeps per benchmark chain");
        sub->add_option("--benchmark-samples", f.benchmark_samples, "benchmark draws (default n-samples)");
        sub->add_flag("--no-msnn", f.no_msnn, "skip the maximin-ordered run");
    }
    fidelity->add_flag("--no-exact", f.no_exact, "skip exact accept-reject benchmark draws");
    sim->add_flag("--full", f.full, "use the 100x100 grid");
    data->add_option("--input", f.input, "dataset CSV");
    data->add_option("--predict-locations", f.predict_locations, "CSV of prediction coordinates");
    data->add_option("--predict-side", f.predict_side, "kriging grid side over the data bounding box");
    sample->add_option("--covariance", f.covariance, "covariance matrix CSV");
    sample->add_option("--bounds", f.bounds, "bounds CSV with columns lower,upper");
    sample->add_option("--locations", f.locations, "optional coordinates CSV for neighbor search");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    const std::string scenario = app.get_subcommands().front()->get_name();
    try {
        return run(scenario, f);
    } catch (const snn::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const snn::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    }
}
