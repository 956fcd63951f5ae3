#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "snn/censored.hpp"
#include "snn/error.hpp"
#include "snn/eval.hpp"
#include "snn/io.hpp"
#include "snn/snn.hpp"
#include "snn/tmvn.hpp"
#include "snn/version.hpp"

namespace snn::experiments {

using json = nlohmann::json;

/// Flat experiment configuration. The JSON config file uses the same key
/// names; command-line flags override file values.
struct Config {
    std::string scenario = "sample";

    double variance = 1.0;
    double range = 0.1;
    std::vector<double> ranges;  // per-coordinate ranges; overrides `range` when set
    double smoothness = 1.5;
    double nugget = 0.0;
    std::string metric = "euclidean";

    std::size_t grid_side = 20;
    double threshold = 1.0;

    std::size_t m = 30;
    std::size_t n_samples = 50;
    std::string ordering = "auto";  // coordinate on grids, random otherwise
    std::string neighbor_policy = "all";
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out_dir = "out";

    bool msnn = true;                   // also run the maximin-ordered variant
    bool exact_benchmark = true;        // exact tilted accept-reject draws (fidelity)
    int gibbs_burnin = 2000;
    std::size_t benchmark_samples = 0;  // 0 means n_samples

    std::vector<std::size_t> ladder{400, 1600, 6400, 25600};
    double spacing = 0.02;
    double upper_bound = 0.0;

    bool full = false;
    std::size_t subregion_side = 20;
    std::size_t window_padding = 8;

    std::string input;
    std::string covariance;
    std::string bounds;
    std::string locations;
    std::string predict_locations;
    std::size_t predict_side = 0;

    CovarianceModel model() const {
        CovarianceModel out;
        out.variance = variance;
        out.ranges = ranges.empty() ? std::vector<double>{range} : ranges;
        out.smoothness = parse_smoothness(smoothness);
        out.nugget = nugget;
        out.validate();
        return out;
    }

    OrderingKind ordering_kind(bool on_grid) const {
        if (ordering == "auto") return on_grid ? OrderingKind::coordinate : OrderingKind::random;
        const OrderingKind kind = parse_ordering(ordering);
        if (kind == OrderingKind::given) throw ConfigError("ordering 'given' is not available from the command line");
        return kind;
    }

    std::size_t benchmark_count() const { return benchmark_samples == 0 ? n_samples : benchmark_samples; }
};

/// Defaults of each scenario before file and flag overrides.
inline Config defaults_for(const std::string& scenario) {
    Config c;
    c.scenario = scenario;
    if (scenario == "fidelity") {
        c.grid_side = 20;
        c.range = 0.1;
    } else if (scenario == "scaling") {
        c.range = 0.03;
        c.n_samples = 10;
        c.msnn = false;
    } else if (scenario == "censored-sim") {
        c.grid_side = 50;
        c.range = 0.03;
        c.nugget = 1e-4;
    } else if (scenario == "censored-data" || scenario == "sample") {
        c.msnn = false;
    } else {
        throw ConfigError("unknown scenario '" + scenario + "'");
    }
    return c;
}

namespace detail {

inline double json_number(const json& v, const std::string& key) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf" || s == "Infinity") return kInf;
        if (s == "-inf" || s == "-Infinity") return -kInf;
    }
    throw ConfigError("config key '" + key + "' must be a number");
}

template <typename T>
T json_count(const json& v, const std::string& key) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("config key '" + key + "' must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < 0) throw ConfigError("config key '" + key + "' must be nonnegative");
    return static_cast<T>(x);
}

inline std::string json_string(const json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

inline bool json_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
    return v.get<bool>();
}

}  // namespace detail

/// Overlay the keys of a flat JSON object; unknown keys are errors.
inline void apply_json(Config& c, const json& j) {
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "scenario") {
            if (detail::json_string(v, key) != c.scenario) {
                throw ConfigError("config scenario '" + v.get<std::string>() + "' does not match subcommand '" +
                                  c.scenario + "'");
            }
        } else if (key == "variance") c.variance = detail::json_number(v, key);
        else if (key == "range") c.range = detail::json_number(v, key);
        else if (key == "ranges") {
            if (!v.is_array()) throw ConfigError("config key 'ranges' must be an array");
            c.ranges.clear();
            for (const auto& r : v) c.ranges.push_back(detail::json_number(r, key));
        } else if (key == "smoothness") c.smoothness = detail::json_number(v, key);
        else if (key == "nugget") c.nugget = detail::json_number(v, key);
        else if (key == "metric") c.metric = detail::json_string(v, key);
        else if (key == "grid_side") c.grid_side = detail::json_count<std::size_t>(v, key);
        else if (key == "threshold") c.threshold = detail::json_number(v, key);
        else if (key == "m") c.m = detail::json_count<std::size_t>(v, key);
        else if (key == "n_samples") c.n_samples = detail::json_count<std::size_t>(v, key);
        else if (key == "ordering") c.ordering = detail::json_string(v, key);
        else if (key == "neighbor_policy") c.neighbor_policy = detail::json_string(v, key);
        else if (key == "seed") c.seed = detail::json_count<std::uint64_t>(v, key);
        else if (key == "threads") c.threads = detail::json_count<unsigned>(v, key);
        else if (key == "out_dir") c.out_dir = detail::json_string(v, key);
        else if (key == "msnn") c.msnn = detail::json_bool(v, key);
        else if (key == "exact_benchmark") c.exact_benchmark = detail::json_bool(v, key);
        else if (key == "gibbs_burnin") c.gibbs_burnin = detail::json_count<int>(v, key);
        else if (key == "benchmark_samples") c.benchmark_samples = detail::json_count<std::size_t>(v, key);
        else if (key == "ladder") {
            if (!v.is_array()) throw ConfigError("config key 'ladder' must be an array");
            c.ladder.clear();
            for (const auto& n : v) c.ladder.push_back(detail::json_count<std::size_t>(n, key));
        } else if (key == "spacing") c.spacing = detail::json_number(v, key);
        else if (key == "upper_bound") c.upper_bound = detail::json_number(v, key);
        else if (key == "full") c.full = detail::json_bool(v, key);
        else if (key == "subregion_side") c.subregion_side = detail::json_count<std::size_t>(v, key);
        else if (key == "window_padding") c.window_padding = detail::json_count<std::size_t>(v, key);
        else if (key == "input") c.input = detail::json_string(v, key);
        else if (key == "covariance") c.covariance = detail::json_string(v, key);
        else if (key == "bounds") c.bounds = detail::json_string(v, key);
        else if (key == "locations") c.locations = detail::json_string(v, key);
        else if (key == "predict_locations") c.predict_locations = detail::json_string(v, key);
        else if (key == "predict_side") c.predict_side = detail::json_count<std::size_t>(v, key);
        else throw ConfigError("unknown config key '" + key + "'");
    }
}

inline json number_or_string(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

inline json to_json(const Config& c) {
    return json{{"scenario", c.scenario},
                {"variance", c.variance},
                {"range", c.range},
                {"ranges", c.ranges},
                {"smoothness", c.smoothness},
                {"nugget", c.nugget},
                {"metric", c.metric},
                {"grid_side", c.grid_side},
                {"threshold", number_or_string(c.threshold)},
                {"m", c.m},
                {"n_samples", c.n_samples},
                {"ordering", c.ordering},
                {"neighbor_policy", c.neighbor_policy},
                {"seed", c.seed},
                {"threads", c.threads},
                {"out_dir", c.out_dir},
                {"msnn", c.msnn},
                {"exact_benchmark", c.exact_benchmark},
                {"gibbs_burnin", c.gibbs_burnin},
                {"benchmark_samples", c.benchmark_samples},
                {"ladder", c.ladder},
                {"spacing", c.spacing},
                {"upper_bound", number_or_string(c.upper_bound)},
                {"full", c.full},
                {"subregion_side", c.subregion_side},
                {"window_padding", c.window_padding},
                {"input", c.input},
                {"covariance", c.covariance},
                {"bounds", c.bounds},
                {"locations", c.locations},
                {"predict_locations", c.predict_locations},
                {"predict_side", c.predict_side}};
}

inline void validate(const Config& c) {
    if (c.m < 1) throw ConfigError("m must be at least 1");
    if (c.n_samples < 1) throw ConfigError("n_samples must be at least 1");
    (void)c.model();
    (void)parse_metric(c.metric);
    (void)parse_neighbor_policy(c.neighbor_policy);
    (void)c.ordering_kind(true);
    if (c.gibbs_burnin < 0) throw ConfigError("gibbs_burnin must be nonnegative");
    if (c.scenario == "fidelity" || c.scenario == "censored-sim") {
        if (c.grid_side < 2) throw ConfigError("grid_side must be at least 2");
        if (std::isnan(c.threshold)) throw ConfigError("threshold must be a number");
    }
    if (c.scenario == "scaling") {
        if (c.ladder.empty()) throw ConfigError("ladder is empty");
        for (std::size_t n : c.ladder) {
            if (n < 1) throw ConfigError("ladder entries must be positive");
        }
        if (!(c.spacing > 0.0)) throw ConfigError("spacing must be positive");
    }
    if (c.scenario == "censored-sim" && c.subregion_side < 1) throw ConfigError("subregion_side must be positive");
    if (c.scenario == "censored-data" && c.input.empty()) throw ConfigError("censored-data needs an input dataset");
    if (c.scenario == "sample" && (c.covariance.empty() || c.bounds.empty())) {
        throw ConfigError("sample needs a covariance matrix file and a bounds file");
    }
}

/// side x side grid on [0, 1]², row-major with the first coordinate slowest.
inline LocationSet unit_grid(std::size_t side) {
    if (side < 2) throw ConfigError("unit_grid: side must be at least 2");
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(side * side), 2);
    const double step = 1.0 / static_cast<double>(side - 1);
    for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) {
            pts.row(static_cast<Eigen::Index>(i * side + j)) << static_cast<double>(i) * step, static_cast<double>(j) * step;
        }
    }
    return LocationSet(std::move(pts));
}

/// The first n points of a regular grid with the given spacing, filled row
/// by row on a ceil(sqrt(n)) wide square.
inline LocationSet spaced_grid(std::size_t n, double spacing) {
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n)) - 1e-9));
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(n), 2);
    for (std::size_t k = 0; k < n; ++k) {
        pts.row(static_cast<Eigen::Index>(k)) << static_cast<double>(k / side) * spacing,
            static_cast<double>(k % side) * spacing;
    }
    return LocationSet(std::move(pts));
}

inline constexpr std::size_t kDenseSimulationLimit = 4096;

/// One zero-mean GP realization (nugget included). Dense Cholesky up to
/// kDenseSimulationLimit sites; beyond that a maximin-ordered nearest-neighbor
/// factorization with `vecchia_m` neighbors.
inline Eigen::VectorXd simulate_field(const CovarianceModel& model, const LocationSet& locations, std::uint64_t seed,
                                      std::size_t vecchia_m = 40, unsigned threads = 1) {
    const auto n = static_cast<Eigen::Index>(locations.size());
    Rng rng(seed, streams::kSimulation);
    if (locations.size() <= kDenseSimulationLimit) {
        const CholeskyResult chol = cholesky(covariance_matrix(model, locations));
        Eigen::VectorXd e(n);
        for (Eigen::Index i = 0; i < n; ++i) e(i) = rng.normal();
        return chol.lower.triangularView<Eigen::Lower>() * e;
    }
    TruncationProblem problem{Eigen::VectorXd::Constant(n, -kInf), Eigen::VectorXd::Constant(n, kInf),
                              CovarianceSource::kernel(model, locations), std::nullopt};
    PrecomputeOptions options;
    options.m = vecchia_m;
    options.ordering = OrderingKind::maximin;
    options.threads = threads;
    const SnnPlan plan = precompute(problem, options);
    SampleDiagnostics diag;
    const Eigen::VectorXd by_position = snn::detail::sweep(plan, rng, SamplerPolicy{}, diag, 0);
    Eigen::VectorXd out(n);
    for (std::size_t pos = 0; pos < plan.size(); ++pos) {
        out(static_cast<Eigen::Index>(plan.ordering.permutation[pos])) = by_position(static_cast<Eigen::Index>(pos));
    }
    return out;
}

/// TN of the sites `sample_sites` given exact values at `given_sites`,
/// centred: the target covers value - mean.
struct ConditionalTarget {
    std::vector<std::size_t> sites;
    Eigen::VectorXd mean;
    LowDimTarget target;
};

inline ConditionalTarget conditional_target(const CensoredDataset& data, const CovarianceModel& model,
                                            const std::vector<std::size_t>& sample_sites,
                                            const std::vector<std::size_t>& given_sites) {
    if (sample_sites.empty()) throw ConfigError("conditional_target: no sites to sample");
    const Eigen::MatrixXd s_ss = covariance_block(model, data.locations, sample_sites, sample_sites);
    ConditionalTarget out;
    out.sites = sample_sites;
    const auto q = static_cast<Eigen::Index>(sample_sites.size());
    Eigen::MatrixXd cov;
    if (given_sites.empty()) {
        out.mean = Eigen::VectorXd::Zero(q);
        cov = s_ss;
    } else {
        const Eigen::MatrixXd s_sg = covariance_block(model, data.locations, sample_sites, given_sites);
        const Eigen::MatrixXd s_gg = covariance_block(model, data.locations, given_sites, given_sites);
        Eigen::VectorXd z(static_cast<Eigen::Index>(given_sites.size()));
        for (std::size_t k = 0; k < given_sites.size(); ++k) {
            z(static_cast<Eigen::Index>(k)) = data.values(static_cast<Eigen::Index>(given_sites[k]));
        }
        const auto conditional = conditional_factors(s_ss, s_sg, s_gg);
        out.mean = conditional.weights * z;
        cov = conditional.covariance;
    }
    out.target.lower.resize(q);
    out.target.upper.resize(q);
    for (Eigen::Index k = 0; k < q; ++k) {
        const auto site = static_cast<Eigen::Index>(sample_sites[static_cast<std::size_t>(k)]);
        out.target.lower(k) = data.lower(site) - out.mean(k);
        out.target.upper(k) = data.upper(site) - out.mean(k);
    }
    out.target.chol = cholesky(cov).lower;
    out.target.validate();
    return out;
}

inline constexpr std::uint64_t kExactStreams = streams::kBenchmark + 0x8000'0000ull;

/// `count` independent Gibbs chains, each run for `burnin` sweeps from a
/// feasible start; chain k contributes its final state as draw k.
inline SampleMatrix gibbs_benchmark(const ConditionalTarget& ct, std::size_t count, int burnin, std::uint64_t seed,
                                    unsigned threads) {
    const auto q = static_cast<Eigen::Index>(ct.sites.size());
    SampleMatrix out(static_cast<Eigen::Index>(count), q);
    const Eigen::VectorXd start = feasible_start(ct.target);
    parallel_for(count, threads, [&](std::size_t k) {
        Rng rng(seed, streams::kBenchmark + k);
        GibbsSampler chain(ct.target, start);
        for (int s = 0; s < burnin; ++s) chain.sweep(rng);
        out.row(static_cast<Eigen::Index>(k)) = (chain.state() + ct.mean).transpose();
    });
    return out;
}

/// Exact i.i.d. draws by tilted accept-reject with no fallback.
inline SampleMatrix exact_benchmark(const ConditionalTarget& ct, std::size_t count, std::uint64_t seed, unsigned threads,
                                    std::uint64_t max_proposals = 10'000'000) {
    const auto q = static_cast<Eigen::Index>(ct.sites.size());
    SampleMatrix out(static_cast<Eigen::Index>(count), q);
    const TiltedProposal proposal(ct.target, SamplerPolicy{});
    parallel_for(count, threads, [&](std::size_t k) {
        Rng rng(seed, kExactStreams + k);
        Eigen::VectorXd x;
        for (std::uint64_t t = 0; t < max_proposals; ++t) {
            const double log_w = proposal.propose(rng, x);
            if (std::log(rng.uniform()) < log_w - proposal.log_bound()) {
                out.row(static_cast<Eigen::Index>(k)) = (proposal.to_target(x) + ct.mean).transpose();
                return;
            }
        }
        throw NumericalError("exact benchmark: no acceptance in " + std::to_string(max_proposals) + " proposals");
    });
    return out;
}

struct MethodScore {
    std::string method;
    double rmse = 0.0;
    double crps = 0.0;
    std::size_t n_eval = 0;
};

inline std::vector<double> pooled_sorted(const SampleMatrix& m) {
    std::vector<double> v(m.data(), m.data() + m.size());
    std::sort(v.begin(), v.end());
    return v;
}

/// Wall-clock phases, reported in the manifest only.
class Stopwatch {
public:
    void start(const std::string& phase) {
        phase_ = phase;
        begin_ = std::chrono::steady_clock::now();
    }
    double stop() {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin_).count();
        times_[phase_] += s;
        return s;
    }
    const std::map<std::string, double>& times() const noexcept { return times_; }

private:
    std::string phase_;
    std::chrono::steady_clock::time_point begin_;
    std::map<std::string, double> times_;
};

inline std::filesystem::path prepare_out_dir(const Config& c) {
    std::filesystem::path dir(c.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + c.out_dir + "': " + ec.message());
    return dir;
}

inline void write_manifest(const std::filesystem::path& dir, const Config& c, const Stopwatch& clock,
                           const json& extra) {
    json m{{"subcommand", c.scenario},
           {"code_version", kVersion},
           {"seed", c.seed},
           {"config", to_json(c)},
           {"wall_times_seconds", clock.times()}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ConfigError("cannot write manifest in '" + dir.string() + "'");
    out << m.dump(2) << '\n';
}

inline json telemetry_json(const SampleEnsemble& e) {
    const auto t = e.total_telemetry();
    std::uint64_t univariate = 0;
    for (const auto& d : e.diagnostics) univariate += d.univariate_draws;
    return json{{"joint_draws", t.draws},       {"proposals", t.proposals},          {"accepted", t.accepted},
                {"gibbs_fallbacks", t.fallbacks}, {"tilt_failures", t.tilt_failures}, {"univariate_draws", univariate},
                {"acceptance_rate", t.acceptance_rate()}};
}

inline void write_scores_csv(const std::filesystem::path& path, const std::vector<MethodScore>& scores) {
    auto out = snn::detail::open_output(path.string());
    out << "method,rmse,crps,n_eval\n";
    for (const auto& s : scores) {
        out << s.method << ',' << format_double(s.rmse) << ',' << format_double(s.crps) << ',' << s.n_eval << '\n';
    }
}

inline void write_truth_csv(const std::filesystem::path& path, const Eigen::VectorXd& truth) {
    auto out = snn::detail::open_output(path.string());
    out << "site,truth\n";
    for (Eigen::Index i = 0; i < truth.size(); ++i) out << i + 1 << ',' << format_double(truth(i)) << '\n';
}

inline void write_samples_file(const std::filesystem::path& path, const SampleMatrix& samples,
                               std::span<const std::size_t> columns) {
    auto out = snn::detail::open_output(path.string());
    write_samples_csv(out, samples, columns);
}

inline PrecomputeOptions precompute_options(const Config& c, OrderingKind ordering) {
    PrecomputeOptions o;
    o.m = c.m;
    o.ordering = ordering;
    o.neighbor_policy = parse_neighbor_policy(c.neighbor_policy);
    o.seed = c.seed;
    o.threads = c.threads;
    return o;
}

inline MethodScore score_method(const std::string& name, const SampleMatrix& draws, const Eigen::VectorXd& truth,
                                std::span<const std::size_t> columns) {
    const ScoreReport r = score(draws, truth, columns);
    return {name, r.rmse, r.crps, r.n_eval};
}

/// Grid, simulated truth, censoring. Shared by the simulation scenarios.
struct SimulatedData {
    LocationSet locations;
    Eigen::VectorXd truth;
    CensoredDataset data;
};

inline SimulatedData simulate_censored(const Config& c, std::size_t side, Stopwatch& clock) {
    clock.start("simulate");
    SimulatedData out{unit_grid(side), {}, {}};
    out.truth = simulate_field(c.model(), out.locations, c.seed, 40, c.threads);
    out.data = censor_below(out.locations, out.truth, c.threshold);
    clock.stop();
    return out;
}

struct PosteriorRun {
    std::string method;
    CensoredPosterior posterior;
    json telemetry;
};

inline PosteriorRun run_posterior(const Config& c, const std::string& method, OrderingKind ordering,
                                  const CensoredDataset& data, Stopwatch& clock) {
    clock.start(method + "_precompute");
    const SnnPlan plan = build_censored_problem(data, c.model(), precompute_options(c, ordering));
    clock.stop();
    clock.start(method + "_sample");
    PosteriorRun run{method, sample_censored_posterior(plan, c.n_samples, c.seed, {.threads = c.threads}), {}};
    clock.stop();
    run.telemetry = telemetry_json(run.posterior.ensemble);
    run.telemetry["jittered_positions"] = plan.jittered.size();
    return run;
}

// ---------------------------------------------------------------------------

struct FidelityResult {
    bool nothing_to_sample = false;
    std::size_t n_observed = 0;
    std::size_t n_censored = 0;
    std::vector<MethodScore> scores;                      // snn, msnn, gibbs, exact
    std::map<std::string, double> max_qq_deviation;       // method vs gibbs
    std::map<std::string, KsResult> ks_vs_gibbs;
    std::map<std::string, SampleMatrix> draws;            // columns = censored sites, ascending
    std::vector<std::size_t> censored_sites;
    Eigen::VectorXd truth;

    const MethodScore& score_of(const std::string& method) const {
        for (const auto& s : scores) {
            if (s.method == method) return s;
        }
        throw ConfigError("no score for method '" + method + "'");
    }
};

/// Probabilities 0.01, 0.02, ..., 0.99 for QQ summaries.
inline std::vector<double> qq_probabilities() {
    std::vector<double> p(99);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = static_cast<double>(k + 1) / 100.0;
    return p;
}

/// 20x20 censored grid: SNN (and maximin SNN) against the full conditional
/// TMVN sampled by independent Gibbs chains and by exact accept-reject.
inline FidelityResult run_fidelity(const Config& c) {
    validate(c);
    const auto dir = prepare_out_dir(c);
    Stopwatch clock;
    const SimulatedData sim = simulate_censored(c, c.grid_side, clock);
    write_dataset_csv((dir / "dataset.csv").string(), sim.data);
    write_truth_csv(dir / "truth.csv", sim.truth);

    FidelityResult result;
    result.truth = sim.truth;
    result.censored_sites = sim.data.censored_indices();
    result.n_censored = result.censored_sites.size();
    result.n_observed = sim.data.size() - result.n_censored;
    if (result.censored_sites.empty()) {
        result.nothing_to_sample = true;
        write_manifest(dir, c, clock, {{"status", "nothing to sample: no censored sites"}, {"n_observed", result.n_observed}});
        return result;
    }
    const auto& sites = result.censored_sites;
    Eigen::VectorXd truth_c(static_cast<Eigen::Index>(sites.size()));
    for (std::size_t k = 0; k < sites.size(); ++k) truth_c(static_cast<Eigen::Index>(k)) = sim.truth(static_cast<Eigen::Index>(sites[k]));
    std::vector<std::size_t> all_columns(sites.size());
    std::iota(all_columns.begin(), all_columns.end(), std::size_t{0});

    json telemetry;
    std::vector<std::string> methods{"snn"};
    const auto snn_run = run_posterior(c, "snn", c.ordering_kind(true), sim.data, clock);
    result.draws["snn"] = snn_run.posterior.ensemble.samples;
    telemetry["snn"] = snn_run.telemetry;
    if (c.msnn) {
        const auto msnn_run = run_posterior(c, "msnn", OrderingKind::maximin, sim.data, clock);
        result.draws["msnn"] = msnn_run.posterior.ensemble.samples;
        telemetry["msnn"] = msnn_run.telemetry;
        methods.push_back("msnn");
    }

    clock.start("conditional_target");
    const ConditionalTarget ct = conditional_target(sim.data, c.model(), sites, sim.data.observed_indices());
    clock.stop();
    clock.start("gibbs");
    result.draws["gibbs"] = gibbs_benchmark(ct, c.benchmark_count(), c.gibbs_burnin, c.seed, c.threads);
    clock.stop();
    methods.push_back("gibbs");
    if (c.exact_benchmark) {
        clock.start("exact");
        result.draws["exact"] = exact_benchmark(ct, c.benchmark_count(), c.seed, c.threads);
        clock.stop();
        methods.push_back("exact");
    }

    for (const auto& m : methods) {
        result.scores.push_back(score_method(m, result.draws.at(m), truth_c, all_columns));
        write_samples_file(dir / ("samples_" + m + ".csv"), result.draws.at(m), sites);
    }
    write_scores_csv(dir / "scores.csv", result.scores);

    // Pooled QQ and KS against the Gibbs benchmark.
    const auto probs = qq_probabilities();
    std::map<std::string, std::vector<double>> sorted;
    for (const auto& m : methods) sorted[m] = pooled_sorted(result.draws.at(m));
    {
        auto out = snn::detail::open_output((dir / "qq.csv").string());
        out << "probability";
        for (const auto& m : methods) out << ',' << m;
        out << '\n';
        for (double p : probs) {
            out << format_double(p);
            for (const auto& m : methods) out << ',' << format_double(quantile_sorted(sorted[m], p));
            out << '\n';
        }
    }
    {
        auto out = snn::detail::open_output((dir / "ks.csv").string());
        out << "method,reference,max_quantile_deviation,ks_statistic,ks_p_value\n";
        for (const auto& m : methods) {
            if (m == "gibbs") continue;
            const double dev = max_quantile_deviation(qq_at(sorted[m], sorted["gibbs"], probs));
            const KsResult ks = ks_statistic(sorted[m], sorted["gibbs"]);
            result.max_qq_deviation[m] = dev;
            result.ks_vs_gibbs[m] = ks;
            out << m << ",gibbs," << format_double(dev) << ',' << format_double(ks.statistic) << ','
                << format_double(ks.p_value) << '\n';
        }
    }
    write_manifest(dir, c, clock,
                   {{"n_observed", result.n_observed}, {"n_censored", result.n_censored}, {"telemetry", telemetry}});
    return result;
}

// ---------------------------------------------------------------------------

struct ScalingRow {
    std::size_t n = 0;
    double t_precompute = 0.0;
    double t_sample = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct ScalingResult {
    std::vector<ScalingRow> rows;
    double slope = 0.0;  // least-squares slope of log(total time) on log(n)
};

inline double loglog_slope(const std::vector<ScalingRow>& rows) {
    if (rows.size() < 2) return 0.0;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& r : rows) {
        const double x = std::log(static_cast<double>(r.n));
        const double y = std::log(r.t_precompute + r.t_sample);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const auto k = static_cast<double>(rows.size());
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

/// TN(-inf, upper_bound; Σ) on growing grids; times precompute and sampling
/// separately. scaling.csv holds the timings, scaling_summary.csv sample
/// statistics that are reproducible bit for bit.
inline ScalingResult run_scaling(const Config& c) {
    validate(c);
    const auto dir = prepare_out_dir(c);
    Stopwatch clock;
    ScalingResult result;
    const CovarianceModel model = c.model();
    for (std::size_t n : c.ladder) {
        const LocationSet locs = spaced_grid(n, c.spacing);
        const auto nn = static_cast<Eigen::Index>(n);
        TruncationProblem problem{Eigen::VectorXd::Constant(nn, -kInf), Eigen::VectorXd::Constant(nn, c.upper_bound),
                                  CovarianceSource::kernel(model, locs), std::nullopt};
        ScalingRow row;
        row.n = n;
        clock.start("precompute_" + std::to_string(n));
        const SnnPlan plan = precompute(problem, precompute_options(c, c.ordering_kind(true)));
        row.t_precompute = clock.stop();
        clock.start("sample_" + std::to_string(n));
        const SampleEnsemble ens = sample(plan, c.n_samples, c.seed, {.threads = c.threads});
        row.t_sample = clock.stop();
        row.mean = ens.samples.mean();
        row.sd = std::sqrt((ens.samples.array() - row.mean).square().sum() / static_cast<double>(ens.samples.size()));
        row.min = ens.samples.minCoeff();
        row.max = ens.samples.maxCoeff();
        result.rows.push_back(row);
    }
    result.slope = loglog_slope(result.rows);
    {
        auto out = snn::detail::open_output((dir / "scaling.csv").string());
        out << "n,m,n_samples,t_precompute,t_sample,t_total\n";
        for (const auto& r : result.rows) {
            out << r.n << ',' << c.m << ',' << c.n_samples << ',' << format_double(r.t_precompute) << ','
                << format_double(r.t_sample) << ',' << format_double(r.t_precompute + r.t_sample) << '\n';
        }
    }
    {
        auto out = snn::detail::open_output((dir / "scaling_summary.csv").string());
        out << "n,m,n_samples,mean,sd,min,max\n";
        for (const auto& r : result.rows) {
            out << r.n << ',' << c.m << ',' << c.n_samples << ',' << format_double(r.mean) << ','
                << format_double(r.sd) << ',' << format_double(r.min) << ',' << format_double(r.max) << '\n';
        }
    }
    write_manifest(dir, c, clock, {{"loglog_slope", result.slope}, {"timing_mode", c.threads == 1}});
    return result;
}

// ---------------------------------------------------------------------------

struct CensoredSimResult {
    std::size_t n_observed = 0;
    std::size_t n_censored = 0;
    std::size_t n_eval = 0;
    std::vector<MethodScore> subregion;  // snn, msnn, gibbs on the subregion's censored sites
    std::vector<MethodScore> full_grid;  // snn, msnn on every censored site

    const MethodScore& subregion_score(const std::string& method) const {
        for (const auto& s : subregion) {
            if (s.method == method) return s;
        }
        throw ConfigError("no score for method '" + method + "'");
    }
};

/// Sites of the square block [start, start + len) x [start, start + len) on a
/// side x side grid, clipped to the grid.
inline std::vector<std::size_t> grid_block(std::size_t side, std::ptrdiff_t start, std::ptrdiff_t len) {
    std::vector<std::size_t> out;
    const auto lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0));
    const auto hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(start + len, static_cast<std::ptrdiff_t>(side)));
    for (std::size_t i = lo; i < hi; ++i) {
        for (std::size_t j = lo; j < hi; ++j) out.push_back(i * side + j);
    }
    return out;
}

/// Censored GP simulation on a grid: SNN and maximin SNN over the whole grid,
/// Gibbs benchmark over a padded window around a central subregion; scores
/// on the subregion's censored sites.
inline CensoredSimResult run_censored_sim(const Config& c) {
    validate(c);
    const std::size_t side = c.full ? 100 : c.grid_side;
    if (c.subregion_side > side) throw ConfigError("subregion_side exceeds the grid");
    const auto dir = prepare_out_dir(c);
    Stopwatch clock;
    const SimulatedData sim = simulate_censored(c, side, clock);
    write_dataset_csv((dir / "dataset.csv").string(), sim.data);
    write_truth_csv(dir / "truth.csv", sim.truth);

    CensoredSimResult result;
    const auto censored = sim.data.censored_indices();
    result.n_censored = censored.size();
    result.n_observed = sim.data.size() - censored.size();
    if (censored.empty()) {
        write_manifest(dir, c, clock, {{"status", "nothing to sample: no censored sites"}});
        return result;
    }

    const auto start = static_cast<std::ptrdiff_t>((side - c.subregion_side) / 2);
    const auto sub_len = static_cast<std::ptrdiff_t>(c.subregion_side);
    const auto pad = static_cast<std::ptrdiff_t>(c.window_padding);
    std::vector<char> is_censored(sim.data.size(), 0);
    for (std::size_t i : censored) is_censored[i] = 1;
    std::vector<std::size_t> eval_sites;
    for (std::size_t i : grid_block(side, start, sub_len)) {
        if (is_censored[i]) eval_sites.push_back(i);
    }
    std::vector<std::size_t> window_sites;
    for (std::size_t i : grid_block(side, start - pad, sub_len + 2 * pad)) {
        if (is_censored[i]) window_sites.push_back(i);
    }
    std::sort(eval_sites.begin(), eval_sites.end());
    std::sort(window_sites.begin(), window_sites.end());
    result.n_eval = eval_sites.size();

    // Column of each censored site within the posterior ensembles.
    std::vector<std::size_t> column_of(sim.data.size(), 0);
    for (std::size_t k = 0; k < censored.size(); ++k) column_of[censored[k]] = k;
    std::vector<std::size_t> eval_columns, all_columns(censored.size());
    for (std::size_t i : eval_sites) eval_columns.push_back(column_of[i]);
    std::iota(all_columns.begin(), all_columns.end(), std::size_t{0});
    Eigen::VectorXd truth_c(static_cast<Eigen::Index>(censored.size()));
    for (std::size_t k = 0; k < censored.size(); ++k) truth_c(static_cast<Eigen::Index>(k)) = sim.truth(static_cast<Eigen::Index>(censored[k]));

    json telemetry;
    std::vector<std::pair<std::string, OrderingKind>> runs{{"snn", c.ordering_kind(true)}};
    if (c.msnn) runs.emplace_back("msnn", OrderingKind::maximin);
    for (const auto& [name, ordering] : runs) {
        const auto run = run_posterior(c, name, ordering, sim.data, clock);
        telemetry[name] = run.telemetry;
        const SampleMatrix& draws = run.posterior.ensemble.samples;
        if (!eval_columns.empty()) result.subregion.push_back(score_method(name, draws, truth_c, eval_columns));
        result.full_grid.push_back(score_method(name, draws, truth_c, all_columns));
        write_samples_file(dir / ("samples_" + name + ".csv"), draws, censored);
    }

    if (!eval_sites.empty()) {
        clock.start("conditional_target");
        const ConditionalTarget ct = conditional_target(sim.data, c.model(), window_sites, sim.data.observed_indices());
        clock.stop();
        clock.start("gibbs");
        const SampleMatrix gibbs = gibbs_benchmark(ct, c.benchmark_count(), c.gibbs_burnin, c.seed, c.threads);
        clock.stop();
        std::vector<std::size_t> window_column(sim.data.size(), 0);
        for (std::size_t k = 0; k < window_sites.size(); ++k) window_column[window_sites[k]] = k;
        std::vector<std::size_t> gibbs_eval;
        Eigen::VectorXd truth_w(static_cast<Eigen::Index>(window_sites.size()));
        for (std::size_t k = 0; k < window_sites.size(); ++k) truth_w(static_cast<Eigen::Index>(k)) = sim.truth(static_cast<Eigen::Index>(window_sites[k]));
        for (std::size_t i : eval_sites) gibbs_eval.push_back(window_column[i]);
        result.subregion.push_back(score_method("gibbs", gibbs, truth_w, gibbs_eval));
        write_samples_file(dir / "samples_gibbs_window.csv", gibbs, window_sites);
    }
    write_scores_csv(dir / "scores_subregion.csv", result.subregion);
    write_scores_csv(dir / "scores_full_grid.csv", result.full_grid);
    write_manifest(dir, c, clock,
                   {{"grid_side", side},
                    {"n_observed", result.n_observed},
                    {"n_censored", result.n_censored},
                    {"n_eval", result.n_eval},
                    {"window_sites", window_sites.size()},
                    {"telemetry", telemetry}});
    return result;
}

// ---------------------------------------------------------------------------

inline LocationSet read_locations_csv(const std::string& path, Metric metric) {
    return LocationSet(read_matrix_csv(path), metric);
}

/// Posterior samples at the censored sites of a user dataset, with optional
/// kriging onto prediction locations.
inline void run_censored_data(const Config& c) {
    validate(c);
    const auto dir = prepare_out_dir(c);
    Stopwatch clock;
    const Metric metric = parse_metric(c.metric);
    clock.start("read");
    const CensoredDataset data = read_dataset_csv(c.input, metric);
    clock.stop();
    const auto run = run_posterior(c, "snn", c.ordering_kind(false), data, clock);
    const auto& post = run.posterior;
    write_samples_file(dir / "posterior_samples.csv", post.ensemble.samples, post.censored_indices);
    {
        auto out = snn::detail::open_output((dir / "posterior_summary.csv").string());
        out << "site,mean,sd,lower,upper\n";
        for (std::size_t k = 0; k < post.censored_indices.size(); ++k) {
            const auto col = post.ensemble.samples.col(static_cast<Eigen::Index>(k));
            const double mean = col.mean();
            const double sd = std::sqrt((col.array() - mean).square().mean());
            const auto site = static_cast<Eigen::Index>(post.censored_indices[k]);
            out << site + 1 << ',' << format_double(mean) << ',' << format_double(sd) << ','
                << format_field(data.lower(site)) << ',' << format_field(data.upper(site)) << '\n';
        }
    }
    std::optional<LocationSet> grid;
    if (!c.predict_locations.empty()) {
        grid = read_locations_csv(c.predict_locations, metric);
    } else if (c.predict_side > 1) {
        if (data.locations.dim() != 2) throw ConfigError("predict_side needs two-dimensional locations");
        const Eigen::RowVectorXd lo = data.locations.points.colwise().minCoeff();
        const Eigen::RowVectorXd hi = data.locations.points.colwise().maxCoeff();
        const std::size_t s = c.predict_side;
        Eigen::MatrixXd pts(static_cast<Eigen::Index>(s * s), 2);
        for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t j = 0; j < s; ++j) {
                const double u = static_cast<double>(i) / static_cast<double>(s - 1);
                const double v = static_cast<double>(j) / static_cast<double>(s - 1);
                pts.row(static_cast<Eigen::Index>(i * s + j)) << lo(0) + u * (hi(0) - lo(0)), lo(1) + v * (hi(1) - lo(1));
            }
        }
        grid = LocationSet(std::move(pts), metric);
    }
    if (grid) {
        clock.start("kriging");
        const KrigingResult k = krige_predict(data, post, c.model(), *grid, c.m, c.threads);
        clock.stop();
        auto out = snn::detail::open_output((dir / "kriging.csv").string());
        for (std::size_t d = 0; d < grid->dim(); ++d) out << "coord_" << d + 1 << ',';
        out << "mean,sd\n";
        for (Eigen::Index g = 0; g < k.mean.size(); ++g) {
            for (Eigen::Index d = 0; d < static_cast<Eigen::Index>(grid->dim()); ++d) out << format_double(grid->points(g, d)) << ',';
            out << format_double(k.mean(g)) << ',' << format_double(k.sd(g)) << '\n';
        }
    }
    write_manifest(dir, c, clock,
                   {{"n_observed", data.observed_indices().size()},
                    {"n_censored", post.censored_indices.size()},
                    {"telemetry", {{"snn", run.telemetry}}}});
}

/// Plain TMVN sampling from an explicit covariance matrix and bounds.
inline void run_sample(const Config& c) {
    validate(c);
    const auto dir = prepare_out_dir(c);
    Stopwatch clock;
    clock.start("read");
    Eigen::MatrixXd sigma = read_matrix_csv(c.covariance);
    auto [lower, upper] = read_bounds_csv(c.bounds);
    std::optional<LocationSet> locations;
    if (!c.locations.empty()) locations = read_locations_csv(c.locations, parse_metric(c.metric));
    clock.stop();
    if (sigma.rows() != lower.size()) throw ConfigError("covariance and bounds sizes differ");
    TruncationProblem problem{lower, upper, CovarianceSource::matrix(std::move(sigma)), std::move(locations)};
    clock.start("precompute");
    const SnnPlan plan = precompute(problem, precompute_options(c, c.ordering_kind(false)));
    clock.stop();
    clock.start("sample");
    const SampleEnsemble ens = sample(plan, c.n_samples, c.seed, {.threads = c.threads});
    clock.stop();
    write_samples_file(dir / "samples.csv", ens.samples, {});
    json tel = telemetry_json(ens);
    tel["jittered_positions"] = plan.jittered.size();
    write_manifest(dir, c, clock, {{"n", plan.size()}, {"telemetry", tel}});
}

}  // namespace snn::experiments
