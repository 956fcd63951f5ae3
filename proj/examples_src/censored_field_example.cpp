// Censored spatial data: simulate a field, censor below a detection limit,
// draw the latent values at censored sites and krige onto a coarse grid.

#include <cstdio>

#include "snn/censored.hpp"

int main() {
    constexpr std::size_t side = 25;
    Eigen::MatrixXd pts(side * side, 2);
    for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) pts.row(i * side + j) << i / double(side - 1), j / double(side - 1);
    }
    const snn::LocationSet sites(pts);
    snn::CovarianceModel model;
    model.ranges = {0.1};
    model.smoothness = snn::Smoothness::three_halves;
    model.nugget = 1e-4;

    const auto chol = snn::cholesky(snn::covariance_matrix(model, sites));
    snn::Rng rng(11, snn::streams::kSimulation);
    Eigen::VectorXd e(sites.size());
    for (auto& v : e) v = rng.normal();
    const Eigen::VectorXd field = chol.lower * e;

    const snn::CensoredDataset data = snn::censor_below(sites, field, 0.5);
    snn::PrecomputeOptions options;
    options.m = 30;
    const snn::SnnPlan plan = snn::build_censored_problem(data, model, options);
    const snn::CensoredPosterior post = snn::sample_censored_posterior(plan, 50, 11);

    double err = 0.0;
    for (std::size_t k = 0; k < post.censored_indices.size(); ++k) {
        const double d = post.ensemble.samples.col(k).mean() - field(post.censored_indices[k]);
        err += d * d;
    }
    std::printf("%zu of %zu sites censored, posterior-mean rmse %.4f\n", post.censored_indices.size(), data.size(),
                std::sqrt(err / post.censored_indices.size()));

    Eigen::MatrixXd coarse(25, 2);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) coarse.row(i * 5 + j) << 0.1 + 0.2 * i, 0.1 + 0.2 * j;
    }
    const auto krig = snn::krige_predict(data, post, model, snn::LocationSet(coarse));
    for (int g = 0; g < 5; ++g) std::printf("(%.1f, %.1f)  mean %+.3f  sd %.3f\n", coarse(g, 0), coarse(g, 1), krig.mean(g), krig.sd(g));
}
