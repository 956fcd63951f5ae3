// Draws from a Matérn field on a 30x30 grid truncated to the negative orthant.

#include <cstdio>

#include "snn/snn.hpp"

int main() {
    constexpr std::size_t side = 30;
    Eigen::MatrixXd pts(side * side, 2);
    for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) pts.row(i * side + j) << i / double(side - 1), j / double(side - 1);
    }
    snn::CovarianceModel model;
    model.ranges = {0.1};
    model.smoothness = snn::Smoothness::three_halves;

    const auto n = static_cast<Eigen::Index>(side * side);
    snn::TruncationProblem problem{Eigen::VectorXd::Constant(n, -snn::kInf), Eigen::VectorXd::Zero(n),
                                   snn::CovarianceSource::kernel(model, snn::LocationSet(pts)), std::nullopt};
    snn::PrecomputeOptions options;
    options.m = 30;
    options.ordering = snn::OrderingKind::maximin;
    const snn::SnnPlan plan = snn::precompute(problem, options);
    const snn::SampleEnsemble draws = snn::sample(plan, 20, 7);

    std::printf("%zu draws of %zu sites, max value %.4f, mean %.4f\n", draws.count(), draws.dim(),
                draws.samples.maxCoeff(), draws.samples.mean());
    const auto tel = draws.total_telemetry();
    std::printf("joint draws %llu, acceptance %.3f\n", static_cast<unsigned long long>(tel.draws),
                tel.acceptance_rate());
}
