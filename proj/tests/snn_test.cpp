#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "snn/eval.hpp"
#include "snn/snn.hpp"

namespace {

using namespace snn;

LocationSet grid(std::size_t side) {
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(side * side), 2);
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) {
            pts.row(r++) << static_cast<double>(i) / static_cast<double>(side - 1),
                static_cast<double>(j) / static_cast<double>(side - 1);
        }
    }
    return LocationSet(pts);
}

CovarianceModel matern(double range, double nugget = 0.0) {
    CovarianceModel m;
    m.ranges = {range};
    m.nugget = nugget;
    return m;
}

Eigen::MatrixXd random_spd(Eigen::Index n, Rng& rng) {
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) l(i, j) = 0.7 * rng.normal();
        l(i, i) = 0.5 + rng.uniform();
    }
    return l * l.transpose();
}

std::vector<double> column(const SampleEnsemble& e, Eigen::Index j) {
    std::vector<double> out(e.count());
    for (std::size_t k = 0; k < e.count(); ++k) out[k] = e.samples(static_cast<Eigen::Index>(k), j);
    return out;
}

TEST(Precompute, SingleCoordinate) {
    TruncationProblem p{Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, kInf),
                        CovarianceSource::matrix(Eigen::MatrixXd::Constant(1, 1, 2.0)), std::nullopt};
    const auto plan = precompute(p, {.m = 5});
    ASSERT_EQ(plan.size(), 1u);
    EXPECT_EQ(plan.factors[0].weights.cols(), 0);
    EXPECT_DOUBLE_EQ(plan.factors[0].covariance(0, 0), 2.0);
}

TEST(Precompute, FullConditioningFirstFactorIsSigma) {
    Rng rng(1, 0);
    const Eigen::MatrixXd sigma = random_spd(4, rng);
    TruncationProblem p{Eigen::VectorXd::Constant(4, -kInf), Eigen::VectorXd::Constant(4, kInf),
                        CovarianceSource::matrix(sigma), std::nullopt};
    const auto plan = precompute(p, {.m = 4});
    EXPECT_EQ(plan.neighbors.later[0], (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_LE((plan.factors[0].covariance - sigma).norm(), 1e-14);
}

TEST(Precompute, GridFactorsMatchDenseOracle) {
    const auto locs = grid(20);
    const auto model = matern(0.1);
    const Eigen::MatrixXd sigma = covariance_matrix(model, locs);
    TruncationProblem p{Eigen::VectorXd::Constant(400, -kInf), Eigen::VectorXd::Constant(400, 0.0),
                        CovarianceSource::kernel(model, locs), std::nullopt};
    const auto plan = precompute(p, {.m = 30});
    for (std::size_t i = 0; i < 400; ++i) ASSERT_EQ(plan.neighbors.neighbors(i).size(), 30u);
    Rng rng(2, 0);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t i = rng.below(400);
        std::vector<Eigen::Index> later, prev;
        for (std::size_t j : plan.neighbors.later[i]) later.push_back(static_cast<Eigen::Index>(plan.ordering.permutation[j]));
        for (std::size_t j : plan.neighbors.previous[i]) prev.push_back(static_cast<Eigen::Index>(plan.ordering.permutation[j]));
        const Eigen::MatrixXd ll = sigma(later, later);
        const Eigen::MatrixXd lp = sigma(later, prev);
        const Eigen::MatrixXd pp = sigma(prev, prev);
        const auto& f = plan.factors[i];
        if (!prev.empty()) {
            const Eigen::MatrixXd v = lp * pp.fullPivLu().inverse();
            EXPECT_LE((f.weights - v).norm() / v.norm(), 1e-8) << i;
            const Eigen::MatrixXd s = ll - v * lp.transpose();
            EXPECT_LE((f.covariance - s).norm() / s.norm(), 1e-8) << i;
        }
    }
}

TEST(Precompute, RejectsBadInput) {
    TruncationProblem p{Eigen::VectorXd::Constant(2, 1.0), Eigen::VectorXd::Constant(2, 1.0),
                        CovarianceSource::matrix(Eigen::MatrixXd::Identity(2, 2)), std::nullopt};
    EXPECT_THROW(precompute(p), ConfigError);
    p.upper.setConstant(2.0);
    EXPECT_THROW(precompute(p, {.m = 0}), ConfigError);
    Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(2, 2);
    asym(0, 1) = 0.3;
    EXPECT_THROW(CovarianceSource::matrix(asym), ConfigError);
}

TEST(Precompute, FactorizationFailureNamesPosition) {
    Eigen::MatrixXd indefinite(3, 3);
    indefinite << 1, 0.9, 0.9, 0.9, 1, -0.9, 0.9, -0.9, 1;
    TruncationProblem p{Eigen::VectorXd::Constant(3, -kInf), Eigen::VectorXd::Constant(3, kInf),
                        CovarianceSource::matrix(indefinite), std::nullopt};
    EXPECT_THROW(precompute(p, {.m = 3}), FactorizationError);
}

TEST(MarginalKeepFirst, Examples) {
    EXPECT_EQ(marginal_keep_first(Eigen::Vector3d(3.2, -1.0, 0.0)), 3.2);
    EXPECT_EQ(marginal_keep_first(Eigen::VectorXd::Constant(1, -4.0)), -4.0);
    EXPECT_THROW(marginal_keep_first(std::span<const double>()), ConfigError);
}

TEST(MarginalKeepFirst, FirstEntryOfJointMatchesMarginal) {
    Eigen::MatrixXd s(2, 2);
    s << 1.0, -0.6, -0.6, 1.5;
    const auto t = LowDimTarget::from_covariance(Eigen::Vector2d(-0.5, 0.3), Eigen::Vector2d(1.0, kInf), s);
    Rng rng(3, 0);
    std::vector<double> joint, oracle;
    for (int k = 0; k < 10000; ++k) {
        joint.push_back(marginal_keep_first(sample_lowdim_tmvn(t, rng)));
        oracle.push_back(sample_rejection_oracle(t, rng)(0));
    }
    EXPECT_GT(ks_statistic(joint, oracle).p_value, 0.01);
}

TEST(Sample, UnconstrainedMomentsAtFullConditioning) {
    Rng rng(4, 0);
    const Eigen::MatrixXd sigma = random_spd(5, rng);
    TruncationProblem p{Eigen::VectorXd::Constant(5, -kInf), Eigen::VectorXd::Constant(5, kInf),
                        CovarianceSource::matrix(sigma), std::nullopt};
    const auto plan = precompute(p, {.m = 5});
    EXPECT_LE((implied_covariance(plan) - sigma).norm() / sigma.norm(), 1e-12);
    const std::size_t n = 10000;
    const auto ens = sample(plan, n, 7);
    const Eigen::RowVectorXd mean = ens.samples.colwise().mean();
    const Eigen::MatrixXd centered = ens.samples.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    for (Eigen::Index i = 0; i < 5; ++i) {
        EXPECT_LE(std::abs(mean(i)), 4.0 * std::sqrt(sigma(i, i) / n)) << i;
        for (Eigen::Index j = 0; j < 5; ++j) {
            // SE of a sample covariance for Gaussian data.
            const double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / n);
            EXPECT_LE(std::abs(cov(i, j) - sigma(i, j)), 4.0 * se) << i << "," << j;
        }
    }
}

TEST(Sample, UnconstrainedMomentsMatchImpliedCovariance) {
    const auto locs = grid(4);
    const auto model = matern(0.4, 1e-6);
    TruncationProblem p{Eigen::VectorXd::Constant(16, -kInf), Eigen::VectorXd::Constant(16, kInf),
                        CovarianceSource::kernel(model, locs), std::nullopt};
    const auto plan = precompute(p, {.m = 3, .ordering = OrderingKind::maximin});
    const Eigen::MatrixXd implied = implied_covariance(plan);
    const std::size_t n = 10000;
    const auto ens = sample(plan, n, 8);
    const Eigen::RowVectorXd mean = ens.samples.colwise().mean();
    const Eigen::MatrixXd centered = ens.samples.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    for (Eigen::Index i = 0; i < 16; ++i) {
        EXPECT_LE(std::abs(mean(i)), 4.0 * std::sqrt(implied(i, i) / n));
        for (Eigen::Index j = 0; j < 16; ++j) {
            const double se = std::sqrt((implied(i, i) * implied(j, j) + implied(i, j) * implied(i, j)) / n);
            EXPECT_LE(std::abs(cov(i, j) - implied(i, j)), 4.5 * se) << i << "," << j;
        }
    }
}

// Bounds around a random centre so that naive rejection accepts often enough.
TEST(Sample, ExactAtFullConditioning) {
    Rng setup(5, 0);
    int rejections = 0;
    int tests = 0;
    for (int rep = 0; rep < 6; ++rep) {
        const auto n = static_cast<Eigen::Index>(3 + rep % 3);
        const Eigen::MatrixXd sigma = random_spd(n, setup);
        Eigen::VectorXd lo(n), hi(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sd = std::sqrt(sigma(i, i));
            if (setup.uniform() < 0.5) {
                lo(i) = sd * (setup.uniform() - 0.8);
                hi(i) = kInf;
            } else {
                lo(i) = -kInf;
                hi(i) = sd * (0.8 - setup.uniform());
            }
        }
        TruncationProblem p{lo, hi, CovarianceSource::matrix(sigma), std::nullopt};
        const auto plan = precompute(p, {.m = static_cast<std::size_t>(n)});
        const auto ens = sample(plan, 5000, 100 + static_cast<std::uint64_t>(rep));
        const auto target = LowDimTarget::from_covariance(lo, hi, sigma);
        Rng rng(5, 1 + static_cast<std::uint64_t>(rep));
        std::vector<Eigen::VectorXd> oracle;
        for (int k = 0; k < 5000; ++k) oracle.push_back(sample_rejection_oracle(target, rng));
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<double> o;
            for (const auto& z : oracle) o.push_back(z(i));
            ++tests;
            if (ks_statistic(column(ens, i), o).p_value < 0.01) ++rejections;
        }
    }
    EXPECT_LE(rejections, 1) << "of " << tests;
}

TEST(Sample, FeasibleAndDeterministicAcrossThreads) {
    const auto locs = grid(12);
    const auto model = matern(0.1, 1e-6);
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(144, -kInf);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(144, kInf);
    for (Eigen::Index i = 0; i < 144; i += 2) hi(i) = 0.0;
    for (Eigen::Index i = 1; i < 144; i += 3) lo(i) = -0.5;
    TruncationProblem p{lo, hi, CovarianceSource::kernel(model, locs), std::nullopt};
    for (auto ordering : {OrderingKind::coordinate, OrderingKind::random, OrderingKind::maximin}) {
        const auto plan1 = precompute(p, {.m = 10, .ordering = ordering, .seed = 3, .threads = 1});
        const auto plan4 = precompute(p, {.m = 10, .ordering = ordering, .seed = 3, .threads = 4});
        const auto a = sample(plan1, 40, 11, {.threads = 1});
        const auto b = sample(plan4, 40, 11, {.threads = 4});
        ASSERT_TRUE(a.samples == b.samples);
        for (Eigen::Index k = 0; k < a.samples.rows(); ++k) {
            for (Eigen::Index i = 0; i < 144; ++i) {
                ASSERT_GE(a.samples(k, i), lo(i));
                ASSERT_LE(a.samples(k, i), hi(i));
            }
        }
        const auto tel = a.total_telemetry();
        EXPECT_EQ(tel.accepted + tel.fallbacks, tel.draws);
        const auto c = sample(plan1, 40, 12);
        EXPECT_FALSE(a.samples == c.samples);
    }
}

TEST(Sample, SampleCountZeroAndPrefixStability) {
    TruncationProblem p{Eigen::VectorXd::Constant(3, 0.0), Eigen::VectorXd::Constant(3, kInf),
                        CovarianceSource::matrix(Eigen::MatrixXd::Identity(3, 3)), std::nullopt};
    const auto plan = precompute(p, {.m = 2});
    EXPECT_EQ(sample(plan, 0, 1).count(), 0u);
    // Sample k uses stream k, so a longer run extends a shorter one.
    const auto a = sample(plan, 5, 1);
    const auto b = sample(plan, 9, 1);
    EXPECT_TRUE(a.samples == b.samples.topRows(5));
}

TEST(Sample, GivenOrderingIsValidated) {
    TruncationProblem p{Eigen::VectorXd::Constant(3, -kInf), Eigen::VectorXd::Constant(3, kInf),
                        CovarianceSource::matrix(Eigen::MatrixXd::Identity(3, 3)), std::nullopt};
    PrecomputeOptions opt;
    opt.ordering = OrderingKind::given;
    opt.given_ordering = Ordering{{0, 0, 1}, OrderingKind::given};
    EXPECT_THROW(precompute(p, opt), ConfigError);
    opt.given_ordering = Ordering{{2, 0, 1}, OrderingKind::given};
    EXPECT_EQ(precompute(p, opt).ordering.permutation, (std::vector<std::size_t>{2, 0, 1}));
}

}  // namespace
