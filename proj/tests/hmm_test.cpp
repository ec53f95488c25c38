#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "regime/hmm.hpp"

using namespace regime;

namespace {

GaussianHmm random_model(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::uniform_real_distribution<double> mu(-3.0, 3.0);
    std::uniform_real_distribution<double> sd(0.4, 2.0);
    GaussianHmm m;
    m.transition = TransitionMatrix(n);
    double s0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        m.initial.push_back(u(rng));
        s0 += m.initial.back();
        m.means.push_back(mu(rng));
        m.stds.push_back(sd(rng));
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += (m.transition(i, j) = u(rng));
        for (std::size_t j = 0; j < n; ++j) m.transition(i, j) /= row;
    }
    for (double& p : m.initial) p /= s0;
    return m;
}

std::vector<double> random_obs(std::size_t T, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 2.0);
    std::vector<double> y(T);
    for (double& v : y) v = z(rng);
    return y;
}

void expect_rows_sum_to_one(const StateTable& t) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto row = t.row(r);
        EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-9);
    }
}

EmReport report_with(std::size_t n, double ll) {
    EmReport r;
    r.fitted.means.assign(n, 0.0);
    r.loglik_trace = {ll};
    return r;
}

}  // namespace

TEST(ForwardFilter, MatchesPathEnumeration) {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 1 + trial % 3;
        const std::size_t T = 1 + (trial * 5) % 8;
        const auto m = random_model(n, rng);
        const auto y = random_obs(T, rng);
        const auto exact = oracle::enumerate(m, y);
        const auto f = forward_filter(m, y);
        const auto s = backward_smooth(m, f);
        EXPECT_NEAR(f.log_likelihood, exact.log_likelihood, 1e-10);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t i = 0; i < n; ++i) {
                EXPECT_NEAR(f.filtered(t, i), exact.filtered[t][i], 1e-10);
                EXPECT_NEAR(f.predicted(t, i), exact.predicted[t][i], 1e-10);
                EXPECT_NEAR(s.smoothed(t, i), exact.smoothed[t][i], 1e-10);
            }
        }
        expect_rows_sum_to_one(f.filtered);
        expect_rows_sum_to_one(f.predicted);
        expect_rows_sum_to_one(s.smoothed);
        double sum = 0.0;
        for (double c : f.log_normalizers) sum += c;
        EXPECT_NEAR(sum, f.log_likelihood, 1e-12);
    }
}

TEST(ForwardFilter, SingleStateIsGaussianLikelihood) {
    GaussianHmm m{{1.0}, TransitionMatrix::from_rows({{1.0}}), {0.3}, {1.7}};
    const std::vector<double> y{0.1, -2.0, 3.5, 0.0};
    const auto f = forward_filter(m, y);
    double ll = 0.0;
    for (double v : y) ll += std::log(oracle::normal_pdf(v, 0.3, 1.7));
    EXPECT_NEAR(f.log_likelihood, ll, 1e-12);
    for (std::size_t t = 0; t < y.size(); ++t) EXPECT_EQ(f.filtered(t, 0), 1.0);
    const auto s = backward_smooth(m, f);
    for (std::size_t t = 0; t < y.size(); ++t) EXPECT_EQ(s.smoothed(t, 0), 1.0);
}

TEST(ForwardFilter, IdenticalStatesLeaveFilteredEqualToPredicted) {
    std::mt19937_64 rng(3);
    auto m = random_model(3, rng);
    m.means.assign(3, 0.5);
    m.stds.assign(3, 1.2);
    const auto f = forward_filter(m, random_obs(20, rng));
    for (std::size_t t = 0; t < 20; ++t) {
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(f.filtered(t, i), f.predicted(t, i), 1e-12);
    }
}

TEST(ForwardFilter, ExtremeObservationsDoNotUnderflow) {
    GaussianHmm m{{0.5, 0.5}, TransitionMatrix::from_rows({{0.9, 0.1}, {0.1, 0.9}}), {0.0, 1.0}, {0.01, 0.02}};
    const std::vector<double> y{1000.0, -1000.0, 0.5};
    const auto f = forward_filter(m, y);
    EXPECT_TRUE(std::isfinite(f.log_likelihood));
    expect_rows_sum_to_one(f.filtered);
}

TEST(ForwardFilter, RejectsBadInput) {
    GaussianHmm m{{1.0}, TransitionMatrix::from_rows({{1.0}}), {0.0}, {1.0}};
    EXPECT_THROW(forward_filter(m, std::vector<double>{1.0, NAN}), Error);
    EXPECT_THROW(forward_filter(m, std::vector<double>{}), Error);
    m.stds[0] = 0.0;
    EXPECT_THROW(forward_filter(m, std::vector<double>{1.0}), Error);
}

TEST(BackwardSmooth, SingleObservationEqualsFiltered) {
    std::mt19937_64 rng(7);
    const auto m = random_model(3, rng);
    const auto f = forward_filter(m, std::vector<double>{0.4});
    const auto s = backward_smooth(m, f);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.smoothed(0, i), f.filtered(0, i));
}

TEST(Viterbi, MatchesEnumeratedArgmax) {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 1 + trial % 3;
        const std::size_t T = 1 + (trial * 3) % 8;
        const auto m = random_model(n, rng);
        const auto y = random_obs(T, rng);
        const auto exact = oracle::enumerate(m, y);
        const auto path = viterbi(m, y);
        EXPECT_EQ(path.states, exact.map_path);
        EXPECT_NEAR(joint_log_probability(m, y, path.states), exact.map_log_prob, 1e-9);
    }
}

TEST(Viterbi, DominatesSmoothedArgmaxPath) {
    std::mt19937_64 rng(66);
    for (int trial = 0; trial < 30; ++trial) {
        const auto m = random_model(3, rng);
        const auto y = sample_hmm(m, 200, rng).observations;
        const auto f = forward_filter(m, y);
        const auto smoothed_path = row_argmax(backward_smooth(m, f).smoothed);
        EXPECT_GE(joint_log_probability(m, y, viterbi(m, y).states) + 1e-9,
                  joint_log_probability(m, y, smoothed_path.states));
    }
}

TEST(Viterbi, SimpleCases) {
    GaussianHmm one{{1.0}, TransitionMatrix::from_rows({{1.0}}), {0.0}, {1.0}};
    EXPECT_EQ(viterbi(one, std::vector<double>{1, 2, 3}).states, (std::vector<std::size_t>{0, 0, 0}));
    GaussianHmm far{{0.5, 0.5}, TransitionMatrix::from_rows({{0.9, 0.1}, {0.1, 0.9}}), {0.0, 100.0}, {1.0, 1.0}};
    EXPECT_EQ(viterbi(far, std::vector<double>{0.1, 99.8}).states, (std::vector<std::size_t>{0, 1}));
}

TEST(Relabel, OrdersByStdAndKeepsLikelihood) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const auto m = random_model(3, rng);
        const auto r = relabel_by_std(m);
        EXPECT_TRUE(std::is_sorted(r.stds.begin(), r.stds.end()));
        const auto y = random_obs(50, rng);
        EXPECT_NEAR(forward_filter(r, y).log_likelihood, forward_filter(m, y).log_likelihood, 1e-9);
    }
}

TEST(ExpectedTransitionCounts, MatchPairwiseEnumeration) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = random_model(2 + trial % 2, rng);
        const std::size_t n = m.n_states();
        const auto y = random_obs(6, rng);
        const auto f = forward_filter(m, y);
        const auto counts = expected_transition_counts(m, f, backward_smooth(m, f));
        std::vector<long double> want(n * n, 0.0L);
        long double total = 0.0L;
        oracle::for_each_path(n, y.size(), [&](const std::vector<std::size_t>& path) {
            const long double p = oracle::joint(m, y, path);
            total += p;
            for (std::size_t t = 0; t + 1 < path.size(); ++t) want[path[t] * n + path[t + 1]] += p;
        });
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                EXPECT_NEAR(counts(i, j), static_cast<double>(want[i * n + j] / total), 1e-10);
            }
        }
    }
}

TEST(EmFit, LogLikelihoodIsMonotone) {
    std::mt19937_64 rng(2718);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t n = 1 + trial % 3;
        const auto truth = random_model(n, rng);
        const auto y = sample_hmm(truth, 150 + trial, rng).observations;
        EmConfig cfg;
        cfg.restarts = 1;
        cfg.seed = static_cast<std::uint64_t>(trial);
        cfg.max_iterations = 200;
        const auto fit = em_fit(y, 1 + (trial / 3) % 3, cfg);
        for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
            EXPECT_GE(fit.loglik_trace[i], fit.loglik_trace[i - 1] - 1e-8) << "trial " << trial << " step " << i;
        }
        EXPECT_EQ(fit.loglik_trace.size(), fit.n_iterations + 1);
    }
}

TEST(EmFit, SingleStateIsClosedForm) {
    std::mt19937_64 rng(5);
    const auto y = random_obs(300, rng);
    const auto fit = em_fit(y, 1);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.size());
    EXPECT_NEAR(fit.fitted.means[0], mean, 1e-12);
    EXPECT_NEAR(fit.fitted.stds[0] * fit.fitted.stds[0], var, 1e-12);
    EXPECT_TRUE(fit.converged);
    // The first M-step reaches the MLE; the trace is flat from then on.
    for (std::size_t i = 2; i < fit.loglik_trace.size(); ++i) {
        EXPECT_NEAR(fit.loglik_trace[i], fit.loglik_trace[1], 1e-9);
    }
}

TEST(EmFit, RecoversWellSeparatedThreeStateModel) {
    const GaussianHmm truth{{1.0 / 3, 1.0 / 3, 1.0 / 3},
                            TransitionMatrix::from_rows({{0.95, 0.03, 0.02}, {0.04, 0.93, 0.03}, {0.02, 0.05, 0.93}}),
                            {-5.0, 0.0, 5.0},
                            {0.7, 1.0, 1.4}};
    std::mt19937_64 rng(31337);
    const auto y = sample_hmm(truth, 20'000, rng).observations;
    const auto fit = em_fit(y, 3);
    const auto& m = fit.fitted;
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(m.stds[i], truth.stds[i], 0.1 * truth.stds[i]);
        // The zero-mean state is measured relative to its std.
        const double scale = truth.means[i] != 0.0 ? std::abs(truth.means[i]) : truth.stds[i];
        EXPECT_NEAR(m.means[i], truth.means[i], 0.1 * scale);
        for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.transition(i, j), truth.transition(i, j), 0.02);
    }
    EmConfig cfg;
    const auto two = em_fit(y, 2, cfg);
    EXPECT_LT(bic(fit.log_likelihood(), parameter_count(3), 20'000.0),
              bic(two.log_likelihood(), parameter_count(2), 20'000.0));
}

TEST(EmFit, DeterministicForSeed) {
    std::mt19937_64 rng(9);
    const auto y = sample_hmm(random_model(2, rng), 400, rng).observations;
    const auto a = em_fit(y, 2);
    const auto b = em_fit(y, 2);
    EXPECT_EQ(a.loglik_trace, b.loglik_trace);
    EXPECT_EQ(a.fitted.means, b.fitted.means);
    EXPECT_EQ(a.best_restart_seed, b.best_restart_seed);
}

TEST(EmFit, Errors) {
    std::mt19937_64 rng(9);
    EXPECT_THROW(em_fit(random_obs(29, rng), 3), Error);
    EXPECT_THROW(em_fit(random_obs(50, rng), 0), Error);
    auto y = random_obs(50, rng);
    y[10] = INFINITY;
    EXPECT_THROW(em_fit(y, 2), Error);
}

TEST(InformationCriteria, Examples) {
    EXPECT_EQ(parameter_count(2), 7u);
    EXPECT_EQ(parameter_count(3), 14u);
    EXPECT_EQ(aic(-8975, 7), 17964.0);
    EXPECT_NEAR(aic(-8632, 14), 17293.0, 2.0);
    EXPECT_EQ(aic(0, 1), 2.0);
    EXPECT_NEAR(bic(0, 1, std::exp(1.0)), 1.0, 1e-15);
    EXPECT_NEAR(bic(-100, 2, 100), 209.2103, 1e-4);
}

TEST(SelectModel, LowestBicAndTies) {
    const std::size_t n_obs = 5000;
    auto ll_for = [&](double target, std::size_t n) {
        return (static_cast<double>(parameter_count(n)) * std::log(static_cast<double>(n_obs)) - target) / 2.0;
    };
    const std::vector<EmReport> one{report_with(2, -100.0)};
    EXPECT_EQ(select_model(one, n_obs).chosen, 0u);

    const std::vector<EmReport> two{report_with(2, ll_for(18010, 2)), report_with(3, ll_for(17385, 3))};
    const auto sel = select_model(two, n_obs);
    EXPECT_EQ(sel.chosen, 1u);
    EXPECT_NEAR(sel.table[0].bic, 18010, 1e-9);
    EXPECT_EQ(sel.table[1].k, 14u);

    // One observation makes the penalty k ln 1 = 0, so equal likelihoods tie exactly.
    const std::vector<EmReport> tied{report_with(3, -250.0), report_with(2, -250.0)};
    const auto t = select_model(tied, 1);
    EXPECT_EQ(t.table[0].bic, t.table[1].bic);
    EXPECT_EQ(tied[t.chosen].fitted.n_states(), 2u);
    EXPECT_THROW(select_model(std::vector<EmReport>{}, n_obs), Error);
}
