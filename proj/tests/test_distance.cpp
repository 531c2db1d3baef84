#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lizero/distance.hpp"
#include "test_helpers.hpp"

using namespace lizero;
using test_helpers::make_mdp;
using test_helpers::random_mdp;

namespace {

/// Enumeration oracle used to freeze expected values: averages the
/// hand-computed per-pair gaps directly.
double enumerate_distance(const TabularMdp& a, const TabularMdp& b) {
    double sum = 0.0;
    const double k = kappa(a.r_max, a.gamma);
    for (int s = 0; s < a.n_states; ++s) {
        for (int act = 0; act < a.n_actions; ++act) {
            double dp = 0.0;
            for (int t = 0; t < a.n_states; ++t)
                dp += std::abs(a.row(s, act)[t] - b.row(s, act)[t]);
            sum += std::abs(a.reward(s, act) - b.reward(s, act)) + k * dp;
        }
    }
    return sum / (a.n_states * a.n_actions);
}

} // namespace

TEST_CASE("pair_delta is zero between identical MDPs") {
    Rng rng(2);
    auto m = random_mdp(3, 2, 0.9, 1.0, rng);
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) CHECK(pair_delta(m, m, s, a) == 0.0);
}

TEST_CASE("pair_delta sees a pure reward gap") {
    auto a = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.2}, {1.0, 0.0, 0.0, 1.0});
    auto b = make_mdp(2, 1, 0.9, 1.0, {1.0, 0.2}, {1.0, 0.0, 0.0, 1.0});
    CHECK(pair_delta(a, b, 0, 0) == doctest::Approx(0.5));
    CHECK(pair_delta(a, b, 1, 0) == 0.0);
}

TEST_CASE("pair_delta weights a disjoint row swap by kappa") {
    auto a = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.2}, {1.0, 0.0, 0.0, 1.0});
    auto b = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.2}, {0.0, 1.0, 0.0, 1.0});
    // kappa = 0.9/0.1 = 9, L1 gap = 2
    CHECK(pair_delta(a, b, 0, 0) == doctest::Approx(18.0));
}

TEST_CASE("pair_delta uniform_next mode divides the row gap by |S|") {
    auto a = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.2}, {1.0, 0.0, 0.0, 1.0});
    auto b = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.2}, {0.0, 1.0, 0.0, 1.0});
    CHECK(pair_delta(a, b, 0, 0, TransitionGapMode::uniform_next) == doctest::Approx(9.0));
}

TEST_CASE("pair_delta rejects mismatched spaces") {
    auto a = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.2}, {1.0, 0.0, 0.0, 1.0});
    auto b = make_mdp(1, 1, 0.9, 1.0, {0.5}, {1.0});
    CHECK_THROWS_AS(pair_delta(a, b, 0, 0), InvalidInput);
}

TEST_CASE("exact_distance on the hand-enumerated 2-state 1-action pair") {
    // dR = (0.2, 0.4); L1 gaps (0, 1); kappa = 9  ->  (0.2 + 0.4 + 9)/2
    auto a = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.6}, {1.0, 0.0, 0.0, 1.0});
    auto b = make_mdp(2, 1, 0.9, 1.0, {0.7, 0.2}, {1.0, 0.0, 0.5, 0.5});
    const auto est = exact_distance(a, b);
    CHECK(est.value == doctest::Approx(4.8));
    CHECK(est.method == DistanceMethod::exact);
    CHECK(est.n_samples == 0);
    CHECK(est.value == doctest::Approx(enumerate_distance(a, b)));
}

TEST_CASE("exact_distance pseudometric axioms on random triples") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = random_mdp(4, 2, 0.9, 1.0, rng);
        auto y = random_mdp(4, 2, 0.9, 1.0, rng);
        auto z = random_mdp(4, 2, 0.9, 1.0, rng);
        CHECK(exact_distance(x, x).value <= 1e-12);
        CHECK(exact_distance(x, y).value == exact_distance(y, x).value);
        CHECK(exact_distance(x, z).value <=
              exact_distance(x, y).value + exact_distance(y, z).value + 1e-9);
    }
}

TEST_CASE("estimate_stationary basics") {
    std::vector<WeightedSample> zero{{0, 0, 0.5, 0.25, 0.0}, {1, 0, 0.5, 0.25, 0.0}};
    CHECK(estimate_stationary(zero).value == 0.0);

    // uniform policy: all weights are 1, so the estimate is the plain mean
    std::vector<WeightedSample> uniform{{0, 0, 0.25, 0.25, 1.0},
                                        {1, 0, 0.25, 0.25, 2.0},
                                        {0, 1, 0.25, 0.25, 3.0}};
    CHECK(estimate_stationary(uniform).value == doctest::Approx(2.0));
    CHECK(estimate_stationary(uniform).method == DistanceMethod::stationary_is);

    CHECK_THROWS_AS(estimate_stationary({}), InvalidInput);
}

TEST_CASE("estimate_adaptive reduces to estimate_stationary on a constant-policy stream") {
    Rng rng(8);
    std::vector<WeightedSample> stream;
    for (int i = 0; i < 100; ++i)
        stream.push_back({static_cast<int>(rng.next_below(4)), 0, 0.125, 0.25,
                          rng.next_double()});
    CHECK(estimate_adaptive(stream).value == doctest::Approx(estimate_stationary(stream).value));
    CHECK(estimate_adaptive(stream).method == DistanceMethod::adaptive_is);

    std::vector<WeightedSample> zero{{0, 0, 0.5, 0.25, 0.0}};
    CHECK(estimate_adaptive(zero).value == 0.0);

    std::vector<WeightedSample> broken{{0, 0, 0.0, 0.25, 1.0}};
    CHECK_THROWS_AS(estimate_adaptive(broken), InvalidInput);
    CHECK_THROWS_AS(estimate_adaptive({}), InvalidInput);
}

TEST_CASE("required_samples matches the closed forms") {
    CHECK(required_samples(0.1, 0.05, 1.0, 1.0, 1.0, SamplingMode::stationary) == 185);
    CHECK(required_samples(0.1, 0.05, 1.0, 1.0, 1.0, SamplingMode::adaptive) == 738);
    // delta -> 1 limit: ln(2/delta) -> ln 2
    CHECK(required_samples(0.1, 1.0 - 1e-12, 1.0, 1.0, 1.0, SamplingMode::stationary) == 35);
    CHECK_THROWS_AS(required_samples(0.1, 1.0, 1.0, 1.0, 1.0, SamplingMode::stationary),
                    InvalidInput);
    CHECK_THROWS_AS(required_samples(0.1, 0.0, 1.0, 1.0, 1.0, SamplingMode::stationary),
                    InvalidInput);
}

TEST_CASE("adaptive bound is exactly 4x the stationary bound before ceiling") {
    Rng rng(13);
    for (int trial = 0; trial < 25; ++trial) {
        const double eps = rng.next_in(0.01, 0.5);
        const double delta = rng.next_in(0.01, 0.5);
        const double b = rng.next_in(0.1, 5.0);
        const double alpha = rng.next_in(0.05, 1.0);
        const double stat =
            required_samples_real(eps, delta, b, 1.0, alpha, SamplingMode::stationary);
        const double adap =
            required_samples_real(eps, delta, b, 1.0, alpha, SamplingMode::adaptive);
        CHECK(adap == doctest::Approx(4.0 * stat).epsilon(1e-12));
    }
}

TEST_CASE("required_samples is monotone in each argument") {
    const double base =
        required_samples_real(0.1, 0.1, 1.0, 0.5, 0.25, SamplingMode::stationary);
    CHECK(required_samples_real(0.05, 0.1, 1.0, 0.5, 0.25, SamplingMode::stationary) >= base);
    CHECK(required_samples_real(0.1, 0.05, 1.0, 0.5, 0.25, SamplingMode::stationary) >= base);
    CHECK(required_samples_real(0.1, 0.1, 2.0, 0.5, 0.25, SamplingMode::stationary) >= base);
    CHECK(required_samples_real(0.1, 0.1, 1.0, 0.9, 0.25, SamplingMode::stationary) >= base);
    CHECK(required_samples_real(0.1, 0.1, 1.0, 0.5, 0.5, SamplingMode::stationary) <= base);
}

namespace {

struct FixturePair {
    TabularMdp a;
    TabularMdp b;
    double exact;
    double b_bound;
    double p_u;
};

FixturePair sampled_fixture() {
    Rng rng(404);
    FixturePair f;
    f.a = random_mdp(4, 2, 0.5, 1.0, rng);
    f.b = random_mdp(4, 2, 0.5, 1.0, rng);
    f.exact = exact_distance(f.a, f.b).value;
    f.b_bound = default_delta_bound(1.0, 0.5); // 1 + 2*kappa = 3
    f.p_u = 1.0 / 8.0;
    return f;
}

/// Draws one stationary trial with a mildly non-uniform fixed policy.
double stationary_trial(const FixturePair& f, std::int64_t n, Rng& rng) {
    // policy: half the mass uniform, half concentrated on pair 0
    std::vector<double> pi(8, 0.5 / 8.0);
    pi[0] += 0.5;
    std::vector<WeightedSample> samples;
    samples.reserve(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const int sa = rng.next_categorical(pi);
        WeightedSample w;
        w.state = sa / 2;
        w.action = sa % 2;
        w.policy_prob = pi[sa];
        w.p_uniform = f.p_u;
        w.delta_x = pair_delta(f.a, f.b, w.state, w.action);
        samples.push_back(w);
    }
    return estimate_stationary(samples).value;
}

} // namespace

TEST_CASE("stationary estimator meets its (epsilon, delta) certificate") {
    const auto f = sampled_fixture();
    const double eps = 0.05, delta = 0.1;
    const double alpha = 0.5 / 8.0;
    const std::int64_t n =
        required_samples(eps, delta, f.b_bound, f.p_u, alpha, SamplingMode::stationary);
    Rng rng(777);
    int failures = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t)
        if (std::abs(stationary_trial(f, n, rng) - f.exact) > eps) ++failures;
    CHECK(failures <= 0.10 * trials);
}

TEST_CASE("stationary estimator is unbiased across seeded resamples") {
    const auto f = sampled_fixture();
    Rng rng(888);
    const int trials = 10000;
    const std::int64_t n = 32;
    double mean = 0.0, m2 = 0.0;
    for (int t = 1; t <= trials; ++t) {
        const double v = stationary_trial(f, n, rng);
        const double delta = v - mean;
        mean += delta / t;
        m2 += delta * (v - mean);
    }
    const double se = std::sqrt(m2 / (trials - 1) / trials);
    CHECK(std::abs(mean - f.exact) <= 3.0 * se);
}

TEST_CASE("adaptive estimator meets its certificate on an alternating-policy stream") {
    const auto f = sampled_fixture();
    const double eps = 0.05, delta = 0.1;
    // two policies alternate per step; both keep coverage 0.1/8 per pair
    std::vector<std::vector<double>> policies(2, std::vector<double>(8, 0.1 / 8.0));
    for (int i = 0; i < 8; ++i) {
        policies[0][i] += (i < 4) ? 0.9 / 4.0 : 0.0;
        policies[1][i] += (i >= 4) ? 0.9 / 4.0 : 0.0;
    }
    const double alpha = 0.1 / 8.0;
    const std::int64_t n =
        required_samples(eps, delta, f.b_bound, f.p_u, alpha, SamplingMode::adaptive);
    Rng rng(999);
    int failures = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        std::vector<WeightedSample> stream;
        stream.reserve(n);
        for (std::int64_t k = 0; k < n; ++k) {
            const auto& pi = policies[k % 2];
            const int sa = rng.next_categorical(pi);
            stream.push_back({sa / 2, sa % 2, pi[sa], f.p_u,
                              pair_delta(f.a, f.b, sa / 2, sa % 2)});
        }
        if (std::abs(estimate_adaptive(stream).value - f.exact) > eps) ++failures;
    }
    CHECK(failures <= 0.10 * trials);
}

TEST_CASE("weighted terms respect the (p_u_max/alpha) * b bound") {
    const auto f = sampled_fixture();
    double b_max = 0.0;
    for (int s = 0; s < 4; ++s)
        for (int a = 0; a < 2; ++a) b_max = std::max(b_max, pair_delta(f.a, f.b, s, a));
    const double alpha = 0.5 / 8.0;
    Rng rng(31);
    std::vector<double> pi(8, 0.5 / 8.0);
    pi[0] += 0.5;
    for (int i = 0; i < 2000; ++i) {
        const int sa = rng.next_categorical(pi);
        WeightedSample w{sa / 2, sa % 2, pi[sa], f.p_u, pair_delta(f.a, f.b, sa / 2, sa % 2)};
        CHECK(w.weight() * w.delta_x <= (f.p_u / alpha) * b_max + 1e-12);
    }
}

TEST_CASE("sample logs replay to the same estimate") {
    const auto f = sampled_fixture();
    Rng rng(606);
    std::vector<WeightedSample> samples;
    for (int i = 0; i < 64; ++i) {
        const int sa = static_cast<int>(rng.next_below(8));
        samples.push_back({sa / 2, sa % 2, f.p_u, f.p_u, pair_delta(f.a, f.b, sa / 2, sa % 2)});
    }
    const auto path = std::filesystem::temp_directory_path() / "lizero_samples.csv";
    save_sample_log(samples, path.string());
    const auto loaded = load_sample_log(path.string());
    REQUIRE(loaded.size() == samples.size());
    CHECK(estimate_stationary(loaded).value ==
          doctest::Approx(estimate_stationary(samples).value));
    std::filesystem::remove(path);
}
