#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lizero/mdp.hpp"
#include "test_helpers.hpp"

using namespace lizero;
using test_helpers::brute_force_q;
using test_helpers::make_mdp;
using test_helpers::random_mdp;

TEST_CASE("validate_mdp accepts a well-formed 2-state MDP") {
    auto mdp = make_mdp(2, 1, 0.9, 1.0, {0.5, 1.0}, {0.0, 1.0, 1.0, 0.0});
    CHECK(validate_mdp(mdp).empty());
}

TEST_CASE("validate_mdp flags a row summing to 0.9") {
    auto mdp = make_mdp(2, 1, 0.9, 1.0, {0.5, 1.0}, {0.0, 0.9, 1.0, 0.0});
    auto report = validate_mdp(mdp);
    REQUIRE(report.size() == 1);
    CHECK(report[0].state == 0);
    CHECK(report[0].action == 0);
    CHECK(report[0].message.find("sum") != std::string::npos);
}

TEST_CASE("validate_mdp flags a reward above r_max") {
    auto mdp = make_mdp(2, 1, 0.9, 1.0, {1.1, 1.0}, {0.0, 1.0, 1.0, 0.0});
    auto report = validate_mdp(mdp);
    REQUIRE(report.size() == 1);
    CHECK(report[0].state == 0);
    CHECK(report[0].message.find("reward") != std::string::npos);
}

TEST_CASE("value_iteration solves the single self-loop state exactly") {
    auto mdp = make_mdp(1, 1, 0.9, 1.0, {1.0}, {1.0});
    auto q = value_iteration(mdp, 1e-9);
    CHECK(q.at(0, 0) == doctest::Approx(10.0).epsilon(1e-8));
}

TEST_CASE("value_iteration solves the 2-state deterministic chain") {
    // s0 -> s1 with reward 0, s1 -> s1 with reward 1, gamma = 0.5
    auto mdp = make_mdp(2, 1, 0.5, 1.0, {0.0, 1.0}, {0.0, 1.0, 0.0, 1.0});
    auto q = value_iteration(mdp, 1e-10);
    // fixed point by hand: Q(s1) = 1/(1-0.5) = 2, Q(s0) = 0 + 0.5*2 = 1
    CHECK(q.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(q.at(1, 0) == doctest::Approx(2.0).epsilon(1e-9));
    // cross-check against the brute-force sweep oracle
    auto oracle = brute_force_q(mdp, 1000);
    CHECK(std::abs(q.at(0, 0) - oracle[0]) < 1e-9);
    CHECK(std::abs(q.at(1, 0) - oracle[1]) < 1e-9);
}

TEST_CASE("value_iteration returns all zeros for a zero-reward MDP") {
    Rng rng(7);
    auto mdp = random_mdp(4, 2, 0.8, 1.0, rng);
    std::fill(mdp.rewards.begin(), mdp.rewards.end(), 0.0);
    auto q = value_iteration(mdp, 1e-8);
    for (double v : q.values) CHECK(v == 0.0);
}

TEST_CASE("value_iteration rejects an invalid MDP") {
    auto mdp = make_mdp(2, 1, 0.9, 1.0, {0.5, 1.0}, {0.0, 0.5, 1.0, 0.0});
    CHECK_THROWS_AS(value_iteration(mdp, 1e-6), InvalidInput);
}

TEST_CASE("value iteration is monotone in rewards on random 5-state MDPs") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto mdp = random_mdp(5, 3, 0.85, 1.0, rng);
        auto q = value_iteration(mdp, 1e-8);
        auto bumped = mdp;
        const int idx = static_cast<int>(rng.next_below(15));
        bumped.rewards[idx] = std::min(bumped.rewards[idx] + 0.3, bumped.r_max);
        auto q2 = value_iteration(bumped, 1e-8);
        for (std::size_t i = 0; i < q.values.size(); ++i)
            CHECK(q2.values[i] >= q.values[i] - 1e-7);
    }
}

TEST_CASE("Q* never exceeds r_max/(1-gamma)") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        auto mdp = random_mdp(6, 2, 0.9, 2.0, rng);
        auto q = value_iteration(mdp, 1e-8);
        for (double v : q.values) CHECK(v <= mdp.cap() + 1e-6);
    }
}

TEST_CASE("sample_step follows a one-hot row deterministically") {
    auto mdp = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.2}, {0.0, 1.0, 1.0, 0.0});
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        auto [next, reward] = sample_step(mdp, 0, 0, rng);
        CHECK(next == 1);
        CHECK(reward == 0.5);
    }
}

TEST_CASE("sample_step empirical frequency matches a (0.5, 0.5) row") {
    auto mdp = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.2}, {0.5, 0.5, 1.0, 0.0});
    Rng rng(12345);
    int count0 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        auto [next, reward] = sample_step(mdp, 0, 0, rng);
        if (next == 0) ++count0;
    }
    const double freq = static_cast<double>(count0) / n;
    CHECK(freq > 0.48);
    CHECK(freq < 0.52);
}

TEST_CASE("sample_step is identical across fresh generators with the same seed") {
    Rng rng_a(99), rng_b(99);
    Rng mk(5);
    auto mdp = random_mdp(6, 3, 0.9, 1.0, mk);
    for (int i = 0; i < 200; ++i) {
        const int s = static_cast<int>(mk.next_below(6));
        const int a = static_cast<int>(mk.next_below(3));
        CHECK(sample_step(mdp, s, a, rng_a) == sample_step(mdp, s, a, rng_b));
    }
}

TEST_CASE("sample_step rejects out-of-range ids") {
    auto mdp = make_mdp(2, 1, 0.9, 1.0, {0.5, 0.2}, {0.5, 0.5, 1.0, 0.0});
    Rng rng(1);
    CHECK_THROWS_AS(sample_step(mdp, 2, 0, rng), InvalidInput);
    CHECK_THROWS_AS(sample_step(mdp, 0, 1, rng), InvalidInput);
}

TEST_CASE("sampled next-state distribution converges at the 1/sqrt(n) rate") {
    Rng mk(17);
    auto mdp = random_mdp(5, 1, 0.9, 1.0, mk);
    Rng rng(31);
    auto row = mdp.row(0, 0);
    for (const int n : {1000, 16000}) {
        std::vector<int> counts(5, 0);
        for (int i = 0; i < n; ++i) counts[sample_step(mdp, 0, 0, rng).first]++;
        double tv = 0.0;
        for (int t = 0; t < 5; ++t)
            tv += std::abs(static_cast<double>(counts[t]) / n - row[t]);
        tv /= 2.0;
        // comfortably inside c/sqrt(n) for a small c at this seed
        CHECK(tv < 2.5 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("TransitionSupport draws match dense sample_step draws") {
    Rng mk(41);
    auto mdp = random_mdp(7, 2, 0.9, 1.0, mk);
    // zero out some entries and renormalize to get genuinely sparse rows
    for (int s = 0; s < 7; ++s) {
        for (int a = 0; a < 2; ++a) {
            auto row = mdp.row_mut(s, a);
            double sum = 0.0;
            for (int t = 0; t < 7; ++t) {
                if ((s + a + t) % 3 == 0) row[t] = 0.0;
                sum += row[t];
            }
            for (int t = 0; t < 7; ++t) row[t] /= sum;
        }
    }
    TransitionSupport support(mdp);
    Rng rng_a(7), rng_b(7);
    for (int i = 0; i < 500; ++i) {
        const int s = i % 7;
        const int a = i % 2;
        CHECK(support.sample(s, a, rng_a) == sample_step(mdp, s, a, rng_b).first);
    }
}

TEST_CASE("MDP serialization round-trips exactly") {
    Rng mk(53);
    auto mdp = random_mdp(4, 2, 0.93, 1.5, mk);
    const auto path = std::filesystem::temp_directory_path() / "lizero_mdp_roundtrip.json";
    save_mdp(mdp, path.string());
    auto loaded = load_mdp(path.string());
    CHECK(loaded.n_states == mdp.n_states);
    CHECK(loaded.n_actions == mdp.n_actions);
    CHECK(loaded.gamma == mdp.gamma);
    CHECK(loaded.r_max == mdp.r_max);
    CHECK(loaded.rewards == mdp.rewards);
    CHECK(loaded.transitions == mdp.transitions);
    std::filesystem::remove(path);
}
