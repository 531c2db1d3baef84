#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lizero/mdp.hpp"

namespace lizero {

enum class DistanceMethod { exact, stationary_is, adaptive_is, parametric };

inline const char* to_string(DistanceMethod m) {
    switch (m) {
        case DistanceMethod::exact: return "exact";
        case DistanceMethod::stationary_is: return "stationary_is";
        case DistanceMethod::adaptive_is: return "adaptive_is";
        case DistanceMethod::parametric: return "parametric";
    }
    return "?";
}

/// A task-distance value together with how it was obtained and, for the
/// sampling methods, its (epsilon, delta) certificate.
struct DistanceEstimate {
    double value = 0.0;
    DistanceMethod method = DistanceMethod::exact;
    std::int64_t n_samples = 0;
    std::optional<double> epsilon;
    std::optional<double> delta;
};

/// How the per-pair transition gap enters the distance. `l1_row` sums
/// |P - P'| over all next states (the total-variation flavored gap the
/// aUCT analysis rests on); `uniform_next` averages it over a uniformly
/// drawn next state instead.
enum class TransitionGapMode { l1_row, uniform_next };

/// Per-pair gap  DeltaX(s,a) = |R - R'|(s,a) + kappa * DeltaP(s,a)  with
/// kappa = r_max*gamma/(1-gamma).
inline double pair_delta(const TabularMdp& m, const TabularMdp& m_prime, int state, int action,
                         TransitionGapMode mode = TransitionGapMode::l1_row) {
    require(m.same_space(m_prime), "pair_delta: mismatched state/action spaces");
    require(m.gamma == m_prime.gamma && m.r_max == m_prime.r_max,
            "pair_delta: gamma and r_max must match");
    require(state >= 0 && state < m.n_states && action >= 0 && action < m.n_actions,
            "pair_delta: ids out of range");

    const double dr = std::abs(m.reward(state, action) - m_prime.reward(state, action));
    auto row_a = m.row(state, action);
    auto row_b = m_prime.row(state, action);
    double dp = 0.0;
    for (int t = 0; t < m.n_states; ++t) dp += std::abs(row_a[t] - row_b[t]);
    if (mode == TransitionGapMode::uniform_next) dp /= m.n_states;
    return dr + kappa(m.r_max, m.gamma) * dp;
}

/// Exact pseudometric: mean of pair_delta over all (s,a) under the
/// uniform sampling distribution.
inline DistanceEstimate exact_distance(const TabularMdp& m, const TabularMdp& m_prime,
                                       TransitionGapMode mode = TransitionGapMode::l1_row) {
    require(m.same_space(m_prime), "exact_distance: mismatched state/action spaces");
    double sum = 0.0;
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) sum += pair_delta(m, m_prime, s, a, mode);
    DistanceEstimate est;
    est.value = sum / (static_cast<double>(m.n_states) * m.n_actions);
    est.method = DistanceMethod::exact;
    est.n_samples = 0;
    return est;
}

/// One importance-sampled draw: a (state, action) pair, the probability
/// the sampling policy assigned to it, and its precomputed pair gap.
struct WeightedSample {
    int state = 0;
    int action = 0;
    double policy_prob = 0.0; // pi(s,a), must be >= coverage alpha > 0
    double p_uniform = 0.0;   // p_U(s,a), typically 1/(|S||A|)
    double delta_x = 0.0;     // pair_delta at (s,a)

    double weight() const { return p_uniform / policy_prob; }
};

namespace detail {

inline DistanceEstimate weighted_mean(std::span<const WeightedSample> samples,
                                      DistanceMethod method) {
    double sum = 0.0;
    for (const auto& w : samples) {
        require(w.policy_prob > 0.0, "distance estimate: policy coverage violated (pi = 0)");
        require(std::isfinite(w.weight()), "distance estimate: non-finite importance weight");
        sum += w.weight() * w.delta_x;
    }
    DistanceEstimate est;
    est.value = sum / static_cast<double>(samples.size());
    est.method = method;
    est.n_samples = static_cast<std::int64_t>(samples.size());
    return est;
}

} // namespace detail

/// d1: empirical mean of w_i * DeltaX_i over samples drawn from one fixed
/// coverage-alpha policy. Unbiased for the exact distance.
inline DistanceEstimate estimate_stationary(std::span<const WeightedSample> samples) {
    require(!samples.empty(), "estimate_stationary: empty sample list");
    return detail::weighted_mean(samples, DistanceMethod::stationary_is);
}

/// d2: running mean over an adaptively sampled stream where each sample's
/// weight was computed against the policy in force at its own step.
inline DistanceEstimate estimate_adaptive(std::span<const WeightedSample> stream) {
    require(!stream.empty(), "estimate_adaptive: empty sample stream");
    return detail::weighted_mean(stream, DistanceMethod::adaptive_is);
}

enum class SamplingMode { stationary, adaptive };

/// Real-valued sample-complexity bound before rounding. The adaptive
/// (Azuma-Hoeffding) bound is exactly 4x the stationary (Hoeffding) one.
inline double required_samples_real(double epsilon, double delta, double b, double p_u_max,
                                    double alpha, SamplingMode mode) {
    require(epsilon > 0.0, "required_samples: epsilon must be positive");
    require(delta > 0.0 && delta < 1.0, "required_samples: delta must lie in (0,1)");
    require(b > 0.0, "required_samples: b must be positive");
    require(alpha > 0.0 && alpha <= 1.0, "required_samples: alpha must lie in (0,1]");
    require(p_u_max > 0.0 && p_u_max <= 1.0, "required_samples: p_u_max must lie in (0,1]");
    const double ratio = p_u_max / alpha;
    const double base = b * b * ratio * ratio * std::log(2.0 / delta) / (epsilon * epsilon);
    return mode == SamplingMode::stationary ? 0.5 * base : 2.0 * base;
}

/// Smallest integer sample count satisfying the selected bound.
inline std::int64_t required_samples(double epsilon, double delta, double b, double p_u_max,
                                     double alpha, SamplingMode mode) {
    return static_cast<std::int64_t>(
        std::ceil(required_samples_real(epsilon, delta, b, p_u_max, alpha, mode)));
}

/// Worst-case bound on pair_delta for MDPs with rewards in [0, r_max]:
/// |dR| <= r_max and the L1 row gap is at most 2.
inline double default_delta_bound(double r_max, double gamma) {
    return r_max + 2.0 * kappa(r_max, gamma);
}

// --- sample-log serialization (flat records, replayable in tests) -------

inline void save_sample_log(std::span<const WeightedSample> samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_sample_log: cannot open " + path);
    out << "step,state,action,policy_prob,p_uniform,delta_x\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& w = samples[i];
        out << i << ',' << w.state << ',' << w.action << ',' << format_double(w.policy_prob)
            << ',' << format_double(w.p_uniform) << ',' << format_double(w.delta_x) << '\n';
    }
}

inline std::vector<WeightedSample> load_sample_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_sample_log: cannot open " + path);
    std::string line;
    std::getline(in, line); // header
    std::vector<WeightedSample> samples;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        WeightedSample w;
        std::size_t pos = 0;
        auto next_field = [&]() {
            const std::size_t comma = line.find(',', pos);
            std::string field = line.substr(pos, comma - pos);
            pos = comma == std::string::npos ? line.size() : comma + 1;
            return field;
        };
        next_field(); // step index, implied by order
        w.state = std::stoi(next_field());
        w.action = std::stoi(next_field());
        w.policy_prob = std::stod(next_field());
        w.p_uniform = std::stod(next_field());
        w.delta_x = std::stod(next_field());
        samples.push_back(w);
    }
    return samples;
}

} // namespace lizero
