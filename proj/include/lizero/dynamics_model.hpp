#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "lizero/mdp.hpp"
#include "lizero/rng.hpp"

namespace lizero {

/// Tabular-logit dynamics model: per (state, action) a next-state logit
/// vector (softmaxed into a simplex) and a scalar reward parameter.
/// flat_view order is state-major, then action, then the |S| logits
/// followed by the reward entry, giving |S||A|(|S|+1) values in total.
struct DynModelParams {
    int n_states = 0;
    int n_actions = 0;
    /// logits[(s*n_actions + a)*n_states + s']
    std::vector<double> next_state_logits;
    /// reward_params[s*n_actions + a]
    std::vector<double> reward_params;

    std::span<const double> logits_row(int state, int action) const {
        return {next_state_logits.data() +
                    static_cast<std::size_t>(state * n_actions + action) * n_states,
                static_cast<std::size_t>(n_states)};
    }

    bool same_shape(const DynModelParams& other) const {
        return n_states == other.n_states && n_actions == other.n_actions;
    }

    std::size_t flat_size() const {
        return static_cast<std::size_t>(n_states) * n_actions * (n_states + 1);
    }

    /// Canonical flattening used for parameter-space norms.
    std::vector<double> flat_view() const {
        std::vector<double> flat;
        flat.reserve(flat_size());
        for (int s = 0; s < n_states; ++s) {
            for (int a = 0; a < n_actions; ++a) {
                auto row = logits_row(s, a);
                flat.insert(flat.end(), row.begin(), row.end());
                flat.push_back(reward_params[s * n_actions + a]);
            }
        }
        return flat;
    }

    /// Softmax of the logit row: the model's next-state distribution.
    std::vector<double> predicted_row(int state, int action) const {
        auto row = logits_row(state, action);
        double hi = row[0];
        for (double v : row) hi = std::max(hi, v);
        std::vector<double> p(row.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            p[i] = std::exp(row[i] - hi);
            sum += p[i];
        }
        for (double& v : p) v /= sum;
        return p;
    }
};

/// Deterministic fitting recipe. Gradients are per-(s,a) means, so the
/// learning rate is insensitive to sample counts.
struct FitSpec {
    int n_states = 0;
    int n_actions = 0;
    int steps = 500;
    double learning_rate = 1.0;
    double init_noise = 0.0; // std-dev-ish scale of seeded init jitter
    std::uint64_t seed = 0;
};

/// Fits the tabular-logit model by full-batch gradient descent on the
/// mean categorical negative log-likelihood of observed next states plus
/// the mean squared reward error. (s,a) pairs with no samples keep their
/// initialization. Deterministic under (samples order, spec, seed).
inline DynModelParams fit_model(std::span<const Transition> samples, const FitSpec& spec) {
    require(!samples.empty(), "fit_model: empty sample list");
    require(spec.n_states > 0 && spec.n_actions > 0, "fit_model: spec must carry the space shape");

    const int n_sa = spec.n_states * spec.n_actions;
    DynModelParams params;
    params.n_states = spec.n_states;
    params.n_actions = spec.n_actions;
    params.next_state_logits.assign(static_cast<std::size_t>(n_sa) * spec.n_states, 0.0);
    params.reward_params.assign(n_sa, 0.0);
    if (spec.init_noise > 0.0) {
        Rng rng(spec.seed);
        for (double& v : params.next_state_logits)
            v = spec.init_noise * (2.0 * rng.next_double() - 1.0);
        for (double& v : params.reward_params)
            v = spec.init_noise * (2.0 * rng.next_double() - 1.0);
    }

    // empirical next-state frequencies and mean rewards per (s,a)
    std::vector<double> counts(n_sa, 0.0);
    std::vector<double> freq(static_cast<std::size_t>(n_sa) * spec.n_states, 0.0);
    std::vector<double> mean_reward(n_sa, 0.0);
    for (const auto& t : samples) {
        require(t.state >= 0 && t.state < spec.n_states && t.action >= 0 &&
                    t.action < spec.n_actions && t.next_state >= 0 && t.next_state < spec.n_states,
                "fit_model: sample ids out of range");
        const int sa = t.state * spec.n_actions + t.action;
        counts[sa] += 1.0;
        freq[static_cast<std::size_t>(sa) * spec.n_states + t.next_state] += 1.0;
        mean_reward[sa] += t.reward;
    }
    std::vector<int> visited;
    for (int sa = 0; sa < n_sa; ++sa) {
        if (counts[sa] == 0.0) continue;
        visited.push_back(sa);
        mean_reward[sa] /= counts[sa];
        for (int t = 0; t < spec.n_states; ++t)
            freq[static_cast<std::size_t>(sa) * spec.n_states + t] /= counts[sa];
    }

    std::vector<double> prob(spec.n_states);
    for (int step = 0; step < spec.steps; ++step) {
        for (int sa : visited) {
            double* logits = params.next_state_logits.data() +
                             static_cast<std::size_t>(sa) * spec.n_states;
            double hi = logits[0];
            for (int t = 1; t < spec.n_states; ++t) hi = std::max(hi, logits[t]);
            double sum = 0.0;
            for (int t = 0; t < spec.n_states; ++t) {
                prob[t] = std::exp(logits[t] - hi);
                sum += prob[t];
            }
            const double* f = freq.data() + static_cast<std::size_t>(sa) * spec.n_states;
            for (int t = 0; t < spec.n_states; ++t)
                logits[t] -= spec.learning_rate * (prob[t] / sum - f[t]);
            params.reward_params[sa] -=
                spec.learning_rate * 2.0 * (params.reward_params[sa] - mean_reward[sa]);
        }
    }
    return params;
}

/// Parameter-space distance rho: Euclidean norm of the flat_view gap.
inline double param_distance(const DynModelParams& a, const DynModelParams& b) {
    require(a.same_shape(b), "param_distance: shape mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.next_state_logits.size(); ++i) {
        const double d = a.next_state_logits[i] - b.next_state_logits[i];
        sum += d * d;
    }
    for (std::size_t i = 0; i < a.reward_params.size(); ++i) {
        const double d = a.reward_params[i] - b.reward_params[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

/// Empirical network Lipschitz constant over probe points.
struct LipschitzEstimate {
    double l_net = 0.0;
    std::int64_t probe_count = 0;
};

/// l_net = 1.1 * max over (pair, probe) of L1-gap(predicted rows) / rho.
/// Pairs with rho = 0 are rejected, as the ratio is undefined.
inline LipschitzEstimate estimate_lipschitz_refs(
    std::span<const std::pair<const DynModelParams*, const DynModelParams*>> pairs,
    std::span<const std::pair<int, int>> probes) {
    require(!pairs.empty() && !probes.empty(), "estimate_lipschitz: need pairs and probes");
    double worst = 0.0;
    std::int64_t count = 0;
    for (const auto& [a, b] : pairs) {
        require(a->same_shape(*b), "estimate_lipschitz: shape mismatch within a pair");
        const double rho = param_distance(*a, *b);
        require(rho > 0.0, "estimate_lipschitz: zero-rho pair");
        for (const auto& [state, action] : probes) {
            const auto pa = a->predicted_row(state, action);
            const auto pb = b->predicted_row(state, action);
            double gap = 0.0;
            for (std::size_t i = 0; i < pa.size(); ++i) gap += std::abs(pa[i] - pb[i]);
            worst = std::max(worst, gap / rho);
            ++count;
        }
    }
    return {1.1 * worst, count};
}

inline LipschitzEstimate estimate_lipschitz(
    std::span<const std::pair<DynModelParams, DynModelParams>> pairs,
    std::span<const std::pair<int, int>> probes) {
    std::vector<std::pair<const DynModelParams*, const DynModelParams*>> refs;
    refs.reserve(pairs.size());
    for (const auto& [a, b] : pairs) refs.emplace_back(&a, &b);
    return estimate_lipschitz_refs(refs, probes);
}

/// Model-based distance surrogate: d <= (1 + kappa) * l_net * rho.
inline double parametric_bound(double rho, double l_net, double kappa_value) {
    require(rho >= 0.0 && l_net >= 0.0 && kappa_value >= 0.0,
            "parametric_bound: inputs must be nonnegative");
    return (1.0 + kappa_value) * l_net * rho;
}

// --- fixture serialization (shape header + flat array) ------------------

inline void save_model(const DynModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_model: cannot open " + path);
    out << params.n_states << ' ' << params.n_actions << '\n';
    for (double v : params.flat_view()) out << format_double(v) << '\n';
}

inline DynModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_model: cannot open " + path);
    DynModelParams params;
    in >> params.n_states >> params.n_actions;
    require(params.n_states > 0 && params.n_actions > 0, "load_model: bad shape header");
    params.next_state_logits.resize(static_cast<std::size_t>(params.n_states) *
                                    params.n_actions * params.n_states);
    params.reward_params.resize(static_cast<std::size_t>(params.n_states) * params.n_actions);
    for (int s = 0; s < params.n_states; ++s) {
        for (int a = 0; a < params.n_actions; ++a) {
            const int sa = s * params.n_actions + a;
            for (int t = 0; t < params.n_states; ++t)
                in >> params.next_state_logits[static_cast<std::size_t>(sa) * params.n_states + t];
            in >> params.reward_params[sa];
        }
    }
    require(in.good() || in.eof(), "load_model: truncated file");
    return params;
}

} // namespace lizero
