#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lizero/common.hpp"
#include "lizero/rng.hpp"

namespace lizero {

/// Finite MDP with dense per-(state, action) reward and transition tables.
/// Instances are immutable after construction by convention; all planning
/// code takes them by const reference and may share them across workers.
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.0;
    double r_max = 0.0;
    /// rewards[s*n_actions + a]
    std::vector<double> rewards;
    /// transitions[(s*n_actions + a)*n_states + s'], each row a simplex
    std::vector<double> transitions;

    int sa_index(int state, int action) const { return state * n_actions + action; }

    double reward(int state, int action) const { return rewards[sa_index(state, action)]; }

    std::span<const double> row(int state, int action) const {
        return {transitions.data() + static_cast<std::size_t>(sa_index(state, action)) * n_states,
                static_cast<std::size_t>(n_states)};
    }

    std::span<double> row_mut(int state, int action) {
        return {transitions.data() + static_cast<std::size_t>(sa_index(state, action)) * n_states,
                static_cast<std::size_t>(n_states)};
    }

    bool same_space(const TabularMdp& other) const {
        return n_states == other.n_states && n_actions == other.n_actions;
    }

    double cap() const { return value_cap(r_max, gamma); }
};

/// Q-value table over the same (state, action) grid as its source MDP.
struct QTable {
    std::vector<double> values; // values[s*n_actions + a]
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.0;

    double at(int state, int action) const { return values[state * n_actions + action]; }
    double& at(int state, int action) { return values[state * n_actions + action]; }

    /// Greedy action, ties broken by lowest action id.
    int greedy(int state) const {
        int best = 0;
        for (int a = 1; a < n_actions; ++a)
            if (at(state, a) > at(state, best)) best = a;
        return best;
    }

    double state_value(int state) const { return at(state, greedy(state)); }
};

/// One environment interaction, the sample record consumed by the
/// estimators and the dynamics-model fitter.
struct Transition {
    int state = 0;
    int action = 0;
    int next_state = 0;
    double reward = 0.0;
};

struct Violation {
    int state = -1;  // -1 when the violation is not tied to a pair
    int action = -1;
    std::string message;
};

constexpr double kRowSumTolerance = 1e-9;

/// Checks every structural invariant and returns one entry per violation;
/// an empty report means the MDP is well-formed.
inline std::vector<Violation> validate_mdp(const TabularMdp& mdp) {
    std::vector<Violation> report;
    if (mdp.n_states <= 0) report.push_back({-1, -1, "n_states must be positive"});
    if (mdp.n_actions <= 0) report.push_back({-1, -1, "n_actions must be positive"});
    if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0))
        report.push_back({-1, -1, "gamma must lie strictly inside (0,1)"});
    if (!(mdp.r_max > 0.0)) report.push_back({-1, -1, "r_max must be positive"});
    if (!report.empty()) return report;

    const std::size_t n_sa = static_cast<std::size_t>(mdp.n_states) * mdp.n_actions;
    if (mdp.rewards.size() != n_sa) {
        report.push_back({-1, -1, "rewards table has wrong size"});
        return report;
    }
    if (mdp.transitions.size() != n_sa * mdp.n_states) {
        report.push_back({-1, -1, "transition table has wrong size"});
        return report;
    }

    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double r = mdp.reward(s, a);
            if (!(r >= 0.0 && r <= mdp.r_max))
                report.push_back({s, a, "reward outside [0, r_max]"});
            double sum = 0.0;
            bool negative = false;
            for (double p : mdp.row(s, a)) {
                if (p < 0.0) negative = true;
                sum += p;
            }
            if (negative) report.push_back({s, a, "negative transition probability"});
            if (std::abs(sum - 1.0) > kRowSumTolerance)
                report.push_back({s, a, "transition row does not sum to 1"});
        }
    }
    return report;
}

inline void require_valid(const TabularMdp& mdp) {
    auto report = validate_mdp(mdp);
    if (!report.empty()) throw InvalidInput("invalid MDP: " + report.front().message);
}

/// Exact Q* solver by value iteration. Stops when the successive-iterate
/// sup-norm gap drops to tolerance*(1-gamma), which bounds the sup-norm
/// error of the returned table by tolerance.
inline QTable value_iteration(const TabularMdp& mdp, double tolerance,
                              const QTable* warm_start = nullptr,
                              int max_iterations = 1000000) {
    require_valid(mdp);
    require(tolerance > 0.0, "value_iteration: tolerance must be positive");

    QTable q;
    q.n_states = mdp.n_states;
    q.n_actions = mdp.n_actions;
    q.gamma = mdp.gamma;
    if (warm_start && warm_start->n_states == mdp.n_states &&
        warm_start->n_actions == mdp.n_actions) {
        q.values = warm_start->values;
    } else {
        q.values.assign(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
    }

    std::vector<double> v(mdp.n_states, 0.0);
    std::vector<double> next(q.values.size(), 0.0);
    const double stop = tolerance * (1.0 - mdp.gamma);

    for (int it = 0; it < max_iterations; ++it) {
        for (int s = 0; s < mdp.n_states; ++s) {
            double best = q.at(s, 0);
            for (int a = 1; a < mdp.n_actions; ++a) best = std::max(best, q.at(s, a));
            v[s] = best;
        }
        double gap = 0.0;
        for (int s = 0; s < mdp.n_states; ++s) {
            for (int a = 0; a < mdp.n_actions; ++a) {
                double ev = 0.0;
                auto row = mdp.row(s, a);
                for (int t = 0; t < mdp.n_states; ++t) ev += row[t] * v[t];
                const double val = mdp.reward(s, a) + mdp.gamma * ev;
                next[mdp.sa_index(s, a)] = val;
                gap = std::max(gap, std::abs(val - q.values[mdp.sa_index(s, a)]));
            }
        }
        q.values.swap(next);
        if (gap <= stop) break;
    }
    return q;
}

/// Draws one environment step. Identical seeds give identical draws; the
/// reward is the table entry for (state, action).
inline std::pair<int, double> sample_step(const TabularMdp& mdp, int state, int action, Rng& rng) {
    require(state >= 0 && state < mdp.n_states, "sample_step: state out of range");
    require(action >= 0 && action < mdp.n_actions, "sample_step: action out of range");
    const int next = rng.next_categorical(mdp.row(state, action));
    return {next, mdp.reward(state, action)};
}

/// Nonzero transition entries per (state, action), for O(1) draws on
/// sparse rows. Draws walk the same running-sum thresholds as the dense
/// categorical walk in sample_step, so both produce identical results
/// from identical generator states.
class TransitionSupport {
public:
    explicit TransitionSupport(const TabularMdp& mdp) : mdp_(&mdp) {
        entries_.resize(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions);
        for (int s = 0; s < mdp.n_states; ++s) {
            for (int a = 0; a < mdp.n_actions; ++a) {
                auto row = mdp.row(s, a);
                auto& e = entries_[static_cast<std::size_t>(s) * mdp.n_actions + a];
                for (int t = 0; t < mdp.n_states; ++t)
                    if (row[t] > 0.0) e.emplace_back(t, row[t]);
            }
        }
    }

    int sample(int state, int action, Rng& rng) const {
        const auto& e = entries_[static_cast<std::size_t>(state) * mdp_->n_actions + action];
        const double u = rng.next_double();
        double cum = 0.0;
        for (const auto& [idx, p] : e) {
            cum += p;
            if (u < cum) return idx;
        }
        return e.back().first;
    }

private:
    const TabularMdp* mdp_;
    std::vector<std::vector<std::pair<int, double>>> entries_;
};

/// Exact expected undiscounted return of the policy `act` over `horizon`
/// steps from `start`, by propagating the state distribution. Used as the
/// per-epoch optimal reference when `act` is greedy on Q*.
template <typename PolicyFn>
double expected_episode_return(const TabularMdp& mdp, PolicyFn&& act, int start, int horizon) {
    require(start >= 0 && start < mdp.n_states, "expected_episode_return: start out of range");
    std::vector<double> dist(mdp.n_states, 0.0);
    std::vector<double> nextd(mdp.n_states, 0.0);
    dist[start] = 1.0;
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
        std::fill(nextd.begin(), nextd.end(), 0.0);
        for (int s = 0; s < mdp.n_states; ++s) {
            const double p = dist[s];
            if (p <= 0.0) continue;
            const int a = act(s);
            total += p * mdp.reward(s, a);
            auto row = mdp.row(s, a);
            for (int u = 0; u < mdp.n_states; ++u)
                if (row[u] > 0.0) nextd[u] += p * row[u];
        }
        dist.swap(nextd);
    }
    return total;
}

// --- serialization -----------------------------------------------------

inline nlohmann::json to_json(const TabularMdp& mdp) {
    return nlohmann::json{{"n_states", mdp.n_states},   {"n_actions", mdp.n_actions},
                          {"gamma", mdp.gamma},         {"r_max", mdp.r_max},
                          {"rewards", mdp.rewards},     {"transitions", mdp.transitions}};
}

inline TabularMdp mdp_from_json(const nlohmann::json& j) {
    TabularMdp mdp;
    mdp.n_states = j.at("n_states").get<int>();
    mdp.n_actions = j.at("n_actions").get<int>();
    mdp.gamma = j.at("gamma").get<double>();
    mdp.r_max = j.at("r_max").get<double>();
    mdp.rewards = j.at("rewards").get<std::vector<double>>();
    mdp.transitions = j.at("transitions").get<std::vector<double>>();
    return mdp;
}

inline void save_mdp(const TabularMdp& mdp, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_mdp: cannot open " + path);
    out << to_json(mdp).dump(2) << "\n";
}

inline TabularMdp load_mdp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_mdp: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return mdp_from_json(j);
}

} // namespace lizero
