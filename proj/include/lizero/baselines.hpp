#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lizero/knowledge.hpp"
#include "lizero/mdp.hpp"

namespace lizero {

/// Per-prior transferred upper bounds for LRMax planning:
/// U_i(s,a) = Q_i(s,a) + L * d_i, combined by min with the value cap.
struct LRMaxBounds {
    double r_max = 1.0;
    double gamma = 0.9;
    std::vector<QTable> prior_q;
    std::vector<double> prior_distance;
};

inline double lrmax_combined_bound(const LRMaxBounds& bounds, int state, int action) {
    double best = value_cap(bounds.r_max, bounds.gamma);
    const double l = lipschitz_l(bounds.gamma);
    for (std::size_t i = 0; i < bounds.prior_q.size(); ++i) {
        const double u = bounds.prior_q[i].at(state, action) + l * bounds.prior_distance[i];
        best = std::min(best, u);
    }
    return best;
}

struct RMaxConfig {
    int m_known = 5;
    double vi_tolerance = 1e-4;
};

/// Optimistic model-based tabular agent. Unknown pairs (fewer than
/// m_known visits) are valued at the cap (or the LRMax transferred bound
/// when priors are attached); known pairs use the empirical model. The
/// plan is refreshed by warm-started value iteration whenever a pair
/// becomes known.
class RMaxAgent {
public:
    RMaxAgent(int n_states, int n_actions, double gamma, double r_max, RMaxConfig cfg,
              LRMaxBounds bounds = {})
        : n_states_(n_states),
          n_actions_(n_actions),
          gamma_(gamma),
          r_max_(r_max),
          cfg_(cfg),
          bounds_(std::move(bounds)) {
        const std::size_t n_sa = static_cast<std::size_t>(n_states) * n_actions;
        counts_.assign(n_sa, 0);
        reward_sums_.assign(n_sa, 0.0);
        next_counts_.assign(n_sa, {});
        q_.n_states = n_states;
        q_.n_actions = n_actions;
        q_.gamma = gamma;
        q_.values.assign(n_sa, 0.0);
        bounds_.r_max = r_max;
        bounds_.gamma = gamma;
        replan();
    }

    /// Greedy action under the current optimistic plan, ties by lowest id.
    int act(int state) const { return q_.greedy(state); }

    void observe(int state, int action, double reward, int next_state) {
        const std::size_t sa = static_cast<std::size_t>(state) * n_actions_ + action;
        if (counts_[sa] >= cfg_.m_known) return; // model for this pair is frozen
        counts_[sa] += 1;
        reward_sums_[sa] += reward;
        auto& dests = next_counts_[sa];
        bool found = false;
        for (auto& [dest, c] : dests) {
            if (dest == next_state) {
                c += 1;
                found = true;
                break;
            }
        }
        if (!found) dests.emplace_back(next_state, 1);
        if (counts_[sa] == cfg_.m_known) replan();
    }

    bool known(int state, int action) const {
        return counts_[static_cast<std::size_t>(state) * n_actions_ + action] >= cfg_.m_known;
    }

    const QTable& plan() const { return q_; }

    double optimistic_value(int state, int action) const {
        return lrmax_combined_bound(bounds_, state, action);
    }

    /// Value iteration over the empirical-model-with-optimism MDP, warm
    /// started from the previous plan.
    void replan() {
        const double stop = cfg_.vi_tolerance * (1.0 - gamma_);
        std::vector<double> v(n_states_, 0.0);
        for (int sweep = 0; sweep < 100000; ++sweep) {
            for (int s = 0; s < n_states_; ++s) v[s] = q_.state_value(s);
            double gap = 0.0;
            for (int s = 0; s < n_states_; ++s) {
                for (int a = 0; a < n_actions_; ++a) {
                    const std::size_t sa = static_cast<std::size_t>(s) * n_actions_ + a;
                    double val;
                    if (counts_[sa] >= cfg_.m_known) {
                        const double total = static_cast<double>(counts_[sa]);
                        double ev = 0.0;
                        for (const auto& [dest, c] : next_counts_[sa])
                            ev += static_cast<double>(c) / total * v[dest];
                        val = reward_sums_[sa] / total + gamma_ * ev;
                    } else {
                        val = optimistic_value(s, a);
                    }
                    gap = std::max(gap, std::abs(val - q_.values[sa]));
                    q_.values[sa] = val;
                }
            }
            if (gap <= stop) break;
        }
    }

private:
    int n_states_;
    int n_actions_;
    double gamma_;
    double r_max_;
    RMaxConfig cfg_;
    LRMaxBounds bounds_;
    std::vector<int> counts_;
    std::vector<double> reward_sums_;
    std::vector<std::vector<std::pair<int, int>>> next_counts_;
    QTable q_;
};

} // namespace lizero
