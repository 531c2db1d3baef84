#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lizero/mdp.hpp"
#include "lizero/rng.hpp"

namespace lizero {

/// Generator parameters for the "tight"-task grid-world family: square
/// grid, four goal cells (three in the top-right corner patch, one in the
/// bottom-left corner), per-task goal/interference rewards and slip
/// probability drawn from the configured intervals.
struct TightTaskConfig {
    int grid_side = 25;
    double goal_reward_lo = 0.9;
    double goal_reward_hi = 1.0;
    double interference_lo = 0.0;
    double interference_hi = 0.1;
    double slip_lo = 0.0;
    double slip_hi = 0.1;
    double gamma = 0.95;
    std::uint64_t seed = 1;

    int n_states() const { return grid_side * grid_side; }
    static constexpr int n_actions = 4; // up, down, left, right

    /// Center start cell under row-major indexing.
    int start_state() const { return grid_side * (grid_side / 2) + grid_side / 2; }

    /// Global reward bound shared by every task in the family.
    double r_max() const { return std::max(goal_reward_hi, interference_hi); }

    void validate() const {
        require(grid_side >= 3 && grid_side % 2 == 1,
                "TightTaskConfig: grid_side must be odd and >= 3");
        require(goal_reward_lo <= goal_reward_hi && goal_reward_lo >= 0.0 && goal_reward_hi <= 1.0,
                "TightTaskConfig: goal reward interval must be well-ordered within [0,1]");
        require(interference_lo <= interference_hi && interference_lo >= 0.0 &&
                    interference_hi <= 1.0,
                "TightTaskConfig: interference interval must be well-ordered within [0,1]");
        require(slip_lo <= slip_hi && slip_lo >= 0.0 && slip_hi <= 1.0,
                "TightTaskConfig: slip interval must be well-ordered within [0,1]");
        require(gamma > 0.0 && gamma < 1.0, "TightTaskConfig: gamma must lie in (0,1)");
    }
};

/// Goal cells: the top-right corner cell plus its left and lower
/// neighbors, and the bottom-left corner cell.
inline std::array<int, 4> goal_cells(int side) {
    const int top_right = side - 1;
    return {top_right, top_right - 1, top_right + side, side * (side - 1)};
}

namespace detail {

inline int grid_move(int side, int state, int action) {
    int row = state / side;
    int col = state % side;
    switch (action) {
        case 0: row = std::max(row - 1, 0); break;         // up
        case 1: row = std::min(row + 1, side - 1); break;  // down
        case 2: col = std::max(col - 1, 0); break;         // left
        case 3: col = std::min(col + 1, side - 1); break;  // right
        default: break;
    }
    return row * side + col;
}

} // namespace detail

/// Builds one tight-task MDP, deterministic under (config, task_seed).
///
/// Each action reaches its intended neighbor with probability 1 - p_slip
/// and executes one of the other three actions uniformly otherwise; moves
/// off-grid stay in place; goal cells are absorbing with their reward
/// collected on every step spent there. The (s,a) reward is the expected
/// reward of the cell entered.
inline TabularMdp generate_task(const TightTaskConfig& cfg, std::uint64_t task_seed) {
    cfg.validate();
    Rng rng(task_seed);

    const int side = cfg.grid_side;
    const int n = cfg.n_states();
    const auto goals = goal_cells(side);
    auto is_goal = [&](int s) {
        return s == goals[0] || s == goals[1] || s == goals[2] || s == goals[3];
    };

    std::vector<double> cell_reward(n);
    for (int s = 0; s < n; ++s)
        cell_reward[s] = is_goal(s) ? rng.next_in(cfg.goal_reward_lo, cfg.goal_reward_hi)
                                    : rng.next_in(cfg.interference_lo, cfg.interference_hi);
    const double p_slip = rng.next_in(cfg.slip_lo, cfg.slip_hi);

    TabularMdp mdp;
    mdp.n_states = n;
    mdp.n_actions = TightTaskConfig::n_actions;
    mdp.gamma = cfg.gamma;
    mdp.r_max = cfg.r_max();
    mdp.rewards.assign(static_cast<std::size_t>(n) * mdp.n_actions, 0.0);
    mdp.transitions.assign(static_cast<std::size_t>(n) * mdp.n_actions * n, 0.0);

    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            auto row = mdp.row_mut(s, a);
            if (is_goal(s)) {
                row[s] = 1.0;
            } else {
                row[detail::grid_move(side, s, a)] += 1.0 - p_slip;
                for (int b = 0; b < mdp.n_actions; ++b)
                    if (b != a) row[detail::grid_move(side, s, b)] += p_slip / 3.0;
                double sum = 0.0;
                for (double& p : row) sum += p;
                for (double& p : row) p /= sum;
            }
            double expected = 0.0;
            for (int t = 0; t < n; ++t)
                if (row[t] > 0.0) expected += row[t] * cell_reward[t];
            mdp.rewards[mdp.sa_index(s, a)] = expected;
        }
    }
    return mdp;
}

/// Ordered non-stationary task sequence over a shared state/action space.
struct TaskSequence {
    TightTaskConfig config;
    std::vector<std::uint64_t> seeds;
    std::vector<TabularMdp> tasks;
};

inline TaskSequence generate_sequence(const TightTaskConfig& cfg, int n_tasks) {
    cfg.validate();
    require(n_tasks >= 1, "generate_sequence: need at least one task");
    TaskSequence seq;
    seq.config = cfg;
    seq.seeds.reserve(n_tasks);
    seq.tasks.reserve(n_tasks);
    for (int i = 0; i < n_tasks; ++i) {
        const std::uint64_t task_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i));
        seq.seeds.push_back(task_seed);
        seq.tasks.push_back(generate_task(cfg, task_seed));
    }
    return seq;
}

} // namespace lizero
