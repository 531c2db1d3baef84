#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "lizero/knowledge.hpp"
#include "lizero/mdp.hpp"
#include "lizero/rng.hpp"

namespace lizero {

enum class SelectionRule { uct, puct, auct_combined };
enum class RolloutPolicy { uniform_random };

struct MctsConfig {
    double exploration_c = 1.0;
    int simulations_per_move = 32;
    int rollout_depth = 25;
    /// Selection descends at most this many edges per simulation before
    /// falling back to a rollout; 0 means use rollout_depth.
    int max_tree_depth = 0;
    /// Expansion stops once the tree holds this many nodes; simulations
    /// keep running through the existing tree.
    std::int64_t max_tree_nodes = 1000000;
    RolloutPolicy rollout_policy = RolloutPolicy::uniform_random;
    SelectionRule selection = SelectionRule::uct;
    std::uint64_t seed = 0;

    int tree_depth_limit() const { return max_tree_depth > 0 ? max_tree_depth : rollout_depth; }
};

/// Tree node: its state plus per-action visit counts N(s,a), total
/// credited returns W(s,a) and an optional child. N(s) = sum_a N(s,a).
struct SearchNode {
    struct Edge {
        std::int64_t count = 0;       // N(s,a)
        double total_return = 0.0;    // W(s,a)
        int child = -1;               // node index, -1 when unexpanded
    };

    int state = 0;
    std::int64_t visit_total = 0;     // N(s)
    std::vector<Edge> edges;

    explicit SearchNode(int state_, int n_actions) : state(state_), edges(n_actions) {}

    double q(int action) const {
        const auto& e = edges[action];
        return e.count > 0 ? e.total_return / static_cast<double>(e.count) : 0.0;
    }
};

/// Score of one action under the configured selection rule. Unvisited
/// actions take the optimistic initial value (the cap); in combined mode
/// the score is the minimum of the UCT score and the transfer bound.
inline double action_score(const SearchNode& node, int action, const MctsConfig& cfg,
                           double cap, double auct_bound_value) {
    const auto& e = node.edges[action];
    double score;
    switch (cfg.selection) {
        case SelectionRule::puct: {
            const double q = e.count > 0 ? e.total_return / static_cast<double>(e.count) : cap;
            const double prior = 1.0 / static_cast<double>(node.edges.size());
            score = q + cfg.exploration_c * prior *
                            std::sqrt(static_cast<double>(node.visit_total)) /
                            (1.0 + static_cast<double>(e.count));
            break;
        }
        case SelectionRule::uct:
        case SelectionRule::auct_combined: {
            if (e.count == 0) {
                score = cap;
            } else {
                score = e.total_return / static_cast<double>(e.count) +
                        cfg.exploration_c *
                            std::sqrt(std::log(static_cast<double>(node.visit_total)) /
                                      static_cast<double>(e.count));
            }
            break;
        }
        default: score = cap; break;
    }
    if (cfg.selection == SelectionRule::auct_combined)
        score = std::min(score, auct_bound_value);
    return score;
}

/// Argmax of action_score with a per-action bound row (combined mode);
/// ties break by lowest action id.
inline int select_action_from_bounds(const SearchNode& node, const MctsConfig& cfg, double cap,
                                     std::span<const double> auct_row) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < static_cast<int>(node.edges.size()); ++a) {
        const double bound = auct_row.empty() ? std::numeric_limits<double>::infinity()
                                              : auct_row[a];
        const double score = action_score(node, a, cfg, cap, bound);
        if (score > best_score) {
            best_score = score;
            best = a;
        }
    }
    return best;
}

/// Selection step querying the knowledge base directly. Combined mode
/// requires a knowledge base.
inline int select_action(const SearchNode& node, const MctsConfig& cfg, double cap,
                         const KnowledgeBase* kb) {
    if (cfg.selection != SelectionRule::auct_combined)
        return select_action_from_bounds(node, cfg, cap, {});
    require(kb != nullptr, "select_action: combined selection needs a knowledge base");
    std::vector<double> row(node.edges.size());
    for (int a = 0; a < static_cast<int>(node.edges.size()); ++a)
        row[a] = kb->auct_bound(node.state, a);
    return select_action_from_bounds(node, cfg, cap, row);
}

/// One (node, action) step of a simulation with the reward it produced.
struct PathEntry {
    int node = -1;
    int action = 0;
    double reward = 0.0;
};

/// Dense accumulator for every (s, a, s', r) sample a search process
/// draws from its generative model (selection steps and rollout steps
/// alike) plus any real environment steps. The per-pair counts are the
/// sample counts behind the task's final Q estimates.
class SearchExperience {
public:
    SearchExperience(int n_states, int n_actions)
        : n_states_(n_states),
          n_actions_(n_actions),
          counts_(static_cast<std::size_t>(n_states) * n_actions, 0),
          reward_sums_(counts_.size(), 0.0),
          next_counts_(counts_.size()) {}

    void record(int state, int action, int next_state, double reward) {
        const std::size_t sa = static_cast<std::size_t>(state) * n_actions_ + action;
        counts_[sa] += 1;
        reward_sums_[sa] += reward;
        auto& dests = next_counts_[sa];
        for (auto& [dest, c] : dests) {
            if (dest == next_state) {
                c += 1;
                return;
            }
        }
        dests.emplace_back(next_state, 1);
    }

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    const std::vector<std::int64_t>& counts() const { return counts_; }
    std::int64_t count(int state, int action) const {
        return counts_[static_cast<std::size_t>(state) * n_actions_ + action];
    }

    /// Certainty-equivalent Q estimate: value iteration over the
    /// empirical model. Pairs with fewer than min_count samples count as
    /// unknown and are held at the optimistic cap, so a search that never
    /// found anything leaves optimism in place instead of a confidently
    /// wrong low value.
    QTable solve(double gamma, double r_max, double tolerance = 1e-6,
                 std::int64_t min_count = 1) const {
        QTable q;
        q.n_states = n_states_;
        q.n_actions = n_actions_;
        q.gamma = gamma;
        const double cap = value_cap(r_max, gamma);
        q.values.assign(counts_.size(), cap);
        std::vector<double> v(n_states_, 0.0);
        const double stop = tolerance * (1.0 - gamma);
        for (int sweep = 0; sweep < 1000000; ++sweep) {
            for (int s = 0; s < n_states_; ++s) v[s] = q.state_value(s);
            double gap = 0.0;
            for (std::size_t sa = 0; sa < counts_.size(); ++sa) {
                if (counts_[sa] < min_count) continue;
                const double total = static_cast<double>(counts_[sa]);
                double ev = 0.0;
                for (const auto& [dest, c] : next_counts_[sa])
                    ev += static_cast<double>(c) / total * v[dest];
                const double val = reward_sums_[sa] / total + gamma * ev;
                gap = std::max(gap, std::abs(val - q.values[sa]));
                q.values[sa] = val;
            }
            if (gap <= stop) break;
        }
        return q;
    }

private:
    int n_states_;
    int n_actions_;
    std::vector<std::int64_t> counts_;
    std::vector<double> reward_sums_;
    std::vector<std::vector<std::pair<int, std::int64_t>>> next_counts_;
};

/// Per-action root statistics after a search.
struct RootStats {
    std::vector<std::int64_t> counts;
    std::vector<double> q;
    int chosen = 0;
};

struct SimulationResult {
    std::vector<PathEntry> path;
    double rollout_return = 0.0; // discounted from the expanded node
    int leaf_state = -1;
};

/// Search tree over a simulator MDP. One tree is owned by one worker; the
/// knowledge base (frozen during a task) is only read, through a bound
/// table cached at attach time.
class SearchTree {
public:
    SearchTree(const TabularMdp* env, const MctsConfig& cfg, const KnowledgeBase* kb = nullptr) {
        attach(env, cfg, kb);
        root_ = create_node(0);
    }

    SearchTree(const TabularMdp* env, const MctsConfig& cfg, int root_state,
               const KnowledgeBase* kb = nullptr) {
        attach(env, cfg, kb);
        root_ = create_node(root_state);
    }

    /// Re-targets the tree to a new simulator (and bound table) while
    /// keeping every node's statistics. Spaces must match.
    void attach(const TabularMdp* env, const MctsConfig& cfg, const KnowledgeBase* kb = nullptr) {
        require(env != nullptr, "SearchTree: null environment");
        require_valid(*env);
        require(nodes_.empty() || env->n_actions == n_actions_,
                "SearchTree::attach: action space changed");
        env_ = env;
        cfg_ = cfg;
        n_actions_ = env->n_actions;
        cap_ = env->cap();
        support_.emplace(*env);
        auct_.clear();
        if (cfg_.selection == SelectionRule::auct_combined) {
            require(kb != nullptr, "SearchTree: combined selection needs a knowledge base");
            auct_ = kb->bound_table(env->n_states, env->n_actions);
        }
    }

    /// Every subsequent model sample (selection and rollout steps) is
    /// also recorded into the sink.
    void set_experience_sink(SearchExperience* sink) { sink_ = sink; }

    int root() const { return root_; }
    const SearchNode& node(int idx) const { return nodes_[idx]; }
    SearchNode& node_mut(int idx) { return nodes_[idx]; }
    std::int64_t node_count() const { return static_cast<std::int64_t>(nodes_.size()); }
    const TabularMdp& env() const { return *env_; }
    const MctsConfig& config() const { return cfg_; }

    int create_node(int state) {
        nodes_.emplace_back(state, n_actions_);
        return static_cast<int>(nodes_.size()) - 1;
    }

    /// One selection/expansion/rollout/backpropagation pass from `from`.
    SimulationResult run_simulation(int from, Rng& rng) {
        SimulationResult result;
        int current = from;
        const int depth_limit = cfg_.tree_depth_limit();
        int leaf_state = -1;

        for (int depth = 0;; ++depth) {
            SearchNode& n = nodes_[current];
            const int action = select_node_action(n);
            const auto [next_state, reward] = sample(n.state, action, rng);
            result.path.push_back({current, action, reward});
            SearchNode::Edge& edge = nodes_[current].edges[action];
            if (edge.child < 0) {
                if (node_count() < cfg_.max_tree_nodes) {
                    const int child = create_node(next_state);
                    nodes_[current].edges[action].child = child;
                }
                leaf_state = next_state;
                break;
            }
            if (nodes_[edge.child].state != next_state || depth + 1 >= depth_limit) {
                // a slipped transition left the stored subtree, or the
                // depth limit was reached; estimate the rest by rollout
                leaf_state = next_state;
                break;
            }
            current = edge.child;
        }

        result.leaf_state = leaf_state;
        result.rollout_return = rollout(leaf_state, rng);
        const double deepest = result.path.back().reward + env_->gamma * result.rollout_return;
        backpropagate(result.path, deepest);
        return result;
    }

    /// Credits the deepest pair with g and each ancestor with its own
    /// step reward plus the discounted return below it, updating the
    /// running means N(s,a), W(s,a), N(s).
    void backpropagate(std::span<const PathEntry> path, double g) {
        require(!path.empty(), "backpropagate: empty path");
        double credit = g;
        for (int i = static_cast<int>(path.size()) - 1; i >= 0; --i) {
            if (i + 1 < static_cast<int>(path.size()))
                credit = path[i].reward + env_->gamma * credit;
            SearchNode& n = nodes_[path[i].node];
            n.visit_total += 1;
            auto& edge = n.edges[path[i].action];
            edge.count += 1;
            edge.total_return += credit;
        }
    }

    /// Runs simulations_per_move simulations from `from` and returns the
    /// root statistics; the chosen action maximizes the visit count with
    /// ties broken by lowest action id.
    RootStats run_move(int from, Rng& rng) {
        for (int i = 0; i < cfg_.simulations_per_move; ++i) run_simulation(from, rng);
        return root_stats(from);
    }

    RootStats root_stats(int at) const {
        const SearchNode& n = nodes_[at];
        RootStats stats;
        stats.counts.reserve(n_actions_);
        stats.q.reserve(n_actions_);
        for (int a = 0; a < n_actions_; ++a) {
            stats.counts.push_back(n.edges[a].count);
            stats.q.push_back(n.q(a));
        }
        stats.chosen = 0;
        for (int a = 1; a < n_actions_; ++a)
            if (stats.counts[a] > stats.counts[stats.chosen]) stats.chosen = a;
        return stats;
    }

    /// Moves the cursor down the taken action. The subtree is retained;
    /// if the environment slipped to a state the edge's child does not
    /// hold, a fresh unlinked node continues the episode.
    int advance(int from, int action, int next_state) {
        const auto& edge = nodes_[from].edges[action];
        if (edge.child >= 0 && nodes_[edge.child].state == next_state) return edge.child;
        return create_node(next_state);
    }

    double auct_bound_at(int state, int action) const {
        if (auct_.empty()) return cap_;
        return auct_[static_cast<std::size_t>(state) * n_actions_ + action];
    }

    /// Raw tabular totals of all tree statistics: per-(s,a) visit counts
    /// and summed credited returns over every node with that state.
    struct Totals {
        std::vector<std::int64_t> counts;
        std::vector<double> returns;
    };

    Totals aggregate_raw() const {
        Totals t;
        t.counts.assign(static_cast<std::size_t>(env_->n_states) * n_actions_, 0);
        t.returns.assign(t.counts.size(), 0.0);
        for (const auto& n : nodes_) {
            for (int a = 0; a < n_actions_; ++a) {
                const auto& e = n.edges[a];
                if (e.count == 0) continue;
                const std::size_t idx = static_cast<std::size_t>(n.state) * n_actions_ + a;
                t.counts[idx] += e.count;
                t.returns[idx] += e.total_return;
            }
        }
        return t;
    }

    /// Tabular aggregate of tree statistics: Q(s,a) = sum W / sum N over
    /// every node with that state. When a baseline snapshot is given, only
    /// the statistics accumulated after it are counted, so the estimates
    /// reflect the converged phase of the search rather than its whole
    /// history.
    std::pair<QTable, std::vector<std::int64_t>> aggregate_statistics(
        const Totals* since = nullptr) const {
        QTable q;
        q.n_states = env_->n_states;
        q.n_actions = n_actions_;
        q.gamma = env_->gamma;
        q.values.assign(static_cast<std::size_t>(env_->n_states) * n_actions_, 0.0);
        Totals t = aggregate_raw();
        if (since) {
            for (std::size_t i = 0; i < t.counts.size(); ++i) {
                t.counts[i] -= since->counts[i];
                t.returns[i] -= since->returns[i];
            }
        }
        for (std::size_t i = 0; i < t.counts.size(); ++i)
            if (t.counts[i] > 0) q.values[i] = t.returns[i] / static_cast<double>(t.counts[i]);
        return {std::move(q), std::move(t.counts)};
    }

    /// Checks N(s) = sum_a N(s,a) and the Q cap on the given nodes (all
    /// nodes when empty). Returns the first violating node or -1.
    int check_accounting(std::span<const int> subset = {}) const {
        auto bad = [&](const SearchNode& n) {
            std::int64_t total = 0;
            for (const auto& e : n.edges) {
                total += e.count;
                if (e.count > 0 &&
                    e.total_return / static_cast<double>(e.count) > cap_ + 1e-9)
                    return true;
            }
            return total != n.visit_total;
        };
        if (subset.empty()) {
            for (std::size_t i = 0; i < nodes_.size(); ++i)
                if (bad(nodes_[i])) return static_cast<int>(i);
            return -1;
        }
        for (int i : subset)
            if (bad(nodes_[i])) return i;
        return -1;
    }

private:
    int select_node_action(const SearchNode& n) const {
        std::span<const double> row;
        if (!auct_.empty())
            row = {auct_.data() + static_cast<std::size_t>(n.state) * n_actions_,
                   static_cast<std::size_t>(n_actions_)};
        return select_action_from_bounds(n, cfg_, cap_, row);
    }

    std::pair<int, double> sample(int state, int action, Rng& rng) {
        const int next = support_->sample(state, action, rng);
        const double reward = env_->reward(state, action);
        if (sink_) sink_->record(state, action, next, reward);
        return {next, reward};
    }

    double rollout(int state, Rng& rng) {
        double total = 0.0;
        double discount = 1.0;
        int current = state;
        for (int t = 0; t < cfg_.rollout_depth; ++t) {
            const int action = static_cast<int>(rng.next_below(n_actions_));
            const auto [next, reward] = sample(current, action, rng);
            total += discount * reward;
            discount *= env_->gamma;
            current = next;
        }
        return total;
    }

    SearchExperience* sink_ = nullptr;
    const TabularMdp* env_ = nullptr;
    MctsConfig cfg_;
    int n_actions_ = 0;
    double cap_ = 0.0;
    int root_ = 0;
    std::deque<SearchNode> nodes_;
    std::vector<double> auct_;
    std::optional<TransitionSupport> support_;
};

/// Fresh-tree search from root_state: simulations_per_move simulations,
/// deterministic under config.seed.
inline RootStats run_search(const TabularMdp& env, int root_state, const MctsConfig& cfg,
                            const KnowledgeBase* kb = nullptr) {
    require(root_state >= 0 && root_state < env.n_states, "run_search: root state out of range");
    if (cfg.selection == SelectionRule::auct_combined)
        require(kb != nullptr, "run_search: combined selection needs a knowledge base");
    SearchTree tree(&env, cfg, root_state, kb);
    Rng rng(cfg.seed);
    return tree.run_move(tree.root(), rng);
}

} // namespace lizero
