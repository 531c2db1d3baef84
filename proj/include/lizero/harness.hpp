#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lizero/baselines.hpp"
#include "lizero/distance.hpp"
#include "lizero/dynamics_model.hpp"
#include "lizero/gridworld.hpp"
#include "lizero/knowledge.hpp"
#include "lizero/mcts.hpp"
#include "lizero/mdp.hpp"

namespace lizero {

enum class Algorithm { lizero_u, lizero_p, lizero_n, mcts_r, mcts_o, puct, rmax, lrmax };

inline const std::vector<std::pair<Algorithm, std::string>>& algorithm_tags() {
    static const std::vector<std::pair<Algorithm, std::string>> tags = {
        {Algorithm::lizero_u, "lizero_u"}, {Algorithm::lizero_p, "lizero_p"},
        {Algorithm::lizero_n, "lizero_n"}, {Algorithm::mcts_r, "mcts_r"},
        {Algorithm::mcts_o, "mcts_o"},     {Algorithm::puct, "puct"},
        {Algorithm::rmax, "rmax"},         {Algorithm::lrmax, "lrmax"}};
    return tags;
}

inline std::string to_string(Algorithm a) {
    for (const auto& [alg, tag] : algorithm_tags())
        if (alg == a) return tag;
    return "?";
}

inline Algorithm algorithm_from_string(const std::string& tag) {
    for (const auto& [alg, t] : algorithm_tags())
        if (t == tag) return alg;
    throw InvalidInput("unknown algorithm tag: " + tag);
}

inline bool is_lizero(Algorithm a) {
    return a == Algorithm::lizero_u || a == Algorithm::lizero_p || a == Algorithm::lizero_n;
}

inline bool is_mcts_family(Algorithm a) {
    return is_lizero(a) || a == Algorithm::mcts_r || a == Algorithm::mcts_o ||
           a == Algorithm::puct;
}

/// Dynamics-model fitting knobs used by the parametric distance variant.
struct ModelFitConfig {
    int samples_per_pair = 400;
    int steps = 400;
    double learning_rate = 1.0;
    int lipschitz_probes = 64;
};

/// Pairs with fewer search samples than this stay at the optimistic cap
/// in the finalized task knowledge.
constexpr std::int64_t kKnowledgeMinCount = 25;

struct ExperimentConfig {
    TightTaskConfig env;
    int n_tasks = 10;
    int epochs_per_task = 1000;
    int horizon = 40;
    std::vector<Algorithm> algorithms;
    MctsConfig mcts;
    double delta = 0.05;
    double distance_epsilon = 0.05;
    ModelFitConfig fit;
    RMaxConfig rmax;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "out";
    bool record_wall_time = false;
    int jobs = 1;

    void validate() const {
        env.validate();
        require(n_tasks >= 1, "ExperimentConfig: n_tasks must be positive");
        require(epochs_per_task >= 1, "ExperimentConfig: epochs_per_task must be positive");
        require(horizon >= 1, "ExperimentConfig: horizon must be positive");
        require(!algorithms.empty(), "ExperimentConfig: algorithm list must not be empty");
        require(!seeds.empty(), "ExperimentConfig: seed list must not be empty");
        require(delta > 0.0 && delta < 1.0, "ExperimentConfig: delta must lie in (0,1)");
        require(distance_epsilon > 0.0, "ExperimentConfig: distance_epsilon must be positive");
        require(jobs >= 1, "ExperimentConfig: jobs must be positive");
        require(mcts.simulations_per_move >= 1 && mcts.rollout_depth >= 1 &&
                    mcts.exploration_c > 0.0,
                "ExperimentConfig: bad mcts block");
    }
};

struct EpochRecord {
    Algorithm algorithm = Algorithm::mcts_r;
    std::uint64_t seed = 0;
    int task_index = 0;
    int epoch_index = 0;
    double episode_return = 0.0;
    double wall_ms = 0.0;
};

constexpr int kMovingAvgWindow = 20;
constexpr std::int64_t kNotReached = -1;
inline const std::vector<int>& reward_fractions() {
    static const std::vector<int> fractions = {60, 70, 80};
    return fractions;
}

struct TaskAlgoMetrics {
    double early_mean = 0.0;
    double early_std = 0.0;
    double full_mean = 0.0;
    /// median-across-seeds first epoch (1-indexed) whose trailing-window
    /// mean reaches the fraction of optimal; kNotReached when the median
    /// seed never crosses.
    std::map<int, std::int64_t> epochs_to_fraction;
};

struct AlgoMetrics {
    std::vector<TaskAlgoMetrics> tasks;
    double total_early = 0.0;
    /// pooled (seed, task) median over tasks after the first; sentinel
    /// epochs_per_task + 1 stands in for runs that never cross.
    std::map<int, std::int64_t> tail_median_epochs;
};

struct MetricsSummary {
    int n_tasks = 0;
    int epochs_per_task = 0;
    int horizon = 0;
    std::vector<double> optimal_per_task;
    std::map<std::string, AlgoMetrics> per_algorithm;
};

// --- internal helpers ----------------------------------------------------

namespace harness_detail {

enum StreamPurpose : std::uint64_t { kStreamSearch = 0, kStreamDistance = 1, kStreamFit = 2 };

inline std::uint64_t task_stream(std::uint64_t run_seed, int task, StreamPurpose purpose) {
    return mix_seed(run_seed, static_cast<std::uint64_t>(task) * 8 + purpose);
}

/// Upper bound on pair_delta within one tight-task family, from the
/// generator intervals: rewards can differ by at most the widest reward
/// span plus the reweighting effect of slip, and transition rows by at
/// most twice the slip span in L1.
inline double family_delta_bound(const TightTaskConfig& env) {
    const double reward_span =
        std::max(env.goal_reward_hi - env.goal_reward_lo, env.interference_hi - env.interference_lo);
    const double slip_span = env.slip_hi - env.slip_lo;
    const double dr = reward_span + slip_span * env.r_max();
    const double dp = 2.0 * slip_span;
    return dr + kappa(env.r_max(), env.gamma) * dp;
}

/// Non-stationary sampling stream over (s,a) pairs: a uniform/occupancy
/// mixture whose occupancy weight beta alternates in blocks, so weights
/// are genuinely recomputed against the policy in force at each step.
inline std::vector<WeightedSample> draw_distance_stream(
    const TabularMdp& current, const TabularMdp& prior,
    const std::vector<std::int64_t>& occupancy, std::int64_t n, Rng& rng) {
    const int n_states = current.n_states;
    const int n_actions = current.n_actions;
    const std::size_t n_sa = static_cast<std::size_t>(n_states) * n_actions;
    const double p_u = 1.0 / static_cast<double>(n_sa);

    // precompute the per-pair gaps once; the estimator still only sees
    // the sampled records
    std::vector<double> gaps(n_sa);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a)
            gaps[static_cast<std::size_t>(s) * n_actions + a] = pair_delta(current, prior, s, a);

    std::vector<double> occ_cdf(n_sa);
    double total = 0.0;
    for (std::size_t i = 0; i < n_sa; ++i) total += static_cast<double>(occupancy[i]);
    double cum = 0.0;
    for (std::size_t i = 0; i < n_sa; ++i) {
        cum += total > 0.0 ? static_cast<double>(occupancy[i]) / total : p_u;
        occ_cdf[i] = cum;
    }
    auto occ_prob = [&](std::size_t i) {
        return total > 0.0 ? static_cast<double>(occupancy[i]) / total : p_u;
    };

    std::vector<WeightedSample> stream;
    stream.reserve(n);
    for (std::int64_t k = 0; k < n; ++k) {
        const double beta = (k / 256) % 2 == 0 ? 0.3 : 0.7;
        std::size_t sa;
        if (rng.next_double() >= beta) {
            sa = rng.next_below(static_cast<std::uint32_t>(n_sa));
        } else {
            const double u = rng.next_double();
            sa = std::lower_bound(occ_cdf.begin(), occ_cdf.end(), u) - occ_cdf.begin();
            if (sa >= n_sa) sa = n_sa - 1;
        }
        WeightedSample w;
        w.state = static_cast<int>(sa) / n_actions;
        w.action = static_cast<int>(sa) % n_actions;
        w.policy_prob = (1.0 - beta) * p_u + beta * occ_prob(sa);
        w.p_uniform = p_u;
        w.delta_x = gaps[sa];
        stream.push_back(w);
    }
    return stream;
}

/// Fits a tabular dynamics model from seeded draws of the task's rows,
/// visiting every (s,a) the same number of times.
inline DynModelParams fit_task_model(const TabularMdp& env, const ModelFitConfig& cfg, Rng& rng) {
    TransitionSupport support(env);
    std::vector<Transition> samples;
    samples.reserve(static_cast<std::size_t>(env.n_states) * env.n_actions *
                    cfg.samples_per_pair);
    for (int rep = 0; rep < cfg.samples_per_pair; ++rep)
        for (int s = 0; s < env.n_states; ++s)
            for (int a = 0; a < env.n_actions; ++a)
                samples.push_back({s, a, support.sample(s, a, rng), env.reward(s, a)});
    FitSpec spec;
    spec.n_states = env.n_states;
    spec.n_actions = env.n_actions;
    spec.steps = cfg.steps;
    spec.learning_rate = cfg.learning_rate;
    return fit_model(samples, spec);
}

inline std::vector<std::pair<int, int>> strided_probes(int n_states, int n_actions, int count) {
    const std::int64_t n_sa = static_cast<std::int64_t>(n_states) * n_actions;
    const std::int64_t stride = std::max<std::int64_t>(1, n_sa / std::max(count, 1));
    std::vector<std::pair<int, int>> probes;
    for (std::int64_t i = 0; i < n_sa; i += stride)
        probes.emplace_back(static_cast<int>(i / n_actions), static_cast<int>(i % n_actions));
    return probes;
}

} // namespace harness_detail

/// Runs every (algorithm, seed) cell over the shared task sequence and
/// returns the merged record stream, sorted by (algorithm, seed, task,
/// epoch). Cells are independent and may run in parallel.
inline std::vector<EpochRecord> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    using harness_detail::task_stream;

    TightTaskConfig env_cfg = cfg.env;
    const TaskSequence seq = generate_sequence(env_cfg, cfg.n_tasks);
    const int start = env_cfg.start_state();
    const double r_max = env_cfg.r_max();
    const double gamma = env_cfg.gamma;
    const double kap = kappa(r_max, gamma);

    struct Cell {
        Algorithm algo;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (Algorithm a : cfg.algorithms)
        for (std::uint64_t s : cfg.seeds) cells.push_back({a, s});

    std::vector<std::vector<EpochRecord>> results(cells.size());

    auto run_mcts_cell = [&](const Cell& cell, std::vector<EpochRecord>& out) {
        MctsConfig mcfg = cfg.mcts;
        KnowledgeBase kb(r_max, gamma, cfg.delta);
        std::optional<SearchTree> tree;
        std::vector<std::int64_t> prev_visits;
        std::vector<DynModelParams> models;
        double l_net = 0.0;

        for (int j = 0; j < cfg.n_tasks; ++j) {
            const TabularMdp& env = seq.tasks[j];
            // with no sources there is no transfer bound to combine, so
            // the first task runs plain UCT (step-identical to MCTS-R)
            mcfg.selection = cell.algo == Algorithm::puct ? SelectionRule::puct
                             : is_lizero(cell.algo) && !kb.empty()
                                 ? SelectionRule::auct_combined
                                 : SelectionRule::uct;

            if (cell.algo == Algorithm::lizero_n) {
                Rng fit_rng(task_stream(cell.seed, j, harness_detail::kStreamFit));
                models.push_back(harness_detail::fit_task_model(env, cfg.fit, fit_rng));
                if (j >= 1) {
                    std::vector<std::pair<const DynModelParams*, const DynModelParams*>> pairs;
                    for (int i = 0; i + 1 <= j; ++i) pairs.emplace_back(&models[i], &models[i + 1]);
                    const auto probes = harness_detail::strided_probes(
                        env.n_states, env.n_actions, cfg.fit.lipschitz_probes);
                    l_net = estimate_lipschitz_refs(pairs, probes).l_net;
                }
            }

            if (is_lizero(cell.algo) && !kb.empty()) {
                Rng dist_rng(task_stream(cell.seed, j, harness_detail::kStreamDistance));
                for (std::size_t i = 0; i < kb.size(); ++i) {
                    DistanceEstimate est;
                    if (cell.algo == Algorithm::lizero_u) {
                        est = exact_distance(env, seq.tasks[i]);
                    } else if (cell.algo == Algorithm::lizero_p) {
                        const double b = harness_detail::family_delta_bound(env_cfg);
                        const double p_u =
                            1.0 / (static_cast<double>(env.n_states) * env.n_actions);
                        const double alpha = 0.3 * p_u; // worst-case mixture coverage
                        const std::int64_t n =
                            required_samples(cfg.distance_epsilon, cfg.delta, b, p_u, alpha,
                                             SamplingMode::adaptive);
                        auto stream = harness_detail::draw_distance_stream(
                            env, seq.tasks[i], prev_visits, n, dist_rng);
                        est = estimate_adaptive(stream);
                        est.epsilon = cfg.distance_epsilon;
                        est.delta = cfg.delta;
                    } else {
                        est.method = DistanceMethod::parametric;
                        est.value = parametric_bound(param_distance(models[j], models[i]),
                                                     l_net, kap);
                        est.n_samples = static_cast<std::int64_t>(cfg.fit.samples_per_pair) *
                                        env.n_states * env.n_actions;
                    }
                    kb.entries()[i].distance_to_current = est;
                }
            }

            const KnowledgeBase* kb_ptr =
                mcfg.selection == SelectionRule::auct_combined ? &kb : nullptr;
            if (cell.algo == Algorithm::mcts_o && tree) {
                tree->attach(&env, mcfg);
            } else {
                tree.emplace(&env, mcfg, start, kb_ptr);
            }

            SearchExperience experience(env.n_states, env.n_actions);
            if (is_lizero(cell.algo)) tree->set_experience_sink(&experience);

            Rng rng(task_stream(cell.seed, j, harness_detail::kStreamSearch));
            for (int e = 0; e < cfg.epochs_per_task; ++e) {
                const auto t0 = std::chrono::steady_clock::now();
                int cursor = tree->root();
                int state = start;
                double episode_return = 0.0;
                for (int step = 0; step < cfg.horizon; ++step) {
                    const RootStats stats = tree->run_move(cursor, rng);
                    const int action = stats.chosen;
                    const auto [next_state, reward] = sample_step(env, state, action, rng);
                    if (is_lizero(cell.algo))
                        experience.record(state, action, next_state, reward);
                    episode_return += reward;
                    cursor = tree->advance(cursor, action, next_state);
                    state = next_state;
                }
                EpochRecord rec{cell.algo, cell.seed, j, e, episode_return, 0.0};
                if (cfg.record_wall_time) {
                    const auto t1 = std::chrono::steady_clock::now();
                    rec.wall_ms =
                        std::chrono::duration<double, std::milli>(t1 - t0).count();
                }
                out.push_back(rec);
            }

            if (is_lizero(cell.algo)) {
                tree->set_experience_sink(nullptr);
                // final estimates: certainty-equivalent solve of everything
                // the search sampled; pairs it never touched keep N = 0 and
                // fall back to the cap inside the transfer bound
                QTable q = experience.solve(gamma, r_max, 1e-6, kKnowledgeMinCount);
                prev_visits = experience.counts();
                kb.add({std::move(q), experience.counts(), DistanceEstimate{}});
            }
        }
    };

    auto run_tabular_cell = [&](const Cell& cell, std::vector<EpochRecord>& out) {
        std::vector<QTable> prior_q;
        std::vector<int> prior_task;
        for (int j = 0; j < cfg.n_tasks; ++j) {
            const TabularMdp& env = seq.tasks[j];
            LRMaxBounds bounds;
            bounds.r_max = r_max;
            bounds.gamma = gamma;
            if (cell.algo == Algorithm::lrmax) {
                for (std::size_t i = 0; i < prior_q.size(); ++i) {
                    bounds.prior_q.push_back(prior_q[i]);
                    bounds.prior_distance.push_back(
                        exact_distance(env, seq.tasks[prior_task[i]]).value);
                }
            }
            RMaxAgent agent(env.n_states, env.n_actions, gamma, r_max, cfg.rmax,
                            std::move(bounds));
            Rng rng(task_stream(cell.seed, j, harness_detail::kStreamSearch));
            for (int e = 0; e < cfg.epochs_per_task; ++e) {
                const auto t0 = std::chrono::steady_clock::now();
                int state = start;
                double episode_return = 0.0;
                for (int step = 0; step < cfg.horizon; ++step) {
                    const int action = agent.act(state);
                    const auto [next_state, reward] = sample_step(env, state, action, rng);
                    agent.observe(state, action, reward, next_state);
                    episode_return += reward;
                    state = next_state;
                }
                EpochRecord rec{cell.algo, cell.seed, j, e, episode_return, 0.0};
                if (cfg.record_wall_time) {
                    const auto t1 = std::chrono::steady_clock::now();
                    rec.wall_ms =
                        std::chrono::duration<double, std::milli>(t1 - t0).count();
                }
                out.push_back(rec);
            }
            if (cell.algo == Algorithm::lrmax) {
                prior_q.push_back(agent.plan());
                prior_task.push_back(j);
            }
        }
    };

    std::atomic<std::size_t> next_cell{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next_cell.fetch_add(1);
            if (i >= cells.size()) return;
            if (is_mcts_family(cells[i].algo))
                run_mcts_cell(cells[i], results[i]);
            else
                run_tabular_cell(cells[i], results[i]);
        }
    };
    const int n_threads = std::min<int>(cfg.jobs, static_cast<int>(cells.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    std::vector<EpochRecord> merged;
    for (auto& r : results)
        merged.insert(merged.end(), r.begin(), r.end());
    std::sort(merged.begin(), merged.end(), [](const EpochRecord& a, const EpochRecord& b) {
        if (a.algorithm != b.algorithm) return a.algorithm < b.algorithm;
        if (a.seed != b.seed) return a.seed < b.seed;
        if (a.task_index != b.task_index) return a.task_index < b.task_index;
        return a.epoch_index < b.epoch_index;
    });
    return merged;
}

// --- metrics --------------------------------------------------------------

/// First 1-indexed epoch whose trailing kMovingAvgWindow mean reaches the
/// threshold; kNotReached when it never does.
inline std::int64_t first_crossing(std::span<const double> returns, double threshold) {
    if (static_cast<int>(returns.size()) < kMovingAvgWindow) return kNotReached;
    double window_sum = 0.0;
    for (int i = 0; i < kMovingAvgWindow; ++i) window_sum += returns[i];
    for (int e = kMovingAvgWindow - 1;; ++e) {
        if (window_sum / kMovingAvgWindow >= threshold) return e + 1;
        if (e + 1 >= static_cast<int>(returns.size())) return kNotReached;
        window_sum += returns[e + 1] - returns[e + 1 - kMovingAvgWindow];
    }
}

inline std::int64_t median_with_sentinel(std::vector<std::int64_t> values,
                                         std::int64_t sentinel) {
    for (auto& v : values)
        if (v == kNotReached) v = sentinel;
    std::sort(values.begin(), values.end());
    const std::int64_t med = values[(values.size() - 1) / 2];
    return med;
}

/// Per-epoch return of the value-iteration-greedy policy, the optimal
/// reference for the epochs-to-fraction metrics.
inline double optimal_epoch_return(const TabularMdp& env, int start, int horizon) {
    const QTable q = value_iteration(env, 1e-6);
    return expected_episode_return(env, [&](int s) { return q.greedy(s); }, start, horizon);
}

inline MetricsSummary summarize(std::span<const EpochRecord> records,
                                const ExperimentConfig& cfg) {
    require(!records.empty(), "summarize: empty record stream");
    cfg.validate();

    MetricsSummary summary;
    summary.n_tasks = cfg.n_tasks;
    summary.epochs_per_task = cfg.epochs_per_task;
    summary.horizon = cfg.horizon;

    const TaskSequence seq = generate_sequence(cfg.env, cfg.n_tasks);
    const int start = cfg.env.start_state();
    for (const auto& task : seq.tasks)
        summary.optimal_per_task.push_back(optimal_epoch_return(task, start, cfg.horizon));

    // index records: algorithm -> seed -> task -> returns by epoch
    std::map<Algorithm, std::map<std::uint64_t, std::vector<std::vector<double>>>> by_cell;
    for (const auto& rec : records) {
        auto& tasks = by_cell[rec.algorithm][rec.seed];
        if (tasks.empty()) tasks.resize(cfg.n_tasks);
        require(rec.task_index >= 0 && rec.task_index < cfg.n_tasks,
                "summarize: record task index out of range");
        auto& returns = tasks[rec.task_index];
        if (static_cast<int>(returns.size()) != cfg.epochs_per_task)
            returns.resize(cfg.epochs_per_task, 0.0);
        require(rec.epoch_index >= 0 && rec.epoch_index < cfg.epochs_per_task,
                "summarize: record epoch index out of range");
        returns[rec.epoch_index] = rec.episode_return;
    }

    const int early = std::max(1, cfg.epochs_per_task / 2);
    for (const auto& [algo, seeds] : by_cell) {
        AlgoMetrics metrics;
        metrics.tasks.resize(cfg.n_tasks);
        std::map<int, std::vector<std::int64_t>> pooled_tail;
        for (int j = 0; j < cfg.n_tasks; ++j) {
            std::vector<double> early_means;
            std::vector<double> full_means;
            std::map<int, std::vector<std::int64_t>> crossings;
            for (const auto& [seed, tasks] : seeds) {
                const auto& returns = tasks[j];
                double e_sum = 0.0, f_sum = 0.0;
                for (int e = 0; e < early; ++e) e_sum += returns[e];
                for (double r : returns) f_sum += r;
                early_means.push_back(e_sum / early);
                full_means.push_back(f_sum / returns.size());
                for (int pct : reward_fractions()) {
                    const double threshold = summary.optimal_per_task[j] * pct / 100.0;
                    const std::int64_t cross = first_crossing(returns, threshold);
                    crossings[pct].push_back(cross);
                    if (j >= 1) pooled_tail[pct].push_back(cross);
                }
            }
            TaskAlgoMetrics& tm = metrics.tasks[j];
            double mean = 0.0;
            for (double m : early_means) mean += m;
            mean /= early_means.size();
            double var = 0.0;
            for (double m : early_means) var += (m - mean) * (m - mean);
            tm.early_mean = mean;
            tm.early_std = std::sqrt(var / early_means.size());
            double fmean = 0.0;
            for (double m : full_means) fmean += m;
            tm.full_mean = fmean / full_means.size();
            for (int pct : reward_fractions()) {
                const std::int64_t med =
                    median_with_sentinel(crossings[pct], cfg.epochs_per_task + 1);
                tm.epochs_to_fraction[pct] = med > cfg.epochs_per_task ? kNotReached : med;
            }
            metrics.total_early += tm.early_mean;
        }
        for (int pct : reward_fractions()) {
            if (cfg.n_tasks > 1) {
                metrics.tail_median_epochs[pct] =
                    median_with_sentinel(pooled_tail[pct], cfg.epochs_per_task + 1);
            } else {
                metrics.tail_median_epochs[pct] = kNotReached;
            }
        }
        summary.per_algorithm[to_string(algo)] = std::move(metrics);
    }
    return summary;
}

// --- emit and file formats -------------------------------------------------

inline void save_records_csv(std::span<const EpochRecord> records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_records_csv: cannot open " + path);
    out << "algorithm,seed,task,epoch,return,wall_ms\n";
    for (const auto& r : records) {
        out << to_string(r.algorithm) << ',' << r.seed << ',' << r.task_index << ','
            << r.epoch_index << ',' << format_double(r.episode_return) << ','
            << format_double(r.wall_ms) << '\n';
    }
}

inline std::vector<EpochRecord> load_records_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_records_csv: cannot open " + path);
    std::string line;
    std::getline(in, line);
    require(line == "algorithm,seed,task,epoch,return,wall_ms",
            "load_records_csv: unexpected header in " + path);
    std::vector<EpochRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochRecord r;
        std::size_t pos = 0;
        auto field = [&]() {
            const std::size_t comma = line.find(',', pos);
            std::string f = line.substr(pos, comma - pos);
            pos = comma == std::string::npos ? line.size() : comma + 1;
            return f;
        };
        r.algorithm = algorithm_from_string(field());
        r.seed = std::stoull(field());
        r.task_index = std::stoi(field());
        r.epoch_index = std::stoi(field());
        r.episode_return = std::stod(field());
        r.wall_ms = std::stod(field());
        records.push_back(r);
    }
    return records;
}

inline nlohmann::json to_json(const MetricsSummary& summary) {
    nlohmann::json algos;
    for (const auto& [tag, metrics] : summary.per_algorithm) {
        nlohmann::json tasks = nlohmann::json::array();
        for (const auto& tm : metrics.tasks) {
            nlohmann::json t{{"early_mean", tm.early_mean},
                             {"early_std", tm.early_std},
                             {"full_mean", tm.full_mean}};
            for (const auto& [pct, val] : tm.epochs_to_fraction) {
                const std::string key = "epochs_to_" + std::to_string(pct);
                if (val == kNotReached) t[key] = nullptr;
                else t[key] = val;
            }
            tasks.push_back(t);
        }
        nlohmann::json entry{{"total_early", metrics.total_early}, {"tasks", tasks}};
        for (const auto& [pct, val] : metrics.tail_median_epochs) {
            const std::string key = "tail_median_epochs_to_" + std::to_string(pct);
            if (val == kNotReached) entry[key] = nullptr;
            else entry[key] = val;
        }
        algos[tag] = entry;
    }
    return nlohmann::json{{"n_tasks", summary.n_tasks},
                          {"epochs_per_task", summary.epochs_per_task},
                          {"horizon", summary.horizon},
                          {"window", kMovingAvgWindow},
                          {"optimal_per_task", summary.optimal_per_task},
                          {"algorithms", algos}};
}

/// Writes records.csv, summary.json and one plot-data CSV per task
/// (trailing-window smoothed mean return per algorithm). Deterministic
/// given its inputs: stable column order, LF endings.
inline void emit(const MetricsSummary& summary, std::span<const EpochRecord> records,
                 const std::string& output_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(output_dir, ec);
    require(!ec && fs::is_directory(output_dir), "emit: cannot create directory " + output_dir);

    save_records_csv(records, output_dir + "/records.csv");

    {
        std::ofstream out(output_dir + "/summary.json", std::ios::binary);
        require(out.good(), "emit: cannot open summary.json");
        out << to_json(summary).dump(2) << "\n";
    }

    // mean return per (algorithm, task, epoch) across seeds
    std::vector<std::string> tags;
    for (const auto& [tag, _] : summary.per_algorithm) tags.push_back(tag);
    std::map<std::string, std::vector<std::vector<double>>> sums;
    std::map<std::string, std::vector<std::vector<int>>> counts;
    for (const auto& tag : tags) {
        sums[tag].assign(summary.n_tasks,
                         std::vector<double>(summary.epochs_per_task, 0.0));
        counts[tag].assign(summary.n_tasks, std::vector<int>(summary.epochs_per_task, 0));
    }
    for (const auto& r : records) {
        auto& s = sums[to_string(r.algorithm)];
        auto& c = counts[to_string(r.algorithm)];
        s[r.task_index][r.epoch_index] += r.episode_return;
        c[r.task_index][r.epoch_index] += 1;
    }

    for (int j = 0; j < summary.n_tasks; ++j) {
        char name[64];
        std::snprintf(name, sizeof(name), "/plot_task_%02d.csv", j + 1);
        std::ofstream out(output_dir + name, std::ios::binary);
        require(out.good(), "emit: cannot open plot csv");
        out << "epoch";
        for (const auto& tag : tags) out << ',' << tag;
        out << '\n';
        for (int e = 0; e < summary.epochs_per_task; ++e) {
            out << e;
            for (const auto& tag : tags) {
                const auto& s = sums[tag][j];
                const auto& c = counts[tag][j];
                const int lo = std::max(0, e - kMovingAvgWindow + 1);
                double acc = 0.0;
                int n = 0;
                for (int i = lo; i <= e; ++i) {
                    if (c[i] > 0) {
                        acc += s[i] / c[i];
                        n += 1;
                    }
                }
                out << ',' << (n > 0 ? format_double(acc / n) : "");
            }
            out << '\n';
        }
    }
}

// --- config serialization ---------------------------------------------------

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
    nlohmann::json algorithms = nlohmann::json::array();
    for (Algorithm a : cfg.algorithms) algorithms.push_back(to_string(a));
    return nlohmann::json{
        {"env",
         {{"grid_side", cfg.env.grid_side},
          {"goal_reward_range", {cfg.env.goal_reward_lo, cfg.env.goal_reward_hi}},
          {"interference_range", {cfg.env.interference_lo, cfg.env.interference_hi}},
          {"slip_range", {cfg.env.slip_lo, cfg.env.slip_hi}},
          {"gamma", cfg.env.gamma},
          {"seed", cfg.env.seed}}},
        {"n_tasks", cfg.n_tasks},
        {"epochs_per_task", cfg.epochs_per_task},
        {"horizon", cfg.horizon},
        {"algorithms", algorithms},
        {"mcts",
         {{"exploration_c", cfg.mcts.exploration_c},
          {"simulations_per_move", cfg.mcts.simulations_per_move},
          {"rollout_depth", cfg.mcts.rollout_depth},
          {"max_tree_depth", cfg.mcts.max_tree_depth},
          {"max_tree_nodes", cfg.mcts.max_tree_nodes}}},
        {"delta", cfg.delta},
        {"distance_epsilon", cfg.distance_epsilon},
        {"fit",
         {{"samples_per_pair", cfg.fit.samples_per_pair},
          {"steps", cfg.fit.steps},
          {"learning_rate", cfg.fit.learning_rate},
          {"lipschitz_probes", cfg.fit.lipschitz_probes}}},
        {"rmax", {{"m_known", cfg.rmax.m_known}, {"vi_tolerance", cfg.rmax.vi_tolerance}}},
        {"seeds", cfg.seeds},
        {"output_dir", cfg.output_dir},
        {"record_wall_time", cfg.record_wall_time},
        {"jobs", cfg.jobs}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    const auto& env = j.at("env");
    cfg.env.grid_side = env.at("grid_side").get<int>();
    cfg.env.goal_reward_lo = env.at("goal_reward_range").at(0).get<double>();
    cfg.env.goal_reward_hi = env.at("goal_reward_range").at(1).get<double>();
    cfg.env.interference_lo = env.at("interference_range").at(0).get<double>();
    cfg.env.interference_hi = env.at("interference_range").at(1).get<double>();
    cfg.env.slip_lo = env.at("slip_range").at(0).get<double>();
    cfg.env.slip_hi = env.at("slip_range").at(1).get<double>();
    cfg.env.gamma = env.at("gamma").get<double>();
    cfg.env.seed = env.at("seed").get<std::uint64_t>();
    cfg.n_tasks = j.at("n_tasks").get<int>();
    cfg.epochs_per_task = j.at("epochs_per_task").get<int>();
    cfg.horizon = j.at("horizon").get<int>();
    cfg.algorithms.clear();
    for (const auto& tag : j.at("algorithms"))
        cfg.algorithms.push_back(algorithm_from_string(tag.get<std::string>()));
    const auto& m = j.at("mcts");
    cfg.mcts.exploration_c = m.at("exploration_c").get<double>();
    cfg.mcts.simulations_per_move = m.at("simulations_per_move").get<int>();
    cfg.mcts.rollout_depth = m.at("rollout_depth").get<int>();
    if (m.contains("max_tree_depth")) cfg.mcts.max_tree_depth = m.at("max_tree_depth").get<int>();
    if (m.contains("max_tree_nodes"))
        cfg.mcts.max_tree_nodes = m.at("max_tree_nodes").get<std::int64_t>();
    cfg.delta = j.at("delta").get<double>();
    if (j.contains("distance_epsilon"))
        cfg.distance_epsilon = j.at("distance_epsilon").get<double>();
    if (j.contains("fit")) {
        const auto& f = j.at("fit");
        cfg.fit.samples_per_pair = f.at("samples_per_pair").get<int>();
        cfg.fit.steps = f.at("steps").get<int>();
        cfg.fit.learning_rate = f.at("learning_rate").get<double>();
        if (f.contains("lipschitz_probes"))
            cfg.fit.lipschitz_probes = f.at("lipschitz_probes").get<int>();
    }
    if (j.contains("rmax")) {
        cfg.rmax.m_known = j.at("rmax").at("m_known").get<int>();
        cfg.rmax.vi_tolerance = j.at("rmax").at("vi_tolerance").get<double>();
    }
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("record_wall_time"))
        cfg.record_wall_time = j.at("record_wall_time").get<bool>();
    if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_config: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

inline void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_config: cannot open " + path);
    out << to_json(cfg).dump(2) << "\n";
}

} // namespace lizero
