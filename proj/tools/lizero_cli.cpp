// Command-line front end: run lifelong benchmarks, summarize record
// streams, compute ad-hoc task distances, and inspect the acceleration
// diagnostic of a knowledge snapshot against a task.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lizero/distance.hpp"
#include "lizero/dynamics_model.hpp"
#include "lizero/gridworld.hpp"
#include "lizero/harness.hpp"
#include "lizero/knowledge.hpp"
#include "lizero/mdp.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = text.find(',', pos);
        parts.push_back(text.substr(pos, comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return parts;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const std::string& seeds,
            const std::string& algorithms, int tasks, int epochs, int jobs) {
    lizero::ExperimentConfig cfg = lizero::load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (!seeds.empty()) {
        cfg.seeds.clear();
        for (const auto& s : split_csv(seeds)) cfg.seeds.push_back(std::stoull(s));
    }
    if (!algorithms.empty()) {
        cfg.algorithms.clear();
        for (const auto& tag : split_csv(algorithms))
            cfg.algorithms.push_back(lizero::algorithm_from_string(tag));
    }
    if (tasks > 0) cfg.n_tasks = tasks;
    if (epochs > 0) cfg.epochs_per_task = epochs;
    if (jobs > 0) cfg.jobs = jobs;
    cfg.validate();

    const auto records = lizero::run_experiment(cfg);
    const auto summary = lizero::summarize(records, cfg);
    lizero::emit(summary, records, cfg.output_dir);
    lizero::save_config(cfg, cfg.output_dir + "/config.json");

    for (const auto& [tag, metrics] : summary.per_algorithm)
        std::cout << tag << " total_early=" << lizero::format_double(metrics.total_early)
                  << "\n";
    std::cout << "wrote " << records.size() << " records to " << cfg.output_dir << "\n";
    return 0;
}

int cmd_summarize(const std::string& in_dir) {
    const auto cfg = lizero::load_config(in_dir + "/config.json");
    const auto records = lizero::load_records_csv(in_dir + "/records.csv");
    const auto summary = lizero::summarize(records, cfg);
    lizero::emit(summary, records, in_dir);
    std::cout << lizero::to_json(summary).dump(2) << "\n";
    return 0;
}

int cmd_distance(const std::string& method, const std::string& path_a, const std::string& path_b,
                 double epsilon, double delta, std::uint64_t seed, int fit_samples) {
    const lizero::TabularMdp a = lizero::load_mdp(path_a);
    const lizero::TabularMdp b = lizero::load_mdp(path_b);
    lizero::DistanceEstimate est;

    if (method == "exact") {
        est = lizero::exact_distance(a, b);
    } else if (method == "stationary" || method == "adaptive") {
        const double bound = lizero::default_delta_bound(a.r_max, a.gamma);
        const double p_u = 1.0 / (static_cast<double>(a.n_states) * a.n_actions);
        const auto mode = method == "stationary" ? lizero::SamplingMode::stationary
                                                 : lizero::SamplingMode::adaptive;
        // uniform sampling policy: coverage alpha = p_u, all weights 1
        const std::int64_t n = lizero::required_samples(epsilon, delta, bound, p_u, p_u, mode);
        lizero::Rng rng(seed);
        std::vector<lizero::WeightedSample> samples;
        samples.reserve(n);
        for (std::int64_t i = 0; i < n; ++i) {
            const int s = static_cast<int>(rng.next_below(a.n_states));
            const int act = static_cast<int>(rng.next_below(a.n_actions));
            samples.push_back({s, act, p_u, p_u, lizero::pair_delta(a, b, s, act)});
        }
        est = mode == lizero::SamplingMode::stationary ? lizero::estimate_stationary(samples)
                                                       : lizero::estimate_adaptive(samples);
        est.epsilon = epsilon;
        est.delta = delta;
    } else if (method == "parametric") {
        lizero::ModelFitConfig fit;
        fit.samples_per_pair = fit_samples;
        lizero::Rng rng_a(lizero::mix_seed(seed, 1));
        lizero::Rng rng_b(lizero::mix_seed(seed, 2));
        const auto model_a = lizero::harness_detail::fit_task_model(a, fit, rng_a);
        const auto model_b = lizero::harness_detail::fit_task_model(b, fit, rng_b);
        const double rho = lizero::param_distance(model_a, model_b);
        std::vector<std::pair<const lizero::DynModelParams*, const lizero::DynModelParams*>>
            pairs{{&model_a, &model_b}};
        const auto probes =
            lizero::harness_detail::strided_probes(a.n_states, a.n_actions, fit.lipschitz_probes);
        const auto lip = lizero::estimate_lipschitz_refs(pairs, probes);
        est.method = lizero::DistanceMethod::parametric;
        est.value = lizero::parametric_bound(rho, lip.l_net,
                                             lizero::kappa(a.r_max, a.gamma));
        est.n_samples =
            static_cast<std::int64_t>(fit.samples_per_pair) * a.n_states * a.n_actions;
        std::cout << "rho=" << lizero::format_double(rho)
                  << " l_net=" << lizero::format_double(lip.l_net)
                  << " (self-calibrated on this pair)\n";
    } else {
        throw lizero::InvalidInput("unknown distance method: " + method);
    }

    std::cout << lizero::to_json(est).dump(2) << "\n";
    return 0;
}

int cmd_accel(const std::string& knowledge_path, const std::string& task_path) {
    const lizero::KnowledgeBase kb = lizero::load_knowledge(knowledge_path);
    const lizero::TabularMdp task = lizero::load_mdp(task_path);
    const lizero::QTable q_star = lizero::value_iteration(task, 1e-6);
    const auto report = lizero::acceleration_factor(q_star, kb);
    nlohmann::json out{{"gamma_factor", report.gamma_factor},
                       {"s1_size", report.s1.size()},
                       {"s0_size", report.s0.size()},
                       {"knowledge_entries", kb.size()}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_gen_task(const std::string& out_path, int grid_side, double gamma, std::uint64_t seed,
                 double slip_lo, double slip_hi) {
    lizero::TightTaskConfig cfg;
    cfg.grid_side = grid_side;
    cfg.gamma = gamma;
    cfg.seed = seed;
    cfg.slip_lo = slip_lo;
    cfg.slip_hi = slip_hi;
    const auto task = lizero::generate_task(cfg, seed);
    lizero::save_mdp(task, out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lifelong MCTS planning benchmark toolkit"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a lifelong benchmark from a config file");
    std::string config_path, out_dir, seeds, algorithms;
    int tasks = 0, epochs = 0, jobs = 0;
    run->add_option("--config", config_path, "Config file path")->required();
    run->add_option("--out", out_dir, "Output directory (overrides config)");
    run->add_option("--seeds", seeds, "Comma-separated master seeds (overrides config)");
    run->add_option("--algorithms", algorithms, "Comma-separated algorithm tags");
    run->add_option("--tasks", tasks, "Number of tasks (overrides config)");
    run->add_option("--epochs", epochs, "Epochs per task (overrides config)");
    run->add_option("--jobs", jobs, "Parallel (algorithm, seed) cells");

    auto* summ = app.add_subcommand("summarize", "Recompute metrics from an output directory");
    std::string in_dir;
    summ->add_option("--in", in_dir, "Directory holding records.csv and config.json")->required();

    auto* dist = app.add_subcommand("distance", "Distance between two serialized MDPs");
    std::string method = "exact", path_a, path_b;
    double epsilon = 0.05, delta = 0.05;
    std::uint64_t dseed = 1;
    int fit_samples = 400;
    dist->add_option("--method", method, "exact|stationary|adaptive|parametric");
    dist->add_option("--a", path_a, "First MDP file")->required();
    dist->add_option("--b", path_b, "Second MDP file")->required();
    dist->add_option("--epsilon", epsilon, "Target error for sampling methods");
    dist->add_option("--delta", delta, "Failure probability for sampling methods");
    dist->add_option("--seed", dseed, "Sampling seed");
    dist->add_option("--fit-samples", fit_samples, "Model-fit samples per (s,a), parametric only");

    auto* accel = app.add_subcommand("accel", "Acceleration diagnostic for a knowledge snapshot");
    std::string knowledge_path, task_path;
    accel->add_option("--knowledge", knowledge_path, "Knowledge snapshot file")->required();
    accel->add_option("--task", task_path, "Task MDP file")->required();

    auto* gen = app.add_subcommand("gen-task", "Generate a task MDP fixture file");
    std::string gen_out = "task.json";
    int grid_side = 11;
    double gamma = 0.9, slip_lo = 0.0, slip_hi = 0.1;
    std::uint64_t gseed = 1;
    gen->add_option("--out", gen_out, "Output path");
    gen->add_option("--grid-side", grid_side, "Grid side length (odd)");
    gen->add_option("--gamma", gamma, "Discount factor");
    gen->add_option("--seed", gseed, "Task seed");
    gen->add_option("--slip-lo", slip_lo, "Slip range lower end");
    gen->add_option("--slip-hi", slip_hi, "Slip range upper end");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, out_dir, seeds, algorithms, tasks, epochs, jobs);
        if (summ->parsed()) return cmd_summarize(in_dir);
        if (dist->parsed())
            return cmd_distance(method, path_a, path_b, epsilon, delta, dseed, fit_samples);
        if (accel->parsed()) return cmd_accel(knowledge_path, task_path);
        if (gen->parsed())
            return cmd_gen_task(gen_out, grid_side, gamma, gseed, slip_lo, slip_hi);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
