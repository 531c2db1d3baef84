#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lizero/distance.hpp"
#include "lizero/mdp.hpp"

namespace lizero {

/// Sampling-uncertainty term P(N, N') of the Lipschitz Q-gap bound:
/// (2 r_max / (1-gamma)) * sqrt(ln(2/delta) / (2 min(N, N'))).
inline double confidence_term(std::int64_t n, std::int64_t n_prime, double delta, double r_max,
                              double gamma) {
    require(n >= 1 && n_prime >= 1, "confidence_term: counts must be at least 1");
    require(delta > 0.0 && delta < 1.0, "confidence_term: delta must lie in (0,1)");
    const double m = static_cast<double>(std::min(n, n_prime));
    return (2.0 * r_max / (1.0 - gamma)) * std::sqrt(std::log(2.0 / delta) / (2.0 * m));
}

/// Everything retained from one solved task: its final Q estimates, the
/// per-pair visit counts behind them, and its distance to the task
/// currently being solved.
struct TaskKnowledge {
    QTable q_values;
    std::vector<std::int64_t> visit_counts; // counts[s*n_actions + a]
    DistanceEstimate distance_to_current;

    std::int64_t count(int state, int action) const {
        return visit_counts[static_cast<std::size_t>(state) * q_values.n_actions + action];
    }
};

/// Ordered store of solved-task knowledge plus the shared constants the
/// transfer bound needs. Read-only while a task is being searched.
class KnowledgeBase {
public:
    KnowledgeBase() = default;
    KnowledgeBase(double r_max, double gamma, double delta)
        : r_max_(r_max), gamma_(gamma), delta_(delta) {
        require(delta > 0.0 && delta < 1.0, "KnowledgeBase: delta must lie in (0,1)");
        require(gamma > 0.0 && gamma < 1.0, "KnowledgeBase: gamma must lie in (0,1)");
    }

    void add(TaskKnowledge entry) { entries_.push_back(std::move(entry)); }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::vector<TaskKnowledge>& entries() { return entries_; }
    const std::vector<TaskKnowledge>& entries() const { return entries_; }

    double r_max() const { return r_max_; }
    double gamma() const { return gamma_; }
    double delta() const { return delta_; }
    double lipschitz() const { return lipschitz_l(gamma_); }
    double cap() const { return value_cap(r_max_, gamma_); }

    /// Transfer bound U(s,a): the tightest of the per-source sums
    /// Q_i(s,a) + L*d_i + P(N_i(s,a)), clamped to the value cap. Sources
    /// with no visits at (s,a) contribute the cap.
    double auct_bound(int state, int action) const {
        double best = cap();
        for (const auto& entry : entries_) {
            const std::int64_t n = entry.count(state, action);
            if (n <= 0) continue;
            const double term = entry.q_values.at(state, action) +
                                lipschitz() * entry.distance_to_current.value +
                                confidence_term(n, n, delta_, r_max_, gamma_);
            best = std::min(best, term);
        }
        return std::max(best, 0.0);
    }

    /// Dense cache of auct_bound over all pairs, for hot selection loops.
    std::vector<double> bound_table(int n_states, int n_actions) const {
        std::vector<double> table(static_cast<std::size_t>(n_states) * n_actions);
        for (int s = 0; s < n_states; ++s)
            for (int a = 0; a < n_actions; ++a)
                table[static_cast<std::size_t>(s) * n_actions + a] = auct_bound(s, a);
        return table;
    }

private:
    std::vector<TaskKnowledge> entries_;
    double r_max_ = 1.0;
    double gamma_ = 0.9;
    double delta_ = 0.05;
};

/// Diagnostic decomposition of where the transfer bound prunes search.
/// s1 holds the suboptimal pairs whose bound already sits below the
/// state's optimal return, s0 the remaining suboptimal pairs; optimal
/// pairs (zero advantage) belong to neither.
struct AccelerationReport {
    double gamma_factor = 1.0;
    std::vector<std::pair<int, int>> s1;
    std::vector<std::pair<int, int>> s0;
    std::vector<double> advantages; // advantages[s*n_actions + a], in [0,1]
};

/// Acceleration factor of transfer-guided search over plain UCT:
/// Gamma = sum_{S1 u S0} 1/adv^2 / (|S1| + sum_{S0} 1/adv^2).
inline AccelerationReport acceleration_factor(const QTable& q_star, const KnowledgeBase& kb) {
    AccelerationReport report;
    const int n_states = q_star.n_states;
    const int n_actions = q_star.n_actions;
    report.advantages.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);

    double numerator = 0.0;
    double denominator = 0.0;
    for (int s = 0; s < n_states; ++s) {
        const double best = q_star.state_value(s);
        for (int a = 0; a < n_actions; ++a) {
            double adv = (best - q_star.at(s, a)) / kb.cap();
            adv = std::min(std::max(adv, 0.0), 1.0);
            report.advantages[static_cast<std::size_t>(s) * n_actions + a] = adv;
            if (adv <= 0.0) continue; // optimal actions are excluded from both sums
            const double inv_sq = 1.0 / (adv * adv);
            numerator += inv_sq;
            if (kb.auct_bound(s, a) < best) {
                report.s1.emplace_back(s, a);
                denominator += 1.0;
            } else {
                report.s0.emplace_back(s, a);
                denominator += inv_sq;
            }
        }
    }
    report.gamma_factor = denominator > 0.0 ? numerator / denominator : 1.0;
    return report;
}

// --- knowledge snapshot serialization ------------------------------------

inline nlohmann::json to_json(const DistanceEstimate& est) {
    nlohmann::json j{{"value", est.value},
                     {"method", to_string(est.method)},
                     {"n_samples", est.n_samples}};
    if (est.epsilon) j["epsilon"] = *est.epsilon;
    if (est.delta) j["delta"] = *est.delta;
    return j;
}

inline DistanceEstimate distance_from_json(const nlohmann::json& j) {
    DistanceEstimate est;
    est.value = j.at("value").get<double>();
    const std::string method = j.at("method").get<std::string>();
    if (method == "exact") est.method = DistanceMethod::exact;
    else if (method == "stationary_is") est.method = DistanceMethod::stationary_is;
    else if (method == "adaptive_is") est.method = DistanceMethod::adaptive_is;
    else if (method == "parametric") est.method = DistanceMethod::parametric;
    else throw InvalidInput("unknown distance method: " + method);
    est.n_samples = j.at("n_samples").get<std::int64_t>();
    if (j.contains("epsilon")) est.epsilon = j.at("epsilon").get<double>();
    if (j.contains("delta")) est.delta = j.at("delta").get<double>();
    return est;
}

inline nlohmann::json to_json(const KnowledgeBase& kb) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& entry : kb.entries()) {
        entries.push_back({{"n_states", entry.q_values.n_states},
                           {"n_actions", entry.q_values.n_actions},
                           {"q_values", entry.q_values.values},
                           {"visit_counts", entry.visit_counts},
                           {"distance", to_json(entry.distance_to_current)}});
    }
    return nlohmann::json{{"r_max", kb.r_max()},
                          {"gamma", kb.gamma()},
                          {"delta", kb.delta()},
                          {"entries", entries}};
}

inline KnowledgeBase knowledge_from_json(const nlohmann::json& j) {
    KnowledgeBase kb(j.at("r_max").get<double>(), j.at("gamma").get<double>(),
                     j.at("delta").get<double>());
    for (const auto& e : j.at("entries")) {
        TaskKnowledge entry;
        entry.q_values.n_states = e.at("n_states").get<int>();
        entry.q_values.n_actions = e.at("n_actions").get<int>();
        entry.q_values.gamma = kb.gamma();
        entry.q_values.values = e.at("q_values").get<std::vector<double>>();
        entry.visit_counts = e.at("visit_counts").get<std::vector<std::int64_t>>();
        entry.distance_to_current = distance_from_json(e.at("distance"));
        kb.add(std::move(entry));
    }
    return kb;
}

inline void save_knowledge(const KnowledgeBase& kb, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_knowledge: cannot open " + path);
    out << to_json(kb).dump(2) << "\n";
}

inline KnowledgeBase load_knowledge(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_knowledge: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return knowledge_from_json(j);
}

} // namespace lizero
