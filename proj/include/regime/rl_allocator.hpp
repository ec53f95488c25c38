#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "regime/error.hpp"
#include "regime/market_data.hpp"
#include "regime/markov_chain.hpp"
#include "regime/regime_analysis.hpp"

namespace regime {

/// Long-only, fully invested weights over (TLT, GLD, SPY).
struct WeightVector {
    PerAsset<double> w{};

    double operator[](Asset a) const { return w[index_of(a)]; }
    double sum() const { return w[0] + w[1] + w[2]; }
    bool is_valid(double tol = 1e-9) const {
        return std::all_of(w.begin(), w.end(), [](double x) { return x >= 0.0; }) && std::abs(sum() - 1.0) <= tol;
    }
    friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

struct Action {
    std::size_t id;
    WeightVector weights;
};

using ActionSet = std::vector<Action>;

/// Three pure holdings, three equal pairs and the equal-weight triple.
/// Ids 2 (all GLD) and 3 (all SPY) are pinned; the rest follow in this order.
inline ActionSet default_action_set() {
    constexpr double third = 1.0 / 3.0;
    return {
        {0, {{1.0, 0.0, 0.0}}},
        {1, {{0.5, 0.5, 0.0}}},
        {2, {{0.0, 1.0, 0.0}}},
        {3, {{0.0, 0.0, 1.0}}},
        {4, {{0.5, 0.0, 0.5}}},
        {5, {{0.0, 0.5, 0.5}}},
        {6, {{third, third, third}}},
    };
}

enum class RewardMode {
    Current,  ///< R(s, a) = w_a . mu_s
    Next,     ///< R(s, a) = sum_s' P(s, s') w_a . mu_s'
};

using RewardTable = std::vector<std::vector<double>>;

namespace detail {
[[noreturn]] inline void rl_error(ErrorKind kind, std::string_view code, const std::string& message) {
    fail(kind, "rl_allocator", code, message);
}

inline double dot(const WeightVector& w, const PerAsset<double>& mu) {
    return w.w[0] * mu[0] + w.w[1] * mu[1] + w.w[2] * mu[2];
}
}  // namespace detail

/// Expected per-period return of each action in each regime. `transition`
/// is required only for RewardMode::Next.
inline RewardTable build_reward_table(const RegimeStats& stats, const ActionSet& actions,
                                      RewardMode mode = RewardMode::Current,
                                      const TransitionMatrix* transition = nullptr) {
    const std::size_t n = stats.n_states();
    for (std::size_t s = 0; s < n; ++s) {
        if (!stats.present(s)) {
            detail::rl_error(ErrorKind::Numerical, "AbsentState", "state " + std::to_string(s) + " has no statistics");
        }
    }
    RewardTable current(n, std::vector<double>(actions.size()));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < actions.size(); ++a) {
            current[s][a] = detail::dot(actions[a].weights, stats.per_state[s]->mean);
        }
    }
    if (mode == RewardMode::Current) return current;

    if (transition == nullptr || transition->n_states() != n) {
        detail::rl_error(ErrorKind::Usage, "MissingTransition", "next-period rewards need an N x N transition matrix");
    }
    RewardTable next(n, std::vector<double>(actions.size(), 0.0));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < actions.size(); ++a) {
            for (std::size_t sp = 0; sp < n; ++sp) next[s][a] += (*transition)(s, sp) * current[sp][a];
        }
    }
    return next;
}

/// Regime MDP with action-independent transitions.
struct MdpModel {
    TransitionMatrix transition;
    RewardTable reward;  ///< N x A
    double gamma = 0.99;

    std::size_t n_states() const noexcept { return transition.n_states(); }
    std::size_t n_actions() const noexcept { return reward.empty() ? 0 : reward.front().size(); }

    void validate() const {
        if (!transition.is_stochastic()) detail::rl_error(ErrorKind::Data, "InvalidMdp", "transition not stochastic");
        if (reward.size() != n_states() || n_actions() == 0) {
            detail::rl_error(ErrorKind::Data, "InvalidMdp", "reward table must be N x A");
        }
        for (const auto& row : reward) {
            if (row.size() != n_actions()) detail::rl_error(ErrorKind::Data, "InvalidMdp", "ragged reward table");
        }
        if (!(gamma >= 0.0 && gamma < 1.0)) {
            detail::rl_error(ErrorKind::Usage, "InvalidGamma", "gamma must lie in [0, 1)");
        }
    }
};

/// Q(s, a) = R(s, a) + gamma sum_s' P(s, s') V(s').
inline double q_value(const MdpModel& mdp, const std::vector<double>& values, std::size_t s, std::size_t a) {
    double cont = 0.0;
    for (std::size_t sp = 0; sp < mdp.n_states(); ++sp) cont += mdp.transition(s, sp) * values[sp];
    return mdp.reward[s][a] + mdp.gamma * cont;
}

/// Solves V = R_pi + gamma P V directly.
inline std::vector<double> policy_evaluation(const MdpModel& mdp, const std::vector<std::size_t>& policy) {
    mdp.validate();
    const auto n = static_cast<Eigen::Index>(mdp.n_states());
    if (policy.size() != mdp.n_states()) detail::rl_error(ErrorKind::Usage, "InvalidPolicy", "policy length != N");

    Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index s = 0; s < n; ++s) {
        const auto a = policy[static_cast<std::size_t>(s)];
        if (a >= mdp.n_actions()) detail::rl_error(ErrorKind::Usage, "InvalidPolicy", "action id out of range");
        rhs(s) = mdp.reward[static_cast<std::size_t>(s)][a];
        for (Eigen::Index sp = 0; sp < n; ++sp) {
            lhs(s, sp) -= mdp.gamma * mdp.transition(static_cast<std::size_t>(s), static_cast<std::size_t>(sp));
        }
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
    if (!lu.isInvertible()) detail::rl_error(ErrorKind::Numerical, "SingularSystem", "I - gamma P is singular");
    const Eigen::VectorXd v = lu.solve(rhs);
    if (!v.allFinite()) detail::rl_error(ErrorKind::Numerical, "SingularSystem", "non-finite policy values");
    return {v.data(), v.data() + n};
}

struct PolicySolution {
    std::vector<std::size_t> policy;
    std::vector<double> values;
    std::size_t n_iterations = 0;
};

/// Lowest action id whose Q is within rounding of the best.
inline std::size_t greedy_action(const MdpModel& mdp, const std::vector<double>& values, std::size_t s) {
    std::vector<double> q(mdp.n_actions());
    for (std::size_t a = 0; a < q.size(); ++a) q[a] = q_value(mdp, values, s, a);
    const double best = *std::max_element(q.begin(), q.end());
    const double slack = 1e-12 * std::max(1.0, std::abs(best));
    for (std::size_t a = 0; a < q.size(); ++a) {
        if (q[a] >= best - slack) return a;
    }
    return 0;
}

/// Howard policy iteration: exact evaluation, greedy improvement, stop when
/// the policy repeats.
inline PolicySolution policy_iteration(const MdpModel& mdp) {
    mdp.validate();
    PolicySolution sol;
    sol.policy.assign(mdp.n_states(), 0);
    // Bounded by the number of deterministic policies; never reached in practice.
    const std::size_t cap = 10'000;
    for (std::size_t it = 1; it <= cap; ++it) {
        sol.values = policy_evaluation(mdp, sol.policy);
        sol.n_iterations = it;
        std::vector<std::size_t> improved(mdp.n_states());
        for (std::size_t s = 0; s < mdp.n_states(); ++s) improved[s] = greedy_action(mdp, sol.values, s);
        if (improved == sol.policy) break;
        sol.policy = std::move(improved);
    }
    return sol;
}

}  // namespace regime
