#pragma once

// Exact dynamic-programming oracles on a known model: optimal values,
// policy evaluation and the regret measure built on them.

#include "dsee/error.hpp"
#include "dsee/mdp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace dsee {

struct Solution {
    ValueFunction values;
    Policy policy;
    /// Sup-norm Bellman residual of `values` when the solver stopped.
    double residual = 0.0;
    std::size_t iterations = 0;
};

inline constexpr std::size_t kMaxSolverIterations = 10'000'000;
inline constexpr std::size_t kDirectSolveLimit = 512;

inline double expected_value(std::span<const double> row, const ValueFunction& v) {
    double sum = 0.0;
    for (std::size_t s = 0; s < row.size(); ++s) sum += row[s] * v[s];
    return sum;
}

inline double q_value(const MdpModel& model, const ValueFunction& v, std::size_t s, std::size_t a) {
    return model.mean_reward(s, a) + model.discount() * expected_value(model.row(s, a), v);
}

/// One application of the Bellman optimality operator. Ties go to the lowest
/// action index.
inline std::pair<ValueFunction, Policy> bellman_backup(const MdpModel& model, const ValueFunction& v) {
    const std::size_t n = model.num_states();
    ValueFunction out(n);
    Policy greedy(n);
    for (std::size_t s = 0; s < n; ++s) {
        double best = q_value(model, v, s, 0);
        std::size_t best_a = 0;
        for (std::size_t a = 1; a < model.num_actions(); ++a) {
            const double q = q_value(model, v, s, a);
            if (q > best) {
                best = q;
                best_a = a;
            }
        }
        out[s] = best;
        greedy[s] = best_a;
    }
    return {std::move(out), std::move(greedy)};
}

/// Value iteration from `initial` (zeros when empty).
///
/// Iterates until the Bellman residual is at most tol * (1 - gamma), which
/// puts the returned values within tol of V* and trivially within tol of
/// their own backup.
inline Solution value_iteration(const MdpModel& model, double tol, ValueFunction initial = {}) {
    if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
    ValueFunction v = initial.size() == model.num_states() ? std::move(initial)
                                                           : ValueFunction(model.num_states());
    const double target = tol * (1.0 - model.discount());
    for (std::size_t it = 1; it <= kMaxSolverIterations; ++it) {
        auto [next, greedy] = bellman_backup(model, v);
        const double residual = sup_distance(next, v);
        // `greedy` is greedy with respect to v, the values being returned
        if (residual <= target) return {std::move(v), std::move(greedy), residual, it};
        v = std::move(next);
    }
    throw NonTerminationError("value iteration did not converge");
}

namespace detail {

/// Solves V = r + gamma * P V for an already-aggregated chain.
inline ValueFunction solve_linear_values(const Eigen::MatrixXd& chain, const Eigen::VectorXd& reward,
                                         double gamma, double tol) {
    const auto n = chain.rows();
    if (static_cast<std::size_t>(n) <= kDirectSolveLimit) {
        const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - gamma * chain;
        const Eigen::VectorXd x = system.partialPivLu().solve(reward);
        return ValueFunction(std::vector<double>(x.data(), x.data() + n));
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    const double target = tol * (1.0 - gamma);
    for (std::size_t it = 0; it < kMaxSolverIterations; ++it) {
        Eigen::VectorXd next = reward + gamma * (chain * x);
        const double residual = (next - x).lpNorm<Eigen::Infinity>();
        x = std::move(next);
        if (residual <= target) return ValueFunction(std::vector<double>(x.data(), x.data() + n));
    }
    throw NonTerminationError("iterative policy evaluation did not converge");
}

} // namespace detail

/// Value of a stochastic policy given as weights[s * A + a].
inline ValueFunction evaluate_stochastic_policy(const MdpModel& model, std::span<const double> weights,
                                                double tol) {
    if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
    const std::size_t n = model.num_states();
    const std::size_t na = model.num_actions();
    if (weights.size() != n * na) throw ConfigError("policy weight table has wrong size");
    Eigen::MatrixXd chain = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd reward = Eigen::VectorXd::Zero(n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            const double w = weights[s * na + a];
            if (w == 0.0) continue;
            reward(s) += w * model.mean_reward(s, a);
            const auto row = model.row(s, a);
            for (std::size_t next = 0; next < n; ++next) chain(s, next) += w * row[next];
        }
    }
    return detail::solve_linear_values(chain, reward, model.discount(), tol);
}

inline ValueFunction policy_evaluation(const MdpModel& model, const Policy& policy, double tol) {
    if (policy.size() != model.num_states()) throw ConfigError("policy length does not match model");
    std::vector<double> weights(model.num_pairs(), 0.0);
    for (std::size_t s = 0; s < policy.size(); ++s) {
        if (policy[s] >= model.num_actions())
            throw ConfigError("policy action out of range at state " + std::to_string(s));
        weights[model.pair_index(s, policy[s])] = 1.0;
    }
    return evaluate_stochastic_policy(model, weights, tol);
}

/// Value of the behavior policy that picks actions uniformly at random.
inline ValueFunction uniform_policy_value(const MdpModel& model, double tol) {
    const std::vector<double> weights(model.num_pairs(), 1.0 / static_cast<double>(model.num_actions()));
    return evaluate_stochastic_policy(model, weights, tol);
}

/// ||V* - V^pi||_inf.
inline double instantaneous_regret(const ValueFunction& v_star, const ValueFunction& v_pi) {
    return sup_distance(v_star, v_pi);
}

} // namespace dsee
