#pragma once

// Robust Bellman machinery over reward intervals and transition L1 balls of a
// common radius rho around the estimates.

#include "dsee/dynamic_programming.hpp"
#include "dsee/error.hpp"
#include "dsee/estimation.hpp"
#include "dsee/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace dsee {

/// Nominal estimates plus the uncertainty radius.
///
/// Rewards are indexed s * A + a, transition rows (s * A + a) * S + s'.
struct UncertaintySpec {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    double rho = 0.0;
    std::vector<double> r_hat;
    std::vector<double> p_hat;

    std::span<const double> row(std::size_t s, std::size_t a) const {
        return {p_hat.data() + (s * num_actions + a) * num_states, num_states};
    }
    double reward(std::size_t s, std::size_t a) const { return r_hat[s * num_actions + a]; }

    void validate() const {
        if (num_states == 0 || num_actions == 0) throw ConfigError("empty uncertainty spec");
        if (!(rho >= 0.0)) throw ConfigError("rho must be non-negative");
        if (r_hat.size() != num_states * num_actions || p_hat.size() != num_states * num_actions * num_states)
            throw ConfigError("uncertainty spec tables have wrong sizes");
        for (std::size_t p = 0; p < num_states * num_actions; ++p) {
            double sum = 0.0;
            for (std::size_t next = 0; next < num_states; ++next) {
                const double q = p_hat[p * num_states + next];
                if (!(q >= 0.0)) throw ConfigError("negative nominal probability");
                sum += q;
            }
            if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("nominal row does not sum to 1");
        }
    }

    /// Sets centred on the true model; rho = 0 recovers the nominal MDP.
    static UncertaintySpec from_model(const MdpModel& model, double rho) {
        UncertaintySpec spec{model.num_states(), model.num_actions(), rho, {}, model.transitions()};
        spec.r_hat.reserve(model.num_pairs());
        for (std::size_t s = 0; s < model.num_states(); ++s)
            for (std::size_t a = 0; a < model.num_actions(); ++a) spec.r_hat.push_back(model.mean_reward(s, a));
        spec.validate();
        return spec;
    }

    /// Sets centred on the empirical estimates. Every pair must be visited.
    static UncertaintySpec from_estimates(const EmpiricalModel& em, double rho) {
        UncertaintySpec spec{em.num_states(), em.num_actions(), rho, {}, {}};
        spec.r_hat.reserve(em.num_states() * em.num_actions());
        spec.p_hat.reserve(em.num_states() * em.num_actions() * em.num_states());
        for (std::size_t s = 0; s < em.num_states(); ++s)
            for (std::size_t a = 0; a < em.num_actions(); ++a) {
                spec.r_hat.push_back(em.empirical_reward(s, a));
                const auto row = em.empirical_transition(s, a);
                spec.p_hat.insert(spec.p_hat.end(), row.begin(), row.end());
            }
        spec.validate();
        return spec;
    }
};

/// Minimiser of the reward interval [r_hat - rho, r_hat + rho]. Not clamped
/// to [0, R_max].
constexpr double worst_case_reward(double r_hat, double rho) noexcept { return r_hat - rho; }

struct WorstTransition {
    double value = 0.0;
    std::vector<double> row;
};

/// min p . V over {p in simplex : ||p - p_hat||_1 <= rho}.
///
/// Shifts up to rho / 2 of mass onto the lowest-valued state, taking it from
/// the highest-valued states first. Ties in V go to the lower index.
inline WorstTransition worst_case_transition(std::span<const double> p_hat, const ValueFunction& values,
                                             double rho) {
    const std::size_t n = p_hat.size();
    if (values.size() != n) throw ConfigError("row and value lengths differ");
    if (!(rho >= 0.0)) throw ConfigError("rho must be non-negative");

    std::vector<double> row(p_hat.begin(), p_hat.end());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // ascending V, lower index first among ties
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });

    const std::size_t target = order.front();
    double budget = std::min(0.5 * rho, 1.0 - row[target]);
    if (0.5 * rho >= 1.0 - row[target]) {
        // the ball covers the vertex at the minimiser
        std::fill(row.begin(), row.end(), 0.0);
        row[target] = 1.0;
    } else if (budget > 0.0) {
        row[target] += budget;
        // donors in descending V; among equal V the lower index donates first
        std::vector<std::size_t> donors(order.begin() + 1, order.end());
        std::stable_sort(donors.begin(), donors.end(),
                         [&](std::size_t i, std::size_t j) { return values[i] > values[j]; });
        for (std::size_t d : donors) {
            if (budget <= 0.0) break;
            const double take = std::min(budget, row[d]);
            row[d] -= take;
            budget -= take;
        }
        // rounding can leave a sub-ulp residue of budget when every donor is drained
        if (budget > 0.0) row[target] -= budget;
    }
    return {expected_value(row, values), std::move(row)};
}

/// One robust Bellman backup; the reward and transition minimisations are
/// independent, so each is solved separately.
inline std::pair<ValueFunction, Policy> robust_backup(const UncertaintySpec& spec, const ValueFunction& values,
                                                      double gamma) {
    if (values.size() != spec.num_states) throw ConfigError("value length does not match spec");
    ValueFunction out(spec.num_states);
    Policy greedy(spec.num_states);
    for (std::size_t s = 0; s < spec.num_states; ++s) {
        double best = 0.0;
        for (std::size_t a = 0; a < spec.num_actions; ++a) {
            const double q = worst_case_reward(spec.reward(s, a), spec.rho) +
                             gamma * worst_case_transition(spec.row(s, a), values, spec.rho).value;
            if (a == 0 || q > best) {
                best = q;
                greedy[s] = a;
            }
        }
        out[s] = best;
    }
    return {std::move(out), std::move(greedy)};
}

/// Fixed point of robust_backup. Stops once the residual is at most
/// tol * (1 - gamma); the policy is greedy from the final backup.
inline Solution robust_value_iteration(const UncertaintySpec& spec, double gamma, double tol,
                                       ValueFunction initial = {}) {
    if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    spec.validate();
    ValueFunction v = initial.size() == spec.num_states ? std::move(initial) : ValueFunction(spec.num_states);
    const double target = tol * (1.0 - gamma);
    for (std::size_t it = 1; it <= kMaxSolverIterations; ++it) {
        auto [next, greedy] = robust_backup(spec, v, gamma);
        const double residual = sup_distance(next, v);
        if (residual <= target) return {std::move(v), std::move(greedy), residual, it};
        v = std::move(next);
    }
    throw NonTerminationError("robust value iteration did not converge");
}

/// Loss bound 2 rho (2 + R_max gamma / (1 - gamma)^2) on ||V* - V^{robust}||.
inline double robust_loss_bound(double rho, double gamma, double r_max) {
    return 2.0 * rho * (2.0 + r_max * gamma / ((1.0 - gamma) * (1.0 - gamma)));
}

} // namespace dsee
