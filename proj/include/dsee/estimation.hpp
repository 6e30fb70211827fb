#pragma once

// Online empirical model and the concentration bounds that size the
// exploration epochs.

#include "dsee/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace dsee {

/// Visit counts and reward sums collected during exploration.
///
/// Estimates are recomputed from the counts on every query.
class EmpiricalModel {
public:
    EmpiricalModel(std::size_t num_states, std::size_t num_actions, double r_max)
        : num_states_(num_states),
          num_actions_(num_actions),
          r_max_(r_max),
          n_sa_(num_states * num_actions, 0),
          n_sas_(num_states * num_actions * num_states, 0),
          reward_sum_(num_states * num_actions, 0.0) {
        if (num_states == 0 || num_actions == 0) throw ConfigError("empty state or action space");
        if (!(r_max > 0.0)) throw ConfigError("r_max must be positive");
    }

    /// Rebuilds a model from raw tables, e.g. a checkpoint. Invariants are checked.
    EmpiricalModel(std::size_t num_states, std::size_t num_actions, double r_max,
                   std::vector<std::uint64_t> n_sa, std::vector<std::uint64_t> n_sas,
                   std::vector<double> reward_sum)
        : num_states_(num_states),
          num_actions_(num_actions),
          r_max_(r_max),
          n_sa_(std::move(n_sa)),
          n_sas_(std::move(n_sas)),
          reward_sum_(std::move(reward_sum)) {
        const std::size_t pairs = num_states * num_actions;
        if (n_sa_.size() != pairs || n_sas_.size() != pairs * num_states || reward_sum_.size() != pairs)
            throw ConfigError("empirical model tables have wrong sizes");
        for (std::size_t p = 0; p < pairs; ++p) {
            std::uint64_t total = 0;
            for (std::size_t next = 0; next < num_states; ++next) total += n_sas_[p * num_states + next];
            if (total != n_sa_[p]) throw ConfigError("n(s,a,.) does not sum to n(s,a)");
            if (reward_sum_[p] < 0.0 || reward_sum_[p] > static_cast<double>(n_sa_[p]) * r_max_)
                throw ConfigError("reward sum outside [0, n * r_max]");
        }
    }

    void record(std::size_t s, std::size_t a, double reward, std::size_t next) {
        if (s >= num_states_ || a >= num_actions_ || next >= num_states_)
            throw ConfigError("state or action index out of range");
        if (!(reward >= 0.0 && reward <= r_max_))
            throw ConfigError("reward " + std::to_string(reward) + " outside [0, r_max]");
        const std::size_t p = pair(s, a);
        ++n_sa_[p];
        ++n_sas_[p * num_states_ + next];
        reward_sum_[p] += reward;
    }

    std::uint64_t count(std::size_t s, std::size_t a) const { return n_sa_[pair(s, a)]; }
    std::uint64_t count(std::size_t s, std::size_t a, std::size_t next) const {
        return n_sas_[pair(s, a) * num_states_ + next];
    }
    double reward_sum(std::size_t s, std::size_t a) const { return reward_sum_[pair(s, a)]; }

    std::uint64_t min_count() const {
        std::uint64_t m = n_sa_.front();
        for (auto c : n_sa_) m = std::min(m, c);
        return m;
    }

    double empirical_reward(std::size_t s, std::size_t a) const {
        const auto n = checked_count(s, a);
        return reward_sum_[pair(s, a)] / static_cast<double>(n);
    }

    std::vector<double> empirical_transition(std::size_t s, std::size_t a) const {
        const auto n = static_cast<double>(checked_count(s, a));
        std::vector<double> row(num_states_);
        for (std::size_t next = 0; next < num_states_; ++next)
            row[next] = static_cast<double>(n_sas_[pair(s, a) * num_states_ + next]) / n;
        return row;
    }

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }
    double r_max() const noexcept { return r_max_; }
    const std::vector<std::uint64_t>& pair_counts() const noexcept { return n_sa_; }
    const std::vector<std::uint64_t>& transition_counts() const noexcept { return n_sas_; }
    const std::vector<double>& reward_sums() const noexcept { return reward_sum_; }

    bool operator==(const EmpiricalModel&) const = default;

private:
    std::size_t pair(std::size_t s, std::size_t a) const {
        if (s >= num_states_ || a >= num_actions_) throw ConfigError("state or action index out of range");
        return s * num_actions_ + a;
    }
    std::uint64_t checked_count(std::size_t s, std::size_t a) const {
        const auto n = n_sa_[pair(s, a)];
        if (n == 0)
            throw UnvisitedPairError("pair (" + std::to_string(s) + ", " + std::to_string(a) +
                                     ") has no observations");
        return n;
    }

    std::size_t num_states_;
    std::size_t num_actions_;
    double r_max_;
    std::vector<std::uint64_t> n_sa_;
    std::vector<std::uint64_t> n_sas_;
    std::vector<double> reward_sum_;
};

/// log(2^n - 2) without forming 2^n, n >= 2.
inline double log_two_pow_minus_two(std::size_t n) {
    if (n < 2) throw ConfigError("log(2^|S| - 2) needs |S| >= 2");
    const double nd = static_cast<double>(n);
    return nd * std::numbers::ln2 + std::log1p(-std::exp2(1.0 - nd));
}

/// Hoeffding radius sqrt(R_max^2 log(2/delta) / (2n)).
inline double reward_epsilon(std::uint64_t n, double delta_r, double r_max) {
    if (n == 0) throw ConfigError("reward_epsilon needs n >= 1");
    if (!(delta_r > 0.0 && delta_r < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    return std::sqrt(r_max * r_max * std::log(2.0 / delta_r) / (2.0 * static_cast<double>(n)));
}

/// Weissman L1 radius sqrt(2 [log(2^|S| - 2) - log delta] / n).
inline double transition_epsilon(std::uint64_t n, double delta_p, std::size_t num_states) {
    if (n == 0) throw ConfigError("transition_epsilon needs n >= 1");
    if (!(delta_p > 0.0 && delta_p < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    return std::sqrt(2.0 * (log_two_pow_minus_two(num_states) - std::log(delta_p)) /
                     static_cast<double>(n));
}

/// Robustness radius rho = eps / (4 + 2 R_max gamma / (1 - gamma)^2).
inline double rho_for_epsilon(double epsilon, double gamma, double r_max) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (!(r_max >= 0.0)) throw ConfigError("r_max must be non-negative");
    return epsilon / (4.0 + 2.0 * r_max * gamma / ((1.0 - gamma) * (1.0 - gamma)));
}

/// Per-pair sample count before ceiling:
/// max{R_max^2 log(4|S||A|/delta) / (2 rho^2), mu / rho^2},
/// mu = 2 [log(2^|S| - 2) + log(2|S||A|/delta)]. For |S| = 1 only the reward
/// term applies.
inline double visit_threshold_real(double rho, double delta, std::size_t num_states, std::size_t num_actions,
                                   double r_max) {
    if (!(rho > 0.0)) throw ConfigError("rho must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    const double pairs = static_cast<double>(num_states) * static_cast<double>(num_actions);
    const double rho2 = rho * rho;
    const double reward_term = r_max * r_max * std::log(4.0 * pairs / delta) / (2.0 * rho2);
    // with one state every transition estimate is exact
    if (num_states == 1) return reward_term;
    const double mu = 2.0 * (log_two_pow_minus_two(num_states) + std::log(2.0 * pairs / delta));
    return std::max(reward_term, mu / rho2);
}

inline std::uint64_t visit_threshold(double rho, double delta, std::size_t num_states, std::size_t num_actions,
                                     double r_max) {
    return static_cast<std::uint64_t>(std::ceil(visit_threshold_real(rho, delta, num_states, num_actions, r_max)));
}

/// Accuracy target, failure probability and the derived robustness radius.
struct ConfidenceParams {
    double epsilon;
    double delta;
    double rho;

    static ConfidenceParams make(double epsilon, double delta, double gamma, double r_max) {
        if (!(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0))
            throw ConfigError("epsilon and delta must lie in (0, 1)");
        return {epsilon, delta, rho_for_epsilon(epsilon, gamma, r_max)};
    }

    /// Per-pair failure budget delta / (2|S||A|) used for both the reward and
    /// the transition bound.
    double per_pair_delta(std::size_t num_states, std::size_t num_actions) const {
        return delta / (2.0 * static_cast<double>(num_states * num_actions));
    }
};

} // namespace dsee
