#pragma once

#include "dsee/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dsee {

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

// Reward distributions. All are supported on [0, r_max].

struct ConstantReward {
    double value = 0.0;
    bool operator==(const ConstantReward&) const = default;
};

struct UniformReward {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const UniformReward&) const = default;
};

/// Pays r_max with probability p and 0 otherwise.
struct ScaledBernoulliReward {
    double p = 0.0;
    bool operator==(const ScaledBernoulliReward&) const = default;
};

using RewardDist = std::variant<ConstantReward, UniformReward, ScaledBernoulliReward>;

inline double reward_mean(const RewardDist& dist, double r_max) {
    struct Visitor {
        double r_max;
        double operator()(const ConstantReward& d) const { return d.value; }
        double operator()(const UniformReward& d) const { return 0.5 * (d.lo + d.hi); }
        double operator()(const ScaledBernoulliReward& d) const { return d.p * r_max; }
    };
    return std::visit(Visitor{r_max}, dist);
}

inline bool reward_support_within(const RewardDist& dist, double r_max) {
    struct Visitor {
        double r_max;
        bool operator()(const ConstantReward& d) const { return d.value >= 0.0 && d.value <= r_max; }
        bool operator()(const UniformReward& d) const {
            return d.lo >= 0.0 && d.lo <= d.hi && d.hi <= r_max;
        }
        bool operator()(const ScaledBernoulliReward& d) const { return d.p >= 0.0 && d.p <= 1.0; }
    };
    return std::visit(Visitor{r_max}, dist);
}

/// Dense per-state values.
struct ValueFunction {
    std::vector<double> values;

    ValueFunction() = default;
    explicit ValueFunction(std::size_t n, double fill = 0.0) : values(n, fill) {}
    explicit ValueFunction(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const noexcept { return values.size(); }
    double& operator[](std::size_t s) { return values[s]; }
    double operator[](std::size_t s) const { return values[s]; }
    bool operator==(const ValueFunction&) const = default;
};

/// Deterministic state -> action map.
struct Policy {
    std::vector<std::size_t> actions;

    Policy() = default;
    explicit Policy(std::size_t n, std::size_t fill = 0) : actions(n, fill) {}
    explicit Policy(std::vector<std::size_t> a) : actions(std::move(a)) {}

    std::size_t size() const noexcept { return actions.size(); }
    std::size_t& operator[](std::size_t s) { return actions[s]; }
    std::size_t operator[](std::size_t s) const { return actions[s]; }
    bool operator==(const Policy&) const = default;
};

inline double sup_distance(const ValueFunction& a, const ValueFunction& b) {
    if (a.size() != b.size()) throw ConfigError("value functions have different lengths");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

/// Finite discounted MDP with known dynamics; the ground truth that the
/// simulator samples from.
///
/// Transitions are stored densely as P[(s * A + a) * S + s'].
class MdpModel {
public:
    static constexpr double kRowSumTolerance = 1e-12;

    MdpModel(std::size_t num_states, std::size_t num_actions, std::vector<double> transition,
             std::vector<RewardDist> rewards, double discount, double r_max)
        : num_states_(num_states),
          num_actions_(num_actions),
          transition_(std::move(transition)),
          rewards_(std::move(rewards)),
          discount_(discount),
          r_max_(r_max) {
        validate();
        mean_reward_.reserve(rewards_.size());
        for (const auto& dist : rewards_) mean_reward_.push_back(reward_mean(dist, r_max_));
    }

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }
    std::size_t num_pairs() const noexcept { return num_states_ * num_actions_; }
    double discount() const noexcept { return discount_; }
    double r_max() const noexcept { return r_max_; }

    double probability(std::size_t s, std::size_t a, std::size_t next) const {
        return transition_[pair_index(s, a) * num_states_ + next];
    }
    std::span<const double> row(std::size_t s, std::size_t a) const {
        return {transition_.data() + pair_index(s, a) * num_states_, num_states_};
    }
    double mean_reward(std::size_t s, std::size_t a) const { return mean_reward_[pair_index(s, a)]; }
    const RewardDist& reward_dist(std::size_t s, std::size_t a) const {
        return rewards_[pair_index(s, a)];
    }

    const std::vector<double>& transitions() const noexcept { return transition_; }
    const std::vector<RewardDist>& rewards() const noexcept { return rewards_; }

    std::size_t pair_index(std::size_t s, std::size_t a) const noexcept { return s * num_actions_ + a; }

    /// Free-form provenance, e.g. generator parameters. Not part of equality.
    std::map<std::string, std::string> metadata;

    bool operator==(const MdpModel& o) const {
        return num_states_ == o.num_states_ && num_actions_ == o.num_actions_ &&
               transition_ == o.transition_ && rewards_ == o.rewards_ && discount_ == o.discount_ &&
               r_max_ == o.r_max_;
    }

private:
    void validate() const {
        if (num_states_ == 0 || num_actions_ == 0)
            throw ModelError("model needs at least one state and one action");
        if (!(discount_ > 0.0 && discount_ < 1.0)) throw ModelError("discount must lie in (0, 1)");
        if (!(r_max_ > 0.0) || !std::isfinite(r_max_)) throw ModelError("r_max must be positive");
        if (transition_.size() != num_states_ * num_actions_ * num_states_)
            throw ModelError("transition tensor has wrong size");
        if (rewards_.size() != num_states_ * num_actions_)
            throw ModelError("reward table has wrong size");
        for (std::size_t pair = 0; pair < num_pairs(); ++pair) {
            double sum = 0.0;
            for (std::size_t next = 0; next < num_states_; ++next) {
                const double p = transition_[pair * num_states_ + next];
                if (!(p >= 0.0) || !std::isfinite(p))
                    throw ModelError("negative or non-finite transition probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > kRowSumTolerance)
                throw ModelError("transition row " + std::to_string(pair) + " does not sum to 1");
            if (!reward_support_within(rewards_[pair], r_max_))
                throw ModelError("reward distribution of pair " + std::to_string(pair) +
                                 " leaves [0, r_max]");
        }
    }

    std::size_t num_states_;
    std::size_t num_actions_;
    std::vector<double> transition_;
    std::vector<RewardDist> rewards_;
    std::vector<double> mean_reward_;
    double discount_;
    double r_max_;
};

} // namespace dsee
