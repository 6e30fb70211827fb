#pragma once

// Seeded simulation of a known model and random Garnet model generation.

#include "dsee/error.hpp"
#include "dsee/markov_chain.hpp"
#include "dsee/mdp.hpp"
#include "dsee/rng.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace dsee {

/// Inverse-CDF draw over a probability row with one uniform in [0, 1).
inline std::size_t sample_index(std::span<const double> row, double u) {
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (row[i] <= 0.0) continue;
        cumulative += row[i];
        last_positive = i;
        if (u < cumulative) return i;
    }
    // u landed in the rounding gap above the accumulated sum
    return last_positive;
}

inline double sample_reward(const RewardDist& dist, double r_max, double u) {
    struct Visitor {
        double r_max;
        double u;
        double operator()(const ConstantReward& d) const { return d.value; }
        double operator()(const UniformReward& d) const { return std::min(d.hi, d.lo + (d.hi - d.lo) * u); }
        double operator()(const ScaledBernoulliReward& d) const { return u < d.p ? r_max : 0.0; }
    };
    return std::visit(Visitor{r_max, u}, dist);
}

struct StepResult {
    double reward;
    std::size_t next_state;
};

/// One live trajectory through a model.
///
/// Every step consumes exactly two uniforms from the environment stream, the
/// first for the next state and the second for the reward.
class Environment {
public:
    Environment(MdpModel model, std::size_t start_state, std::uint64_t seed)
        : model_(std::move(model)), state_(start_state), rng_(seed) {
        if (start_state >= model_.num_states()) throw ConfigError("start state out of range");
    }

    StepResult step(std::size_t action) {
        if (action >= model_.num_actions()) throw ConfigError("action out of range");
        const double u_next = rng_.uniform01();
        const double u_reward = rng_.uniform01();
        const std::size_t next = sample_index(model_.row(state_, action), u_next);
        const double reward = sample_reward(model_.reward_dist(state_, action), model_.r_max(), u_reward);
        state_ = next;
        ++steps_;
        return {reward, next};
    }

    std::size_t state() const noexcept { return state_; }
    /// Total number of steps taken so far.
    std::uint64_t time() const noexcept { return steps_; }
    const MdpModel& model() const noexcept { return model_; }
    const Rng& rng() const noexcept { return rng_; }

    /// Moves the walk without consuming randomness (scenario construction).
    void teleport(std::size_t state) {
        if (state >= model_.num_states()) throw ConfigError("state out of range");
        state_ = state;
    }

private:
    MdpModel model_;
    std::size_t state_;
    Rng rng_;
    std::uint64_t steps_ = 0;
};

enum class RewardKind { constant, uniform, bernoulli_scaled };

inline std::string to_string(RewardKind kind) {
    switch (kind) {
    case RewardKind::constant: return "constant";
    case RewardKind::uniform: return "uniform";
    case RewardKind::bernoulli_scaled: return "bernoulli_scaled";
    }
    return "constant";
}

inline RewardKind parse_reward_kind(const std::string& name) {
    if (name == "constant") return RewardKind::constant;
    if (name == "uniform") return RewardKind::uniform;
    if (name == "bernoulli_scaled") return RewardKind::bernoulli_scaled;
    throw ConfigError("unknown reward kind '" + name + "'");
}

struct GarnetParams {
    std::size_t num_states = 4;
    std::size_t num_actions = 2;
    std::size_t branching = 2;
    double gamma = 0.9;
    double r_max = 1.0;
    std::uint64_t seed = 0;
    double smoothing = 0.01;
    RewardKind reward_kind = RewardKind::uniform;
    std::size_t max_retries = 100;
};

namespace detail {

/// Reward distribution with the requested kind and mean.
inline RewardDist make_reward(RewardKind kind, double mean, double r_max) {
    switch (kind) {
    case RewardKind::constant: return ConstantReward{mean};
    case RewardKind::uniform: {
        const double half = std::min(mean, r_max - mean);
        return UniformReward{std::max(0.0, mean - half), std::min(r_max, mean + half)};
    }
    case RewardKind::bernoulli_scaled: return ScaledBernoulliReward{mean / r_max};
    }
    return ConstantReward{mean};
}

inline MdpModel draw_garnet(const GarnetParams& p, Rng& rng) {
    const std::size_t n = p.num_states;
    std::vector<double> transition(n * p.num_actions * n, 0.0);
    std::vector<RewardDist> rewards;
    rewards.reserve(n * p.num_actions);
    std::vector<std::size_t> states(n);
    std::vector<double> cuts(p.branching + 1);
    for (std::size_t pair = 0; pair < n * p.num_actions; ++pair) {
        // support: partial Fisher-Yates over the states
        std::iota(states.begin(), states.end(), 0);
        for (std::size_t k = 0; k < p.branching; ++k) {
            const auto j = k + static_cast<std::size_t>(rng.uniform_index(n - k));
            std::swap(states[k], states[j]);
        }
        // flat Dirichlet masses as spacings of sorted uniforms
        cuts.front() = 0.0;
        cuts.back() = 1.0;
        for (std::size_t k = 1; k < p.branching; ++k) cuts[k] = rng.uniform01();
        std::sort(cuts.begin() + 1, cuts.end() - 1);
        double* row = transition.data() + pair * n;
        for (std::size_t k = 0; k < p.branching; ++k)
            row[states[k]] = (1.0 - p.smoothing) * (cuts[k + 1] - cuts[k]);
        for (std::size_t next = 0; next < n; ++next) row[next] += p.smoothing / static_cast<double>(n);
        const double sum = std::accumulate(row, row + n, 0.0);
        for (std::size_t next = 0; next < n; ++next) row[next] /= sum;

        rewards.push_back(make_reward(p.reward_kind, p.r_max * rng.uniform01(), p.r_max));
    }
    return MdpModel(n, p.num_actions, std::move(transition), std::move(rewards), p.gamma, p.r_max);
}

} // namespace detail

/// Random model with `branching` support points per row, mixed with the
/// uniform row at weight `smoothing`. Draws are repeated (same stream) until
/// the uniform-policy chain is ergodic.
inline MdpModel generate_garnet(const GarnetParams& p) {
    if (p.num_states == 0 || p.num_actions == 0) throw ConfigError("empty state or action space");
    if (p.branching < 1 || p.branching > p.num_states) throw ConfigError("branching must lie in [1, |S|]");
    if (!(p.smoothing >= 0.0 && p.smoothing < 1.0)) throw ConfigError("smoothing must lie in [0, 1)");
    Rng rng(p.seed);
    for (std::size_t attempt = 0; attempt <= p.max_retries; ++attempt) {
        MdpModel model = detail::draw_garnet(p, rng);
        try {
            (void)stationary_distribution(uniform_chain(model));
        } catch (const ErgodicityError&) {
            continue;
        }
        model.metadata = {
            {"generator", "garnet"},
            {"branching", std::to_string(p.branching)},
            {"seed", std::to_string(p.seed)},
            {"smoothing", format_double(p.smoothing)},
            {"reward_kind", to_string(p.reward_kind)},
            {"attempts", std::to_string(attempt + 1)},
            {"rng", std::string(Rng::algorithm)},
        };
        return model;
    }
    throw ErgodicityError("no ergodic model after " + std::to_string(p.max_retries) + " retries");
}

} // namespace dsee
