#pragma once

// Deterministic sequencing of exploration and exploitation: epoch schedule,
// gated uniform exploration, robust exploitation and regret accounting.

#include "dsee/dynamic_programming.hpp"
#include "dsee/error.hpp"
#include "dsee/estimation.hpp"
#include "dsee/markov_chain.hpp"
#include "dsee/mdp.hpp"
#include "dsee/rng.hpp"
#include "dsee/robust.hpp"
#include "dsee/sim_env.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

namespace dsee {

struct EpochParams {
    std::size_t index = 0; // 1-based
    double epsilon = 0.0;
    double delta = 0.0;
    double rho = 0.0;
    /// Visit threshold after scaling and ceiling.
    std::uint64_t threshold = 0;
    /// Unscaled, unceiled threshold.
    double threshold_real = 0.0;
    std::uint64_t beta = 0;
};

struct EpochSchedule {
    double eta = 2.0;
    double explore_scale = 1.0;
    std::vector<EpochParams> epochs;
};

/// eps_j = delta_j = eta^(-j/3), beta_j = ceil(eta^j), rho_j from eps_j and
/// U_j = ceil(explore_scale * threshold(rho_j, delta_j)).
inline EpochSchedule build_schedule(double eta, std::size_t num_epochs, std::size_t num_states,
                                    std::size_t num_actions, double gamma, double r_max,
                                    double explore_scale = 1.0) {
    if (!(eta > 1.0) || !std::isfinite(eta)) throw ConfigError("eta must be greater than 1");
    if (!(explore_scale > 0.0 && explore_scale <= 1.0)) throw ConfigError("explore_scale must lie in (0, 1]");
    EpochSchedule schedule{eta, explore_scale, {}};
    schedule.epochs.reserve(num_epochs);
    for (std::size_t j = 1; j <= num_epochs; ++j) {
        EpochParams e;
        e.index = j;
        e.epsilon = std::pow(eta, -static_cast<double>(j) / 3.0);
        e.delta = e.epsilon;
        e.rho = rho_for_epsilon(e.epsilon, gamma, r_max);
        e.threshold_real = visit_threshold_real(e.rho, e.delta, num_states, num_actions, r_max);
        const double scaled = explore_scale == 1.0 ? e.threshold_real : explore_scale * e.threshold_real;
        e.threshold = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(scaled)));
        const double beta = std::ceil(std::pow(eta, static_cast<double>(j)));
        if (!(beta < 9.0e18)) throw ConfigError("exploitation length overflows at epoch " + std::to_string(j));
        e.beta = static_cast<std::uint64_t>(beta);
        schedule.epochs.push_back(e);
    }
    return schedule;
}

enum class Phase { explore, exploit };

constexpr std::string_view to_string(Phase p) { return p == Phase::explore ? "explore" : "exploit"; }

/// One environment step as seen by the learner.
struct Event {
    std::uint64_t t = 0; // 1-based global step index
    std::size_t state = 0;
    std::size_t action = 0;
    double reward = 0.0;
    std::size_t next_state = 0;
    bool counted = false;
};

struct ExplorationState {
    /// Final state of the previous exploration epoch (s_0 before epoch 1).
    std::size_t s_end_prev;
    bool gate_open = false;
    EmpiricalModel em;
};

struct ExplorationOutcome {
    std::uint64_t steps = 0;
    /// Steps spent waiting for the walk to reach s_end_prev.
    std::uint64_t gate_closed_steps = 0;
};

inline constexpr std::uint64_t kDefaultStepCap = 100'000'000;

/// Uniform exploration until every pair has at least `threshold` counted
/// visits. Transitions are counted only once the walk has occupied
/// s_end_prev during this epoch.
inline ExplorationOutcome run_exploration_epoch(Environment& env, ExplorationState& state, std::uint64_t threshold,
                                                Rng& action_rng, std::uint64_t step_cap = kDefaultStepCap,
                                                std::vector<Event>* log = nullptr) {
    if (threshold < 1) throw ConfigError("visit threshold must be at least 1");
    const std::size_t na = env.model().num_actions();
    const std::size_t ns = env.model().num_states();
    std::size_t below = 0;
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a)
            if (state.em.count(s, a) < threshold) ++below;

    state.gate_open = false;
    ExplorationOutcome out;
    while (below > 0) {
        if (!state.gate_open && env.state() == state.s_end_prev) state.gate_open = true;
        if (out.steps >= step_cap)
            throw NonTerminationError("exploration exceeded the step cap of " + std::to_string(step_cap));
        const std::size_t s = env.state();
        const auto a = static_cast<std::size_t>(action_rng.uniform_index(na));
        const StepResult r = env.step(a);
        ++out.steps;
        if (state.gate_open) {
            state.em.record(s, a, r.reward, r.next_state);
            if (state.em.count(s, a) == threshold) --below;
        } else {
            ++out.gate_closed_steps;
        }
        if (log) log->push_back({env.time(), s, a, r.reward, r.next_state, state.gate_open});
    }
    state.s_end_prev = env.state();
    state.gate_open = false;
    return out;
}

/// Follows `policy` for exactly `beta` steps. Estimates are not touched.
inline std::vector<Event> run_exploitation_epoch(Environment& env, const Policy& policy, std::uint64_t beta) {
    if (policy.size() != env.model().num_states()) throw ConfigError("policy length does not match model");
    std::vector<Event> trajectory;
    trajectory.reserve(static_cast<std::size_t>(beta));
    for (std::uint64_t k = 0; k < beta; ++k) {
        const std::size_t s = env.state();
        const StepResult r = env.step(policy[s]);
        trajectory.push_back({env.time(), s, policy[s], r.reward, r.next_state, false});
    }
    return trajectory;
}

struct TraceRow {
    std::uint64_t t = 0;
    std::size_t epoch = 0;
    Phase phase = Phase::explore;
    double instantaneous = 0.0;
    double cumulative = 0.0;
};

/// Per-step regret with its running sum.
class RegretTrace {
public:
    void append(std::size_t epoch, Phase phase, double instantaneous, std::uint64_t count = 1) {
        for (std::uint64_t k = 0; k < count; ++k) {
            cumulative_ += instantaneous;
            rows_.push_back({rows_.size() + 1, epoch, phase, instantaneous, cumulative_});
        }
    }
    const std::vector<TraceRow>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    double cumulative() const noexcept { return cumulative_; }
    void reserve(std::size_t n) { rows_.reserve(n); }

private:
    std::vector<TraceRow> rows_;
    double cumulative_ = 0.0;
};

struct DseeConfig {
    std::uint64_t seed = 0;
    double tol = 1e-9;
    std::size_t start_state = 0;
    std::uint64_t step_cap = kDefaultStepCap;
    bool warm_start = true;
    /// Keep every environment step in DseeRun::events.
    bool record_events = false;
};

struct EpochRecord {
    EpochParams params;
    std::uint64_t exploration_steps = 0; // alpha_j, gate-closed steps included
    std::uint64_t gate_closed_steps = 0;
    std::uint64_t min_count = 0;
    std::size_t s_end = 0;
    EmpiricalModel estimates;
    Solution robust;
    ValueFunction policy_value; // V^{pi_j} on the true model
    double exploitation_regret = 0.0;
};

struct DseeRun {
    RegretTrace trace;
    std::vector<EpochRecord> epochs;
    ValueFunction v_star;
    Policy pi_star;
    ValueFunction v_uniform;
    double exploration_regret = 0.0; // ||V* - V^unif||
    /// Same run with exploration steps priced at R_max / (1 - gamma).
    double rmax_priced_cumulative = 0.0;
    std::vector<Event> events; // filled when DseeConfig::record_events is set
};

/// Substream seeds under the run seed.
inline constexpr std::uint64_t kEnvStream = 0;
inline constexpr std::uint64_t kActionStream = 1;

inline DseeRun run_dsee(const MdpModel& model, const EpochSchedule& schedule, const DseeConfig& config) {
    if (config.start_state >= model.num_states()) throw ConfigError("start state out of range");
    // exploration terminates only if the uniform-action chain is ergodic
    (void)stationary_distribution(uniform_chain(model));

    DseeRun run;
    const double gamma = model.discount();
    const double regret_max = model.r_max() / (1.0 - gamma);
    const Solution optimal = value_iteration(model, config.tol);
    run.pi_star = optimal.policy;
    // exact value of pi*, so that an exploitation policy equal to pi* is
    // priced at exactly zero
    run.v_star = policy_evaluation(model, run.pi_star, config.tol);
    run.v_uniform = uniform_policy_value(model, config.tol);
    run.exploration_regret = instantaneous_regret(run.v_star, run.v_uniform);

    Environment env(model, config.start_state, derive_seed(config.seed, kEnvStream));
    Rng action_rng(derive_seed(config.seed, kActionStream));
    ExplorationState state{config.start_state, false,
                           EmpiricalModel(model.num_states(), model.num_actions(), model.r_max())};
    ValueFunction warm;

    for (const EpochParams& params : schedule.epochs) {
        EpochRecord rec{params, 0, 0, 0, 0, state.em, {}, {}, 0.0};
        const auto outcome = run_exploration_epoch(env, state, params.threshold, action_rng, config.step_cap,
                                                   config.record_events ? &run.events : nullptr);
        rec.exploration_steps = outcome.steps;
        rec.gate_closed_steps = outcome.gate_closed_steps;
        rec.min_count = state.em.min_count();
        rec.s_end = state.s_end_prev;
        run.trace.append(params.index, Phase::explore, run.exploration_regret, outcome.steps);
        run.rmax_priced_cumulative += regret_max * static_cast<double>(outcome.steps);

        const auto spec = UncertaintySpec::from_estimates(state.em, params.rho);
        rec.robust = robust_value_iteration(spec, gamma, config.tol, config.warm_start ? warm : ValueFunction{});
        warm = rec.robust.values;
        rec.policy_value = policy_evaluation(model, rec.robust.policy, config.tol);
        rec.exploitation_regret = instantaneous_regret(run.v_star, rec.policy_value);
        rec.estimates = state.em;

        auto trajectory = run_exploitation_epoch(env, rec.robust.policy, params.beta);
        if (config.record_events) run.events.insert(run.events.end(), trajectory.begin(), trajectory.end());
        run.trace.append(params.index, Phase::exploit, rec.exploitation_regret, params.beta);
        run.rmax_priced_cumulative += rec.exploitation_regret * static_cast<double>(params.beta);
        run.epochs.push_back(std::move(rec));
    }
    return run;
}

// Exploration-budget diagnostics (visits of the lifted uniform chain).

struct DiagnosticParams {
    double kappa = 0.5;
    double global_delta = 0.1;
    double c_const = 1.0;
    double sigma = 0.125;
    std::size_t start_state = 0;
};

struct EpochBudget {
    std::size_t index = 0;
    double n_bar = 0.0;        // per-pair visit requirement (the schedule's U_j)
    double budget = 0.0;       // N_j = n_bar / ((1 - kappa) phi_min)
    std::uint64_t budget_steps = 0;
    double delta_alpha = 0.0;  // 6 delta / (|S||A| pi^2 j^2)
    double tail_bound = 0.0;   // c ||phi_0||_phi exp(-kappa^2 N_j phi_min / (72 tau))
};

struct BudgetDiagnostics {
    double phi_min = 0.0;
    std::size_t tau = 0;
    double phi0_norm = 0.0;
    std::vector<EpochBudget> epochs;
};

inline double delta_alpha(double global_delta, std::size_t num_states, std::size_t num_actions, std::size_t i) {
    const double id = static_cast<double>(i);
    return 6.0 * global_delta /
           (static_cast<double>(num_states * num_actions) * std::numbers::pi * std::numbers::pi * id * id);
}

inline double exploration_budget(double n_bar, double kappa, double phi_min) {
    return n_bar / ((1.0 - kappa) * phi_min);
}

inline BudgetDiagnostics epoch_budget_diagnostics(const MdpModel& model, const EpochSchedule& schedule,
                                                  const DiagnosticParams& p) {
    if (!(p.kappa > 0.0 && p.kappa < 1.0)) throw ConfigError("kappa must lie in (0, 1)");
    if (!(p.global_delta > 0.0 && p.global_delta < 1.0)) throw ConfigError("global delta must lie in (0, 1)");
    if (!(p.c_const > 0.0)) throw ConfigError("c must be positive");
    if (p.start_state >= model.num_states()) throw ConfigError("start state out of range");

    const Chain lifted = lifted_uniform_chain(model);
    const auto phi = stationary_distribution(lifted);
    BudgetDiagnostics out;
    out.phi_min = phi.min();
    out.tau = mixing_time(lifted, p.sigma);
    // point mass at s_0 spread uniformly over the actions
    const double na = static_cast<double>(model.num_actions());
    double norm2 = 0.0;
    for (std::size_t a = 0; a < model.num_actions(); ++a) {
        const double mass = 1.0 / na;
        norm2 += mass * mass / phi[model.pair_index(p.start_state, a)];
    }
    out.phi0_norm = std::sqrt(norm2);

    for (const EpochParams& e : schedule.epochs) {
        EpochBudget b;
        b.index = e.index;
        b.n_bar = static_cast<double>(e.threshold);
        b.budget = exploration_budget(b.n_bar, p.kappa, out.phi_min);
        b.budget_steps = static_cast<std::uint64_t>(std::ceil(b.budget));
        b.delta_alpha = delta_alpha(p.global_delta, model.num_states(), model.num_actions(), e.index);
        b.tail_bound = p.c_const * out.phi0_norm *
                       std::exp(-p.kappa * p.kappa * b.budget * out.phi_min / (72.0 * static_cast<double>(out.tau)));
        out.epochs.push_back(b);
    }
    return out;
}

} // namespace dsee
