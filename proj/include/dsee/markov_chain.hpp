#pragma once

// Stationary distributions, mixing times and the chains induced by uniform
// action selection.

#include "dsee/error.hpp"
#include "dsee/mdp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <queue>
#include <vector>

namespace dsee {

using Chain = Eigen::MatrixXd;

struct StationaryDistribution {
    std::vector<double> probs;

    std::size_t size() const noexcept { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
    double min() const {
        double m = probs.empty() ? 0.0 : probs.front();
        for (double p : probs) m = std::min(m, p);
        return m;
    }
};

inline constexpr std::size_t kMaxMixingSteps = 1'000'000;
inline constexpr double kStochasticTolerance = 1e-10;

namespace detail {

inline void check_row_stochastic(const Chain& chain) {
    if (chain.rows() == 0 || chain.rows() != chain.cols()) throw ConfigError("chain must be a non-empty square matrix");
    for (Eigen::Index i = 0; i < chain.rows(); ++i) {
        if ((chain.row(i).array() < 0.0).any() || !chain.row(i).allFinite())
            throw ModelError("chain has negative or non-finite entries");
        if (std::abs(chain.row(i).sum() - 1.0) > kStochasticTolerance)
            throw ModelError("chain row " + std::to_string(i) + " does not sum to 1");
    }
}

/// BFS distances over the positive-entry graph, forward or reversed.
inline std::vector<long> bfs_levels(const Chain& chain, bool reversed) {
    const auto n = chain.rows();
    std::vector<long> level(static_cast<std::size_t>(n), -1);
    std::queue<Eigen::Index> frontier;
    level[0] = 0;
    frontier.push(0);
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop();
        for (Eigen::Index v = 0; v < n; ++v) {
            const double w = reversed ? chain(v, u) : chain(u, v);
            if (w > 0.0 && level[static_cast<std::size_t>(v)] < 0) {
                level[static_cast<std::size_t>(v)] = level[static_cast<std::size_t>(u)] + 1;
                frontier.push(v);
            }
        }
    }
    return level;
}

/// Irreducibility (strong connectivity) and aperiodicity (period 1) of the
/// support graph. Throws ErgodicityError otherwise.
inline void check_ergodic_support(const Chain& chain) {
    const auto forward = bfs_levels(chain, false);
    const auto backward = bfs_levels(chain, true);
    for (std::size_t i = 0; i < forward.size(); ++i) {
        if (forward[i] < 0 || backward[i] < 0)
            throw ErgodicityError("chain is reducible: state " + std::to_string(i) +
                                  " is not mutually reachable with state 0");
    }
    // period = gcd over edges u->v of level(u) + 1 - level(v)
    long period = 0;
    const auto n = chain.rows();
    for (Eigen::Index u = 0; u < n && period != 1; ++u)
        for (Eigen::Index v = 0; v < n; ++v)
            if (chain(u, v) > 0.0)
                period = std::gcd(period, std::abs(forward[static_cast<std::size_t>(u)] + 1 -
                                                   forward[static_cast<std::size_t>(v)]));
    if (period != 1) throw ErgodicityError("chain is periodic with period " + std::to_string(period));
}

} // namespace detail

/// Unique stationary distribution of an ergodic row-stochastic matrix.
///
/// Ergodicity is established on the support graph; the distribution itself
/// comes from the linear system phi^T (P - I) = 0, sum(phi) = 1, followed by
/// power-step polishing until ||phi^T P - phi^T||_1 <= 1e-12.
inline StationaryDistribution stationary_distribution(const Chain& chain) {
    detail::check_row_stochastic(chain);
    detail::check_ergodic_support(chain);
    const auto n = chain.rows();
    Eigen::MatrixXd system = chain.transpose() - Eigen::MatrixXd::Identity(n, n);
    system.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::RowVectorXd phi = system.fullPivLu().solve(rhs).transpose();
    for (int polish = 0; polish < 64; ++polish) {
        phi = phi.cwiseMax(0.0);
        phi /= phi.sum();
        const Eigen::RowVectorXd next = phi * chain;
        const double residual = (next - phi).lpNorm<1>();
        if (residual <= 1e-12) break;
        phi = next;
    }
    StationaryDistribution out{std::vector<double>(phi.data(), phi.data() + n)};
    if (out.min() <= 0.0) throw ErgodicityError("stationary distribution is not strictly positive");
    return out;
}

/// Largest total-variation distance between a row of P^t and phi.
inline double tv_to_stationary(const Eigen::MatrixXd& power, const StationaryDistribution& phi) {
    const Eigen::Map<const Eigen::RowVectorXd> target(phi.probs.data(), static_cast<Eigen::Index>(phi.size()));
    double worst = 0.0;
    for (Eigen::Index i = 0; i < power.rows(); ++i)
        worst = std::max(worst, 0.5 * (power.row(i) - target).lpNorm<1>());
    return worst;
}

/// Smallest t >= 1 with max_i TV(P^t(i, .), phi) <= sigma, by direct powering.
inline std::size_t mixing_time(const Chain& chain, double sigma, std::size_t max_steps = kMaxMixingSteps) {
    if (!(sigma > 0.0 && sigma <= 0.125)) throw ConfigError("sigma must lie in (0, 1/8]");
    const auto phi = stationary_distribution(chain);
    Eigen::MatrixXd power = chain;
    for (std::size_t t = 1; t <= max_steps; ++t) {
        if (tv_to_stationary(power, phi) <= sigma) return t;
        power = power * chain;
    }
    throw NonTerminationError("chain did not mix within " + std::to_string(max_steps) + " steps");
}

/// State chain under uniform action selection: rows (1/|A|) sum_a P(.|s,a).
inline Chain uniform_chain(const MdpModel& model) {
    const auto n = static_cast<Eigen::Index>(model.num_states());
    const double w = 1.0 / static_cast<double>(model.num_actions());
    Chain chain = Chain::Zero(n, n);
    for (std::size_t s = 0; s < model.num_states(); ++s)
        for (std::size_t a = 0; a < model.num_actions(); ++a) {
            const auto row = model.row(s, a);
            for (std::size_t next = 0; next < row.size(); ++next)
                chain(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(next)) += w * row[next];
        }
    return chain;
}

/// Chain on state-action pairs (index s * |A| + a): from (s, a) move to
/// (s', a') with probability P(s'|s,a) / |A|.
inline Chain lifted_uniform_chain(const MdpModel& model) {
    const std::size_t na = model.num_actions();
    const auto m = static_cast<Eigen::Index>(model.num_pairs());
    const double w = 1.0 / static_cast<double>(na);
    Chain chain = Chain::Zero(m, m);
    for (std::size_t s = 0; s < model.num_states(); ++s)
        for (std::size_t a = 0; a < na; ++a) {
            const auto row = model.row(s, a);
            const auto from = static_cast<Eigen::Index>(model.pair_index(s, a));
            for (std::size_t next = 0; next < row.size(); ++next)
                for (std::size_t b = 0; b < na; ++b)
                    chain(from, static_cast<Eigen::Index>(model.pair_index(next, b))) = w * row[next];
        }
    return chain;
}

} // namespace dsee
