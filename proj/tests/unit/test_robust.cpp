#include "dsee/dynamic_programming.hpp"
#include "dsee/robust.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace dsee;
using dsee::testing::grid_worst_value;
using dsee::testing::lp_worst_value;
using dsee::testing::random_model;

namespace {

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
    std::vector<double> p(n);
    double sum = 0.0;
    for (double& x : p) sum += x = -std::log(1.0 - rng.uniform01());
    for (double& x : p) x /= sum;
    return p;
}

ValueFunction random_values(Rng& rng, std::size_t n, double scale = 10.0) {
    ValueFunction v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = scale * rng.uniform01();
    return v;
}

double l1(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

/// Backup whose inner transition min is the grid oracle.
ValueFunction grid_backup(const UncertaintySpec& spec, const ValueFunction& v, double gamma) {
    ValueFunction out(spec.num_states);
    for (std::size_t s = 0; s < spec.num_states; ++s) {
        double best = -1e300;
        for (std::size_t a = 0; a < spec.num_actions; ++a) {
            const auto row = spec.row(s, a);
            const double worst_r = std::min(spec.reward(s, a) - spec.rho, spec.reward(s, a) + spec.rho);
            best = std::max(best, worst_r + gamma * grid_worst_value({row.begin(), row.end()}, v.values, spec.rho));
        }
        out[s] = best;
    }
    return out;
}

UncertaintySpec spec_from(const MdpModel& m, double rho) { return UncertaintySpec::from_model(m, rho); }

} // namespace

TEST(WorstCaseReward, Examples) {
    EXPECT_DOUBLE_EQ(worst_case_reward(0.5, 0.2), 0.3);
    EXPECT_EQ(worst_case_reward(0.5, 0.0), 0.5);
    EXPECT_DOUBLE_EQ(worst_case_reward(0.1, 0.3), -0.2);
    static_assert(worst_case_reward(1.0, 0.25) == 0.75);
}

TEST(WorstCaseTransition, TwoStateExample) {
    const std::vector<double> p{0.5, 0.5};
    const auto w = worst_case_transition(p, ValueFunction(std::vector<double>{0.0, 1.0}), 0.4);
    EXPECT_NEAR(w.value, 0.3, 1e-15);
    EXPECT_NEAR(w.row[0], 0.7, 1e-15);
    EXPECT_NEAR(w.row[1], 0.3, 1e-15);
    EXPECT_NEAR(grid_worst_value(p, {0.0, 1.0}, 0.4), 0.3, 1e-3);
}

TEST(WorstCaseTransition, ZeroRadiusIsNominal) {
    const std::vector<double> p{0.2, 0.3, 0.5};
    const ValueFunction v(std::vector<double>{3.0, 1.0, 2.0});
    const auto w = worst_case_transition(p, v, 0.0);
    EXPECT_EQ(w.row, p);
    EXPECT_DOUBLE_EQ(w.value, 0.2 * 3 + 0.3 * 1 + 0.5 * 2);
}

TEST(WorstCaseTransition, LargeRadiusPutsAllMassOnArgmin) {
    const std::vector<double> p{0.2, 0.3, 0.5};
    const ValueFunction v(std::vector<double>{3.0, 1.0, 2.0});
    for (double rho : {2.0, 2.5, 100.0}) {
        const auto w = worst_case_transition(p, v, rho);
        EXPECT_EQ(w.row, (std::vector<double>{0.0, 1.0, 0.0}));
        EXPECT_EQ(w.value, 1.0);
    }
}

TEST(WorstCaseTransition, TiesGoToLowerIndex) {
    const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
    const ValueFunction v(std::vector<double>{1.0, 0.0, 0.0, 1.0});
    const auto w = worst_case_transition(p, v, 0.2);
    EXPECT_NEAR(w.row[1], 0.35, 1e-15);
    EXPECT_EQ(w.row[2], 0.25);
    EXPECT_NEAR(w.row[0], 0.15, 1e-15);
    EXPECT_EQ(w.row[3], 0.25);
}

TEST(WorstCaseTransition, FeasibleAndOptimalAgainstRandomFeasiblePoints) {
    Rng rng(31337);
    for (int instance = 0; instance < 50; ++instance) {
        const std::size_t n = 2 + rng.uniform_index(5);
        const auto p = random_simplex(rng, n);
        const auto v = random_values(rng, n);
        const double rho = 2.2 * rng.uniform01();
        const auto w = worst_case_transition(p, v, rho);
        double sum = 0.0;
        for (double x : w.row) {
            EXPECT_GE(x, 0.0);
            sum += x;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        EXPECT_LE(l1(w.row, p), rho + 1e-12);
        EXPECT_NEAR(w.value, expected_value(w.row, v), 1e-12);
        for (int k = 0; k < 1000; ++k) {
            // random point of the simplex pulled into the ball by mixing with p
            const auto q = random_simplex(rng, n);
            const double dist = l1(q, p);
            const double lam = dist > rho ? rho / dist * rng.uniform01() : rng.uniform01();
            std::vector<double> f(n);
            for (std::size_t i = 0; i < n; ++i) f[i] = (1 - lam) * p[i] + lam * q[i];
            ASSERT_LE(w.value, expected_value(f, v) + 1e-9);
        }
    }
}

TEST(WorstCaseTransition, MatchesLinearProgramOracle) {
    Rng rng(4242);
    for (int instance = 0; instance < 100; ++instance) {
        const std::size_t n = 2 + rng.uniform_index(3);
        const auto p = random_simplex(rng, n);
        const auto v = random_values(rng, n, 5.0);
        const double rho = 0.6 * rng.uniform01();
        EXPECT_NEAR(worst_case_transition(p, v, rho).value, lp_worst_value(p, v.values, rho), 1e-9);
    }
}

TEST(RobustBackup, ZeroValuesLeaveOnlyRewardTerm) {
    const auto m = random_model(3, 3, 2, 0.9);
    const auto spec = spec_from(m, 0.05);
    const auto [v, pi] = robust_backup(spec, ValueFunction(3), 0.9);
    for (std::size_t s = 0; s < 3; ++s)
        EXPECT_DOUBLE_EQ(v[s], std::max(spec.reward(s, 0), spec.reward(s, 1)) - 0.05);
}

TEST(RobustBackup, ZeroRadiusIsNominalBackup) {
    const auto m = random_model(4, 4, 3, 0.9);
    Rng rng(1);
    const auto v = random_values(rng, 4);
    const auto [robust, robust_pi] = robust_backup(spec_from(m, 0.0), v, 0.9);
    const auto [nominal, nominal_pi] = bellman_backup(m, v);
    EXPECT_LE(sup_distance(robust, nominal), 1e-12);
    EXPECT_EQ(robust_pi, nominal_pi);
}

TEST(RobustBackup, MatchesGridOracle) {
    for (std::uint64_t seed : {10u, 11u, 12u}) {
        const auto m = random_model(seed, 2, 2, 0.9);
        const auto spec = spec_from(m, 0.1);
        Rng rng(seed);
        const auto v = random_values(rng, 2);
        const auto nominal = robust_backup(spec, v, 0.9).first;
        const auto oracle = grid_backup(spec, v, 0.9);
        EXPECT_LE(sup_distance(nominal, oracle), 1e-3);
    }
}

TEST(RobustValueIteration, ZeroRadiusMatchesValueIteration) {
    const double tol = 1e-9;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = random_model(seed, 4, 2, 0.9);
        const auto robust = robust_value_iteration(spec_from(m, 0.0), 0.9, tol);
        const auto exact = value_iteration(m, tol);
        EXPECT_LE(sup_distance(robust.values, exact.values), 2 * tol);
        EXPECT_EQ(robust.policy, exact.policy);
    }
}

TEST(RobustValueIteration, ConstantRewardsGiveClosedForm) {
    const auto base = random_model(5, 3, 2, 0.8);
    UncertaintySpec spec = spec_from(base, 0.07);
    for (double& r : spec.r_hat) r = 0.4;
    const auto sol = robust_value_iteration(spec, 0.8, 1e-10);
    for (double x : sol.values.values) EXPECT_NEAR(x, (0.4 - 0.07) / 0.2, 1e-9);
}

TEST(RobustValueIteration, MatchesGridOracleFixedPoint) {
    const auto m = random_model(7, 3, 2, 0.9);
    const auto spec = spec_from(m, 0.05);
    const double tol = 1e-6;
    const auto sol = robust_value_iteration(spec, 0.9, tol);
    ValueFunction v(3);
    for (int it = 0; it < 1000; ++it) {
        const auto next = grid_backup(spec, v, 0.9);
        const double diff = sup_distance(next, v);
        v = next;
        if (diff <= tol * 0.1) break;
    }
    EXPECT_LE(sup_distance(sol.values, v), 1e-3);
}

TEST(RobustValueIteration, ResidualAndGreedyPolicy) {
    const auto m = random_model(8, 5, 3, 0.95);
    const auto spec = spec_from(m, 0.02);
    const double tol = 1e-7;
    const auto sol = robust_value_iteration(spec, 0.95, tol);
    const auto [next, greedy] = robust_backup(spec, sol.values, 0.95);
    EXPECT_LE(sup_distance(next, sol.values), tol);
    EXPECT_EQ(greedy, sol.policy);
    EXPECT_THROW(robust_value_iteration(spec, 0.95, 0.0), ConfigError);
}

TEST(RobustValueIteration, WarmStartReachesSameFixedPoint) {
    const auto m = random_model(9, 4, 2, 0.9);
    const auto spec = spec_from(m, 0.03);
    const double tol = 1e-9;
    const auto cold = robust_value_iteration(spec, 0.9, tol);
    const auto warm = robust_value_iteration(spec, 0.9, tol, ValueFunction(4, 7.5));
    EXPECT_LE(sup_distance(cold.values, warm.values), 2 * tol);
}

TEST(RobustProperties, MonotoneInRadius) {
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        const auto m = random_model(seed, 4, 2, 0.9);
        ValueFunction prev;
        for (int k = 0; k <= 50; ++k) {
            const double rho = 0.01 * k;
            const auto v = robust_value_iteration(spec_from(m, rho), 0.9, 1e-9).values;
            if (k > 0) {
                for (std::size_t s = 0; s < 4; ++s) ASSERT_LE(v[s], prev[s] + 2e-9) << seed << " " << rho;
            }
            prev = v;
        }
    }
}

TEST(RobustProperties, SuccessiveIteratesContract) {
    const auto m = random_model(200, 5, 3, 0.9);
    const auto spec = spec_from(m, 0.1);
    Rng rng(3);
    ValueFunction prev = random_values(rng, 5, 20.0);
    ValueFunction cur = robust_backup(spec, prev, 0.9).first;
    for (int it = 0; it < 100; ++it) {
        const ValueFunction next = robust_backup(spec, cur, 0.9).first;
        EXPECT_LE(sup_distance(next, cur), 0.9 * sup_distance(cur, prev) + 1e-12);
        prev = cur;
        cur = next;
    }
}

TEST(RobustProperties, BackupIsContractionOnRandomPairs) {
    const auto m = random_model(201, 4, 3, 0.85);
    const auto spec = spec_from(m, 0.2);
    Rng rng(4);
    for (int k = 0; k < 100; ++k) {
        const auto v = random_values(rng, 4, 20.0), w = random_values(rng, 4, 20.0);
        EXPECT_LE(sup_distance(robust_backup(spec, v, 0.85).first, robust_backup(spec, w, 0.85).first),
                  0.85 * sup_distance(v, w) + 1e-12);
    }
}

TEST(RobustProperties, LossBoundWhenTruthInsideSets) {
    Rng rng(555);
    for (std::uint64_t seed = 300; seed < 320; ++seed) {
        const auto m = random_model(seed, 4, 2, 0.9);
        const double rho = 0.002 + 0.05 * rng.uniform01();
        UncertaintySpec spec = spec_from(m, rho);
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t a = 0; a < 2; ++a) {
                const std::size_t pa = s * 2 + a;
                spec.r_hat[pa] = std::clamp(spec.r_hat[pa] + rho * (2 * rng.uniform01() - 1), 0.0, 1.0);
                // mixing with weight rho/2 moves the row by at most rho in L1
                const auto q = random_simplex(rng, 4);
                for (std::size_t t = 0; t < 4; ++t) {
                    double& x = spec.p_hat[pa * 4 + t];
                    x = (1 - rho / 2) * x + rho / 2 * q[t];
                }
                double sum = 0.0;
                for (std::size_t t = 0; t < 4; ++t) sum += spec.p_hat[pa * 4 + t];
                for (std::size_t t = 0; t < 4; ++t) spec.p_hat[pa * 4 + t] /= sum;
                ASSERT_LE(l1(spec.row(s, a), m.row(s, a)), rho);
            }
        const auto sol = robust_value_iteration(spec, 0.9, 1e-10);
        const auto v_star = value_iteration(m, 1e-10).values;
        const auto v_pi = policy_evaluation(m, sol.policy, 1e-10);
        EXPECT_LE(instantaneous_regret(v_star, v_pi), robust_loss_bound(rho, 0.9, 1.0));
    }
}

TEST(UncertaintySpec, FromEstimatesRequiresVisits) {
    EmpiricalModel em(2, 1, 1.0);
    em.record(0, 0, 0.2, 1);
    EXPECT_THROW(UncertaintySpec::from_estimates(em, 0.1), UnvisitedPairError);
    em.record(1, 0, 0.6, 0);
    const auto spec = UncertaintySpec::from_estimates(em, 0.1);
    EXPECT_EQ(spec.reward(1, 0), 0.6);
    EXPECT_EQ(spec.row(0, 0)[1], 1.0);
}
