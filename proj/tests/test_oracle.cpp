#include <gtest/gtest.h>

#include <cmath>

#include "cin/oracle.hpp"
#include "test_util.hpp"

using namespace cin;

namespace {

// Value of a state d steps from the goal: d penalties then the goal reward, discounted.
double closed_form_value(int d, const HyperParams& hp)
{
    double v = hp.r_p;
    for (int i = 0; i < d; ++i) v = hp.r_n + hp.gamma * v;
    return v;
}

// 8-connected BFS with the same blocked-move rule, kept separate from the library.
std::vector<int> brute_distances(const WorldMap& map, State goal)
{
    const int m = map.size();
    std::vector<int> d(static_cast<std::size_t>(m) * m, -1);
    d[static_cast<std::size_t>(goal.row) * m + goal.col] = 0;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) {
                if (!map.traversable({r, c})) continue;
                for (Action a : kAllActions) {
                    const State t = step(map, {r, c}, a);
                    const int dt = d[static_cast<std::size_t>(t.row) * m + t.col];
                    int& ds = d[static_cast<std::size_t>(r) * m + c];
                    if (dt >= 0 && (ds < 0 || dt + 1 < ds)) {
                        ds = dt + 1;
                        changed = true;
                    }
                }
            }
    }
    return d;
}

}  // namespace

TEST(Oracle, NeighbourOfGoalIsWorthPenaltyPlusDiscountedGoal)
{
    const HyperParams hp;
    const OracleSolution sol = solve_exact(test::open_map(3), {1, 1}, hp);
    EXPECT_NEAR(sol.v_star(0, 0), 9.4, 1e-12);
    EXPECT_EQ(sol.v_star(1, 1), 10.0);
    EXPECT_EQ(action_from_index(sol.policy(0, 0)), Action::SE);
}

TEST(Oracle, ValuesMatchClosedFormOfDistance)
{
    const HyperParams hp;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const WorldMap map = generate_maze(15, seed);
        const State goal = test::first_free(map);
        const OracleSolution sol = solve_exact(map, goal, hp);
        const auto d = brute_distances(map, goal);
        for (const State s : traversable_states(map)) {
            const int ds = d[static_cast<std::size_t>(s.row) * 15 + s.col];
            ASSERT_GE(ds, 0);
            EXPECT_EQ(sol.dist[s], ds);
            EXPECT_NEAR(sol.v_star[s], closed_form_value(ds, hp), 1e-6);
        }
    }
}

TEST(Oracle, TerrainDistancesMatchBruteForce)
{
    const HyperParams hp;
    const WorldMap map = generate_terrain(12, 0.5, 4);
    const State goal{5, 5};
    const OracleSolution sol = solve_exact(map, goal, hp);
    const auto d = brute_distances(map, goal);
    for (int r = 0; r < 12; ++r)
        for (int c = 0; c < 12; ++c) {
            const int ds = d[static_cast<std::size_t>(r) * 12 + c];
            EXPECT_EQ(sol.reachable({r, c}), ds >= 0);
            if (ds >= 0) {
                EXPECT_EQ(sol.dist(r, c), ds);
            }
        }
}

TEST(Oracle, ContractionPerSweep)
{
    const HyperParams hp;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const WorldMap map = generate_maze(15, seed);
        const OracleSolution sol = solve_exact(map, test::first_free(map), hp);
        ASSERT_GE(sol.sweep_deltas.size(), 2u);
        for (std::size_t k = 1; k < sol.sweep_deltas.size(); ++k)
            EXPECT_LE(sol.sweep_deltas[k], hp.gamma * sol.sweep_deltas[k - 1] + 1e-12);
    }
}

TEST(Oracle, ExpertStepsAlongShortestPath)
{
    const HyperParams hp;
    const WorldMap map = generate_maze(15, 11);
    const State goal = traversable_states(map).back();
    const OracleSolution sol = solve_exact(map, goal, hp);
    for (const State s : traversable_states(map)) {
        if (s == goal) continue;
        const State t = step(map, s, expert_action(sol, s));
        EXPECT_EQ(sol.dist[t], sol.dist[s] - 1);
    }
}

TEST(Oracle, TiesBreakToLowestIndex)
{
    const HyperParams hp;
    // From (2,0) the goal at (0,0) is two moves away via N or NE first.
    const OracleSolution sol = solve_exact(test::open_map(3), {0, 0}, hp);
    EXPECT_EQ(action_from_index(sol.policy(2, 0)), Action::N);
}

TEST(Oracle, OptimalActionSetHoldsEveryTie)
{
    const OracleSolution sol = solve_exact(test::open_map(3), {0, 0}, HyperParams{});
    EXPECT_EQ(optimal_actions(sol, {2, 0}), (1u << index(Action::N)) | (1u << index(Action::NE)));
    EXPECT_EQ(optimal_actions(sol, {1, 1}), 1u << index(Action::NW));
}

TEST(Oracle, UnreachableStatesHaveNoExpert)
{
    const HyperParams hp;
    // Column 1 walls the left column off from the right one.
    const WorldMap map = test::with_obstacles(3, {{0, 1}, {1, 1}, {2, 1}});
    const OracleSolution sol = solve_exact(map, {0, 0}, hp);
    EXPECT_FALSE(sol.reachable({0, 2}));
    EXPECT_EQ(sol.policy(0, 2), -1);
    EXPECT_THROW(expert_action(sol, {0, 2}), std::invalid_argument);
    EXPECT_THROW(expert_action(sol, {5, 5}), std::out_of_range);
    EXPECT_TRUE(sol.reachable({2, 0}));
}

TEST(Oracle, RejectsBlockedGoal)
{
    const WorldMap map = test::with_obstacles(3, {{1, 1}});
    EXPECT_THROW(solve_exact(map, {1, 1}, HyperParams{}), std::invalid_argument);
}
