#pragma once
// oracle.hpp - exact value iteration with the true dynamics, plus BFS step distances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cin/gridworld.hpp"
#include "cin/hyperparams.hpp"

namespace cin {

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

struct OracleSolution {
    State goal;
    Grid<double> v_star;
    std::vector<double> q_star;  // m*m*|A|, state-major
    Grid<int> policy;            // action index; -1 where unreachable or non-traversable
    Grid<int> dist;              // steps to goal; kUnreachable when no path exists
    std::vector<double> sweep_deltas;  // max-norm change of V per sweep

    double q(State s, Action a) const
    {
        return q_star[(static_cast<std::size_t>(s.row) * v_star.size() + s.col) * kNumActions + index(a)];
    }
    bool reachable(State s) const { return dist[s] != kUnreachable; }
};

/// Reverse breadth-first search from the goal over successful one-step moves.
inline Grid<int> bfs_distances(const WorldMap& map, State goal)
{
    if (!map.traversable(goal)) throw std::invalid_argument("bfs_distances: goal is not traversable");
    const int m = map.size();
    Grid<int> dist(m, kUnreachable);
    std::deque<State> frontier{goal};
    dist[goal] = 0;
    while (!frontier.empty()) {
        const State t = frontier.front();
        frontier.pop_front();
        for (Action a : kAllActions) {
            const Offset o = offset(a);
            const State p{t.row - o.dr, t.col - o.dc};
            if (!map.traversable(p) || dist[p] != kUnreachable) continue;
            if (!map.can_move(p, t)) continue;
            dist[p] = dist[t] + 1;
            frontier.push_back(p);
        }
    }
    return dist;
}

/// Classical synchronous value iteration. The goal is absorbing with V(goal) held at r_p.
/// Q(s, a) = gamma * V(step(s, a)) + R(s); non-traversable cells keep V = R.
inline OracleSolution solve_exact(const WorldMap& map, State goal, const HyperParams& hp)
{
    hp.validate();
    if (!map.traversable(goal)) throw std::invalid_argument("solve_exact: goal is not traversable");
    const int m = map.size();
    const std::size_t n = static_cast<std::size_t>(m) * m;

    std::vector<int> next(n * kNumActions, -1);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            if (!map.traversable({r, c})) continue;
            for (Action a : kAllActions) {
                const State t = step(map, {r, c}, a);
                next[(static_cast<std::size_t>(r) * m + c) * kNumActions + index(a)] = t.row * m + t.col;
            }
        }

    OracleSolution sol;
    sol.goal = goal;
    sol.q_star.assign(n * kNumActions, 0.0);
    std::vector<double> v(n, 0.0), v_next(n, 0.0);
    const std::size_t g = static_cast<std::size_t>(goal.row) * m + goal.col;
    const int cap = 10 * m * m;
    for (int it = 0; it < cap; ++it) {
        for (std::size_t s = 0; s < n; ++s) {
            const double reward = s == g ? hp.r_p : hp.r_n;
            if (next[s * kNumActions] < 0) {
                for (int a = 0; a < kNumActions; ++a) sol.q_star[s * kNumActions + a] = reward;
                v_next[s] = reward;
                continue;
            }
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < kNumActions; ++a) {
                const double q = hp.gamma * v[static_cast<std::size_t>(next[s * kNumActions + a])] + reward;
                sol.q_star[s * kNumActions + a] = q;
                if (q > best) best = q;
            }
            v_next[s] = best;
        }
        v_next[g] = hp.r_p;
        double delta = 0.0;
        for (std::size_t s = 0; s < n; ++s) delta = std::max(delta, std::abs(v_next[s] - v[s]));
        v.swap(v_next);
        sol.sweep_deltas.push_back(delta);
        if (delta < 1e-9) break;
    }

    sol.v_star = Grid<double>(m, 0.0);
    sol.v_star.values() = v;
    sol.dist = bfs_distances(map, goal);
    sol.policy = Grid<int>(m, -1);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            if (!map.traversable({r, c}) || sol.dist(r, c) == kUnreachable) continue;
            const double* q = &sol.q_star[(static_cast<std::size_t>(r) * m + c) * kNumActions];
            int best = 0;
            for (int a = 1; a < kNumActions; ++a)
                if (q[a] > q[best]) best = a;
            sol.policy(r, c) = best;
        }
    return sol;
}

/// Oracle greedy action, lowest action index on ties.
inline Action expert_action(const OracleSolution& sol, State s)
{
    if (!sol.dist.size() || s.row < 0 || s.col < 0 || s.row >= sol.dist.size() || s.col >= sol.dist.size())
        throw std::out_of_range("expert_action: state out of bounds");
    if (sol.policy[s] < 0) throw std::invalid_argument("expert_action: state cannot reach the goal");
    return action_from_index(sol.policy[s]);
}

/// Bitmask of actions whose oracle Q-value ties the best one.
inline std::uint8_t optimal_actions(const OracleSolution& sol, State s)
{
    double best = -std::numeric_limits<double>::infinity();
    for (Action a : kAllActions) best = std::max(best, sol.q(s, a));
    const double tol = 1e-9 * std::max(1.0, std::abs(best));
    std::uint8_t mask = 0;
    for (Action a : kAllActions)
        if (sol.q(s, a) >= best - tol) mask = static_cast<std::uint8_t>(mask | (1u << index(a)));
    return mask;
}

}  // namespace cin
