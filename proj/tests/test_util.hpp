#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "cin/cin.hpp"

namespace cin::test {

inline WorldMap open_map(int m)
{
    return WorldMap(MapKind::Occupancy2D, m, std::vector<double>(static_cast<std::size_t>(m) * m, 1.0));
}

inline WorldMap with_obstacles(int m, std::initializer_list<State> walls)
{
    std::vector<double> cells(static_cast<std::size_t>(m) * m, 1.0);
    for (State s : walls) cells[static_cast<std::size_t>(s.row) * m + s.col] = 0.0;
    return WorldMap(MapKind::Occupancy2D, m, std::move(cells));
}

/// 4-neighbour flood fill over free cells, written independently of the library's BFS.
inline int flood_fill_count(const WorldMap& map, State from)
{
    const int m = map.size();
    std::vector<char> seen(static_cast<std::size_t>(m) * m, 0);
    std::deque<State> q{from};
    seen[static_cast<std::size_t>(from.row) * m + from.col] = 1;
    int count = 0;
    while (!q.empty()) {
        const State s = q.front();
        q.pop_front();
        ++count;
        const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const int r = s.row + dr[k], c = s.col + dc[k];
            if (r < 0 || c < 0 || r >= m || c >= m || map.at(r, c) != 1.0) continue;
            auto& f = seen[static_cast<std::size_t>(r) * m + c];
            if (!f) {
                f = 1;
                q.push_back({r, c});
            }
        }
    }
    return count;
}

inline State first_free(const WorldMap& map) { return traversable_states(map).front(); }

/// Mean cross-entropy over every reachable state, recomputed from scratch.
inline double e2e_loss(const WorldMap& map, const CapabilityNet& net, State goal, const std::vector<State>& states,
                       const std::vector<Action>& experts, const HyperParams& hp)
{
    const Tape t = forward_with_tape(map, net, goal, states, hp);
    double loss = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i)
        loss -= std::log(t.probs[i][static_cast<std::size_t>(index(experts[i]))]);
    return loss / static_cast<double>(states.size());
}

/// Worst relative error between backward() and central differences over every parameter.
inline double e2e_gradient_check(const WorldMap& map, State goal, CapabilityNet net, const HyperParams& hp,
                                 double eps = 1e-5)
{
    const OracleSolution sol = solve_exact(map, goal, hp);
    std::vector<State> states;
    std::vector<Action> experts;
    for (const auto& s : make_il_samples(0, map, sol)) {
        states.push_back(s.state);
        experts.push_back(s.expert);
    }
    const double w = 1.0 / static_cast<double>(states.size());
    const std::vector<double> analytic =
        backward(forward_with_tape(map, net, goal, states, hp), net, experts, w).grad.flat();
    std::vector<double> theta = net.flat_parameters();
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + eps;
        net.set_flat_parameters(theta);
        const double up = e2e_loss(map, net, goal, states, experts, hp);
        theta[i] = keep - eps;
        net.set_flat_parameters(theta);
        const double down = e2e_loss(map, net, goal, states, experts, hp);
        theta[i] = keep;
        const double numeric = (up - down) / (2 * eps);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace cin::test
