#pragma once
// e2e.hpp - imitation learning through the unrolled planner.
//
// The forward pass records every V map and max-pool winner; the reverse pass pushes the
// cross-entropy adjoint back through K sweeps into the kernel field and then through the
// capability net.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cin/capability.hpp"
#include "cin/oracle.hpp"
#include "cin/parallel.hpp"
#include "cin/planner.hpp"

namespace cin {

using ActionScores = std::array<double, kNumActions>;

inline ActionScores softmax(const ActionScores& logits)
{
    ActionScores p{};
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (int a = 0; a < kNumActions; ++a) sum += (p[static_cast<std::size_t>(a)] = std::exp(logits[static_cast<std::size_t>(a)] - mx));
    for (double& v : p) v /= sum;
    return p;
}

/// Everything the reverse pass needs from one planning forward pass.
struct Tape {
    HyperParams hp;
    int m = 0;
    int K = 0;
    State goal;
    std::vector<State> states;       // traversable states, column order of `net_cache`
    ForwardCache net_cache;          // capability activations
    KernelField field;
    Grid<double> reward;
    std::vector<detail::PaddedValues> values;  // V^0 .. V^{K-1}
    std::vector<std::vector<int>> winners;     // max-pool argmax of sweeps 1 .. K-1
    std::vector<double> q;                     // Q^K
    std::vector<State> queries;
    std::vector<ActionScores> logits;          // Q^K at each query
    std::vector<ActionScores> probs;           // softmax of logits

    std::size_t convolution_layers() const { return values.size(); }
};

/// Planner forward pass for several query states sharing one (map, goal).
inline Tape forward_with_tape(const WorldMap& map, const CapabilityNet& net, State goal,
                              const std::vector<State>& queries, const HyperParams& hp)
{
    hp.validate();
    if (net.input_size() != hp.F * hp.F) throw std::invalid_argument("forward_with_tape: network input is not F*F");
    Tape t;
    t.hp = hp;
    t.m = map.size();
    t.K = hp.iterations(t.m);
    t.goal = goal;
    t.reward = sparse_reward(map, goal, hp);
    t.states = traversable_states(map);
    t.net_cache = forward_batch(net, detail::map_patch_batch(map, t.states, hp.F));
    t.field = detail::field_from_probs(t.m, hp.F, t.states, t.net_cache.probs());

    const std::size_t cells = static_cast<std::size_t>(t.m) * t.m;
    t.q.assign(cells * kNumActions, 0.0);
    t.values.reserve(static_cast<std::size_t>(t.K));
    t.values.emplace_back(t.m, hp.F);
    detail::PaddedValues next(t.m, hp.F);
    for (int k = 1; k <= t.K; ++k) {
        std::vector<int> win(cells, 0);
        detail::bellman_sweep(t.field, t.reward, goal, hp, t.values.back(), next, t.q, &win);
        if (k < t.K) {
            t.values.push_back(next);
            t.winners.push_back(std::move(win));
        }
    }

    for (const State s : queries) {
        if (!map.traversable(s)) throw std::invalid_argument("forward_with_tape: query state is not traversable");
        ActionScores l{};
        for (int a = 0; a < kNumActions; ++a)
            l[static_cast<std::size_t>(a)] = t.q[(static_cast<std::size_t>(s.row) * t.m + s.col) * kNumActions + a];
        t.queries.push_back(s);
        t.logits.push_back(l);
        t.probs.push_back(softmax(l));
    }
    return t;
}

inline std::pair<ActionScores, Tape> forward_with_tape(const WorldMap& map, const CapabilityNet& net, State goal, State s,
                                                       const HyperParams& hp)
{
    Tape t = forward_with_tape(map, net, goal, std::vector<State>{s}, hp);
    ActionScores logits = t.logits.front();
    return {logits, std::move(t)};
}

struct LossAndGradient {
    double loss = 0.0;  // weighted sum of per-query cross-entropies
    Gradients grad;
};

/// Gradient of weight * sum_i CE(softmax(Q^K(s_i, .)), expert_i) w.r.t. the net parameters.
inline LossAndGradient backward(const Tape& t, const CapabilityNet& net, const std::vector<Action>& experts,
                                double weight = 1.0)
{
    if (experts.size() != t.queries.size()) throw std::invalid_argument("backward: one expert action per query required");
    const int m = t.m;
    const int F = t.field.kernel_size();
    const std::size_t cells = static_cast<std::size_t>(m) * m;
    const std::size_t slice = t.field.slice_size();
    const double gamma = t.hp.gamma;

    LossAndGradient out;
    std::vector<double> gq(cells * kNumActions, 0.0);
    for (std::size_t i = 0; i < t.queries.size(); ++i) {
        const State s = t.queries[i];
        const int target = index(experts[i]);
        out.loss -= weight * std::log(std::max(t.probs[i][static_cast<std::size_t>(target)], 1e-300));
        double* g = &gq[(static_cast<std::size_t>(s.row) * m + s.col) * kNumActions];
        for (int a = 0; a < kNumActions; ++a)
            g[a] += weight * (t.probs[i][static_cast<std::size_t>(a)] - (a == target ? 1.0 : 0.0));
    }

    std::vector<double> gkern(cells * kNumActions * slice, 0.0);
    detail::PaddedValues gv(m, F);
    for (int k = t.K; k >= 1; --k) {
        const detail::PaddedValues& v_prev = t.values[static_cast<std::size_t>(k - 1)];
        gv = detail::PaddedValues(m, F);
        const int stride = v_prev.stride();
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < m; ++c) {
                if (!t.field.active({r, c})) continue;
                const std::size_t s = static_cast<std::size_t>(r) * m + c;
                const double* kern = t.field.kernels({r, c}).data();
                const double* win = v_prev.window(r, c);
                double* gwin = gv.window(r, c);
                for (int a = 0; a < kNumActions; ++a) {
                    const double g = gamma * gq[s * kNumActions + a];
                    if (g == 0.0) continue;
                    const double* ka = kern + static_cast<std::size_t>(a) * slice;
                    double* gk = &gkern[(s * kNumActions + a) * slice];
                    for (int i = 0; i < F; ++i)
                        for (int j = 0; j < F; ++j) {
                            gk[i * F + j] += g * win[i * stride + j];
                            gwin[i * stride + j] += g * ka[i * F + j];
                        }
                }
            }
        }
        if (k == 1) break;  // V^0 is constant
        std::fill(gq.begin(), gq.end(), 0.0);
        const std::vector<int>& win = t.winners[static_cast<std::size_t>(k - 2)];
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) {
                if (!t.field.active({r, c}) || (r == t.goal.row && c == t.goal.col)) continue;
                const std::size_t s = static_cast<std::size_t>(r) * m + c;
                gq[s * kNumActions + static_cast<std::size_t>(win[s])] = gv.at(r, c);
            }
    }

    Batch d_probs(static_cast<Eigen::Index>(slice * kNumActions), static_cast<Eigen::Index>(t.states.size()));
    for (std::size_t j = 0; j < t.states.size(); ++j) {
        const std::size_t s = static_cast<std::size_t>(t.states[j].row) * m + t.states[j].col;
        std::copy_n(&gkern[s * kNumActions * slice], slice * kNumActions, d_probs.col(static_cast<Eigen::Index>(j)).data());
    }
    out.grad = backward_batch(net, t.net_cache, d_probs);
    return out;
}

// ---------------------------------------------------------------------------------------
// Training

struct ILSample {
    std::size_t map_index = 0;  // into the caller's map list
    State goal;
    State state;
    Action expert = Action::N;
    std::uint8_t optimal = 0;  // bit a set when action a is optimal; 0 means "expert only"

    bool accepts(Action a) const { return optimal ? ((optimal >> index(a)) & 1u) != 0 : a == expert; }
};

/// One sample per reachable non-goal traversable state, labelled by the oracle.
inline std::vector<ILSample> make_il_samples(std::size_t map_index, const WorldMap& map, const OracleSolution& sol)
{
    std::vector<ILSample> out;
    for (const State s : traversable_states(map)) {
        if (s == sol.goal || !sol.reachable(s)) continue;
        out.push_back({map_index, sol.goal, s, expert_action(sol, s), optimal_actions(sol, s)});
    }
    return out;
}

struct E2EOptions {
    int epochs = 50;
    int batch = 8;  // (map, goal) groups per Adam step
    std::uint64_t seed = 0;
    int jobs = 1;
    double lr_decay = 1.0;  // Adam learning rate is scaled by lr_decay^(epoch - 1)
};

namespace detail {

struct SampleGroup {
    std::size_t map_index;
    State goal;
    std::vector<State> states;
    std::vector<Action> experts;
    std::vector<const ILSample*> samples;
};

inline std::vector<SampleGroup> group_samples(const std::vector<ILSample>& samples)
{
    std::vector<SampleGroup> groups;
    for (const auto& s : samples) {
        if (groups.empty() || groups.back().map_index != s.map_index || !(groups.back().goal == s.goal))
            groups.push_back({s.map_index, s.goal, {}, {}, {}});
        groups.back().states.push_back(s.state);
        groups.back().samples.push_back(&s);
        groups.back().experts.push_back(s.expert);
    }
    return groups;
}

}  // namespace detail

/// Percentage of samples whose greedy planner action is not an optimal action. Ties among
/// optimal actions all count as correct.
inline double e2e_error_pct(const CapabilityNet& net, const std::vector<WorldMap>& maps,
                            const std::vector<ILSample>& samples, const HyperParams& hp, int jobs = 1)
{
    if (samples.empty()) return 0.0;
    const auto groups = detail::group_samples(samples);
    std::vector<std::size_t> wrong(groups.size(), 0);
    parallel_for(groups.size(), jobs, [&](std::size_t gi) {
        const auto& g = groups[gi];
        const WorldMap& map = maps.at(g.map_index);
        const VIResult vi = vi_forward(build_kernel_field(map, net, hp.F), sparse_reward(map, g.goal, hp), g.goal, hp);
        for (std::size_t i = 0; i < g.states.size(); ++i)
            if (!g.samples[i]->accepts(greedy_action(vi, g.states[i]))) ++wrong[gi];
    });
    return 100.0 * static_cast<double>(std::accumulate(wrong.begin(), wrong.end(), std::size_t{0})) /
           static_cast<double>(samples.size());
}

/// Minibatch Adam on the mean cross-entropy. Row 0 of the log is the untrained net;
/// row e reports the mean training loss of epoch e and %Err after it.
inline std::vector<EpochLog> train_e2e(CapabilityNet& net, const std::vector<WorldMap>& maps,
                                       const std::vector<ILSample>& samples, AdamState& adam, const HyperParams& hp,
                                       const E2EOptions& opt)
{
    hp.validate();
    if (samples.empty()) throw std::invalid_argument("train_e2e: no samples");
    if (opt.batch <= 0 || opt.epochs < 0 || !(opt.lr_decay > 0.0))
        throw std::invalid_argument("train_e2e: bad batch/epochs/lr_decay");
    const auto groups = detail::group_samples(samples);
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(opt.seed);

    const double base_lr = adam.lr;
    std::vector<EpochLog> log;
    log.push_back({0, std::nan(""), e2e_error_pct(net, maps, samples, hp, opt.jobs), 0.0});
    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        adam.lr = base_lr * std::pow(opt.lr_decay, epoch - 1);
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
            std::size_t count = 0;
            for (std::size_t i = start; i < end; ++i) count += groups[order[i]].states.size();
            const double w = 1.0 / static_cast<double>(count);
            std::vector<LossAndGradient> parts(end - start);
            parallel_for(end - start, opt.jobs, [&](std::size_t i) {
                const auto& g = groups[order[start + i]];
                const Tape tape = forward_with_tape(maps.at(g.map_index), net, g.goal, g.states, hp);
                parts[i] = backward(tape, net, g.experts, w);
            });
            Gradients grad = std::move(parts.front().grad);
            double loss = parts.front().loss;
            for (std::size_t i = 1; i < parts.size(); ++i) {
                grad += parts[i].grad;
                loss += parts[i].loss;
            }
            if (!std::isfinite(loss)) throw std::runtime_error("train_e2e: non-finite loss at epoch " + std::to_string(epoch));
            total += loss * static_cast<double>(count);
            adam.apply(net, grad);
        }
        const double pct = e2e_error_pct(net, maps, samples, hp, opt.jobs);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        log.push_back({epoch, total / static_cast<double>(samples.size()), pct, ms});
    }
    adam.lr = base_lr;
    return log;
}

}  // namespace cin
