#pragma once
// planner.hpp - the value-iteration module driven by state-conditioned kernels.
//
// Each sweep is a locally connected convolution (one F x F kernel per state and action,
// applied to the V window around that state) followed by a max-pool over actions.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "cin/capability.hpp"
#include "cin/gridworld.hpp"
#include "cin/hyperparams.hpp"

namespace cin {

/// Per-state, per-action F x F transition kernels. Non-traversable states are inactive and
/// treated as self-loops by the sweep.
class KernelField {
public:
    KernelField() = default;
    KernelField(int m, int F) : m_(m), F_(F), data_(static_cast<std::size_t>(m) * m * kNumActions * F * F, 0.0), active_(m, 0)
    {
        check_kernel_size(F);
    }

    int size() const { return m_; }
    int kernel_size() const { return F_; }
    std::size_t slice_size() const { return static_cast<std::size_t>(F_) * F_; }

    bool active(State s) const { return active_[s] != 0; }
    void set_active(State s, bool on) { active_[s] = on ? 1 : 0; }

    std::span<double> kernels(State s)
    {
        return {data_.data() + offset_of(s), slice_size() * kNumActions};
    }
    std::span<const double> kernels(State s) const
    {
        return {data_.data() + offset_of(s), slice_size() * kNumActions};
    }
    std::span<const double> slice(State s, Action a) const
    {
        return kernels(s).subspan(static_cast<std::size_t>(index(a)) * slice_size(), slice_size());
    }

    const std::vector<double>& data() const { return data_; }
    friend bool operator==(const KernelField&, const KernelField&) = default;

private:
    std::size_t offset_of(State s) const
    {
        return (static_cast<std::size_t>(s.row) * m_ + s.col) * kNumActions * slice_size();
    }

    int m_ = 0;
    int F_ = 0;
    std::vector<double> data_;
    Grid<char> active_;
};

/// r_p at the goal, r_n everywhere else.
inline Grid<double> sparse_reward(const WorldMap& map, State goal, const HyperParams& hp)
{
    if (!map.in_bounds(goal)) throw std::out_of_range("sparse_reward: goal out of bounds");
    if (!map.traversable(goal)) throw std::invalid_argument("sparse_reward: goal is not traversable");
    Grid<double> r(map.size(), hp.r_n);
    r[goal] = hp.r_p;
    return r;
}

inline KernelField true_kernel_field(const WorldMap& map, int F)
{
    KernelField field(map.size(), F);
    for (const State s : traversable_states(map)) {
        const std::vector<double> k = true_kernel(map, s, F);
        std::copy(k.begin(), k.end(), field.kernels(s).begin());
        field.set_active(s, true);
    }
    return field;
}

namespace detail {

/// Patches of every traversable state as one batch, in row-major state order.
inline Batch map_patch_batch(const WorldMap& map, const std::vector<State>& states, int F)
{
    Batch x(F * F, static_cast<Eigen::Index>(states.size()));
    for (std::size_t j = 0; j < states.size(); ++j) {
        const LocalPatch p = extract_patch(map, states[j], F);
        std::copy(p.values.begin(), p.values.end(), x.col(static_cast<Eigen::Index>(j)).data());
    }
    return x;
}

inline KernelField field_from_probs(int m, int F, const std::vector<State>& states, const Batch& probs)
{
    KernelField field(m, F);
    for (std::size_t j = 0; j < states.size(); ++j) {
        const double* p = probs.col(static_cast<Eigen::Index>(j)).data();
        std::copy(p, p + field.slice_size() * kNumActions, field.kernels(states[j]).begin());
        field.set_active(states[j], true);
    }
    return field;
}

}  // namespace detail

/// One capability forward pass per traversable state.
inline KernelField build_kernel_field(const WorldMap& map, const CapabilityNet& net, int F)
{
    if (net.input_size() != F * F) throw std::invalid_argument("build_kernel_field: network input is not F*F");
    const std::vector<State> states = traversable_states(map);
    const ForwardCache cache = forward_batch(net, detail::map_patch_batch(map, states, F));
    return detail::field_from_probs(map.size(), F, states, cache.probs());
}

namespace detail {

/// V stored with an F/2 ring around the grid so kernel windows never index out of range.
/// The ring holds the wall value: the value of a cell the agent can never leave.
class PaddedValues {
public:
    PaddedValues(int m, int F) : m_(m), h_(F / 2), p_(m + 2 * (F / 2)), data_(static_cast<std::size_t>(p_) * p_, 0.0) {}

    double wall() const { return wall_; }
    void set_wall(double w)
    {
        wall_ = w;
        for (int r = 0; r < p_; ++r)
            for (int c = 0; c < p_; ++c)
                if (r < h_ || c < h_ || r >= m_ + h_ || c >= m_ + h_) data_[static_cast<std::size_t>(r) * p_ + c] = w;
    }

    double& at(int r, int c) { return data_[static_cast<std::size_t>(r + h_) * p_ + (c + h_)]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r + h_) * p_ + (c + h_)]; }
    /// Top-left of the F x F window centred on (r, c).
    const double* window(int r, int c) const { return data_.data() + static_cast<std::size_t>(r) * p_ + c; }
    double* window(int r, int c) { return data_.data() + static_cast<std::size_t>(r) * p_ + c; }
    int stride() const { return p_; }

    Grid<double> interior() const
    {
        Grid<double> g(m_, 0.0);
        for (int r = 0; r < m_; ++r)
            for (int c = 0; c < m_; ++c) g(r, c) = at(r, c);
        return g;
    }

private:
    int m_, h_, p_;
    std::vector<double> data_;
    double wall_ = 0.0;
};

/// Q(s, a) = gamma * <kernel(s, a), V window at s> + R(s); V'(s) = max_a Q(s, a), with the
/// goal held at r_p. Cells without kernels and the out-of-grid ring are self-loops, so they
/// carry the wall value w' = r_n + gamma * w. `argmax` (optional) receives the winning
/// action per state, lowest index on ties. Returns the max-norm change of V.
inline double bellman_sweep(const KernelField& field, const Grid<double>& reward, State goal, const HyperParams& hp,
                            const PaddedValues& v_prev, PaddedValues& v_next, std::vector<double>& q,
                            std::vector<int>* argmax)
{
    const int m = field.size();
    const int F = field.kernel_size();
    const std::size_t slice = field.slice_size();
    const int stride = v_prev.stride();
    v_next.set_wall(hp.r_n + hp.gamma * v_prev.wall());
    double delta = 0.0;
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c) {
            const std::size_t s = static_cast<std::size_t>(r) * m + c;
            double* qs = q.data() + s * kNumActions;
            const double reward_s = reward(r, c);
            int best = 0;
            if (!field.active({r, c})) {
                for (int a = 0; a < kNumActions; ++a) qs[a] = hp.gamma * v_prev.at(r, c) + reward_s;
            } else {
                const double* kern = field.kernels({r, c}).data();
                const double* win = v_prev.window(r, c);
                for (int a = 0; a < kNumActions; ++a) {
                    const double* k = kern + static_cast<std::size_t>(a) * slice;
                    double dot = 0.0;
                    for (int i = 0; i < F; ++i)
                        for (int j = 0; j < F; ++j) dot += k[i * F + j] * win[i * stride + j];
                    qs[a] = hp.gamma * dot + reward_s;
                    if (qs[a] > qs[best]) best = a;
                }
            }
            double v = qs[best];
            if (r == goal.row && c == goal.col) v = hp.r_p;
            v_next.at(r, c) = v;
            if (argmax) (*argmax)[s] = best;
            delta = std::max(delta, std::abs(v - v_prev.at(r, c)));
        }
    }
    return delta;
}

}  // namespace detail

struct VIResult {
    std::vector<double> q;  // m*m*|A|, state-major
    Grid<double> v;
    std::vector<double> sweep_deltas;

    double q_at(State s, Action a) const
    {
        return q[(static_cast<std::size_t>(s.row) * v.size() + s.col) * kNumActions + index(a)];
    }
};

/// K sweeps from V = 0. Returns the last Q and V.
inline VIResult vi_forward(const KernelField& field, const Grid<double>& reward, State goal, const HyperParams& hp)
{
    hp.validate();
    const int m = field.size();
    if (reward.size() != m) throw std::invalid_argument("vi_forward: reward map does not match kernel field");
    if (goal.row < 0 || goal.col < 0 || goal.row >= m || goal.col >= m) throw std::out_of_range("vi_forward: goal out of bounds");
    const int K = hp.iterations(m);
    detail::PaddedValues v(m, field.kernel_size()), v_next(m, field.kernel_size());
    VIResult out;
    out.q.assign(static_cast<std::size_t>(m) * m * kNumActions, 0.0);
    out.sweep_deltas.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        out.sweep_deltas.push_back(detail::bellman_sweep(field, reward, goal, hp, v, v_next, out.q, nullptr));
        std::swap(v, v_next);
    }
    out.v = v.interior();
    return out;
}

/// argmax_a Q(s, a), lowest action index on ties.
inline Action greedy_action(std::span<const double> q, int m, State s)
{
    if (s.row < 0 || s.col < 0 || s.row >= m || s.col >= m) throw std::out_of_range("greedy_action: state out of bounds");
    const double* qs = q.data() + (static_cast<std::size_t>(s.row) * m + s.col) * kNumActions;
    int best = 0;
    for (int a = 1; a < kNumActions; ++a)
        if (qs[a] > qs[best]) best = a;
    return action_from_index(best);
}

inline Action greedy_action(const VIResult& plan, State s) { return greedy_action(plan.q, plan.v.size(), s); }

enum class Outcome { ReachedGoal, Timeout, Stuck };

inline const char* outcome_name(Outcome o)
{
    switch (o) {
        case Outcome::ReachedGoal: return "reached_goal";
        case Outcome::Timeout: return "timeout";
        case Outcome::Stuck: return "stuck";
    }
    return "?";
}

struct RolloutResult {
    Outcome outcome = Outcome::Timeout;
    std::vector<State> trajectory;  // includes the start state

    int length() const { return static_cast<int>(trajectory.size()) - 1; }
    bool reached() const { return outcome == Outcome::ReachedGoal; }
};

/// Follows the greedy policy of an existing plan under the true dynamics.
inline RolloutResult rollout_plan(const WorldMap& map, const VIResult& plan, State goal, State start, int max_steps)
{
    if (!map.traversable(start) || !map.traversable(goal)) throw std::invalid_argument("rollout: start and goal must be traversable");
    RolloutResult res;
    res.trajectory.push_back(start);
    State s = start;
    for (int t = 0;; ++t) {
        if (s == goal) {
            res.outcome = Outcome::ReachedGoal;
            return res;
        }
        if (t >= max_steps) {
            res.outcome = Outcome::Timeout;
            return res;
        }
        const State next = step(map, s, greedy_action(plan, s));
        if (next == s) {
            res.outcome = Outcome::Stuck;
            return res;
        }
        res.trajectory.push_back(next);
        s = next;
    }
}

struct PlanResult {
    std::vector<double> q;
    Grid<double> v;
    Grid<double> reward;
    Action chosen = Action::N;
    RolloutResult rollout;
};

inline PlanResult plan_with_field(const WorldMap& map, const KernelField& field, State goal, State start,
                                  const HyperParams& hp)
{
    Grid<double> reward = sparse_reward(map, goal, hp);
    VIResult vi = vi_forward(field, reward, goal, hp);
    PlanResult out;
    out.chosen = greedy_action(vi, start);
    out.rollout = rollout_plan(map, vi, goal, start, hp.step_cap(map.size()));
    out.q = std::move(vi.q);
    out.v = std::move(vi.v);
    out.reward = std::move(reward);
    return out;
}

/// Plans once with the capability net, then rolls the greedy policy out from `start`.
inline PlanResult rollout(const WorldMap& map, const CapabilityNet& net, State goal, State start, const HyperParams& hp)
{
    hp.validate();
    return plan_with_field(map, build_kernel_field(map, net, hp.F), goal, start, hp);
}

}  // namespace cin
