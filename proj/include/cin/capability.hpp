#pragma once
// capability.hpp - the capability classifier: an MLP mapping an F x F local patch to one
// next-state distribution over the F x F window per action.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cin/gridworld.hpp"

namespace cin {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
/// Column-per-sample batch. Column-major so each sample is contiguous.
using Batch = Eigen::MatrixXd;

struct DenseLayer {
    Matrix W;  // out x in
    Vector b;  // out
};

/// Parameters of the capability network. Hidden layers use ReLU; the output of size
/// |A| * F * F is normalized with an independent softmax per action slice.
class CapabilityNet {
public:
    CapabilityNet() = default;

    explicit CapabilityNet(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes))
    {
        if (sizes_.size() < 2) throw std::invalid_argument("network needs at least two layer sizes");
        for (int s : sizes_)
            if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
        const int in = sizes_.front();
        const int F = static_cast<int>(std::lround(std::sqrt(in)));
        if (F * F != in || F % 2 == 0) throw std::invalid_argument("input size must be F*F with F odd");
        if (sizes_.back() != kNumActions * in)
            throw std::invalid_argument("output size must be |A| * F * F");
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
            layers_.push_back({Matrix::Zero(sizes_[l + 1], sizes_[l]), Vector::Zero(sizes_[l + 1])});
    }

    /// He-uniform weights, zero biases. `output_scale` shrinks the last layer so the
    /// softmax heads start near uniform instead of saturated.
    static CapabilityNet random(int F, std::uint64_t seed, int width = 64, int hidden_layers = 4,
                                double output_scale = 1.0)
    {
        check_kernel_size(F);
        std::vector<int> sizes{F * F};
        for (int i = 0; i < hidden_layers; ++i) sizes.push_back(width);
        sizes.push_back(kNumActions * F * F);
        CapabilityNet net(std::move(sizes));
        std::mt19937_64 rng(seed);
        for (auto& layer : net.layers_) {
            const double bound = std::sqrt(6.0 / static_cast<double>(layer.W.cols()));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Eigen::Index i = 0; i < layer.W.size(); ++i) layer.W.data()[i] = u(rng);
        }
        net.layers_.back().W *= output_scale;
        return net;
    }

    const std::vector<int>& layer_sizes() const { return sizes_; }
    int kernel_size() const { return static_cast<int>(std::lround(std::sqrt(sizes_.front()))); }
    int input_size() const { return sizes_.front(); }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.W.size() + l.b.size());
        return n;
    }

    /// Visits every parameter array in file order: W0, b0, W1, b1, ...
    template <typename Fn>
    void for_each_parameter_block(Fn&& fn)
    {
        for (auto& l : layers_) {
            fn(std::span<double>(l.W.data(), static_cast<std::size_t>(l.W.size())));
            fn(std::span<double>(l.b.data(), static_cast<std::size_t>(l.b.size())));
        }
    }
    template <typename Fn>
    void for_each_parameter_block(Fn&& fn) const
    {
        for (const auto& l : layers_) {
            fn(std::span<const double>(l.W.data(), static_cast<std::size_t>(l.W.size())));
            fn(std::span<const double>(l.b.data(), static_cast<std::size_t>(l.b.size())));
        }
    }

    std::vector<double> flat_parameters() const
    {
        std::vector<double> out;
        out.reserve(parameter_count());
        for_each_parameter_block([&](std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); });
        return out;
    }

    void set_flat_parameters(std::span<const double> flat)
    {
        if (flat.size() != parameter_count()) throw std::invalid_argument("parameter vector has wrong length");
        std::size_t off = 0;
        for_each_parameter_block([&](std::span<double> s) {
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), s.size(), s.begin());
            off += s.size();
        });
    }

    friend bool operator==(const CapabilityNet& a, const CapabilityNet& b)
    {
        return a.sizes_ == b.sizes_ && a.flat_parameters() == b.flat_parameters();
    }

private:
    std::vector<int> sizes_;
    std::vector<DenseLayer> layers_;
};

/// Activations kept for the reverse pass. acts[0] is the input batch, acts.back() holds
/// the per-action probabilities.
struct ForwardCache {
    std::vector<Batch> acts;
    const Batch& probs() const { return acts.back(); }
};

namespace detail {

inline void softmax_slices(Batch& z, int slice)
{
    for (Eigen::Index col = 0; col < z.cols(); ++col) {
        double* p = z.col(col).data();
        for (int a = 0; a < kNumActions; ++a) {
            double* s = p + static_cast<std::ptrdiff_t>(a) * slice;
            const double mx = *std::max_element(s, s + slice);
            double sum = 0.0;
            for (int i = 0; i < slice; ++i) sum += (s[i] = std::exp(s[i] - mx));
            for (int i = 0; i < slice; ++i) s[i] /= sum;
        }
    }
}

}  // namespace detail

inline ForwardCache forward_batch(const CapabilityNet& net, Batch input)
{
    if (input.rows() != net.input_size()) throw std::invalid_argument("forward: patch length must be F*F");
    ForwardCache cache;
    cache.acts.reserve(net.layers().size() + 1);
    cache.acts.push_back(std::move(input));
    const auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Batch z = layers[l].W * cache.acts.back();
        z.colwise() += layers[l].b;
        if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
        cache.acts.push_back(std::move(z));
    }
    detail::softmax_slices(cache.acts.back(), net.input_size());
    return cache;
}

/// Kernel stack for one patch: |A| slices of F*F probabilities, action-major.
inline std::vector<double> forward(const CapabilityNet& net, std::span<const double> patch)
{
    if (patch.size() != static_cast<std::size_t>(net.input_size()))
        throw std::invalid_argument("forward: patch length must be F*F");
    Batch x(net.input_size(), 1);
    std::copy(patch.begin(), patch.end(), x.data());
    const ForwardCache cache = forward_batch(net, std::move(x));
    return {cache.probs().data(), cache.probs().data() + cache.probs().size()};
}

/// Gradients in the same layout as the network parameters.
struct Gradients {
    std::vector<DenseLayer> layers;

    static Gradients zeros_like(const CapabilityNet& net)
    {
        Gradients g;
        for (const auto& l : net.layers())
            g.layers.push_back({Matrix::Zero(l.W.rows(), l.W.cols()), Vector::Zero(l.b.size())});
        return g;
    }

    Gradients& operator+=(const Gradients& o)
    {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].W += o.layers[i].W;
            layers[i].b += o.layers[i].b;
        }
        return *this;
    }

    std::vector<double> flat() const
    {
        std::vector<double> out;
        for (const auto& l : layers) {
            out.insert(out.end(), l.W.data(), l.W.data() + l.W.size());
            out.insert(out.end(), l.b.data(), l.b.data() + l.b.size());
        }
        return out;
    }

    double squared_norm() const
    {
        double s = 0.0;
        for (const auto& l : layers) s += l.W.squaredNorm() + l.b.squaredNorm();
        return s;
    }
};

/// Reverse pass. `d_probs` is dLoss/d(probabilities), same shape as cache.probs().
inline Gradients backward_batch(const CapabilityNet& net, const ForwardCache& cache, const Batch& d_probs)
{
    const int slice = net.input_size();
    const Batch& p = cache.probs();
    Batch delta(p.rows(), p.cols());
    for (Eigen::Index col = 0; col < p.cols(); ++col) {
        for (int a = 0; a < kNumActions; ++a) {
            const Eigen::Index o = static_cast<Eigen::Index>(a) * slice;
            const auto ps = p.col(col).segment(o, slice);
            const auto gs = d_probs.col(col).segment(o, slice);
            const double dot = ps.dot(gs);
            delta.col(col).segment(o, slice) = (ps.array() * (gs.array() - dot)).matrix();
        }
    }
    const auto& layers = net.layers();
    Gradients g = Gradients::zeros_like(net);
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Batch& in = cache.acts[l];
        g.layers[l].W.noalias() = delta * in.transpose();
        g.layers[l].b = delta.rowwise().sum();
        if (l == 0) break;
        Batch back = layers[l].W.transpose() * delta;
        delta = back.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
    }
    return g;
}

// ---------------------------------------------------------------------------------------
// Adam

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<double> m;
    std::vector<double> v;

    void apply(CapabilityNet& net, const Gradients& grad)
    {
        const std::vector<double> g = grad.flat();
        if (m.empty()) {
            m.assign(g.size(), 0.0);
            v.assign(g.size(), 0.0);
        }
        if (m.size() != g.size()) throw std::invalid_argument("Adam state does not match the network");
        ++step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        std::size_t i = 0;
        net.for_each_parameter_block([&](std::span<double> block) {
            for (double& w : block) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                w -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
                ++i;
            }
        });
    }
};

// ---------------------------------------------------------------------------------------
// Supervised samples

struct CapSample {
    std::vector<double> patch;  // F*F
    Action action = Action::N;
    std::vector<double> label;  // one-hot F*F
    MapKind kind = MapKind::Occupancy2D;

    int label_index() const
    {
        return static_cast<int>(std::max_element(label.begin(), label.end()) - label.begin());
    }
};

/// Uniform-random-policy rollouts. Each episode starts at a uniformly drawn traversable
/// cell of a uniformly drawn map; every transition yields one sample.
inline std::vector<CapSample> collect_samples(const std::vector<WorldMap>& maps, int n_episodes, int episode_len,
                                              std::uint64_t seed, int F = 3)
{
    check_kernel_size(F);
    if (maps.empty()) throw std::invalid_argument("collect_samples: no maps");
    if (n_episodes <= 0 || episode_len <= 0) throw std::invalid_argument("collect_samples: counts must be positive");
    std::vector<std::vector<State>> free(maps.size());
    for (std::size_t i = 0; i < maps.size(); ++i) {
        free[i] = traversable_states(maps[i]);
        if (free[i].empty()) throw std::invalid_argument("collect_samples: map has no free cells");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_map(0, maps.size() - 1);
    std::uniform_int_distribution<int> pick_action(0, kNumActions - 1);
    std::vector<CapSample> out;
    out.reserve(static_cast<std::size_t>(n_episodes) * episode_len);
    const int h = F / 2;
    for (int e = 0; e < n_episodes; ++e) {
        const std::size_t mi = pick_map(rng);
        const WorldMap& map = maps[mi];
        State s = free[mi][std::uniform_int_distribution<std::size_t>(0, free[mi].size() - 1)(rng)];
        for (int t = 0; t < episode_len; ++t) {
            const Action a = action_from_index(pick_action(rng));
            const State next = step(map, s, a);
            CapSample sample{extract_patch(map, s, F).values, a, std::vector<double>(static_cast<std::size_t>(F) * F, 0.0),
                             map.kind()};
            sample.label[static_cast<std::size_t>((next.row - s.row + h) * F + (next.col - s.col + h))] = 1.0;
            out.push_back(std::move(sample));
            s = next;
        }
    }
    return out;
}

/// Mean squared error of one sample: (1/F^2) * sum over the action slice.
inline double sample_mse(std::span<const double> probs, const CapSample& s)
{
    const std::size_t slice = s.label.size();
    const double* p = probs.data() + static_cast<std::size_t>(index(s.action)) * slice;
    double e = 0.0;
    for (std::size_t i = 0; i < slice; ++i) e += (p[i] - s.label[i]) * (p[i] - s.label[i]);
    return e / static_cast<double>(slice);
}

inline Batch patch_batch(std::span<const CapSample* const> samples, int in)
{
    Batch x(in, static_cast<Eigen::Index>(samples.size()));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        if (samples[j]->patch.size() != static_cast<std::size_t>(in))
            throw std::invalid_argument("sample patch does not match network input");
        std::copy(samples[j]->patch.begin(), samples[j]->patch.end(), x.col(static_cast<Eigen::Index>(j)).data());
    }
    return x;
}

/// Mean MSE of a batch and its parameter gradient.
inline double mse_loss_and_gradient(const CapabilityNet& net, std::span<const CapSample* const> batch,
                                    Gradients* grad)
{
    const int in = net.input_size();
    ForwardCache cache = forward_batch(net, patch_batch(batch, in));
    const Batch& p = cache.probs();
    Batch d = Batch::Zero(p.rows(), p.cols());
    const double n = static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        loss += sample_mse(std::span<const double>(p.col(col).data(), static_cast<std::size_t>(p.rows())), *batch[j]);
        const Eigen::Index o = static_cast<Eigen::Index>(index(batch[j]->action)) * in;
        for (int i = 0; i < in; ++i)
            d(o + i, col) = 2.0 / (in * n) * (p(o + i, col) - batch[j]->label[static_cast<std::size_t>(i)]);
    }
    if (grad) *grad = backward_batch(net, cache, d);
    return loss / n;
}

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    double pct_err = 0.0;
    double wall_ms = 0.0;
};

struct SupervisedOptions {
    int epochs = 10;
    int batch = 64;
    std::uint64_t seed = 0;
    bool shuffle = true;
    double lr_decay = 1.0;  // Adam learning rate is scaled by lr_decay^(epoch - 1)
};

/// Fraction (in percent) of samples whose predicted argmax offset differs from the label.
inline double argmax_error_pct(const CapabilityNet& net, const std::vector<CapSample>& samples)
{
    if (samples.empty()) return 0.0;
    const int in = net.input_size();
    std::size_t wrong = 0;
    constexpr std::size_t chunk = 4096;
    for (std::size_t start = 0; start < samples.size(); start += chunk) {
        const std::size_t end = std::min(samples.size(), start + chunk);
        std::vector<const CapSample*> ptrs;
        for (std::size_t i = start; i < end; ++i) ptrs.push_back(&samples[i]);
        const ForwardCache cache = forward_batch(net, patch_batch(ptrs, in));
        for (std::size_t j = 0; j < ptrs.size(); ++j) {
            const double* p = cache.probs().col(static_cast<Eigen::Index>(j)).data() + index(ptrs[j]->action) * in;
            const int pred = static_cast<int>(std::max_element(p, p + in) - p);
            if (pred != ptrs[j]->label_index()) ++wrong;
        }
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(samples.size());
}

/// Minibatch Adam on the MSE loss. Returns one log row per epoch; pct_err is the training
/// argmax error after the epoch.
inline std::vector<EpochLog> train_supervised(CapabilityNet& net, const std::vector<CapSample>& samples,
                                              AdamState& adam, const SupervisedOptions& opt)
{
    if (samples.empty()) throw std::invalid_argument("train_supervised: no samples");
    if (opt.batch <= 0 || opt.epochs < 0 || !(opt.lr_decay > 0.0))
        throw std::invalid_argument("train_supervised: bad batch/epochs/lr_decay");
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(opt.seed);
    std::vector<EpochLog> log;
    const double lr0 = adam.lr;
    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        adam.lr = lr0 * std::pow(opt.lr_decay, epoch - 1);
        if (opt.shuffle) std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::vector<const CapSample*> batch;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch)) {
            batch.clear();
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
            for (std::size_t i = start; i < end; ++i) batch.push_back(&samples[order[i]]);
            Gradients g;
            const double loss = mse_loss_and_gradient(net, batch, &g);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_supervised: non-finite loss at epoch " + std::to_string(epoch));
            total += loss * static_cast<double>(batch.size());
            adam.apply(net, g);
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        log.push_back({epoch, total / static_cast<double>(samples.size()), argmax_error_pct(net, samples), ms});
    }
    adam.lr = lr0;
    return log;
}

// ---------------------------------------------------------------------------------------
// Curriculum

inline constexpr int kCurriculumBins = 4;

/// Distance of the decisive height gap (relative height at the action's target) from the
/// threshold, normalized by delta_h_star. Small means hard.
inline double decisive_gap_margin(const CapSample& s, double delta_h_star)
{
    const int F = static_cast<int>(std::lround(std::sqrt(s.patch.size())));
    const Offset o = offset(s.action);
    const double gap = s.patch[static_cast<std::size_t>(kernel_index(F, o.dr, o.dc))];
    return std::abs(std::abs(gap) - delta_h_star) / delta_h_star;
}

/// Difficulty bin, 0 (easy) .. kCurriculumBins - 1 (hardest).
inline int difficulty_bin(const CapSample& s, double delta_h_star)
{
    const double d = decisive_gap_margin(s, delta_h_star);
    if (d >= 0.5) return 0;
    if (d >= 0.25) return 1;
    if (d >= 0.1) return 2;
    return 3;
}

/// Terrain samples split into difficulty bins ordered easy -> hard, each shuffled with
/// `seed`. Occupancy samples come back as a single bin in their original order.
inline std::vector<std::vector<CapSample>> curriculum_order(const std::vector<CapSample>& samples,
                                                            double delta_h_star, std::uint64_t seed = 0)
{
    const bool terrain = std::any_of(samples.begin(), samples.end(),
                                     [](const CapSample& s) { return s.kind == MapKind::Terrain3D; });
    if (!terrain) return {samples};
    if (!(delta_h_star > 0.0)) throw std::invalid_argument("curriculum_order: delta_h_star must be positive");
    std::vector<std::vector<CapSample>> bins(kCurriculumBins);
    for (const auto& s : samples) bins[static_cast<std::size_t>(difficulty_bin(s, delta_h_star))].push_back(s);
    std::mt19937_64 rng(seed);
    for (auto& b : bins) std::shuffle(b.begin(), b.end(), rng);
    return bins;
}

/// Trains on a growing prefix of the bins: stage k uses bins 0..k for `epochs_per_stage`.
inline std::vector<EpochLog> train_curriculum(CapabilityNet& net, const std::vector<std::vector<CapSample>>& bins,
                                              AdamState& adam, const SupervisedOptions& opt)
{
    std::vector<EpochLog> log;
    std::vector<CapSample> pool;
    for (std::size_t k = 0; k < bins.size(); ++k) {
        pool.insert(pool.end(), bins[k].begin(), bins[k].end());
        if (pool.empty()) continue;
        SupervisedOptions stage = opt;
        stage.seed = opt.seed + k;
        for (EpochLog row : train_supervised(net, pool, adam, stage)) {
            row.epoch = static_cast<int>(log.size()) + 1;
            log.push_back(row);
        }
    }
    return log;
}

// ---------------------------------------------------------------------------------------
// Model file: "CINNET v1\n", uint32 layer count, uint32 sizes, then float64 parameters
// (W row-major, then b, per layer), all little-endian.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v)
{
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is)
{
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("CINNET: truncated file");
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double d)
{
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is)
{
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("CINNET: truncated parameters");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &u, 8);
    return d;
}

}  // namespace detail

inline void write_net(std::ostream& os, const CapabilityNet& net)
{
    os.write("CINNET v1\n", 10);
    detail::put_u32(os, static_cast<std::uint32_t>(net.layer_sizes().size()));
    for (int s : net.layer_sizes()) detail::put_u32(os, static_cast<std::uint32_t>(s));
    net.for_each_parameter_block([&](std::span<const double> block) {
        for (double d : block) detail::put_f64(os, d);
    });
}

inline CapabilityNet read_net(std::istream& is)
{
    char magic[10];
    if (!is.read(magic, 10) || std::string(magic, 10) != "CINNET v1\n") throw std::runtime_error("not a CINNET v1 file");
    const std::uint32_t n = detail::get_u32(is);
    if (n < 2 || n > 64) throw std::runtime_error("CINNET: bad layer count");
    std::vector<int> sizes;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t s = detail::get_u32(is);
        if (s == 0 || s > (1u << 20)) throw std::runtime_error("CINNET: bad layer size");
        sizes.push_back(static_cast<int>(s));
    }
    CapabilityNet net(sizes);
    net.for_each_parameter_block([&](std::span<double> block) {
        for (double& d : block) d = detail::get_f64(is);
    });
    return net;
}

inline void save_net(const std::string& path, const CapabilityNet& net)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_net(os, net);
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline CapabilityNet load_net(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_net(is);
}

}  // namespace cin
