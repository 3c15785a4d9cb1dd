#pragma once
// gridworld.hpp - world maps, ground-truth motion, map generators and local patches.
//
// Maps are square (m x m). Occupancy maps hold 0 (obstacle) / 1 (free); terrain maps hold
// heights and an edge is walkable when the height difference is at most delta_h_star.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cin {

enum class MapKind { Occupancy2D, Terrain3D };

inline const char* kind_name(MapKind k) { return k == MapKind::Occupancy2D ? "2d" : "3d"; }

inline MapKind parse_kind(const std::string& s)
{
    if (s == "2d" || s == "2D") return MapKind::Occupancy2D;
    if (s == "3d" || s == "3D") return MapKind::Terrain3D;
    throw std::invalid_argument("unknown map kind '" + s + "' (expected 2d or 3d)");
}

struct State {
    int row = 0;
    int col = 0;
    friend bool operator==(const State&, const State&) = default;
};

/// The eight compass moves, in the fixed enumeration order used for every tie-break.
enum class Action : int { N = 0, NE, E, SE, S, SW, W, NW };

inline constexpr int kNumActions = 8;

struct Offset {
    int dr;
    int dc;
};

inline constexpr std::array<Offset, kNumActions> kActionOffsets{{
    {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1},
}};

inline constexpr std::array<Action, kNumActions> kAllActions{
    Action::N, Action::NE, Action::E, Action::SE, Action::S, Action::SW, Action::W, Action::NW};

inline constexpr int index(Action a) { return static_cast<int>(a); }
inline constexpr Offset offset(Action a) { return kActionOffsets[static_cast<std::size_t>(a)]; }

inline Action action_from_index(int i)
{
    if (i < 0 || i >= kNumActions) throw std::out_of_range("action index out of range");
    return static_cast<Action>(i);
}

inline const char* action_name(Action a)
{
    static constexpr const char* names[] = {"N", "NE", "E", "SE", "S", "SW", "W", "NW"};
    return names[index(a)];
}

/// Square grid of values addressed by (row, col).
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int m, T fill) : m_(m), data_(static_cast<std::size_t>(m) * m, fill) {}

    int size() const { return m_; }
    T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * m_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * m_ + c]; }
    T& operator[](State s) { return (*this)(s.row, s.col); }
    const T& operator[](State s) const { return (*this)(s.row, s.col); }

    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int m_ = 0;
    std::vector<T> data_;
};

class WorldMap {
public:
    WorldMap() = default;

    WorldMap(MapKind kind, int m, std::vector<double> cells, double delta_h_star = 0.0)
        : kind_(kind), m_(m), cells_(std::move(cells)), delta_h_star_(delta_h_star)
    {
        if (m < 3) throw std::invalid_argument("map side must be >= 3, got " + std::to_string(m));
        if (cells_.size() != static_cast<std::size_t>(m) * m)
            throw std::invalid_argument("cell array does not match map side");
        if (kind == MapKind::Occupancy2D) {
            for (double v : cells_)
                if (v != 0.0 && v != 1.0)
                    throw std::invalid_argument("occupancy cells must be exactly 0 or 1");
        } else {
            if (!(delta_h_star > 0.0) || !std::isfinite(delta_h_star))
                throw std::invalid_argument("terrain maps need a positive delta_h_star");
            for (double v : cells_)
                if (!std::isfinite(v)) throw std::invalid_argument("terrain heights must be finite");
        }
    }

    MapKind kind() const { return kind_; }
    int size() const { return m_; }
    double delta_h_star() const { return delta_h_star_; }
    const std::vector<double>& cells() const { return cells_; }

    double at(int r, int c) const { return cells_[static_cast<std::size_t>(r) * m_ + c]; }
    double at(State s) const { return at(s.row, s.col); }

    bool in_bounds(int r, int c) const { return r >= 0 && c >= 0 && r < m_ && c < m_; }
    bool in_bounds(State s) const { return in_bounds(s.row, s.col); }

    /// A state the agent may occupy. Every terrain cell is standable.
    bool traversable(State s) const
    {
        return in_bounds(s) && (kind_ == MapKind::Terrain3D || at(s) == 1.0);
    }

    /// Whether the one-step move from `from` to the neighbouring cell `to` succeeds.
    bool can_move(State from, State to) const
    {
        if (!in_bounds(to)) return false;
        if (kind_ == MapKind::Occupancy2D) return at(to) == 1.0;
        return std::abs(at(to) - at(from)) <= delta_h_star_;
    }

    friend bool operator==(const WorldMap&, const WorldMap&) = default;

private:
    MapKind kind_ = MapKind::Occupancy2D;
    int m_ = 0;
    std::vector<double> cells_;
    double delta_h_star_ = 0.0;
};

inline std::vector<State> traversable_states(const WorldMap& map)
{
    std::vector<State> out;
    for (int r = 0; r < map.size(); ++r)
        for (int c = 0; c < map.size(); ++c)
            if (map.traversable({r, c})) out.push_back({r, c});
    return out;
}

/// Ground-truth dynamics. Blocked moves leave the agent in place.
inline State step(const WorldMap& map, State s, Action a)
{
    if (!map.in_bounds(s)) throw std::out_of_range("step: state out of bounds");
    if (!map.traversable(s)) throw std::invalid_argument("step: state is an obstacle cell");
    const Offset o = offset(a);
    const State t{s.row + o.dr, s.col + o.dc};
    return map.can_move(s, t) ? t : s;
}

// ---------------------------------------------------------------------------------------
// Generators

/// Perfect maze carved by a depth-first recursive backtracker. Maze cells sit on even
/// coordinates; walls between them are opened as the walk advances.
inline WorldMap generate_maze(int m, std::uint64_t seed)
{
    if (m < 3) throw std::invalid_argument("generate_maze: m must be >= 3");
    std::mt19937_64 rng(seed);
    std::vector<double> cells(static_cast<std::size_t>(m) * m, 0.0);
    const int n = (m + 1) / 2;  // maze cells per side
    auto at = [&](int r, int c) -> double& { return cells[static_cast<std::size_t>(r) * m + c]; };

    std::vector<char> visited(static_cast<std::size_t>(n) * n, 0);
    std::uniform_int_distribution<int> pick(0, n - 1);
    State start{pick(rng), pick(rng)};
    std::vector<State> stack{start};
    visited[static_cast<std::size_t>(start.row) * n + start.col] = 1;
    at(2 * start.row, 2 * start.col) = 1.0;

    static constexpr std::array<Offset, 4> dirs{{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};
    while (!stack.empty()) {
        const State cur = stack.back();
        std::array<int, 4> options{};
        int count = 0;
        for (int d = 0; d < 4; ++d) {
            const int r = cur.row + dirs[d].dr, c = cur.col + dirs[d].dc;
            if (r >= 0 && c >= 0 && r < n && c < n && !visited[static_cast<std::size_t>(r) * n + c])
                options[count++] = d;
        }
        if (count == 0) {
            stack.pop_back();
            continue;
        }
        const int d = options[std::uniform_int_distribution<int>(0, count - 1)(rng)];
        const State next{cur.row + dirs[d].dr, cur.col + dirs[d].dc};
        visited[static_cast<std::size_t>(next.row) * n + next.col] = 1;
        at(2 * cur.row + dirs[d].dr, 2 * cur.col + dirs[d].dc) = 1.0;
        at(2 * next.row, 2 * next.col) = 1.0;
        stack.push_back(next);
    }
    return WorldMap(MapKind::Occupancy2D, m, std::move(cells));
}

/// Value-noise heightfield in [0, 1]: bilinear interpolation of a coarse random lattice
/// blended with per-cell noise weighted by `roughness`, then min-max normalized.
inline WorldMap generate_terrain(int m, double roughness, std::uint64_t seed, double delta_h_star = 0.25)
{
    if (m < 3) throw std::invalid_argument("generate_terrain: m must be >= 3");
    if (!(roughness > 0.0 && roughness <= 1.0))
        throw std::invalid_argument("generate_terrain: roughness must lie in (0, 1]");
    if (!(delta_h_star > 0.0)) throw std::invalid_argument("generate_terrain: delta_h_star must be positive");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr int spacing = 4;
    const int lattice = (m - 1) / spacing + 2;
    std::vector<double> coarse(static_cast<std::size_t>(lattice) * lattice);
    for (double& v : coarse) v = unit(rng);

    std::vector<double> cells(static_cast<std::size_t>(m) * m);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c) {
            const double fr = static_cast<double>(r) / spacing, fc = static_cast<double>(c) / spacing;
            const int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
            const double tr = fr - r0, tc = fc - c0;
            auto L = [&](int i, int j) { return coarse[static_cast<std::size_t>(i) * lattice + j]; };
            const double smooth = (1 - tr) * ((1 - tc) * L(r0, c0) + tc * L(r0, c0 + 1)) +
                                  tr * ((1 - tc) * L(r0 + 1, c0) + tc * L(r0 + 1, c0 + 1));
            cells[static_cast<std::size_t>(r) * m + c] = (1.0 - roughness) * smooth + roughness * unit(rng);
        }
    }
    const auto [lo, hi] = std::minmax_element(cells.begin(), cells.end());
    const double min = *lo, span = *hi - *lo;
    for (double& v : cells) v = span > 0.0 ? std::clamp((v - min) / span, 0.0, 1.0) : 0.0;
    return WorldMap(MapKind::Terrain3D, m, std::move(cells), delta_h_star);
}

// ---------------------------------------------------------------------------------------
// Local patches and ground-truth kernels

struct LocalPatch {
    State center;
    int F = 0;
    std::vector<double> values;  // F*F, row-major
};

inline void check_kernel_size(int F)
{
    if (F <= 0 || F % 2 == 0) throw std::invalid_argument("kernel size F must be odd and positive");
}

/// F x F window centred on s. Outside the grid: 0 for occupancy maps; a sentinel
/// 10 * delta_h_star above h(s) for terrain. Terrain values are stored relative to h(s).
inline LocalPatch extract_patch(const WorldMap& map, State s, int F)
{
    check_kernel_size(F);
    if (!map.in_bounds(s)) throw std::out_of_range("extract_patch: state out of bounds");
    LocalPatch p{s, F, std::vector<double>(static_cast<std::size_t>(F) * F)};
    const int h = F / 2;
    const bool terrain = map.kind() == MapKind::Terrain3D;
    const double base = terrain ? map.at(s) : 0.0;
    const double pad = terrain ? base + 10.0 * map.delta_h_star() : 0.0;
    for (int i = 0; i < F; ++i) {
        for (int j = 0; j < F; ++j) {
            const int r = s.row + i - h, c = s.col + j - h;
            const double v = map.in_bounds(r, c) ? map.at(r, c) : pad;
            p.values[static_cast<std::size_t>(i) * F + j] = terrain ? v - base : v;
        }
    }
    return p;
}

/// Flat index of the relative position (dr, dc) inside an F x F kernel.
inline int kernel_index(int F, int dr, int dc)
{
    const int h = F / 2;
    if (dr < -h || dr > h || dc < -h || dc > h)
        throw std::out_of_range("offset lies outside the F x F window");
    return (dr + h) * F + (dc + h);
}

/// One-hot next-state kernels for every action: |A| slices of F*F, action-major.
inline std::vector<double> true_kernel(const WorldMap& map, State s, int F)
{
    check_kernel_size(F);
    if (!map.traversable(s)) throw std::invalid_argument("true_kernel: state is not traversable");
    const std::size_t slice = static_cast<std::size_t>(F) * F;
    std::vector<double> k(slice * kNumActions, 0.0);
    for (Action a : kAllActions) {
        const State t = step(map, s, a);
        k[index(a) * slice + kernel_index(F, t.row - s.row, t.col - s.col)] = 1.0;
    }
    return k;
}

// ---------------------------------------------------------------------------------------
// Map file: "CINMAP v1 <kind> <m> <delta_h_star>" then m rows of m numbers.

inline void write_map(std::ostream& os, const WorldMap& map)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", map.delta_h_star());
    os << "CINMAP v1 " << kind_name(map.kind()) << ' ' << map.size() << ' ' << buf << '\n';
    for (int r = 0; r < map.size(); ++r) {
        for (int c = 0; c < map.size(); ++c) {
            if (c) os << ' ';
            if (map.kind() == MapKind::Occupancy2D) {
                os << (map.at(r, c) == 1.0 ? '1' : '0');
            } else {
                std::snprintf(buf, sizeof buf, "%.9g", map.at(r, c));
                os << buf;
            }
        }
        os << '\n';
    }
}

inline WorldMap read_map(std::istream& is)
{
    std::string magic, version, kind;
    int m = 0;
    double dh = 0.0;
    if (!(is >> magic >> version >> kind >> m >> dh) || magic != "CINMAP" || version != "v1")
        throw std::runtime_error("not a CINMAP v1 file");
    if (m < 3 || m > 100000) throw std::runtime_error("CINMAP: bad map side");
    std::vector<double> cells(static_cast<std::size_t>(m) * m);
    for (double& v : cells)
        if (!(is >> v)) throw std::runtime_error("CINMAP: truncated cell data");
    return WorldMap(parse_kind(kind), m, std::move(cells), dh);
}

inline void save_map(const std::string& path, const WorldMap& map)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_map(os, map);
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline WorldMap load_map(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_map(is);
}

}  // namespace cin
