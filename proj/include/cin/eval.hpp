#pragma once
// eval.hpp - datasets of (map, goal) pairs and the %Optimal / %Success / %Error protocol.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cin/capability.hpp"
#include "cin/oracle.hpp"
#include "cin/parallel.hpp"
#include "cin/planner.hpp"

namespace cin {

enum class Split { Train = 0, Val = 1, Test = 2 };

inline constexpr std::array<Split, 3> kAllSplits{Split::Train, Split::Val, Split::Test};

inline const char* split_name(Split s)
{
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

inline Split parse_split(const std::string& s)
{
    for (Split sp : kAllSplits)
        if (s == split_name(sp)) return sp;
    throw std::invalid_argument("unknown split '" + s + "' (expected train, val or test)");
}

struct DatasetEntry {
    WorldMap map;
    State goal;
    std::uint64_t seed = 0;  // generator seed of this map
};

struct SplitCounts {
    int train = 0;
    int val = 0;
    int test = 0;

    int of(Split s) const { return s == Split::Train ? train : s == Split::Val ? val : test; }
};

struct GenerationOptions {
    double delta_h_star = 0.25;
    double roughness = 0.3;
    int max_attempts = 20;
};

struct Dataset {
    MapKind kind = MapKind::Occupancy2D;
    int m = 0;
    std::uint64_t seed = 0;
    GenerationOptions options;
    std::array<std::vector<DatasetEntry>, 3> splits;

    std::vector<DatasetEntry>& split(Split s) { return splits[static_cast<std::size_t>(s)]; }
    const std::vector<DatasetEntry>& split(Split s) const { return splits[static_cast<std::size_t>(s)]; }
    std::size_t total() const { return splits[0].size() + splits[1].size() + splits[2].size(); }
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of map `idx` in `split`; distinct splits never share a generation seed stream.
inline std::uint64_t map_seed(std::uint64_t dataset_seed, Split split, std::size_t idx, int attempt = 0)
{
    return splitmix64(splitmix64(splitmix64(dataset_seed) ^ (static_cast<std::uint64_t>(split) + 1)) ^
                      (static_cast<std::uint64_t>(idx) << 8 | static_cast<std::uint64_t>(attempt)));
}

/// Generates one map and a uniformly drawn goal that at least one other cell can reach.
inline DatasetEntry generate_entry(MapKind kind, int m, std::uint64_t seed, const GenerationOptions& opt)
{
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
        const std::uint64_t s = splitmix64(seed + static_cast<std::uint64_t>(attempt));
        WorldMap map = kind == MapKind::Occupancy2D ? generate_maze(m, s)
                                                    : generate_terrain(m, opt.roughness, s, opt.delta_h_star);
        const std::vector<State> free = traversable_states(map);
        if (free.size() < 2) continue;
        std::mt19937_64 rng(splitmix64(s));
        std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
        for (int draw = 0; draw < 100; ++draw) {
            const State goal = free[pick(rng)];
            const Grid<int> dist = bfs_distances(map, goal);
            const bool ok = std::any_of(free.begin(), free.end(),
                                        [&](State x) { return !(x == goal) && dist[x] != kUnreachable; });
            if (ok) return {std::move(map), goal, s};
        }
    }
    throw std::runtime_error("dataset generation failed: no map with a reachable goal after " +
                             std::to_string(opt.max_attempts) + " attempts");
}

inline Dataset generate_dataset(int m, const SplitCounts& counts, MapKind kind, std::uint64_t seed,
                                const GenerationOptions& opt = {})
{
    if (counts.train <= 0 || counts.val <= 0 || counts.test <= 0)
        throw std::invalid_argument("generate_dataset: split counts must be positive");
    Dataset ds;
    ds.kind = kind;
    ds.m = m;
    ds.seed = seed;
    ds.options = opt;
    for (Split sp : kAllSplits) {
        auto& entries = ds.split(sp);
        for (int i = 0; i < counts.of(sp); ++i)
            entries.push_back(generate_entry(kind, m, map_seed(seed, sp, static_cast<std::size_t>(i)), opt));
    }
    return ds;
}

inline std::vector<WorldMap> maps_of(const std::vector<DatasetEntry>& entries)
{
    std::vector<WorldMap> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.map);
    return out;
}

// ---------------------------------------------------------------------------------------
// Dataset directory: maps/<split>/<idx>.cinmap, goals.csv, meta.json

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream goals(dir / "goals.csv");
    if (!goals) throw std::runtime_error("cannot write " + (dir / "goals.csv").string());
    goals << "split,index,row,col,seed\n";
    for (Split sp : kAllSplits) {
        const fs::path sub = dir / "maps" / split_name(sp);
        fs::create_directories(sub);
        const auto& entries = ds.split(sp);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            save_map((sub / (std::to_string(i) + ".cinmap")).string(), entries[i].map);
            goals << split_name(sp) << ',' << i << ',' << entries[i].goal.row << ',' << entries[i].goal.col << ','
                  << entries[i].seed << '\n';
        }
    }
    nlohmann::ordered_json meta;
    meta["format"] = "cin-dataset v1";
    meta["kind"] = kind_name(ds.kind);
    meta["m"] = ds.m;
    meta["seed"] = ds.seed;
    meta["delta_h_star"] = ds.options.delta_h_star;
    meta["roughness"] = ds.options.roughness;
    meta["counts"] = {{"train", ds.splits[0].size()}, {"val", ds.splits[1].size()}, {"test", ds.splits[2].size()}};
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) throw std::runtime_error("missing " + (dir / "meta.json").string());
    const nlohmann::json meta = nlohmann::json::parse(meta_in);
    Dataset ds;
    ds.kind = parse_kind(meta.at("kind").get<std::string>());
    ds.m = meta.at("m").get<int>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.options.delta_h_star = meta.at("delta_h_star").get<double>();
    ds.options.roughness = meta.at("roughness").get<double>();

    std::ifstream goals(dir / "goals.csv");
    if (!goals) throw std::runtime_error("missing " + (dir / "goals.csv").string());
    std::string line;
    std::getline(goals, line);
    while (std::getline(goals, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string split, idx, row, col, seed;
        if (!std::getline(ss, split, ',') || !std::getline(ss, idx, ',') || !std::getline(ss, row, ',') ||
            !std::getline(ss, col, ',') || !std::getline(ss, seed, ','))
            throw std::runtime_error("goals.csv: malformed line '" + line + "'");
        const Split sp = parse_split(split);
        const std::size_t i = std::stoul(idx);
        auto& entries = ds.split(sp);
        if (i != entries.size()) throw std::runtime_error("goals.csv: indices must be consecutive per split");
        DatasetEntry e{load_map((dir / "maps" / split / (idx + ".cinmap")).string()), {std::stoi(row), std::stoi(col)},
                       std::stoull(seed)};
        if (e.map.size() != ds.m || e.map.kind() != ds.kind) throw std::runtime_error("map does not match meta.json");
        if (!e.map.traversable(e.goal)) throw std::runtime_error("goals.csv: goal is not traversable");
        entries.push_back(std::move(e));
    }
    return ds;
}

// ---------------------------------------------------------------------------------------
// Metrics

struct MapEval {
    std::size_t index = 0;
    long states = 0;   // reachable, non-goal traversable start states
    long success = 0;
    long optimal = 0;
    long errors = 0;   // greedy first action is not among the oracle-optimal actions
};

struct EvalConfig {
    std::string kind;
    std::string split;
    std::string model;
    int m = 0;
    double gamma = 0.0;
    int K = 0;
    int F = 0;
    double r_p = 0.0;
    double r_n = 0.0;
    std::uint64_t seed = 0;
    friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

inline double pct(long num, long den) { return den > 0 ? 100.0 * static_cast<double>(num) / static_cast<double>(den) : 0.0; }

/// Percentages are reported to one decimal.
inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

struct EvalReport {
    EvalConfig config;
    std::vector<MapEval> maps;

    long states() const { return sum(&MapEval::states); }
    long success() const { return sum(&MapEval::success); }
    long optimal() const { return sum(&MapEval::optimal); }
    long errors() const { return sum(&MapEval::errors); }

    double pct_opt() const { return pct(optimal(), states()); }
    double pct_suc() const { return pct(success(), states()); }
    double pct_err() const { return pct(errors(), states()); }

    friend bool operator==(const EvalReport& a, const EvalReport& b)
    {
        if (!(a.config == b.config) || a.maps.size() != b.maps.size()) return false;
        for (std::size_t i = 0; i < a.maps.size(); ++i) {
            const auto &x = a.maps[i], &y = b.maps[i];
            if (x.index != y.index || x.states != y.states || x.success != y.success || x.optimal != y.optimal ||
                x.errors != y.errors)
                return false;
        }
        return true;
    }

private:
    long sum(long MapEval::*field) const
    {
        long s = 0;
        for (const auto& m : maps) s += m.*field;
        return s;
    }
};

/// Produces the Q map a policy uses for one (map, goal).
using QMapSource = std::function<std::vector<double>(const WorldMap&, State goal)>;

inline MapEval evaluate_map(const WorldMap& map, State goal, const std::vector<double>& q, const HyperParams& hp)
{
    const OracleSolution sol = solve_exact(map, goal, hp);
    VIResult plan;
    plan.q = q;
    plan.v = Grid<double>(map.size(), 0.0);
    MapEval row;
    const int cap = hp.step_cap(map.size());
    for (const State s : traversable_states(map)) {
        if (s == goal || !sol.reachable(s)) continue;
        ++row.states;
        if (!((optimal_actions(sol, s) >> index(greedy_action(plan, s))) & 1u)) ++row.errors;
        const RolloutResult r = rollout_plan(map, plan, goal, s, cap);
        if (r.reached()) {
            ++row.success;
            if (r.length() == sol.dist[s]) ++row.optimal;
        }
    }
    return row;
}

/// Every reachable non-goal state of every map is rolled out under the policy's Q map.
inline EvalReport evaluate_with(const std::vector<DatasetEntry>& entries, const HyperParams& hp, const QMapSource& source,
                                int jobs = 1)
{
    hp.validate();
    if (entries.empty()) throw std::invalid_argument("evaluate: split is empty");
    EvalReport report;
    report.maps.resize(entries.size());
    parallel_for(entries.size(), jobs, [&](std::size_t i) {
        report.maps[i] = evaluate_map(entries[i].map, entries[i].goal, source(entries[i].map, entries[i].goal), hp);
        report.maps[i].index = i;
    });
    const int m = entries.front().map.size();
    report.config.kind = kind_name(entries.front().map.kind());
    report.config.m = m;
    report.config.gamma = hp.gamma;
    report.config.K = hp.iterations(m);
    report.config.F = hp.F;
    report.config.r_p = hp.r_p;
    report.config.r_n = hp.r_n;
    return report;
}

inline EvalReport evaluate(const CapabilityNet& net, const std::vector<DatasetEntry>& entries, const HyperParams& hp,
                           int jobs = 1)
{
    EvalReport r = evaluate_with(
        entries, hp,
        [&](const WorldMap& map, State goal) {
            return vi_forward(build_kernel_field(map, net, hp.F), sparse_reward(map, goal, hp), goal, hp).q;
        },
        jobs);
    r.config.model = "capability";
    return r;
}

/// Planner driven by the ground-truth one-hot kernels.
inline EvalReport evaluate_true_kernels(const std::vector<DatasetEntry>& entries, const HyperParams& hp, int jobs = 1)
{
    EvalReport r = evaluate_with(
        entries, hp,
        [&](const WorldMap& map, State goal) {
            return vi_forward(true_kernel_field(map, hp.F), sparse_reward(map, goal, hp), goal, hp).q;
        },
        jobs);
    r.config.model = "true-kernels";
    return r;
}

/// The oracle's own converged Q map.
inline EvalReport evaluate_expert(const std::vector<DatasetEntry>& entries, const HyperParams& hp, int jobs = 1)
{
    EvalReport r = evaluate_with(
        entries, hp, [&](const WorldMap& map, State goal) { return solve_exact(map, goal, hp).q_star; }, jobs);
    r.config.model = "expert";
    return r;
}

// ---------------------------------------------------------------------------------------
// Report files: <stem>.csv and <stem>.json

inline std::string format_pct(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", round1(v));
    return buf;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r)
{
    nlohmann::ordered_json j;
    j["format"] = "cin-report v1";
    j["config"] = {{"kind", r.config.kind}, {"split", r.config.split}, {"model", r.config.model}, {"m", r.config.m},
                   {"gamma", r.config.gamma}, {"K", r.config.K}, {"F", r.config.F}, {"r_p", r.config.r_p},
                   {"r_n", r.config.r_n}, {"seed", r.config.seed}};
    j["totals"] = {{"states", r.states()}, {"success", r.success()}, {"optimal", r.optimal()}, {"errors", r.errors()},
                   {"pct_opt", round1(r.pct_opt())}, {"pct_suc", round1(r.pct_suc())}, {"pct_err", round1(r.pct_err())}};
    auto rows = nlohmann::ordered_json::array();
    for (const auto& m : r.maps)
        rows.push_back({{"map", m.index}, {"states", m.states}, {"success", m.success}, {"optimal", m.optimal},
                        {"errors", m.errors}});
    j["maps"] = rows;
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j)
{
    if (j.value("format", "") != "cin-report v1") throw std::runtime_error("not a cin-report v1 document");
    EvalReport r;
    const auto& c = j.at("config");
    r.config = {c.at("kind").get<std::string>(), c.at("split").get<std::string>(), c.at("model").get<std::string>(),
                c.at("m").get<int>(), c.at("gamma").get<double>(), c.at("K").get<int>(), c.at("F").get<int>(),
                c.at("r_p").get<double>(), c.at("r_n").get<double>(), c.at("seed").get<std::uint64_t>()};
    for (const auto& row : j.at("maps"))
        r.maps.push_back({row.at("map").get<std::size_t>(), row.at("states").get<long>(), row.at("success").get<long>(),
                          row.at("optimal").get<long>(), row.at("errors").get<long>()});
    return r;
}

inline void emit_report(const EvalReport& r, const std::filesystem::path& stem)
{
    if (r.maps.empty() || r.states() == 0) throw std::invalid_argument("emit_report: report has no evaluated states");
    std::filesystem::path json_path = stem, csv_path = stem;
    json_path += ".json";
    csv_path += ".csv";
    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("cannot write " + json_path.string());
    js << report_to_json(r).dump(2) << '\n';

    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << "map,states,success,optimal,errors,pct_opt,pct_suc,pct_err\n";
    for (const auto& m : r.maps)
        csv << m.index << ',' << m.states << ',' << m.success << ',' << m.optimal << ',' << m.errors << ','
            << format_pct(pct(m.optimal, m.states)) << ',' << format_pct(pct(m.success, m.states)) << ','
            << format_pct(pct(m.errors, m.states)) << '\n';
    csv << "total," << r.states() << ',' << r.success() << ',' << r.optimal() << ',' << r.errors() << ','
        << format_pct(r.pct_opt()) << ',' << format_pct(r.pct_suc()) << ',' << format_pct(r.pct_err()) << '\n';
    if (!js || !csv) throw std::runtime_error("report write failed");
}

inline EvalReport read_report(const std::filesystem::path& json_path)
{
    std::ifstream is(json_path);
    if (!is) throw std::runtime_error("cannot open " + json_path.string());
    return report_from_json(nlohmann::json::parse(is));
}

}  // namespace cin
