#pragma once
// cli.hpp - the `cin` command line: dataset generation, both training regimes, planning,
// evaluation and map dumps.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cin/cin.hpp"

namespace cin::cli {

namespace fs = std::filesystem;

struct RunConfig {
    std::string subcommand;
    std::string kind = "2d";
    int m = 8;
    int train = 1000;
    int val = 100;
    int test = 100;
    bool full_scale = false;
    double delta_h_star = 0.25;
    double roughness = 0.3;

    HyperParams hp;
    std::uint64_t seed = 0;
    int jobs = 1;

    std::string data;
    std::string split = "test";
    std::string model;
    std::string policy = "model";  // model | true-kernels | expert
    std::string map;
    std::string start;
    std::string goal;
    std::string out = ".";

    int epochs = 0;  // 0: regime default
    int batch = 0;
    double lr = 0.0;
    double lr_decay = 0.0;  // 0: regime default
    int width = 64;
    int episodes = 0;
    int episode_len = 25;
    std::string curriculum = "off";
    int max_maps = 0;
};

inline State parse_state(const std::string& text, const char* what)
{
    const auto comma = text.find(',');
    if (comma == std::string::npos) throw std::invalid_argument(std::string(what) + " must be given as row,col");
    try {
        std::size_t a = 0, b = 0;
        const int r = std::stoi(text.substr(0, comma), &a);
        const int c = std::stoi(text.substr(comma + 1), &b);
        if (a != comma || b != text.size() - comma - 1) throw std::invalid_argument("trailing characters");
        return {r, c};
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string(what) + " must be given as row,col (got '" + text + "')");
    }
}

inline void write_log_csv(const fs::path& path, const std::vector<EpochLog>& log)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "epoch,mean_loss,pct_err,wall_ms\n";
    char buf[128];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.4f,%.1f\n", r.epoch, r.mean_loss, r.pct_err, r.wall_ms);
        os << buf;
    }
}

inline void gen_maps(const RunConfig& cfg, std::ostream& out)
{
    SplitCounts counts{cfg.train, cfg.val, cfg.test};
    if (cfg.full_scale) counts = {10000, 1000, 1000};
    GenerationOptions opt;
    opt.delta_h_star = cfg.delta_h_star;
    opt.roughness = cfg.roughness;
    const Dataset ds = generate_dataset(cfg.m, counts, parse_kind(cfg.kind), cfg.seed, opt);
    save_dataset(ds, cfg.out);
    out << "wrote " << ds.total() << " maps to " << cfg.out << '\n';
}

inline void train_cap(const RunConfig& cfg, std::ostream& out)
{
    const Dataset ds = load_dataset(cfg.data);
    const auto train_maps = maps_of(ds.split(Split::Train));
    const auto val_maps = maps_of(ds.split(Split::Val));
    // Terrain needs far more samples near the traversability threshold than occupancy maps.
    const bool terrain = ds.kind == MapKind::Terrain3D;
    const int per_map = terrain ? 30 : 4;
    const int episodes = cfg.episodes > 0 ? cfg.episodes : per_map * static_cast<int>(train_maps.size());
    const auto samples = collect_samples(train_maps, episodes, cfg.episode_len, cfg.seed, cfg.hp.F);

    CapabilityNet net = CapabilityNet::random(cfg.hp.F, cfg.seed, cfg.width, 4, 0.1);
    AdamState adam;
    adam.lr = cfg.lr > 0.0 ? cfg.lr : 1e-3;
    SupervisedOptions opt;
    opt.epochs = cfg.epochs > 0 ? cfg.epochs : (terrain ? 25 : 10);
    opt.batch = cfg.batch > 0 ? cfg.batch : 64;
    opt.seed = cfg.seed;
    opt.lr_decay = cfg.lr_decay > 0.0 ? cfg.lr_decay : (terrain ? 0.88 : 1.0);

    const bool curriculum = cfg.curriculum == "on" || (cfg.curriculum == "auto" && terrain);
    if (cfg.curriculum != "on" && cfg.curriculum != "off" && cfg.curriculum != "auto")
        throw std::invalid_argument("--curriculum must be auto, on or off");
    const auto log = curriculum ? train_curriculum(net, curriculum_order(samples, ds.options.delta_h_star, cfg.seed), adam, opt)
                                : train_supervised(net, samples, adam, opt);

    fs::create_directories(cfg.out);
    save_net((fs::path(cfg.out) / "model.cinnet").string(), net);
    write_log_csv(fs::path(cfg.out) / "train_log.csv", log);

    const auto held_out = collect_samples(val_maps.empty() ? train_maps : val_maps,
                                          std::max(1, episodes / 10), cfg.episode_len, cfg.seed + 1, cfg.hp.F);
    const double heldout_err = argmax_error_pct(net, held_out);
    nlohmann::ordered_json summary{{"samples", samples.size()},
                                   {"curriculum", curriculum},
                                   {"final_loss", log.empty() ? 0.0 : log.back().mean_loss},
                                   {"heldout_samples", held_out.size()},
                                   {"heldout_accuracy_pct", 100.0 - heldout_err}};
    std::ofstream(fs::path(cfg.out) / "train_summary.json") << summary.dump(2) << '\n';
    char buf[160];
    std::snprintf(buf, sizeof buf, "trained on %zu samples; held-out next-state accuracy %.2f%%\n", samples.size(),
                  100.0 - heldout_err);
    out << buf;
}

inline void train_e2e_cmd(const RunConfig& cfg, std::ostream& out)
{
    const Dataset ds = load_dataset(cfg.data);
    auto entries = ds.split(Split::Train);
    if (cfg.max_maps > 0 && entries.size() > static_cast<std::size_t>(cfg.max_maps))
        entries.resize(static_cast<std::size_t>(cfg.max_maps));
    const auto maps = maps_of(entries);
    std::vector<std::vector<ILSample>> per_map(entries.size());
    parallel_for(entries.size(), cfg.jobs, [&](std::size_t i) {
        per_map[i] = make_il_samples(i, entries[i].map, solve_exact(entries[i].map, entries[i].goal, cfg.hp));
    });
    std::vector<ILSample> samples;
    for (auto& v : per_map) samples.insert(samples.end(), v.begin(), v.end());

    CapabilityNet net = CapabilityNet::random(cfg.hp.F, cfg.seed, cfg.width);
    AdamState adam;
    adam.lr = cfg.lr > 0.0 ? cfg.lr : 2e-3;
    E2EOptions opt;
    opt.epochs = cfg.epochs > 0 ? cfg.epochs : 50;
    opt.batch = cfg.batch > 0 ? cfg.batch : 8;
    opt.seed = cfg.seed;
    opt.jobs = cfg.jobs;
    opt.lr_decay = cfg.lr_decay > 0.0 ? cfg.lr_decay : 0.5;
    const auto log = train_e2e(net, maps, samples, adam, cfg.hp, opt);

    fs::create_directories(cfg.out);
    save_net((fs::path(cfg.out) / "model.cinnet").string(), net);
    write_log_csv(fs::path(cfg.out) / "train_log.csv", log);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu samples, %%Err %.2f -> %.2f\n", samples.size(), log.front().pct_err,
                  log.back().pct_err);
    out << buf;
}

/// Q map for the selected policy on one (map, goal).
inline std::vector<double> policy_q(const RunConfig& cfg, const WorldMap& map, State goal,
                                    const std::optional<CapabilityNet>& net)
{
    if (cfg.policy == "expert") return solve_exact(map, goal, cfg.hp).q_star;
    const KernelField field = cfg.policy == "true-kernels" ? true_kernel_field(map, cfg.hp.F)
                                                           : build_kernel_field(map, *net, cfg.hp.F);
    return vi_forward(field, sparse_reward(map, goal, cfg.hp), goal, cfg.hp).q;
}

inline std::optional<CapabilityNet> load_policy_net(const RunConfig& cfg)
{
    if (cfg.policy != "model" && cfg.policy != "true-kernels" && cfg.policy != "expert")
        throw std::invalid_argument("--policy must be model, true-kernels or expert");
    if (cfg.policy != "model") return std::nullopt;
    if (cfg.model.empty()) throw std::invalid_argument("--model is required with --policy model");
    CapabilityNet net = load_net(cfg.model);
    if (net.input_size() != cfg.hp.F * cfg.hp.F) throw std::invalid_argument("model input does not match --F");
    return net;
}

inline void plan_cmd(const RunConfig& cfg, std::ostream& out)
{
    if (cfg.map.empty()) throw std::invalid_argument("--map is required");
    const WorldMap map = load_map(cfg.map);
    const State start = parse_state(cfg.start, "--start");
    const State goal = parse_state(cfg.goal, "--goal");
    if (!map.traversable(start)) throw std::invalid_argument("--start is not a traversable cell");
    if (!map.traversable(goal)) throw std::invalid_argument("--goal is not a traversable cell");
    const auto net = load_policy_net(cfg);

    VIResult plan;
    plan.q = policy_q(cfg, map, goal, net);
    plan.v = Grid<double>(map.size(), 0.0);
    const RolloutResult r = rollout_plan(map, plan, goal, start, cfg.hp.step_cap(map.size()));

    fs::create_directories(cfg.out);
    const fs::path path = fs::path(cfg.out) / "trajectory.txt";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "# outcome " << outcome_name(r.outcome) << " length " << r.length() << '\n';
    for (const State s : r.trajectory) os << s.row << ',' << s.col << '\n';
    out << outcome_name(r.outcome) << " after " << r.length() << " steps; wrote " << path.string() << '\n';
}

inline void eval_cmd(const RunConfig& cfg, std::ostream& out)
{
    const Dataset ds = load_dataset(cfg.data);
    const Split split = parse_split(cfg.split);
    const auto net = load_policy_net(cfg);
    EvalReport report = evaluate_with(
        ds.split(split), cfg.hp, [&](const WorldMap& map, State goal) { return policy_q(cfg, map, goal, net); }, cfg.jobs);
    report.config.split = split_name(split);
    report.config.model = cfg.policy == "model" ? fs::path(cfg.model).filename().string() : cfg.policy;
    report.config.seed = ds.seed;
    fs::create_directories(cfg.out);
    emit_report(report, fs::path(cfg.out) / "report");
    out << "%Opt " << format_pct(report.pct_opt()) << "  %Suc " << format_pct(report.pct_suc()) << "  %Err "
        << format_pct(report.pct_err()) << "  (" << report.states() << " states, " << report.maps.size() << " maps)\n";
}

inline void dump_maps(const RunConfig& cfg, std::ostream& out)
{
    if (cfg.map.empty()) throw std::invalid_argument("--map is required");
    const WorldMap map = load_map(cfg.map);
    const State goal = parse_state(cfg.goal, "--goal");
    if (!map.traversable(goal)) throw std::invalid_argument("--goal is not a traversable cell");
    const auto net = load_policy_net(cfg);

    const Grid<double> reward = sparse_reward(map, goal, cfg.hp);
    const KernelField field = net ? build_kernel_field(map, *net, cfg.hp.F) : true_kernel_field(map, cfg.hp.F);
    const VIResult vi = vi_forward(field, reward, goal, cfg.hp);
    const OracleSolution sol = solve_exact(map, goal, cfg.hp);
    Grid<double> policy(map.size(), -1.0);
    for (const State s : traversable_states(map)) policy[s] = index(greedy_action(vi, s));

    fs::create_directories(cfg.out);
    const auto dump = [&](const std::string& name, const Grid<double>& g) {
        write_matrix_text((fs::path(cfg.out) / (name + ".txt")).string(), g);
        write_pgm((fs::path(cfg.out) / (name + ".pgm")).string(), g);
    };
    dump("map", map_grid(map));
    dump("reward", reward);
    dump("value", vi.v);
    dump("value_oracle", sol.v_star);
    write_matrix_text((fs::path(cfg.out) / "policy.txt").string(), policy);
    out << "wrote map, reward, value, value_oracle and policy dumps to " << cfg.out << '\n';
}

/// Parses argv and runs one subcommand. Returns the process exit code; failures print a
/// single diagnostic line to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    RunConfig cfg;
    CLI::App app{"Capability iteration network planner", "cin"};
    app.set_config("--config", "", "flat key = value file; command-line flags take precedence");
    app.require_subcommand(1, 1);
    app.allow_config_extras(CLI::config_extras_mode::error);

    auto* seed_opt = app.add_option("--seed", cfg.seed, "random seed (falls back to $CIN_SEED)");
    app.add_option("--jobs", cfg.jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", cfg.out, "output directory");
    app.add_option("--kind", cfg.kind, "map kind: 2d or 3d");
    app.add_option("--m", cfg.m, "map side length");
    app.add_option("--train", cfg.train, "training maps");
    app.add_option("--val", cfg.val, "validation maps");
    app.add_option("--test", cfg.test, "test maps");
    app.add_flag("--full-scale", cfg.full_scale, "use 10000/1000/1000 maps");
    app.add_option("--delta-h", cfg.delta_h_star, "max traversable height difference (3d)");
    app.add_option("--roughness", cfg.roughness, "terrain roughness in (0, 1]");
    app.add_option("--gamma", cfg.hp.gamma, "discount");
    app.add_option("--K", cfg.hp.K, "value-iteration sweeps (-1: 10 * m)");
    app.add_option("--F", cfg.hp.F, "kernel size (odd)");
    app.add_option("--rp", cfg.hp.r_p, "goal reward");
    app.add_option("--rn", cfg.hp.r_n, "living cost (negative)");
    app.add_option("--max-steps", cfg.hp.max_steps, "rollout cap (0: m * m)");
    app.add_option("--data", cfg.data, "dataset directory");
    app.add_option("--split", cfg.split, "train, val or test");
    app.add_option("--model", cfg.model, "CINNET model file");
    app.add_option("--policy", cfg.policy, "model, true-kernels or expert");
    app.add_option("--map", cfg.map, "CINMAP file");
    app.add_option("--start", cfg.start, "start state row,col");
    app.add_option("--goal", cfg.goal, "goal state row,col");
    app.add_option("--epochs", cfg.epochs, "training epochs (0: regime default)");
    app.add_option("--batch", cfg.batch, "minibatch size (0: regime default)");
    app.add_option("--lr", cfg.lr, "Adam learning rate (0: regime default)");
    app.add_option("--lr-decay", cfg.lr_decay, "per-epoch learning-rate factor (0: regime default)");
    app.add_option("--width", cfg.width, "hidden layer width");
    app.add_option("--episodes", cfg.episodes, "random-policy episodes (0: 4 per map, 30 on terrain)");
    app.add_option("--episode-len", cfg.episode_len, "steps per episode");
    app.add_option("--curriculum", cfg.curriculum, "off (default), on, or auto: on for terrain");
    app.add_option("--max-maps", cfg.max_maps, "limit training maps (0: all)");

    const std::pair<const char*, const char*> subcommands[] = {
        {"gen-maps", "generate a train/val/test dataset of maps and goals"},
        {"train-cap", "train the capability net on random-policy transitions"},
        {"train-e2e", "train the capability net end to end through the planner"},
        {"plan", "plan one start/goal pair and write the trajectory"},
        {"eval", "score a policy on a dataset split"},
        {"dump-maps", "write reward, planner value, oracle value and greedy policy maps for one goal"}};
    for (const auto& [name, help] : subcommands) app.add_subcommand(name, help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "cin: " << e.what() << '\n';
        return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
    }

    try {
        cfg.subcommand = app.get_subcommands().front()->get_name();
        if (seed_opt->count() == 0)
            if (const char* env = std::getenv("CIN_SEED")) cfg.seed = std::stoull(env);
        cfg.hp.validate();
        if (cfg.subcommand == "gen-maps") gen_maps(cfg, out);
        else if (cfg.subcommand == "train-cap") train_cap(cfg, out);
        else if (cfg.subcommand == "train-e2e") train_e2e_cmd(cfg, out);
        else if (cfg.subcommand == "plan") plan_cmd(cfg, out);
        else if (cfg.subcommand == "eval") eval_cmd(cfg, out);
        else dump_maps(cfg, out);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "cin: error: " << msg << '\n';
        return 1;
    }
    return 0;
}

}  // namespace cin::cli
