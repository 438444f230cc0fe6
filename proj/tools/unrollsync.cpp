#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "unrollsync/harness.hpp"
#include "unrollsync/metrics.hpp"

using namespace unrollsync;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
    std::size_t threads = 1;
    bool quiet = false;
};

ExperimentConfig config_or_default(const Globals& g, ExperimentConfig fallback) {
    ExperimentConfig cfg = g.config.empty() ? std::move(fallback) : load_config(g.config);
    if (g.seed) cfg.seeds = {*g.seed};
    if (cfg.seeds.empty()) cfg.seeds = {0};
    return cfg;
}

RunOptions run_options(const Globals& g) {
    RunOptions o;
    o.threads = g.threads;
    o.quiet = g.quiet;
    o.log = &std::cerr;
    return o;
}

void say(const Globals& g, const std::string& line) {
    if (!g.quiet) std::cerr << line << '\n';
}

// Model training settings come from the first lambda and depth of the config.
TrainConfig train_config(const ExperimentConfig& cfg) {
    if (cfg.lambdas.empty()) throw std::invalid_argument("config key 'lambdas': must not be empty");
    if (cfg.depths.empty()) throw std::invalid_argument("config key 'depths': must not be empty");
    TrainConfig tc;
    tc.task = cfg.task;
    tc.loss = cfg.loss;
    tc.samples = cfg.train_samples;
    tc.epochs = cfg.epochs;
    tc.learning_rate = cfg.learning_rate;
    tc.batch_size = cfg.batch_size;
    tc.seed = data_seed(cfg.seeds.front(), cfg.lambdas.front());
    tc.n = cfg.n;
    tc.lambda = cfg.lambdas.front();
    tc.length = cfg.length;
    tc.grid_factor = cfg.grid_factor;
    return tc;
}

int cmd_generate(const Globals& g, const std::string& task_name, std::size_t n, double lambda, std::size_t count,
                 std::size_t length) {
    if (g.out.empty()) throw std::invalid_argument("generate needs --out");
    const Task task = parse_task(task_name);
    const std::uint64_t seed = g.seed.value_or(0);
    std::ofstream out(g.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + g.out);
    if (is_mra(task)) {
        std::vector<MraBatch> items;
        for (std::size_t i = 0; i < count; ++i) {
            Rng rng = Rng::stream(seed, i);
            items.push_back(task == Task::MraZ2 ? gen_mra_z2(length, n, lambda, rng)
                                                : gen_mra_shift(length, n, lambda, rng));
        }
        write_mra_batches(out, items);
    } else {
        std::vector<SyncInstance> items;
        for (std::size_t i = 0; i < count; ++i) {
            Rng rng = Rng::stream(seed, i);
            items.push_back(generate(task_group(task), n, lambda, rng));
        }
        write_sync_instances(out, items);
    }
    say(g, "wrote " + std::to_string(count) + " " + std::string(to_string(task)) + " instances to " + g.out);
    return 0;
}

int cmd_train(const Globals& g, const std::string& history_path) {
    if (g.out.empty()) throw std::invalid_argument("train needs --out");
    ExperimentConfig fallback = figure_configs("fig2", Scale::Desk, 0).at(1);
    fallback.depths = {9};
    const ExperimentConfig cfg = config_or_default(g, fallback);
    const TrainConfig tc = train_config(cfg);
    const std::size_t depth = cfg.depths.front();
    UnrolledModel model = build_model(task_group(cfg.task), depth, tc.lambda, cfg.weight_sharing,
                                      splitmix64_mix(tc.seed + depth));
    const auto history = train(model, tc, [&](const EpochRecord& r) {
        if (!g.quiet)
            std::fprintf(stderr, "epoch %zu loss %.6f validation %.6f (%.2f s)\n", r.epoch, r.train_loss,
                         r.validation_error, r.seconds);
    });
    save_model(model, g.out);
    const std::string hpath = history_path.empty() ? g.out + ".history.csv" : history_path;
    std::ofstream h(hpath, std::ios::binary);
    if (!h) throw std::runtime_error("cannot write " + hpath);
    h << "# unrollsync " << kToolkitVersion << " config_hash=" << config_hash(cfg) << '\n';
    h << "epoch,train_loss,validation_error,seconds\n";
    for (const auto& r : history.epochs) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.validation_error, r.seconds);
        h << buf;
    }
    say(g, "saved model to " + g.out + ", history to " + hpath);
    return 0;
}

int cmd_eval(const Globals& g, const std::string& model_path) {
    if (model_path.empty()) throw std::invalid_argument("eval needs --model");
    if (g.config.empty()) throw std::invalid_argument("eval needs --config");
    const ExperimentConfig cfg = config_or_default(g, {});
    UnrolledModel model = load_model(model_path);
    if (model.group != task_group(cfg.task))
        throw std::invalid_argument("group mismatch: model " + model_path + " solves " +
                                    std::string(to_string(model.group)) + " but the config task " +
                                    std::string(to_string(cfg.task)) + " needs " +
                                    std::string(to_string(task_group(cfg.task))));
    if (cfg.lambdas.empty()) throw std::invalid_argument("config key 'lambdas': must not be empty");
    std::vector<ResultRow> rows;
    for (double lambda : cfg.lambdas)
        for (std::uint64_t seed : cfg.seeds) {
            const Dataset test =
                make_dataset(cfg.task, cfg.n, lambda, cfg.test_samples, test_seed(data_seed(seed, lambda)), cfg.length);
            auto add = [&](const std::string& algo, std::size_t depth, const std::vector<double>& errors) {
                const MeanStd ms = mean_std(errors);
                ResultRow r;
                r.experiment = cfg.name;
                r.group = std::string(to_string(cfg.task));
                r.algorithm = algo;
                r.metric = std::string(metric_name(cfg.task, cfg.loss));
                r.lambda = lambda;
                r.depth_or_iters = depth;
                r.seed = seed;
                r.error_mean = ms.mean;
                r.error_std = ms.std;
                r.n_test = errors.size();
                rows.push_back(r);
                say(g, algo + " lambda " + std::to_string(lambda) + ": " + std::to_string(ms.mean));
            };
            add("unrolled", model.depth, evaluate_unrolled(model, test, cfg.loss, cfg.grid_factor));
            for (const auto& s : cfg.solvers)
                if (s != "unrolled")
                    add(s, s == "spectral" ? 0 : cfg.iterations,
                        evaluate_classical(test, s, cfg.iterations, cfg.loss, cfg.grid_factor));
        }
    if (g.out.empty())
        write_csv(std::cout, cfg, rows);
    else
        write_csv(g.out, cfg, rows);
    return 0;
}

int cmd_run(const Globals& g) {
    if (g.config.empty()) throw std::invalid_argument("run needs --config");
    ExperimentConfig cfg = config_or_default(g, {});
    const std::string path = !g.out.empty() ? g.out : !cfg.output.empty() ? cfg.output : cfg.name + ".csv";
    const auto rows = run_experiment(cfg, run_options(g));
    write_csv(path, cfg, rows);
    say(g, "wrote " + path);
    return 0;
}

int cmd_bench(const Globals& g) {
    ExperimentConfig cfg = config_or_default(g, figure_configs("table1", Scale::Desk, 0).front());
    if (cfg.kind != ExperimentKind::RuntimeBench)
        throw std::invalid_argument("config key 'kind': bench needs runtime-bench");
    const auto rows = run_experiment(cfg, run_options(g));
    if (!g.out.empty()) write_csv(g.out, cfg, rows);
    std::printf("%-10s %14s %16s %18s\n", "algorithm", "error", "total [s]", "per iteration [ms]");
    for (const auto& r : rows) {
        std::printf("%-10s %14.6f %16.3f ", r.algorithm.c_str(), r.error_mean, r.wall_ms.value_or(0.0) / 1000.0);
        if (r.iter_ms)
            std::printf("%18.3f\n", *r.iter_ms);
        else
            std::printf("%18s\n", "-");
    }
    return 0;
}

int cmd_reproduce(const Globals& g, const std::string& id, const std::string& scale, bool plot) {
    ReproduceOptions o;
    o.scale = parse_scale(scale);
    o.seed = g.seed.value_or(0);
    o.out_dir = g.out.empty() ? "." : g.out;
    o.plot = plot;
    o.run = run_options(g);
    for (const auto& p : reproduce(id, o)) say(g, "wrote " + p.string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unrolled group synchronization: data generation, training, evaluation and figure reproduction"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Seed (overrides the config's seed list)");
    app.add_option("--config", g.config, "Experiment config (JSON)");
    app.add_option("--out", g.out, "Output file or directory");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--quiet", g.quiet, "Suppress progress output");

    std::string task = "z2", history, model, id, scale = "desk";
    std::size_t n = 20, count = 1000, length = 21;
    double lambda = 1.5;
    bool plot = false;

    auto* gen = app.add_subcommand("generate", "Write a dataset file");
    gen->add_option("--task", task, "z2, u1, so3, mra-z2 or mra-shift");
    gen->add_option("--n", n, "Number of group elements");
    gen->add_option("--lambda", lambda, "SNR");
    gen->add_option("--count", count, "Number of instances");
    gen->add_option("--length", length, "MRA signal length");

    auto* tr = app.add_subcommand("train", "Train an unrolled model");
    tr->add_option("--history", history, "History CSV (default <out>.history.csv)");

    auto* ev = app.add_subcommand("eval", "Evaluate a model on the config's test set");
    ev->add_option("--model", model, "Model file")->required();

    auto* run = app.add_subcommand("run", "Run an experiment config");
    auto* bench = app.add_subcommand("bench", "Run-time benchmark");

    auto* rep = app.add_subcommand("reproduce", "Reproduce a figure or table");
    rep->add_option("id", id, "fig2 ... fig10 or table1")->required();
    rep->add_option("--scale", scale, "full or desk")->check(CLI::IsMember({"full", "desk"}));
    rep->add_flag("--plot", plot, "Also write SVG charts");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(g, task, n, lambda, count, length);
        if (tr->parsed()) return cmd_train(g, history);
        if (ev->parsed()) return cmd_eval(g, model);
        if (run->parsed()) return cmd_run(g);
        if (bench->parsed()) return cmd_bench(g);
        if (rep->parsed()) return cmd_reproduce(g, id, scale, plot);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
