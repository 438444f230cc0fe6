#include "unrollsync/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "unrollsync/metrics.hpp"
#include "unrollsync/mra.hpp"

namespace unrollsync {

using json = nlohmann::ordered_json;

std::string_view to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::SyncDepthSweep: return "sync-depth-sweep";
        case ExperimentKind::SyncSnrSweep: return "sync-snr-sweep";
        case ExperimentKind::MraDepthSweep: return "mra-depth-sweep";
        case ExperimentKind::RuntimeBench: return "runtime-bench";
    }
    return "?";
}

ExperimentKind parse_experiment_kind(std::string_view s) {
    for (auto k : {ExperimentKind::SyncDepthSweep, ExperimentKind::SyncSnrSweep, ExperimentKind::MraDepthSweep,
                   ExperimentKind::RuntimeBench})
        if (s == to_string(k)) return k;
    throw std::invalid_argument("unknown experiment kind '" + std::string(s) +
                                "' (expected sync-depth-sweep, sync-snr-sweep, mra-depth-sweep, runtime-bench)");
}

namespace {

bool solver_allowed(Task task, std::string_view s) {
    if (s == "unrolled" || s == "ppm") return true;
    if (task == Task::SyncSO3) return s == "spectral";
    return s == "pm" || s == "amp";
}

std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
    auto fail = [](const std::string& key, const std::string& why) {
        throw std::invalid_argument("config key '" + key + "': " + why);
    };
    if (cfg.name.empty()) fail("name", "must not be empty");
    if (cfg.name.find_first_of("/\\,\n") != std::string::npos) fail("name", "must not contain '/', '\\\\', ',' or newlines");
    const bool mra = is_mra(cfg.task);
    if (cfg.kind == ExperimentKind::MraDepthSweep && !mra) fail("task", "mra-depth-sweep needs mra-z2 or mra-shift");
    if (cfg.kind != ExperimentKind::MraDepthSweep && mra)
        fail("task", std::string(to_string(cfg.kind)) + " needs a synchronization task");
    if (cfg.n < 2) fail("n", "must be at least 2");
    if (mra && cfg.length < 2) fail("length", "must be at least 2");
    if (cfg.lambdas.empty()) fail("lambdas", "must not be empty");
    for (double l : cfg.lambdas)
        if (!(l > 0.0) || !std::isfinite(l)) fail("lambdas", "entries must be positive and finite");
    if (cfg.depths.empty()) fail("depths", "must not be empty");
    for (auto d : cfg.depths)
        if (d == 0) fail("depths", "entries must be at least 1");
    if (cfg.seeds.empty()) fail("seeds", "must not be empty");
    if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size())
        fail("seeds", "must be distinct");
    if (cfg.solvers.empty()) fail("solvers", "must not be empty");
    std::set<std::string> seen;
    for (const auto& s : cfg.solvers) {
        if (!solver_allowed(cfg.task, s))
            fail("solvers", "'" + s + "' is not available for task " + std::string(to_string(cfg.task)));
        if (!seen.insert(s).second) fail("solvers", "'" + s + "' listed twice");
    }
    if (cfg.loss == LossKind::Reconstruction && !mra) fail("loss", "reconstruction needs an MRA task");
    if (cfg.iterations == 0) fail("iterations", "must be at least 1");
    if (cfg.test_samples == 0) fail("test_samples", "must be at least 1");
    if (seen.contains("unrolled")) {
        if (cfg.train_samples < 2) fail("train_samples", "must be at least 2 to train");
        if (cfg.batch_size == 0) fail("batch_size", "must be at least 1");
        if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
            fail("learning_rate", "must be positive");
    }
    if (cfg.grid_factor == 0) fail("grid_factor", "must be at least 1");
}

std::string to_json(const ExperimentConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["kind"] = std::string(to_string(cfg.kind));
    j["task"] = std::string(to_string(cfg.task));
    j["n"] = cfg.n;
    j["length"] = cfg.length;
    j["lambdas"] = cfg.lambdas;
    j["depths"] = cfg.depths;
    j["iterations"] = cfg.iterations;
    j["train_samples"] = cfg.train_samples;
    j["test_samples"] = cfg.test_samples;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["learning_rate"] = cfg.learning_rate;
    j["seeds"] = cfg.seeds;
    j["solvers"] = cfg.solvers;
    j["loss"] = std::string(to_string(cfg.loss));
    j["weight_sharing"] = cfg.weight_sharing;
    j["grid_factor"] = cfg.grid_factor;
    j["timing"] = cfg.records_timing();
    j["output"] = cfg.output;
    return j.dump(2);
}

ExperimentConfig config_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    ExperimentConfig cfg;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const json& v = it.value();
        try {
            if (key == "name") cfg.name = v.get<std::string>();
            else if (key == "kind") cfg.kind = parse_experiment_kind(v.get<std::string>());
            else if (key == "task" || key == "group") cfg.task = parse_task(v.get<std::string>());
            else if (key == "n") cfg.n = v.get<std::size_t>();
            else if (key == "length") cfg.length = v.get<std::size_t>();
            else if (key == "lambdas") cfg.lambdas = v.get<std::vector<double>>();
            else if (key == "depths") cfg.depths = v.get<std::vector<std::size_t>>();
            else if (key == "iterations") cfg.iterations = v.get<std::size_t>();
            else if (key == "train_samples") cfg.train_samples = v.get<std::size_t>();
            else if (key == "test_samples") cfg.test_samples = v.get<std::size_t>();
            else if (key == "epochs") cfg.epochs = v.get<std::size_t>();
            else if (key == "batch_size") cfg.batch_size = v.get<std::size_t>();
            else if (key == "learning_rate") cfg.learning_rate = v.get<double>();
            else if (key == "seeds") cfg.seeds = v.get<std::vector<std::uint64_t>>();
            else if (key == "solvers") cfg.solvers = v.get<std::vector<std::string>>();
            else if (key == "loss") cfg.loss = parse_loss(v.get<std::string>());
            else if (key == "weight_sharing") cfg.weight_sharing = v.get<bool>();
            else if (key == "grid_factor") cfg.grid_factor = v.get<std::size_t>();
            else if (key == "timing") cfg.timing = v.get<bool>();
            else if (key == "output") cfg.output = v.get<std::string>();
            else throw std::invalid_argument("unknown key");
        } catch (const json::exception& e) {
            throw std::invalid_argument("config key '" + key + "': wrong type (" + e.what() + ")");
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config key '" + key + "': " + e.what());
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : to_json(cfg)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_csv(std::ostream& out, const ExperimentConfig& cfg, const std::vector<ResultRow>& rows) {
    out << "# unrollsync " << kToolkitVersion << " config_hash=" << config_hash(cfg) << " experiment=" << cfg.name
        << " kind=" << to_string(cfg.kind) << " task=" << to_string(cfg.task) << '\n';
    out << "experiment,group,algorithm,metric,lambda,depth_or_iters,seed,error_mean,error_std,n_test,wall_ms,iter_ms,"
           "status\n";
    for (const auto& r : rows) {
        out << r.experiment << ',' << r.group << ',' << r.algorithm << ',' << r.metric << ',' << fmt9(r.lambda) << ','
            << r.depth_or_iters << ',' << r.seed << ',';
        if (r.failed)
            out << ",,";
        else
            out << fmt9(r.error_mean) << ',' << fmt9(r.error_std) << ',';
        out << r.n_test << ',';
        if (r.wall_ms) out << fmt9(*r.wall_ms);
        out << ',';
        if (r.iter_ms) out << fmt9(*r.iter_ms);
        out << ',' << (r.failed ? "failed" : "ok") << '\n';
    }
}

void write_csv(const std::filesystem::path& path, const ExperimentConfig& cfg, const std::vector<ResultRow>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_csv(out, cfg, rows);
    if (!out) throw std::runtime_error("error writing " + path.string());
}

std::uint64_t data_seed(std::uint64_t seed, double lambda) {
    return splitmix64_mix(seed ^ splitmix64_mix(std::bit_cast<std::uint64_t>(lambda)));
}

std::string_view metric_name(Task task, LossKind loss) {
    switch (task) {
        case Task::SyncZ2: return "err_z2";
        case Task::SyncU1: return "err_u1";
        case Task::SyncSO3: return "err_so3";
        case Task::MraZ2: return loss == LossKind::Alignment ? "err_z2" : "rec_err_z2";
        case Task::MraShift: return loss == LossKind::Alignment ? "err_u1" : "rec_err_zl";
    }
    return "?";
}

namespace {

MraBatch as_mra_batch(const Dataset& data, const Sample& s) {
    MraBatch b;
    b.group = data.task == Task::MraZ2 ? MraGroup::Z2 : MraGroup::Shift;
    b.length = data.length;
    b.n = data.n;
    b.lambda = data.lambda;
    b.signal = s.signal;
    b.elements = s.elements;
    b.observations = s.observations;
    return b;
}

double mra_metric(const PipelineResult& r, LossKind loss) {
    return loss == LossKind::Alignment ? r.alignment_error : r.reconstruction_error;
}

struct Timed {
    std::vector<double> errors;
    double solve_ms = 0.0;
};

const SpectralOptions kSpectral{EigenOrder::Magnitude, BlockProjection::Orthogonal, 400};

Timed run_classical(const Dataset& test, std::string_view solver, std::size_t iters, LossKind loss,
                    std::size_t grid_factor) {
    if (!solver_allowed(test.task, solver) || solver == "unrolled")
        throw std::invalid_argument("solver '" + std::string(solver) + "' is not a classical solver for task " +
                                    std::string(to_string(test.task)));
    Timed out;
    out.errors.reserve(test.size());
    const double lambda = test.lambda;
    for (const auto& s : test.samples) {
        const auto t0 = std::chrono::steady_clock::now();
        switch (test.task) {
            case Task::SyncZ2: {
                std::vector<double> est;
                if (solver == "pm") est = pm_z2(s.h.re, iters, s.init).estimate;
                else if (solver == "ppm") est = ppm_z2(s.h.re, iters, s.init).estimate;
                else est = amp_z2(s.h.re, lambda, iters, s.init).estimate;
                out.solve_ms += ms_since(t0);
                out.errors.push_back(err_z2(s.signs, est));
                break;
            }
            case Task::SyncU1: {
                const ComplexMatrix h = s.h.as_complex();
                ComplexVector est;
                if (solver == "pm") est = pm_u1(h, iters, s.init).estimate;
                else if (solver == "ppm") est = ppm_u1(h, iters, s.init).estimate;
                else est = amp_u1(h, lambda, iters, s.init).estimate;
                out.solve_ms += ms_since(t0);
                out.errors.push_back(err_u1(s.phases, est));
                break;
            }
            case Task::SyncSO3: {
                Matrix est = solver == "ppm" ? ppm_so3(s.h.re, iters, s.init).estimate : spectral_so3(s.h.re, kSpectral);
                out.solve_ms += ms_since(t0);
                out.errors.push_back(err_so3(s.rotations, est));
                break;
            }
            case Task::MraZ2:
            case Task::MraShift: {
                SolverParams p;
                p.kind = parse_solver(solver);
                p.iterations = iters;
                p.grid_factor = grid_factor;
                const auto r = run_pipeline(as_mra_batch(test, s), s.h, p, s.init);
                out.solve_ms += ms_since(t0);
                out.errors.push_back(mra_metric(r, loss));
                break;
            }
        }
    }
    return out;
}

Timed run_unrolled(UnrolledModel& model, const Dataset& test, LossKind loss, std::size_t grid_factor) {
    Timed out;
    const auto t0 = std::chrono::steady_clock::now();
    const Predictions pred = predict(model, test);
    out.solve_ms = ms_since(t0);
    if (!is_mra(test.task)) {
        out.errors = alignment_errors(test, pred);
        return out;
    }
    out.errors.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        const MraBatch b = as_mra_batch(test, test.samples[i]);
        const auto r = test.task == Task::MraZ2 ? score_z2(b, pred.signs[i])
                                                : score_shift(b, pred.phases[i], false, grid_factor);
        out.errors.push_back(mra_metric(r, loss));
    }
    return out;
}

}  // namespace

std::vector<double> evaluate_classical(const Dataset& test, std::string_view solver, std::size_t iterations,
                                       LossKind loss, std::size_t grid_factor) {
    return run_classical(test, solver, iterations, loss, grid_factor).errors;
}

std::vector<double> evaluate_unrolled(UnrolledModel& model, const Dataset& test, LossKind loss,
                                      std::size_t grid_factor) {
    return run_unrolled(model, test, loss, grid_factor).errors;
}

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

namespace {

struct Cell {
    std::size_t lambda_index = 0;
    std::size_t seed_index = 0;
    std::string solver;
    std::size_t depth = 0;       // unrolled depth or classical iterations
    std::size_t row_depth = 0;   // value of the depth_or_iters column
};

struct DataPair {
    Dataset train, test;
};

class DataCache {
public:
    DataCache(const ExperimentConfig& cfg, bool need_train) : cfg_(cfg), need_train_(need_train) {}

    std::shared_ptr<const DataPair> get(std::size_t li, std::size_t si) {
        std::shared_future<std::shared_ptr<const DataPair>> fut;
        std::promise<std::shared_ptr<const DataPair>> promise;
        bool owner = false;
        {
            std::lock_guard lock(mu_);
            auto it = entries_.find({li, si});
            if (it == entries_.end()) {
                fut = promise.get_future().share();
                entries_.emplace(std::make_pair(li, si), fut);
                owner = true;
            } else {
                fut = it->second;
            }
        }
        if (owner) {
            try {
                auto p = std::make_shared<DataPair>();
                const double lambda = cfg_.lambdas[li];
                const auto ds = data_seed(cfg_.seeds[si], lambda);
                if (need_train_)
                    p->train = make_dataset(cfg_.task, cfg_.n, lambda, cfg_.train_samples, ds, cfg_.length);
                p->test = make_dataset(cfg_.task, cfg_.n, lambda, cfg_.test_samples, test_seed(ds), cfg_.length);
                promise.set_value(std::move(p));
            } catch (...) {
                promise.set_exception(std::current_exception());
            }
        }
        return fut.get();
    }

private:
    const ExperimentConfig& cfg_;
    bool need_train_;
    std::mutex mu_;
    std::map<std::pair<std::size_t, std::size_t>, std::shared_future<std::shared_ptr<const DataPair>>> entries_;
};

std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg) {
    std::vector<Cell> cells;
    const bool depth_sweep =
        cfg.kind == ExperimentKind::SyncDepthSweep || cfg.kind == ExperimentKind::MraDepthSweep;
    for (std::size_t li = 0; li < cfg.lambdas.size(); ++li) {
        if (depth_sweep) {
            for (auto d : cfg.depths)
                for (const auto& s : cfg.solvers)
                    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) cells.push_back({li, si, s, d, d});
        } else {
            for (const auto& s : cfg.solvers) {
                if (s == "unrolled") {
                    for (auto d : cfg.depths)
                        for (std::size_t si = 0; si < cfg.seeds.size(); ++si) cells.push_back({li, si, s, d, d});
                } else {
                    const std::size_t col = s == "spectral" ? 0 : cfg.iterations;
                    for (std::size_t si = 0; si < cfg.seeds.size(); ++si)
                        cells.push_back({li, si, s, cfg.iterations, col});
                }
            }
        }
    }
    return cells;
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    validate(cfg);
    const auto cells = enumerate_cells(cfg);
    const bool need_train = std::find(cfg.solvers.begin(), cfg.solvers.end(), "unrolled") != cfg.solvers.end();
    DataCache cache(cfg, need_train);
    const bool timing = cfg.records_timing();

    // Spectral does not depend on the depth: evaluate it once per (lambda, seed).
    std::mutex spectral_mu;
    std::map<std::pair<std::size_t, std::size_t>, std::shared_future<Timed>> spectral;

    std::mutex log_mu;
    auto log = [&](const std::string& line) {
        if (opts.quiet || opts.log == nullptr) return;
        std::lock_guard lock(log_mu);
        *opts.log << "[" << cfg.name << "] " << line << std::endl;
    };

    std::vector<ResultRow> rows(cells.size());
    auto run_cell = [&](std::size_t idx) {
        const Cell& c = cells[idx];
        const double lambda = cfg.lambdas[c.lambda_index];
        const std::uint64_t seed = cfg.seeds[c.seed_index];
        ResultRow row;
        row.experiment = cfg.name;
        row.group = std::string(to_string(cfg.task));
        row.algorithm = c.solver;
        row.metric = std::string(metric_name(cfg.task, cfg.loss));
        row.lambda = lambda;
        row.depth_or_iters = c.row_depth;
        row.seed = seed;
        row.n_test = cfg.test_samples;

        const auto data = cache.get(c.lambda_index, c.seed_index);
        Timed result;
        try {
            if (c.solver == "unrolled") {
                const auto ds = data_seed(seed, lambda);
                UnrolledModel model =
                    build_model(task_group(cfg.task), c.depth, lambda, cfg.weight_sharing, splitmix64_mix(ds + c.depth));
                TrainConfig tc;
                tc.task = cfg.task;
                tc.loss = cfg.loss;
                tc.samples = cfg.train_samples;
                tc.epochs = cfg.epochs;
                tc.learning_rate = cfg.learning_rate;
                tc.batch_size = cfg.batch_size;
                tc.seed = ds;
                tc.n = cfg.n;
                tc.lambda = lambda;
                tc.length = cfg.length;
                tc.grid_factor = cfg.grid_factor;
                const auto t0 = std::chrono::steady_clock::now();
                train(model, data->train, tc);
                log("trained depth " + std::to_string(c.depth) + " lambda " + fmt9(lambda) + " seed " +
                    std::to_string(seed) + " in " + fmt9(ms_since(t0) / 1000.0) + " s");
                result = run_unrolled(model, data->test, cfg.loss, cfg.grid_factor);
            } else if (c.solver == "spectral") {
                std::shared_future<Timed> fut;
                std::promise<Timed> promise;
                bool owner = false;
                {
                    std::lock_guard lock(spectral_mu);
                    auto key = std::make_pair(c.lambda_index, c.seed_index);
                    auto it = spectral.find(key);
                    if (it == spectral.end()) {
                        fut = promise.get_future().share();
                        spectral.emplace(key, fut);
                        owner = true;
                    } else {
                        fut = it->second;
                    }
                }
                if (owner) {
                    try {
                        promise.set_value(run_classical(data->test, "spectral", 0, cfg.loss, cfg.grid_factor));
                    } catch (...) {
                        promise.set_exception(std::current_exception());
                    }
                }
                result = fut.get();
            } else {
                result = run_classical(data->test, c.solver, c.depth, cfg.loss, cfg.grid_factor);
            }
            const MeanStd ms = mean_std(result.errors);
            row.error_mean = ms.mean;
            row.error_std = ms.std;
            if (!std::isfinite(ms.mean)) throw SolverError(SolverError::Kind::Divergence, "non-finite test error");
            if (timing) {
                row.wall_ms = result.solve_ms;
                if (c.solver != "spectral" && c.depth > 0) row.iter_ms = result.solve_ms / static_cast<double>(c.depth);
            }
        } catch (const SolverError& e) {
            row.failed = true;
            row.error_mean = row.error_std = std::nan("");
            log(c.solver + " depth " + std::to_string(c.depth) + " lambda " + fmt9(lambda) + " seed " +
                std::to_string(seed) + " failed: " + e.what());
        }
        if (!row.failed)
            log(c.solver + " depth " + std::to_string(c.row_depth) + " lambda " + fmt9(lambda) + " seed " +
                std::to_string(seed) + ": " + fmt9(row.error_mean));
        rows[idx] = std::move(row);
    };

    const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, cells.size()));
    std::vector<std::exception_ptr> errors(cells.size());
    if (threads == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
        return rows;
    }
    // Expensive cells (training) first so the pool drains evenly; rows keep config order.
    std::vector<std::size_t> order(cells.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const bool ua = cells[a].solver == "unrolled", ub = cells[b].solver == "unrolled";
        if (ua != ub) return ua;
        return ua && cells[a].depth > cells[b].depth;
    });
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t k; (k = next.fetch_add(1)) < order.size();) {
                try {
                    run_cell(order[k]);
                } catch (...) {
                    errors[order[k]] = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return rows;
}

// ---------------------------------------------------------------------------
// Figures
// ---------------------------------------------------------------------------

Scale parse_scale(std::string_view s) {
    if (s == "full") return Scale::Full;
    if (s == "desk") return Scale::Desk;
    throw std::invalid_argument("unknown scale '" + std::string(s) + "' (expected full or desk)");
}

std::vector<std::string> figure_ids() {
    return {"fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "table1"};
}

std::vector<ExperimentConfig> figure_configs(std::string_view id, Scale scale, std::uint64_t seed) {
    const bool desk = scale == Scale::Desk;
    ExperimentConfig base;
    base.seeds = {seed};
    base.epochs = desk ? 60 : 300;
    base.depths = desk ? std::vector<std::size_t>{1, 3, 5, 7, 9} : std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8, 9};
    base.test_samples = 2000;
    const std::vector<std::string> sync_solvers{"pm", "ppm", "amp", "unrolled"};
    const std::vector<std::string> so3_solvers{"spectral", "ppm", "unrolled"};
    std::vector<double> snr_grid;
    for (int i = 10; i <= 20; ++i) snr_grid.push_back(i / 10.0);

    auto per_lambda = [&](ExperimentConfig cfg, std::initializer_list<double> lambdas) {
        std::vector<ExperimentConfig> out;
        for (double l : lambdas) {
            ExperimentConfig c = cfg;
            c.lambdas = {l};
            c.name = std::string(id) + "_lambda" + fmt9(l);
            out.push_back(std::move(c));
        }
        return out;
    };
    auto single = [&](ExperimentConfig cfg) {
        cfg.name = std::string(id);
        return std::vector<ExperimentConfig>{std::move(cfg)};
    };
    auto sync = [&](Task task, double lr, std::size_t full_m) {
        ExperimentConfig c = base;
        c.task = task;
        c.learning_rate = lr;
        c.train_samples = desk ? 2000 : full_m;
        c.solvers = task == Task::SyncSO3 ? so3_solvers : sync_solvers;
        return c;
    };
    auto snr = [&](ExperimentConfig c) {
        c.kind = ExperimentKind::SyncSnrSweep;
        c.lambdas = snr_grid;
        c.depths = {9};
        c.iterations = 100;
        return c;
    };
    auto mra = [&](Task task, LossKind loss, double lr) {
        ExperimentConfig c = base;
        c.kind = ExperimentKind::MraDepthSweep;
        c.task = task;
        c.loss = loss;
        c.learning_rate = lr;
        c.train_samples = desk ? 2000 : 10000;
        c.solvers = sync_solvers;
        return c;
    };

    if (id == "fig2") return per_lambda(sync(Task::SyncZ2, 1e-3, 20000), {1.2, 1.5, 2.0});
    if (id == "fig3") return single(snr(sync(Task::SyncZ2, 1e-3, 20000)));
    if (id == "fig4") return per_lambda(sync(Task::SyncU1, 1e-4, 20000), {1.2, 1.5, 2.0});
    if (id == "fig5") return per_lambda(sync(Task::SyncSO3, 1e-2, 10000), {1.2, 1.5, 2.0});
    if (id == "fig6") return single(snr(sync(Task::SyncSO3, 1e-2, 10000)));
    if (id == "fig7") return per_lambda(mra(Task::MraZ2, LossKind::Alignment, 1e-4), {0.2, 0.3});
    if (id == "fig8") return per_lambda(mra(Task::MraZ2, LossKind::Reconstruction, 1e-3), {0.4, 0.8});
    if (id == "fig9") return single([&] {
        auto c = mra(Task::MraShift, LossKind::Alignment, 1e-4);
        c.lambdas = {0.7};
        return c;
    }());
    if (id == "fig10") return single([&] {
        auto c = mra(Task::MraShift, LossKind::Reconstruction, 1e-1);
        c.lambdas = {1.0};
        return c;
    }());
    if (id == "table1") {
        auto c = sync(Task::SyncSO3, 1e-2, 10000);
        c.kind = ExperimentKind::RuntimeBench;
        c.lambdas = {1.5};
        c.depths = {9};
        c.iterations = 100;
        c.test_samples = 10000;
        return single(c);
    }
    throw std::invalid_argument("unknown figure id '" + std::string(id) +
                                "' (expected fig2 ... fig10 or table1)");
}

std::vector<std::filesystem::path> reproduce(std::string_view id, const ReproduceOptions& opts) {
    auto configs = figure_configs(id, opts.scale, opts.seed);
    std::vector<std::filesystem::path> paths;
    for (auto& cfg : configs) {
        const auto path = opts.out_dir / (cfg.name + ".csv");
        cfg.output = path.filename().string();
        const auto rows = run_experiment(cfg, opts.run);
        write_csv(path, cfg, rows);
        paths.push_back(path);
        if (opts.plot && cfg.kind != ExperimentKind::RuntimeBench) {
            std::ofstream svg(opts.out_dir / (cfg.name + ".svg"), std::ios::binary);
            if (!svg) throw std::runtime_error("cannot write plot for " + cfg.name);
            write_svg(svg, cfg, rows);
        }
    }
    return paths;
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

void write_svg(std::ostream& out, const ExperimentConfig& cfg, const std::vector<ResultRow>& rows) {
    const bool by_lambda = cfg.kind == ExperimentKind::SyncSnrSweep;
    // algorithm -> x -> (sum, count), in first-appearance order
    std::vector<std::string> algos;
    std::map<std::string, std::map<double, std::pair<double, int>>> series;
    for (const auto& r : rows) {
        if (r.failed) continue;
        if (!series.contains(r.algorithm)) algos.push_back(r.algorithm);
        auto& cell = series[r.algorithm][by_lambda ? r.lambda : static_cast<double>(r.depth_or_iters)];
        cell.first += r.error_mean;
        cell.second += 1;
    }
    double xmin = 1e300, xmax = -1e300, ymax = 0.0;
    for (const auto& [a, pts] : series)
        for (const auto& [x, sc] : pts) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymax = std::max(ymax, sc.first / sc.second);
        }
    if (series.empty()) xmin = 0.0, xmax = 1.0;
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.1;

    const double w = 640, h = 420, left = 70, right = 150, top = 40, bottom = 60;
    const double pw = w - left - right, ph = h - top - bottom;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return top + ph - y / ymax * ph; };
    const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << cfg.name << " (" << to_string(cfg.task)
        << ")</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double y = ymax * i / 5.0;
        out << "<text x=\"" << left - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << fmt9(std::round(y * 1000) / 1000)
            << "</text>\n";
        const double x = xmin + (xmax - xmin) * i / 5.0;
        out << "<text x=\"" << px(x) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
            << fmt9(std::round(x * 100) / 100) << "</text>\n";
    }
    out << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 20 << "\" text-anchor=\"middle\">"
        << (by_lambda ? "lambda" : "depth / iterations") << "</text>\n";
    out << "<text x=\"18\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 18 " << top + ph / 2
        << ")\" text-anchor=\"middle\">" << metric_name(cfg.task, cfg.loss) << "</text>\n";
    for (std::size_t k = 0; k < algos.size(); ++k) {
        const char* color = colors[k % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, sc] : series[algos[k]]) out << px(x) << ',' << py(sc.first / sc.second) << ' ';
        out << "\"/>\n";
        const double ly = top + 10 + 20.0 * static_cast<double>(k);
        out << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 40 << "\" y2=\"" << ly
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << left + pw + 46 << "\" y=\"" << ly + 4 << "\">" << algos[k] << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace unrollsync
