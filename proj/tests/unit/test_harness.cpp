#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "unrollsync/harness.hpp"
#include "unrollsync/metrics.hpp"

using namespace unrollsync;

namespace {

ExperimentConfig small_sweep() {
    ExperimentConfig c;
    c.name = "small";
    c.kind = ExperimentKind::SyncDepthSweep;
    c.task = Task::SyncZ2;
    c.lambdas = {2.0};
    c.depths = {1, 3, 5, 7, 9};
    c.seeds = {4};
    c.solvers = {"pm", "ppm", "amp"};
    c.test_samples = 30;
    return c;
}

std::string csv_of(const ExperimentConfig& cfg, const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    write_csv(os, cfg, rows);
    return os.str();
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string line; std::getline(is, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("config json round trip") {
    auto c = small_sweep();
    c.loss = LossKind::Alignment;
    c.weight_sharing = true;
    c.seeds = {1, 18446744073709551615ULL};
    const auto back = config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    CHECK(back.seeds[1] == 18446744073709551615ULL);
    CHECK(config_hash(c).size() == 16);
    auto d = c;
    d.learning_rate = 2e-3;
    CHECK(config_hash(d) != config_hash(c));
}

TEST_CASE("config parsing errors name the key") {
    CHECK_THROWS_WITH_AS(config_from_json(R"({"nmae": "x"})"), doctest::Contains("nmae"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(config_from_json(R"({"n": "twenty"})"), doctest::Contains("'n'"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(config_from_json(R"({"kind": "sweep"})"), doctest::Contains("kind"), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json("[1, 2]"), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json("{"), std::invalid_argument);
    CHECK(config_from_json(R"({"group": "so3"})").task == Task::SyncSO3);
}

TEST_CASE("config validation") {
    CHECK_NOTHROW(validate(small_sweep()));
    auto c = small_sweep();
    c.solvers.clear();
    CHECK_THROWS_WITH_AS(validate(c), doctest::Contains("solvers"), std::invalid_argument);
    c = small_sweep();
    c.seeds = {1, 2, 1};
    CHECK_THROWS_WITH_AS(validate(c), doctest::Contains("distinct"), std::invalid_argument);
    c = small_sweep();
    c.lambdas.clear();
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = small_sweep();
    c.depths = {0};
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = small_sweep();
    c.solvers = {"spectral"};
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c.task = Task::SyncSO3;
    CHECK_NOTHROW(validate(c));
    c.solvers = {"amp"};
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = small_sweep();
    c.loss = LossKind::Reconstruction;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = small_sweep();
    c.task = Task::MraZ2;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c.kind = ExperimentKind::MraDepthSweep;
    CHECK_NOTHROW(validate(c));
    c = small_sweep();
    c.solvers = {"ppm", "ppm"};
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = small_sweep();
    c.name = "a,b";
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
}

TEST_CASE("depth sweep without training gives fifteen rows per seed in config order") {
    auto c = small_sweep();
    c.seeds = {4, 5};
    const auto rows = run_experiment(c);
    REQUIRE(rows.size() == 30);
    std::size_t k = 0;
    for (std::size_t d : c.depths)
        for (const auto& s : c.solvers)
            for (auto seed : c.seeds) {
                CHECK(rows[k].algorithm == s);
                CHECK(rows[k].depth_or_iters == d);
                CHECK(rows[k].seed == seed);
                CHECK(rows[k].n_test == 30);
                CHECK(rows[k].error_mean >= 0.0);
                CHECK(rows[k].metric == "err_z2");
                CHECK_FALSE(rows[k].wall_ms.has_value());
                CHECK_FALSE(rows[k].failed);
                ++k;
            }
}

TEST_CASE("rows are evaluated on the shared test set") {
    auto c = small_sweep();
    const auto rows = run_experiment(c);
    const Dataset test = make_dataset(Task::SyncZ2, 20, 2.0, 30, test_seed(data_seed(4, 2.0)));
    for (const auto& r : rows) {
        const auto errors = evaluate_classical(test, r.algorithm, r.depth_or_iters);
        CHECK(mean_std(errors).mean == r.error_mean);
        CHECK(mean_std(errors).std == r.error_std);
    }
}

TEST_CASE("ppm error is nonincreasing in depth on average") {
    // 100 seeds, lambda 2: average over seeds of each depth's mean error
    auto c = small_sweep();
    c.solvers = {"ppm"};
    c.test_samples = 10;
    c.seeds.clear();
    for (std::uint64_t s = 0; s < 100; ++s) c.seeds.push_back(s);
    const auto rows = run_experiment(c);
    std::vector<double> avg(c.depths.size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) avg[i / 100] += rows[i].error_mean / 100.0;
    for (std::size_t i = 1; i < avg.size(); ++i) CHECK(avg[i] <= avg[i - 1] + 1e-12);
    CHECK(avg.back() < avg.front());
}

TEST_CASE("csv format") {
    auto c = small_sweep();
    c.depths = {2};
    c.solvers = {"ppm"};
    auto rows = run_experiment(c);
    ResultRow failed = rows[0];
    failed.failed = true;
    rows.push_back(failed);
    const auto lines = lines_of(csv_of(c, rows));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0].starts_with("# unrollsync " + std::string(kToolkitVersion) + " config_hash=" + config_hash(c)));
    CHECK(lines[1] ==
          "experiment,group,algorithm,metric,lambda,depth_or_iters,seed,error_mean,error_std,n_test,wall_ms,iter_ms,"
          "status");
    CHECK(lines[2].starts_with("small,z2,ppm,err_z2,2,2,4,"));
    CHECK(lines[2].ends_with(",30,,,ok"));
    CHECK(lines[3] == "small,z2,ppm,err_z2,2,2,4,,,30,,,failed");
    // 9 significant digits
    const auto cells = [&] {
        std::vector<std::string> v;
        std::istringstream is(lines[2]);
        for (std::string cell; std::getline(is, cell, ',');) v.push_back(cell);
        return v;
    }();
    char expect[64];
    std::snprintf(expect, sizeof expect, "%.9g", rows[0].error_mean);
    CHECK(cells[7] == expect);
}

TEST_CASE("run_experiment is deterministic and independent of the thread count") {
    auto c = small_sweep();
    c.solvers = {"pm", "ppm", "amp", "unrolled"};
    c.depths = {1, 2};
    c.seeds = {3, 9};
    c.train_samples = 40;
    c.epochs = 2;
    c.batch_size = 16;
    c.test_samples = 12;
    const auto a = csv_of(c, run_experiment(c));
    const auto b = csv_of(c, run_experiment(c));
    RunOptions threaded;
    threaded.threads = 3;
    const auto t = csv_of(c, run_experiment(c, threaded));
    CHECK(a == b);
    CHECK(a == t);
}

TEST_CASE("training divergence marks the row failed and the run continues") {
    auto c = small_sweep();
    c.solvers = {"unrolled", "ppm"};
    c.depths = {2};
    c.train_samples = 40;
    c.epochs = 3;
    c.batch_size = 8;
    c.learning_rate = 1e300;
    c.test_samples = 5;
    const auto rows = run_experiment(c);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].failed);
    CHECK_FALSE(rows[1].failed);
    CHECK(lines_of(csv_of(c, rows))[2].ends_with(",failed"));
}

TEST_CASE("snr sweep uses the classical iteration count") {
    ExperimentConfig c;
    c.name = "snr";
    c.kind = ExperimentKind::SyncSnrSweep;
    c.task = Task::SyncSO3;
    c.lambdas = {1.0, 2.0};
    c.depths = {9};
    c.iterations = 7;
    c.seeds = {1};
    c.solvers = {"spectral", "ppm"};
    c.test_samples = 6;
    const auto rows = run_experiment(c);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].algorithm == "spectral");
    CHECK(rows[0].depth_or_iters == 0);
    CHECK(rows[1].depth_or_iters == 7);
    CHECK(rows[2].lambda == 2.0);
    CHECK(rows[3].error_mean < rows[1].error_mean + 0.5);
}

TEST_CASE("runtime bench reports total and per-iteration times") {
    ExperimentConfig c;
    c.name = "bench";
    c.kind = ExperimentKind::RuntimeBench;
    c.task = Task::SyncSO3;
    c.lambdas = {1.5};
    c.depths = {2};
    c.iterations = 5;
    c.seeds = {1};
    c.solvers = {"spectral", "ppm", "unrolled"};
    c.train_samples = 20;
    c.epochs = 1;
    c.test_samples = 8;
    const auto rows = run_experiment(c);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) REQUIRE(r.wall_ms.has_value());
    CHECK_FALSE(rows[0].iter_ms.has_value());
    CHECK(*rows[1].iter_ms == doctest::Approx(*rows[1].wall_ms / 5.0));
    CHECK(*rows[2].iter_ms == doctest::Approx(*rows[2].wall_ms / 2.0));
    CHECK(rows[2].depth_or_iters == 2);
}

TEST_CASE("mra sweep metric follows the loss") {
    ExperimentConfig c;
    c.name = "mra";
    c.kind = ExperimentKind::MraDepthSweep;
    c.task = Task::MraShift;
    c.loss = LossKind::Reconstruction;
    c.lambdas = {1.0};
    c.depths = {1, 4};
    c.seeds = {2};
    c.solvers = {"ppm", "unrolled"};
    c.train_samples = 20;
    c.epochs = 1;
    c.batch_size = 10;
    c.test_samples = 5;
    auto rows = run_experiment(c);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        CHECK(r.metric == "rec_err_zl");
        CHECK_FALSE(r.failed);
    }
    c.loss = LossKind::Alignment;
    c.task = Task::MraZ2;
    rows = run_experiment(c);
    CHECK(rows[0].metric == "err_z2");
}

TEST_CASE("figure configs") {
    for (const auto& id : figure_ids())
        for (auto scale : {Scale::Desk, Scale::Full})
            for (const auto& cfg : figure_configs(id, scale, 7)) {
                CAPTURE(cfg.name);
                CHECK_NOTHROW(validate(cfg));
                CHECK(cfg.n == 20);
                CHECK(cfg.seeds == std::vector<std::uint64_t>{7});
                if (scale == Scale::Desk) {
                    CHECK(cfg.train_samples == 2000);
                    CHECK(cfg.epochs == 60);
                } else {
                    CHECK(cfg.epochs == 300);
                }
            }
    const auto fig2 = figure_configs("fig2", Scale::Desk, 0);
    REQUIRE(fig2.size() == 3);
    CHECK(fig2[0].name == "fig2_lambda1.2");
    CHECK(fig2[1].lambdas == std::vector<double>{1.5});
    CHECK(fig2[2].name == "fig2_lambda2");
    CHECK(fig2[0].solvers == std::vector<std::string>{"pm", "ppm", "amp", "unrolled"});
    CHECK(figure_configs("fig2", Scale::Full, 0)[0].train_samples == 20000);
    CHECK(figure_configs("fig5", Scale::Full, 0)[0].train_samples == 10000);

    const auto fig3 = figure_configs("fig3", Scale::Desk, 0).at(0);
    CHECK(fig3.lambdas.size() == 11);
    CHECK(fig3.lambdas.front() == 1.0);
    CHECK(fig3.lambdas.back() == 2.0);
    CHECK(fig3.depths == std::vector<std::size_t>{9});
    CHECK(fig3.iterations == 100);

    const auto t1 = figure_configs("table1", Scale::Desk, 0).at(0);
    CHECK(t1.kind == ExperimentKind::RuntimeBench);
    CHECK(t1.test_samples == 10000);
    CHECK(t1.lambdas == std::vector<double>{1.5});
    CHECK(t1.solvers.size() == 3);
    CHECK(t1.learning_rate == 1e-2);
    CHECK(figure_configs("fig10", Scale::Desk, 0).at(0).learning_rate == 1e-1);
    CHECK(figure_configs("fig8", Scale::Desk, 0).at(1).loss == LossKind::Reconstruction);

    CHECK_THROWS_AS(figure_configs("fig11", Scale::Desk, 0), std::invalid_argument);
    ReproduceOptions o;
    CHECK_THROWS_AS(reproduce("fig1", o), std::invalid_argument);
    CHECK_THROWS_AS(parse_scale("laptop"), std::invalid_argument);
}

TEST_CASE("svg chart has one series per algorithm") {
    auto c = small_sweep();
    const auto rows = run_experiment(c);
    std::ostringstream os;
    write_svg(os, c, rows);
    const std::string svg = os.str();
    CHECK(svg.starts_with("<svg"));
    CHECK(svg.find("</svg>") != std::string::npos);
    std::size_t polylines = 0;
    for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++polylines;
    CHECK(polylines == 3);
}
