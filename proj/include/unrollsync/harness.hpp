#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unrollsync/unrolled.hpp"

namespace unrollsync {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

enum class ExperimentKind { SyncDepthSweep, SyncSnrSweep, MraDepthSweep, RuntimeBench };

std::string_view to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(std::string_view s);

/// One experiment. JSON keys are the field names below.
struct ExperimentConfig {
    std::string name = "experiment";
    ExperimentKind kind = ExperimentKind::SyncDepthSweep;
    Task task = Task::SyncZ2;
    std::size_t n = 20;
    std::size_t length = 21;
    std::vector<double> lambdas;
    /// Depth sweeps: unrolled depths and classical iteration counts.
    /// SNR sweep and runtime bench: unrolled depth(s).
    std::vector<std::size_t> depths;
    /// Classical iterations in the SNR sweep and the runtime bench.
    std::size_t iterations = 100;
    std::size_t train_samples = 2000;
    std::size_t test_samples = 2000;
    std::size_t epochs = 60;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    std::vector<std::uint64_t> seeds;
    /// pm, ppm, amp, spectral, unrolled.
    std::vector<std::string> solvers;
    LossKind loss = LossKind::Alignment;
    bool weight_sharing = false;
    std::size_t grid_factor = 10;
    /// Record wall-clock columns. Off by default outside the runtime bench so
    /// that CSVs are byte-reproducible.
    std::optional<bool> timing;
    std::string output;

    bool records_timing() const { return timing.value_or(kind == ExperimentKind::RuntimeBench); }
};

/// Throws std::invalid_argument naming the offending key.
void validate(const ExperimentConfig& cfg);

std::string to_json(const ExperimentConfig& cfg);
/// Unknown keys are rejected.
ExperimentConfig config_from_json(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a of the canonical JSON, 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct ResultRow {
    std::string experiment;
    std::string group;
    std::string algorithm;
    std::string metric;
    double lambda = 0.0;
    std::size_t depth_or_iters = 0;
    std::uint64_t seed = 0;
    double error_mean = 0.0;
    double error_std = 0.0;
    std::size_t n_test = 0;
    std::optional<double> wall_ms;
    std::optional<double> iter_ms;
    bool failed = false;
};

/// Header comment, column row, then one line per row. Floats use 9
/// significant digits; failed rows leave the error columns empty.
void write_csv(std::ostream& out, const ExperimentConfig& cfg, const std::vector<ResultRow>& rows);
void write_csv(const std::filesystem::path& path, const ExperimentConfig& cfg, const std::vector<ResultRow>& rows);

struct RunOptions {
    std::size_t threads = 1;
    bool quiet = true;
    std::ostream* log = nullptr;  // progress lines when not quiet
};

/// Rows in config order: lambda, then depth, then solver, then seed (the SNR
/// sweep and the bench have a single depth).
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Seed of the training set for (seed, lambda); the test set uses
/// test_seed() of it. Every solver sees the same test instances.
std::uint64_t data_seed(std::uint64_t seed, double lambda);

/// Alignment (or reconstruction) error of each test sample.
std::vector<double> evaluate_classical(const Dataset& test, std::string_view solver, std::size_t iterations,
                                       LossKind loss = LossKind::Alignment, std::size_t grid_factor = 10);
std::vector<double> evaluate_unrolled(UnrolledModel& model, const Dataset& test, LossKind loss = LossKind::Alignment,
                                      std::size_t grid_factor = 10);

std::string_view metric_name(Task task, LossKind loss);

// ---------------------------------------------------------------------------
// Figure reproduction
// ---------------------------------------------------------------------------

enum class Scale { Full, Desk };

Scale parse_scale(std::string_view s);

/// Ids fig2 ... fig10 and table1.
std::vector<std::string> figure_ids();

/// One config per output CSV. Throws std::invalid_argument on an unknown id.
std::vector<ExperimentConfig> figure_configs(std::string_view id, Scale scale, std::uint64_t seed);

struct ReproduceOptions {
    Scale scale = Scale::Desk;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = ".";
    bool plot = false;
    RunOptions run;
};

/// Runs every config of the figure, writes <out_dir>/<config name>.csv (and
/// .svg when plotting) and returns the CSV paths.
std::vector<std::filesystem::path> reproduce(std::string_view id, const ReproduceOptions& opts);

/// Line chart of mean error against depth (or lambda for SNR sweeps), one
/// series per algorithm.
void write_svg(std::ostream& out, const ExperimentConfig& cfg, const std::vector<ResultRow>& rows);

}  // namespace unrollsync
