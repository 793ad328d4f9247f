#ifndef HIERCP_HARNESS_HPP
#define HIERCP_HARNESS_HPP

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "hiercp/conformal.hpp"
#include "hiercp/dataset.hpp"
#include "hiercp/metrics.hpp"
#include "hiercp/model.hpp"

namespace hiercp {

struct ExperimentConfig {
    std::vector<double> alphas = default_alpha_grid();
    int n_iterations = 50;
    std::uint64_t master_seed = 1;
    ScoreKind score_kind = ScoreKind::OneMinusProb;
    std::vector<Method> methods = {Method::LCP, Method::PCP};
    SplitFractions fractions;
    TrainConfig train;

    // Alphas whose per-sample prediction sets are kept on the RunRecord,
    // for structural assertions in tests.
    std::vector<double> retain_sets_alphas;

    // 0.00 .. 0.50 in steps of 0.02.
    static std::vector<double> default_alpha_grid();
    void validate() const;

    // key=value text with keys: alphas, n_iterations, master_seed,
    // score_kind, methods, train_frac, calibration_frac, test_frac,
    // learning_rate, epochs, batch_size, l2_penalty, train_seed,
    // undersample. Missing keys keep defaults.
    static ExperimentConfig parse(std::string_view text);
    static ExperimentConfig load(const std::string& path);
};

// Counts of violated construction guarantees, accumulated over every alpha
// of an iteration. Both stay 0 for projection-based prediction.
struct StructuralAudit {
    std::size_t nestedness_violations = 0;
    // Samples whose leaf label was retained but some defined-level ancestor
    // was not.
    std::size_t inheritance_violations = 0;
};

struct RetainedSets {
    double alpha = 0.0;
    Method method = Method::LCP;
    std::vector<HierPredictionSets> sets; // one per test sample
};

struct RunRecord {
    int iteration = 0;
    std::uint64_t seed = 0;
    bool aborted = false;
    std::string abort_reason;
    double duration_seconds = 0.0;
    std::vector<MetricsReport> reports; // alpha-major, methods in config order
    StructuralAudit pcp_audit;
    std::vector<RetainedSets> retained;
};

// One Monte Carlo iteration: fresh stratified split, one model per layer,
// then per alpha: calibrate, predict with each method, evaluate. Models and
// probability tables are shared across alphas. Training divergence aborts
// the iteration instead of throwing.
RunRecord run_iteration(const ExperimentConfig& cfg, const Dataset& dataset, int iteration);

struct SweepResult {
    std::vector<MetricsReport> aggregated; // per (method, alpha)
    std::vector<RunRecord> runs;
};

// Runs all iterations (in parallel up to thread_budget()) and aggregates in
// iteration order, so results do not depend on scheduling. Throws when every
// iteration aborted.
SweepResult sweep(const ExperimentConfig& cfg, const Dataset& dataset);

// HIERCP_THREADS when set, otherwise hardware concurrency.
unsigned thread_budget();

// Writes metrics_report.csv and sweep_long.csv into out_dir.
void write_sweep_outputs(const SweepResult& result, const std::string& out_dir);

// Console table for alpha in {0.02, 0.05, 0.10, 0.20} (those present).
void print_summary_table(std::ostream& out, const SweepResult& result);

} // namespace hiercp

#endif
