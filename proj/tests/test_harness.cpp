#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include "doctest.h"

#include "hiercp/error.hpp"
#include "hiercp/harness.hpp"
#include "hiercp/rng.hpp"
#include "hiercp/text.hpp"
#include "helpers.hpp"

using namespace hiercp;
using hiercp::testing::os_tree;

namespace {

Dataset small_benchmark(const Taxonomy& t, std::size_t n = 900) {
    GeneratorConfig gen;
    gen.n_samples = n;
    gen.zipf_s = 0.8;
    gen.noise_sigma = 0.5;
    gen.separation = 1.0;
    gen.feature_dim = 5;
    return generate_synthetic(gen, t, 2024);
}

ExperimentConfig quick_config() {
    ExperimentConfig cfg;
    cfg.alphas = {0.0, 0.05, 0.2};
    cfg.n_iterations = 3;
    cfg.master_seed = 5;
    cfg.train.epochs = 25;
    cfg.train.learning_rate = 0.4;
    return cfg;
}

std::string report_bytes(const SweepResult& result) {
    std::ostringstream out;
    write_report_header(out);
    for (const auto& agg : result.aggregated) write_report_rows(out, agg);
    return out.str();
}

const MetricsReport& report_for(const SweepResult& result, Method method, double alpha) {
    for (const auto& rep : result.aggregated) {
        if (rep.method == method && std::abs(rep.alpha - alpha) < 1e-12) return rep;
    }
    throw std::runtime_error("missing report");
}

const LayerStats& layer_of(const MetricsReport& report, int layer) {
    for (const auto& [l, stats] : report.layers) {
        if (l == layer) return stats;
    }
    throw std::runtime_error("missing layer");
}

} // namespace

TEST_CASE("experiment config parsing") {
    ExperimentConfig cfg = ExperimentConfig::parse(
        "alphas=0.2,0.05,0.1\n"
        "n_iterations=4\n"
        "master_seed=9\n"
        "score_kind=neg_log_prob\n"
        "methods=pcp\n"
        "epochs=12\n");
    CHECK(cfg.alphas == std::vector<double>{0.05, 0.1, 0.2}); // sorted
    CHECK(cfg.n_iterations == 4);
    CHECK(cfg.score_kind == ScoreKind::NegLogProb);
    CHECK(cfg.methods == std::vector<Method>{Method::PCP});
    CHECK(cfg.train.epochs == 12);

    CHECK(ExperimentConfig::parse("alphas=default\n").alphas.size() == 26);
    CHECK(ExperimentConfig::parse("").alphas.size() == 26);
    CHECK_THROWS_AS(ExperimentConfig::parse("alphas=\n"), ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::parse("alphas=0.1\nn_iterations=0\n"), ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::parse("nope=1\n"), ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::parse("alphas=1.5\n"), ValidationError);
}

TEST_CASE("default grid spans 0 to 0.5 in steps of 0.02") {
    auto grid = ExperimentConfig::default_alpha_grid();
    REQUIRE(grid.size() == 26);
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == 0.5);
    CHECK(grid[1] == doctest::Approx(0.02));
}

TEST_CASE("per-iteration seeds are pairwise distinct") {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        seeds.insert(derive_seed(1234, i));
    }
    CHECK(seeds.size() == 1000);
}

TEST_CASE("alpha zero saturates every set") {
    Taxonomy t = os_tree();
    Dataset ds = small_benchmark(t, 600);
    ExperimentConfig cfg;
    cfg.alphas = {0.0};
    cfg.n_iterations = 1;
    cfg.train.epochs = 10;
    RunRecord rec = run_iteration(cfg, ds, 0);
    REQUIRE(!rec.aborted);
    REQUIRE(rec.reports.size() == 2); // both methods at one alpha
    for (const auto& report : rec.reports) {
        for (const auto& [layer, stats] : report.layers) {
            REQUIRE(stats.coverage.has_value());
            CHECK(stats.coverage->mean == 1.0);
        }
        CHECK(report.hir.mean == 0.0);
    }
}

TEST_CASE("sweep is deterministic and scheduling independent") {
    Taxonomy t = os_tree();
    Dataset ds = small_benchmark(t, 700);
    ExperimentConfig cfg = quick_config();

    SweepResult a = sweep(cfg, ds);
    SweepResult b = sweep(cfg, ds);
    CHECK(report_bytes(a) == report_bytes(b));

    ExperimentConfig other = cfg;
    other.master_seed = 6;
    SweepResult c = sweep(other, ds);
    CHECK(report_bytes(a) != report_bytes(c));
}

TEST_CASE("projection metrics match the level-wise leaf metrics per iteration") {
    Taxonomy t = os_tree();
    Dataset ds = small_benchmark(t, 800);
    ExperimentConfig cfg = quick_config();
    SweepResult result = sweep(cfg, ds);
    for (const auto& run : result.runs) {
        REQUIRE(!run.aborted);
        for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
            const MetricsReport& lcp = run.reports[a * 2 + 0];
            const MetricsReport& pcp = run.reports[a * 2 + 1];
            REQUIRE(lcp.method == Method::LCP);
            REQUIRE(pcp.method == Method::PCP);
            const LayerStats& lcp_leaf = layer_of(lcp, kLeafLayer);
            const LayerStats& pcp_leaf = layer_of(pcp, kLeafLayer);
            CHECK(lcp_leaf.coverage->mean == pcp_leaf.coverage->mean);
            CHECK(lcp_leaf.set_size.mean == pcp_leaf.set_size.mean);
            CHECK(lcp_leaf.empty.mean == pcp_leaf.empty.mean);
            CHECK(lcp_leaf.singleton.mean == pcp_leaf.singleton.mean);
        }
    }
}

TEST_CASE("projection audit and coverage ordering") {
    Taxonomy t = os_tree();
    Dataset ds = small_benchmark(t, 800);
    ExperimentConfig cfg = quick_config();
    SweepResult result = sweep(cfg, ds);
    for (const auto& run : result.runs) {
        CHECK(run.pcp_audit.nestedness_violations == 0);
        CHECK(run.pcp_audit.inheritance_violations == 0);
    }
    for (double alpha : cfg.alphas) {
        const MetricsReport& pcp = report_for(result, Method::PCP, alpha);
        CHECK(pcp.hir.mean == 0.0);
        CHECK(pcp.hir.stddev == 0.0);
        // Ancestor coverage is inherited from the leaf layer.
        CHECK(layer_of(pcp, 1).coverage->mean >= layer_of(pcp, kLeafLayer).coverage->mean);
    }
}

TEST_CASE("sets shrink as alpha grows within an iteration") {
    Taxonomy t = os_tree();
    Dataset ds = small_benchmark(t, 700);
    ExperimentConfig cfg = quick_config();
    cfg.retain_sets_alphas = {0.05, 0.2};
    SweepResult result = sweep(cfg, ds);
    for (const auto& run : result.runs) {
        REQUIRE(run.retained.size() == 4); // two alphas, two methods
        for (Method method : {Method::LCP, Method::PCP}) {
            const RetainedSets* wide = nullptr;
            const RetainedSets* narrow = nullptr;
            for (const auto& r : run.retained) {
                if (r.method != method) continue;
                if (r.alpha == 0.05) wide = &r;
                if (r.alpha == 0.2) narrow = &r;
            }
            REQUIRE(wide != nullptr);
            REQUIRE(narrow != nullptr);
            REQUIRE(wide->sets.size() == narrow->sets.size());
            for (std::size_t i = 0; i < wide->sets.size(); ++i) {
                for (int k = 1; k <= t.depth(); ++k) {
                    const auto& w = wide->sets[i].layer_set(k);
                    const auto& n = narrow->sets[i].layer_set(k);
                    CHECK(std::includes(w.begin(), w.end(), n.begin(), n.end()));
                }
                CHECK(std::includes(wide->sets[i].leaf_set.begin(),
                                    wide->sets[i].leaf_set.end(),
                                    narrow->sets[i].leaf_set.begin(),
                                    narrow->sets[i].leaf_set.end()));
            }
        }
    }
}

TEST_CASE("sweep outputs land on disk") {
    Taxonomy t = os_tree();
    Dataset ds = small_benchmark(t, 600);
    ExperimentConfig cfg = quick_config();
    cfg.n_iterations = 2;
    SweepResult result = sweep(cfg, ds);
    auto dir = std::filesystem::temp_directory_path() / "hiercp_harness_test";
    std::filesystem::remove_all(dir);
    write_sweep_outputs(result, dir.string());
    std::string report = read_text_file((dir / "metrics_report.csv").string());
    CHECK(report.find("method,alpha,level,metric,mean,std,n_iterations,n_samples_effective") == 0);
    CHECK(report.find("L-CP") != std::string::npos);
    CHECK(report.find("P-CP") != std::string::npos);
    CHECK(report.find("global,hir") != std::string::npos);
    std::string longfmt = read_text_file((dir / "sweep_long.csv").string());
    CHECK(longfmt.find("method,alpha,level,metric,value,iteration") == 0);

    std::ostringstream table;
    print_summary_table(table, result);
    CHECK(table.str().find("L-CP") != std::string::npos);
    CHECK(table.str().find("0.050") != std::string::npos);
}

TEST_CASE("thread budget honors the environment cap") {
    ::unsetenv("HIERCP_THREADS");
    CHECK(thread_budget() >= 1);
    ::setenv("HIERCP_THREADS", "3", 1);
    CHECK(thread_budget() == 3);
    ::setenv("HIERCP_THREADS", "0", 1);
    CHECK_THROWS_AS(thread_budget(), ValidationError);
    ::setenv("HIERCP_THREADS", "junk", 1);
    CHECK_THROWS_AS(thread_budget(), ValidationError);
    ::unsetenv("HIERCP_THREADS");
}

TEST_CASE("empty dataset and empty alphas are rejected") {
    Taxonomy t = os_tree();
    Dataset empty;
    empty.taxonomy = &t;
    ExperimentConfig cfg = quick_config();
    CHECK_THROWS_AS(sweep(cfg, empty), ValidationError);
    cfg.alphas.clear();
    Dataset ds = small_benchmark(t, 600);
    CHECK_THROWS_AS(sweep(cfg, ds), ValidationError);
}
