#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "reptransfer/transfer.hpp"

namespace reptransfer {

inline constexpr const char* kCodeVersion = "reptransfer 0.1.0";

struct SuiteSpec {
    std::string family = "shared_emission";  // shared_emission | partitioned | mixture |
                                             // comblock | lower_bound
    int num_sources = 2;
    int horizon = 5;
    int num_actions = 4;
    std::string emission_mode = "decodable";
    double sigma = 0.1;
    int codes_per_latent = 3;
    std::vector<double> mixture_weights;
};

struct BudgetSpec {
    int n_rf = 3000;
    int n_lsvi = 2000;
    int n = 500;
    long t_deploy = 8000;
};

struct ExperimentConfig {
    std::string name = "experiment";
    SuiteSpec suite;
    std::string algorithm = "G-RepTransfer";  // source-only | O-RepTransfer | G-RepTransfer |
                                              // oracle | scratch
    BudgetSpec budgets;
    double beta_override = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> beta_sweep;  // multiplicative sweep over the base beta
    double eps_beta_mult = 0.02;     // desk-scale multiplier on beta_eps
    double delta = 0.05;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string out_dir = "out";
    int jobs = 0;  // 0: hardware concurrency
    SolveCriterion solve;
    bool early_stop_on_solve = true;

    static ExperimentConfig from_json(const nlohmann::json& j);  // rejects unknown keys
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
    std::string hash() const;
    void validate() const;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    double beta_mult = 1.0;
    bool ok = false;
    std::string error;
    long episodes_to_solve = -1;
    std::string dir;
};

struct RunManifest {
    std::string experiment;
    std::string config_hash;
    std::string code_version;
    std::string algorithm;
    std::vector<std::string> output_files;
    std::vector<SeedOutcome> outcomes;
    double wall_clock_seconds = 0.0;
    nlohmann::json sample_totals;

    bool any_failed() const;
    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

// Executes the configured algorithm for every (seed, sweep point), writes
// regret CSVs, reports, suite manifests and decoder visualizations under
// out/<name>/<seed>[/beta_<mult>], and returns the manifest (also written to
// out/<name>/manifest_<algorithm>.json). Per-seed failures are recorded and
// the remaining seeds continue.
RunManifest run_experiment(const ExperimentConfig& config);

struct SummaryCell {
    std::string row;     // suite label
    std::string column;  // algorithm
    std::vector<long> episodes;  // -1 denotes infinity
    std::string text;    // formatted cell
};

struct SummaryTable {
    std::vector<std::string> rows;
    std::vector<std::string> columns;
    std::vector<SummaryCell> cells;
    std::string to_csv() const;
    std::string to_text() const;
};

// Fig-1(b)-shaped table: rows are suite settings, columns are baselines,
// cells are "mean (std)" over finite seeds or an infinity marker with a
// finite-fraction annotation when seeds are mixed.
SummaryTable emit_summary(const std::vector<RunManifest>& manifests);

std::string format_summary_cell(const std::vector<long>& episodes);

struct VizResult {
    std::vector<std::string> files;
    nlohmann::json collapses;
};

// Per-latent decoded-state grids: 30 observations per (latent, step), averaged
// one-hot decoder outputs, one labels x steps CSV per latent. Two latents
// whose columns coincide within 0.1 in l-infinity are flagged as collapsed.
VizResult emit_decoder_viz(const FeatureMap& phi, const BlockMdp& env, int h_begin, int h_end,
                           Rng& rng, const std::filesystem::path& out_dir);

// Rebuild a decoder-backed feature map from its serialized form against an
// environment's codebook layout.
FeatureMap feature_map_from_json(const nlohmann::json& j, const BlockMdp& env);

TransferSuite build_suite(const SuiteSpec& spec, Rng& rng);
HypothesisClass default_class_for(const SuiteSpec& spec, const TransferSuite& suite);

}  // namespace reptransfer
