#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "reptransfer/harness.hpp"
#include "support.hpp"

using namespace reptransfer;
using namespace reptransfer::testing;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_config_json(const std::string& out_dir) {
    nlohmann::json j;
    j["name"] = "tiny";
    j["suite"] = {{"family", "shared_emission"}, {"num_sources", 2}, {"horizon", 3},
                  {"num_actions", 4}};
    j["algorithm"] = "oracle";
    j["budgets"] = {{"n_rf", 300}, {"n_lsvi", 200}, {"n", 100}, {"t_deploy", 1500}};
    j["beta_override"] = 1.0;
    j["seeds"] = {1, 2};
    j["out_dir"] = out_dir;
    j["jobs"] = 2;
    return j;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parsing rejects unknown keys and invalid values") {
    nlohmann::json good = tiny_config_json("/tmp/rt_cfg");
    ExperimentConfig config = ExperimentConfig::from_json(good);
    CHECK(config.name == "tiny");
    CHECK(config.algorithm == "oracle");
    CHECK(config.seeds.size() == 2);

    nlohmann::json bad = good;
    bad["unknown_key"] = 1;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

    bad = good;
    bad["suite"]["typo"] = 1;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

    bad = good;
    bad["algorithm"] = "nonsense";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

    bad = good;
    bad["budgets"]["n_rf"] = 0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

    bad = good;
    bad["seeds"] = nlohmann::json::array();
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

    bad = good;
    bad["delta"] = 1.5;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

    // RepTransfer needs a multi-source family.
    bad = good;
    bad["suite"]["family"] = "comblock";
    bad["algorithm"] = "G-RepTransfer";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

    // Round trip through to_json preserves the hash.
    ExperimentConfig back = ExperimentConfig::from_json(config.to_json());
    CHECK(back.hash() == config.hash());
}

TEST_CASE("summary cell formatting") {
    CHECK(format_summary_cell({1, 2, 3, 4, 5}) == "3 (1.41)");
    CHECK(format_summary_cell({7}) == "7 (0.00)");
    // Majority infinite: infinity with the finite fraction annotated.
    CHECK(format_summary_cell({100, 200, -1, -1, -1}) == "inf (2/5 finite)");
    CHECK(format_summary_cell({-1}) == "inf (0/1 finite)");
    // Finite majority with some infinities keeps the mean but annotates.
    CHECK(format_summary_cell({100, 200, 300, -1, -1}) == "200 (81.65) [3/5 finite]");
}

TEST_CASE("decoder visualization: identity grids for the truth, collapse flags for merges") {
    Rng rng = Rng::stream(121, "env-stream");
    BlockMdp env = build_comblock(4, 4, EmissionMode::Decodable, rng);
    fs::path dir = "/tmp/rt_viz_test";
    fs::remove_all(dir);

    FeatureMap truth = FeatureMap::ground_truth(env);
    Rng viz_rng = Rng::stream(121, "viz-stream");
    VizResult clean = emit_decoder_viz(truth, env, 0, env.horizon + 1, viz_rng, dir / "clean");
    CHECK(clean.collapses.empty());
    CHECK(fs::exists(dir / "clean" / "decoder_latent_0.csv"));
    CHECK(fs::exists(dir / "clean" / "collapses.json"));

    // A decoder merging the two good latents at layer 2 must be flagged there.
    auto layout = CodebookLayout::from_env(env);
    DecoderCandidate merged;
    merged.layout = layout;
    merged.relabel = layout->group_canonical_label;
    merged.labels_per_layer = layout->canonical_labels_per_layer;
    for (int g = 0; g < layout->groups_per_layer[2]; ++g) {
        int label = layout->group_canonical_label[2][g];
        merged.relabel[2][g] = label < 2 ? 0 : 1;
    }
    merged.labels_per_layer[2] = 2;
    merged.name = "merged";
    FeatureMap collapsed = FeatureMap::from_decoder(merged, 4);
    VizResult flagged = emit_decoder_viz(collapsed, env, 0, env.horizon + 1, viz_rng, dir / "bad");
    bool found = false;
    for (const auto& c : flagged.collapses)
        if (c.at("h").get<int>() == 2 && c.at("latent_a").get<int>() == 0 &&
            c.at("latent_b").get<int>() == 1)
            found = true;
    CHECK(found);
}

TEST_CASE("run_experiment writes per-seed outputs, a manifest, and is deterministic") {
    fs::remove_all("/tmp/rt_run_a");
    fs::remove_all("/tmp/rt_run_b");
    ExperimentConfig config = ExperimentConfig::from_json(tiny_config_json("/tmp/rt_run_a"));
    RunManifest manifest = run_experiment(config);
    CHECK_FALSE(manifest.any_failed());
    CHECK(manifest.outcomes.size() == 2);
    for (const auto& outcome : manifest.outcomes) {
        CHECK(outcome.ok);
        CHECK(outcome.episodes_to_solve >= 0);
    }
    for (const auto& file : manifest.output_files) CHECK(fs::exists(file));
    CHECK(fs::exists("/tmp/rt_run_a/tiny/manifest_oracle.json"));
    CHECK(fs::exists("/tmp/rt_run_a/tiny/1/report.json"));
    CHECK(fs::exists("/tmp/rt_run_a/tiny/1/regret.csv"));
    CHECK(fs::exists("/tmp/rt_run_a/tiny/1/suite.json"));
    CHECK(fs::exists("/tmp/rt_run_a/tiny/1/viz/collapses.json"));

    // Same config, same seeds, different out dir: byte-identical artifacts.
    ExperimentConfig again = config;
    again.out_dir = "/tmp/rt_run_b";
    run_experiment(again);
    for (const std::string& name :
         {std::string("report.json"), std::string("regret.csv"), std::string("suite.json")}) {
        for (const std::string& seed : {std::string("1"), std::string("2")}) {
            std::string a = slurp(fs::path("/tmp/rt_run_a/tiny") / seed / name);
            std::string b = slurp(fs::path("/tmp/rt_run_b/tiny") / seed / name);
            CHECK(a == b);
            CHECK(!a.empty());
        }
    }

    // Reports parse and agree with the manifest's solve column.
    std::ifstream in("/tmp/rt_run_a/tiny/1/report.json");
    nlohmann::json report;
    in >> report;
    CHECK(report.at("algorithm") == "oracle");
    CHECK(report.at("episodes_to_solve").get<long>() == manifest.outcomes[0].episodes_to_solve);

    SummaryTable table = emit_summary({manifest});
    CHECK(table.rows.size() == 1);
    CHECK(table.columns.size() == 1);
    CHECK(table.to_csv().find("tiny") != std::string::npos);
    CHECK(table.to_text().find("oracle") != std::string::npos);
}

TEST_CASE("worker count does not change the artifacts") {
    fs::remove_all("/tmp/rt_jobs1");
    fs::remove_all("/tmp/rt_jobs4");
    ExperimentConfig config = ExperimentConfig::from_json(tiny_config_json("/tmp/rt_jobs1"));
    config.budgets.t_deploy = 600;
    config.jobs = 1;
    run_experiment(config);
    config.out_dir = "/tmp/rt_jobs4";
    config.jobs = 4;
    run_experiment(config);
    for (const std::string& seed : {std::string("1"), std::string("2")}) {
        std::string a = slurp(fs::path("/tmp/rt_jobs1/tiny") / seed / "report.json");
        std::string b = slurp(fs::path("/tmp/rt_jobs4/tiny") / seed / "report.json");
        CHECK(a == b);
        CHECK(!a.empty());
    }
}

TEST_CASE("the fixed lower-bound family runs through the harness") {
    fs::remove_all("/tmp/rt_run_fail");
    ExperimentConfig config = ExperimentConfig::from_json(tiny_config_json("/tmp/rt_run_fail"));
    config.suite.family = "lower_bound";  // horizon/action fields ignored by this family
    config.algorithm = "oracle";
    config.budgets.t_deploy = 200;
    RunManifest manifest = run_experiment(config);
    CHECK_FALSE(manifest.any_failed());
}

TEST_CASE("per-seed failures are recorded and the rest of the manifest survives") {
    fs::remove_all("/tmp/rt_run_err");
    ExperimentConfig config = ExperimentConfig::from_json(tiny_config_json("/tmp/rt_run_err"));
    // K=4 partitioned blocks over 7 layers make the mask class too large to
    // enumerate; every seed fails at class construction, not at validation.
    config.suite.family = "partitioned";
    config.suite.num_sources = 4;
    config.suite.horizon = 6;
    config.suite.num_actions = 10;
    config.algorithm = "O-RepTransfer";
    RunManifest manifest = run_experiment(config);
    CHECK(manifest.any_failed());
    for (const auto& outcome : manifest.outcomes) {
        CHECK_FALSE(outcome.ok);
        CHECK(outcome.error.find("too large") != std::string::npos);
    }
}

TEST_CASE("mis-associated block decoding shows as an off-diagonal viz pattern") {
    Rng rng = Rng::stream(123, "env-stream");
    TransferSuite suite = build_partitioned_suite(2, 4, rng, 10, 2);
    ClassOptions options;
    options.block_masks = true;
    HypothesisClass cls = make_decoder_class(suite.layout, 10, options);
    // The canonical candidate decodes the non-primary block with the swapped
    // association; on target layers emitting from that block the mean decoded
    // vectors sit off the true latent.
    FeatureMap canonical = FeatureMap::from_decoder(cls.candidates[0], 10);
    Rng viz_rng = Rng::stream(123, "viz-stream");
    fs::path dir = "/tmp/rt_viz_part";
    fs::remove_all(dir);
    emit_decoder_viz(canonical, suite.target, 0, suite.target.horizon + 1, viz_rng, dir);
    std::vector<Eigen::MatrixXd> confusion = decoder_confusion(suite.target, canonical);
    bool off_diagonal = false;
    for (const auto& m : confusion)
        for (int z = 0; z < m.rows(); ++z)
            if (m(z, z) < 0.5) off_diagonal = true;
    CHECK(off_diagonal);
}

TEST_CASE("noisy-mode experiments run end to end with Monte-Carlo checkpoints") {
    fs::remove_all("/tmp/rt_run_noisy");
    nlohmann::json j = tiny_config_json("/tmp/rt_run_noisy");
    j["name"] = "noisy";
    j["suite"]["emission_mode"] = "noisy";
    j["suite"]["horizon"] = 3;
    j["budgets"]["t_deploy"] = 1500;
    ExperimentConfig config = ExperimentConfig::from_json(j);
    config.seeds = {1};

    RunManifest oracle = run_experiment(config);
    CHECK_FALSE(oracle.any_failed());
    CHECK(oracle.outcomes[0].episodes_to_solve >= 0);
    // Monte-Carlo evaluation episodes are tracked separately.
    std::ifstream in("/tmp/rt_run_noisy/noisy/1/report.json");
    nlohmann::json report;
    in >> report;
    CHECK(report.at("accounting").at("eval_episodes").get<long>() > 0);

    config.algorithm = "scratch";
    RunManifest scratch = run_experiment(config);
    CHECK_FALSE(scratch.any_failed());
    CHECK(scratch.outcomes[0].episodes_to_solve >= 0);
}

TEST_CASE("feature maps rebuild from their serialized form") {
    Rng rng = Rng::stream(122, "env-stream");
    BlockMdp env = build_comblock(3, 4, EmissionMode::Decodable, rng);
    auto layout = CodebookLayout::from_env(env);
    DecoderCandidate d;
    d.layout = layout;
    d.relabel = layout->group_canonical_label;
    d.labels_per_layer = layout->canonical_labels_per_layer;
    d.name = "canonical";
    FeatureMap phi = FeatureMap::from_decoder(d, 4);
    FeatureMap back = feature_map_from_json(phi.to_json(), env);
    for (int h = 0; h < 3; ++h) {
        for (int code = 0; code < env.codes_at(h); ++code) {
            Observation s;
            s.code = code;
            CHECK(back.decode_label(h, s) == phi.decode_label(h, s));
        }
    }
}
