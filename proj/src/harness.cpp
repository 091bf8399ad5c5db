#include "reptransfer/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace reptransfer {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void expect_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                 const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    expect_keys(j,
                {"name", "suite", "algorithm", "budgets", "beta_override", "beta_sweep",
                 "eps_beta_mult", "delta", "seeds", "out_dir", "jobs", "solve",
                 "early_stop_on_solve"},
                "config");
    c.name = j.value("name", c.name);
    if (j.contains("suite")) {
        const auto& s = j.at("suite");
        expect_keys(s,
                    {"family", "num_sources", "horizon", "num_actions", "emission_mode", "sigma",
                     "codes_per_latent", "mixture_weights"},
                    "suite");
        c.suite.family = s.value("family", c.suite.family);
        c.suite.num_sources = s.value("num_sources", c.suite.num_sources);
        c.suite.horizon = s.value("horizon", c.suite.horizon);
        c.suite.num_actions = s.value("num_actions", c.suite.num_actions);
        c.suite.emission_mode = s.value("emission_mode", c.suite.emission_mode);
        c.suite.sigma = s.value("sigma", c.suite.sigma);
        c.suite.codes_per_latent = s.value("codes_per_latent", c.suite.codes_per_latent);
        if (s.contains("mixture_weights"))
            c.suite.mixture_weights = s.at("mixture_weights").get<std::vector<double>>();
    }
    c.algorithm = j.value("algorithm", c.algorithm);
    if (j.contains("budgets")) {
        const auto& b = j.at("budgets");
        expect_keys(b, {"n_rf", "n_lsvi", "n", "t_deploy"}, "budgets");
        c.budgets.n_rf = b.value("n_rf", c.budgets.n_rf);
        c.budgets.n_lsvi = b.value("n_lsvi", c.budgets.n_lsvi);
        c.budgets.n = b.value("n", c.budgets.n);
        c.budgets.t_deploy = b.value("t_deploy", c.budgets.t_deploy);
    }
    if (j.contains("beta_override") && !j.at("beta_override").is_null())
        c.beta_override = j.at("beta_override").get<double>();
    if (j.contains("beta_sweep")) c.beta_sweep = j.at("beta_sweep").get<std::vector<double>>();
    c.eps_beta_mult = j.value("eps_beta_mult", c.eps_beta_mult);
    c.delta = j.value("delta", c.delta);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.out_dir = j.value("out_dir", c.out_dir);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("solve")) {
        const auto& s = j.at("solve");
        expect_keys(s, {"checkpoint_every", "eval_runs", "consecutive"}, "solve");
        c.solve.checkpoint_every = s.value("checkpoint_every", c.solve.checkpoint_every);
        c.solve.eval_runs = s.value("eval_runs", c.solve.eval_runs);
        c.solve.consecutive = s.value("consecutive", c.solve.consecutive);
    }
    c.early_stop_on_solve = j.value("early_stop_on_solve", c.early_stop_on_solve);
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return from_json(j);
}

void ExperimentConfig::validate() const {
    static const std::set<std::string> algorithms{"source-only", "O-RepTransfer", "G-RepTransfer",
                                                  "oracle", "scratch"};
    if (!algorithms.count(algorithm)) throw ConfigError("unknown algorithm '" + algorithm + "'");
    static const std::set<std::string> families{"shared_emission", "partitioned", "mixture",
                                                "comblock", "lower_bound"};
    if (!families.count(suite.family)) throw ConfigError("unknown suite family '" + suite.family + "'");
    if (suite.emission_mode != "decodable" && suite.emission_mode != "noisy")
        throw ConfigError("emission_mode must be decodable or noisy");
    if (suite.horizon < 1 || suite.num_actions < 2 || suite.num_sources < 1)
        throw ConfigError("suite dimensions must be positive");
    if (budgets.n_rf <= 0 || budgets.n_lsvi <= 0 || budgets.n <= 0 || budgets.t_deploy <= 0)
        throw ConfigError("budgets must be positive");
    if (delta <= 0.0 || delta >= 1.0) throw ConfigError("delta must be in (0,1)");
    if (seeds.empty()) throw ConfigError("seed list must be non-empty");
    if (solve.checkpoint_every <= 0 || solve.consecutive <= 0 || solve.eval_runs <= 0)
        throw ConfigError("solve criterion fields must be positive");
    for (double m : beta_sweep)
        if (m <= 0.0) throw ConfigError("beta sweep multipliers must be positive");
    if (eps_beta_mult <= 0.0) throw ConfigError("eps_beta_mult must be positive");
    bool needs_sources = algorithm == "G-RepTransfer" || algorithm == "O-RepTransfer" ||
                         algorithm == "source-only";
    if (needs_sources && (suite.family == "comblock"))
        throw ConfigError("algorithm '" + algorithm + "' needs a multi-source suite family");
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    nlohmann::json s;
    s["family"] = suite.family;
    s["num_sources"] = suite.num_sources;
    s["horizon"] = suite.horizon;
    s["num_actions"] = suite.num_actions;
    s["emission_mode"] = suite.emission_mode;
    s["sigma"] = suite.sigma;
    s["codes_per_latent"] = suite.codes_per_latent;
    if (!suite.mixture_weights.empty()) s["mixture_weights"] = suite.mixture_weights;
    j["suite"] = std::move(s);
    j["algorithm"] = algorithm;
    nlohmann::json b;
    b["n_rf"] = budgets.n_rf;
    b["n_lsvi"] = budgets.n_lsvi;
    b["n"] = budgets.n;
    b["t_deploy"] = budgets.t_deploy;
    j["budgets"] = std::move(b);
    if (!std::isnan(beta_override)) j["beta_override"] = beta_override;
    if (!beta_sweep.empty()) j["beta_sweep"] = beta_sweep;
    j["eps_beta_mult"] = eps_beta_mult;
    j["delta"] = delta;
    j["seeds"] = seeds;
    j["out_dir"] = out_dir;
    j["jobs"] = jobs;
    nlohmann::json sv;
    sv["checkpoint_every"] = solve.checkpoint_every;
    sv["eval_runs"] = solve.eval_runs;
    sv["consecutive"] = solve.consecutive;
    j["solve"] = std::move(sv);
    j["early_stop_on_solve"] = early_stop_on_solve;
    return j;
}

std::string ExperimentConfig::hash() const {
    // Identifies the configured experiment; output location and worker count
    // are execution details.
    nlohmann::json j = to_json();
    j.erase("out_dir");
    j.erase("jobs");
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

bool RunManifest::any_failed() const {
    for (const auto& o : outcomes)
        if (!o.ok) return true;
    return false;
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["experiment"] = experiment;
    j["config_hash"] = config_hash;
    j["code_version"] = code_version;
    j["algorithm"] = algorithm;
    j["output_files"] = output_files;
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& o : outcomes) {
        nlohmann::json e;
        e["seed"] = o.seed;
        e["beta_mult"] = o.beta_mult;
        e["ok"] = o.ok;
        e["error"] = o.error;
        e["episodes_to_solve"] = o.episodes_to_solve;
        e["dir"] = o.dir;
        outs.push_back(std::move(e));
    }
    j["outcomes"] = std::move(outs);
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["sample_totals"] = sample_totals;
    return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    m.experiment = j.at("experiment").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.code_version = j.at("code_version").get<std::string>();
    m.algorithm = j.at("algorithm").get<std::string>();
    m.output_files = j.at("output_files").get<std::vector<std::string>>();
    for (const auto& e : j.at("outcomes")) {
        SeedOutcome o;
        o.seed = e.at("seed").get<std::uint64_t>();
        o.beta_mult = e.at("beta_mult").get<double>();
        o.ok = e.at("ok").get<bool>();
        o.error = e.at("error").get<std::string>();
        o.episodes_to_solve = e.at("episodes_to_solve").get<long>();
        o.dir = e.at("dir").get<std::string>();
        m.outcomes.push_back(std::move(o));
    }
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    m.sample_totals = j.at("sample_totals");
    return m;
}

TransferSuite build_suite(const SuiteSpec& spec, Rng& rng) {
    EmissionMode mode =
        spec.emission_mode == "noisy" ? EmissionMode::Noisy : EmissionMode::Decodable;
    if (spec.family == "shared_emission") {
        return build_shared_emission_suite(spec.num_sources, spec.horizon, rng, spec.num_actions,
                                           spec.codes_per_latent, mode, spec.sigma);
    }
    if (spec.family == "partitioned") {
        if (mode == EmissionMode::Noisy)
            throw ConfigError("partitioned suites are decodable-mode only");
        return build_partitioned_suite(spec.num_sources, spec.horizon, rng, spec.num_actions,
                                       spec.codes_per_latent);
    }
    if (spec.family == "mixture") {
        std::vector<BlockMdp> sources;
        ComblockOptions opt;
        opt.horizon = spec.horizon;
        opt.num_actions = spec.num_actions;
        opt.mode = mode;
        opt.codes_per_latent = spec.codes_per_latent;
        opt.sigma = spec.sigma;
        for (int k = 0; k < spec.num_sources; ++k) sources.push_back(build_comblock(opt, rng));
        std::vector<double> w = spec.mixture_weights;
        if (w.empty()) w.assign(spec.num_sources, 1.0 / spec.num_sources);
        return build_mixture_target(sources, w);
    }
    if (spec.family == "comblock") {
        TransferSuite suite;
        ComblockOptions opt;
        opt.horizon = spec.horizon;
        opt.num_actions = spec.num_actions;
        opt.mode = mode;
        opt.codes_per_latent = spec.codes_per_latent;
        opt.sigma = spec.sigma;
        suite.target = build_comblock(opt, rng);
        suite.layout = CodebookLayout::from_env(suite.target);
        return suite;
    }
    if (spec.family == "lower_bound") return build_lower_bound_family().suite;
    throw ConfigError("unknown suite family " + spec.family);
}

HypothesisClass default_class_for(const SuiteSpec& spec, const TransferSuite& suite) {
    if (spec.family == "lower_bound") return build_lower_bound_family().hypothesis_class();
    ClassOptions options;
    if (spec.family == "partitioned") {
        options.block_masks = true;
    } else {
        options.merge_decoys = true;
        options.gauge_swaps = true;
    }
    return make_decoder_class(suite.layout, suite.target.num_actions, options);
}

VizResult emit_decoder_viz(const FeatureMap& phi, const BlockMdp& env, int h_begin, int h_end,
                           Rng& rng, const fs::path& out_dir) {
    VizResult result;
    h_end = std::min(h_end, env.horizon + 1);
    int max_labels = 0;
    for (int h = h_begin; h < h_end; ++h) max_labels = std::max(max_labels, phi.labels(h));
    int max_latents = 0;
    for (int h = h_begin; h < h_end; ++h) max_latents = std::max(max_latents, env.latents_at(h));

    // grids[z]: labels x steps, column h = mean one-hot decode of 30 draws from o_h(.|z)
    std::vector<Eigen::MatrixXd> grids(max_latents,
                                       Eigen::MatrixXd::Zero(max_labels, h_end - h_begin));
    for (int h = h_begin; h < h_end; ++h) {
        for (int z = 0; z < env.latents_at(h); ++z) {
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(max_labels);
            for (int draw = 0; draw < 30; ++draw) {
                Observation s = env.emit(h, z, rng);
                mean[phi.decode_label(h, s)] += 1.0 / 30.0;
            }
            grids[z].col(h - h_begin) = mean;
        }
    }

    nlohmann::json collapses = nlohmann::json::array();
    for (int h = h_begin; h < h_end; ++h) {
        for (int za = 0; za < env.latents_at(h); ++za) {
            for (int zb = za + 1; zb < env.latents_at(h); ++zb) {
                double dist =
                    (grids[za].col(h - h_begin) - grids[zb].col(h - h_begin)).cwiseAbs().maxCoeff();
                if (dist < 0.1) {
                    nlohmann::json c;
                    c["h"] = h;
                    c["latent_a"] = za;
                    c["latent_b"] = zb;
                    collapses.push_back(std::move(c));
                }
            }
        }
    }

    for (int z = 0; z < max_latents; ++z) {
        std::string csv;
        for (int r = 0; r < grids[z].rows(); ++r) {
            for (int c = 0; c < grids[z].cols(); ++c) {
                if (c) csv += ",";
                csv += fmt_double(grids[z](r, c));
            }
            csv += "\n";
        }
        fs::path file = out_dir / ("decoder_latent_" + std::to_string(z) + ".csv");
        write_file(file, csv);
        result.files.push_back(file.string());
    }
    fs::path cfile = out_dir / "collapses.json";
    write_file(cfile, dump_json(collapses));
    result.files.push_back(cfile.string());
    result.collapses = std::move(collapses);
    return result;
}

FeatureMap feature_map_from_json(const nlohmann::json& j, const BlockMdp& env) {
    if (j.at("kind").get<std::string>() == "ground_truth") return FeatureMap::ground_truth(env);
    DecoderCandidate d;
    d.layout = CodebookLayout::from_env(env);
    d.relabel = j.at("decoder").at("relabel").get<std::vector<std::vector<int>>>();
    d.labels_per_layer = j.at("decoder").at("labels_per_layer").get<std::vector<int>>();
    d.name = j.at("decoder").at("name").get<std::string>();
    return FeatureMap::from_decoder(std::move(d), j.at("num_actions").get<int>());
}

namespace {

struct WorkItem {
    std::uint64_t seed;
    double beta_mult;
};

TransferReport run_one(const ExperimentConfig& config, std::uint64_t seed, double beta_mult,
                       const fs::path& dir) {
    Rng env_rng = Rng::stream(seed, "env-stream");
    Rng learner_rng = Rng::stream(seed, "learner-stream");

    TransferSuite suite = build_suite(config.suite, env_rng);
    write_file(dir / "suite.json", dump_json(suite.manifest()));

    DeployOptions deploy;
    deploy.t_deploy = config.budgets.t_deploy;
    deploy.beta_override = config.beta_override;
    deploy.beta_mult = beta_mult;
    deploy.delta = config.delta;
    deploy.solve = config.solve;
    deploy.early_stop_on_solve = config.early_stop_on_solve;

    TransferReport report;
    if (config.algorithm == "oracle") {
        report = oracle_baseline(suite.target, deploy, learner_rng);
    } else if (config.algorithm == "scratch") {
        HypothesisClass cls = default_class_for(config.suite, suite);
        ScratchBudgets budgets;
        budgets.n_rf = config.budgets.n_rf;
        report = scratch_baseline(suite.target, cls, budgets, deploy, learner_rng);
    } else if (config.algorithm == "G-RepTransfer") {
        HypothesisClass cls = default_class_for(config.suite, suite);
        EpsOptions eps_options;
        eps_options.beta_mult = config.eps_beta_mult;
        std::vector<ExploratoryPolicy> policies;
        for (int k = 0; k < suite.num_sources(); ++k) {
            policies.push_back(exploratory_policy_search(suite.sources[k], cls,
                                                         config.budgets.n_lsvi,
                                                         config.budgets.n_rf, config.delta,
                                                         learner_rng, eps_options));
        }
        report = rep_transfer_generative(suite, policies, cls, config.budgets.n, config.delta,
                                         deploy, learner_rng);
    } else if (config.algorithm == "O-RepTransfer") {
        HypothesisClass cls = default_class_for(config.suite, suite);
        EpsOptions eps_options;
        eps_options.beta_mult = config.eps_beta_mult;
        OnlineBudgets budgets;
        budgets.n_rf = config.budgets.n_rf;
        budgets.n_lsvi = config.budgets.n_lsvi;
        budgets.n_per_pair = config.budgets.n;
        report = rep_transfer_online(suite, cls, budgets, config.delta, deploy, learner_rng,
                                     eps_options);
    } else if (config.algorithm == "source-only") {
        HypothesisClass cls = default_class_for(config.suite, suite);
        EpsOptions eps_options;
        eps_options.beta_mult = config.eps_beta_mult;
        report = source_only_baseline(suite, cls, config.budgets.n_rf, config.budgets.n_lsvi,
                                      config.delta, deploy, learner_rng, eps_options);
    } else {
        throw ConfigError("unknown algorithm " + config.algorithm);
    }

    write_file(dir / "regret.csv", report.trace.to_csv());
    // Confusion matrices as row-major tables, one block per step.
    std::string confusion_csv = "h,true_latent,decoded_label,mass\n";
    for (size_t h = 0; h < report.confusion.size(); ++h) {
        const Eigen::MatrixXd& m = report.confusion[h];
        for (int z = 0; z < m.rows(); ++z)
            for (int l = 0; l < m.cols(); ++l)
                confusion_csv += std::to_string(h) + "," + std::to_string(z) + "," +
                                 std::to_string(l) + "," + fmt_double(m(z, l)) + "\n";
    }
    write_file(dir / "confusion.csv", confusion_csv);
    nlohmann::json rj = report.to_json();
    rj["seed"] = seed;
    rj["beta_mult"] = beta_mult;
    rj["config_hash"] = config.hash();
    write_file(dir / "report.json", dump_json(rj));

    // Decoder visualization against the target emission process.
    FeatureMap phi = feature_map_from_json(report.learned_phi, suite.target);
    Rng viz_rng = Rng::stream(seed, "viz-stream");
    emit_decoder_viz(phi, suite.target, 0, suite.target.horizon + 1, viz_rng, dir / "viz");
    return report;
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config) {
    config.validate();
    auto started = std::chrono::steady_clock::now();

    std::vector<WorkItem> items;
    std::vector<double> sweep = config.beta_sweep;
    if (sweep.empty()) sweep.push_back(1.0);
    for (std::uint64_t seed : config.seeds)
        for (double mult : sweep) items.push_back({seed, mult});

    fs::path root = fs::path(config.out_dir) / config.name;
    fs::create_directories(root);

    RunManifest manifest;
    manifest.experiment = config.name;
    manifest.config_hash = config.hash();
    manifest.code_version = kCodeVersion;
    manifest.algorithm = config.algorithm;
    manifest.outcomes.resize(items.size());

    std::mutex mu;
    std::vector<std::string> files;
    nlohmann::json totals;
    totals["target_episodes"] = 0L;
    totals["source_episodes"] = 0L;
    totals["source_generative"] = 0L;
    totals["eval_episodes"] = 0L;

    int jobs = config.jobs > 0 ? config.jobs
                               : static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    jobs = std::min<int>(jobs, static_cast<int>(items.size()));

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            size_t idx = next.fetch_add(1);
            if (idx >= items.size()) return;
            const WorkItem& item = items[idx];
            fs::path dir = root / std::to_string(item.seed);
            if (sweep.size() > 1) {
                std::ostringstream tag;
                tag << "beta_" << item.beta_mult;
                dir /= tag.str();
            }
            SeedOutcome outcome;
            outcome.seed = item.seed;
            outcome.beta_mult = item.beta_mult;
            outcome.dir = dir.string();
            try {
                TransferReport report = run_one(config, item.seed, item.beta_mult, dir);
                outcome.ok = true;
                outcome.episodes_to_solve = report.episodes_to_solve;
                std::lock_guard<std::mutex> lock(mu);
                files.push_back((dir / "report.json").string());
                files.push_back((dir / "regret.csv").string());
                files.push_back((dir / "suite.json").string());
                totals["target_episodes"] = totals["target_episodes"].get<long>() +
                                            report.accounting.target_episodes +
                                            report.accounting.target_pretrain_episodes;
                long src_ep = 0, src_gen = 0;
                for (long v : report.accounting.source_episodes) src_ep += v;
                for (long v : report.accounting.source_generative) src_gen += v;
                totals["source_episodes"] = totals["source_episodes"].get<long>() + src_ep;
                totals["source_generative"] = totals["source_generative"].get<long>() + src_gen;
                totals["eval_episodes"] =
                    totals["eval_episodes"].get<long>() + report.accounting.eval_episodes;
            } catch (const std::exception& e) {
                outcome.ok = false;
                outcome.error = e.what();
            }
            std::lock_guard<std::mutex> lock(mu);
            manifest.outcomes[idx] = std::move(outcome);
        }
    };

    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::sort(files.begin(), files.end());
    manifest.output_files = std::move(files);
    manifest.sample_totals = std::move(totals);
    manifest.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    // Every listed output must exist and parse before the manifest is final.
    for (const auto& f : manifest.output_files) {
        if (!fs::exists(f)) throw std::runtime_error("missing output file " + f);
        if (f.size() > 5 && f.substr(f.size() - 5) == ".json") {
            std::ifstream in(f);
            nlohmann::json j;
            in >> j;
        }
    }

    write_file(root / ("manifest_" + config.algorithm + ".json"), dump_json(manifest.to_json()));

    // Refresh the per-experiment summary over every algorithm run so far.
    std::vector<RunManifest> all;
    for (const auto& entry : fs::directory_iterator(root)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("manifest_", 0) == 0 && entry.path().extension() == ".json") {
            std::ifstream in(entry.path());
            nlohmann::json j;
            in >> j;
            all.push_back(RunManifest::from_json(j));
        }
    }
    std::sort(all.begin(), all.end(),
              [](const RunManifest& a, const RunManifest& b) { return a.algorithm < b.algorithm; });
    SummaryTable table = emit_summary(all);
    write_file(root / "summary.csv", table.to_csv());
    write_file(root / "summary.txt", table.to_text());
    return manifest;
}

std::string format_summary_cell(const std::vector<long>& episodes) {
    int finite = 0;
    for (long e : episodes)
        if (e >= 0) ++finite;
    int n = static_cast<int>(episodes.size());
    int infinite = n - finite;
    double mean = 0.0, sq = 0.0;
    if (finite > 0) {
        for (long e : episodes)
            if (e >= 0) mean += static_cast<double>(e);
        mean /= finite;
        for (long e : episodes)
            if (e >= 0) sq += (e - mean) * (e - mean);
        sq = std::sqrt(sq / finite);  // population std
    }
    char buf[96];
    if (infinite == 0) {
        std::snprintf(buf, sizeof(buf), "%g (%.2f)", mean, sq);
        return buf;
    }
    // Infinity wins when the solve criterion was unmet for the majority of
    // seeds; mixed cells always carry the finite-fraction annotation.
    if (infinite * 2 > n || finite == 0) {
        std::snprintf(buf, sizeof(buf), "inf (%d/%d finite)", finite, n);
        return buf;
    }
    std::snprintf(buf, sizeof(buf), "%g (%.2f) [%d/%d finite]", mean, sq, finite, n);
    return buf;
}

SummaryTable emit_summary(const std::vector<RunManifest>& manifests) {
    if (manifests.empty()) throw std::invalid_argument("no manifests supplied");
    SummaryTable table;
    for (const auto& m : manifests) {
        std::string row = m.experiment;
        std::string col = m.algorithm;
        if (std::find(table.rows.begin(), table.rows.end(), row) == table.rows.end())
            table.rows.push_back(row);
        if (std::find(table.columns.begin(), table.columns.end(), col) == table.columns.end())
            table.columns.push_back(col);
        SummaryCell cell;
        cell.row = row;
        cell.column = col;
        for (const auto& o : m.outcomes) cell.episodes.push_back(o.ok ? o.episodes_to_solve : -1);
        cell.text = format_summary_cell(cell.episodes);
        table.cells.push_back(std::move(cell));
    }
    return table;
}

std::string SummaryTable::to_csv() const {
    std::string out = "suite";
    for (const auto& c : columns) out += "," + c;
    out += "\n";
    for (const auto& r : rows) {
        out += r;
        for (const auto& c : columns) {
            out += ",";
            for (const auto& cell : cells)
                if (cell.row == r && cell.column == c) {
                    std::string quoted = cell.text;
                    out += "\"" + quoted + "\"";
                    break;
                }
        }
        out += "\n";
    }
    return out;
}

std::string SummaryTable::to_text() const {
    size_t width = 24;
    std::string out;
    auto pad = [&](const std::string& s) {
        std::string p = s;
        while (p.size() < width) p += ' ';
        return p;
    };
    out += pad("suite");
    for (const auto& c : columns) out += pad(c);
    out += "\n";
    for (const auto& r : rows) {
        out += pad(r);
        for (const auto& c : columns) {
            std::string text = "-";
            for (const auto& cell : cells)
                if (cell.row == r && cell.column == c) {
                    text = cell.text;
                    break;
                }
            out += pad(text);
        }
        out += "\n";
    }
    return out;
}

}  // namespace reptransfer
