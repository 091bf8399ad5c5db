#include "reptransfer/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace reptransfer {

namespace {

// Roll a policy in `env` up to `layer`, return the state there plus the next
// action chosen by the policy (or a uniform draw for the exploratory tail).
struct RollState {
    Observation s;
    int latent = 0;
    int action = 0;
};

RollState roll_to_layer(const BlockMdp& env, const Policy& policy, int layer, bool uniform_action,
                        Rng& rng) {
    env.begin_episode();
    const Policy& pi = policy.draw_member(rng);
    std::vector<double> d0(env.initial.data(), env.initial.data() + env.initial.size());
    int z = rng.categorical(d0);
    Observation s = env.emit(0, z, rng);
    for (int h = 0; h < layer; ++h) {
        int a = pi.act(h, s, z, env.num_actions, rng);
        const Eigen::MatrixXd& t = env.transitions[h];
        std::vector<double> row(t.cols());
        for (int c = 0; c < t.cols(); ++c) row[c] = t(z * env.num_actions + a, c);
        z = rng.categorical(row);
        s = env.emit(h + 1, z, rng);
        env.count_step();
    }
    RollState out;
    out.s = s;
    out.latent = z;
    out.action = uniform_action ? rng.uniform_int(env.num_actions)
                                : pi.act(layer, s, z, env.num_actions, rng);
    return out;
}

// Episode continuation step in the same environment (no generative access).
Observation continue_episode(const BlockMdp& env, int h, int z, int a, Rng& rng) {
    const Eigen::MatrixXd& t = env.transitions[h];
    std::vector<double> row(t.cols());
    for (int c = 0; c < t.cols(); ++c) row[c] = t(z * env.num_actions + a, c);
    int z_next = rng.categorical(row);
    env.count_step();
    return env.emit(h + 1, z_next, rng);
}

}  // namespace

TransitionDataset cross_sample(const TransferSuite& suite, const std::vector<Policy>& policies,
                               int i, int j, int h, int n, Rng& rng,
                               const CrossSampleOptions& options) {
    const BlockMdp& task_i = suite.sources[i];
    const BlockMdp& task_j = suite.sources[j];
    TransitionDataset out;
    out.task_i = i;
    out.task_j = j;
    out.mode = TransitionDataset::Mode::Cross;
    out.per_h.resize(task_i.horizon);
    for (int t = 0; t < n; ++t) {
        Observation s;
        if (h == 0) {
            if (i == j) {
                task_i.begin_episode();
                s = task_i.sample_initial_observation(rng);
            } else {
                s = task_j.generative_initial(rng);
            }
        } else {
            bool uniform_tail = rng.uniform() < options.uniform_rollin_frac;
            RollState roll = roll_to_layer(task_i, policies[i], h - 1, uniform_tail, rng);
            if (i == j) {
                s = continue_episode(task_i, h - 1, roll.latent, roll.action, rng);
            } else {
                s = task_j.generative_query(h - 1, roll.s, roll.action, rng);
            }
        }
        int a = rng.uniform_int(task_i.num_actions);
        Observation next = task_i.generative_query(h, s, a, rng);
        out.per_h[h].push_back({s, a, next});
    }
    return out;
}

nlohmann::json SampleAccounting::to_json() const {
    nlohmann::json j;
    j["source_generative"] = source_generative;
    j["source_episodes"] = source_episodes;
    j["target_episodes"] = target_episodes;
    j["target_pretrain_episodes"] = target_pretrain_episodes;
    j["eval_episodes"] = eval_episodes;
    return j;
}

nlohmann::json TransferReport::to_json() const {
    nlohmann::json j;
    j["algorithm"] = algorithm;
    j["learned_phi"] = learned_phi;
    j["mle_ties"] = mle_ties;
    nlohmann::json conf = nlohmann::json::array();
    for (const auto& m : confusion) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        conf.push_back(std::move(rows));
    }
    j["confusion"] = std::move(conf);
    j["episodes_to_solve"] = episodes_to_solve;
    j["solved"] = episodes_to_solve >= 0;
    j["v_star"] = v_star;
    j["beta_used"] = beta_used;
    j["span_tv"] = span_tv;
    j["lambda_min_per_source_min"] = lambda_min_per_source_min;
    j["accounting"] = accounting.to_json();
    return j;
}

std::vector<Eigen::MatrixXd> decoder_confusion(const BlockMdp& env, const FeatureMap& phi) {
    std::vector<Eigen::MatrixXd> out;
    for (int h = 0; h < env.horizon; ++h) {
        int z_count = env.latents_at(h);
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(z_count, phi.labels(h));
        const Eigen::MatrixXd& em = env.emissions[h];
        for (int z = 0; z < z_count; ++z) {
            for (int c = 0; c < env.codes_at(h); ++c) {
                if (em(z, c) <= 0.0) continue;
                Observation s;
                s.code = c;
                m(z, phi.decode_label(h, s)) += em(z, c);
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<double> measure_span_tv(const TransferSuite& suite,
                                    const std::vector<LinearMdpModel>& models, int num_policies,
                                    Rng& rng) {
    TargetSpanModel span = target_span_model(models, suite.span);
    const BlockMdp& target = suite.target;
    std::vector<double> worst(target.horizon, 0.0);
    auto support = SupportIndex::full(target);
    for (int p = 0; p < num_policies; ++p) {
        ObsGreedyTable table;
        table.support = support;
        table.action.resize(target.horizon);
        for (int h = 0; h < target.horizon; ++h) {
            table.action[h].resize(support->codes[h].size());
            for (size_t c = 0; c < table.action[h].size(); ++c)
                table.action[h][c] = static_cast<std::uint8_t>(rng.uniform_int(target.num_actions));
        }
        auto tv = span_model_tv_error(span, target, Policy::obs_greedy(std::move(table)));
        for (int h = 0; h < target.horizon; ++h) worst[h] = std::max(worst[h], tv[h]);
    }
    return worst;
}

namespace {

TransferReport deploy_on_target(const BlockMdp& target, const FeatureMap& phi, double alpha_bar,
                                const DeployOptions& deploy, Rng& rng, const std::string& name) {
    TransferReport report;
    report.algorithm = name;
    report.learned_phi = phi.to_json();
    report.confusion = decoder_confusion(target, phi);

    auto [v_star, pi_star] = dp_optimal_value(target);
    report.v_star = v_star;

    int d = phi.max_dim(target.horizon);
    double beta = std::isnan(deploy.beta_override)
                      ? beta_deployment(d, target.horizon, deploy.t_deploy, deploy.delta, alpha_bar)
                      : deploy.beta_override;
    beta *= deploy.beta_mult;
    report.beta_used = beta;

    TrueWorld world(target);
    EnvReward reward(target);
    LsviOptions options;
    options.episodes = static_cast<int>(deploy.t_deploy);
    options.beta = beta;
    options.clip_level = target.horizon;
    options.checkpoint_every = deploy.solve.checkpoint_every;
    options.consecutive = deploy.solve.consecutive;
    options.eval_runs = deploy.solve.eval_runs;
    options.optimal_value = v_star;
    options.early_stop_on_solve = deploy.early_stop_on_solve;
    options.eval_env = &target;

    long episodes_before = target.episodes();
    LsviResult result = lsvi_ucb(world, phi, reward, options, rng);
    report.trace = std::move(result.trace);
    report.episodes_to_solve = report.trace.episodes_to_solve;
    report.accounting.target_episodes = target.episodes() - episodes_before;
    report.accounting.eval_episodes = report.trace.eval_episodes_used;
    return report;
}

}  // namespace

TransferReport rep_transfer_generative(const TransferSuite& suite,
                                       const std::vector<ExploratoryPolicy>& policies,
                                       const HypothesisClass& cls, int n_per_pair, double delta,
                                       const DeployOptions& deploy, Rng& rng,
                                       const CrossSampleOptions& cross_options) {
    int K = suite.num_sources();
    std::vector<long> gen_before(K), ep_before(K);
    for (int k = 0; k < K; ++k) {
        gen_before[k] = suite.sources[k].generative_queries();
        ep_before[k] = suite.sources[k].episodes();
    }

    std::vector<Policy> mixtures;
    mixtures.reserve(K);
    for (const auto& p : policies) mixtures.push_back(p.mixture);

    std::vector<TransitionDataset> datasets;
    datasets.reserve(K * K);
    int H = suite.target.horizon;
    for (int i = 0; i < K; ++i) {
        for (int j = 0; j < K; ++j) {
            TransitionDataset merged;
            merged.task_i = i;
            merged.task_j = j;
            merged.mode = TransitionDataset::Mode::Cross;
            merged.per_h.resize(H);
            for (int h = 0; h < H; ++h) {
                TransitionDataset part =
                    cross_sample(suite, mixtures, i, j, h, n_per_pair, rng, cross_options);
                merged.per_h[h] = std::move(part.per_h[h]);
            }
            datasets.push_back(std::move(merged));
        }
    }

    MultiMleResult mle = mle_multitask(datasets, cls, K);

    TransferReport report;
    std::vector<double> span_tv;
    if (suite.span.present && suite.target.mode == EmissionMode::Decodable)
        span_tv = measure_span_tv(suite, mle.models, 100, rng);

    // Pre-training over: sources are sealed during deployment.
    std::vector<long> gen_after(K);
    for (int k = 0; k < K; ++k) gen_after[k] = suite.sources[k].generative_queries();
    suite.revoke_sources();
    DeployOptions deploy_used = deploy;
    deploy_used.delta = delta;
    report = deploy_on_target(suite.target, mle.phi, suite.alpha_bar(), deploy_used, rng,
                              "G-RepTransfer");
    for (int k = 0; k < K; ++k) {
        if (suite.sources[k].generative_queries() != gen_after[k])
            throw AccessRevoked("source accessed during deployment");
    }
    suite.restore_sources();

    report.mle_ties = mle.ties;
    report.span_tv = std::move(span_tv);
    report.accounting.source_generative.resize(K);
    report.accounting.source_episodes.resize(K);
    for (int k = 0; k < K; ++k) {
        report.accounting.source_generative[k] = gen_after[k] - gen_before[k];
        report.accounting.source_episodes[k] = suite.sources[k].episodes() - ep_before[k];
    }
    std::vector<double> lm;
    for (int h = 0; h < H; ++h) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& p : policies)
            if (h < static_cast<int>(p.lambda_min.size())) m = std::min(m, p.lambda_min[h]);
        lm.push_back(m);
    }
    report.lambda_min_per_source_min = std::move(lm);
    return report;
}

TransferReport rep_transfer_online(const TransferSuite& suite, const HypothesisClass& cls,
                                   const OnlineBudgets& budgets, double delta,
                                   const DeployOptions& deploy, Rng& rng,
                                   const EpsOptions& eps_options) {
    int K = suite.num_sources();
    int H = suite.target.horizon;
    std::vector<long> gen_before(K), ep_before(K);
    for (int k = 0; k < K; ++k) {
        gen_before[k] = suite.sources[k].generative_queries();
        ep_before[k] = suite.sources[k].episodes();
    }

    // Same per-task tuple count as the K generative pair datasets combined.
    long n_task = K > 1 ? static_cast<long>(budgets.n_per_pair) * K * (K - 1)
                        : static_cast<long>(budgets.n_per_pair);

    std::vector<TransitionDataset> datasets;
    std::vector<double> lambda_min_min(H, std::numeric_limits<double>::infinity());
    for (int k = 0; k < K; ++k) {
        ExploratoryPolicy pol = exploratory_policy_search(suite.sources[k], cls, budgets.n_lsvi,
                                                          budgets.n_rf, delta, rng, eps_options);
        for (int h = 0; h < H; ++h) lambda_min_min[h] = std::min(lambda_min_min[h], pol.lambda_min[h]);
        TransitionDataset d;
        d.task_i = k;
        d.task_j = k;
        d.mode = TransitionDataset::Mode::OnPolicy;
        d.per_h.resize(H);
        const BlockMdp& env = suite.sources[k];
        for (long t = 0; t < n_task; ++t) {
            Trajectory traj = sample_episode(env, pol.mixture, rng);
            for (int h = 0; h < H; ++h) {
                Observation next = h + 1 < H ? traj.steps[h + 1].obs : traj.final_obs;
                d.per_h[h].push_back({traj.steps[h].obs, traj.steps[h].action, next});
            }
        }
        datasets.push_back(std::move(d));
    }

    MultiMleResult mle = mle_multitask(datasets, cls, K);

    std::vector<double> span_tv;
    if (suite.span.present && suite.target.mode == EmissionMode::Decodable)
        span_tv = measure_span_tv(suite, mle.models, 100, rng);

    std::vector<long> gen_after(K);
    for (int k = 0; k < K; ++k) gen_after[k] = suite.sources[k].generative_queries();
    suite.revoke_sources();
    DeployOptions deploy_used = deploy;
    deploy_used.delta = delta;
    TransferReport report = deploy_on_target(suite.target, mle.phi, suite.alpha_bar(), deploy_used,
                                             rng, "O-RepTransfer");
    suite.restore_sources();

    report.mle_ties = mle.ties;
    report.span_tv = std::move(span_tv);
    report.lambda_min_per_source_min = std::move(lambda_min_min);
    report.accounting.source_generative.resize(K);
    report.accounting.source_episodes.resize(K);
    for (int k = 0; k < K; ++k) {
        report.accounting.source_generative[k] = gen_after[k] - gen_before[k];
        report.accounting.source_episodes[k] = suite.sources[k].episodes() - ep_before[k];
    }
    return report;
}

double verify_lower_bound(const LowerBoundFamily& family, const FeatureMap& phi_hat) {
    const BlockMdp& target = family.suite.target;
    const int H = target.horizon;
    const int A = target.num_actions;

    // Fingerprint every reachable observation by its feature rows and known
    // reward rows; policies of the restricted form assign one action per
    // fingerprint.
    std::map<std::string, int> groups;
    std::vector<std::vector<int>> group_of(H);  // per h, per code (-1 off support)
    for (int h = 0; h < H; ++h) {
        group_of[h].assign(target.codes_at(h), -1);
        for (int c = 0; c < target.codes_at(h); ++c) {
            bool reachable = false;
            for (int z = 0; z < target.latents_at(h); ++z)
                if (target.emissions[h](z, c) > 0.0) reachable = true;
            if (!reachable) continue;
            Observation s;
            s.code = c;
            std::ostringstream fp;
            fp << "d" << phi_hat.dim(h);
            for (int a = 0; a < A; ++a) fp << ";p" << phi_hat.phi_index(h, s, a);
            for (int a = 0; a < A; ++a) fp << ";r" << target.known_reward(h, s, a);
            auto [it, inserted] = groups.emplace(fp.str(), static_cast<int>(groups.size()));
            group_of[h][c] = it->second;
        }
    }

    int F = static_cast<int>(groups.size());
    double v_star = dp_optimal_value(target).first;

    long total = 1;
    for (int f = 0; f < F; ++f) {
        total *= A;
        if (total > (1L << 20)) throw std::invalid_argument("fingerprint enumeration too large");
    }
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> assign(F, 0);
    for (long mask = 0; mask < total; ++mask) {
        long m = mask;
        for (int f = 0; f < F; ++f) {
            assign[f] = static_cast<int>(m % A);
            m /= A;
        }
        // Exact evaluation over the observation chain.
        Eigen::VectorXd occ = target.emissions[0].transpose() * target.initial;
        double value = 0.0;
        for (int h = 0; h < H; ++h) {
            Eigen::VectorXd next = Eigen::VectorXd::Zero(target.codes_at(h + 1));
            for (int c = 0; c < target.codes_at(h); ++c) {
                if (occ[c] <= 0.0 || group_of[h][c] < 0) continue;
                int a = assign[group_of[h][c]];
                int z = target.code_latent[h][c];
                value += occ[c] * target.reward.mean(h, z, a);
                Observation s;
                s.code = c;
                next += occ[c] * target.true_kernel(h, s, a);
            }
            occ = next;
        }
        for (int c = 0; c < target.codes_at(H); ++c)
            if (occ[c] > 0.0) value += occ[c] * target.reward.terminal_mean(target.code_latent[H][c]);
        best = std::max(best, value);
    }
    return v_star - best;
}

TransferReport scratch_baseline(const BlockMdp& target, const HypothesisClass& cls,
                                const ScratchBudgets& budgets, const DeployOptions& deploy,
                                Rng& rng) {
    long episodes_before = target.episodes();
    RepUcbResult learned =
        reward_free_rep_ucb(target, cls, budgets.n_rf, deploy.delta, rng, budgets.rep_ucb);
    long pretrain = target.episodes() - episodes_before;

    TransferReport report =
        deploy_on_target(target, learned.model.phi, 1.0, deploy, rng, "scratch");
    report.accounting.target_pretrain_episodes = pretrain;
    // Scratch pays for model learning in the target itself.
    if (report.episodes_to_solve >= 0) report.episodes_to_solve += pretrain;
    return report;
}

TransferReport oracle_baseline(const BlockMdp& target, const DeployOptions& deploy, Rng& rng) {
    FeatureMap phi = FeatureMap::ground_truth(target);
    return deploy_on_target(target, phi, 1.0, deploy, rng, "oracle");
}

TransferReport source_only_baseline(const TransferSuite& suite, const HypothesisClass& cls,
                                    int n_rf, int n_lsvi, double delta,
                                    const DeployOptions& deploy, Rng& rng,
                                    const EpsOptions& eps_options) {
    TransferReport best;
    best.algorithm = "source-only";
    bool have = false;
    for (int k = 0; k < suite.num_sources(); ++k) {
        ExploratoryPolicy pol = exploratory_policy_search(suite.sources[k], cls, n_lsvi, n_rf,
                                                          delta, rng, eps_options);
        TransferReport r = deploy_on_target(suite.target, pol.model.phi, 1.0, deploy, rng,
                                            "source-only");
        bool better = !have;
        if (have) {
            bool r_solved = r.episodes_to_solve >= 0;
            bool b_solved = best.episodes_to_solve >= 0;
            better = (r_solved && !b_solved) ||
                     (r_solved && b_solved && r.episodes_to_solve < best.episodes_to_solve);
        }
        if (better) {
            best = std::move(r);
            best.algorithm = "source-only";
        }
        have = true;
    }
    return best;
}

}  // namespace reptransfer
