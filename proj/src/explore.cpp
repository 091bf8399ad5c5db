#include "reptransfer/explore.hpp"

#include <cmath>

namespace reptransfer {

namespace {

// Roll `policy` through the environment to `layer`, then take `extra_uniform`
// uniform actions. Returns the observations of the final transition. One
// environment episode.
struct RollOut {
    Observation s;
    int a = -1;
    Observation next;
};

RollOut roll_uniform_tail(const BlockMdp& env, const Policy& policy, int layer, int extra_uniform,
                          Rng& rng) {
    env.begin_episode();
    const Policy& pi = policy.draw_member(rng);
    std::vector<double> d0(env.initial.data(), env.initial.data() + env.initial.size());
    int z = rng.categorical(d0);
    Observation s = env.emit(0, z, rng);
    int h = 0;
    for (; h < layer; ++h) {
        int a = pi.act(h, s, z, env.num_actions, rng);
        const Eigen::MatrixXd& t = env.transitions[h];
        std::vector<double> row(t.cols());
        for (int c = 0; c < t.cols(); ++c) row[c] = t(z * env.num_actions + a, c);
        z = rng.categorical(row);
        s = env.emit(h + 1, z, rng);
        env.count_step();
    }
    RollOut out;
    for (int k = 0; k < extra_uniform; ++k) {
        int a = rng.uniform_int(env.num_actions);
        const Eigen::MatrixXd& t = env.transitions[h];
        std::vector<double> row(t.cols());
        for (int c = 0; c < t.cols(); ++c) row[c] = t(z * env.num_actions + a, c);
        int z_next = rng.categorical(row);
        Observation next = env.emit(h + 1, z_next, rng);
        env.count_step();
        out.s = s;
        out.a = a;
        out.next = next;
        s = next;
        z = z_next;
        ++h;
    }
    return out;
}

class BonusReward : public RewardFn {
public:
    BonusReward(const FeatureMap& phi, const std::vector<Eigen::VectorXd>& diag_counts,
                double alpha, double lambda)
        : phi_(&phi), counts_(&diag_counts), alpha_(alpha), lambda_(lambda) {}
    double reward(int h, const Observation& s, int a) const override {
        int j = phi_->phi_index(h, s, a);
        return alpha_ / std::sqrt((*counts_)[h][j] + lambda_);
    }

private:
    const FeatureMap* phi_;
    const std::vector<Eigen::VectorXd>* counts_;
    double alpha_;
    double lambda_;
};

}  // namespace

nlohmann::json RepUcbRun::to_json() const {
    nlohmann::json j;
    j["iterations"] = iterations;
    j["selected"] = selected;
    j["v_hat"] = v_hat;
    j["alpha_n"] = alpha_n;
    j["lambda_n"] = lambda_n;
    j["episodes_used"] = episodes_used;
    j["selected_candidate"] = selected_candidate;
    j["mle_ties"] = mle_ties;
    j["tv_uniform"] = tv_uniform;
    return j;
}

PlanResult plan_in_model(const LinearMdpModel& model, const RewardFn& reward, int num_actions) {
    int H = model.horizon();
    const auto& support = model.support;
    for (int layer = 0; layer <= H; ++layer)
        if (support->codes[layer].empty())
            throw PlanningSupportEmpty("model support empty at layer " + std::to_string(layer));

    std::vector<Eigen::VectorXd> v(H + 1);
    int nH = static_cast<int>(support->codes[H].size());
    v[H].resize(nH);
    for (int p = 0; p < nH; ++p) {
        Observation s;
        s.code = support->codes[H][p];
        v[H][p] = reward.terminal(s);
    }

    ObsGreedyTable table;
    table.support = support;
    table.action.resize(H);
    for (int h = H - 1; h >= 0; --h) {
        // W[l'] = sum_{s'} o-hat(s'|l') V(s')
        Eigen::VectorXd w_next = model.emit[h + 1] * v[h + 1];
        int n = static_cast<int>(support->codes[h].size());
        v[h].resize(n);
        table.action[h].resize(n);
        for (int p = 0; p < n; ++p) {
            Observation s;
            s.code = support->codes[h][p];
            int label = model.phi.decode_label(h, s);
            double best = -std::numeric_limits<double>::infinity();
            int best_a = 0;
            for (int a = 0; a < num_actions; ++a) {
                double q = reward.reward(h, s, a) +
                           model.trans[h].row(label * num_actions + a).dot(w_next);
                if (q > best) {
                    best = q;
                    best_a = a;
                }
            }
            v[h][p] = best;
            table.action[h][p] = static_cast<std::uint8_t>(best_a);
        }
    }

    PlanResult out;
    out.policy = Policy::obs_greedy(std::move(table));
    double value = 0.0;
    for (size_t i = 0; i < model.initial_codes.size(); ++i) {
        int p = support->pos(0, model.initial_codes[i]);
        if (p >= 0) value += model.initial_probs[i] * v[0][p];
    }
    out.value = value;
    return out;
}

RepUcbResult reward_free_rep_ucb(const BlockMdp& env, const HypothesisClass& cls,
                                 int episode_budget, double delta, Rng& rng,
                                 const RepUcbOptions& options) {
    if (episode_budget < 2) throw std::invalid_argument("episode budget must be >= 2");
    const int H = env.horizon;
    const int A = env.num_actions;
    const int rollins_per_iter = 2 * H - 1;
    const int iterations = std::max(2, episode_budget / rollins_per_iter);
    const int refit_every =
        options.refit_every > 0 ? options.refit_every : std::max(1, (iterations + 19) / 20);

    long episodes_before = env.episodes();

    // Exact initial observation distribution (d0 is known).
    Eigen::VectorXd init = env.initial_observation_distribution();
    std::vector<int> init_codes;
    std::vector<double> init_probs;
    std::vector<int> init_support;
    for (int c = 0; c < init.size(); ++c) {
        if (init[c] > 0.0) {
            init_codes.push_back(c);
            init_probs.push_back(init[c]);
            init_support.push_back(c);
        }
    }

    TransitionDataset data;       // D_h, h = 0..H-1
    TransitionDataset shifted;    // D'_h, h = 1..H-1
    data.per_h.resize(H);
    shifted.per_h.resize(H);

    Policy planner = Policy::uniform();
    RepUcbResult result;
    RepUcbRun& run = result.run;
    run.iterations = iterations;

    int current_candidate = 0;
    std::vector<LinearMdpModel> snapshots(iterations);
    double phi_sq = static_cast<double>(cls.phi_size()) * static_cast<double>(cls.upsilon_size());

    auto all_data = [&]() {
        std::vector<const TransitionDataset*> ptrs{&data};
        bool any = false;
        for (int h = 1; h < H; ++h) any = any || !shifted.per_h[h].empty();
        if (any) ptrs.push_back(&shifted);
        return ptrs;
    };

    for (int n = 0; n < iterations; ++n) {
        // Data collection from the previous planner policy.
        for (int h = 0; h < H; ++h) {
            RollOut r = roll_uniform_tail(env, planner, h, 1, rng);
            data.per_h[h].push_back({r.s, r.a, r.next});
        }
        for (int h = 1; h < H; ++h) {
            RollOut r = roll_uniform_tail(env, planner, h - 1, 2, rng);
            shifted.per_h[h].push_back({r.s, r.a, r.next});
        }

        // Model fit: full decoder re-selection on the refit cadence, count
        // refresh for the current decoder otherwise.
        if (n % refit_every == 0 || n == iterations - 1) {
            std::vector<const TransitionDataset*> ptrs = all_data();
            double best = -std::numeric_limits<double>::infinity();
            int best_idx = 0;
            std::vector<double> logliks(cls.candidates.size());
            std::vector<int> ties;
            for (size_t i = 0; i < cls.candidates.size(); ++i) {
                LinearMdpModel m =
                    fit_count_model(ptrs, 0, cls.candidates[i], A, &init_support);
                double ll = 0.0;
                for (const auto* d : ptrs) {
                    for (int h = 0; h < H; ++h) {
                        for (const auto& t : d->per_h[h]) {
                            int ls = m.phi.decode_label(h, t.s);
                            int code = cls.candidates[i].layout->code_of(h + 1, t.next);
                            int col = m.support->pos(h + 1, code);
                            double p = m.trans[h].row(ls * A + t.a).dot(m.emit[h + 1].col(col));
                            ll += std::log(p);
                        }
                    }
                }
                logliks[i] = ll;
                bool take = i == 0;
                if (!take) take = ll > best + 1e-9 * std::max(1.0, std::abs(best));
                if (take) {
                    best = ll;
                    best_idx = static_cast<int>(i);
                }
            }
            double tol = 1e-9 * std::max(1.0, std::abs(best));
            ties.clear();
            for (size_t i = 0; i < logliks.size(); ++i)
                if (logliks[i] >= best - tol) ties.push_back(static_cast<int>(i));
            current_candidate = best_idx;
            run.mle_ties = std::move(ties);
        }
        LinearMdpModel model =
            fit_count_model(all_data(), 0, cls.candidates[current_candidate], A, &init_support);
        model.initial_codes = init_codes;
        model.initial_probs = init_probs;

        // Bonus schedule with unit leading constants.
        long n_data = n + 1;
        int d = model.phi.max_dim(H);
        double log_term = std::log(std::max(2.0, phi_sq * static_cast<double>(n_data) * H / delta));
        double zeta = log_term / static_cast<double>(n_data);
        double lambda = options.lambda_mult * d * log_term;
        double alpha =
            options.alpha_mult * std::sqrt(static_cast<double>(n_data) * A * A * zeta + lambda * d);
        run.lambda_n.push_back(lambda);
        run.alpha_n.push_back(alpha);

        // Diagonal feature counts over D (not D') per step for the bonus.
        std::vector<Eigen::VectorXd> diag_counts(H);
        for (int h = 0; h < H; ++h) {
            diag_counts[h] = Eigen::VectorXd::Zero(model.phi.dim(h));
            for (const auto& t : data.per_h[h])
                diag_counts[h][model.phi.phi_index(h, t.s, t.a)] += 1.0;
        }
        BonusReward bonus(model.phi, diag_counts, alpha, lambda);
        PlanResult plan = plan_in_model(model, bonus, A);
        planner = plan.policy;
        run.v_hat.push_back(plan.value);
        snapshots[n] = std::move(model);
    }

    int first = (iterations + 1) / 2;  // candidates n >= N/2
    int best_n = first;
    for (int n = first; n < iterations; ++n)
        if (run.v_hat[n] < run.v_hat[best_n]) best_n = n;
    run.selected = best_n;
    run.selected_candidate = current_candidate;
    run.episodes_used = env.episodes() - episodes_before;
    result.model = std::move(snapshots[best_n]);
    if (env.mode == EmissionMode::Decodable)
        run.tv_uniform = model_tv_error(result.model, env, Policy::uniform());
    return result;
}

nlohmann::json ExploratoryPolicy::to_json() const {
    nlohmann::json j;
    j["lambda_min"] = lambda_min;
    j["env_episodes_used"] = env_episodes_used;
    j["model_run"] = model_run.to_json();
    j["mixture"] = mixture.to_json();
    return j;
}

ExploratoryPolicy exploratory_policy_search(const BlockMdp& env, const HypothesisClass& cls,
                                            int n_lsvi, int n_rf, double delta, Rng& rng,
                                            const EpsOptions& options) {
    if (n_lsvi < 1 || n_rf < 2) throw std::invalid_argument("eps budgets must be positive");
    long episodes_before = env.episodes();
    RepUcbResult learned = reward_free_rep_ucb(env, cls, n_rf, delta, rng, options.rep_ucb);

    int d = learned.model.phi.max_dim(env.horizon);
    double beta = options.beta_mult * beta_eps(d, env.horizon, n_lsvi, delta);

    ModelWorld world(learned.model, env.num_actions);
    ZeroRewardFn zero;
    LsviOptions lsvi;
    lsvi.episodes = n_lsvi;
    lsvi.beta = beta;
    lsvi.clip_level = env.horizon;
    lsvi.uniform_actions = true;
    lsvi.record_q = true;
    LsviResult mix = lsvi_ucb(world, learned.model.phi, zero, lsvi, rng);

    ExploratoryPolicy out;
    out.mixture = std::move(mix.mixture);
    out.model = std::move(learned.model);
    out.model_run = std::move(learned.run);
    out.env_episodes_used = env.episodes() - episodes_before;
    for (int h = 0; h < env.horizon; ++h)
        out.lambda_min.push_back(coverage_lambda_min(env, out.mixture, h, /*uniform_last=*/true));
    return out;
}

}  // namespace reptransfer
