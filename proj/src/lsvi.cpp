#include "reptransfer/lsvi.hpp"

#include <cmath>
#include <cstdio>

namespace reptransfer {

int World::position(int layer, const Observation& s) const {
    int p = support()->pos(layer, s.code);
    if (p < 0)
        throw UnknownObservation("observation outside world support at layer " +
                                 std::to_string(layer));
    return p;
}

Observation World::representative(int layer, int pos) const {
    Observation s;
    s.code = support()->codes[layer][pos];
    return s;
}

TrueWorld::TrueWorld(const BlockMdp& env) : env_(&env) {
    support_ = SupportIndex::full(env);
    nearest_ = env.nearest_index();
}

Observation TrueWorld::initial(Rng& rng) {
    env_->begin_episode();
    return env_->sample_initial_observation(rng);
}

Observation TrueWorld::step(int h, const Observation& s, int a, Rng& rng) {
    env_->count_step();
    int z = env_->decode(h, s);
    const Eigen::MatrixXd& t = env_->transitions[h];
    std::vector<double> row(t.cols());
    for (int c = 0; c < t.cols(); ++c) row[c] = t(z * env_->num_actions + a, c);
    int z_next = rng.categorical(row);
    return env_->emit(h + 1, z_next, rng);
}

int TrueWorld::position(int layer, const Observation& s) const {
    if (env_->mode == EmissionMode::Noisy && s.vec.size() > 0) {
        // Nearest codeword; mixing is orthogonal so compare in the unmixed space.
        Eigen::VectorXd unmixed = env_->mixing.transpose() * s.vec;
        const Eigen::MatrixXd& words = env_->codeword_vectors[layer];
        int best = 0;
        double best_d = (words.col(0) - unmixed).squaredNorm();
        for (int c = 1; c < words.cols(); ++c) {
            double d = (words.col(c) - unmixed).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        return best;
    }
    return World::position(layer, s);
}

ModelWorld::ModelWorld(const LinearMdpModel& model, int num_actions)
    : model_(&model), num_actions_(num_actions) {
    if (model_->initial_codes.empty())
        throw PlanningSupportEmpty("model has no initial observation distribution");
    if (!model_->phi.is_oracle()) {
        const auto& layout = model_->phi.decoder().layout;
        if (layout && !layout->codeword_vectors.empty()) {
            auto idx = std::make_shared<NearestCodeIndex>();
            idx->codewords = layout->codeword_vectors;
            idx->mixing = layout->mixing;
            nearest_ = idx;
        }
    }
}

Observation ModelWorld::initial(Rng& rng) {
    int idx = rng.categorical(model_->initial_probs);
    Observation s;
    s.code = model_->initial_codes[idx];
    return s;
}

Observation ModelWorld::step(int h, const Observation& s, int a, Rng& rng) {
    int label = model_->phi.decode_label(h, s);
    const Eigen::MatrixXd& t = model_->trans[h];
    std::vector<double> row(t.cols());
    for (int c = 0; c < t.cols(); ++c) row[c] = t(label * num_actions_ + a, c);
    int label_next = rng.categorical(row);
    const Eigen::MatrixXd& em = model_->emit[h + 1];
    std::vector<double> emrow(em.cols());
    for (int c = 0; c < em.cols(); ++c) emrow[c] = em(label_next, c);
    Observation out;
    out.code = model_->support->codes[h + 1][rng.categorical(emrow)];
    return out;
}

double elliptical_bonus(const Eigen::VectorXd& phi_sa, const Eigen::MatrixXd& lambda_inv) {
    return std::sqrt(std::max(0.0, phi_sa.dot(lambda_inv * phi_sa)));
}

Eigen::MatrixXd rank_one_update(const Eigen::MatrixXd& lambda_inv, const Eigen::VectorXd& phi_sa) {
    Eigen::VectorXd u = lambda_inv * phi_sa;
    double denom = 1.0 + phi_sa.dot(u);
    return lambda_inv - (u * u.transpose()) / denom;
}

double beta_deployment(int d, int horizon, long deploy_episodes, double delta, double alpha_bar) {
    if (deploy_episodes < 1) throw std::invalid_argument("deploy_episodes must be >= 1");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must be in (0,1)");
    double log_term = std::log(static_cast<double>(d) * horizon * deploy_episodes / delta);
    return horizon * std::sqrt(static_cast<double>(d)) +
           alpha_bar * d * horizon * std::sqrt(std::max(0.0, log_term));
}

double beta_eps(int d, int horizon, long episodes, double delta) {
    if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must be in (0,1)");
    double log_term = std::log(static_cast<double>(d) * horizon * episodes / delta);
    return d * horizon * std::sqrt(std::max(0.0, log_term));
}

namespace {

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

std::string RegretTrace::to_csv() const {
    std::string out = "episode,value,cumulative_regret,max_bonus,clip_hits\n";
    for (size_t e = 0; e < value.size(); ++e) {
        out += std::to_string(e + 1) + "," + fmt_double(value[e]) + "," + fmt_double(cum_regret[e]) +
               "," + fmt_double(max_bonus[e]) + "," + std::to_string(clip_hits[e]) + "\n";
    }
    return out;
}

LsviResult lsvi_ucb(World& world, const FeatureMap& phi, const RewardFn& reward,
                    const LsviOptions& options, Rng& rng) {
    const int H = world.horizon();
    const int A = world.num_actions();
    if (phi.num_actions() != A)
        throw DimensionMismatch("feature map and world disagree on the action count");
    auto support = world.support();

    // Per-layer label cache; also validates that the features decode the
    // world's observations.
    std::vector<std::vector<int>> label_of(H + 1);
    for (int layer = 0; layer <= H; ++layer) {
        const auto& codes = support->codes[layer];
        label_of[layer].resize(codes.size());
        for (size_t p = 0; p < codes.size(); ++p) {
            try {
                label_of[layer][p] = phi.decode_label(layer, world.representative(layer, p));
            } catch (const UnknownObservation&) {
                throw DimensionMismatch("feature map cannot decode world support at layer " +
                                        std::to_string(layer));
            }
        }
    }

    // Known rewards tabulated over the support.
    std::vector<Eigen::MatrixXd> reward_tab(H);
    for (int h = 0; h < H; ++h) {
        int n = static_cast<int>(support->codes[h].size());
        reward_tab[h].resize(n, A);
        for (int p = 0; p < n; ++p) {
            Observation s = world.representative(h, p);
            for (int a = 0; a < A; ++a) reward_tab[h](p, a) = reward.reward(h, s, a);
        }
    }
    Eigen::VectorXd terminal_tab(support->codes[H].size());
    for (int p = 0; p < terminal_tab.size(); ++p)
        terminal_tab[p] = reward.terminal(world.representative(H, p));

    LsviState state;
    std::vector<Eigen::MatrixXd> counts(H);  // d_h x |support(h+1)| successor counts
    std::vector<long> updates_since_reinvert(H, 0);
    for (int h = 0; h < H; ++h) {
        int d = phi.dim(h);
        state.lambda.push_back(Eigen::MatrixXd::Identity(d, d));
        state.lambda_inv.push_back(Eigen::MatrixXd::Identity(d, d));
        counts[h] = Eigen::MatrixXd::Zero(d, static_cast<int>(support->codes[h + 1].size()));
    }

    LsviResult result;
    RegretTrace& trace = result.trace;
    trace.v_star = std::isnan(options.optimal_value) ? 0.0 : options.optimal_value;

    std::vector<ObsGreedyTable> episode_policies;
    episode_policies.reserve(options.episodes);

    int streak = 0;
    double cum_regret = 0.0;
    const bool exact_eval = options.eval_env != nullptr &&
                            options.eval_env->mode == EmissionMode::Decodable;

    std::vector<Eigen::VectorXd> v_hat(H + 1);
    for (int e = 0; e < options.episodes; ++e) {
        // Backward pass over the support.
        v_hat[H] = terminal_tab;
        ObsGreedyTable policy_table;
        policy_table.support = support;
        policy_table.nearest = world.nearest_index();
        policy_table.action.resize(H);
        if (options.record_q) policy_table.q.resize(H);
        double ep_max_bonus = 0.0;
        int ep_clip_hits = 0;
        for (int h = H - 1; h >= 0; --h) {
            Eigen::VectorXd s_vec = counts[h] * v_hat[h + 1];
            Eigen::VectorXd w = state.lambda_inv[h] * s_vec;
            int n = static_cast<int>(support->codes[h].size());
            v_hat[h].resize(n);
            policy_table.action[h].resize(n);
            Eigen::MatrixXd q_tab;
            if (options.record_q) q_tab.resize(n, A);
            for (int p = 0; p < n; ++p) {
                int label = label_of[h][p];
                double best_q = -std::numeric_limits<double>::infinity();
                int best_a = 0;
                for (int a = 0; a < A; ++a) {
                    int j = label * A + a;
                    double bonus = std::sqrt(std::max(0.0, state.lambda_inv[h](j, j)));
                    double q = w[j] + reward_tab[h](p, a) + options.beta * bonus;
                    if (options.record_q) q_tab(p, a) = q;
                    if (bonus > ep_max_bonus) ep_max_bonus = bonus;
                    if (q > best_q) {
                        best_q = q;
                        best_a = a;
                    }
                }
                policy_table.action[h][p] = static_cast<std::uint8_t>(best_a);
                if (best_q > options.clip_level) {
                    ++ep_clip_hits;
                    v_hat[h][p] = options.clip_level;
                } else {
                    v_hat[h][p] = best_q;
                }
            }
            if (options.record_q) policy_table.q[h] = std::move(q_tab);
        }

        // Execute the greedy policy. With uniform_actions the stored action is
        // a fresh uniform draw and its successor is re-sampled from the world
        // so the regression pairs stay consistent; the executed trajectory
        // still follows the greedy policy. This mode is meant for runs inside
        // a learned model, where the extra draw costs nothing real.
        Observation s = world.initial(rng);
        std::vector<int> traj_j(H);
        std::vector<int> traj_next(H);
        for (int h = 0; h < H; ++h) {
            int p = world.position(h, s);
            int a = policy_table.action[h][p];
            Observation next = world.step(h, s, a, rng);
            if (options.uniform_actions) {
                int logged_a = rng.uniform_int(A);
                Observation logged_next = world.step(h, s, logged_a, rng);
                traj_j[h] = label_of[h][p] * A + logged_a;
                traj_next[h] = world.position(h + 1, logged_next);
            } else {
                traj_j[h] = label_of[h][p] * A + a;
                traj_next[h] = world.position(h + 1, next);
            }
            s = next;
        }

        // Rank-one covariance updates with periodic re-inversion.
        for (int h = 0; h < H; ++h) {
            int j = traj_j[h];
            Eigen::VectorXd u = state.lambda_inv[h].col(j);
            double denom = 1.0 + u[j];
            state.lambda_inv[h] -= (u * u.transpose()) / denom;
            state.lambda[h](j, j) += 1.0;
            counts[h](j, traj_next[h]) += 1.0;
            ++state.updates;
            if (++updates_since_reinvert[h] >= options.reinvert_every) {
                state.lambda_inv[h] =
                    state.lambda[h].ldlt().solve(Eigen::MatrixXd::Identity(
                        state.lambda[h].rows(), state.lambda[h].cols()));
                updates_since_reinvert[h] = 0;
            }
        }

        Policy episode_policy = Policy::obs_greedy(policy_table);
        double value = 0.0;
        if (exact_eval)
            value = options.eval_reward
                        ? dp_policy_value(*options.eval_env, episode_policy, *options.eval_reward)
                        : dp_policy_value(*options.eval_env, episode_policy);
        cum_regret += trace.v_star - value;
        trace.value.push_back(value);
        trace.cum_regret.push_back(cum_regret);
        trace.max_bonus.push_back(ep_max_bonus);
        trace.clip_hits.push_back(ep_clip_hits);
        episode_policies.push_back(std::move(policy_table));

        // Solve checkpoints.
        if (options.checkpoint_every > 0 && (e + 1) % options.checkpoint_every == 0 &&
            !std::isnan(options.optimal_value)) {
            double eval_value = value;
            if (!exact_eval) {
                if (options.eval_env == nullptr)
                    throw std::invalid_argument("solve tracking needs an evaluation environment");
                double total = 0.0;
                for (int run = 0; run < options.eval_runs; ++run) {
                    Trajectory t = sample_episode(*options.eval_env, episode_policy, rng);
                    double ret = t.final_reward;
                    for (const auto& st : t.steps) ret += st.reward;
                    total += ret;
                }
                eval_value = total / options.eval_runs;
                trace.eval_episodes_used += options.eval_runs;
            }
            if (eval_value >= options.optimal_value - 1e-9) {
                ++streak;
            } else {
                streak = 0;
            }
            if (streak >= options.consecutive && trace.episodes_to_solve < 0) {
                trace.episodes_to_solve =
                    static_cast<long>(e + 1) - static_cast<long>(options.consecutive - 1) *
                                                    options.checkpoint_every;
                if (options.early_stop_on_solve) {
                    result.episodes_run = e + 1;
                    break;
                }
            }
        }
        result.episodes_run = e + 1;
    }

    result.state = std::move(state);
    if (episode_policies.empty()) {
        result.mixture = Policy::uniform();
        return result;
    }
    std::vector<Policy> members;
    members.reserve(episode_policies.size());
    for (auto& t : episode_policies) members.push_back(Policy::obs_greedy(std::move(t)));
    std::vector<double> weights(members.size(), 1.0 / static_cast<double>(members.size()));
    result.mixture = Policy::mixture(std::move(members), std::move(weights));
    return result;
}

}  // namespace reptransfer
