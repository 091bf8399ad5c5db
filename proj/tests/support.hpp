#pragma once

#include <vector>

#include "reptransfer/envs.hpp"

namespace reptransfer::testing {

// Random decodable environment with the given latent layout. Transition rows
// and emissions are normalized uniform draws; rewards are deterministic values
// in [0,1].
inline BlockMdp random_env(const std::vector<int>& latents, int actions, int codes_per_latent,
                           Rng& rng) {
    BlockMdp env;
    env.family = "random";
    env.horizon = static_cast<int>(latents.size()) - 1;
    env.num_actions = actions;
    env.latents_per_layer = latents;
    env.mode = EmissionMode::Decodable;
    for (int h = 0; h < env.horizon; ++h) {
        Eigen::MatrixXd t(latents[h] * actions, latents[h + 1]);
        for (int r = 0; r < t.rows(); ++r) {
            double sum = 0.0;
            for (int c = 0; c < t.cols(); ++c) {
                t(r, c) = 0.05 + rng.uniform();
                sum += t(r, c);
            }
            t.row(r) /= sum;
        }
        env.transitions.push_back(std::move(t));
    }
    for (int layer = 0; layer <= env.horizon; ++layer) {
        int z = latents[layer];
        Eigen::MatrixXd em = Eigen::MatrixXd::Zero(z, z * codes_per_latent);
        std::vector<int> owner(z * codes_per_latent);
        for (int q = 0; q < z; ++q) {
            double sum = 0.0;
            std::vector<double> w(codes_per_latent);
            for (int c = 0; c < codes_per_latent; ++c) {
                w[c] = 0.1 + rng.uniform();
                sum += w[c];
            }
            for (int c = 0; c < codes_per_latent; ++c) {
                em(q, q * codes_per_latent + c) = w[c] / sum;
                owner[q * codes_per_latent + c] = q;
            }
        }
        env.emissions.push_back(std::move(em));
        env.code_latent.push_back(std::move(owner));
    }
    env.reward.step.resize(env.horizon);
    for (int h = 0; h < env.horizon; ++h) {
        env.reward.step[h].assign(latents[h], std::vector<RewardEntry>(actions));
        for (int z = 0; z < latents[h]; ++z)
            for (int a = 0; a < actions; ++a) env.reward.step[h][z][a] = {rng.uniform(), 1.0};
    }
    env.reward.terminal.resize(latents.back());
    for (int z = 0; z < latents.back(); ++z) env.reward.terminal[z] = {rng.uniform(), 1.0};
    env.initial.resize(latents[0]);
    double sum = 0.0;
    for (int z = 0; z < latents[0]; ++z) {
        env.initial[z] = 0.2 + rng.uniform();
        sum += env.initial[z];
    }
    env.initial /= sum;
    env.validate();
    return env;
}

inline Policy random_latent_policy(const BlockMdp& env, Rng& rng) {
    std::vector<Eigen::MatrixXd> probs;
    for (int h = 0; h < env.horizon; ++h) {
        Eigen::MatrixXd m(env.latents_at(h), env.num_actions);
        for (int z = 0; z < m.rows(); ++z) {
            double sum = 0.0;
            for (int a = 0; a < m.cols(); ++a) {
                m(z, a) = 0.05 + rng.uniform();
                sum += m(z, a);
            }
            m.row(z) /= sum;
        }
        probs.push_back(std::move(m));
    }
    return Policy::latent_tabular(std::move(probs));
}

// Exhaustive search over deterministic latent policies.
inline double brute_force_optimal_value(const BlockMdp& env) {
    std::vector<std::pair<int, int>> cells;  // (h, z)
    for (int h = 0; h < env.horizon; ++h)
        for (int z = 0; z < env.latents_at(h); ++z) cells.emplace_back(h, z);
    long total = 1;
    for (size_t i = 0; i < cells.size(); ++i) total *= env.num_actions;
    double best = -1e300;
    for (long mask = 0; mask < total; ++mask) {
        long m = mask;
        std::vector<Eigen::MatrixXd> probs;
        for (int h = 0; h < env.horizon; ++h)
            probs.push_back(Eigen::MatrixXd::Zero(env.latents_at(h), env.num_actions));
        for (const auto& [h, z] : cells) {
            probs[h](z, static_cast<int>(m % env.num_actions)) = 1.0;
            m /= env.num_actions;
        }
        best = std::max(best, dp_policy_value(env, Policy::latent_tabular(probs)));
    }
    return best;
}

inline double episode_return(const Trajectory& t) {
    double r = t.final_reward;
    for (const auto& s : t.steps) r += s.reward;
    return r;
}

// n trajectories from `pi`, harvesting one (s, a, s') tuple per step each.
inline TransitionDataset on_policy_dataset(const BlockMdp& env, const Policy& pi, int n, Rng& rng,
                                           int task = 0) {
    TransitionDataset d;
    d.task_i = task;
    d.task_j = task;
    d.mode = TransitionDataset::Mode::OnPolicy;
    d.per_h.resize(env.horizon);
    for (int t = 0; t < n; ++t) {
        Trajectory traj = sample_episode(env, pi, rng);
        for (int h = 0; h < env.horizon; ++h) {
            Observation next = h + 1 < env.horizon ? traj.steps[h + 1].obs : traj.final_obs;
            d.per_h[h].push_back({traj.steps[h].obs, traj.steps[h].action, next});
        }
    }
    return d;
}

inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    double mx = 0, my = 0;
    int n = static_cast<int>(xs.size());
    std::vector<double> lx(n), ly(n);
    for (int i = 0; i < n; ++i) {
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
        mx += lx[i] / n;
        my += ly[i] / n;
    }
    double num = 0, den = 0;
    for (int i = 0; i < n; ++i) {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    return num / den;
}

}  // namespace reptransfer::testing
