#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reptransfer/errors.hpp"
#include "reptransfer/rng.hpp"

#include "json.hpp"

namespace reptransfer {

// Finite-latent episodic MDP with rich observations. Latent layers are indexed
// 0..H (layer H is the arrival layer), actions are taken at h = 0..H-1, and a
// comblock-style terminal reward lives on layer H. Observations are codewords
// from per-layer codebooks; in decodable mode codes identify latents exactly,
// in noisy mode a codeword vector is perturbed and mixed before emission.

enum class EmissionMode { Decodable, Noisy };

struct NearestCodeIndex;

struct Observation {
    int code = -1;          // codebook index at its layer
    Eigen::VectorXd vec;    // materialized vector (noisy mode only)
};

// Reward realization: `value` with probability `prob`, else 0.
struct RewardEntry {
    double value = 0.0;
    double prob = 1.0;
    double mean() const { return value * prob; }
};

// Latent-level reward, lifted to observations by the environment.
struct Reward {
    // per h = 0..H-1: Z_h x A entries
    std::vector<std::vector<std::vector<RewardEntry>>> step;
    // layer H, per latent
    std::vector<RewardEntry> terminal;

    double mean(int h, int z, int a) const { return step[h][z][a].mean(); }
    double terminal_mean(int z) const { return terminal[z].mean(); }
};

// Opt-in marker for reading latent ids out of trajectories and environments.
// Learner code never constructs one; oracles, diagnostics and tests do.
struct DiagnosticsAccess {
    explicit DiagnosticsAccess() = default;
};

struct Trajectory {
    struct Step {
        int h;
        Observation obs;
        int action;
        double reward;
    };
    std::vector<Step> steps;   // h = 0..H-1
    Observation final_obs;     // arrival at layer H
    double final_reward = 0.0;
    bool terminal = true;

    const std::vector<int>& latents(DiagnosticsAccess) const { return latents_; }

    std::vector<int> latents_;  // layers 0..H; gated behind DiagnosticsAccess
};

class BlockMdp {
public:
    int horizon = 0;                      // H (number of action steps)
    int num_actions = 0;
    std::vector<int> latents_per_layer;   // size H+1
    // transitions[h]: (Z_h * A) x Z_{h+1}, row (z*A + a), row-stochastic
    std::vector<Eigen::MatrixXd> transitions;
    // emissions[h]: Z_h x C_h over the (possibly shared) layer codebook
    std::vector<Eigen::MatrixXd> emissions;
    // code_latent[h]: C_h -> emitting latent; covers the full codebook even for
    // codes this task never emits (shared decoder across a suite)
    std::vector<std::vector<int>> code_latent;
    Reward reward;
    Eigen::VectorXd initial;              // d0 over layer-0 latents

    EmissionMode mode = EmissionMode::Decodable;
    double sigma = 0.0;                                // noisy mode
    std::vector<Eigen::MatrixXd> codeword_vectors;     // per layer: D x C_h (noisy mode)
    Eigen::MatrixXd mixing;                            // D x D orthogonal (noisy mode)

    std::uint64_t build_seed = 0;
    std::string family;

    int latents_at(int layer) const { return latents_per_layer[layer]; }
    int codes_at(int layer) const { return static_cast<int>(code_latent[layer].size()); }

    // --- access with accounting -------------------------------------------
    Observation emit(int layer, int z, Rng& rng) const;
    // True decode; throws UnknownObservation for codes outside the layer
    // codebook. Nearest-codeword lookup in noisy mode.
    int decode(int layer, const Observation& s) const;
    int decode(int layer, const Observation& s, DiagnosticsAccess) const { return decode(layer, s); }

    // Known reward, lifted to observations.
    double known_reward(int h, const Observation& s, int a) const;
    double known_terminal_reward(const Observation& s) const;

    // Exact initial observation distribution over layer-0 codes (d0 is known).
    Eigen::VectorXd initial_observation_distribution() const;
    Observation sample_initial_observation(Rng& rng) const;

    // One generative transition s' ~ P*_h(. | s, a); counts one generative query.
    Observation generative_query(int h, const Observation& s, int a, Rng& rng) const;

    // Counted initial-state draw through the simulator (used when planting a
    // foreign task's initial states during cross sampling).
    Observation generative_initial(Rng& rng) const;

    // Exact observation kernel row P*_h(. | s, a) over layer-(h+1) codes.
    Eigen::VectorXd true_kernel(int h, const Observation& s, int a) const;

    void begin_episode() const;
    void count_step() const;

    // Nearest-codeword index for learner-side decoding (noisy mode; null otherwise).
    std::shared_ptr<const NearestCodeIndex> nearest_index() const;

    long episodes() const { return episodes_.load(); }
    long env_steps() const { return env_steps_.load(); }
    long generative_queries() const { return generative_.load(); }
    void revoke_access() const { revoked_.store(true); }
    void restore_access() const { revoked_.store(false); }
    bool revoked() const { return revoked_.load(); }
    void reset_counters() const;

    void validate() const;  // stochasticity / support invariants

    nlohmann::json to_json() const;
    static BlockMdp from_json(const nlohmann::json& j);

private:
    void check_access() const;
    mutable std::atomic<long> episodes_{0};
    mutable std::atomic<long> env_steps_{0};
    mutable std::atomic<long> generative_{0};
    mutable std::atomic<bool> revoked_{false};

public:
    BlockMdp() = default;
    BlockMdp(const BlockMdp& o) { *this = o; }
    BlockMdp& operator=(const BlockMdp& o);
    BlockMdp(BlockMdp&&) = default;
    BlockMdp& operator=(BlockMdp&&) = default;
};

// Ground-truth one-hot features: phi*_h(s,a) = e_(decode(s), a), and the
// matching next-state embedding mu*_h over layer-(h+1) codes.
struct GroundTruthFeatures {
    const BlockMdp* env;
    int dim(int h) const { return env->latents_at(h) * env->num_actions; }
    int phi_index(int h, const Observation& s, int a) const;
    Eigen::VectorXd phi(int h, const Observation& s, int a) const;
    // (Z_h*A) x C_{h+1}: column s' is mu*_h(s')
    Eigen::MatrixXd mu(int h) const;
};

// --- policies ---------------------------------------------------------------

// Per-episode greedy table over a finite per-layer observation support.
struct SupportIndex {
    // per layer 0..H: sorted code list and code -> position map
    std::vector<std::vector<int>> codes;
    std::vector<std::vector<int>> position;  // sized by layer codebook, -1 if absent
    int pos(int layer, int code) const {
        const auto& p = position[layer];
        if (code < 0 || code >= static_cast<int>(p.size())) return -1;
        return p[code];
    }
    static std::shared_ptr<const SupportIndex> full(const BlockMdp& env);
    static std::shared_ptr<const SupportIndex> from_codes(std::vector<std::vector<int>> codes,
                                                          const std::vector<int>& codebook_sizes);
};

// Nearest-codeword lookup used by learner-side tables in noisy mode.
struct NearestCodeIndex {
    std::vector<Eigen::MatrixXd> codewords;  // per layer: D x C
    Eigen::MatrixXd mixing;
    int nearest(int layer, const Eigen::VectorXd& mixed) const;
};

struct ObsGreedyTable {
    std::shared_ptr<const SupportIndex> support;
    std::shared_ptr<const NearestCodeIndex> nearest;  // noisy mode
    std::vector<std::vector<std::uint8_t>> action;    // per h: action per support position
    std::vector<Eigen::MatrixXd> q;                   // optional: per h, |support_h| x A

    int action_at(int h, int code) const {
        int p = support->pos(h, code);
        return p < 0 ? -1 : static_cast<int>(action[h][p]);
    }
    int action_at_obs(int h, const Observation& s) const {
        int code = s.code;
        if (s.vec.size() > 0 && nearest) code = nearest->nearest(h, s.vec);
        return action_at(h, code);
    }
};

class Policy {
public:
    enum class Kind { Uniform, LatentTabular, ObsGreedy, Mixture };

    static Policy uniform();
    // probs[h]: Z_h x A rows summing to 1
    static Policy latent_tabular(std::vector<Eigen::MatrixXd> probs);
    static Policy obs_greedy(ObsGreedyTable table);
    static Policy mixture(std::vector<Policy> members, std::vector<double> weights);

    Kind kind() const { return kind_; }
    bool is_mixture() const { return kind_ == Kind::Mixture; }
    const std::vector<Policy>& members() const { return members_; }
    const std::vector<double>& weights() const { return weights_; }
    const ObsGreedyTable& table() const { return table_; }

    // Action sampling; `z` is supplied by the simulator (latent policies are
    // oracle-side objects, learner policies ignore it).
    int act(int h, const Observation& s, int z, int num_actions, Rng& rng) const;

    // Exact per-latent action distribution (Z_h x A). Decodable mode only;
    // mixtures are handled by the evaluation oracles, not here.
    Eigen::MatrixXd latent_action_matrix(const BlockMdp& env, int h) const;

    // Draw a concrete member for one episode (identity for non-mixtures).
    const Policy& draw_member(Rng& rng) const;

    nlohmann::json to_json() const;

private:
    Kind kind_ = Kind::Uniform;
    std::vector<Eigen::MatrixXd> latent_probs_;
    ObsGreedyTable table_;
    std::vector<Policy> members_;
    std::vector<double> weights_;
};

// --- core operations ---------------------------------------------------------

Trajectory sample_episode(const BlockMdp& env, const Policy& policy, Rng& rng);

inline Observation generative_step(const BlockMdp& env, int h, const Observation& s, int a, Rng& rng) {
    return env.generative_query(h, s, a, rng);
}

Reward zero_reward(const BlockMdp& env);

// Exact backward induction over the latent chain.
std::pair<double, Policy> dp_optimal_value(const BlockMdp& env, const Reward& reward);
std::pair<double, Policy> dp_optimal_value(const BlockMdp& env);

double dp_policy_value(const BlockMdp& env, const Policy& policy, const Reward& reward);
double dp_policy_value(const BlockMdp& env, const Policy& policy);

// Exact joint (z, a) occupancy at step h (Z_h x A). With uniform_last the
// executed action at h is replaced by a uniform draw (the roll-in-plus-uniform
// variant used by exploration diagnostics).
Eigen::MatrixXd latent_occupancy(const BlockMdp& env, const Policy& policy, int h,
                                 bool uniform_last = false);

// lambda_min of E_pi[phi* phi*^T] at step h; for one-hot phi* this equals the
// minimum (z, a) occupancy.
double coverage_lambda_min(const BlockMdp& env, const Policy& policy, int h,
                           bool uniform_last = false);

// Exact state-level occupancy over latents at a layer (forward chain).
Eigen::VectorXd latent_state_occupancy(const BlockMdp& env, const Policy& policy, int layer);

}  // namespace reptransfer
