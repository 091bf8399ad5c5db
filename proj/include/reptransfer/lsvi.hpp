#pragma once

#include <limits>
#include <string>

#include "reptransfer/features.hpp"
#include "reptransfer/mdp.hpp"

namespace reptransfer {

// Anything LSVI-UCB can roll episodes in: the true environment or a learned
// model. Worlds expose a finite per-layer observation support; noisy true
// environments discretize through nearest-codeword positions.
class World {
public:
    virtual ~World() = default;
    virtual int horizon() const = 0;
    virtual int num_actions() const = 0;
    virtual Observation initial(Rng& rng) = 0;
    virtual Observation step(int h, const Observation& s, int a, Rng& rng) = 0;
    virtual std::shared_ptr<const SupportIndex> support() const = 0;
    virtual int position(int layer, const Observation& s) const;
    virtual Observation representative(int layer, int pos) const;
    virtual std::shared_ptr<const NearestCodeIndex> nearest_index() const { return nullptr; }
};

class TrueWorld : public World {
public:
    explicit TrueWorld(const BlockMdp& env);
    int horizon() const override { return env_->horizon; }
    int num_actions() const override { return env_->num_actions; }
    Observation initial(Rng& rng) override;
    Observation step(int h, const Observation& s, int a, Rng& rng) override;
    std::shared_ptr<const SupportIndex> support() const override { return support_; }
    int position(int layer, const Observation& s) const override;
    std::shared_ptr<const NearestCodeIndex> nearest_index() const override { return nearest_; }
    const BlockMdp& env() const { return *env_; }

private:
    const BlockMdp* env_;
    std::shared_ptr<const SupportIndex> support_;
    std::shared_ptr<const NearestCodeIndex> nearest_;
};

// Simulates a learned linear MDP: transitions through the count model, initial
// states from the known initial observation distribution. Consumes no true
// environment samples.
class ModelWorld : public World {
public:
    ModelWorld(const LinearMdpModel& model, int num_actions);
    int horizon() const override { return model_->horizon(); }
    int num_actions() const override { return num_actions_; }
    Observation initial(Rng& rng) override;
    Observation step(int h, const Observation& s, int a, Rng& rng) override;
    std::shared_ptr<const SupportIndex> support() const override { return model_->support; }
    // Policies tabulated here may later run in a noisy true environment; hand
    // them the decoder layout's nearest-codeword index when one exists.
    std::shared_ptr<const NearestCodeIndex> nearest_index() const override { return nearest_; }

private:
    const LinearMdpModel* model_;
    int num_actions_;
    std::shared_ptr<const NearestCodeIndex> nearest_;
};

// Known reward handed to planners and LSVI.
class RewardFn {
public:
    virtual ~RewardFn() = default;
    virtual double reward(int h, const Observation& s, int a) const = 0;
    virtual double terminal(const Observation&) const { return 0.0; }
};

class EnvReward : public RewardFn {
public:
    explicit EnvReward(const BlockMdp& env) : env_(&env) {}
    double reward(int h, const Observation& s, int a) const override {
        return env_->known_reward(h, s, a);
    }
    double terminal(const Observation& s) const override { return env_->known_terminal_reward(s); }

private:
    const BlockMdp* env_;
};

class ZeroRewardFn : public RewardFn {
public:
    double reward(int, const Observation&, int) const override { return 0.0; }
};

struct LsviOptions {
    int episodes = 1;
    double beta = 1.0;
    double clip_level = 1.0;  // M_V
    bool uniform_actions = false;
    int reinvert_every = 512;
    bool record_q = false;
    // Solve tracking (Fig-1-style): every checkpoint_every episodes evaluate
    // the current greedy policy; solved after `consecutive` optimal checkpoints.
    int checkpoint_every = 0;
    int consecutive = 5;
    int eval_runs = 50;
    double optimal_value = std::numeric_limits<double>::quiet_NaN();
    bool early_stop_on_solve = false;
    // Exact per-episode evaluation (decodable mode); when set the trace holds
    // exact policy values and checkpoints are exact as well.
    const BlockMdp* eval_env = nullptr;
    // Reward used for evaluation; defaults to the evaluation env's own.
    const Reward* eval_reward = nullptr;
};

struct RegretTrace {
    double v_star = 0.0;
    std::vector<double> value;
    std::vector<double> cum_regret;
    std::vector<double> max_bonus;
    std::vector<int> clip_hits;
    long episodes_to_solve = -1;  // -1: criterion unmet (infinity)
    long eval_episodes_used = 0;  // Monte-Carlo evaluation episodes (noisy mode)

    bool solved() const { return episodes_to_solve >= 0; }
    std::string to_csv() const;
};

struct LsviState {
    std::vector<Eigen::MatrixXd> lambda;      // per h, d_h x d_h
    std::vector<Eigen::MatrixXd> lambda_inv;  // maintained by rank-one updates
    long updates = 0;
};

struct LsviResult {
    Policy mixture;
    RegretTrace trace;
    LsviState state;
    int episodes_run = 0;
};

LsviResult lsvi_ucb(World& world, const FeatureMap& phi, const RewardFn& reward,
                    const LsviOptions& options, Rng& rng);

// ||phi||_{Lambda^{-1}}
double elliptical_bonus(const Eigen::VectorXd& phi_sa, const Eigen::MatrixXd& lambda_inv);

// Sherman-Morrison update: inverse of (Lambda + phi phi^T) from Lambda^{-1}.
Eigen::MatrixXd rank_one_update(const Eigen::MatrixXd& lambda_inv, const Eigen::VectorXd& phi_sa);

// H sqrt(d) + alpha_bar d H sqrt(log(d H T / delta)), unit constants.
double beta_deployment(int d, int horizon, long deploy_episodes, double delta, double alpha_bar);

// d H sqrt(log(d H N / delta)), the reward-free exploration scale.
double beta_eps(int d, int horizon, long episodes, double delta);

}  // namespace reptransfer
